"""Rule embedding by iterative data poisoning and retraining.

Each iteration crafts one clamped training sample per unlearned path and
retrains on the augmented set, until no unlearned path remains or the
iteration budget runs out. Only additions are made; the original training
rows are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset
from .errors import UsageError
from .forest import Forest
from .knowledge import Knowledge, classify_paths, ke_transform, split_partial
from .tree import Tree, TrainParams, enumerate_paths, train_tree, traverse


@dataclass
class BlackboxReport:
    ke_samples_added: int = 0
    iterations: int = 0
    converged: bool = True
    seed: int = 0
    per_tree: list = field(default_factory=list)  # (tree index, samples, iterations)


def _poison_loop(train: Dataset, k: Knowledge, p: TrainParams, t_max: int, rng):
    """Train, then repeatedly add clamped samples for unlearned paths and retrain."""
    data = train
    tree = train_tree(data, p)
    added = 0
    t = 0
    while t < t_max:
        unlearned = classify_paths(tree, k).unlearned
        if not unlearned:
            break
        new_feats = []
        for path in enumerate_paths(tree):
            if path.leaf_id not in unlearned:
                continue
            group = traverse(data, path)
            if group:
                row = group[rng.integers(len(group))]
            else:
                # No current row traverses this path (possible on small bags);
                # any row's clamped form still lands on a sigma1/sigma2 path.
                row = int(rng.integers(data.n_rows))
            new_feats.append(ke_transform(k, data.features[row]))
            added += 1
        data = data.with_rows(np.vstack(new_feats), np.full(len(new_feats), k.target))
        tree = train_tree(data, p)
        t += 1
    converged = not classify_paths(tree, k).unlearned
    return tree, added, t, converged


def embed_tree_blackbox(train: Dataset, k: Knowledge, p: TrainParams, t_max: int = 20):
    """Poison-and-retrain embedding for a single tree.

    Returns the final tree and a report; hitting t_max with unlearned paths
    left is reported as converged=False rather than raised.
    """
    if train.n_rows == 0:
        raise UsageError("cannot embed into an empty training set")
    if t_max < 1:
        raise UsageError("t_max must be >= 1")
    if k.target >= train.n_classes:
        raise UsageError(f"target {k.target} out of range")
    rng = np.random.default_rng([p.seed, 0xB1AC, 0])
    tree, added, t, converged = _poison_loop(train, k, p, t_max, rng)
    report = BlackboxReport(ke_samples_added=added, iterations=t, converged=converged,
                            seed=p.seed, per_tree=[(0, added, t)])
    return tree, report


def embed_forest_blackbox(train: Dataset, k: Knowledge, n_trees: int, p: TrainParams,
                          t_max: int = 20):
    """Forest variant: each of the q majority trees learns its partial rule.

    The poisoning loop runs per selected tree against that tree's own
    bootstrap bag; unselected trees keep their original fit.
    """
    if train.n_rows == 0:
        raise UsageError("cannot embed into an empty training set")
    if t_max < 1:
        raise UsageError("t_max must be >= 1")
    if k.target >= train.n_classes:
        raise UsageError(f"target {k.target} out of range")
    if n_trees < 1:
        raise UsageError("n_trees must be >= 1")

    trees = []
    bags = []
    assignment = dict(split_partial(k, n_trees))
    report = BlackboxReport(seed=p.seed)
    for i in range(n_trees):
        rng_bag = np.random.default_rng([p.seed, i])
        bag = rng_bag.integers(0, train.n_rows, size=train.n_rows)
        bags.append(np.asarray(bag, dtype=np.int64))
        bag_data = train.subset(bag)
        if i in assignment:
            rng = np.random.default_rng([p.seed, 0xB1AC, i])
            tree, added, t, converged = _poison_loop(bag_data, assignment[i], p, t_max, rng)
            report.ke_samples_added += added
            report.iterations = max(report.iterations, t)
            report.converged &= converged
            report.per_tree.append((i, added, t))
        else:
            tree = train_tree(bag_data, p)
        trees.append(tree)
    forest = Forest(trees=trees, bags=bags, params=p, seed=p.seed)
    return forest, report
