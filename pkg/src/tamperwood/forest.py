"""Random forests: bootstrap training, majority voting, joint paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import Box
from .dataio import Dataset
from .errors import UsageError
from .tree import Tree, TrainParams, path_box, path_for_input, predict_many, train_tree


@dataclass
class Forest:
    """Bag of trees votes by majority; ties go to the smallest class index.

    Bootstrap bags (row indices into the training set) are retained so that
    per-tree retraining later reuses exactly the data each tree saw.
    """

    trees: list[Tree]
    bags: list[np.ndarray]
    params: TrainParams | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.trees:
            raise UsageError("forest needs at least one tree")
        if len(self.bags) != len(self.trees):
            raise UsageError("one bootstrap bag per tree required")

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    @property
    def n_classes(self) -> int:
        return self.trees[0].n_classes

    @property
    def majority(self) -> int:
        """Minimum number of agreeing trees that decides a vote."""
        return self.n_trees // 2 + 1


@dataclass(frozen=True)
class JointPath:
    """Per-tree paths one input traverses, with their intersected box."""

    paths: tuple  # one Path per tree
    premise_box: Box
    label: int

    @property
    def leaf_ids(self) -> tuple:
        return tuple(p.leaf_id for p in self.paths)


def train_forest(d: Dataset, n_trees: int, p: TrainParams) -> Forest:
    """Fit n_trees CART trees on bootstrap bags seeded by (p.seed, tree index)."""
    if n_trees < 1:
        raise UsageError("n_trees must be >= 1")
    if d.n_rows == 0:
        raise UsageError("cannot train on an empty dataset")
    trees = []
    bags = []
    for i in range(n_trees):
        rng = np.random.default_rng([p.seed, i])
        bag = rng.integers(0, d.n_rows, size=d.n_rows)
        trees.append(train_tree(d.subset(bag), p))
        bags.append(np.asarray(bag, dtype=np.int64))
    return Forest(trees=trees, bags=bags, params=p, seed=p.seed)


def vote_counts(m: Forest, X) -> np.ndarray:
    """(n_rows, n_classes) vote tallies; rows always sum to n_trees."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    counts = np.zeros((X.shape[0], m.n_classes), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for t in m.trees:
        counts[rows, predict_many(t, X)] += 1
    return counts


def predict_forest(m: Forest, x) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n_features,):
        raise UsageError(f"expected {m.n_features} features, got shape {x.shape}")
    return int(np.argmax(vote_counts(m, x)[0]))


def predict_forest_many(m: Forest, X) -> np.ndarray:
    return np.argmax(vote_counts(m, X), axis=1)


def joint_path(m: Forest, x) -> JointPath:
    """The per-tree paths x traverses and their box intersection."""
    x = np.asarray(x, dtype=np.float64)
    paths = tuple(path_for_input(t, x) for t in m.trees)
    box = Box.universe()
    for p in paths:
        box = box.intersect(path_box(p))
    votes = np.bincount([p.label for p in paths], minlength=m.n_classes)
    return JointPath(paths=paths, premise_box=box, label=int(np.argmax(votes)))


def joint_leaf_ids(m: Forest, X) -> np.ndarray:
    """(n_rows, n_trees) leaf ids — the activation pattern of each row."""
    from .tree import leaf_ids_many

    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.empty((X.shape[0], m.n_trees), dtype=np.int64)
    for j, t in enumerate(m.trees):
        out[:, j] = leaf_ids_many(t, X)
    return out


def accuracy(model, d: Dataset) -> float:
    """Fraction of rows predicted correctly; works for a Tree or a Forest."""
    return correct_count(model, d) / d.n_rows


def correct_count(model, d: Dataset) -> int:
    """Integer count of correct predictions (for exact-equality checks)."""
    if d.n_rows == 0:
        raise UsageError("cannot measure accuracy on an empty dataset")
    if isinstance(model, Tree):
        pred = predict_many(model, d.features)
    elif isinstance(model, Forest):
        pred = predict_forest_many(model, d.features)
    else:
        raise UsageError(f"cannot evaluate {type(model).__name__}")
    return int(np.sum(pred == d.labels))
