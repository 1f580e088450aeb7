"""Success-criteria evaluation and the repeated-trial harness.

The two checkable rules: preservation (clean-test accuracy may drop at
most alpha_p) and verifiability (accuracy on the clamped test set must be
exactly 1.0, compared on integer counts, never with a float tolerance).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import Dataset, SplitSpec, split
from .embed_blackbox import embed_forest_blackbox, embed_tree_blackbox
from .embed_whitebox import embed_forest_whitebox, embed_tree_whitebox
from .errors import UsageError
from .forest import accuracy, correct_count, train_forest
from .knowledge import Knowledge, make_ke_testset
from .tree import TrainParams, train_tree


@dataclass
class CriteriaReport:
    clean_acc_before: float
    clean_acc_after: float
    ke_acc_before: float
    ke_acc_after: float
    alpha_p: float
    p_rule_pass: bool
    v_rule_pass: bool
    embed_runtime: float = 0.0
    extract_runtime: float = 0.0
    seeds: dict = field(default_factory=dict)

    def rows(self):
        return [
            ("clean_acc_before", f"{self.clean_acc_before:.6f}"),
            ("clean_acc_after", f"{self.clean_acc_after:.6f}"),
            ("ke_acc_before", f"{self.ke_acc_before:.6f}"),
            ("ke_acc_after", f"{self.ke_acc_after:.6f}"),
            ("alpha_p", f"{self.alpha_p:g}"),
            ("p_rule_pass", str(self.p_rule_pass).lower()),
            ("v_rule_pass", str(self.v_rule_pass).lower()),
            ("embed_runtime_sec", f"{self.embed_runtime:.4f}"),
            ("extract_runtime_sec", f"{self.extract_runtime:.4f}"),
        ] + [(f"seed_{k}", str(v)) for k, v in self.seeds.items()]


def evaluate_criteria(original, embedded, d_test: Dataset, k: Knowledge,
                      alpha_p: float = 0.05) -> CriteriaReport:
    """Measure both rules for an (original, embedded) model pair."""
    if d_test.n_rows == 0:
        raise UsageError("test set must be nonempty")
    ke_test = make_ke_testset(d_test, k)
    clean_before = accuracy(original, d_test)
    clean_after = accuracy(embedded, d_test)
    ke_correct = correct_count(embedded, ke_test)
    return CriteriaReport(
        clean_acc_before=clean_before,
        clean_acc_after=clean_after,
        ke_acc_before=accuracy(original, ke_test),
        ke_acc_after=ke_correct / ke_test.n_rows,
        alpha_p=alpha_p,
        p_rule_pass=clean_before - clean_after <= alpha_p,
        v_rule_pass=ke_correct == ke_test.n_rows,
    )


@dataclass
class TrialConfig:
    """One experiment family: dataset, rule, mode, and model settings."""

    data: Dataset
    knowledge: Knowledge
    mode: str  # "blackbox" or "whitebox"
    params: TrainParams
    n_trees: int = 20
    split: SplitSpec = field(default_factory=SplitSpec)
    t_max: int = 20

    def __post_init__(self):
        if self.mode not in ("blackbox", "whitebox"):
            raise UsageError(f"mode must be blackbox or whitebox, got {self.mode!r}")


def _embed_tree(train, config, params):
    if config.mode == "blackbox":
        tree, _ = embed_tree_blackbox(train, config.knowledge, params, config.t_max)
        return tree
    base = train_tree(train, params)
    tree, _ = embed_tree_whitebox(base, config.knowledge)
    return tree


def _embed_forest(train, config, params):
    if config.mode == "blackbox":
        forest, _ = embed_forest_blackbox(train, config.knowledge, config.n_trees,
                                          params, config.t_max)
        return forest
    base = train_forest(train, config.n_trees, params)
    forest, _ = embed_forest_whitebox(base, config.knowledge)
    return forest


def repeated_trial(config: TrialConfig, n_seeds: int):
    """Clean-accuracy deltas across seeds for single trees vs forests.

    Each seed reshuffles the split and reseeds training and embedding.
    Returns (rows, summary): rows are (seed, kind, acc_before, acc_after,
    delta) tuples ordered by seed then kind; summary maps kind to the mean
    and variance of its deltas.
    """
    if n_seeds < 2:
        raise UsageError("n_seeds must be >= 2")
    rows = []
    deltas = {"tree": [], "forest": []}
    for s in range(n_seeds):
        seed = config.split.seed + s
        spec = replace(config.split, seed=seed)
        train, _, test = split(config.data, spec)
        params = replace(config.params, seed=seed)

        base_tree = train_tree(train, params)
        emb_tree = _embed_tree(train, config, params)
        before = accuracy(base_tree, test)
        after = accuracy(emb_tree, test)
        rows.append((seed, "tree", before, after, before - after))
        deltas["tree"].append(before - after)

        base_forest = train_forest(train, config.n_trees, params)
        emb_forest = _embed_forest(train, config, params)
        before = accuracy(base_forest, test)
        after = accuracy(emb_forest, test)
        rows.append((seed, "forest", before, after, before - after))
        deltas["forest"].append(before - after)

    summary = {
        kind: {"mean": float(np.mean(d)), "variance": float(np.var(d))}
        for kind, d in deltas.items()
    }
    return rows, summary


def trial_rows_csv(rows) -> list:
    lines = ["seed,kind,clean_acc_before,clean_acc_after,delta"]
    for seed, kind, before, after, delta in rows:
        lines.append(f"{seed},{kind},{before:.6f},{after:.6f},{delta:.6f}")
    return lines


def timed(fn, *args, **kwargs):
    """(result, wall seconds) for one call, on the same clock everywhere."""
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
