"""Recovering an embedded rule from a suspect forest.

The defender flags probe inputs whose activation pattern matches no
training data, collects the joint paths they traverse, and then asks for
each training row: what is the smallest set of feature edits that lands
the row on one of those paths with the suspected label? Because every
joint-path premise is a conjunction of per-feature intervals, the minimal
edit set is exactly the set of violated features, so the search reduces to
box lookups instead of a generic satisfiability call. The modal edit map
across all solvable rows, once frequent enough, is reported as the
recovered rule.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .boxes import Interval
from .dataio import Dataset
from .defence import activation_similarities
from .errors import UsageError
from .forest import Forest, JointPath, joint_path, predict_forest
from .knowledge import Knowledge
from .parallel import map_ordered


@dataclass
class SuspectedPaths:
    """Joint paths suspected of carrying an embedded rule for one label."""

    label: int
    paths: list  # JointPath, discovery order, deduped by leaf tuple
    source: str = "probe-set detection"

    def __post_init__(self):
        for p in self.paths:
            if p.label != self.label:
                raise UsageError(f"joint path labelled {p.label} in group for {self.label}")


@dataclass
class ExtractedKnowledge:
    """A recovered rule with its supporting evidence."""

    knowledge: Knowledge
    support: float  # occurrence frequency of the modal edit map
    m_used: int
    witnesses: list = field(default_factory=list)  # (original row, edited row)


def suspected_paths(m: Forest, probe: Dataset, d_train: Dataset, eps2: float) -> dict:
    """Flag probe rows with activation similarity <= eps2, group their joint
    paths by predicted label. Empty dict when nothing is flagged."""
    if probe.n_rows == 0:
        raise UsageError("probe set must be nonempty")
    sims = activation_similarities(m, probe.features, d_train)
    flagged = np.flatnonzero(sims <= eps2)
    groups: dict[int, list] = {}
    seen: dict[int, set] = {}
    for i in flagged:
        jp = joint_path(m, probe.features[i])
        key = jp.leaf_ids
        if key in seen.setdefault(jp.label, set()):
            continue
        seen[jp.label].add(key)
        groups.setdefault(jp.label, []).append(jp)
    return {label: SuspectedPaths(label, paths) for label, paths in groups.items()}


def _nearest_inside(iv: Interval, v: float, eps: float) -> float | None:
    """Value inside iv closest to v, nudging off open endpoints by eps/2."""
    finite = not math.isinf(iv.lo) and not math.isinf(iv.hi)
    if finite and iv.hi - iv.lo < eps:
        cand = iv.lo if iv.is_point else 0.5 * (iv.lo + iv.hi)
    elif v < iv.lo or (v == iv.lo and iv.lo_open):
        cand = iv.lo if not iv.lo_open else iv.lo + eps / 2.0
    else:
        cand = iv.hi if not iv.hi_open else iv.hi - eps / 2.0
    return cand if iv.contains(cand) else None


def solve_l0(m: Forest, sp: SuspectedPaths, x, m_bound: int, eps: float = 1e-6):
    """Smallest-edit version of x that follows a suspected path, or None.

    For each suspected path the edit set is exactly the features where x
    violates the path's box; candidates beyond m_bound edits are skipped.
    The winning edit is re-verified by actual prediction. Ties on edit
    count keep the earliest path in stored order.
    """
    if m_bound < 0:
        raise UsageError("m_bound must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    best = None
    best_count = None
    for jp in sp.paths:
        box = jp.premise_box
        if box.is_empty:
            continue
        edits = {}
        feasible = True
        for f, iv in box.intervals.items():
            if iv.contains(x[f]):
                continue
            nv = _nearest_inside(iv, x[f], eps)
            if nv is None:
                feasible = False
                break
            edits[f] = nv
            if len(edits) > m_bound:
                feasible = False
                break
        if not feasible:
            continue
        if best_count is not None and len(edits) >= best_count:
            continue
        x2 = x.copy()
        for f, nv in edits.items():
            x2[f] = nv
        if not box.contains(x2):
            continue
        if predict_forest(m, x2) != sp.label:
            continue
        best = x2
        best_count = len(edits)
        if best_count == 0:
            break
    return best


def _edit_key(x, x2, quantum: float):
    """Edited features with values snapped to the counting grid."""
    diff = np.flatnonzero(x != x2)
    return tuple((int(f), int(round(x2[f] / quantum))) for f in diff)


def extract_knowledge(m: Forest, d_train: Dataset, sp: SuspectedPaths, c_k: float,
                      m_start: int = 1, m_max: int = 3, eps: float = 1e-6,
                      quantum: float = 1e-4):
    """Aggregate per-row minimal edits into a rule, raising the edit budget
    until the modal edit map clears the support threshold.

    Rows solved with zero edits stay in the solved pool (they dilute
    support) but cannot themselves become the rule: an empty edit map
    carries no premise. Returns None when every budget up to m_max fails.
    """
    if not (0.0 < c_k <= 1.0):
        raise UsageError("c_k must be in (0, 1]")
    if m_start > m_max:
        raise UsageError("m_start must be <= m_max")
    if d_train.n_rows == 0:
        raise UsageError("training set must be nonempty")
    if not sp.paths:
        return None

    for budget in range(m_start, m_max + 1):
        solved = map_ordered(
            lambda row: solve_l0(m, sp, row, budget, eps), d_train.features
        )
        pool = [(d_train.features[i], x2) for i, x2 in enumerate(solved) if x2 is not None]
        if not pool:
            continue
        counts = Counter(
            key for key in (_edit_key(x, x2, quantum) for x, x2 in pool) if key
        )
        if not counts:
            continue
        # max() keeps the first-inserted map on ties, i.e. lowest row order.
        key, freq = max(counts.items(), key=lambda kv: kv[1])
        support = freq / len(pool)
        if support >= c_k:
            witnesses = [
                (x, x2) for x, x2 in pool if _edit_key(x, x2, quantum) == key
            ]
            # Grid values only group edits; the reported rule uses the modal
            # raw edit value per feature, which provably sits inside the
            # suspected boxes (a snapped value may fall just outside).
            premise = {}
            for f, _ in key:
                vals = Counter(x2[f] for _, x2 in witnesses)
                v = max(vals.items(), key=lambda kv: kv[1])[0]
                premise[f] = (v, v)
            knowledge = Knowledge(premise, sp.label, eps)
            return ExtractedKnowledge(knowledge, support, budget, witnesses)
    return None
