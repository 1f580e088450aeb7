"""Rule payloads and their interaction with tree paths.

A Knowledge object is a conjunction of per-feature closed intervals plus a
target label. Against a given tree, every path falls in exactly one of
three buckets: no shared features (sigma1), shared features and a
satisfiable conjunction with the rule premise (sigma2), or shared features
with an unsatisfiable conjunction (sigma3). Paths in sigma1/sigma2 whose
leaf label differs from the target are the "unlearned" set that embedding
must eliminate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box, Interval
from .dataio import Dataset
from .errors import UsageError, ValidationError
from .forest import Forest
from .tree import Tree, enumerate_paths, leaf_ids_many, path_box


@dataclass(frozen=True)
class Knowledge:
    """Premise ``AND_f (l_f <= x_f <= u_f)`` implying a target label.

    epsilon is the widening used when a point value must become a half-open
    test window during structural embedding.
    """

    premise: dict  # feature -> (low, high), closed bounds
    target: int
    epsilon: float = 1e-6

    def __post_init__(self):
        if not self.premise:
            raise ValidationError("knowledge premise must be nonempty")
        for f, (lo, hi) in self.premise.items():
            if lo > hi:
                raise ValidationError(f"feature {f}: low {lo} > high {hi}")
        if self.target < 0:
            raise ValidationError(f"target label {self.target} invalid")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        object.__setattr__(self, "premise", dict(sorted(self.premise.items())))

    def features(self) -> set:
        return set(self.premise)

    def box(self) -> Box:
        b = Box.universe()
        for f, (lo, hi) in self.premise.items():
            b = b.constrain(f, Interval.closed(lo, hi))
        return b

    def restricted_to(self, features) -> "Knowledge":
        sub = {f: iv for f, iv in self.premise.items() if f in features}
        return Knowledge(sub, self.target, self.epsilon)

    def describe(self, feature_names=None) -> str:
        def fname(f):
            return feature_names[f] if feature_names else f"f{f}"

        parts = []
        for f, (lo, hi) in self.premise.items():
            parts.append(f"{fname(f)} = {lo:g}" if lo == hi else f"{fname(f)} in [{lo:g}, {hi:g}]")
        return " & ".join(parts) + f" => {self.target}"


@dataclass
class PathTaxonomy:
    """Disjoint leaf-id sets partitioning a tree's paths against one rule."""

    sigma1: set
    sigma2: set
    sigma3: set
    unlearned: set  # subset of sigma1 | sigma2 with label != target

    @property
    def learned(self) -> set:
        return (self.sigma1 | self.sigma2) - self.unlearned


def parse_knowledge(document, n_classes: int | None = None) -> Knowledge:
    """Build Knowledge from a JSON string or an already-parsed mapping.

    Premise entries are {"feature": i, "low": a, "high": b} or the point
    shorthand {"feature": i, "value": v}.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as e:
            raise ValidationError(f"knowledge document is not valid JSON: {e}") from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ValidationError("knowledge document must be a JSON object")
    if "premise" not in doc or "target" not in doc:
        raise ValidationError("knowledge document needs 'premise' and 'target'")
    premise = {}
    for entry in doc["premise"]:
        try:
            f = int(entry["feature"])
        except (KeyError, TypeError, ValueError):
            raise ValidationError(f"premise entry missing feature index: {entry!r}") from None
        if f in premise:
            raise ValidationError(f"duplicate premise feature {f}")
        if "value" in entry:
            lo = hi = float(entry["value"])
        else:
            try:
                lo, hi = float(entry["low"]), float(entry["high"])
            except (KeyError, TypeError, ValueError):
                raise ValidationError(f"premise entry needs low/high or value: {entry!r}") from None
        if lo > hi:
            raise ValidationError(f"feature {f}: low {lo} > high {hi}")
        premise[f] = (lo, hi)
    target = doc["target"]
    if not isinstance(target, int) or target < 0:
        raise ValidationError(f"target must be a nonnegative integer, got {target!r}")
    if n_classes is not None and target >= n_classes:
        raise ValidationError(f"unknown label {target} (n_classes={n_classes})")
    return Knowledge(premise, target, float(doc.get("epsilon", 1e-6)))


def knowledge_to_json(k: Knowledge) -> str:
    doc = {
        "premise": [{"feature": f, "low": lo, "high": hi} for f, (lo, hi) in k.premise.items()],
        "target": k.target,
        "epsilon": k.epsilon,
    }
    return json.dumps(doc, indent=2)


def ke_transform(k: Knowledge, x) -> np.ndarray:
    """Clamp premise features of x to their rule intervals; rest untouched."""
    out = np.array(x, dtype=np.float64)
    for f, (lo, hi) in k.premise.items():
        if out[f] < lo:
            out[f] = lo
        elif out[f] > hi:
            out[f] = hi
    return out


def ke_transform_many(k: Knowledge, X) -> np.ndarray:
    out = np.array(X, dtype=np.float64)
    for f, (lo, hi) in k.premise.items():
        np.clip(out[:, f], lo, hi, out=out[:, f])
    return out


def make_ke_testset(d: Dataset, k: Knowledge) -> Dataset:
    """Every row clamped into the rule box, every label set to the target."""
    if d.n_rows == 0:
        raise UsageError("cannot build a KE test set from an empty dataset")
    if k.target >= d.n_classes:
        raise UsageError(f"target {k.target} out of range for {d.n_classes} classes")
    feats = ke_transform_many(k, d.features)
    labels = np.full(d.n_rows, k.target, dtype=np.int64)
    return Dataset(feats, labels, d.n_classes, d.feature_names, d.label_names, d.normalized)


def classify_paths(t: Tree, k: Knowledge) -> PathTaxonomy:
    """Partition t's paths by overlap and exact box consistency with k."""
    kbox = k.box()
    kfeats = k.features()
    s1, s2, s3, unlearned = set(), set(), set(), set()
    for p in enumerate_paths(t):
        leaf = p.leaf_id
        if not (kfeats & p.features()):
            s1.add(leaf)
            consistent = True
        elif not kbox.intersect(path_box(p)).is_empty:
            s2.add(leaf)
            consistent = True
        else:
            s3.add(leaf)
            consistent = False
        if consistent and p.label != k.target:
            unlearned.add(leaf)
    return PathTaxonomy(s1, s2, s3, unlearned)


def split_partial(k: Knowledge, n_trees: int) -> list:
    """Deal premise features to the lowest-index majority of trees.

    Returns [(tree_index, partial Knowledge), ...] for q = n//2 + 1 trees.
    Features cycle round-robin so each appears in at least one assignment and
    each assigned tree gets a nonempty premise; with one tree the full rule
    is assigned.
    """
    if n_trees < 1:
        raise UsageError("n_trees must be >= 1")
    q = n_trees // 2 + 1
    feats = sorted(k.premise)
    buckets = [set() for _ in range(q)]
    for j in range(max(q, len(feats))):
        buckets[j % q].add(feats[j % len(feats)])
    return [(i, k.restricted_to(buckets[i])) for i in range(q)]


def _learned_leaf_mask(t: Tree, k: Knowledge) -> np.ndarray:
    tax = classify_paths(t, k)
    mask = np.zeros(len(t.nodes), dtype=bool)
    for leaf in tax.learned:
        mask[leaf] = True
    return mask


def clean_collision_rate(m, k, d_clean: Dataset) -> float:
    """Fraction of clean rows that risk flipping to the rule target.

    A row counts when its true label differs from the target and it lands on
    a learned path in the tree (single-tree case) or in every operated tree
    (forest case, where k is the split_partial assignment list).
    """
    if d_clean.n_rows == 0:
        raise UsageError("empty clean dataset")
    if isinstance(m, Tree):
        if not isinstance(k, Knowledge):
            raise UsageError("single tree requires a Knowledge, not an assignment")
        hits = _learned_leaf_mask(m, k)[leaf_ids_many(m, d_clean.features)]
        target = k.target
    elif isinstance(m, Forest):
        assignment = list(k) if not isinstance(k, Knowledge) else split_partial(k, m.n_trees)
        target = assignment[0][1].target
        hits = np.ones(d_clean.n_rows, dtype=bool)
        for tree_idx, partial in assignment:
            t = m.trees[tree_idx]
            hits &= _learned_leaf_mask(t, partial)[leaf_ids_many(t, d_clean.features)]
    else:
        raise UsageError(f"cannot analyse {type(m).__name__}")
    hits &= d_clean.labels != target
    return float(np.count_nonzero(hits)) / d_clean.n_rows
