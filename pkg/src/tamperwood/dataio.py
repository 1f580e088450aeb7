"""Dataset loading, splitting, synthesis, and model file persistence.

All loaders produce a Dataset with dense integer labels in 0..C-1; the
original label tokens are kept in a side table so reports stay readable.
Model files are canonical JSON (fixed key order) so golden-file tests can
compare bytes.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParseError, SchemaError, UsageError

MODEL_FORMAT_VERSION = 1


@dataclass
class Dataset:
    """Feature matrix plus integer class labels.

    features: (n_rows, n_features) float array, finite everywhere.
    labels: (n_rows,) int array with values in 0..n_classes-1.
    label_names: original label tokens in mapped order, when labels were
        remapped from strings or sparse integers.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    feature_names: list[str] | None = None
    label_names: list[str] | None = None
    normalized: bool = False

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise UsageError(f"features must be 2-D, got shape {self.features.shape}")
        if len(self.labels) != self.features.shape[0]:
            raise UsageError(
                f"{self.features.shape[0]} rows but {len(self.labels)} labels"
            )
        if not np.all(np.isfinite(self.features)):
            raise UsageError("features contain NaN or infinite values")
        if self.n_classes < 1:
            raise UsageError("n_classes must be >= 1")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise UsageError("labels out of range for n_classes")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.n_classes,
            self.feature_names,
            self.label_names,
            self.normalized,
        )

    def with_rows(self, features, labels) -> "Dataset":
        """New dataset with extra rows appended (used for poisoning loops)."""
        feats = np.vstack([self.features, np.atleast_2d(np.asarray(features, dtype=np.float64))])
        labs = np.concatenate([self.labels, np.atleast_1d(np.asarray(labels, dtype=np.int64))])
        return Dataset(feats, labs, self.n_classes, self.feature_names, self.label_names, self.normalized)


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions plus the shuffle seed."""

    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("train_frac", "val_frac", "test_frac"):
            f = getattr(self, name)
            if not (0.0 < f < 1.0):
                raise UsageError(f"{name} must be in (0,1), got {f}")
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise UsageError(f"fractions must sum to 1, got {total}")


def _remap_labels(tokens: list[str]):
    """Map label tokens to 0..C-1 in first-appearance order."""
    mapping: dict[str, int] = {}
    out = np.empty(len(tokens), dtype=np.int64)
    for i, tok in enumerate(tokens):
        if tok not in mapping:
            mapping[tok] = len(mapping)
        out[i] = mapping[tok]
    return out, list(mapping)


def _normalize_columns(features: np.ndarray) -> np.ndarray:
    lo = features.min(axis=0)
    hi = features.max(axis=0)
    span = hi - lo
    out = np.zeros_like(features)
    nonconst = span > 0
    out[:, nonconst] = (features[:, nonconst] - lo[nonconst]) / span[nonconst]
    return out


def load_csv(path, label_column, normalize: bool = False) -> Dataset:
    """Load an RFC-4180-style CSV with a header row.

    label_column may be a header name or a 0-based column index. Labels are
    remapped to 0..C-1 in first-appearance order; originals land in
    label_names. Row numbers in errors count data rows from 1.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        rows = list(reader)

    if isinstance(label_column, int):
        if not (0 <= label_column < len(header)):
            raise SchemaError(f"label column index {label_column} out of range")
        label_idx = label_column
    else:
        if label_column not in header:
            raise SchemaError(f"unknown label column {label_column!r}")
        label_idx = header.index(label_column)

    feature_names = [h for i, h in enumerate(header) if i != label_idx]
    n_cols = len(header)
    feats = np.empty((len(rows), n_cols - 1), dtype=np.float64)
    tokens = []
    for r, row in enumerate(rows, start=1):
        if len(row) != n_cols:
            raise ParseError(f"expected {n_cols} cells, got {len(row)}", row=r)
        j = 0
        for i, cell in enumerate(row):
            if i == label_idx:
                tokens.append(cell.strip())
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"cannot parse feature value {cell!r}", row=r) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite feature value {cell!r}", row=r)
            feats[r - 1, j] = v
            j += 1

    labels, label_names = _remap_labels(tokens)
    if normalize:
        feats = _normalize_columns(feats)
    return Dataset(
        feats,
        labels,
        n_classes=max(len(label_names), 1),
        feature_names=feature_names,
        label_names=label_names,
        normalized=normalize,
    )


def load_libsvm(path, n_features: int) -> Dataset:
    """Load sparse ``label idx:val`` lines with 1-based ascending indices.

    Missing indices are filled with 0.0. Nonnegative integer labels are kept
    as-is (n_classes = max label + 1); anything else is remapped in
    first-appearance order.
    """
    if n_features < 1:
        raise UsageError("n_features must be >= 1")
    rows = []
    raw_labels = []
    with open(path) as fh:
        for r, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            raw_labels.append(parts[0])
            row = np.zeros(n_features, dtype=np.float64)
            prev = 0
            for item in parts[1:]:
                try:
                    idx_s, val_s = item.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise ParseError(f"malformed entry {item!r}", row=r) from None
                if idx <= prev:
                    raise ParseError(f"index {idx} not ascending", row=r)
                if idx > n_features:
                    raise ParseError(f"index {idx} exceeds n_features={n_features}", row=r)
                row[idx - 1] = val
                prev = idx
            rows.append(row)

    feats = np.vstack(rows) if rows else np.empty((0, n_features))
    try:
        ints = [int(float(t)) for t in raw_labels]
        integral = all(float(t) == int(float(t)) for t in raw_labels)
    except ValueError:
        integral = False
    if integral and all(v >= 0 for v in ints):
        labels = np.array(ints, dtype=np.int64)
        n_classes = int(labels.max()) + 1 if len(labels) else 1
        return Dataset(feats, labels, n_classes)
    labels, label_names = _remap_labels([t for t in raw_labels])
    return Dataset(feats, labels, max(len(label_names), 1), label_names=label_names)


def split(d: Dataset, s: SplitSpec):
    """Deterministic 3-way partition, stratified when every class has >= 3 rows."""
    n = d.n_rows
    if n < 3:
        raise UsageError(f"need at least 3 rows to split, got {n}")
    rng = np.random.default_rng(s.seed)
    counts = np.bincount(d.labels, minlength=d.n_classes)
    present = counts[counts > 0]
    stratified = len(present) > 0 and present.min() >= 3

    def carve(indices):
        k = len(indices)
        n_train = int(k * s.train_frac)
        n_val = int(k * s.val_frac)
        return indices[:n_train], indices[n_train:n_train + n_val], indices[n_train + n_val:]

    if stratified:
        tr_parts, va_parts, te_parts = [], [], []
        for c in range(d.n_classes):
            idx = np.flatnonzero(d.labels == c)
            if len(idx) == 0:
                continue
            idx = idx[rng.permutation(len(idx))]
            tr, va, te = carve(idx)
            tr_parts.append(tr)
            va_parts.append(va)
            te_parts.append(te)
        tr = np.concatenate(tr_parts)
        va = np.concatenate(va_parts)
        te = np.concatenate(te_parts)
    else:
        idx = rng.permutation(n)
        tr, va, te = carve(idx)
    return d.subset(tr), d.subset(va), d.subset(te)


def _rule_tree(rng, n_features, depth, cell):
    if depth == 0:
        return {"leaf": True}
    f = int(rng.integers(n_features))
    lo, hi = cell[f]
    t = lo + (0.3 + 0.4 * rng.random()) * (hi - lo)
    left_cell = list(cell)
    right_cell = list(cell)
    left_cell[f] = (lo, t)
    right_cell[f] = (t, hi)
    return {
        "leaf": False,
        "feature": f,
        "threshold": t,
        "left": _rule_tree(rng, n_features, depth - 1, left_cell),
        "right": _rule_tree(rng, n_features, depth - 1, right_cell),
    }


def _assign_leaf_labels(node, labels_iter):
    if node["leaf"]:
        node["label"] = next(labels_iter)
    else:
        _assign_leaf_labels(node["left"], labels_iter)
        _assign_leaf_labels(node["right"], labels_iter)


def _apply_rule(node, X, idx, out):
    if node["leaf"]:
        out[idx] = node["label"]
        return
    mask = X[idx, node["feature"]] <= node["threshold"]
    _apply_rule(node["left"], X, idx[mask], out)
    _apply_rule(node["right"], X, idx[~mask], out)


def gen_synthetic(n_samples: int, n_features: int, n_classes: int, seed: int) -> Dataset:
    """Uniform features labelled by a random axis-aligned rule tree.

    The rule tree is shallow (depth 4+) with thresholds kept away from cell
    edges, so a modest decision tree can refit the labels to high accuracy.
    Deterministic in seed; rule sets that miss a class are redrawn.
    """
    if min(n_samples, n_features, n_classes) < 1:
        raise UsageError("all counts must be >= 1")
    rng_feat = np.random.default_rng([seed, 0xFEA7])
    X = rng_feat.random((n_samples, n_features))
    depth = max(4, math.ceil(math.log2(2 * n_classes)))

    for attempt in range(100):
        rng = np.random.default_rng([seed, attempt])
        rule = _rule_tree(rng, n_features, depth, [(0.0, 1.0)] * n_features)
        leaf_labels = [i % n_classes for i in range(2 ** depth)]
        rng.shuffle(leaf_labels)
        _assign_leaf_labels(rule, iter(leaf_labels))
        y = np.empty(n_samples, dtype=np.int64)
        _apply_rule(rule, X, np.arange(n_samples), y)
        if len(np.unique(y)) == n_classes or n_samples < n_classes:
            return Dataset(X, y, n_classes, feature_names=[f"f{i}" for i in range(n_features)])
    raise UsageError(
        f"could not realise {n_classes} classes in {n_samples} samples after 100 rule draws"
    )


def save_csv(d: Dataset, path):
    """Write a Dataset back to CSV (label column last, named 'label')."""
    names = d.feature_names or [f"f{i}" for i in range(d.n_features)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["label"])
        for i in range(d.n_rows):
            tok = d.label_names[d.labels[i]] if d.label_names else str(int(d.labels[i]))
            writer.writerow([repr(float(v)) for v in d.features[i]] + [tok])


def _write_text_atomic(path, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _params_dict(params, normalized):
    if params is None:
        return None
    return {
        "criterion": params.criterion,
        "max_depth": params.max_depth,
        "min_samples_leaf": params.min_samples_leaf,
        "seed": params.seed,
        "normalized": bool(normalized),
    }


def _tree_dict(t):
    nodes = []
    for node in t.nodes:
        if node.is_leaf:
            nodes.append({"label": int(node.label)})
        else:
            nodes.append(
                {
                    "feature": int(node.feature),
                    "threshold": float(node.threshold),
                    "left": int(node.left),
                    "right": int(node.right),
                }
            )
    return {"root": int(t.root), "depth": int(t.depth), "nodes": nodes}


def save_model(m, path, normalized: bool = False):
    """Serialize a Tree or Forest to canonical JSON; whole-file atomic."""
    from .forest import Forest
    from .tree import Tree

    if isinstance(m, Tree):
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "tree",
            "n_features": m.n_features,
            "n_classes": m.n_classes,
            "training_params": _params_dict(m.params, normalized),
            "trees": [_tree_dict(m)],
        }
    elif isinstance(m, Forest):
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "forest",
            "n_features": m.n_features,
            "n_classes": m.n_classes,
            "training_params": _params_dict(m.params, normalized),
            "trees": [_tree_dict(t) for t in m.trees],
            "bags": [[int(i) for i in bag] for bag in m.bags],
            "seed": m.seed,
        }
    else:
        raise UsageError(f"cannot serialize {type(m).__name__}")
    _write_text_atomic(path, json.dumps(doc, indent=2) + "\n")


def _params_from_dict(d):
    from .tree import TrainParams

    if d is None:
        return None
    return TrainParams(
        criterion=d["criterion"],
        max_depth=d["max_depth"],
        min_samples_leaf=d.get("min_samples_leaf", 1),
        seed=d.get("seed", 0),
    )


def _tree_from_dict(doc, n_features, n_classes, params):
    from .tree import Node, Tree, compute_depth, validate_tree

    nodes = []
    for i, nd in enumerate(doc.get("nodes", [])):
        if "label" in nd:
            label = nd["label"]
            if not isinstance(label, int) or not (0 <= label < n_classes):
                raise FormatError(f"node {i}: leaf label {label!r} out of range")
            nodes.append(Node(label=label))
        else:
            try:
                nodes.append(
                    Node(
                        feature=int(nd["feature"]),
                        threshold=float(nd["threshold"]),
                        left=int(nd["left"]),
                        right=int(nd["right"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as e:
                raise FormatError(f"node {i}: malformed internal node ({e})") from None
    if "root" not in doc:
        raise FormatError("tree missing root")
    t = Tree(nodes=nodes, root=doc["root"], n_features=n_features, n_classes=n_classes,
             depth=doc.get("depth", 0), params=params)
    try:
        validate_tree(t)
    except UsageError as e:
        raise FormatError(str(e)) from None
    if t.depth != compute_depth(t):
        raise FormatError(f"stored depth {t.depth} != recomputed {compute_depth(t)}")
    return t


def load_model(path):
    """Load a model file; raises FormatError on version or schema violations."""
    from .forest import Forest

    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected a JSON object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {version!r}")
    kind = doc.get("kind")
    try:
        n_features = int(doc["n_features"])
        n_classes = int(doc["n_classes"])
    except (KeyError, TypeError, ValueError):
        raise FormatError("missing or malformed n_features/n_classes") from None
    params = _params_from_dict(doc.get("training_params"))
    trees = [_tree_from_dict(td, n_features, n_classes, params) for td in doc.get("trees", [])]
    if kind == "tree":
        if len(trees) != 1:
            raise FormatError(f"kind=tree requires exactly 1 tree, got {len(trees)}")
        return trees[0]
    if kind == "forest":
        if not trees:
            raise FormatError("kind=forest requires at least 1 tree")
        bags = doc.get("bags")
        if bags is None or len(bags) != len(trees):
            raise FormatError("forest requires one bag per tree")
        return Forest(
            trees=trees,
            bags=[np.asarray(b, dtype=np.int64) for b in bags],
            params=params,
            seed=doc.get("seed", 0),
        )
    raise FormatError(f"unknown model kind {kind!r}")


def read_model_meta(path) -> dict:
    """Raw header fields of a model file (kind, params echo, version)."""
    with open(path) as fh:
        doc = json.load(fh)
    return {
        "format_version": doc.get("format_version"),
        "kind": doc.get("kind"),
        "n_features": doc.get("n_features"),
        "n_classes": doc.get("n_classes"),
        "training_params": doc.get("training_params"),
    }
