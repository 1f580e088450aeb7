"""Binary CART decision trees with threshold splits.

Boundary convention used everywhere: an internal node tests ``f <= b`` and
routes matching inputs left, so a left edge contributes an upper-closed
constraint and a right edge a lower-open one. Trees are treated as
immutable; editing operations (expansion, pruning) build new trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import Box, Interval
from .dataio import Dataset
from .errors import UsageError

UPPER_CLOSED = "upper_closed"
LOWER_OPEN = "lower_open"


@dataclass(frozen=True)
class TrainParams:
    criterion: str = "gini"
    max_depth: int = 8
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.criterion not in ("gini", "entropy"):
            raise UsageError(f"criterion must be gini or entropy, got {self.criterion!r}")
        if self.max_depth < 1:
            raise UsageError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise UsageError("min_samples_leaf must be >= 1")


@dataclass
class Node:
    feature: int | None = None
    threshold: float | None = None
    left: int | None = None
    right: int | None = None
    label: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.label is not None

    def copy(self) -> "Node":
        return Node(self.feature, self.threshold, self.left, self.right, self.label)


@dataclass
class Tree:
    nodes: list[Node]
    root: int
    n_features: int
    n_classes: int
    depth: int
    params: TrainParams | None = None
    _c: dict | None = field(default=None, repr=False, compare=False)

    def node(self, i: int) -> Node:
        return self.nodes[i]

    def _compiled(self):
        """Parallel arrays for vectorized traversal; built once per tree."""
        if self._c is None:
            n = len(self.nodes)
            feat = np.full(n, -1, dtype=np.int64)
            thr = np.zeros(n, dtype=np.float64)
            left = np.zeros(n, dtype=np.int64)
            right = np.zeros(n, dtype=np.int64)
            label = np.full(n, -1, dtype=np.int64)
            for i, nd in enumerate(self.nodes):
                if nd.is_leaf:
                    label[i] = nd.label
                else:
                    feat[i] = nd.feature
                    thr[i] = nd.threshold
                    left[i] = nd.left
                    right[i] = nd.right
            self._c = {"feature": feat, "threshold": thr, "left": left,
                       "right": right, "label": label}
        return self._c


@dataclass(frozen=True)
class Path:
    """Root-to-leaf traversal: node ids, accumulated constraints, leaf label."""

    node_ids: tuple
    constraints: tuple  # of (feature, bound, kind)
    label: int

    @property
    def leaf_id(self) -> int:
        return self.node_ids[-1]

    def features(self) -> set:
        return {f for f, _, _ in self.constraints}


def _impurity(counts, total, criterion):
    p = counts / total
    if criterion == "gini":
        return 1.0 - np.sum(p * p, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -np.sum(p * logs, axis=-1)


def _best_split(X, y_onehot, criterion, min_samples_leaf):
    """Lowest weighted child impurity over all (feature, midpoint threshold).

    Returns (weighted_impurity, feature, threshold) or None when no split
    keeps both children at min_samples_leaf. Ties go to the lower feature
    index, then the lower threshold.
    """
    n, n_features = X.shape[0], X.shape[1]
    best = None
    for f in range(n_features):
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        cut = np.flatnonzero(sv[:-1] != sv[1:])
        if len(cut) == 0:
            continue
        cum = np.cumsum(y_onehot[order], axis=0)
        left_counts = cum[cut]
        right_counts = cum[-1] - left_counts
        n_left = (cut + 1).astype(np.float64)
        n_right = n - n_left
        valid = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
        if not valid.any():
            continue
        il = _impurity(left_counts, n_left[:, None], criterion)
        ir = _impurity(right_counts, n_right[:, None], criterion)
        weighted = (n_left * il + n_right * ir) / n
        weighted = np.where(valid, weighted, np.inf)
        j = int(np.argmin(weighted))  # first minimum -> lowest threshold
        if best is None or weighted[j] < best[0]:
            thr = 0.5 * (sv[cut[j]] + sv[cut[j] + 1])
            best = (float(weighted[j]), f, float(thr))
    return best


def train_tree(d: Dataset, p: TrainParams) -> Tree:
    """Greedy top-down CART fit.

    At each node the (feature, threshold) minimizing weighted child impurity
    is chosen among midpoints of consecutive distinct values; growth stops on
    max_depth, purity, or when no split respects min_samples_leaf. Leaf label
    is the majority class, ties to the smallest class index. Fully
    deterministic for a given input.
    """
    if d.n_rows == 0:
        raise UsageError("cannot train on an empty dataset")
    X, y = d.features, d.labels
    onehot = np.zeros((d.n_rows, d.n_classes), dtype=np.float64)
    onehot[np.arange(d.n_rows), y] = 1.0
    nodes: list[Node] = []

    def grow(idx, depth):
        counts = onehot[idx].sum(axis=0)
        node_id = len(nodes)
        nodes.append(Node())
        if depth >= p.max_depth or np.count_nonzero(counts) <= 1:
            nodes[node_id].label = int(np.argmax(counts))
            return node_id
        found = _best_split(X[idx], onehot[idx], p.criterion, p.min_samples_leaf)
        if found is None:
            nodes[node_id].label = int(np.argmax(counts))
            return node_id
        _, f, thr = found
        mask = X[idx, f] <= thr
        nodes[node_id].feature = f
        nodes[node_id].threshold = thr
        nodes[node_id].left = grow(idx[mask], depth + 1)
        nodes[node_id].right = grow(idx[~mask], depth + 1)
        return node_id

    root = grow(np.arange(d.n_rows), 0)
    t = Tree(nodes=nodes, root=root, n_features=d.n_features,
             n_classes=d.n_classes, depth=0, params=p)
    t.depth = compute_depth(t)
    return t


def predict_tree(t: Tree, x) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (t.n_features,):
        raise UsageError(f"expected {t.n_features} features, got shape {x.shape}")
    nd = t.nodes[t.root]
    while not nd.is_leaf:
        nd = t.nodes[nd.left] if x[nd.feature] <= nd.threshold else t.nodes[nd.right]
    return int(nd.label)


def leaf_ids_many(t: Tree, X) -> np.ndarray:
    """Leaf node id reached by every row of X (vectorized traversal)."""
    X = np.asarray(X, dtype=np.float64)
    c = t._compiled()
    cur = np.full(X.shape[0], t.root, dtype=np.int64)
    active = np.flatnonzero(c["label"][cur] < 0)
    while len(active):
        ids = cur[active]
        go_left = X[active, c["feature"][ids]] <= c["threshold"][ids]
        cur[active] = np.where(go_left, c["left"][ids], c["right"][ids])
        active = active[c["label"][cur[active]] < 0]
    return cur


def predict_many(t: Tree, X) -> np.ndarray:
    return t._compiled()["label"][leaf_ids_many(t, X)]


def enumerate_paths(t: Tree) -> list[Path]:
    """One Path per leaf, in depth-first (left-first) order."""
    out = []

    def walk(i, node_ids, constraints):
        nd = t.nodes[i]
        node_ids = node_ids + (i,)
        if nd.is_leaf:
            out.append(Path(node_ids, constraints, int(nd.label)))
            return
        walk(nd.left, node_ids, constraints + ((nd.feature, nd.threshold, UPPER_CLOSED),))
        walk(nd.right, node_ids, constraints + ((nd.feature, nd.threshold, LOWER_OPEN),))

    walk(t.root, (), ())
    return out


def path_for_input(t: Tree, x) -> Path:
    """The unique Path traversed by x."""
    x = np.asarray(x, dtype=np.float64)
    node_ids = []
    constraints = []
    i = t.root
    nd = t.nodes[i]
    while not nd.is_leaf:
        node_ids.append(i)
        if x[nd.feature] <= nd.threshold:
            constraints.append((nd.feature, nd.threshold, UPPER_CLOSED))
            i = nd.left
        else:
            constraints.append((nd.feature, nd.threshold, LOWER_OPEN))
            i = nd.right
        nd = t.nodes[i]
    node_ids.append(i)
    return Path(tuple(node_ids), tuple(constraints), int(nd.label))


def path_box(p: Path) -> Box:
    """Per-feature interval form of a path premise; EMPTY_BOX on contradiction."""
    box = Box.universe()
    for f, b, kind in p.constraints:
        iv = Interval.at_most(b) if kind == UPPER_CLOSED else Interval.greater_than(b)
        box = box.constrain(f, iv)
        if box.is_empty:
            return box
    return box


def traverse(d: Dataset, p: Path) -> list[int]:
    """Row indices of d satisfying every constraint of p."""
    mask = np.ones(d.n_rows, dtype=bool)
    for f, b, kind in p.constraints:
        col = d.features[:, f]
        mask &= (col <= b) if kind == UPPER_CLOSED else (col > b)
    return [int(i) for i in np.flatnonzero(mask)]


def compute_depth(t: Tree) -> int:
    def walk(i, d):
        nd = t.nodes[i]
        if nd.is_leaf:
            return d
        return max(walk(nd.left, d + 1), walk(nd.right, d + 1))

    return walk(t.root, 0)


def validate_tree(t: Tree):
    """Structural checks: single root, in-range children, tree shape, labels."""
    n = len(t.nodes)
    if not (0 <= t.root < n):
        raise UsageError(f"root {t.root} out of range")
    seen = set()

    def walk(i):
        if not (0 <= i < n):
            raise UsageError(f"child index {i} out of range")
        if i in seen:
            raise UsageError(f"node {i} reachable twice (not a tree)")
        seen.add(i)
        nd = t.nodes[i]
        if nd.is_leaf:
            if not (0 <= nd.label < t.n_classes):
                raise UsageError(f"leaf {i} label {nd.label} out of range")
            return
        if nd.left is None or nd.right is None or nd.feature is None:
            raise UsageError(f"internal node {i} missing children or feature")
        if not (0 <= nd.feature < t.n_features):
            raise UsageError(f"node {i} feature {nd.feature} out of range")
        walk(nd.left)
        walk(nd.right)

    walk(t.root)
    if len(seen) != n:
        raise UsageError(f"{n - len(seen)} nodes unreachable from root")


def copy_tree(t: Tree) -> Tree:
    return Tree(nodes=[nd.copy() for nd in t.nodes], root=t.root,
                n_features=t.n_features, n_classes=t.n_classes,
                depth=t.depth, params=t.params)


def subtree_node_ids(t: Tree, v: int) -> list[int]:
    """All node ids in the subtree rooted at v (preorder)."""
    out = []
    stack = [v]
    while stack:
        i = stack.pop()
        out.append(i)
        nd = t.nodes[i]
        if not nd.is_leaf:
            stack.append(nd.right)
            stack.append(nd.left)
    return out


def subtree_features(t: Tree, v: int) -> set:
    """Features tested anywhere in the subtree rooted at v."""
    return {t.nodes[i].feature for i in subtree_node_ids(t, v) if not t.nodes[i].is_leaf}


def parent_map(t: Tree) -> dict:
    parents = {}
    for i, nd in enumerate(t.nodes):
        if not nd.is_leaf:
            parents[nd.left] = i
            parents[nd.right] = i
    return parents


def format_paths(t: Tree, feature_names=None, label_names=None) -> list[str]:
    """Readable ``f <= b & ... -> label`` dump of every path."""

    def fname(f):
        return feature_names[f] if feature_names else f"f{f}"

    def lname(y):
        return label_names[y] if label_names else str(y)

    lines = []
    for p in enumerate_paths(t):
        if p.constraints:
            conj = " & ".join(
                f"{fname(f)} {'<=' if kind == UPPER_CLOSED else '>'} {b:g}"
                for f, b, kind in p.constraints
            )
        else:
            conj = "true"
        lines.append(f"{conj} -> {lname(p.label)}")
    return lines
