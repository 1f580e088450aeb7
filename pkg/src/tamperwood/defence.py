"""Defences: reduced-error pruning, outlier scores, and ROC evaluation.

Pruning collapses a subtree to a leaf only when the collapse is either
behaviour-preserving (all leaves below already agree) or strictly reduces
errors on the validation set. Collapsing on mere ties would also erase
structure the validation set never exercises, which is exactly where
narrow embedded rules live; strictness keeps the defence honest about what
it can actually see.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset
from .errors import UsageError
from .forest import Forest, joint_leaf_ids, predict_forest_many, vote_counts
from .tree import Node, Tree, compute_depth, predict_many, validate_tree


@dataclass
class DetectionScore:
    """Suspicion score for one input; higher means more suspicious."""

    score: float
    method: str  # "loss" or "activation"
    threshold_used: float | None = None


@dataclass
class RocCurve:
    points: list  # (fpr, tpr) pairs from (0,0) to (1,1)
    auc: float
    thresholds: list | None = None  # score cut per point; inf for (0,0)


def _collapse_pass(nodes, root, val: Dataset):
    """One bottom-up pruning sweep; returns True when anything collapsed."""
    labels = val.labels
    changed = False

    def leaf_labels(i):
        nd = nodes[i]
        if nd.is_leaf:
            return {nd.label}
        return leaf_labels(nd.left) | leaf_labels(nd.right)

    def visit(i, rows):
        nonlocal changed
        nd = nodes[i]
        if nd.is_leaf:
            return
        mask = val.features[rows, nd.feature] <= nd.threshold
        visit(nd.left, rows[mask])
        visit(nd.right, rows[~mask])

        seen = leaf_labels(i)
        if len(seen) == 1:
            label = next(iter(seen))
            nodes[i] = Node(label=label)
            changed = True
            return
        if len(rows) == 0:
            return
        sub_pred = _predict_subtree(nodes, i, val.features[rows])
        sub_correct = int(np.sum(sub_pred == labels[rows]))
        counts = np.bincount(labels[rows], minlength=val.n_classes)
        best = int(np.argmax(counts))
        if counts[best] > sub_correct:
            nodes[i] = Node(label=best)
            changed = True

    visit(root, np.arange(val.n_rows))
    return changed


def _predict_subtree(nodes, i, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        j = i
        while not nodes[j].is_leaf:
            j = nodes[j].left if X[r, nodes[j].feature] <= nodes[j].threshold else nodes[j].right
        out[r] = nodes[j].label
    return out


def _compact(nodes, root, t: Tree) -> Tree:
    remap = {}
    new_nodes = []

    def walk(i):
        remap[i] = len(new_nodes)
        nd = nodes[i].copy()
        new_nodes.append(nd)
        if not nd.is_leaf:
            nd.left = walk(nd.left)
            nd.right = walk(nd.right)
        return remap[i]

    new_root = walk(root)
    out = Tree(nodes=new_nodes, root=new_root, n_features=t.n_features,
               n_classes=t.n_classes, depth=0, params=t.params)
    out.depth = compute_depth(out)
    validate_tree(out)
    return out


def prune_rep(t: Tree, val: Dataset) -> Tree:
    """Reduced-error pruning against a validation set, repeated to fixpoint.

    Homogeneous subtrees always merge; mixed subtrees are replaced by the
    validation-majority leaf only when that strictly reduces validation
    errors. Depth never increases.
    """
    if val.n_rows == 0:
        raise UsageError("validation set must be nonempty")
    nodes = [nd.copy() for nd in t.nodes]
    while _collapse_pass(nodes, t.root, val):
        pass
    return _compact(nodes, t.root, t)


def prune_forest(m: Forest, val: Dataset) -> Forest:
    """Apply prune_rep to every tree with the shared validation split."""
    return Forest(trees=[prune_rep(t, val) for t in m.trees], bags=m.bags,
                  params=m.params, seed=m.seed)


def model_loss(m: Forest, x) -> float:
    """1 minus the majority vote share: the model's confidence deficit."""
    counts = vote_counts(m, np.atleast_2d(x))[0]
    return 1.0 - counts.max() / m.n_trees


def model_loss_many(m: Forest, X) -> np.ndarray:
    counts = vote_counts(m, X)
    return 1.0 - counts.max(axis=1) / m.n_trees


def loss_outlier(m: Forest, x, d_ref: Dataset, eps1: float) -> bool:
    """Flag x when its loss exceeds the reference mean loss by eps1 or more."""
    if d_ref.n_rows == 0:
        raise UsageError("reference dataset must be nonempty")
    expected = float(model_loss_many(m, d_ref.features).mean())
    return model_loss(m, x) - expected >= eps1


def activation_similarities(m: Forest, X, d_train: Dataset) -> np.ndarray:
    """Best per-tree leaf agreement with any same-predicted training row.

    1.0 means some training row with the same forest prediction traverses
    the identical leaf in every tree; 0.0 means no training row shares the
    prediction at all.
    """
    if d_train.n_rows == 0:
        raise UsageError("training reference must be nonempty")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    train_leaves = joint_leaf_ids(m, d_train.features)
    train_pred = predict_forest_many(m, d_train.features)
    probe_leaves = joint_leaf_ids(m, X)
    probe_pred = predict_forest_many(m, X)
    out = np.zeros(X.shape[0], dtype=np.float64)
    for c in np.unique(probe_pred):
        ref = train_leaves[train_pred == c]
        idx = np.flatnonzero(probe_pred == c)
        if len(ref) == 0:
            continue
        for i in idx:
            agree = (ref == probe_leaves[i]).mean(axis=1)
            out[i] = float(agree.max())
    return out


def activation_similarity(m: Forest, x_tilde, d_train: Dataset) -> float:
    return float(activation_similarities(m, np.atleast_2d(x_tilde), d_train)[0])


def detection_scores(m: Forest, X, method: str, reference: Dataset,
                     threshold: float | None = None) -> list:
    """Oriented suspicion scores (higher = more suspicious) for each row.

    method "loss" scores by vote-confidence deficit; "activation" scores by
    1 - activation similarity against the reference (training) data.
    """
    if method == "loss":
        raw = model_loss_many(m, X)
    elif method == "activation":
        raw = 1.0 - activation_similarities(m, X, reference)
    else:
        raise UsageError(f"unknown detection method {method!r}")
    return [DetectionScore(float(s), method, threshold) for s in raw]


def roc_auc(scores) -> RocCurve:
    """ROC over (score, is_ke) pairs, sweeping every distinct threshold.

    Equal scores are grouped at a single threshold; AUC is the trapezoidal
    integral of the resulting curve.
    """
    pairs = [(float(s), bool(f)) for s, f in scores]
    n_pos = sum(1 for _, f in pairs if f)
    n_neg = len(pairs) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UsageError("ROC needs both KE and clean examples")
    pairs.sort(key=lambda p: -p[0])
    points = [(0.0, 0.0)]
    thresholds = [float("inf")]
    tp = fp = 0
    i = 0
    while i < len(pairs):
        j = i
        while j < len(pairs) and pairs[j][0] == pairs[i][0]:
            tp += pairs[j][1]
            fp += not pairs[j][1]
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        thresholds.append(pairs[i][0])
        i = j
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=points, auc=auc, thresholds=thresholds)
