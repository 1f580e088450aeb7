"""Rule embedding by expanding tree nodes with guard tests.

One expansion re-routes a node v behind two new tests on a rule feature f:

        parent                      parent
          |                           |
          v          ==>        [f <= lo - eps]
        /subtree\                /          \
                            original      [f <= hi]
                            subtree        /      \
                                     target leaf  copy of
                                                  subtree

Inputs inside the window (lo-eps, hi] reach the new target-labelled leaf;
everything else behaves exactly as before. The low guard sits strictly
below the rule interval so that boundary inputs (x_f == lo) still land on
the new leaf; the two residual branches then contradict the rule premise
and become clean paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import Interval
from .errors import ConsistencyError, UsageError
from .forest import Forest
from .knowledge import Knowledge, classify_paths, split_partial
from .tree import (
    LOWER_OPEN,
    UPPER_CLOSED,
    Node,
    Path,
    Tree,
    compute_depth,
    copy_tree,
    enumerate_paths,
    parent_map,
    subtree_features,
    subtree_node_ids,
)


@dataclass
class ExpansionReport:
    modified_paths: int = 0
    expansions: list = field(default_factory=list)  # (node id, feature, (lo_guard, hi_guard))
    depth_before: int = 0
    depth_after: int = 0
    failed_paths: list = field(default_factory=list)
    per_tree: list = field(default_factory=list)  # (tree index, ExpansionReport)

    @property
    def converged(self) -> bool:
        return not self.failed_paths


def feat_not_on_subtree(t: Tree, j: int, G) -> set:
    """Rule features unused by any test in the subtree rooted at j."""
    return set(G) - subtree_features(t, j)


def _subtree_leaves(t: Tree, v: int) -> set:
    return {i for i in subtree_node_ids(t, v) if t.nodes[i].is_leaf}


def candidate_nodes(t: Tree, sigma: Path, G, U) -> list:
    """Insertion candidates for sigma, walking leaf to root.

    A node j qualifies while every path through j is still unlearned (ids in
    U) and some rule feature is unused below j; the walk stops at the first
    node violating either condition. Returned in leaf-to-root order.
    """
    if sigma.leaf_id not in U:
        raise UsageError("sigma must be an unlearned path (leaf id in U)")
    P = []
    for j in reversed(sigma.node_ids):
        if not _subtree_leaves(t, j) <= set(U):
            break
        if not feat_not_on_subtree(t, j, G):
            break
        P.append(j)
    return P


def expand(t: Tree, v: int, f: int, low: float, high: float, target: int,
           epsilon: float = 1e-6) -> Tree:
    """New tree with node v wrapped in guard tests for f in (low-eps, high].

    Requires f to be unused in the subtree rooted at v, otherwise the
    duplicated subtree would contradict the new guards on some path.
    """
    if not (0 <= v < len(t.nodes)):
        raise UsageError(f"node id {v} out of range")
    if not (0 <= f < t.n_features):
        raise UsageError(f"feature {f} out of range")
    if not (0 <= target < t.n_classes):
        raise UsageError(f"target label {target} out of range")
    if f in subtree_features(t, v):
        raise ConsistencyError(
            f"feature {f} already tested in the subtree of node {v}"
        )
    lo_guard = low - epsilon
    hi_guard = high

    out = copy_tree(t)
    nodes = out.nodes

    # Duplicate v's subtree so the result stays a tree rather than a DAG.
    old_ids = subtree_node_ids(t, v)
    remap = {}
    for i in old_ids:
        remap[i] = len(nodes)
        nodes.append(t.nodes[i].copy())
    for i in old_ids:
        nd = nodes[remap[i]]
        if not nd.is_leaf:
            nd.left = remap[nd.left]
            nd.right = remap[nd.right]

    leaf_id = len(nodes)
    nodes.append(Node(label=target))
    inner_id = len(nodes)
    nodes.append(Node(feature=f, threshold=hi_guard, left=leaf_id, right=remap[v]))
    guard_id = len(nodes)
    nodes.append(Node(feature=f, threshold=lo_guard, left=v, right=inner_id))

    if v == out.root:
        out.root = guard_id
    else:
        parent = parent_map(t)[v]
        if nodes[parent].left == v:
            nodes[parent].left = guard_id
        else:
            nodes[parent].right = guard_id
    out.depth = compute_depth(out)
    out._c = None
    return out


def _interval_above(sigma: Path, v: int, f: int) -> Interval:
    """Constraint interval on f accumulated strictly above v along sigma."""
    iv = Interval()
    for node_id, (cf, b, kind) in zip(sigma.node_ids, sigma.constraints):
        if node_id == v:
            break
        if cf != f:
            continue
        step = Interval.at_most(b) if kind == UPPER_CLOSED else Interval.greater_than(b)
        nxt = iv.intersect(step)
        if nxt is None:
            raise ConsistencyError("contradictory path constraints")
        iv = nxt
    return iv


def _viable(sigma: Path, v: int, f: int, lo_guard: float, hi_guard: float) -> bool:
    """All three branches of the expansion stay satisfiable above v."""
    above = _interval_above(sigma, v, f)
    window = Interval(lo_guard, hi_guard, lo_open=True, hi_open=False)
    return (
        above.intersect(window) is not None
        and above.intersect(Interval.at_most(lo_guard)) is not None
        and above.intersect(Interval.greater_than(hi_guard)) is not None
    )


def embed_tree_whitebox(t: Tree, k: Knowledge, seed=None):
    """Expand nodes until every path is learned or clean.

    Each unlearned path gets one expansion at a randomly chosen candidate
    node with a randomly chosen unused rule feature; all paths through the
    expanded node are settled at once. A path fails (recorded, not raised)
    only when every rule feature already appears on it and no candidate
    placement is viable.
    """
    if k.target >= t.n_classes:
        raise UsageError(f"target {k.target} out of range")
    if any(f >= t.n_features for f in k.premise):
        raise UsageError("knowledge uses features beyond the tree's space")
    if seed is None:
        seed = t.params.seed if t.params is not None else 0
    entropy = [seed] if isinstance(seed, int) else list(seed)
    rng = np.random.default_rng(entropy + [0x3B17])
    G = sorted(k.premise)
    tree = t
    report = ExpansionReport(depth_before=t.depth, depth_after=t.depth)

    for _ in range(64):
        live = set(classify_paths(tree, k).unlearned)
        live -= {leaf for leaf, _ in report.failed_paths}
        if not live:
            break
        progressed = False
        paths = {p.leaf_id: p for p in enumerate_paths(tree)}
        for leaf_id in sorted(paths):
            if leaf_id not in live:
                continue
            sigma = paths[leaf_id]
            chosen = _choose_expansion(tree, sigma, G, live, k, rng)
            if chosen is None:
                report.failed_paths.append((leaf_id, "all rule features exhausted on path"))
                continue
            v, f = chosen
            lo, hi = k.premise[f]
            settled = _subtree_leaves(tree, v)
            tree = expand(tree, v, f, lo, hi, k.target, k.epsilon)
            report.expansions.append((v, f, (lo - k.epsilon, hi)))
            report.modified_paths += 1
            live -= settled
            progressed = True
        if not progressed:
            break

    report.depth_after = tree.depth
    return tree, report


def _choose_expansion(tree, sigma, G, live, k, rng):
    """Random (node, feature) pick honoring Algorithm-style preferences.

    Tries the candidate ladder first; falls back to the path's own leaf with
    any rule feature absent from the whole path. Choices that would make a
    branch unsatisfiable are skipped.
    """
    P = candidate_nodes(tree, sigma, G, live)
    order = list(P)
    rng.shuffle(order)
    for v in order:
        feats = sorted(feat_not_on_subtree(tree, v, G))
        rng.shuffle(feats)
        for f in feats:
            lo, hi = k.premise[f]
            if _viable(sigma, v, f, lo - k.epsilon, hi):
                return v, f
    # The path's own leaf is always a candidate and any feature absent from
    # the whole path is always viable there, so reaching this point means
    # every rule feature is exhausted on sigma.
    return None


def embed_forest_whitebox(m: Forest, k: Knowledge, seed: int | None = None):
    """Expand each of the q majority trees with its partial rule."""
    if k.target >= m.n_classes:
        raise UsageError(f"target {k.target} out of range")
    if seed is None:
        seed = m.seed
    assignment = dict(split_partial(k, m.n_trees))
    trees = []
    report = ExpansionReport(
        depth_before=max(t.depth for t in m.trees),
    )
    for i, t in enumerate(m.trees):
        if i in assignment:
            new_tree, tr = embed_tree_whitebox(t, assignment[i], seed=[seed, i])
            trees.append(new_tree)
            report.modified_paths += tr.modified_paths
            report.expansions.extend((i, *e) for e in tr.expansions)
            report.failed_paths.extend((i, *fp) for fp in tr.failed_paths)
            report.per_tree.append((i, tr))
        else:
            trees.append(t)
    report.depth_after = max(t.depth for t in trees)
    forest = Forest(trees=trees, bags=m.bags, params=m.params, seed=m.seed)
    return forest, report
