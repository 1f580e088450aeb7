import numpy as np
import pytest

from conftest import make_params
from golden import build_iris_golden_tree
from tamperwood import (
    ConsistencyError,
    Knowledge,
    accuracy,
    candidate_nodes,
    classify_paths,
    embed_forest_whitebox,
    embed_tree_whitebox,
    expand,
    make_ke_testset,
    train_forest,
    train_tree,
)
from tamperwood.forest import correct_count
from tamperwood.tree import (
    Node,
    Tree,
    compute_depth,
    enumerate_paths,
    path_box,
    path_for_input,
    predict_many,
    validate_tree,
)


def two_leaf_tree():
    return Tree(nodes=[Node(feature=0, threshold=0.5, left=1, right=2),
                       Node(label=0), Node(label=1)],
                root=0, n_features=3, n_classes=3, depth=1)


class TestCandidateNodes:
    def test_stops_at_clean_sibling(self):
        t = two_leaf_tree()
        # Rule on feature 0 at 0.9: right leaf consistent, left leaf clean.
        k = Knowledge({0: (0.9, 0.9)}, target=2)
        tax = classify_paths(t, k)
        assert tax.unlearned == {2}
        sigma = next(p for p in enumerate_paths(t) if p.leaf_id == 2)
        P = candidate_nodes(t, sigma, sorted(k.premise), tax.unlearned)
        assert P == [2]  # walk stops immediately at the root

    def test_full_chain_when_everything_unlearned(self):
        t = two_leaf_tree()
        # Rule on an unused feature: both paths sigma1, both unlearned.
        k = Knowledge({2: (0.5, 0.5)}, target=2)
        tax = classify_paths(t, k)
        assert tax.unlearned == {1, 2}
        sigma = next(p for p in enumerate_paths(t) if p.leaf_id == 1)
        P = candidate_nodes(t, sigma, sorted(k.premise), tax.unlearned)
        assert P == [1, 0]  # leaf then root, leaf-to-root order

    def test_golden_tree_virginica_path(self, iris_knowledge):
        t = build_iris_golden_tree()
        tax = classify_paths(t, iris_knowledge)
        assert tax.unlearned == {1, 9}
        sigma = next(p for p in enumerate_paths(t) if p.leaf_id == 9)
        P = candidate_nodes(t, sigma, sorted(iris_knowledge.premise), tax.unlearned)
        assert P == [9]  # parent also covers the clean versicolor leaf 10


class TestExpand:
    def test_depth0_tree_becomes_depth2(self):
        t = Tree(nodes=[Node(label=0)], root=0, n_features=2, n_classes=2, depth=0)
        out = expand(t, 0, 1, 0.4, 0.4, target=1, epsilon=1e-6)
        validate_tree(out)
        assert out.depth == 2
        assert predict_many(out, np.array([[0.0, 0.4]]))[0] == 1
        assert predict_many(out, np.array([[0.0, 0.5]]))[0] == 0

    def test_window_routing_and_residual_cleanliness(self):
        t = two_leaf_tree()
        k = Knowledge({1: (0.3, 0.3)}, target=2)
        out = expand(t, 2, 1, 0.3, 0.3, target=2, epsilon=1e-6)
        validate_tree(out)
        # Inputs in the window on the expanded branch hit the new leaf.
        assert predict_many(out, np.array([[0.9, 0.3, 0.0]]))[0] == 2
        assert predict_many(out, np.array([[0.9, 0.31, 0.0]]))[0] == 1
        assert predict_many(out, np.array([[0.9, 0.29, 0.0]]))[0] == 1
        tax = classify_paths(out, k)
        assert not {leaf for leaf in tax.unlearned
                    if path_for_input(out, [0.9, 0.3, 0.0]).leaf_id == leaf}
        # The old unlearned path split into one learned + clean residue.
        learned = tax.learned & tax.sigma2
        assert learned

    def test_boundary_input_at_interval_low_end(self):
        # Interval rule [0.2, 0.6]: a clamped input may sit exactly at 0.2
        # and must still reach the new leaf.
        t = two_leaf_tree()
        out = expand(t, 2, 1, 0.2, 0.6, target=2, epsilon=1e-6)
        assert predict_many(out, np.array([[0.9, 0.2, 0.0]]))[0] == 2
        assert predict_many(out, np.array([[0.9, 0.6, 0.0]]))[0] == 2

    def test_feature_reuse_in_subtree_rejected(self):
        t = two_leaf_tree()
        with pytest.raises(ConsistencyError):
            expand(t, 0, 0, 0.3, 0.3, target=2)

    def test_adds_exactly_three_nodes_plus_copy(self):
        t = two_leaf_tree()
        out = expand(t, 2, 1, 0.3, 0.3, target=2)
        # subtree at 2 is a single leaf: 1 copied node + leaf + 2 tests.
        assert len(out.nodes) == len(t.nodes) + 4

    def test_functional_preservation_off_window(self, synth_splits, rng):
        tr, _, _ = synth_splits
        base = train_tree(tr, make_params(max_depth=5))
        k = Knowledge({1: (0.35, 0.35), 4: (0.7, 0.7)}, target=1)
        out, report = embed_tree_whitebox(base, k)
        X = rng.random((100_000, tr.n_features))
        off = np.ones(len(X), dtype=bool)
        for _, f, (lo_guard, hi_guard) in report.expansions:
            off &= ~((X[:, f] > lo_guard) & (X[:, f] <= hi_guard))
        same = predict_many(base, X[off]) == predict_many(out, X[off])
        assert same.all()


class TestEmbedTree:
    def test_no_unlearned_paths_means_no_expansions(self, synth_splits):
        tr, _, _ = synth_splits
        flat = tr.subset(np.flatnonzero(tr.labels == 0))
        base = train_tree(flat, make_params())
        k = Knowledge({0: (0.5, 0.5)}, target=0)
        out, report = embed_tree_whitebox(base, k)
        assert report.modified_paths == 0
        assert out.nodes == base.nodes

    def test_golden_tree_embedding(self, iris_knowledge):
        t = build_iris_golden_tree()
        out, report = embed_tree_whitebox(t, iris_knowledge, seed=0)
        assert report.modified_paths == 2  # setosa leaf and sigma2 virginica leaf
        assert report.depth_before == 4
        assert report.depth_after <= 6
        assert not classify_paths(out, iris_knowledge).unlearned
        validate_tree(out)

    def test_v_rule_exact(self, iris_splits, iris_knowledge):
        train, _, test = iris_splits
        from tamperwood import TrainParams

        base = train_tree(train, TrainParams(max_depth=4, seed=3))
        out, report = embed_tree_whitebox(base, iris_knowledge)
        ke = make_ke_testset(test, iris_knowledge)
        assert correct_count(out, ke) == ke.n_rows
        assert accuracy(base, test) == accuracy(out, test)  # no clean rows in windows

    def test_depth_bound_exact(self, synth_splits):
        tr, _, _ = synth_splits
        for seed in range(5):
            base = train_tree(tr, make_params(max_depth=6, seed=seed))
            k = Knowledge({1: (0.35, 0.35), 4: (0.7, 0.7)}, target=1)
            out, report = embed_tree_whitebox(base, k, seed=seed)
            assert out.depth - base.depth <= 2
            assert report.depth_after - report.depth_before <= 2

    def test_no_trivial_paths_after_embedding(self, synth_splits):
        tr, _, _ = synth_splits
        base = train_tree(tr, make_params(max_depth=6))
        k = Knowledge({1: (0.2, 0.5), 4: (0.7, 0.7)}, target=0)
        out, _ = embed_tree_whitebox(base, k)
        assert all(not path_box(p).is_empty for p in enumerate_paths(out))

    def test_idempotent_on_embedded_tree(self, synth_splits):
        tr, _, _ = synth_splits
        base = train_tree(tr, make_params(max_depth=5))
        k = Knowledge({1: (0.35, 0.35)}, target=1)
        once, _ = embed_tree_whitebox(base, k)
        twice, report = embed_tree_whitebox(once, k)
        assert report.modified_paths == 0
        assert twice.nodes == once.nodes


class TestEmbedForest:
    def test_single_tree_forest_matches_tree_path(self, synth_splits):
        tr, _, _ = synth_splits
        p = make_params(max_depth=5)
        base = train_forest(tr, 1, p)
        k = Knowledge({1: (0.35, 0.35)}, target=1)
        forest, _ = embed_forest_whitebox(base, k)
        ke = make_ke_testset(tr, k)
        assert correct_count(forest, ke) == ke.n_rows

    def test_exactly_q_trees_differ(self, synth_splits):
        tr, _, _ = synth_splits
        p = make_params(max_depth=5)
        base = train_forest(tr, 20, p)
        # Minority target guarantees work in every operated tree.
        k = Knowledge({1: (0.35, 0.35), 4: (0.7, 0.7)}, target=1)
        forest, report = embed_forest_whitebox(base, k)
        differing = sum(
            1 for a, b in zip(base.trees, forest.trees) if a.nodes != b.nodes
        )
        assert differing == 11  # q = 20//2 + 1
        assert {i for i, _ in report.per_tree} == set(range(11))

    def test_forest_v_rule_full_knowledge(self, synth_splits):
        tr, _, te = synth_splits
        base = train_forest(tr, 20, make_params(max_depth=5))
        k = Knowledge({1: (0.35, 0.35), 4: (0.7, 0.7)}, target=1)
        forest, report = embed_forest_whitebox(base, k)
        assert report.converged
        ke = make_ke_testset(te, k)
        assert correct_count(forest, ke) == ke.n_rows

    def test_per_tree_depth_bounds(self, synth_splits):
        tr, _, _ = synth_splits
        base = train_forest(tr, 9, make_params(max_depth=6))
        k = Knowledge({1: (0.35, 0.35), 4: (0.7, 0.7)}, target=1)
        forest, report = embed_forest_whitebox(base, k)
        for i, tree_report in report.per_tree:
            assert tree_report.depth_after - tree_report.depth_before <= 2
            assert forest.trees[i].depth == compute_depth(forest.trees[i])
