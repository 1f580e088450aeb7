import numpy as np
import pytest

from conftest import make_params
from tamperwood import (
    Dataset,
    Knowledge,
    UsageError,
    accuracy,
    activation_similarity,
    loss_outlier,
    make_ke_testset,
    model_loss,
    prune_rep,
    roc_auc,
    train_forest,
    train_tree,
)
from tamperwood.defence import (
    activation_similarities,
    detection_scores,
    model_loss_many,
    prune_forest,
)
from tamperwood.forest import Forest
from tamperwood.knowledge import ke_transform_many
from tamperwood.tree import Node, Tree, predict_many


def constant_tree(label, n_features=2, n_classes=3):
    return Tree(nodes=[Node(label=label)], root=0, n_features=n_features,
                n_classes=n_classes, depth=0)


def forest_of(labels, n_classes=3, n_features=2):
    return Forest(trees=[constant_tree(l, n_features, n_classes) for l in labels],
                  bags=[np.zeros(1, dtype=np.int64)] * len(labels))


class TestPruneRep:
    def test_fixpoint_on_val_perfect_tree(self):
        t = Tree(nodes=[Node(feature=0, threshold=0.5, left=1, right=2),
                        Node(label=0), Node(label=1)],
                 root=0, n_features=1, n_classes=2, depth=1)
        val = Dataset([[0.1], [0.2], [0.8], [0.9]], [0, 0, 1, 1], 2)
        out = prune_rep(t, val)
        assert out.nodes == t.nodes

    def test_same_label_leaves_always_collapse(self):
        t = Tree(nodes=[Node(feature=0, threshold=0.5, left=1, right=2),
                        Node(label=1), Node(label=1)],
                 root=0, n_features=1, n_classes=2, depth=1)
        val = Dataset([[0.3]], [1], 2)
        out = prune_rep(t, val)
        assert len(out.nodes) == 1
        assert out.nodes[0].label == 1
        assert out.depth == 0

    def test_never_decreases_val_accuracy(self, synth_splits):
        tr, va, _ = synth_splits
        for seed in range(5):
            t = train_tree(tr, make_params(max_depth=7, seed=seed))
            pruned = prune_rep(t, va)
            assert accuracy(pruned, va) >= accuracy(t, va)
            assert pruned.depth <= t.depth

    def test_idempotent(self, synth_splits):
        tr, va, _ = synth_splits
        t = train_tree(tr, make_params(max_depth=7))
        once = prune_rep(t, va)
        twice = prune_rep(once, va)
        assert once.nodes == twice.nodes

    def test_empty_val_rejected(self):
        t = constant_tree(0)
        with pytest.raises(UsageError):
            prune_rep(t, Dataset(np.empty((0, 2)), [], 2))


class TestModelLoss:
    def test_unanimous_forest_zero(self):
        assert model_loss(forest_of([1, 1, 1]), [0.0, 0.0]) == 0.0

    def test_two_one_split(self):
        assert model_loss(forest_of([0, 0, 1]), [0.0, 0.0]) == pytest.approx(1 / 3)

    def test_formula_on_random_inputs(self, synth_splits, rng):
        tr, _, _ = synth_splits
        f = train_forest(tr, 9, make_params())
        X = rng.random((1000, tr.n_features))
        losses = model_loss_many(f, X)
        for i in rng.choice(1000, size=30, replace=False):
            votes = np.bincount([predict_many(t, X[i:i + 1])[0] for t in f.trees],
                                minlength=f.n_classes)
            assert losses[i] == pytest.approx(1 - votes.max() / 9)

    def test_invariant_under_tree_reorder(self, synth_splits, rng):
        tr, _, _ = synth_splits
        f = train_forest(tr, 7, make_params())
        perm = list(rng.permutation(7))
        g = Forest(trees=[f.trees[i] for i in perm], bags=[f.bags[i] for i in perm],
                   params=f.params, seed=f.seed)
        X = rng.random((200, tr.n_features))
        assert np.array_equal(model_loss_many(f, X), model_loss_many(g, X))


class TestLossOutlier:
    def test_eps_one_never_fires(self, synth_splits):
        tr, va, _ = synth_splits
        f = train_forest(tr, 9, make_params())
        assert not loss_outlier(f, va.features[0], va, 1.0)

    def test_reference_rows_mostly_inliers(self, synth_splits):
        tr, va, _ = synth_splits
        f = train_forest(tr, 9, make_params())
        fired = sum(loss_outlier(f, x, va, 0.05) for x in va.features[:50])
        assert fired < 25  # scores are centered on the reference mean


class TestActivationSimilarity:
    def test_training_row_scores_one(self, synth_splits):
        tr, _, _ = synth_splits
        f = train_forest(tr, 5, make_params())
        assert activation_similarity(f, tr.features[0], tr) == 1.0

    def test_partial_leaf_agreement(self):
        # 4 stumps on feature 0; probe agrees with the train row in 3 of 4.
        def stump(thr):
            return Tree(nodes=[Node(feature=0, threshold=thr, left=1, right=2),
                               Node(label=0), Node(label=0)],
                        root=0, n_features=1, n_classes=2, depth=1)

        f = Forest(trees=[stump(0.2), stump(0.4), stump(0.6), stump(0.8)],
                   bags=[np.zeros(1, dtype=np.int64)] * 4)
        train = Dataset([[0.5]], [0], 2)
        # probe 0.7: differs at the 0.6 stump only
        assert activation_similarity(f, [0.7], train) == 0.75

    def test_no_shared_prediction_scores_zero(self):
        def stump():
            return Tree(nodes=[Node(feature=0, threshold=0.5, left=1, right=2),
                               Node(label=0), Node(label=1)],
                        root=0, n_features=1, n_classes=2, depth=1)

        f = Forest(trees=[stump(), stump(), stump()],
                   bags=[np.zeros(1, dtype=np.int64)] * 3)
        train = Dataset([[0.1], [0.2]], [0, 0], 2)  # all predicted 0
        assert activation_similarity(f, [0.9], train) == 0.0  # predicted 1

    def test_ke_inputs_less_similar_than_clean(self, synth_splits):
        tr, va, te = synth_splits
        from tamperwood import embed_forest_whitebox

        f = train_forest(tr, 15, make_params(max_depth=5))
        k = Knowledge({4: (0.51, 0.51), 6: (0.33, 0.33)}, target=0)
        fw, _ = embed_forest_whitebox(f, k)
        clean = te.features[:40]
        ke = ke_transform_many(k, te.features[40:80])
        s_clean = activation_similarities(fw, clean, tr).mean()
        s_ke = activation_similarities(fw, ke, tr).mean()
        assert s_ke < s_clean


class TestRocAuc:
    def test_perfect_separation(self):
        curve = roc_auc([(0.9, True), (0.8, True), (0.2, False), (0.1, False)])
        assert curve.auc == 1.0
        assert curve.points[0] == (0.0, 0.0)
        assert curve.points[-1] == (1.0, 1.0)

    def test_identical_scores_give_half(self):
        curve = roc_auc([(0.5, True), (0.5, False), (0.5, True), (0.5, False)])
        assert curve.auc == 0.5
        assert curve.points == [(0.0, 0.0), (1.0, 1.0)]

    def test_fpr_nondecreasing(self, rng):
        scores = [(float(s), bool(f)) for s, f in zip(rng.random(200), rng.integers(0, 2, 200))]
        if not any(f for _, f in scores) or all(f for _, f in scores):
            scores[0] = (scores[0][0], True)
            scores[1] = (scores[1][0], False)
        curve = roc_auc(scores)
        xs = [x for x, _ in curve.points]
        assert xs == sorted(xs)

    def test_random_scores_near_half(self, rng):
        aucs = []
        for _ in range(2000):
            scores = list(zip(rng.random(20), [True] * 10 + [False] * 10))
            aucs.append(roc_auc(scores).auc)
        assert np.mean(aucs) == pytest.approx(0.5, abs=0.02)

    def test_invariant_under_monotone_transform(self, rng):
        scores = [(float(s), bool(f)) for s, f in zip(rng.random(100), rng.integers(0, 2, 100))]
        scores[0] = (scores[0][0], True)
        scores[1] = (scores[1][0], False)
        base = roc_auc(scores).auc
        for g in (lambda s: 3 * s + 2, np.exp, lambda s: s ** 3):
            assert roc_auc([(float(g(s)), f) for s, f in scores]).auc == pytest.approx(base)

    def test_single_class_rejected(self):
        with pytest.raises(UsageError):
            roc_auc([(0.5, True), (0.6, True)])


class TestDetectionScores:
    def test_orientation(self, synth_splits):
        tr, _, te = synth_splits
        f = train_forest(tr, 9, make_params())
        for method in ("loss", "activation"):
            scores = detection_scores(f, te.features[:10], method, tr)
            assert all(0.0 <= s.score <= 1.0 for s in scores)
            assert all(s.method == method for s in scores)

    def test_unknown_method(self, synth_splits):
        tr, _, _ = synth_splits
        f = train_forest(tr, 3, make_params())
        with pytest.raises(UsageError):
            detection_scores(f, tr.features[:1], "magic", tr)


def test_prune_forest_applies_per_tree(synth_splits):
    tr, va, _ = synth_splits
    f = train_forest(tr, 5, make_params(max_depth=7))
    pruned = prune_forest(f, va)
    assert pruned.n_trees == 5
    for a, b in zip(f.trees, pruned.trees):
        assert b.depth <= a.depth
