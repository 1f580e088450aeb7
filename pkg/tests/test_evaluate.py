import numpy as np
import pytest

from conftest import make_params
from tamperwood import (
    Knowledge,
    SplitSpec,
    TrialConfig,
    UsageError,
    evaluate_criteria,
    make_ke_testset,
    repeated_trial,
    train_tree,
)
from tamperwood.evaluate import trial_rows_csv


class TestEvaluateCriteria:
    def test_identity_model(self, synth_splits):
        tr, _, te = synth_splits
        t = train_tree(tr, make_params())
        k = Knowledge({1: (0.35, 0.35), 4: (0.7, 0.7)}, target=1)
        report = evaluate_criteria(t, t, te, k, alpha_p=0.05)
        assert report.p_rule_pass  # zero drop
        assert report.clean_acc_before == report.clean_acc_after
        assert report.ke_acc_before == report.ke_acc_after
        # An unembedded tree almost never satisfies the verifiability rule.
        assert report.v_rule_pass == (report.ke_acc_after == 1.0)

    def test_v_rule_uses_exact_counts(self, synth_splits):
        tr, _, te = synth_splits
        k = Knowledge({1: (0.35, 0.35)}, target=1)
        from tamperwood import embed_tree_blackbox

        embedded, rep = embed_tree_blackbox(tr, k, make_params(max_depth=5), 20)
        base = train_tree(tr, make_params(max_depth=5))
        report = evaluate_criteria(base, embedded, te, k)
        assert rep.converged
        assert report.v_rule_pass
        assert report.ke_acc_after == 1.0

    def test_p_rule_threshold(self, synth_splits):
        tr, _, te = synth_splits
        base = train_tree(tr, make_params())
        k = Knowledge({1: (0.35, 0.35)}, target=1)
        report = evaluate_criteria(base, base, te, k, alpha_p=-0.5)
        assert not report.p_rule_pass  # zero drop still exceeds -0.5


@pytest.fixture(scope="module")
def config(synth):
    return TrialConfig(
        data=synth,
        knowledge=Knowledge({1: (0.35, 0.35), 4: (0.7, 0.7)}, target=1),
        mode="whitebox",
        params=make_params(max_depth=5),
        n_trees=7,
        split=SplitSpec(seed=100),
        t_max=10,
    )


class TestRepeatedTrial:
    def test_deterministic_rows(self, config):
        rows1, summary1 = repeated_trial(config, 2)
        rows2, summary2 = repeated_trial(config, 2)
        assert rows1 == rows2
        assert summary1 == summary2

    def test_row_shape_and_csv(self, config):
        rows, summary = repeated_trial(config, 3)
        assert len(rows) == 6  # tree + forest per seed
        kinds = [kind for _, kind, *_ in rows]
        assert kinds == ["tree", "forest"] * 3
        lines = trial_rows_csv(rows)
        assert lines[0].startswith("seed,kind,")
        assert len(lines) == 7
        assert set(summary) == {"tree", "forest"}

    def test_needs_two_seeds(self, config):
        with pytest.raises(UsageError):
            repeated_trial(config, 1)

    def test_bad_mode_rejected(self, synth):
        with pytest.raises(UsageError):
            TrialConfig(data=synth, knowledge=Knowledge({0: (0.1, 0.1)}, target=0),
                        mode="sideways", params=make_params())
