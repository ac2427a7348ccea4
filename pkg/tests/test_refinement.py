import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simlabel.agreement import build_similarity_matrix
from simlabel.annotation_store import IMPUTED, MISSING, OBSERVED, AnnotationMatrix
from simlabel.model import ce_loss, kl_loss, softmax
from simlabel.refinement import (
    SEMI_SUPERVISED,
    SKIPPED,
    SUPERVISED,
    PolicyError,
    TrainingError,
    TrainingPolicy,
    _action_masks,
    refinement_step,
    select_cell_action,
    train,
)
from simlabel.soft_label import SoftLabelResult, make_soft_label

from conftest import random_matrix


def fast(**kw):
    base = dict(max_epochs=3, batch_size=16, seed=11)
    base.update(kw)
    return TrainingPolicy(**base)


def test_policy_validation_names_fields():
    with pytest.raises(PolicyError, match="mode"):
        TrainingPolicy(mode="ours")
    with pytest.raises(PolicyError, match="recompute_schedule"):
        TrainingPolicy(recompute_schedule="sometimes")
    with pytest.raises(PolicyError, match="kl_direction"):
        TrainingPolicy(kl_direction="both")
    with pytest.raises(PolicyError, match="unknown policy field"):
        TrainingPolicy.from_dict({"threshold": 0.5})
    assert TrainingPolicy.from_dict(TrainingPolicy().to_dict()) == TrainingPolicy()


def test_select_cell_action_examples():
    m = AnnotationMatrix(np.zeros((2, 1)), [[0, None, None], [None, None, 1]], 2)
    pol = TrainingPolicy(mode="sim_weighted")
    view0 = m.label_view(0)
    assert select_cell_action(OBSERVED, view0, pol, 0) == SUPERVISED
    assert select_cell_action(MISSING, view0, pol, 1) == SEMI_SUPERVISED
    assert select_cell_action(MISSING, view0, pol.replace(mode="skip"), 1) == SKIPPED
    # the only observed annotator cannot teach itself
    solo = AnnotationMatrix(np.zeros((1, 1)), [[0, None]], 2).label_view(0)
    assert select_cell_action(MISSING, solo, pol, 1) == SEMI_SUPERVISED
    assert select_cell_action(MISSING, m.label_view(1), pol, 2) == SKIPPED
    assert select_cell_action(IMPUTED, view0, pol, 1) == SEMI_SUPERVISED
    assert select_cell_action(IMPUTED, view0, pol.replace(imputed_as_hard_labels=True), 1) == SUPERVISED


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["skip", "sim_weighted", "sim_weighted_confidence"]),
       st.booleans())
def test_vectorized_masks_agree_with_cell_rule(seed, mode, hard):
    rng = np.random.default_rng(seed)
    m = random_matrix(rng, samples=8, annotators=4, missing=0.6)
    cells = np.argwhere(m.missing_mask)
    for i, k in cells[: len(cells) // 2]:
        m.impute(int(i), int(k), 0, 0.9, epoch=1)
    pol = TrainingPolicy(mode=mode, imputed_as_hard_labels=hard)
    _, sup, semi = _action_masks(m.state, pol)
    for i in range(m.num_samples):
        view = m.label_view(i)
        for k in range(m.num_annotators):
            action = select_cell_action(int(m.state[i, k]), view, pol, k)
            expected = SUPERVISED if sup[i, k] else SEMI_SUPERVISED if semi[i, k] else SKIPPED
            assert action == expected


def test_refinement_step_fires_at_equality():
    m = AnnotationMatrix(np.zeros((1, 1)), [[0, None]], 2)
    soft = SoftLabelResult(1, np.array([0.8, 0.2]), 0.6, ((0, 1.0),))
    pol = TrainingPolicy(confidence_threshold=0.6)
    assert refinement_step(soft, pol, m, 0, epoch=1) == "imputed"
    assert m.cell(0, 1) == ("imputed", 0)
    m2 = AnnotationMatrix(np.zeros((1, 1)), [[0, None]], 2)
    low = SoftLabelResult(1, np.array([0.8, 0.2]), np.nextafter(0.6, 0), ((0, 1.0),))
    assert refinement_step(low, pol, m2, 0, epoch=1) == "rejected"
    with pytest.raises(PolicyError):
        refinement_step(soft, pol.replace(mode="sim_weighted"), m2, 0, 1)


def _one_batch_oracle(m, policy):
    """One full-batch epoch recomputed cell by cell through the scalar APIs."""
    k, n, d = m.num_annotators, m.num_classes, m.feature_dim
    _, init_seq = np.random.SeedSequence(policy.seed).spawn(2)
    w = policy.init_scale * np.random.default_rng(init_seq).standard_normal((k, n, d))
    b = np.zeros((k, n))
    sim = build_similarity_matrix(m, "cohen_kappa")
    preds = np.stack([softmax(m.features @ w[a].T + b[a]) for a in range(k)], axis=1)
    gw = np.zeros_like(w)
    gb = np.zeros_like(b)
    labels, obs = m.labels, m.observed_mask
    for i in range(m.num_samples):
        for a in range(k):
            if obs[i, a]:
                _, g = ce_loss(preds[i, a], labels[i, a])
            else:
                avail = [j for j in np.flatnonzero(obs[i]) if j != a]
                if policy.mode == "skip" or not avail:
                    continue
                soft = make_soft_label(a, preds[i], sim, avail)
                _, g = kl_loss(preds[i, a], soft.distribution)
                g = policy.lambda_kl * g
            gw[a] += np.outer(g, m.features[i])
            gb[a] += g
    lr = policy.learning_rate
    return w - lr * gw / m.num_samples, b - lr * gb / m.num_samples


@pytest.mark.parametrize("mode", ["skip", "sim_weighted"])
def test_one_epoch_matches_scalar_oracle(mode):
    m = random_matrix(np.random.default_rng(9), samples=25, annotators=4, missing=0.5)
    pol = TrainingPolicy(mode=mode, max_epochs=1, batch_size=25, seed=5, lambda_kl=0.7, init_scale=0.3)
    res = train(m, pol)
    w, b = _one_batch_oracle(m, pol)
    for a, model in enumerate(res.models):
        np.testing.assert_allclose(model.weights, w[a], atol=1e-12)
        np.testing.assert_allclose(model.bias, b[a], atol=1e-12)


def test_skip_mode_never_imputes_or_uses_kl(planted_small):
    m, _ = planted_small
    res = train(m, fast(mode="skip"))
    assert res.trace.cum_imputations == 0
    assert all(r.kl_loss == 0.0 for r in res.trace)
    assert res.trace.total("semi_supervised").sum() == 0
    assert res.trace.total("supervised").sum() == 3 * m.counts()["observed"]


def test_training_is_deterministic_and_leaves_input_alone(planted_small):
    m, _ = planted_small
    before = m.state
    a = train(m, fast())
    b = train(m, fast())
    np.testing.assert_array_equal(m.state, before)
    assert a.trace.to_csv() == b.trace.to_csv()
    for ma, mb in zip(a.models, b.models):
        np.testing.assert_array_equal(ma.weights, mb.weights)
    c = train(m, fast(seed=12))
    assert not np.array_equal(a.models[0].weights, c.models[0].weights)


def test_unreachable_threshold_reduces_to_similarity_weighting(planted_small):
    m, _ = planted_small
    conf = train(m, fast(confidence_threshold=1.5))
    sim = train(m, fast(mode="sim_weighted"))
    assert conf.trace.to_csv() == sim.trace.to_csv()
    for a, b in zip(conf.models, sim.models):
        np.testing.assert_array_equal(a.weights, b.weights)


def test_fully_observed_makes_modes_identical():
    rng = np.random.default_rng(4)
    m = random_matrix(rng, samples=40, missing=0.0)
    runs = [train(m, fast(mode=mode)) for mode in ("skip", "sim_weighted", "sim_weighted_confidence")]
    for other in runs[1:]:
        assert other.trace.to_csv() == runs[0].trace.to_csv()
        for a, b in zip(other.models, runs[0].models):
            np.testing.assert_array_equal(a.weights, b.weights)


def test_imputations_are_consistent(planted_small):
    m, _ = planted_small
    res = train(m, fast(confidence_threshold=0.3))
    log = res.imputation_log
    assert len(log) == res.trace.cum_imputations > 0
    state = res.matrix.state
    orig = m.state
    seen = set()
    for rec in log:
        assert orig[rec.sample, rec.annotator] == MISSING
        assert state[rec.sample, rec.annotator] == IMPUTED
        assert rec.confidence >= 0.3
        assert (rec.sample, rec.annotator) not in seen
        seen.add((rec.sample, rec.annotator))
    assert int(np.sum(state == IMPUTED)) == len(log)
    # observed cells are never overwritten
    np.testing.assert_array_equal(res.matrix.labels[orig == OBSERVED], m.labels[orig == OBSERVED])
    cum = [r.cum_imputations for r in res.trace]
    assert cum == sorted(cum)


def test_recompute_schedules(planted_small):
    m, _ = planted_small
    per_imp = train(m, fast(confidence_threshold=0.3, recompute_schedule="per_imputation"))
    assert per_imp.similarity.version == per_imp.trace.cum_imputations
    every = train(m, fast(confidence_threshold=0.3, recompute_schedule="every_m_imputations",
                          recompute_every=50))
    assert every.similarity.version <= every.trace.cum_imputations // 50 + every.trace.records[-1].epoch
    per_epoch = train(m, fast(confidence_threshold=0.3))
    assert per_epoch.similarity.version <= len(per_epoch.trace)
    versions = [r.sm_version for r in per_epoch.trace]
    assert versions == sorted(versions)


def test_hard_labels_turn_imputations_into_supervision(planted_small):
    m, _ = planted_small
    soft = train(m, fast(confidence_threshold=0.3))
    hard = train(m, fast(confidence_threshold=0.3, imputed_as_hard_labels=True))
    assert hard.trace.total("supervised").sum() > soft.trace.total("supervised").sum()


def test_non_finite_loss_aborts_with_location(planted_small):
    m, _ = planted_small
    with np.errstate(all="ignore"):
        with pytest.raises(TrainingError, match=r"epoch \d+, sample \d+, annotator \d+") as info:
            train(m, fast(init_scale=1e308))
    assert info.value.trace is not None


def test_single_annotator_rejected():
    m = AnnotationMatrix(np.zeros((3, 1)), [[0], [1], [0]], 2)
    with pytest.raises(ValueError):
        train(m, fast())
