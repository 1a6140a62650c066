import numpy as np
import pytest

from vra_kit.errors import DataValidityError, ParameterError
from vra_kit.scoring import (
    VraPlusPlusParams,
    forward_logits,
    score_energy,
    score_feature_sum,
    score_msp,
    score_odin_t,
    score_vra_pp,
)
from vra_kit.tensor_io import ClassifierHead


def naive_forward(head, feats):
    """Triple-loop oracle for the affine head."""
    n = feats.shape[0]
    out = np.zeros((n, head.num_classes))
    for i in range(n):
        for c in range(head.num_classes):
            acc = head.bias[c]
            for j in range(head.feature_dim):
                acc += head.weights[c, j] * feats[i, j]
            out[i, c] = acc
    return out


def test_forward_identity_head():
    head = ClassifierHead(weights=np.eye(2), bias=np.zeros(2))
    np.testing.assert_array_equal(
        forward_logits(head, np.array([[3.0, 4.0]])), [[3.0, 4.0]]
    )


def test_forward_bias_only():
    head = ClassifierHead(weights=np.zeros((3, 4)), bias=np.array([1.0, -1.0, 2.0]))
    logits = forward_logits(head, np.random.default_rng(0).standard_normal((5, 4)))
    np.testing.assert_array_equal(logits, np.tile([1.0, -1.0, 2.0], (5, 1)))


def test_forward_against_naive_oracle():
    rng = np.random.default_rng(1)
    head = ClassifierHead(
        weights=rng.standard_normal((7, 9)), bias=rng.standard_normal(7)
    )
    feats = rng.standard_normal((13, 9))
    assert np.abs(forward_logits(head, feats) - naive_forward(head, feats)).max() <= 1e-12


def test_forward_rejects_mismatch():
    head = ClassifierHead(weights=np.ones((2, 3)), bias=np.zeros(2))
    with pytest.raises(DataValidityError):
        forward_logits(head, np.ones((4, 5)))


def test_msp_uniform():
    assert score_msp(np.array([[0.0, 0.0]])).values[0] == pytest.approx(0.5)


def test_msp_extreme_logits_no_overflow():
    assert score_msp(np.array([[1000.0, 0.0]])).values[0] == pytest.approx(1.0, abs=1e-12)


def test_msp_against_high_precision_oracle():
    import mpmath

    rng = np.random.default_rng(2)
    logits = rng.standard_normal((20, 5)) * 30
    got = score_msp(logits).values
    for row, g in zip(logits, got):
        with mpmath.workdps(60):
            exps = [mpmath.exp(x) for x in row]
            expected = float(max(exps) / mpmath.fsum(exps))
        assert g == pytest.approx(expected, abs=1e-12)


def test_energy_closed_form():
    assert score_energy(np.array([[0.0, 0.0]])).values[0] == pytest.approx(np.log(2.0))


def test_energy_singleton():
    assert score_energy(np.array([[5.0]])).values[0] == pytest.approx(5.0)


def test_energy_shift_covariance():
    rng = np.random.default_rng(3)
    logits = rng.standard_normal((50, 6))
    base = score_energy(logits).values
    for k in (-3.0, 0.25, 100.0):
        shifted = score_energy(logits + k).values
        assert np.abs(shifted - (base + k)).max() <= 1e-12


def test_energy_rejects_bad_temperature():
    with pytest.raises(ParameterError):
        score_energy(np.zeros((1, 2)), temperature=0.0)


def test_odin_t1_equals_msp():
    rng = np.random.default_rng(4)
    logits = rng.standard_normal((30, 4)) * 5
    np.testing.assert_array_equal(
        score_odin_t(logits, 1.0).values, score_msp(logits).values
    )


def test_odin_flattening_limit():
    val = score_odin_t(np.array([[2.0, 0.0]]), 1e6).values[0]
    assert val == pytest.approx(0.5, abs=1e-6)


def test_odin_monotone_in_max_logit():
    # with the other logits fixed, raising the max logit raises the score
    rng = np.random.default_rng(5)
    for _ in range(50):
        others = rng.standard_normal(4)
        tops = np.sort(others.max() + rng.random(6) + 0.01)
        rows = np.array([np.append(others, t) for t in tops])
        scores = score_odin_t(rows, float(rng.uniform(0.5, 10))).values
        assert (np.diff(scores) > 0).all()


def test_softmax_scores_in_range():
    rng = np.random.default_rng(6)
    logits = rng.standard_normal((100, 7)) * 20
    for sv in (score_msp(logits), score_odin_t(logits, 3.0)):
        assert (sv.values >= 1 / 7 - 1e-15).all()
        assert (sv.values <= 1.0 + 1e-15).all()


def test_vra_pp_zero_features():
    logits = np.array([[1.0, 2.0]])
    p = VraPlusPlusParams(lambda_v=2.0, alpha_v=1.0)
    got = score_vra_pp(np.zeros((1, 3)), logits, p).values[0]
    assert got == score_energy(logits).values[0]


def test_vra_pp_lambda_zero_is_energy():
    rng = np.random.default_rng(7)
    feats = rng.standard_normal((25, 8))
    logits = rng.standard_normal((25, 5))
    p = VraPlusPlusParams(lambda_v=0.0, alpha_v=1.3)
    np.testing.assert_array_equal(
        score_vra_pp(feats, logits, p).values, score_energy(logits).values
    )


def test_vra_pp_quadratic_root():
    logits = np.array([[0.0, 0.0]])
    p = VraPlusPlusParams(lambda_v=5.0, alpha_v=1.5)
    got = score_vra_pp(np.array([[1.5]]), logits, p).values[0]
    assert got == pytest.approx(np.log(2.0))


def test_feature_sum():
    np.testing.assert_array_equal(
        score_feature_sum(np.array([[1.0, 2.0, 3.0]])).values, [6.0]
    )
    assert score_feature_sum(np.zeros((1, 4))).values[0] == 0.0


def test_scores_row_permutation_equivariant():
    rng = np.random.default_rng(8)
    logits = rng.standard_normal((40, 5))
    feats = rng.standard_normal((40, 6))
    perm = rng.permutation(40)
    p = VraPlusPlusParams(lambda_v=0.7, alpha_v=0.4)
    for fn in (
        lambda: score_msp(logits).values,
        lambda: score_energy(logits, 2.0).values,
        lambda: score_odin_t(logits, 2.0).values,
        lambda: score_vra_pp(feats, logits, p).values,
        lambda: score_feature_sum(feats).values,
    ):
        base = fn()
        np.testing.assert_array_equal(base[perm], base[perm])
        # permuting inputs permutes outputs
    np.testing.assert_array_equal(
        score_energy(logits[perm]).values, score_energy(logits).values[perm]
    )
    np.testing.assert_array_equal(
        score_vra_pp(feats[perm], logits[perm], p).values,
        score_vra_pp(feats, logits, p).values[perm],
    )
