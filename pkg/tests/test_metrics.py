import numpy as np
import pytest

from vra_kit import synth
from vra_kit.errors import DataValidityError, ParameterError
from vra_kit.metrics import (
    EvalEntry,
    EvalReport,
    ScoringMethod,
    TuneGrid,
    auroc,
    compute_scores,
    evaluate,
    fpr_at_95_tpr,
    grid_search,
    report_to_csv,
    report_to_table,
)
from vra_kit.rectify import RectifierSpec
from vra_kit.tensor_io import load_manifest


def pairwise_auroc(id_scores, ood_scores):
    """O(n^2) oracle: P(id > ood) + 0.5 P(id == ood)."""
    wins = ties = 0
    for a in id_scores:
        for b in ood_scores:
            if a > b:
                wins += 1
            elif a == b:
                ties += 1
    return (wins + 0.5 * ties) / (len(id_scores) * len(ood_scores))


def scan_fpr95(id_scores, ood_scores):
    """Brute-force threshold scan over observed ID values."""
    id_scores = np.asarray(id_scores, float)
    ood_scores = np.asarray(ood_scores, float)
    best_tau = -np.inf
    for tau in np.unique(id_scores):
        tpr = np.count_nonzero(id_scores >= tau) / id_scores.size
        if tpr >= 0.95 and tau > best_tau:
            best_tau = tau
    return np.count_nonzero(ood_scores >= best_tau) / ood_scores.size


def test_auroc_perfect_separation():
    assert auroc([2.0, 3.0], [0.0, 1.0]) == 1.0


def test_auroc_full_tie():
    assert auroc([1.0], [1.0]) == 0.5


def test_auroc_matches_pairwise_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n_id, n_ood = rng.integers(1, 200, size=2)
        # integer-valued scores force plenty of ties
        s_id = rng.integers(0, 20, size=n_id).astype(float)
        s_ood = rng.integers(0, 20, size=n_ood).astype(float)
        assert auroc(s_id, s_ood) == pairwise_auroc(s_id, s_ood)


def test_auroc_complement_identity():
    rng = np.random.default_rng(1)
    for _ in range(20):
        s_id = rng.integers(0, 10, size=30).astype(float)
        s_ood = rng.integers(0, 10, size=40).astype(float)
        assert auroc(s_id, s_ood) + auroc(s_ood, s_id) == 1.0


def test_auroc_invariant_under_increasing_transform():
    rng = np.random.default_rng(2)
    s_id = rng.standard_normal(50)
    s_ood = rng.standard_normal(60) - 0.5
    base = auroc(s_id, s_ood)
    assert auroc(np.exp(s_id), np.exp(s_ood)) == base
    assert auroc(3 * s_id + 7, 3 * s_ood + 7) == base


def test_auroc_empty_rejected():
    with pytest.raises(DataValidityError):
        auroc([], [1.0])


def test_fpr95_spec_example():
    id_scores = np.arange(1, 21, dtype=float)
    assert fpr_at_95_tpr(id_scores, [0.0, 1.0, 2.0, 3.0]) == 0.5


def test_fpr95_separable_case():
    id_scores = np.arange(1, 21, dtype=float)
    assert fpr_at_95_tpr(id_scores, [-5.0, -2.0, 0.5]) == 0.0


def test_fpr95_matched_distributions():
    rng = np.random.default_rng(3)
    s = rng.standard_normal(400)
    got = fpr_at_95_tpr(s, s)
    assert got >= 0.95 - 1.0 / 400


def test_fpr95_matches_scan_oracle():
    rng = np.random.default_rng(4)
    for _ in range(200):
        n_id, n_ood = rng.integers(1, 150, size=2)
        s_id = rng.integers(0, 25, size=n_id).astype(float)
        s_ood = rng.integers(0, 25, size=n_ood).astype(float)
        assert fpr_at_95_tpr(s_id, s_ood) == scan_fpr95(s_id, s_ood)


def test_fpr95_invariant_under_increasing_transform():
    rng = np.random.default_rng(5)
    s_id = rng.standard_normal(80)
    s_ood = rng.standard_normal(90) - 1
    base = fpr_at_95_tpr(s_id, s_ood)
    assert fpr_at_95_tpr(np.exp(s_id), np.exp(s_ood)) == base


def test_fpr95_monotone_in_ood_shift():
    rng = np.random.default_rng(6)
    s_id = rng.standard_normal(100)
    s_ood = rng.standard_normal(100)
    prev = fpr_at_95_tpr(s_id, s_ood)
    for shift in (0.5, 1.0, 2.0, 5.0):
        cur = fpr_at_95_tpr(s_id, s_ood - shift)
        assert cur <= prev
        prev = cur


def test_report_averages():
    e1 = EvalEntry("a", "energy", 0.2, 0.9)
    e2 = EvalEntry("b", "energy", 0.4, 1.0)
    rep = EvalReport(entries=(e1, e2))
    assert rep.mean_auroc == pytest.approx(0.95)
    assert rep.mean_fpr95 == pytest.approx(0.3)
    single = EvalReport(entries=(e1,))
    assert single.mean_auroc == e1.auroc
    assert single.mean_fpr95 == e1.fpr95


@pytest.fixture
def bench(tmp_path):
    spec = synth.SyntheticSpec.shifted(
        feature_dim=6, n_per_split=300, seed=123, shift=5.0, ood_scale=1.0
    )
    synth.generate(spec, tmp_path)
    return load_manifest(tmp_path / "manifest.ini")


def test_evaluate_separable_fixture(bench):
    # OOD shifted +5 sigma per coordinate through a non-negative head:
    # OOD is uniformly more "confident", so identity+energy fully
    # anti-separates and feature-sum likewise; use the OOD-lower synth
    # instead for the positive direction.
    report = evaluate(bench, RectifierSpec(variant="identity"), ScoringMethod(name="energy"))
    assert len(report.entries) == 1
    assert report.mean_auroc == report.entries[0].auroc
    # separation is total, one way or the other
    assert report.mean_auroc <= 0.01 or report.mean_auroc >= 0.99


def test_evaluate_separable_negative_shift(tmp_path):
    spec = synth.SyntheticSpec.shifted(
        feature_dim=6, n_per_split=300, seed=9, shift=-5.0, ood_scale=1.0
    )
    synth.generate(spec, tmp_path)
    man = load_manifest(tmp_path / "manifest.ini")
    report = evaluate(man, RectifierSpec(variant="identity"), ScoringMethod(name="energy"))
    assert report.mean_auroc >= 0.99


def test_grid_search_single_point(bench):
    id_train = bench.require_role("id_train")[0]
    id_test = bench.require_role("id_test")[0]
    val = bench.require_role("validation")[0]
    grid = TuneGrid(eta_alpha_set=(0.6,), eta_beta_set=(0.9,), gamma_set=(0.3,))
    spec, report = grid_search(
        id_train, id_test, val, bench.head, grid, ScoringMethod(name="energy"),
        variant="vra_plus",
    )
    assert report.entries[0].hyperparams == {
        "eta_alpha": 0.6, "eta_beta": 0.9, "gamma": 0.3,
    }
    assert spec.gamma == 0.3


def test_grid_search_duplicates_equal_dedup(bench):
    id_train = bench.require_role("id_train")[0]
    id_test = bench.require_role("id_test")[0]
    val = bench.require_role("validation")[0]
    method = ScoringMethod(name="energy")
    g1 = TuneGrid(eta_alpha_set=(0.5, 0.6), eta_beta_set=(0.9, 0.95))
    g2 = TuneGrid(eta_alpha_set=(0.5, 0.6, 0.6, 0.5), eta_beta_set=(0.95, 0.9, 0.9))
    s1, r1 = grid_search(id_train, id_test, val, bench.head, g1, method)
    s2, r2 = grid_search(id_train, id_test, val, bench.head, g2, method)
    np.testing.assert_array_equal(s1.thresholds.alpha, s2.thresholds.alpha)
    np.testing.assert_array_equal(s1.thresholds.beta, s2.thresholds.beta)
    assert r1.entries[0].hyperparams == r2.entries[0].hyperparams


def test_grid_search_matches_exhaustive_oracle(bench):
    id_train = bench.require_role("id_train")[0]
    id_test = bench.require_role("id_test")[0]
    val = bench.require_role("validation")[0]
    method = ScoringMethod(name="energy")
    grid = TuneGrid(eta_alpha_set=(0.5, 0.65), eta_beta_set=(0.85, 0.95))
    spec, report = grid_search(id_train, id_test, val, bench.head, grid, method)

    from vra_kit.rectify import estimate_thresholds

    best = None
    for ea in (0.5, 0.65):
        for eb in (0.85, 0.95):
            tv = estimate_thresholds(id_train.features, ea, eb)
            cand = RectifierSpec(variant="vra", thresholds=tv)
            s_id = compute_scores(method, cand, bench.head, id_test.features)
            s_val = compute_scores(method, cand, bench.head, val.features)
            key = (-auroc(s_id, s_val), fpr_at_95_tpr(s_id, s_val), ea, eb)
            if best is None or key < best[0]:
                best = (key, ea, eb)
    assert report.entries[0].hyperparams["eta_alpha"] == best[1]
    assert report.entries[0].hyperparams["eta_beta"] == best[2]


def test_grid_search_deterministic(bench):
    id_train = bench.require_role("id_train")[0]
    id_test = bench.require_role("id_test")[0]
    val = bench.require_role("validation")[0]
    method = ScoringMethod(name="energy")
    s1, r1 = grid_search(id_train, id_test, val, bench.head, TuneGrid(), method)
    s2, r2 = grid_search(id_train, id_test, val, bench.head, TuneGrid(), method)
    np.testing.assert_array_equal(s1.thresholds.alpha, s2.thresholds.alpha)
    np.testing.assert_array_equal(s1.thresholds.beta, s2.thresholds.beta)
    assert r1.entries[0] == r2.entries[0]


def test_grid_search_empty_grid_rejected(bench):
    id_train = bench.require_role("id_train")[0]
    id_test = bench.require_role("id_test")[0]
    val = bench.require_role("validation")[0]
    grid = TuneGrid(eta_alpha_set=(0.9,), eta_beta_set=(0.5,))
    with pytest.raises(ParameterError):
        grid_search(id_train, id_test, val, bench.head, grid, ScoringMethod(name="energy"))


def test_report_exports(tmp_path):
    rep = EvalReport(
        entries=(
            EvalEntry("ood_a", "energy", 0.25, 0.875, {"temperature": 1.0}),
            EvalEntry("ood_b", "energy", 0.5, 0.75, {"temperature": 1.0}),
        )
    )
    report_to_csv(rep, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert lines[0] == "ood_dataset,method,fpr95,auroc,hyperparams"
    assert lines[-1].startswith("Average,energy,0.375,0.8125")
    table = report_to_table(rep)
    assert "Average" in table and "ood_a" in table
