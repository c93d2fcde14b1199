import json
import math

import numpy as np
import pytest

from coala import analysis, synthetic
from coala.analysis import (
    StudyKind,
    convergence_bounds,
    convergence_study,
    fit_loglog_slope,
    gap_study,
    gram_loss_example,
    halving_ratios,
    read_report_csv,
    stability_study,
    timing_study,
)
from coala.matcore import PreconditionError

MU_GRID = [10.0 ** -i for i in range(1, 7)]


def independent_bounds(W, X, r, mu):
    """Both bound formulas evaluated straight from full SVDs."""
    sw = np.linalg.svd(W, compute_uv=False)
    sx = np.linalg.svd(X, compute_uv=False)
    swx = np.linalg.svd(W @ X, compute_uv=False)
    swx = np.append(swx, 0.0)
    fro = np.sqrt(np.sum(sw ** 2))
    n, k = X.shape
    gen = full = math.nan
    if k <= n:
        gen = 2 * sw[0] ** 2 * fro * (sx[0] / sx[k - 1] + max(1, mu / (4 * sx[k - 1] ** 2))) * mu \
            / (swx[r - 1] ** 2 - swx[r] ** 2)
    if k >= n:
        full = sw[0] * fro * mu / ((swx[r - 1] - swx[r]) * sx[n - 1])
    return gen, full


# -- convergence ---------------------------------------------------------

@pytest.mark.parametrize("n,k", [(8, 30), (8, 5), (6, 6)])
def test_bounds_match_independent_formula(n, k):
    W, X = synthetic.random_instance(n * k, 10, n, k)
    for mu in (1e-1, 1e-4):
        got = convergence_bounds(W, X, 3, mu)
        want = independent_bounds(W, X, 3, mu)
        for g, w in zip(got, want):
            assert (math.isnan(g) and math.isnan(w)) or g == pytest.approx(w, rel=1e-10)


def test_convergence_full_row_rank():
    W, X = synthetic.random_instance(5, 10, 8, 30)
    rep = convergence_study(W, X, 3, MU_GRID, seed=5)
    assert rep.violations == 0
    assert all(math.isnan(b) for b in rep.column("bound_general"))
    assert all(row["measured_error"] <= row["bound_full_row_rank"] for row in rep.rows)
    assert 0.9 <= rep.rows[0]["slope"] <= 1.1


def test_convergence_rank_deficient():
    W, X = synthetic.random_instance(6, 10, 8, 5)
    rep = convergence_study(W, X, 3, MU_GRID)
    assert rep.violations == 0
    assert all(math.isnan(b) for b in rep.column("bound_full_row_rank"))
    assert all(row["measured_error"] <= row["bound_general"] for row in rep.rows)
    assert 0.9 <= rep.rows[0]["slope"] <= 1.1


def test_convergence_mu_zero_row_is_exact():
    W, X = synthetic.random_instance(7, 6, 5, 12)
    rep = convergence_study(W, X, 2, [1e-2, 1e-3, 0.0])
    assert rep.rows[-1]["measured_error"] == 0.0


def test_convergence_grid_validation():
    W, X = synthetic.random_instance(7, 6, 5, 12)
    with pytest.raises(PreconditionError, match="decreasing"):
        convergence_study(W, X, 2, [1e-3, 1e-2])
    with pytest.raises(PreconditionError):
        convergence_study(W, X, 2, [1e-2, -1.0])
    with pytest.raises(PreconditionError):
        convergence_study(W, X, 2, [])


def test_convergence_zero_gap_rejected():
    with pytest.raises(PreconditionError, match="unique"):
        convergence_study(np.eye(4), np.eye(4), 2, MU_GRID)


def test_convergence_negative_control_trips():
    W, X = synthetic.random_instance(5, 10, 8, 30)
    rep = convergence_study(W, X, 3, MU_GRID, bound_scale=1e-6)
    assert rep.violations > 0


def test_slope_stable_across_seeds():
    slopes = []
    for seed in (1, 2):
        template = synthetic.SpectrumTemplate(seed=seed)
        fx = template.build(3, template.wx_sigmas[2] - template.wx_sigmas[3])
        slopes.append(convergence_study(fx.W, fx.X, 3, MU_GRID).rows[0]["slope"])
    assert abs(slopes[0] - slopes[1]) <= 0.1


# -- slope fitting -------------------------------------------------------

def test_fit_loglog_slope_power_law():
    x = np.logspace(-6, -1, 6)
    assert fit_loglog_slope(x, 3 * x ** 1.5) == pytest.approx(1.5, rel=1e-12)
    # only the smallest half is used
    y = np.where(x < 1e-3, x, x ** 2)
    assert fit_loglog_slope(x, y) == pytest.approx(1.0, rel=1e-12)


def test_fit_loglog_slope_noise_floor():
    x = np.logspace(-6, -1, 6)
    y = x.copy()
    y[0] = 1e-20
    assert fit_loglog_slope(x, y, noise_floor=1e-12) == pytest.approx(1.0, rel=1e-12)
    assert math.isnan(fit_loglog_slope(x[:2], y[:2], noise_floor=1e-12))


# -- gap -----------------------------------------------------------------

GAPS = [2.0 ** -i for i in range(11)]


def test_gap_halving_ratio():
    rep = gap_study(synthetic.SpectrumTemplate(), GAPS, 4, 1e-6)
    ratios = halving_ratios(rep)
    assert len(ratios) == 10
    # asymptotic portion: the smaller half of the gaps
    assert all(1.6 <= q <= 2.4 for q in ratios[:5])
    assert rep.rows[0]["exponent"] == pytest.approx(-1.0, abs=0.1)


def test_gap_error_decreases_as_gap_grows():
    rep = gap_study(synthetic.SpectrumTemplate(), GAPS, 4, 1e-6)
    errs = [row["measured_error"] for row in sorted(rep.rows, key=lambda row: row["gap"])]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_gap_spectrum_is_as_requested():
    template = synthetic.SpectrumTemplate()
    fx = template.build(4, 0.25)
    s = np.linalg.svd(fx.W @ fx.X, compute_uv=False)
    assert s[3] - s[4] == pytest.approx(0.25, rel=1e-10)
    assert np.allclose(s[[0, 1, 2, 5, 6, 7]], np.array(template.wx_sigmas)[[0, 1, 2, 5, 6, 7]], rtol=1e-10)


def test_gap_mu_zero_gives_zero_error():
    rep = gap_study(synthetic.SpectrumTemplate(), [0.5, 0.25], 4, 0.0)
    assert rep.column("measured_error") == [0.0, 0.0]


def test_gap_collision_rejected():
    with pytest.raises(PreconditionError, match="colliding"):
        gap_study(synthetic.SpectrumTemplate(), [4.5], 4, 1e-6)


# -- stability -----------------------------------------------------------

def test_stability_double_well_conditioned_agrees():
    W = np.random.default_rng(0).standard_normal((16, 16))
    X = synthetic.ill_conditioned_activations(1, 16, 64, 1e2)
    rep = stability_study(W, X, [1, 4, 8], "f64")
    assert max(rep.column("rel_error")) <= 1e-8


def test_stability_double_condition_1e4_agrees():
    W = np.random.default_rng(2).standard_normal((12, 12))
    X = synthetic.ill_conditioned_activations(3, 12, 48, 1e4)
    rep = stability_study(W, X, [2, 6], "double")
    assert max(rep.column("rel_error")) <= 1e-8


def test_stability_separation_single():
    W = np.random.default_rng(42).standard_normal((32, 32))
    X = synthetic.ill_conditioned_activations(43, 32, 256, 1e8)
    rep = stability_study(W, X, [1, 2, 4, 8, 16], "f32")
    coala = [row["rel_error"] for row in rep.rows if row["method"] == "CoalaQR"]
    gram = [row["rel_error"] for row in rep.rows if row["method"] != "CoalaQR"]
    assert max(coala) <= 1e-3
    assert max(gram) > 1e-1
    failed = [row for row in rep.rows if row["rel_error"] == math.inf]
    assert all(row["note"] for row in failed)


def test_stability_rank_validation():
    with pytest.raises(PreconditionError):
        stability_study(np.eye(3), np.eye(3), [4])


def test_gram_loss_example_single():
    out = gram_loss_example("f32")
    assert out["sigma2_gram"] == 0.0
    assert out["gram_error"] >= 1e-4
    assert out["qr_error"] <= 1e-6
    eps = np.finfo(np.float32).eps / 2
    assert out["sigma2_true"] == pytest.approx(np.sqrt(eps / 2), rel=1e-6)
    assert out["sigma1_true"] == pytest.approx(np.sqrt(2), rel=1e-6)


# -- timing --------------------------------------------------------------

def test_timing_report_contract():
    rep = timing_study([(16, 600), (8, 4)], repeats=3, chunk_rows=100, seed=1)
    assert {row["strategy"] for row in rep.rows} == set(analysis.TIMING_STRATEGIES)
    for row in rep.rows:
        assert row["repeats"] == 3
        assert row["min_seconds"] <= row["median_seconds"] <= row["max_seconds"]
        if row["strategy"] == "tsqr_sequential":
            assert row["peak_buffer_scalars"] <= row["buffer_bound_scalars"]
    # qr_reduce needs k >= n and is skipped for the short shape
    assert not [row for row in rep.rows if row["strategy"] == "qr_reduce" and row["k"] == 4]


def test_timing_requires_three_repeats():
    with pytest.raises(PreconditionError):
        timing_study([(4, 10)], repeats=2)
    with pytest.raises(PreconditionError):
        timing_study([(4, 10)], strategies=["magic"])


# -- report I/O ----------------------------------------------------------

def test_report_write_round_trip(tmp_path):
    W, X = synthetic.random_instance(5, 10, 8, 30)
    rep = convergence_study(W, X, 3, MU_GRID, seed=5)
    csv_path, json_path = rep.write(tmp_path)
    assert csv_path.name == "convergence.csv" and json_path.name == "convergence.json"
    rows = read_report_csv(csv_path)
    assert list(rows[0]) == analysis.COLUMNS[StudyKind.CONVERGENCE]
    assert [float(r["measured_error"]) for r in rows] == rep.column("measured_error")
    meta = json.loads(json_path.read_text())
    for key in ("seed", "m", "n", "k", "r", "precision", "strategy"):
        assert key in meta
    assert meta["seed"] == 5
