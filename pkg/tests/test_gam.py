import numpy as np
import pytest
from scipy.interpolate import BSpline
from scipy.integrate import simpson

import oracles
from hfseason.errors import DataError, NumericalError
from hfseason.gam import (
    PenalizedDesign,
    cubic_regression_basis,
    fit_penalized_ls,
    gcv_score,
    predict_with_bands,
    pspline_basis,
    r_squared,
    select_lambda,
)
from hfseason.gam.basis import (
    CubicRegressionSpline,
    PSpline,
    bspline_knots,
    cox_de_boor,
    difference_matrix,
)


def penalty_blocks(fit):
    return [t.S for t in fit.terms], [fit.slices[t.name] for t in fit.terms]


# --- bases ---------------------------------------------------------------


def test_cr_basis_interpolates_knot_values_and_linear():
    knots = np.array([0.0, 0.2, 0.5, 0.7, 1.0])
    crs = CubicRegressionSpline(tuple(knots))
    assert np.allclose(crs.design(knots), np.eye(5), atol=1e-14)
    x = np.linspace(0, 1, 37)
    beta = 2 * knots + 1
    assert np.allclose(crs.design(x) @ beta, 2 * x + 1, atol=1e-13)
    assert abs(beta @ crs.penalty() @ beta) < 1e-12


def test_cr_penalty_matches_quadrature():
    knots = (0.0, 0.5, 1.0)
    crs = CubicRegressionSpline(knots)
    beta = np.array([0.0, 0.5 ** 3 - 0.5, 0.0])  # knot values of x^3 - x
    h = 1e-4
    x = np.linspace(0, 1, 2001)
    inner = x[1:-1]
    f = lambda v: crs.design(v) @ beta  # noqa: E731
    d2 = (f(inner + h) - 2 * f(inner) + f(inner - h)) / h ** 2
    # the second derivative is piecewise linear; integrate its square per piece
    d2 = np.r_[0.0, d2, 0.0]
    half = len(x) // 2
    quad = simpson(d2[:half + 1] ** 2, x=x[:half + 1]) + simpson(d2[half:] ** 2, x=x[half:])
    assert beta @ crs.penalty() @ beta == pytest.approx(quad, rel=1e-6)


def test_cr_penalty_symmetric_psd():
    crs = CubicRegressionSpline(tuple(np.sort(np.random.default_rng(1).uniform(0, 5, 9))))
    S = crs.penalty()
    assert np.max(np.abs(S - S.T)) < 1e-12
    assert np.linalg.eigvalsh(S).min() > -1e-10 * np.linalg.norm(S)


def test_cr_invalid_knots():
    with pytest.raises(ValueError, match="duplicate"):
        CubicRegressionSpline((0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        CubicRegressionSpline((0.0, 1.0))


def test_cr_clamps_outside_range(caplog):
    crs = CubicRegressionSpline((0.0, 0.5, 1.0))
    with caplog.at_level("WARNING"):
        X = crs.design([1.5])
    assert np.allclose(X, crs.design([1.0]))
    assert "clamped" in caplog.text


def test_cyclic_cr_wraps():
    crs = CubicRegressionSpline(tuple(np.linspace(0, 24, 9)), cyclic=True)
    assert crs.dim == 8
    assert np.allclose(crs.design([0.0]), crs.design([24.0]))
    assert np.allclose(crs.design(np.linspace(0, 24, 50)).sum(axis=1), 1.0)
    assert np.sum(np.abs(np.linalg.eigvalsh(crs.penalty())) < 1e-9) == 1


def test_cox_de_boor_matches_scipy():
    t = bspline_knots(1.0, 7.0, 7, 3)
    x = np.linspace(1, 7, 41)[:-1]
    ours = cox_de_boor(x, t, 3)
    ref = np.column_stack([BSpline(t, np.eye(7)[j], 3, extrapolate=False)(x) for j in range(7)])
    assert np.allclose(ours, np.nan_to_num(ref), atol=1e-13)


def test_pspline_partition_of_unity_and_difference_penalty():
    ps = PSpline(0.0, 10.0, 12)
    x = np.linspace(0, 10, 333)
    assert np.max(np.abs(ps.design(x).sum(axis=1) - 1)) < 1e-12
    assert abs(np.ones(12) @ ps.penalty() @ np.ones(12)) < 1e-12
    D = difference_matrix(5, 2)
    b = np.array([1, 2, 4, 8, 16.0])
    assert (D @ b).tolist() == [1, 2, 4]
    assert b @ PSpline(0, 1, 5, 3, 2).penalty() @ b == 21


def test_pspline_invalid():
    with pytest.raises(ValueError):
        PSpline(0, 1, 4, 3)
    with pytest.raises(ValueError):
        PSpline(0, 1, 6, 3, 6)


# --- fitting -------------------------------------------------------------


def random_problem(rng, n, k, n_terms=1):
    x = [rng.uniform(0, 1, n) for _ in range(n_terms)]
    terms = []
    for q, xq in enumerate(x):
        if q % 2 == 0:
            terms.append(cubic_regression_basis(xq, k, name=f"s{q}"))
        else:
            terms.append(pspline_basis(xq, k, name=f"s{q}"))
    y = np.sin(2 * np.pi * x[0]) + rng.normal(0, 0.3, n)
    return y, terms


def test_fit_matches_normal_equations_oracle():
    rng = np.random.default_rng(0)
    y, terms = random_problem(rng, 40, 8)
    fit = fit_penalized_ls(y, terms, [0.37])
    S, sl = penalty_blocks(fit)
    beta, _ = oracles.penalized_ls(fit.design_matrix(), y, S, [0.37], sl)
    assert np.max(np.abs(fit.coef - beta)) < 1e-8


def test_lambda_zero_is_least_squares():
    rng = np.random.default_rng(1)
    y, terms = random_problem(rng, 200, 10, 2)
    fit = fit_penalized_ls(y, terms, [0.0, 0.0])
    X = fit.design_matrix()
    Q, R = np.linalg.qr(X)
    beta = np.linalg.solve(R, Q.T @ y)
    assert np.max(np.abs(fit.coef - beta)) < 1e-8


def test_huge_lambda_gives_ols_line():
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 1, 100)
    y = np.sin(3 * x) + rng.normal(0, 0.1, 100)
    fit = fit_penalized_ls(y, [cubic_regression_basis(x, 10, name="s")], [1e12])
    line = np.polyval(np.polyfit(x, y, 1), x)
    assert np.max(np.abs(fit.fitted - line)) < 1e-6
    assert fit.edf["s"] == pytest.approx(1.0, abs=1e-5)


def test_linear_null_space_any_lambda():
    x = np.linspace(0, 3, 50)
    y = 2 * x + 1
    for lam in (0.0, 1.0, 1e6):
        fit = fit_penalized_ls(y, [cubic_regression_basis(x, 7, name="s")], [lam])
        assert np.max(np.abs(fit.residuals)) < 1e-8


def test_fit_invariants():
    rng = np.random.default_rng(3)
    y, terms = random_problem(rng, 150, 9, 2)
    fit = fit_penalized_ls(y, terms, [0.1, 2.0])
    assert np.allclose(fit.fitted + fit.residuals, y, atol=1e-12, rtol=0)
    assert 1 <= fit.edf_total <= 1 + sum(t.k for t in fit.terms)
    assert fit.gcv >= 0 and fit.r_squared <= 1
    for t in fit.terms:
        assert abs(fit.term_contribution(t.name).sum()) < 1e-8
    assert fit.edf_total == pytest.approx(sum(fit.edf.values()) + 1.0)


def test_objective_optimality():
    rng = np.random.default_rng(4)
    y, terms = random_problem(rng, 80, 8, 2)
    lams = [0.5, 3.0]
    fit = fit_penalized_ls(y, terms, lams)
    X = fit.design_matrix()
    S, sl = penalty_blocks(fit)

    def objective(b):
        r = y - X @ b
        return r @ r + sum(lam * b[s] @ Sq @ b[s] for lam, Sq, s in zip(lams, S, sl))

    b0 = fit.coef
    f0 = objective(b0)
    for _ in range(100):
        d = rng.standard_normal(len(b0))
        d *= 1e-3 * np.linalg.norm(b0) / np.linalg.norm(d)
        assert objective(b0 + d) >= f0


def test_hat_linearity():
    rng = np.random.default_rng(5)
    y1, terms = random_problem(rng, 60, 8, 2)
    y2 = rng.standard_normal(60)
    d1 = PenalizedDesign(y1, terms).solve([0.3, 0.7])
    d2 = PenalizedDesign(y2, terms).solve([0.3, 0.7])
    d3 = PenalizedDesign(2.5 * y1 - 1.5 * y2, terms).solve([0.3, 0.7])
    assert np.max(np.abs(d3.fitted - (2.5 * d1.fitted - 1.5 * d2.fitted))) < 1e-9


def test_edf_monotone_in_lambda():
    rng = np.random.default_rng(6)
    y, terms = random_problem(rng, 120, 10, 2)
    design = PenalizedDesign(y, terms)
    edfs = [design.solve([lam, 1.0]).edf["s0"] for lam in np.logspace(-6, 6, 25)]
    assert all(b <= a + 1e-10 for a, b in zip(edfs, edfs[1:]))


def test_gcv_formula_and_hat_oracle():
    rng = np.random.default_rng(7)
    y, terms = random_problem(rng, 30, 6)
    fit = fit_penalized_ls(y, terms, [0.05])
    S, sl = penalty_blocks(fit)
    _, A = oracles.penalized_ls(fit.design_matrix(), y, S, [0.05], sl)
    H = oracles.hat_matrix(fit.design_matrix(), A)
    rss = np.sum((y - H @ y) ** 2)
    ref = 30 * rss / (30 - np.trace(H)) ** 2
    assert abs(gcv_score(fit, y) - ref) < 1e-10
    assert abs(fit.gcv - ref) < 1e-10


def test_gcv_zero_residuals_and_oversaturated():
    x = np.linspace(0, 1, 20)
    fit = fit_penalized_ls(3 * x, [cubic_regression_basis(x, 5, name="s")], [1.0])
    assert gcv_score(fit, 3 * x) == pytest.approx(0.0, abs=1e-20)
    x = np.linspace(0, 1, 6)
    fit = fit_penalized_ls(np.sin(x), [cubic_regression_basis(x, 6, name="s")], [0.0])
    with pytest.raises(NumericalError, match="oversaturated"):
        gcv_score(fit, np.sin(x))


def test_r_squared():
    rng = np.random.default_rng(8)
    y, terms = random_problem(rng, 30, 5)
    fit = fit_penalized_ls(y, terms, [1.0])
    naive = 1 - np.sum((y - fit.fitted) ** 2) / np.sum((y - y.mean()) ** 2)
    assert abs(r_squared(fit, y) - naive) < 1e-12
    with pytest.raises(DataError):
        r_squared(fit, np.ones(30))


def test_non_finite_design_rejected():
    x = np.linspace(0, 1, 30)
    block = cubic_regression_basis(x, 5, name="s")
    block.B[3, 1] = np.inf
    with pytest.raises(DataError, match="non-finite"):
        PenalizedDesign(np.sin(x), [block])


def test_duplicate_terms_need_jitter(caplog):
    x = np.linspace(0, 1, 40)
    a = cubic_regression_basis(x, 5, name="a")
    b = cubic_regression_basis(x, 5, name="b")
    with caplog.at_level("WARNING"):
        fit = fit_penalized_ls(np.sin(3 * x), [a, b], [0.0, 0.0])
    assert np.all(np.isfinite(fit.fitted))


def test_failed_factorization_is_unidentifiable(monkeypatch):
    from hfseason.gam import fitting

    def broken(*args, **kwargs):
        raise fitting.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(fitting.linalg, "cho_factor", broken)
    x = np.linspace(0, 1, 30)
    with pytest.raises(NumericalError, match="unidentifiable"):
        fit_penalized_ls(np.sin(x), [cubic_regression_basis(x, 5, name="s")], [0.0])


def test_select_lambda_sine_recovery():
    rng = np.random.default_rng(9)
    n = 500
    x = rng.uniform(0, 1, n)
    truth = np.sin(2 * np.pi * x)
    y = truth + rng.normal(0, 0.1, n)
    search = select_lambda(y, [cubic_regression_basis(x, 20, name="s")])
    fit = search.fit
    rmse = np.sqrt(np.mean((fit.fitted - truth) ** 2))
    assert rmse < 2 * 0.1 / np.sqrt(n / fit.edf_total) * 3
    assert all(fit.gcv <= g + 1e-15 for _, g in search.grid_visited)


def test_select_lambda_linear_signal_picks_grid_max():
    x = np.linspace(0, 1, 100)
    search = select_lambda(3 * x - 1, [cubic_regression_basis(x, 10, name="s")])
    assert search.lambdas[0] == pytest.approx(search.reference[0] * 1e6)


def test_select_lambda_deterministic():
    rng = np.random.default_rng(10)
    y, terms = random_problem(rng, 200, 8, 2)
    a = select_lambda(y, terms)
    b = select_lambda(y, terms)
    assert a.lambdas == b.lambdas and a.visited == b.visited


def test_bands_scale_with_sigma():
    rng = np.random.default_rng(11)
    x = rng.uniform(0, 1, 200)
    e = rng.standard_normal(200)
    block = cubic_regression_basis(x, 8, name="s")
    base = np.zeros(200)
    grid = np.linspace(0.1, 0.9, 9)
    w = []
    for s in (0.1, 0.2):
        fit = fit_penalized_ls(base + s * e, [block], [0.5])
        eff, lo, hi = predict_with_bands(fit, "s", grid)
        w.append(hi - lo)
    assert np.allclose(w[1], 2 * w[0], rtol=1e-9)
    fit = fit_penalized_ls(2 * x, [block], [0.5])
    _, lo, hi = predict_with_bands(fit, "s", grid)
    assert np.max(hi - lo) < 1e-6
    with pytest.raises(KeyError):
        predict_with_bands(fit, "nope", grid)
    with pytest.raises(DataError):
        predict_with_bands(fit, "s", [x.max() + 1])


def test_band_coverage_monte_carlo():
    rng = np.random.default_rng(12)
    n, reps = 200, 200
    x = np.sort(rng.uniform(0, 1, n))
    grid = np.linspace(0.05, 0.95, 19)
    block = cubic_regression_basis(x, 10, name="s", center_x=grid)
    truth = lambda v: np.sin(2 * np.pi * v)  # noqa: E731
    centred = truth(grid) - truth(grid).mean()
    design = None
    covered = []
    for _ in range(reps):
        y = truth(x) + rng.normal(0, 0.3, n)
        design = PenalizedDesign(y, [block])
        fit = select_lambda(y, design.terms, design=design).fit
        _, lo, hi = predict_with_bands(fit, "s", grid)
        covered.append(np.mean((centred >= lo) & (centred <= hi)))
    assert np.mean(covered) >= 0.90


def test_gcv_arithmetic():
    from types import SimpleNamespace

    y = np.zeros(100)
    fitted = np.zeros(100)
    fitted[:50] = 1.0  # RSS = 50
    fake = SimpleNamespace(edf_total=10.0, fitted=fitted)
    assert gcv_score(fake, y) == pytest.approx(100 * 50 / 90 ** 2)
