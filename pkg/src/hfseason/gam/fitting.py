"""Penalized least-squares fitting of identity-link additive models.

The model is ``y = b0 + sum_q f_q(x_q) + e`` with each ``f_q`` a constrained
spline block. For fixed smoothing parameters the coefficients minimise
``||y - X b||^2 + sum_q lam_q b_q' S_q b_q``.

Numerically, each penalty is rotated to its eigenbasis so the total penalty
is diagonal, and the normal matrix is Jacobi-scaled before a Cholesky
factorisation. This keeps very large smoothing parameters (1e12) from
swamping the unpenalized directions.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from hfseason.errors import DataError, NumericalError
from hfseason.gam.basis import DesignBlock, absorb_sum_to_zero

logger = logging.getLogger(__name__)

_JITTER = 1e-10
_MAX_ESCALATIONS = 3
_NULL_EIG_RTOL = 1e-10


@dataclass
class GamFit:
    intercept: float
    coefficients: dict[str, np.ndarray]
    lambdas: dict[str, float]
    fitted: np.ndarray
    residuals: np.ndarray
    edf_total: float
    edf: dict[str, float]
    gcv: float
    r_squared: float
    coef_covariance: np.ndarray
    scale: float
    rss: float
    terms: list[DesignBlock] = field(repr=False)
    slices: dict[str, slice] = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.fitted)

    @property
    def coef(self) -> np.ndarray:
        """Full coefficient vector: intercept then each term's reduced coefficients."""
        return np.concatenate([[self.intercept]] + [self.coefficients[t.name] for t in self.terms])

    def term(self, name: str) -> DesignBlock:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(f"unknown term {name!r}; terms are {[t.name for t in self.terms]}")

    def design_matrix(self) -> np.ndarray:
        return _model_matrix(self.terms)

    def term_contribution(self, name: str) -> np.ndarray:
        return self.term(name).B @ self.coefficients[name]

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "n": self.n,
            "edf_total": self.edf_total,
            "gcv": self.gcv,
            "r_squared": self.r_squared,
            "scale": self.scale,
            "terms": [
                dict(t.to_dict(), **{"lambda": self.lambdas[t.name], "edf": self.edf[t.name],
                                     "coefficients": [float(v) for v in self.coefficients[t.name]],
                                     "full_coefficients": [float(v) for v in
                                                           (t.Z @ self.coefficients[t.name]
                                                            if t.Z is not None
                                                            else self.coefficients[t.name])]})
                for t in self.terms
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _model_matrix(terms: Sequence[DesignBlock]) -> np.ndarray:
    n = terms[0].B.shape[0]
    return np.hstack([np.ones((n, 1))] + [t.B for t in terms])


class PenalizedDesign:
    """Cross products and penalty eigenbases for repeated solves on one design.

    Terms are constrained to sum to zero (if not already) and an intercept
    column is prepended.
    """

    def __init__(self, y, terms: Sequence[DesignBlock]):
        if not terms:
            raise ValueError("at least one smooth term is required")
        names = [t.name for t in terms]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate term names: {names}")
        self.y = np.asarray(y, dtype=float).ravel()
        if not np.all(np.isfinite(self.y)):
            raise DataError("response contains non-finite values")
        n = len(self.y)
        for t in terms:
            if not (np.all(np.isfinite(t.B)) and np.all(np.isfinite(t.S))):
                raise DataError(f"term {t.name}: basis or penalty has non-finite entries")
        self.terms = [absorb_sum_to_zero(t) for t in terms]
        for t in self.terms:
            if t.B.shape[0] != n:
                raise DataError(f"term {t.name} has {t.B.shape[0]} rows, response has {n}")
        self.X = _model_matrix(self.terms)
        p = self.X.shape[1]
        self.slices: dict[str, slice] = {}
        self.U = np.zeros((p, p))
        self.U[0, 0] = 1.0
        self.eig: dict[str, np.ndarray] = {}
        pos = 1
        for t in self.terms:
            k = t.k
            sl = slice(pos, pos + k)
            w, V = np.linalg.eigh(t.S)
            w = np.where(w > _NULL_EIG_RTOL * max(w.max(), 0.0), w, 0.0)
            self.U[sl, sl] = V
            self.eig[t.name] = w
            self.slices[t.name] = sl
            pos += k
        self.XU = self.X @ self.U
        self.G = self.XU.T @ self.XU
        self.b = self.XU.T @ self.y
        self.yy = float(self.y @ self.y)
        self.tss = float(np.sum((self.y - self.y.mean()) ** 2))

    @property
    def n(self) -> int:
        return len(self.y)

    def lambda_scale(self, name: str) -> float:
        """Natural penalty scale ``||B'B||_F / ||S||_F`` of a term."""
        sl = self.slices[name]
        Xq = self.X[:, sl]
        s = np.linalg.norm(self.terms[[t.name for t in self.terms].index(name)].S)
        return float(np.linalg.norm(Xq.T @ Xq) / s) if s > 0 else 1.0

    def _factor(self, lambdas: Sequence[float]):
        pen = np.zeros(self.G.shape[0])
        for t, lam in zip(self.terms, lambdas):
            if lam < 0 or not math.isfinite(lam):
                raise ValueError(f"smoothing parameter for {t.name} must be finite and >= 0")
            pen[self.slices[t.name]] = lam * self.eig[t.name]
        M = self.G + np.diag(pen)
        d = np.diag(M).copy()
        s = 1.0 / np.sqrt(np.where(d > 0, d, 1.0))
        Ms = M * s[:, None] * s[None, :]
        jitter = 0.0
        for attempt in range(_MAX_ESCALATIONS + 1):
            try:
                cf = linalg.cho_factor(Ms + jitter * np.eye(len(s)), lower=True, check_finite=False)
                if not np.all(np.isfinite(cf[0])):
                    raise linalg.LinAlgError("non-finite factor")
                if jitter:
                    logger.warning("normal matrix needed ridge jitter %.3g", jitter)
                return cf, s
            except linalg.LinAlgError:
                jitter = _JITTER * float(np.trace(Ms)) * 10.0 ** attempt
        raise NumericalError("unidentifiable model: normal equations singular after ridge jitter")

    def solve(self, lambdas: Sequence[float]) -> GamFit:
        lambdas = [float(v) for v in lambdas]
        if len(lambdas) != len(self.terms):
            raise ValueError(f"{len(self.terms)} smoothing parameters expected, got {len(lambdas)}")
        cf, s = self._factor(lambdas)
        gamma = s * linalg.cho_solve(cf, s * self.b, check_finite=False)
        Minv = s[:, None] * linalg.cho_solve(cf, np.diag(s), check_finite=False)
        Minv = 0.5 * (Minv + Minv.T)
        infl = np.einsum("ij,ji->i", Minv, self.G)
        beta = self.U @ gamma
        fitted = self.XU @ gamma
        resid = self.y - fitted
        rss = float(resid @ resid)
        n = self.n
        edf_total = float(infl.sum())
        scale = rss / (n - edf_total) if n > edf_total else float("nan")
        gcv = n * rss / (n - edf_total) ** 2 if n > edf_total else float("inf")
        cov = scale * (self.U @ Minv @ self.U.T)
        return GamFit(
            intercept=float(beta[0]),
            coefficients={t.name: beta[self.slices[t.name]].copy() for t in self.terms},
            lambdas={t.name: lam for t, lam in zip(self.terms, lambdas)},
            fitted=fitted,
            residuals=resid,
            edf_total=edf_total,
            edf={t.name: float(infl[self.slices[t.name]].sum()) for t in self.terms},
            gcv=gcv,
            r_squared=1.0 - rss / self.tss if self.tss > 0 else float("nan"),
            coef_covariance=0.5 * (cov + cov.T),
            scale=scale,
            rss=rss,
            terms=self.terms,
            slices=dict(self.slices),
        )


def fit_penalized_ls(y, terms: Sequence[DesignBlock], lambdas: Sequence[float]) -> GamFit:
    """Fit the additive model for fixed smoothing parameters (one per term)."""
    return PenalizedDesign(y, terms).solve(lambdas)


def gcv_score(fit: GamFit, y) -> float:
    """``n * RSS / (n - edf)^2`` with edf the trace of the influence matrix."""
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    if fit.edf_total >= n:
        raise NumericalError("oversaturated model: effective degrees of freedom >= n")
    r = y - fit.fitted
    return n * float(r @ r) / (n - fit.edf_total) ** 2


def r_squared(fit: GamFit, y) -> float:
    y = np.asarray(y, dtype=float).ravel()
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0:
        raise DataError("degenerate response: zero variance")
    r = y - fit.fitted
    return 1.0 - float(r @ r) / tss


@dataclass
class LambdaSearch:
    """Record of a smoothing-parameter search.

    ``visited`` holds ``(log10 relative lambdas, gcv)`` for every evaluated
    point; ``grid_visited`` only those on the coarse grid.
    """

    lambdas: list[float]
    fit: GamFit
    reference: list[float]
    visited: list[tuple[tuple[float, ...], float]]
    grid_visited: list[tuple[tuple[float, ...], float]]
    cycles: int


def select_lambda(
    y,
    terms: Sequence[DesignBlock],
    log10_range: tuple[float, float] = (-6.0, 6.0),
    n_grid: int = 25,
    max_cycles: int = 10,
    refine: bool = True,
    golden_iters: int = 24,
    design: PenalizedDesign | None = None,
) -> LambdaSearch:
    """Choose one smoothing parameter per term by minimising GCV.

    Each term's parameter is searched as ``ref_q * 10**g`` with ``g`` on an
    evenly spaced grid over ``log10_range`` and ``ref_q`` the term's natural
    penalty scale. Coordinate descent over terms repeats until no grid
    argmin moves, then each term gets a golden-section refinement within
    one grid step. Scores within a tiny floor of zero count as ties and ties
    go to the larger smoothing parameters.
    """
    design = design or PenalizedDesign(y, terms)
    names = [t.name for t in design.terms]
    ref = [design.lambda_scale(nm) for nm in names]
    lo, hi = log10_range
    grid = np.linspace(lo, hi, n_grid)
    step = grid[1] - grid[0] if n_grid > 1 else 0.0
    floor = 1e-12 * design.tss / max(design.n, 1)
    cache: dict[tuple[float, ...], GamFit] = {}
    visited: list[tuple[tuple[float, ...], float]] = []
    grid_visited: list[tuple[tuple[float, ...], float]] = []

    def evaluate(g: tuple[float, ...], on_grid: bool) -> float:
        if g not in cache:
            fit = design.solve([r * 10.0 ** gi for r, gi in zip(ref, g)])
            cache[g] = fit
            visited.append((g, fit.gcv))
            if on_grid:
                grid_visited.append((g, fit.gcv))
        return cache[g].gcv

    def better(a: tuple[tuple[float, ...], float], b: tuple[tuple[float, ...], float]) -> bool:
        ka, kb = max(a[1], floor), max(b[1], floor)
        if ka != kb:
            return ka < kb
        return sum(a[0]) > sum(b[0])

    current = [float(grid[len(grid) // 2])] * len(names)
    cycles = 0
    for cycles in range(1, max_cycles + 1):
        moved = False
        for q in range(len(names)):
            best = None
            for gv in grid:
                cand = tuple(current[:q] + [float(gv)] + current[q + 1:])
                pt = (cand, evaluate(cand, True))
                if best is None or better(pt, best):
                    best = pt
            if best[0][q] != current[q]:
                moved = True
                current[q] = best[0][q]
        if not moved:
            break

    if refine and step > 0:
        inv_phi = (math.sqrt(5) - 1) / 2
        for q in range(len(names)):
            a, b = max(lo, current[q] - step), min(hi, current[q] + step)

            def at(v: float) -> tuple[tuple[float, ...], float]:
                cand = tuple(current[:q] + [v] + current[q + 1:])
                return cand, evaluate(cand, False)

            c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
            pc, pd = at(c), at(d)
            for _ in range(golden_iters):
                if better(pc, pd):
                    b, d, pd = d, c, pc
                    c = b - inv_phi * (b - a)
                    pc = at(c)
                else:
                    a, c, pc = c, d, pd
                    d = a + inv_phi * (b - a)
                    pd = at(d)
            best_pt = min([pc, pd, (tuple(current), cache[tuple(current)].gcv)],
                          key=lambda pt: (max(pt[1], floor), -sum(pt[0])))
            current[q] = best_pt[0][q]

    best = visited[0]
    for pt in visited[1:]:
        if better(pt, best):
            best = pt
    fit = cache[best[0]]
    return LambdaSearch([fit.lambdas[nm] for nm in names], fit, ref, visited, grid_visited, cycles)


def predict_with_bands(fit: GamFit, term: str, grid, multiplier: float = 2.0):
    """Term effect on ``grid`` with pointwise ``effect +/- 2 se`` bands.

    Standard errors come from the term's block of the coefficient covariance.
    """
    block = fit.term(term)
    grid = np.asarray(grid, dtype=float).ravel()
    lo, hi = block.basis.domain
    cyclic = getattr(block.basis, "cyclic", False)
    tol = 1e-9 * max(1.0, abs(hi - lo))
    if not cyclic and (np.any(grid < lo - tol) or np.any(grid > hi + tol)):
        raise DataError(f"prediction grid outside the training range [{lo}, {hi}] of {term}")
    Xg = block.evaluate(np.clip(grid, lo, hi) if not cyclic else grid)
    sl = fit.slices[term]
    effect = Xg @ fit.coefficients[term]
    V = fit.coef_covariance[sl, sl]
    se = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", Xg, V, Xg), 0.0))
    return effect, effect - multiplier * se, effect + multiplier * se
