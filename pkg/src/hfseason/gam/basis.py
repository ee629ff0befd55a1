"""Spline bases and their penalty matrices.

Two families are provided:

* cubic regression splines parameterised by the function values at the
  knots, with the exact integrated squared second derivative penalty
  (optionally cyclic);
* P-splines: cubic (or other degree) B-splines on equally spaced knots
  with a difference penalty on adjacent coefficients.

Each constructor returns a :class:`DesignBlock` holding the evaluated basis,
its penalty and the basis object needed to evaluate it at new covariate
values. Identifiability constraints are absorbed separately by
:func:`absorb_sum_to_zero`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import linalg

logger = logging.getLogger(__name__)

CUBIC_REGRESSION = "CUBIC_REGRESSION"
P_SPLINE = "P_SPLINE"


def _clamp(x: np.ndarray, lo: float, hi: float, what: str) -> np.ndarray:
    outside = (x < lo) | (x > hi)
    if np.any(outside):
        logger.warning("%d %s value(s) outside [%g, %g] clamped", int(outside.sum()), what, lo, hi)
        x = np.clip(x, lo, hi)
    return x


@dataclass(frozen=True)
class CubicRegressionSpline:
    """Natural (or cyclic) cubic spline with coefficients equal to knot values.

    For a cyclic spline the last knot marks the period end and is identified
    with the first, so the basis has ``len(knots) - 1`` functions.
    """

    knots: tuple[float, ...]
    cyclic: bool = False

    def __post_init__(self) -> None:
        k = np.asarray(self.knots, dtype=float)
        if len(k) < 3 or (self.cyclic and len(k) < 4):
            raise ValueError("cubic regression spline needs at least 3 knots (4 if cyclic)")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing (duplicate knot?)")

    @property
    def kind(self) -> str:
        return CUBIC_REGRESSION

    @property
    def dim(self) -> int:
        return len(self.knots) - 1 if self.cyclic else len(self.knots)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @cached_property
    def _matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (F, S): knot second derivatives ``F @ beta`` and the penalty."""
        x = np.asarray(self.knots, dtype=float)
        h = np.diff(x)
        if self.cyclic:
            m = len(h)
            Bm = np.zeros((m, m))
            D = np.zeros((m, m))
            for i in range(m):
                hp, hi = h[i - 1], h[i]
                Bm[i, i] += (hp + hi) / 3.0
                Bm[i, (i - 1) % m] += hp / 6.0
                Bm[i, (i + 1) % m] += hi / 6.0
                D[i, (i - 1) % m] += 1.0 / hp
                D[i, i] += -1.0 / hp - 1.0 / hi
                D[i, (i + 1) % m] += 1.0 / hi
            F = linalg.solve(Bm, D, assume_a="sym")
        else:
            k = len(x)
            Bm = np.zeros((k - 2, k - 2))
            D = np.zeros((k - 2, k))
            for i in range(k - 2):
                D[i, i] = 1.0 / h[i]
                D[i, i + 1] = -1.0 / h[i] - 1.0 / h[i + 1]
                D[i, i + 2] = 1.0 / h[i + 1]
                Bm[i, i] = (h[i] + h[i + 1]) / 3.0
                if i + 1 < k - 2:
                    Bm[i, i + 1] = Bm[i + 1, i] = h[i + 1] / 6.0
            F = np.zeros((k, k))
            F[1:-1] = linalg.solve(Bm, D, assume_a="sym")
        # integral of f''^2 is delta' Bm delta with delta = Bm^-1 D beta
        S = D.T @ (F if self.cyclic else F[1:-1])
        return F, 0.5 * (S + S.T)

    def penalty(self) -> np.ndarray:
        return self._matrices[1].copy()

    def design(self, x) -> np.ndarray:
        knots = np.asarray(self.knots, dtype=float)
        x = np.asarray(x, dtype=float).ravel()
        if self.cyclic:
            period = knots[-1] - knots[0]
            x = knots[0] + np.mod(x - knots[0], period)
        else:
            x = _clamp(x, knots[0], knots[-1], "covariate")
        F, _ = self._matrices
        m = self.dim
        j = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, len(knots) - 2)
        h = knots[j + 1] - knots[j]
        right = knots[j + 1] - x
        left = x - knots[j]
        am, ap = right / h, left / h
        cm = (right ** 3 / h - h * right) / 6.0
        cp = (left ** 3 / h - h * left) / 6.0
        jn = (j + 1) % m if self.cyclic else j + 1
        rows = np.arange(len(x))
        X = cm[:, None] * F[j] + cp[:, None] * F[jn]
        np.add.at(X, (rows, j), am)
        np.add.at(X, (rows, jn), ap)
        return X


def bspline_knots(xl: float, xr: float, k: int, degree: int = 3) -> np.ndarray:
    """Equally spaced knot vector giving ``k`` B-splines on [xl, xr]."""
    nseg = k - degree
    dx = (xr - xl) / nseg
    return xl + dx * np.arange(-degree, nseg + degree + 1)


def cox_de_boor(x: np.ndarray, t: np.ndarray, degree: int) -> np.ndarray:
    """All B-spline basis functions of ``degree`` on knot vector ``t`` at ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    nfun = len(t) - 1
    B = ((t[None, :-1] <= x[:, None]) & (x[:, None] < t[None, 1:])).astype(float)
    for d in range(1, degree + 1):
        nfun -= 1
        left_den = t[d:d + nfun] - t[:nfun]
        right_den = t[d + 1:d + 1 + nfun] - t[1:1 + nfun]
        left = (x[:, None] - t[None, :nfun]) / left_den * B[:, :nfun]
        right = (t[None, d + 1:d + 1 + nfun] - x[:, None]) / right_den * B[:, 1:nfun + 1]
        B = left + right
    return B


def difference_matrix(k: int, order: int) -> np.ndarray:
    return np.diff(np.eye(k), order, axis=0)


@dataclass(frozen=True)
class PSpline:
    """B-spline basis on equally spaced knots with an order-r difference penalty."""

    xl: float
    xr: float
    k: int
    degree: int = 3
    penalty_order: int = 2

    def __post_init__(self) -> None:
        if self.k <= self.degree + 1:
            raise ValueError(f"P-spline dimension k={self.k} must exceed degree + 1")
        if self.penalty_order >= self.k or self.penalty_order < 0:
            raise ValueError("penalty order must be in [0, k)")
        if not self.xr > self.xl:
            raise ValueError("P-spline range must have xr > xl")

    @property
    def kind(self) -> str:
        return P_SPLINE

    @property
    def dim(self) -> int:
        return self.k

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.xl), float(self.xr)

    @property
    def knots(self) -> tuple[float, ...]:
        return tuple(float(v) for v in bspline_knots(self.xl, self.xr, self.k, self.degree))

    def penalty(self) -> np.ndarray:
        D = difference_matrix(self.k, self.penalty_order)
        return D.T @ D

    def design(self, x) -> np.ndarray:
        x = _clamp(np.asarray(x, dtype=float).ravel(), self.xl, self.xr, "covariate")
        return cox_de_boor(x, bspline_knots(self.xl, self.xr, self.k, self.degree), self.degree)


@dataclass
class DesignBlock:
    """One smooth term: basis matrix ``B`` (n x k) and penalty ``S`` (k x k).

    When ``constrained`` is set, ``B`` and ``S`` are expressed in the
    reduced coordinates ``beta = Z @ beta_reduced`` and the term sums to zero
    over ``center_x`` (the training covariate when that is None).
    """

    name: str
    B: np.ndarray
    S: np.ndarray
    basis: CubicRegressionSpline | PSpline
    x: np.ndarray
    Z: np.ndarray | None = None
    center_x: np.ndarray | None = field(default=None, repr=False)

    @property
    def constrained(self) -> bool:
        return self.Z is not None

    @property
    def k(self) -> int:
        return self.B.shape[1]

    def evaluate(self, x) -> np.ndarray:
        raw = self.basis.design(x)
        return raw @ self.Z if self.Z is not None else raw

    def to_dict(self) -> dict:
        b = self.basis
        out = {"name": self.name, "basis_kind": b.kind, "k": b.dim, "knots": list(b.knots),
               "constrained": self.constrained}
        if isinstance(b, CubicRegressionSpline):
            out["cyclic"] = b.cyclic
        else:
            out.update(degree=b.degree, penalty_order=b.penalty_order)
        return out


def quantile_knots(x, n_knots: int) -> np.ndarray:
    """Knots at quantiles of the distinct covariate values."""
    u = np.unique(np.asarray(x, dtype=float))
    if len(u) < n_knots:
        raise ValueError(f"{n_knots} knots requested but only {len(u)} distinct covariate values")
    return np.quantile(u, np.linspace(0.0, 1.0, n_knots))


def cubic_regression_basis(x, knots, cyclic: bool = False, name: str = "s(x)",
                           center_x=None) -> DesignBlock:
    """Evaluate a cubic regression spline basis and its curvature penalty at ``x``.

    ``knots`` may be an array of abscissae or an integer knot count, in which
    case knots are placed at quantiles of ``x`` (equally spaced over the range
    for a cyclic basis, the last knot being the period end).
    """
    x = np.asarray(x, dtype=float).ravel()
    if np.isscalar(knots) or np.ndim(knots) == 0:
        n = int(knots)
        knots = (np.linspace(x.min(), x.max(), n + 1) if cyclic else quantile_knots(x, n))
    basis = CubicRegressionSpline(tuple(float(v) for v in np.asarray(knots, dtype=float)), cyclic)
    return DesignBlock(name, basis.design(x), basis.penalty(), basis, x, center_x=center_x)


def pspline_basis(x, k: int, degree: int = 3, penalty_order: int = 2, name: str = "s(x)",
                  xl: float | None = None, xr: float | None = None, center_x=None) -> DesignBlock:
    """Evaluate a P-spline basis on equally spaced knots spanning the covariate range."""
    x = np.asarray(x, dtype=float).ravel()
    basis = PSpline(float(x.min() if xl is None else xl), float(x.max() if xr is None else xr),
                    int(k), int(degree), int(penalty_order))
    return DesignBlock(name, basis.design(x), basis.penalty(), basis, x, center_x=center_x)


def sum_to_zero_null_space(C: np.ndarray) -> np.ndarray:
    """Orthonormal basis Z of the null space of the 1 x k constraint ``C``."""
    Q, _ = np.linalg.qr(np.asarray(C, dtype=float).reshape(1, -1).T, mode="complete")
    return Q[:, 1:]


def absorb_sum_to_zero(block: DesignBlock) -> DesignBlock:
    """Reparameterise a block so its contributions sum to zero.

    The sum is taken over ``block.center_x`` when given, else over the
    training covariate values.
    """
    if block.constrained:
        return block
    Braw = block.B if block.center_x is None else block.basis.design(block.center_x)
    Z = sum_to_zero_null_space(Braw.sum(axis=0))
    S = Z.T @ block.S @ Z
    return replace(block, B=block.B @ Z, S=0.5 * (S + S.T), Z=Z)
