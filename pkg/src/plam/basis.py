"""Cubic B-spline bases, curvature penalties and penalized least squares.

Each smooth uses a cubic B-spline basis whose interior knots sit at quantiles
of the distinct data values.  Identifiability is obtained the usual way: the
coefficient vector is constrained so that the fitted curve has zero mean over
the training sample, which removes one dimension (``dim - 1`` free
coefficients, i.e. 5 reference degrees of freedom at the default ``dim=6``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import SingularSystem, TooFewDistinctValues

DEFAULT_DIM = 6
COND_LIMIT = 1e12

# Gauss-Legendre nodes on [-1, 1]; two points integrate the product of two
# piecewise-linear second derivatives exactly.
_GAUSS_X = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_GAUSS_W = np.array([1.0, 1.0])


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """A cubic B-spline basis for one variable.

    ``knots`` holds the boundary and interior knots in data units; the
    boundary knots are repeated internally to form the clamped knot vector.
    ``centering`` holds the training-sample column means of the raw basis.
    """

    variable_id: str
    dim: int
    knots: np.ndarray
    centering: np.ndarray
    degree: int = 3
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def lower(self) -> float:
        return float(self.knots[0])

    @property
    def upper(self) -> float:
        return float(self.knots[-1])

    def knot_vector(self) -> np.ndarray:
        k = self.degree
        return np.r_[[self.knots[0]] * k, self.knots, [self.knots[-1]] * k]

    def _spline(self, nu: int = 0) -> BSpline:
        key = ("spline", nu)
        if key not in self._cache:
            spl = BSpline(self.knot_vector(), np.eye(self.dim), self.degree)
            self._cache[key] = spl if nu == 0 else spl.derivative(nu)
        return self._cache[key]

    def raw_design(self, x) -> np.ndarray:
        """Uncentered basis values; linear extrapolation past the boundary knots."""
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.lower, self.upper)
        out = self._spline(0)(xc)
        off = x - xc
        if np.any(off != 0.0):
            out = out + self._spline(1)(xc) * off[:, None]
        return out

    def design(self, x) -> np.ndarray:
        return self.raw_design(x) - self.centering

    def derivative_design(self, x) -> np.ndarray:
        """First derivative of each basis function (constant slope outside the knots)."""
        x = np.asarray(x, dtype=float)
        return self._spline(1)(np.clip(x, self.lower, self.upper))

    def constraint(self) -> np.ndarray:
        """Columns spanning the coefficients with zero training mean (dim x dim-1)."""
        if "constraint" not in self._cache:
            q, _ = np.linalg.qr(self.centering.reshape(-1, 1), mode="complete")
            self._cache["constraint"] = q[:, 1:]
        return self._cache["constraint"]

    def constrained_design(self, x) -> np.ndarray:
        return self.raw_design(x) @ self.constraint()

    def to_dict(self) -> dict:
        return {
            "variable": self.variable_id,
            "dim": self.dim,
            "knots": self.knots.tolist(),
            "centering": self.centering.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplineBasis":
        return cls(
            variable_id=d["variable"],
            dim=int(d["dim"]),
            knots=np.asarray(d["knots"], dtype=float),
            centering=np.asarray(d["centering"], dtype=float),
        )


def place_knots(x, dim: int) -> np.ndarray:
    u = np.unique(np.asarray(x, dtype=float))
    levels = np.linspace(0.0, 1.0, dim - 2)
    knots = np.quantile(u, levels)
    knots[0], knots[-1] = u[0], u[-1]
    return knots


def build_cubic_basis(x, dim: int = DEFAULT_DIM, variable_id: str = "x"):
    """Build a centered cubic B-spline basis on ``x``.

    Returns the basis and its centered ``n x dim`` design block.  Raises
    :class:`TooFewDistinctValues` when ``x`` has fewer than ``dim + 2``
    distinct values, which callers take as a cue to use ``x`` linearly.
    """
    if dim < 4:
        raise ValueError("a cubic basis needs dim >= 4")
    x = np.asarray(x, dtype=float)
    n_distinct = np.unique(x).size
    if n_distinct < dim + 2:
        raise TooFewDistinctValues(
            f"{variable_id}: {n_distinct} distinct values, need {dim + 2}"
        )
    knots = place_knots(x, dim)
    provisional = SplineBasis(variable_id, dim, knots, np.zeros(dim))
    raw = provisional.raw_design(x)
    basis = SplineBasis(variable_id, dim, knots, raw.mean(axis=0))
    return basis, raw - basis.centering


def penalty_matrix(basis: SplineBasis) -> np.ndarray:
    """Integrated squared second derivative, ``theta' S theta = int g''(t)^2 dt``."""
    t = np.unique(basis.knots)
    lo, hi = t[:-1], t[1:]
    half = (hi - lo) / 2.0
    mid = (hi + lo) / 2.0
    pts = (mid[:, None] + half[:, None] * _GAUSS_X[None, :]).ravel()
    wts = (half[:, None] * _GAUSS_W[None, :]).ravel()
    d2 = basis._spline(2)(pts)
    s = d2.T @ (d2 * wts[:, None])
    return (s + s.T) / 2.0


@dataclass
class PenalizedFit:
    coefficients: np.ndarray
    edf: float
    hat_diag: np.ndarray
    fitted: np.ndarray


def penalized_ls(design, penalty, y, psi: float) -> PenalizedFit:
    """Minimize ``||y - B theta||^2 + psi * theta' S theta`` by a dense solve."""
    if psi < 0:
        raise ValueError("psi must be non-negative")
    b = np.asarray(design, dtype=float)
    s = np.asarray(penalty, dtype=float)
    y = np.asarray(y, dtype=float)
    a = b.T @ b + psi * s
    if np.linalg.cond(a) > COND_LIMIT:
        raise SingularSystem("penalized normal matrix is numerically singular")
    theta = np.linalg.solve(a, b.T @ y)
    # rows of B A^{-1} B' on the diagonal
    hat_diag = np.einsum("ij,ji->i", b, np.linalg.solve(a, b.T))
    return PenalizedFit(theta, float(hat_diag.sum()), hat_diag, b @ theta)


class Spectrum:
    """Demmler-Reinsch form of one penalized smoother.

    With ``B = QR`` and ``R^{-T} S R^{-1} = U diag(s) U'`` the smoother for
    smoothing parameter ``psi`` is ``P diag(1/(1 + psi s)) P'`` with
    ``P = QU``.  This turns GCV searches and backfitting updates into
    O(n m) operations.
    """

    def __init__(self, design, penalty):
        b = np.asarray(design, dtype=float)
        q, r = np.linalg.qr(b)
        if np.linalg.cond(r) > np.sqrt(COND_LIMIT):
            raise SingularSystem("smooth design block is rank deficient")
        rinv = np.linalg.inv(r)
        m = rinv.T @ penalty @ rinv
        s, u = np.linalg.eigh((m + m.T) / 2.0)
        s = np.clip(s, 0.0, None)
        self.s = s
        self.P = q @ u
        self.T = rinv @ u
        self.Tinv = u.T @ r
        self.m = b.shape[1]
        self.scale = float(np.trace(r.T @ r) / max(np.trace(penalty), 1e-300))

    def shrink(self, psi):
        return 1.0 / (1.0 + np.multiply.outer(np.atleast_1d(psi), self.s))
