"""Generalised least squares with a one-parameter correlation structure.

``var(Y) = sigma^2 * Sigma(rho)`` with ``Sigma`` block-diagonal by subject.
The fit caches ``Sigma^-1 X``, ``Sigma^-1 r`` and ``(X' Sigma^-1 X)^-1`` so
every deletion diagnostic afterwards is a small ``m x m`` computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .covariance import (
    RCOND_MIN,
    CorrelationModel,
    as_subset,
    build_correlation,
    inverse_correlation,
    partial_correlation,
)
from .errors import (
    ConditioningError,
    NumericalError,
    OptimizationError,
    ParameterDomainError,
    RankDeficiencyError,
)

BOUNDARY_GAP = 1e-4
RHO_TOL = 1e-7
MAX_ITER = 200
GRID_POINTS = 41

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class GlsFit:
    """Immutable result of :func:`fit_gls`.

    Attributes
    ----------
    beta_hat : ndarray of shape (p,)
    residuals : ndarray of shape (n,)
        ``Y - X beta_hat``.
    sigma2_hat : float
        ``r' Sigma^-1 r / (n - p)``.
    rho_hat : float
        Correlation parameter the fit was evaluated at.
    xtsix_inv : ndarray of shape (p, p)
        ``(X' Sigma^-1 X)^-1``.
    tilde_X, tilde_r : ndarray
        ``Sigma^-1 X`` and ``Sigma^-1 r``.
    """

    problem: object
    model: CorrelationModel
    rho_estimated: bool
    beta_hat: np.ndarray
    residuals: np.ndarray
    sigma2_hat: float
    rho_hat: float
    xtsix_inv: np.ndarray
    tilde_X: np.ndarray
    tilde_r: np.ndarray
    prec: object
    partial: object
    reml: float

    @property
    def n(self):
        return self.problem.n

    @property
    def p(self):
        return self.problem.p

    @property
    def rss(self):
        """Generalised residual sum of squares ``r' Sigma^-1 r``."""
        return float(self.residuals @ self.tilde_r)

    @property
    def tilde_Y(self):
        return self.prec.dot(self.problem.Y)

    def tilde_leverage(self):
        """Diagonal of ``Sigma^-1 H Sigma^-1``."""
        return np.einsum("ij,jk,ik->i", self.tilde_X, self.xtsix_inv, self.tilde_X)

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.beta_hat


@dataclass(frozen=True)
class TransformedResiduals:
    star: np.ndarray
    dagger: np.ndarray
    star_leverage: np.ndarray


def check_rank(X, column_names=None):
    """Raise :class:`RankDeficiencyError` naming a dependent column of ``X``."""
    n, p = X.shape
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(float).eps * (d[0] if d.size else 0.0)
    rank = int(np.sum(d > tol))
    if rank < p:
        names = column_names or tuple(f"x{j}" for j in range(p))
        dependent = [names[j] for j in sorted(piv[rank:])]
        raise RankDeficiencyError(
            f"design matrix has rank {rank} < {p}; linearly dependent column(s): "
            + ", ".join(map(str, dependent))
        )


def _precision_for(problem, model):
    sigma = build_correlation(model, problem.layout, problem.times, problem.positions)
    return inverse_correlation(sigma)


def _solve_core(problem, model):
    prec = _precision_for(problem, model)
    X, Y = problem.X, problem.Y
    tX = prec.dot(X)
    xtx = X.T @ tX
    xtx = (xtx + xtx.T) / 2
    rcond = 1.0 / np.linalg.cond(xtx, 1)
    if not rcond >= RCOND_MIN:
        raise ConditioningError(f"X' Sigma^-1 X is ill-conditioned (reciprocal condition {rcond:.3g})")
    try:
        cf = scipy.linalg.cho_factor(xtx, lower=True)
    except np.linalg.LinAlgError:
        raise ConditioningError("X' Sigma^-1 X is not positive definite") from None
    beta = scipy.linalg.cho_solve(cf, tX.T @ Y)
    r = Y - X @ beta
    tr = prec.dot(r)
    rss = float(r @ tr)
    logdet_xtx = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    return prec, tX, cf, beta, r, tr, rss, logdet_xtx


def _reml_value(n, p, rss, logdet_corr, logdet_xtx):
    if rss <= 0:
        # exact interpolation: the profile likelihood is unbounded
        return math.inf
    return -0.5 * ((n - p) * math.log(rss) + logdet_corr + logdet_xtx)


def restricted_loglik(problem, model):
    """Profile restricted log-likelihood at ``model.rho`` (constants dropped).

    ``-1/2 [(n-p) log(r' Sigma^-1 r) + log det Sigma + log det(X' Sigma^-1 X)]``
    """
    prec, _, _, _, _, _, rss, logdet_xtx = _solve_core(problem, model)
    return _reml_value(problem.n, problem.p, rss, prec.logdet_corr, logdet_xtx)


def _golden_max(f, a, b, tol=RHO_TOL, max_iter=MAX_ITER):
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while abs(b - a) > tol and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
        it += 1
    return (c, fc) if fc >= fd else (d, fd)


def reml_rho(problem, model):
    """Maximise :func:`restricted_loglik` over ``rho``.

    A coarse grid locates the best bracket, then golden-section search
    refines inside it to ``RHO_TOL``.
    """
    if model.family == "identity":
        raise ParameterDomainError("rho estimation needs the ar1 or car1 family")
    lo, hi = model.bounds
    lo, hi = lo + BOUNDARY_GAP, hi - BOUNDARY_GAP

    def objective(rho):
        try:
            return restricted_loglik(problem, model.with_rho(rho))
        except NumericalError:
            return -math.inf

    grid = np.linspace(lo, hi, GRID_POINTS)
    values = np.array([objective(r) for r in grid])
    if not np.any(np.isfinite(values)):
        raise OptimizationError(
            f"restricted likelihood is not finite anywhere on [{lo:.4g}, {hi:.4g}]"
            f" ({GRID_POINTS} grid points)"
        )
    k = int(np.nanargmax(np.where(np.isfinite(values), values, -np.inf)))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, GRID_POINTS - 1)]
    rho, val = _golden_max(objective, a, b)
    if not math.isfinite(val):
        raise OptimizationError(
            f"golden-section search on [{a:.6g}, {b:.6g}] ended at non-finite value"
        )
    return float(rho)


def fit_gls(problem, model=None, estimate_rho=False):
    """Fit ``Y = X beta + e`` with ``var(e) = sigma^2 Sigma(rho)``.

    With ``estimate_rho`` the correlation parameter is chosen by profile
    REML and ``model.rho`` is ignored; otherwise it is held at
    ``model.rho``.  The identity family gives ordinary least squares.
    """
    model = model or CorrelationModel("identity")
    check_rank(problem.X, problem.column_names)
    if estimate_rho:
        model = model.with_rho(reml_rho(problem, model))
    prec, tX, cf, beta, r, tr, rss, logdet_xtx = _solve_core(problem, model)
    n, p = problem.n, problem.p
    xtsix_inv = scipy.linalg.cho_solve(cf, np.eye(p))
    return GlsFit(
        problem=problem,
        model=model,
        rho_estimated=bool(estimate_rho),
        beta_hat=beta,
        residuals=r,
        sigma2_hat=rss / (n - p),
        rho_hat=model.rho,
        xtsix_inv=(xtsix_inv + xtsix_inv.T) / 2,
        tilde_X=tX,
        tilde_r=tr,
        prec=prec,
        partial=partial_correlation(prec),
        reml=_reml_value(n, p, rss, prec.logdet_corr, logdet_xtx),
    )


def transformed_residuals(fit):
    """Residuals scaled by the partial-correlation weights.

    ``star = S^1/2 Sigma^-1 r`` and ``dagger = S Sigma^-1 r``; the latter is
    each residual adjusted for its correlation with the other residuals.
    """
    S = fit.partial.S
    return TransformedResiduals(
        star=np.sqrt(S) * fit.tilde_r,
        dagger=S * fit.tilde_r,
        star_leverage=S * fit.tilde_leverage(),
    )


def tilde_block(fit, M):
    """``(r~_M, H~_M, Sigma^M)`` for the subset ``M``.

    ``H~_M`` comes from the cached ``Sigma^-1 X`` rows, never from an
    ``n x n`` product; ``Sigma^M`` is the ``M x M`` block of the precision.
    """
    M = as_subset(M, fit.n)
    tX_M = fit.tilde_X[M]
    H_M = tX_M @ fit.xtsix_inv @ tX_M.T
    return fit.tilde_r[M], (H_M + H_M.T) / 2, fit.prec.submatrix(M)
