"""Closed-form deletion diagnostics from a single full-data fit.

For a deleted subset ``M`` write ``r~ = Sigma^-1 r``, ``H~ = Sigma^-1 H
Sigma^-1`` and ``Sigma^M`` for the ``M x M`` block of the precision.  With
``A = (Sigma^M - H~_M)^-1`` and ``u = A r~_M``:

* squared residual difference  ``srd = r~_M' u``
* squared cross-validation residual  ``lmocv_sq = u' Sigma^M u``
* Cook's distance multiple  ``cook_multiple = u' H~_M u``

and ``lmocv_sq - cook_multiple = srd``.  ``srd`` is also the drop in the
generalised residual sum of squares when ``M`` is removed and the model
refitted at the same correlation parameter.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .covariance import RCOND_MIN, as_subset
from .errors import DeletionSingularError
from .glsfit import tilde_block


@dataclass(frozen=True)
class DeletionStats:
    """Deletion diagnostics for one subset ``M`` (0-based indices).

    ``cv_resid_tilde`` lives in precision-transformed space
    (``Y~_M - X~_M beta_(M)``); ``cv_resid_raw`` is the ordinary
    prediction error ``Y_M - X_M beta_(M)``.
    """

    M: np.ndarray
    srd: float
    lmocv_sq: float
    cook_multiple: float
    cook_distance: float
    beta_deleted: np.ndarray
    sigma2_deleted_est: float
    cv_resid_tilde: np.ndarray
    cv_resid_raw: np.ndarray
    sigma2_negative: bool = False
    error: str | None = field(default=None, compare=False)

    @property
    def m(self):
        return len(self.M)

    @property
    def ok(self):
        return self.error is None


def _deleted_sigma2(fit, srd, m):
    dof = fit.n - fit.p - m
    if dof <= 0:
        return float("nan")
    return ((fit.n - fit.p) * fit.sigma2_hat - srd) / dof


def _factor(mat, M):
    try:
        cf = scipy.linalg.cho_factor(mat, lower=True)
    except np.linalg.LinAlgError:
        raise DeletionSingularError(
            f"deleting observations {M.tolist()} leaves a singular system"
            " (Sigma^M - H~_M is not positive definite)", subset=M,
        ) from None
    d = np.diag(cf[0])
    if d.min() ** 2 < RCOND_MIN * d.max() ** 2:
        raise DeletionSingularError(
            f"deleting observations {M.tolist()} leaves a singular system"
            " (leverage one)", subset=M,
        )
    return cf


def deletion_stats(fit, M):
    """Diagnostics for deleting the subset ``M`` without refitting."""
    M = as_subset(M, fit.n)
    r_M, H_M, P_M = tilde_block(fit, M)
    cf = _factor(P_M - H_M, M)
    u = scipy.linalg.cho_solve(cf, r_M)
    srd = float(r_M @ u)
    cv_tilde = P_M @ u
    lmocv_sq = float(u @ cv_tilde)
    cook = float(u @ H_M @ u)
    beta_del = fit.beta_hat - fit.xtsix_inv @ (fit.tilde_X[M].T @ u)
    cv_raw = fit.problem.Y[M] - fit.problem.X[M] @ beta_del
    s2 = _deleted_sigma2(fit, srd, len(M))
    negative = bool(s2 < 0)
    if negative:
        warnings.warn(
            f"estimated deleted variance is negative for subset {M.tolist()}",
            RuntimeWarning, stacklevel=2,
        )
    return DeletionStats(
        M=M,
        srd=srd,
        lmocv_sq=lmocv_sq,
        cook_multiple=cook,
        cook_distance=cook / (fit.p * fit.sigma2_hat) if fit.sigma2_hat > 0 else float("nan"),
        beta_deleted=beta_del,
        sigma2_deleted_est=s2,
        cv_resid_tilde=cv_tilde,
        cv_resid_raw=cv_raw,
        sigma2_negative=negative,
    )


def srd_via_partial(fit, M):
    """Squared residual difference through the partial-correlation route.

    Uses ``r* = S^1/2 r~``, ``H* = S^1/2 H~ S^1/2`` and the unit-diagonal
    ``C`` in place of the precision; the result equals
    ``deletion_stats(fit, M).srd``.
    """
    M = as_subset(M, fit.n)
    root = np.sqrt(fit.partial.S[M])
    r_star = root * fit.tilde_r[M]
    X_star = root[:, None] * fit.tilde_X[M]
    H_star = X_star @ fit.xtsix_inv @ X_star.T
    C_M = fit.partial.C.submatrix(M)
    cf = _factor(C_M - (H_star + H_star.T) / 2, M)
    return float(r_star @ scipy.linalg.cho_solve(cf, r_star))


def _nan_stats(fit, i, message):
    nan = float("nan")
    return DeletionStats(
        M=np.array([i]), srd=nan, lmocv_sq=nan, cook_multiple=nan, cook_distance=nan,
        beta_deleted=np.full(fit.p, nan), sigma2_deleted_est=nan,
        cv_resid_tilde=np.array([nan]), cv_resid_raw=np.array([nan]), error=message,
    )


def loo_arrays(fit):
    """Vectorised leave-one-out diagnostics as a dict of arrays.

    Every entry follows the scalar (``m = 1``) form of the subset formulas;
    observations with leverage one get NaN and ``ok = False``.
    """
    n, p = fit.n, fit.p
    P_ii = fit.prec.diagonal()
    h = fit.tilde_leverage()
    denom = P_ii - h
    ok = denom > np.sqrt(RCOND_MIN) * P_ii
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(ok, fit.tilde_r / denom, np.nan)
    srd = fit.tilde_r * u
    lmocv_sq = P_ii * u * u
    cook = h * u * u
    beta_del = fit.beta_hat[None, :] - (fit.tilde_X @ fit.xtsix_inv) * u[:, None]
    cv_raw = fit.problem.Y - np.einsum("ij,ij->i", fit.problem.X, beta_del)
    dof = n - p - 1
    s2 = ((n - p) * fit.sigma2_hat - srd) / dof if dof > 0 else np.full(n, np.nan)
    return {
        "srd": srd,
        "lmocv_sq": lmocv_sq,
        "cook_multiple": cook,
        "cook_distance": cook / (p * fit.sigma2_hat) if fit.sigma2_hat > 0 else cook * np.nan,
        "beta_deleted": beta_del,
        "sigma2_deleted_est": s2,
        "cv_resid_tilde": P_ii * u,
        "cv_resid_raw": cv_raw,
        "leverage_tilde": h,
        "ok": ok,
    }


def loo_all(fit):
    """Leave-one-out :class:`DeletionStats` for every observation.

    Uses scalar formulas only (no ``m x m`` solves), ``O(n p^2)`` overall.
    Observations whose deletion is singular are returned with NaN values
    and an ``error`` message instead of aborting the sweep.
    """
    a = loo_arrays(fit)
    out = []
    for i in range(fit.n):
        if not a["ok"][i]:
            out.append(_nan_stats(fit, i, f"observation {i} has leverage one"))
            continue
        s2 = float(a["sigma2_deleted_est"][i])
        out.append(DeletionStats(
            M=np.array([i]),
            srd=float(a["srd"][i]),
            lmocv_sq=float(a["lmocv_sq"][i]),
            cook_multiple=float(a["cook_multiple"][i]),
            cook_distance=float(a["cook_distance"][i]),
            beta_deleted=a["beta_deleted"][i],
            sigma2_deleted_est=s2,
            cv_resid_tilde=a["cv_resid_tilde"][i:i + 1],
            cv_resid_raw=a["cv_resid_raw"][i:i + 1],
            sigma2_negative=bool(s2 < 0),
        ))
    return out
