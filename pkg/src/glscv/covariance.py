"""Block-diagonal correlation structures and their precision matrices.

Within a subject, observations are correlated as

* ``identity``: independent,
* ``ar1``: ``rho ** |i - j|`` in the observation's position index,
* ``car1``: ``rho ** |t_i - t_j|`` in continuous time.

Both autoregressive families are Markov in their ordering, so each
precision block is tridiagonal and is written down directly from the
consecutive lags instead of being inverted numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse

from ._layout import BlockLayout
from .errors import ConditioningError, DataError, ParameterDomainError

FAMILIES = ("identity", "ar1", "car1")
RCOND_MIN = 1e-12


@dataclass(frozen=True)
class CorrelationModel:
    family: str = "identity"
    rho: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterDomainError(
                f"unknown correlation family {self.family!r}; expected one of {FAMILIES}"
            )
        rho = float(self.rho)
        object.__setattr__(self, "rho", rho)
        if self.family == "identity":
            return
        if not np.isfinite(rho) or abs(rho) >= 1:
            raise ParameterDomainError(f"{self.family} requires |rho| < 1, got {rho}")
        if self.family == "car1" and rho <= 0:
            raise ParameterDomainError(f"car1 requires 0 < rho < 1, got {rho}")

    @property
    def bounds(self):
        """Open interval of admissible ``rho``."""
        if self.family == "car1":
            return 0.0, 1.0
        if self.family == "ar1":
            return -1.0, 1.0
        return 0.0, 0.0

    def with_rho(self, rho):
        return CorrelationModel(self.family, rho)


class BlockDiagonalMatrix:
    """Symmetric block-diagonal matrix stored as flat block contents."""

    def __init__(self, layout, data, model=None):
        self.layout = layout
        self.data = np.asarray(data, dtype=float)
        self.model = model
        if self.data.shape != (layout.nnz,):
            raise ValueError("data does not match layout")

    @property
    def n(self):
        return self.layout.n

    @property
    def shape(self):
        return (self.n, self.n)

    def block(self, b):
        s = int(self.layout.sizes[b])
        o = int(self.layout.offsets[b])
        return self.data[o:o + s * s].reshape(s, s)

    @property
    def blocks(self):
        return [self.block(b) for b in range(self.layout.n_blocks)]

    def diagonal(self):
        return self.data[self.layout.diag_flat]

    @cached_property
    def _sparse(self):
        lay = self.layout
        return scipy.sparse.csr_matrix(
            (self.data, (lay.pair_rows, lay.pair_cols)), shape=self.shape
        )

    def to_sparse(self):
        return self._sparse

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.layout.pair_rows, self.layout.pair_cols] = self.data
        return out

    def dot(self, a):
        """Matrix product ``self @ a`` for a vector or ``n x k`` array."""
        if self.model is not None and self.model.family == "identity":
            return np.array(a, dtype=float, copy=True)
        return self._sparse @ np.asarray(a, dtype=float)

    def submatrix(self, idx):
        """Dense ``m x m`` restriction to rows and columns ``idx``."""
        idx = np.asarray(idx, dtype=np.intp)
        flat = self.layout.flat_index(idx[:, None], idx[None, :])
        out = self.data[np.where(flat >= 0, flat, 0)]
        out[flat < 0] = 0.0
        return out

    def __repr__(self):
        family = self.model.family if self.model is not None else "?"
        return f"{type(self).__name__}(n={self.n}, blocks={self.layout.n_blocks}, family={family})"


class CorrelationMatrix(BlockDiagonalMatrix):
    """Block-diagonal correlation matrix; each block has unit diagonal."""

    def __init__(self, layout, data, model=None, lags=None):
        super().__init__(layout, data, model)
        self.lags = lags


class PrecisionMatrix(BlockDiagonalMatrix):
    """Inverse of a :class:`CorrelationMatrix`.

    ``logdet_corr`` is ``log det`` of the correlation matrix it inverts.
    """

    def __init__(self, layout, data, model=None, logdet_corr=0.0):
        super().__init__(layout, data, model)
        self.logdet_corr = float(logdet_corr)


@dataclass(frozen=True)
class PartialCorrelation:
    """``S`` with ``S_i = 1 / prec_ii`` and ``C = S^1/2 prec S^1/2``."""

    S: np.ndarray
    C: BlockDiagonalMatrix


def _as_layout(groups):
    if isinstance(groups, BlockLayout):
        return groups
    groups = np.asarray(groups, dtype=object)
    n = len(groups)
    change = np.ones(n, dtype=bool)
    change[1:] = groups[1:] != groups[:-1]
    starts = np.flatnonzero(change)
    if len(set(groups[starts])) != len(starts):
        raise DataError("group blocks are not contiguous")
    return BlockLayout(np.diff(np.append(starts, n)))


def build_correlation(model, groups, times=None, positions=None):
    """Correlation matrix for ``model`` over contiguous ``groups``.

    ``groups`` is a per-observation label array (contiguous runs) or a
    :class:`BlockLayout`.  ``car1`` needs ``times``; ``ar1`` uses
    ``positions`` when given, otherwise the index within each group.
    """
    layout = _as_layout(groups)
    rows, cols = layout.pair_rows, layout.pair_cols
    if model.family == "identity":
        return CorrelationMatrix(layout, (rows == cols).astype(float), model)

    if model.family == "car1":
        if times is None:
            raise DataError("car1 correlation needs observation times")
        coord = np.asarray(times, dtype=float)
    else:
        coord = layout.local.astype(float) if positions is None else np.asarray(positions, float)
    if len(coord) != layout.n:
        raise DataError("times/positions length does not match groups")
    lags = np.abs(coord[rows] - coord[cols])
    data = np.power(model.rho, lags)
    return CorrelationMatrix(layout, data, model, lags=_consecutive_lags(layout, coord))


def _consecutive_lags(layout, coord):
    has_next = layout.local < layout.sizes[layout.block_of] - 1
    gap = np.full(layout.n, np.nan)
    i = np.flatnonzero(has_next)
    gap[i] = coord[i + 1] - coord[i]
    return gap


def _raise_if_illconditioned(rcond, layout, where=""):
    bad = np.flatnonzero(rcond < RCOND_MIN)
    if len(bad):
        b = int(bad[0])
        raise ConditioningError(
            f"correlation block {b}{where} is numerically singular"
            f" (reciprocal condition {rcond[b]:.3g})"
        )


def inverse_correlation(sigma, method="analytic"):
    """Precision matrix of ``sigma``.

    ``method="analytic"`` writes the tridiagonal AR/CAR(1) inverse from the
    consecutive lags; ``method="dense"`` inverts each block by Cholesky and
    works for any positive definite block.
    """
    layout = sigma.layout
    model = sigma.model
    if model is not None and model.family == "identity":
        return PrecisionMatrix(layout, sigma.data.copy(), model, 0.0)
    if method == "dense" or model is None or sigma.lags is None:
        return _dense_inverse(sigma)
    if method != "analytic":
        raise ValueError(f"unknown method {method!r}")

    gap = sigma.lags
    has_next = ~np.isnan(gap)
    a_next = np.where(has_next, np.power(model.rho, np.where(has_next, gap, 0.0)), 0.0)
    d_next = 1.0 - a_next * a_next
    # reciprocal condition of the 2x2 link [[1,a],[a,1]]
    link_rcond = np.where(has_next, (1 - np.abs(a_next)) / (1 + np.abs(a_next)), 1.0)
    block_rcond = np.minimum.reduceat(link_rcond, layout.starts)
    _raise_if_illconditioned(block_rcond, layout)

    has_prev = layout.local > 0
    d_prev = np.ones(layout.n)
    d_prev[1:] = np.where(has_prev[1:], d_next[:-1], 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        diag = 1.0 / d_prev + np.where(has_next, a_next**2 / d_next, 0.0)
        off = np.where(has_next, -a_next / d_next, 0.0)

    data = np.zeros(layout.nnz)
    data[layout.diag_flat] = diag
    i = np.flatnonzero(has_next)
    data[layout.flat_index(i, i + 1)] = off[i]
    data[layout.flat_index(i + 1, i)] = off[i]
    logdet = float(np.sum(np.log(d_next[i])))
    return PrecisionMatrix(layout, data, model, logdet)


def _dense_inverse(sigma):
    layout = sigma.layout
    data = np.empty(layout.nnz)
    logdet = 0.0
    for b in range(layout.n_blocks):
        blk = sigma.block(b)
        s = blk.shape[0]
        rcond = 1.0 / np.linalg.cond(blk, 1)
        if not rcond >= RCOND_MIN:
            _raise_if_illconditioned(np.array([rcond]), layout, where=f" (group {b})")
        try:
            cf = scipy.linalg.cho_factor(blk, lower=True)
        except np.linalg.LinAlgError:
            raise ConditioningError(f"correlation block {b} is not positive definite") from None
        inv = scipy.linalg.cho_solve(cf, np.eye(s))
        o = int(layout.offsets[b])
        data[o:o + s * s] = ((inv + inv.T) / 2).ravel()
        logdet += 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    return PrecisionMatrix(layout, data, sigma.model, logdet)


def partial_correlation(prec):
    """Partial-correlation scaling of a precision matrix."""
    S = 1.0 / prec.diagonal()
    root = np.sqrt(S)
    lay = prec.layout
    data = prec.data * root[lay.pair_rows] * root[lay.pair_cols]
    data[lay.diag_flat] = 1.0
    return PartialCorrelation(S=S, C=BlockDiagonalMatrix(lay, data, prec.model))


def as_subset(M, n):
    """Validate a deletion subset: sorted unique 0-based indices, ``1 <= m < n``."""
    M = np.asarray(M, dtype=np.intp).ravel()
    if M.size == 0:
        raise ParameterDomainError("deletion subset is empty")
    Ms = np.unique(M)
    if Ms.size != M.size:
        raise ParameterDomainError("deletion subset has repeated indices")
    if Ms[0] < 0 or Ms[-1] >= n:
        raise ParameterDomainError(f"deletion subset indices must lie in [0, {n})")
    if Ms.size >= n:
        raise ParameterDomainError("deletion subset must leave at least one observation")
    return Ms


def deleted_precision(prec, M):
    """Inverse of the correlation matrix with rows/columns ``M`` removed.

    Computed from the full precision as the Schur complement
    ``P_KK - P_KM (P_MM)^-1 P_MK`` over the retained indices ``K``; no
    inversion of the reduced correlation matrix takes place.
    """
    M = as_subset(M, prec.n)
    K = np.setdiff1d(np.arange(prec.n), M)
    P_MM = prec.submatrix(M)
    if 1.0 / np.linalg.cond(P_MM, 1) < RCOND_MIN:
        raise ConditioningError("precision block of the deleted subset is singular")
    dense = prec.to_sparse()
    P_KM = dense[K][:, M].toarray()
    P_KK = dense[K][:, K].toarray()
    out = P_KK - P_KM @ np.linalg.solve(P_MM, P_KM.T)
    return (out + out.T) / 2
