"""Synthetic longitudinal regression problems for tests and the ``check`` command."""

from __future__ import annotations

import numpy as np

from .covariance import CorrelationModel, build_correlation
from .dataset import RegressionProblem


def random_problem(rng, n_subjects=20, group_sizes=(1, 6), p=3, family="car1", rho=0.6,
                   sigma=1.0, times=None):
    """Draw a problem with correlated errors.

    Each subject gets a random number of observations in ``group_sizes``
    (inclusive) at increasing times, unless ``times`` fixes a common schedule.
    Column 0 of ``X`` is an intercept; the others are standard normal, with
    one subject-level column when ``p >= 3``.
    """
    ids, t = [], []
    for s in range(n_subjects):
        if times is not None:
            tt = np.asarray(times, dtype=float)
        else:
            g = int(rng.integers(group_sizes[0], group_sizes[1] + 1))
            tt = np.cumsum(rng.uniform(0.5, 3.0, size=g))
        ids.extend([f"s{s:03d}"] * len(tt))
        t.extend(tt)
    n = len(ids)
    X = np.ones((n, p))
    if p > 1:
        X[:, 1:] = rng.standard_normal((n, p - 1))
    if p >= 3:
        subj = rng.standard_normal(n_subjects)
        _, first = np.unique(ids, return_inverse=True)
        X[:, 2] = subj[first]
    beta = rng.normal(0.0, 2.0, size=p)
    model = CorrelationModel(family, rho if family != "identity" else 0.0)
    ids = np.array(ids, dtype=object)
    t = np.array(t)
    corr = build_correlation(model, ids, t)
    e = np.empty(n)
    for sl, blk in zip(_slices(ids), corr.blocks):
        L = np.linalg.cholesky(blk)
        e[sl] = L @ rng.standard_normal(len(blk))
    Y = X @ beta + sigma * e
    return RegressionProblem(Y=Y, X=X, group_ids=ids, times=t,
                             column_names=tuple(["(Intercept)"] + [f"x{j}" for j in range(1, p)]))


def _slices(ids):
    out, start = [], 0
    for i in range(1, len(ids) + 1):
        if i == len(ids) or ids[i] != ids[start]:
            out.append(slice(start, i))
            start = i
    return out
