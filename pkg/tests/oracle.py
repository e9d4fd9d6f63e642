"""Dense brute-force reference computations, independent of the package internals."""

import numpy as np


def dense_corr(family, rho, groups, coord):
    groups = np.asarray(groups)
    coord = np.asarray(coord, dtype=float)
    same = groups[:, None] == groups[None, :]
    if family == "identity":
        return np.eye(len(groups))
    with np.errstate(divide="ignore"):
        S = np.float_power(rho, np.abs(coord[:, None] - coord[None, :]))
    return np.where(same, S, 0.0)


def positions(groups):
    groups = list(groups)
    out, count = [], {}
    for g in groups:
        out.append(count.get(g, 0))
        count[g] = count.get(g, 0) + 1
    return np.array(out, dtype=float)


def problem_corr(problem, family, rho):
    coord = problem.times if family == "car1" else problem.positions
    return dense_corr(family, rho, problem.group_ids, coord)


def dense_gls(Y, X, Sigma):
    """beta, residuals and generalised RSS by explicit inversion."""
    Si = np.linalg.inv(Sigma)
    beta = np.linalg.solve(X.T @ Si @ X, X.T @ Si @ Y)
    r = Y - X @ beta
    return beta, r, float(r @ Si @ r)


def dense_reml(Y, X, Sigma):
    n, p = X.shape
    Si = np.linalg.inv(Sigma)
    _, r, rss = dense_gls(Y, X, Sigma)
    return -0.5 * ((n - p) * np.log(rss) + np.linalg.slogdet(Sigma)[1]
                   + np.linalg.slogdet(X.T @ Si @ X)[1])


def refit_without(Y, X, Sigma, M):
    """Actual reduced-data fit: delete rows/cols M of Sigma and refit densely."""
    keep = np.setdiff1d(np.arange(len(Y)), M)
    return dense_gls(Y[keep], X[keep], Sigma[np.ix_(keep, keep)])


def ols_rss_without(Y, X, M):
    """Residual sum of squares of the least-squares fit without rows M."""
    keep = np.setdiff1d(np.arange(len(Y)), M)
    beta, *_ = np.linalg.lstsq(X[keep], Y[keep], rcond=None)
    r = Y[keep] - X[keep] @ beta
    return float(r @ r), beta
