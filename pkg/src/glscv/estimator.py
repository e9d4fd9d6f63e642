"""scikit-learn compatible wrapper around :func:`glscv.glsfit.fit_gls`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .covariance import CorrelationModel
from .crossval import compare_folds, make_folds
from .dataset import RegressionProblem, row_order
from .diagnostics import deletion_stats, loo_arrays
from .glsfit import fit_gls


class GLSRegressor(RegressorMixin, BaseEstimator):
    """Generalised least squares with within-group AR(1)/CAR(1) correlation.

    Parameters
    ----------
    family : {"identity", "ar1", "car1"}, default="identity"
        Within-group correlation structure. ``"identity"`` is OLS.
    rho : float, default=0.5
        Correlation parameter, used as-is unless ``estimate_rho``.
    estimate_rho : bool, default=False
        Choose ``rho`` by profile restricted maximum likelihood.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    sigma2_ : float
    rho_ : float
    fit_ : GlsFit
        Full fit on rows sorted by (group, time).
    order_ : ndarray
        ``order_[k]`` is the input row sitting at position ``k`` of the
        sorted problem; diagnostic indices refer to sorted positions.

    Notes
    -----
    ``fit`` takes ``groups`` and ``times`` as extra keyword arguments.
    Without ``groups`` all rows form one series; without ``times`` the
    input order is the time order.
    """

    def __init__(self, family="identity", rho=0.5, estimate_rho=False):
        self.family = family
        self.rho = rho
        self.estimate_rho = estimate_rho

    def _model(self):
        rho = 0.0 if self.family == "identity" else self.rho
        return CorrelationModel(self.family, rho)

    def fit(self, X, y, groups=None, times=None):
        X, y = check_X_y(X, y, y_numeric=True)
        n = len(X)
        groups = np.zeros(n, dtype=object) if groups is None else np.asarray(groups, dtype=object)
        times = np.arange(n, dtype=float) if times is None else np.asarray(times, dtype=float)
        self.order_ = row_order(groups, times)
        problem = RegressionProblem.from_arrays(X, y, groups, times)
        estimate = self.estimate_rho and self.family != "identity"
        self.fit_ = fit_gls(problem, self._model(), estimate_rho=estimate)
        self.coef_ = self.fit_.beta_hat
        self.sigma2_ = self.fit_.sigma2_hat
        self.rho_ = self.fit_.rho_hat
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but GLSRegressor is expecting"
                f" {self.n_features_in_} features as input"
            )
        return X @ self.coef_

    def loo_diagnostics(self):
        """Leave-one-out diagnostics as arrays in the caller's row order."""
        check_is_fitted(self, "fit_")
        a = loo_arrays(self.fit_)
        inv = np.empty_like(self.order_)
        inv[self.order_] = np.arange(len(self.order_))
        return {k: v[inv] for k, v in a.items()}

    def deletion_diagnostics(self, rows):
        """:class:`DeletionStats` for deleting input rows ``rows`` together."""
        check_is_fitted(self, "fit_")
        inv = np.empty_like(self.order_)
        inv[self.order_] = np.arange(len(self.order_))
        return deletion_stats(self.fit_, np.sort(inv[np.asarray(rows)]))

    def cv_report(self, scheme="loo", k=None, seed=None, rho_policy="hold_fixed"):
        """Closed-form versus refit comparison over a fold scheme."""
        check_is_fitted(self, "fit_")
        folds = make_folds(self.fit_.problem, scheme, k=k, seed=seed)
        return compare_folds(self.fit_, folds, rho_policy)
