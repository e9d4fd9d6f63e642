"""Fold construction, brute-force refit oracle and K-fold simulation.

The refit oracle is deliberately naive: it drops the rows of a fold, builds
a fresh problem and calls :func:`fit_gls` again.  Comparing it with the
closed-form diagnostics checks the single-fit formulas, and with
``rho_policy="reestimate"`` it shows how far they drift once the
correlation parameter moves.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import deletion_stats
from .errors import GlsError, ParameterDomainError
from .glsfit import fit_gls

SCHEMES = ("loo", "leave_subject", "kfold")
_SCHEME_ALIASES = {"subject": "leave_subject", "lso": "leave_subject"}
_POLICY_ALIASES = {
    "fixed": "hold_fixed", "hold_fixed": "hold_fixed",
    "reestimate": "re_estimate", "re_estimate": "re_estimate",
}
REPORT_COLUMNS = (
    "fold_id", "m", "srd_est", "srd_actual", "lmocv_sq", "cook_multiple",
    "rho_full", "rho_deleted", "error", "rho_drift", "status",
)


def format_number(x):
    """12 significant digits; enough to check 1e-9 relative identities from files."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.12g}"


def json_number(x):
    x = float(x)
    return None if not math.isfinite(x) else float(f"{x:.12g}")


def _policy(rho_policy):
    try:
        return _POLICY_ALIASES[rho_policy]
    except KeyError:
        raise ParameterDomainError(f"unknown rho policy {rho_policy!r}") from None


@dataclass(frozen=True)
class FoldSet:
    scheme: str
    folds: tuple
    seed: int | None = None

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)

    def sizes(self):
        return np.array([len(f) for f in self.folds])


def _kfold_partition(n, k, rng):
    perm = rng.permutation(n)
    size = n // k
    cuts = [size * j for j in range(k)] + [n]
    return tuple(np.sort(perm[cuts[j]:cuts[j + 1]]) for j in range(k))


def make_folds(problem, scheme, k=None, seed=None):
    """Partition observations into folds.

    ``kfold`` shuffles with a PCG64 generator seeded by ``seed`` and gives
    the first ``k - 1`` folds ``n // k`` observations, the last one the
    rest.  ``leave_subject`` yields one fold per subject block.
    """
    scheme = _SCHEME_ALIASES.get(scheme, scheme)
    n = problem.n
    if scheme == "loo":
        return FoldSet("loo", tuple(np.array([i]) for i in range(n)))
    if scheme == "leave_subject":
        return FoldSet("leave_subject", tuple(problem.group_indices()))
    if scheme != "kfold":
        raise ParameterDomainError(f"unknown fold scheme {scheme!r}; expected one of {SCHEMES}")
    if k is None or k < 2:
        raise ParameterDomainError("kfold needs k >= 2")
    if k > n:
        raise ParameterDomainError(f"k={k} exceeds the number of observations n={n}")
    seed = 0 if seed is None else int(seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    return FoldSet("kfold", _kfold_partition(n, k, rng), seed)


@dataclass(frozen=True)
class ActualDeletion:
    M: np.ndarray
    sigma2_deleted_actual: float
    rss_deleted: float
    rho_deleted: float
    beta_deleted_actual: np.ndarray


def refit_actual(problem, model, M, rho_policy="hold_fixed"):
    """Refit the model without the rows ``M``.

    ``hold_fixed`` keeps ``model.rho``; ``re_estimate`` re-runs the REML
    search on the reduced data.  Subjects that lose all their rows simply
    disappear from the reduced problem.
    """
    policy = _policy(rho_policy)
    reduced = problem.without(M)
    estimate = policy == "re_estimate" and model.family != "identity"
    try:
        fit = fit_gls(reduced, model, estimate_rho=estimate)
    except GlsError as exc:
        raise type(exc)(f"refit without {np.asarray(M).tolist()}: {exc}") from exc
    return ActualDeletion(
        M=np.asarray(M),
        sigma2_deleted_actual=fit.sigma2_hat,
        rss_deleted=fit.rss,
        rho_deleted=fit.rho_hat,
        beta_deleted_actual=fit.beta_hat,
    )


@dataclass(frozen=True)
class FoldRecord:
    fold_id: int
    m: int
    srd_est: float
    srd_actual: float
    lmocv_sq: float
    cook_multiple: float
    rho_full: float
    rho_deleted: float
    status: str = "ok"

    @property
    def error(self):
        """Actual minus estimated squared residual difference."""
        return self.srd_actual - self.srd_est

    @property
    def rho_drift(self):
        """Full-data ``rho`` minus the reduced-data ``rho``."""
        return self.rho_full - self.rho_deleted

    def row(self):
        return {c: getattr(self, c) for c in REPORT_COLUMNS}


def _pearson(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    keep = np.isfinite(a) & np.isfinite(b)
    a, b = a[keep], b[keep]
    if len(a) < 3 or np.std(a) == 0 or np.std(b) == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


@dataclass(frozen=True)
class OracleReport:
    scheme: str
    rho_policy: str
    records: tuple = field(default_factory=tuple)

    def good(self):
        return [r for r in self.records if r.status == "ok"]

    @property
    def summary(self):
        good = self.good()

        def mean(attr):
            vals = [getattr(r, attr) for r in good]
            return float(np.mean(vals)) if vals else float("nan")

        return {
            "scheme": self.scheme,
            "rho_policy": self.rho_policy,
            "n_folds": len(self.records),
            "n_failed": len(self.records) - len(good),
            "mean_srd_est": mean("srd_est"),
            "mean_srd_actual": mean("srd_actual"),
            "mean_lmocv_sq": mean("lmocv_sq"),
            "mean_cook_multiple": mean("cook_multiple"),
            "max_abs_error": max((abs(r.error) for r in good), default=float("nan")),
            "corr_error_rho_drift": _pearson([r.error for r in good], [r.rho_drift for r in good]),
        }

    def write(self, out_dir, stem="cv"):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / f"{stem}_folds.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in self.records:
                row = r.row()
                w.writerow([row[c] if c == "status" else format_number(row[c]) for c in REPORT_COLUMNS])
        summary = {k: (json_number(v) if isinstance(v, float) else v) for k, v in self.summary.items()}
        (out_dir / f"{stem}_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        return out_dir / f"{stem}_folds.csv", out_dir / f"{stem}_summary.json"


def compare_folds(fit, folds, rho_policy="hold_fixed"):
    """Closed-form versus refit deletion quantities for every fold.

    Failing folds (singular deletion, rank-deficient refit) are kept as
    flagged rows with NaN values.
    """
    policy = _policy(rho_policy)
    problem = fit.problem
    full_rss = fit.rss
    records = []
    for j, M in enumerate(folds):
        try:
            est = deletion_stats(fit, M)
            act = refit_actual(problem, fit.model, M, policy)
        except GlsError as exc:
            nan = float("nan")
            records.append(FoldRecord(j, len(M), nan, nan, nan, nan, fit.rho_hat, nan,
                                      status=f"failed: {exc}".replace("\n", " ")))
            continue
        records.append(FoldRecord(
            fold_id=j,
            m=len(M),
            srd_est=est.srd,
            srd_actual=full_rss - act.rss_deleted,
            lmocv_sq=est.lmocv_sq,
            cook_multiple=est.cook_multiple,
            rho_full=fit.rho_hat,
            rho_deleted=act.rho_deleted,
        ))
    scheme = folds.scheme if isinstance(folds, FoldSet) else "custom"
    return OracleReport(scheme=scheme, rho_policy=policy, records=tuple(records))


@dataclass(frozen=True)
class SimulationSummary:
    """Estimated SRDs from repeated random K-fold partitions.

    Arrays indexed ``[simulation, fold]``; ``watched_index`` is 0-based.
    """

    n_sims: int
    k: int
    seed: int
    fold_srd: np.ndarray
    fold_sizes: np.ndarray
    contains_watched: np.ndarray
    watched_index: int | None = None

    @property
    def sim_means(self):
        return np.nanmean(self.fold_srd, axis=1)

    def write(self, out_dir, stem="simulation"):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / f"{stem}_folds.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sim", "fold", "m", "srd_est", "contains_watched"])
            for s in range(self.n_sims):
                for j in range(self.k):
                    w.writerow([s, j, int(self.fold_sizes[s, j]),
                                format_number(self.fold_srd[s, j]),
                                int(self.contains_watched[s, j])])
        means = self.sim_means
        flat = self.fold_srd[np.isfinite(self.fold_srd)]
        summary = {
            "n_sims": self.n_sims,
            "k": self.k,
            "seed": self.seed,
            "watched_index": self.watched_index,
            "watched_observation": None if self.watched_index is None else self.watched_index + 1,
            "n_folds_with_watched": int(self.contains_watched.sum()),
            "mean_fold_srd": json_number(flat.mean()) if flat.size else None,
            "sd_fold_srd": json_number(flat.std(ddof=1)) if flat.size > 1 else None,
            "sd_sim_means": json_number(np.std(means, ddof=1)) if self.n_sims > 1 else None,
            "sim_means": [json_number(v) for v in means],
        }
        (out_dir / f"{stem}_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        return out_dir / f"{stem}_folds.csv", out_dir / f"{stem}_summary.json"


def simulate_kfold(problem, model, k, n_sims, seed, watched_index=None, estimate_rho=False):
    """Estimated SRD of every fold over ``n_sims`` random K-fold partitions.

    The model is fitted once; no refits happen.  Simulation ``s`` draws its
    partition from the ``s``-th child of ``SeedSequence(seed)``, so results
    do not depend on evaluation order.
    """
    if n_sims < 1:
        raise ParameterDomainError("n_sims must be at least 1")
    if k is None or k < 2 or k > problem.n:
        raise ParameterDomainError(f"need 2 <= k <= n, got k={k}")
    if watched_index is not None and not 0 <= watched_index < problem.n:
        raise ParameterDomainError(f"watched index {watched_index} outside [0, {problem.n})")
    fit = fit_gls(problem, model, estimate_rho=estimate_rho)
    children = np.random.SeedSequence(int(seed)).spawn(n_sims)
    srd = np.empty((n_sims, k))
    sizes = np.empty((n_sims, k), dtype=int)
    watched = np.zeros((n_sims, k), dtype=bool)
    for s, child in enumerate(children):
        folds = _kfold_partition(problem.n, k, np.random.Generator(np.random.PCG64(child)))
        for j, M in enumerate(folds):
            sizes[s, j] = len(M)
            if watched_index is not None:
                watched[s, j] = watched_index in M
            try:
                srd[s, j] = deletion_stats(fit, M).srd
            except GlsError:
                srd[s, j] = np.nan
    return SimulationSummary(
        n_sims=n_sims, k=k, seed=int(seed), fold_srd=srd, fold_sizes=sizes,
        contains_watched=watched, watched_index=watched_index,
    )
