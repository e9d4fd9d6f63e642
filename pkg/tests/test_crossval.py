import json

import numpy as np
import pytest

from glscv.covariance import CorrelationModel
from glscv.crossval import compare_folds, make_folds, refit_actual, simulate_kfold
from glscv.dataset import RegressionProblem
from glscv.diagnostics import loo_all
from glscv.errors import ParameterDomainError
from glscv.glsfit import fit_gls
from glscv.synthetic import random_problem


def flat_problem(n, n_subjects=None):
    n_subjects = n_subjects or n
    ids = [f"s{i * n_subjects // n:04d}" for i in range(n)]
    return RegressionProblem(Y=np.arange(n, dtype=float) % 7, X=np.ones((n, 1)), group_ids=ids,
                             times=np.arange(n, dtype=float))


def test_kfold_522_sizes():
    folds = make_folds(flat_problem(522), "kfold", k=10, seed=3)
    assert list(folds.sizes()) == [52] * 9 + [54]
    assert sorted(np.concatenate(folds.folds).tolist()) == list(range(522))


def test_kfold_deterministic_per_seed():
    prob = flat_problem(100)
    a = make_folds(prob, "kfold", k=7, seed=11)
    b = make_folds(prob, "kfold", k=7, seed=11)
    c = make_folds(prob, "kfold", k=7, seed=12)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


def test_loo_and_subject_folds():
    folds = make_folds(flat_problem(5), "loo")
    assert [f.tolist() for f in folds] == [[0], [1], [2], [3], [4]]
    prob = random_problem(np.random.default_rng(0), n_subjects=108, group_sizes=(1, 5), p=2)
    folds = make_folds(prob, "subject")
    assert len(folds) == 108
    assert set(folds.sizes()) <= {1, 2, 3, 4, 5}


def test_k_too_large():
    with pytest.raises(ParameterDomainError):
        make_folds(flat_problem(5), "kfold", k=6)


def test_refit_mean_model(mean_problem):
    act = refit_actual(mean_problem, CorrelationModel("identity"), [2])
    assert act.sigma2_deleted_actual == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(act.beta_deleted_actual, [0.0], atol=1e-15)


@pytest.mark.parametrize("family,rho", [("identity", 0.0), ("ar1", 0.4), ("car1", 0.6)])
def test_hold_fixed_is_exact(car1_problem, family, rho):
    fit = fit_gls(car1_problem, CorrelationModel(family, rho))
    for scheme in ("loo", "subject"):
        rep = compare_folds(fit, make_folds(car1_problem, scheme), "fixed")
        assert rep.summary["n_failed"] == 0
        assert rep.summary["max_abs_error"] <= 1e-6 * fit.rss
        for r in rep.records:
            assert abs(r.error) <= 1e-8 * max(1.0, abs(r.srd_actual))


def test_identity_random_subsets_exact(car1_problem):
    fit = fit_gls(car1_problem)
    rng = np.random.default_rng(5)
    for _ in range(20):
        M = np.sort(rng.choice(fit.n, size=rng.integers(1, 8), replace=False))
        act = refit_actual(car1_problem, fit.model, M, "reestimate")
        est = deletion_stats_srd(fit, M)
        actual = fit.rss - act.rss_deleted
        assert abs(actual - est) <= 1e-8 * max(1.0, abs(actual))


def deletion_stats_srd(fit, M):
    from glscv.diagnostics import deletion_stats
    return deletion_stats(fit, M).srd


def test_reestimate_error_tracks_rho_drift():
    prob = random_problem(np.random.default_rng(42), n_subjects=40, p=2, family="car1", rho=0.6,
                          times=[2, 4, 8, 12, 16])
    fit = fit_gls(prob, CorrelationModel("car1", 0.5), estimate_rho=True)
    rep = compare_folds(fit, make_folds(prob, "subject"), "reestimate")
    drifts = np.array([r.rho_drift for r in rep.records])
    errors = np.array([r.error for r in rep.records])
    assert np.any(drifts != 0)
    big = np.abs(drifts) > 1e-3
    assert np.mean(np.sign(errors[big]) == np.sign(drifts[big])) > 0.9
    assert rep.summary["corr_error_rho_drift"] > 0


def test_report_summary_recomputable_and_written(tmp_path, car1_problem):
    fit = fit_gls(car1_problem, CorrelationModel("car1", 0.6))
    rep = compare_folds(fit, make_folds(car1_problem, "subject"), "fixed")
    s = rep.summary
    assert s["n_folds"] == len(rep.records) == car1_problem.layout.n_blocks
    assert s["mean_srd_est"] == pytest.approx(np.mean([r.srd_est for r in rep.records]))
    csv_path, json_path = rep.write(tmp_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("fold_id,m,srd_est,srd_actual,lmocv_sq,cook_multiple,rho_full,"
                               "rho_deleted,error")
    assert len(lines) == len(rep.records) + 1
    summary = json.loads(json_path.read_text())
    assert summary["mean_srd_actual"] == pytest.approx(s["mean_srd_actual"], rel=1e-11)


def test_failed_fold_flagged():
    X = np.column_stack([np.ones(6), [0, 0, 0, 0, 0, 1.0]])
    prob = RegressionProblem(Y=np.arange(6.0), X=X, group_ids=list("abcdef"), times=[0] * 6)
    rep = compare_folds(fit_gls(prob), make_folds(prob, "loo"))
    assert rep.records[5].status.startswith("failed")
    assert rep.summary["n_failed"] == 1
    assert all(r.status == "ok" for r in rep.records[:5])


def test_simulation_loo_degenerate(car1_problem):
    model = CorrelationModel("car1", 0.6)
    sim = simulate_kfold(car1_problem, model, k=car1_problem.n, n_sims=1, seed=9)
    loo = np.array([s.srd for s in loo_all(fit_gls(car1_problem, model))])
    assert np.all(sim.fold_sizes == 1)
    np.testing.assert_allclose(np.sort(sim.fold_srd[0]), np.sort(loo), rtol=1e-12)


def test_simulation_partition_and_means(car1_problem):
    sim = simulate_kfold(car1_problem, CorrelationModel("car1", 0.6), k=5, n_sims=6, seed=1,
                         watched_index=3)
    assert np.all(sim.fold_sizes.sum(axis=1) == car1_problem.n)
    assert np.all(sim.contains_watched.sum(axis=1) == 1)
    np.testing.assert_allclose(sim.sim_means, sim.fold_srd.mean(axis=1), rtol=0, atol=1e-12)
    # fold order within a simulation does not change the partition sum
    perm = np.random.default_rng(0).permutation(5)
    assert sim.fold_srd[0, perm].sum() == pytest.approx(sim.fold_srd[0].sum(), rel=1e-14)


def test_simulation_bitwise_reproducible(tmp_path, car1_problem):
    model = CorrelationModel("car1", 0.6)
    outs = []
    for run in ("a", "b"):
        sim = simulate_kfold(car1_problem, model, k=4, n_sims=5, seed=77, watched_index=0)
        paths = sim.write(tmp_path / run)
        outs.append([p.read_bytes() for p in paths])
    assert outs[0] == outs[1]
    other = simulate_kfold(car1_problem, model, k=4, n_sims=5, seed=78)
    assert not np.array_equal(other.fold_srd, sim.fold_srd)
