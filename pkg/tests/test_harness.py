"""Tests for the run driver, tuner, reference solver, verifier, and trace I/O."""

import numpy as np
import pytest

from agghb.harness import (
    RunConfig,
    Trace,
    TuningError,
    VerificationRefused,
    TUNING_GRID,
    bound_checkpoints,
    build_problem,
    export_trace,
    read_trace,
    reference_solution,
    resolve_data_path,
    run,
    tune,
    verify_bounds,
)
from agghb.problems import Problem, logreg_l2, quadratic, rosenbrock

from conftest import synthetic_libsvm_text


def identity_quadratic(dim=1):
    return quadratic(np.eye(dim), np.zeros(dim))


class TestRunConfig:
    def test_theory_mode_rejects_gammas(self):
        with pytest.raises(ValueError, match="must not carry"):
            RunConfig(
                problem="quadratic", optimizer="hb", betas=(0.9,),
                stepsize_mode="theory-cvx", gammas=(0.1,), iters=10,
            )

    def test_explicit_mode_requires_gammas(self):
        with pytest.raises(ValueError, match="requires explicit"):
            RunConfig(
                problem="quadratic", optimizer="hb", betas=(0.9,),
                stepsize_mode="explicit", iters=10,
            )

    def test_gd_requires_zero_momentum(self):
        with pytest.raises(ValueError, match="zero"):
            RunConfig(
                problem="quadratic", optimizer="gd", betas=(0.5,),
                stepsize_mode="explicit", gammas=(0.1,), iters=10,
            )

    def test_hb_requires_single_beta(self):
        with pytest.raises(ValueError, match="exactly one"):
            RunConfig(
                problem="quadratic", optimizer="hb", betas=(0.9, 0.5),
                stepsize_mode="explicit", gammas=(0.1, 0.1), iters=10,
            )

    def test_budget_positive(self):
        with pytest.raises(ValueError, match="budget"):
            RunConfig(
                problem="quadratic", optimizer="hb", betas=(0.9,),
                stepsize_mode="theory-cvx", iters=0,
            )


class TestRun:
    def test_gd_identity_quadratic_one_exact_step(self):
        problem = identity_quadratic()
        cfg = RunConfig(
            problem="quadratic", optimizer="gd", betas=(0.0,),
            stepsize_mode="explicit", gammas=(1.0,), iters=1,
            problem_params={"x0": [1.0]},
        )
        trace = run(cfg, problem)
        np.testing.assert_array_equal(trace.f, [0.5, 0.0])
        np.testing.assert_array_equal(trace.grad_norm, [1.0, 0.0])
        assert not trace.diverged

    def test_hand_simulated_two_buffer_objective_values(self):
        problem = identity_quadratic()  # f(x) = x^2 / 2
        cfg = RunConfig(
            problem="quadratic", optimizer="agghb", betas=(0.0, 0.5),
            stepsize_mode="explicit", gammas=(0.1, 0.1), iters=2,
            problem_params={"x0": [1.0]},
        )
        trace = run(cfg, problem)
        np.testing.assert_allclose(trace.f, [0.5, 0.405, 0.3081125], rtol=1e-12)

    def test_hb_kind_equals_agghb_kind_with_same_settings(self):
        problem = quadratic(np.diag([1.0, 4.0]), np.array([1.0, 0.0]))
        common = dict(
            problem="quadratic", betas=(0.9,), stepsize_mode="explicit",
            gammas=(0.05,), iters=300, problem_params={"x0": [2.0, -1.0]},
        )
        t_hb = run(RunConfig(optimizer="hb", **common), problem)
        t_agg = run(RunConfig(optimizer="agghb", **common), problem)
        np.testing.assert_array_equal(t_hb.f, t_agg.f)
        np.testing.assert_array_equal(t_hb.grad_norm, t_agg.grad_norm)

    def test_determinism_bitwise(self):
        problem = quadratic(np.diag([1.0, 2.0, 5.0]), np.ones(3))
        cfg = RunConfig(
            problem="quadratic", optimizer="agghb", betas=(0.9, 0.5),
            stepsize_mode="theory-cvx", iters=200, seed=3,
        )
        t1, t2 = run(cfg, problem), run(cfg, problem)
        np.testing.assert_array_equal(t1.f, t2.f)
        np.testing.assert_array_equal(t1.grad_norm, t2.grad_norm)
        np.testing.assert_array_equal(t1.f_avg, t2.f_avg)

    def test_prefix_property(self):
        problem = quadratic(np.diag([1.0, 2.0]), np.zeros(2))
        base = dict(
            problem="quadratic", optimizer="agghb", betas=(0.8, 0.3),
            stepsize_mode="explicit", gammas=(0.05, 0.02), seed=1,
        )
        short = run(RunConfig(iters=50, **base), problem)
        long = run(RunConfig(iters=100, **base), problem)
        np.testing.assert_array_equal(short.f, long.f[:51])
        np.testing.assert_array_equal(short.grad_norm, long.grad_norm[:51])

    def test_divergence_truncates_and_flags(self):
        problem = identity_quadratic()
        cfg = RunConfig(
            problem="quadratic", optimizer="hb", betas=(0.9,),
            stepsize_mode="explicit", gammas=(1e150,), iters=50,
            problem_params={"x0": [1.0]},
        )
        trace = run(cfg, problem)
        assert trace.diverged
        assert len(trace.f) <= 51
        assert np.all(np.isfinite(trace.f[:-1]))

    def test_virtual_residual_tracked_small(self):
        problem = quadratic(np.diag([1.0, 3.0]), np.array([1.0, 3.0]))
        cfg = RunConfig(
            problem="quadratic", optimizer="agghb", betas=(0.9, 0.99),
            stepsize_mode="theory-ncvx", iters=500, seed=0,
        )
        trace = run(cfg, problem)
        assert trace.max_virtual_residual <= 1e-10

    def test_f_avg_only_in_convex_theory_mode(self):
        problem = identity_quadratic(2)
        base = dict(
            problem="quadratic", optimizer="hb", betas=(0.5,), iters=20, seed=0,
        )
        with_avg = run(RunConfig(stepsize_mode="theory-cvx", **base), problem)
        without = run(RunConfig(stepsize_mode="theory-ncvx", **base), problem)
        assert with_avg.f_avg is not None and len(with_avg.f_avg) == len(with_avg.f)
        assert without.f_avg is None

    def test_unresolved_tune_mode_rejected(self):
        problem = identity_quadratic()
        cfg = RunConfig(
            problem="quadratic", optimizer="hb", betas=(0.5,),
            stepsize_mode="tune", iters=10,
        )
        with pytest.raises(ValueError, match="unresolved"):
            run(cfg, problem)

    def test_constants_snapshot_recorded(self):
        problem = identity_quadratic(2)
        cfg = RunConfig(
            problem="quadratic", optimizer="hb", betas=(0.9,),
            stepsize_mode="theory-cvx", iters=10, seed=0,
        )
        trace = run(cfg, problem)
        for key in ("A", "C", "D", "E", "F", "B", "beta_tilde", "beta_hat"):
            assert key in trace.constants


class TestTune:
    def _base(self, betas=(0.0,), iters=10, optimizer="gd", params=None):
        return RunConfig(
            problem="quadratic", optimizer=optimizer, betas=betas,
            stepsize_mode="tune", iters=iters,
            problem_params=params or {"x0": [1.0]},
        )

    def test_grid_has_fifteen_points(self):
        assert len(TUNING_GRID) == 15
        assert TUNING_GRID[0] == 2.0 ** -6
        assert TUNING_GRID[-1] == 2.0 ** 8

    def test_identity_quadratic_prefers_unit_step(self):
        problem = identity_quadratic()
        best, sweep = tune(self._base(), problem)
        assert len(sweep) == 15
        assert best.stepsize_mode == "tuned"
        assert best.gammas == (1.0,)  # a = 2^0 lands f exactly at the optimum

    def test_tie_broken_toward_smaller_step(self):
        problem = identity_quadratic()
        best, _ = tune(self._base(params={"x0": [0.0]}), problem)
        assert best.gammas == (TUNING_GRID[0] / problem.L,)

    def test_all_diverged_raises_with_sweep(self):
        lying = Problem(
            name="quadratic", dim=1,
            value=lambda x: float(5e5 * x[0] * x[0]),
            gradient=lambda x: 1e6 * x,
            L=1e-12, convex=True,
        )
        with pytest.raises(TuningError) as exc:
            tune(self._base(iters=400), lying)
        assert len(exc.value.sweep) == 15
        assert all(e.diverged for e in exc.value.sweep)

    def test_parallel_matches_serial(self):
        problem = quadratic(np.diag([1.0, 3.0]), np.array([0.5, -0.5]))
        base = self._base(betas=(0.9,), optimizer="hb", iters=50,
                          params={"x0": [1.0, 1.0]})
        best1, sweep1 = tune(base, problem, jobs=1)
        best4, sweep4 = tune(base, problem, jobs=4)
        assert best1 == best4
        assert sweep1 == sweep4

    def test_requires_tune_mode(self):
        cfg = RunConfig(
            problem="quadratic", optimizer="gd", betas=(0.0,),
            stepsize_mode="explicit", gammas=(0.1,), iters=10,
        )
        with pytest.raises(ValueError, match="mode 'tune'"):
            tune(cfg, identity_quadratic())


class TestReferenceSolution:
    def test_quadratic_closed_form(self):
        problem = quadratic(np.diag([1.0, 3.0]), np.array([1.0, 3.0]))
        ref = reference_solution(problem)
        np.testing.assert_allclose(ref.x, [1.0, 1.0], rtol=1e-12)
        assert ref.f == pytest.approx(-2.0, rel=1e-12)
        assert ref.grad_norm <= 1e-12

    def test_logreg_descent_with_certificate(self, small_dataset):
        problem = logreg_l2(small_dataset, l2=1e-3)
        ref = reference_solution(problem)
        assert ref.grad_norm <= 1e-10
        assert np.all(np.isfinite(ref.x))
        # no direction improves on it noticeably
        assert problem.value(ref.x) <= problem.value(ref.x + 1e-4) + 1e-12

    def test_nonconvex_rejected(self):
        with pytest.raises(ValueError, match="not convex"):
            reference_solution(rosenbrock())


class TestVerifyBounds:
    def test_checkpoints(self):
        assert bound_checkpoints(10_000) == [10, 100, 1000, 10_000]
        assert bound_checkpoints(500) == [10, 100, 500]
        assert bound_checkpoints(5) == [5]
        assert bound_checkpoints(10) == [10]

    def test_convex_bound_holds_on_quadratic(self):
        problem = quadratic(np.diag([1.0, 3.0]), np.array([1.0, 3.0]))
        cfg = RunConfig(
            problem="quadratic", optimizer="hb", betas=(0.9,),
            stepsize_mode="theory-cvx", iters=1000, seed=2,
        )
        report = verify_bounds(run(cfg, problem), problem)
        assert report.passed
        assert report.mode == "theory-cvx"
        assert [r.K for r in report.rows] == [10, 100, 1000]
        assert report.certificate is not None

    def test_nonconvex_bound_holds_on_quadratic(self):
        problem = quadratic(np.diag(np.arange(1.0, 6.0)), np.zeros(5))
        cfg = RunConfig(
            problem="quadratic", optimizer="agghb", betas=(0.9, 0.95),
            stepsize_mode="theory-ncvx", iters=1000, seed=4,
        )
        report = verify_bounds(run(cfg, problem), problem)
        assert report.passed
        for row in report.rows:
            assert row.observed <= row.bound

    def test_tuned_trace_refused(self):
        problem = identity_quadratic()
        best, _ = tune(
            RunConfig(
                problem="quadratic", optimizer="gd", betas=(0.0,),
                stepsize_mode="tune", iters=10, problem_params={"x0": [1.0]},
            ),
            problem,
        )
        trace = run(best, problem)
        with pytest.raises(VerificationRefused, match="tuned"):
            verify_bounds(trace, problem)

    def test_explicit_trace_refused(self):
        problem = identity_quadratic()
        cfg = RunConfig(
            problem="quadratic", optimizer="gd", betas=(0.0,),
            stepsize_mode="explicit", gammas=(0.5,), iters=10,
            problem_params={"x0": [1.0]},
        )
        with pytest.raises(VerificationRefused):
            verify_bounds(run(cfg, problem), problem)

    def test_start_at_optimum_trivially_passes(self):
        problem = quadratic(np.diag([2.0, 2.0]), np.zeros(2))
        cfg = RunConfig(
            problem="quadratic", optimizer="hb", betas=(0.9,),
            stepsize_mode="theory-ncvx", iters=100,
            problem_params={"x0": [0.0, 0.0]},
        )
        report = verify_bounds(run(cfg, problem), problem)
        assert report.passed
        assert all(r.bound == 0.0 and r.observed == 0.0 for r in report.rows)


class TestTraceExport:
    def _trace(self, iters=3):
        problem = quadratic(np.diag([1.0, 3.0]), np.array([1.0, 3.0]))
        cfg = RunConfig(
            problem="quadratic", optimizer="hb", betas=(0.9,),
            stepsize_mode="theory-cvx", iters=iters, seed=0,
        )
        return run(cfg, problem)

    def test_row_count_and_header(self, tmp_path):
        trace = self._trace(3)
        csv_path, meta_path = export_trace(trace, tmp_path / "t.csv")
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "k,f,grad_norm,dist_opt,f_avg"
        assert len(lines) == 5  # header + k = 0..3
        assert meta_path.name == "t.meta.json"

    def test_byte_determinism(self, tmp_path):
        trace = self._trace(5)
        p1, m1 = export_trace(trace, tmp_path / "a.csv")
        p2, m2 = export_trace(trace, tmp_path / "b.csv")
        assert p1.read_bytes() == p2.read_bytes()
        assert m1.read_bytes() == m2.read_bytes()

    def test_empty_trace_header_only(self, tmp_path):
        cfg = RunConfig(
            problem="quadratic", optimizer="gd", betas=(0.0,),
            stepsize_mode="explicit", gammas=(0.1,), iters=1,
        )
        empty = Trace(
            ks=np.array([], dtype=int), f=np.array([]), grad_norm=np.array([]),
            dist_opt=None, f_avg=None, config=cfg, gammas=(0.1,), constants={},
            x0=np.zeros(1), wall_time=0.0, diverged=False,
            max_virtual_residual=0.0,
        )
        csv_path, _ = export_trace(empty, tmp_path / "e.csv")
        assert csv_path.read_text() == "k,f,grad_norm,dist_opt,f_avg\n"

    def test_read_back_roundtrip(self, tmp_path):
        trace = self._trace(4)
        csv_path, _ = export_trace(trace, tmp_path / "t.csv")
        loaded = read_trace(csv_path)
        np.testing.assert_array_equal(loaded.f, trace.f)
        np.testing.assert_array_equal(loaded.grad_norm, trace.grad_norm)
        np.testing.assert_array_equal(loaded.f_avg, trace.f_avg)
        np.testing.assert_array_equal(loaded.x0, trace.x0)
        assert loaded.config == trace.config
        assert loaded.gammas == trace.gammas

    def test_read_corrupted_reports_line(self, tmp_path):
        trace = self._trace(3)
        csv_path, _ = export_trace(trace, tmp_path / "t.csv")
        text = csv_path.read_text().splitlines()
        text[2] = "1,not_a_number,0,,"
        csv_path.write_text("\n".join(text) + "\n")
        with pytest.raises(ValueError, match="line 3"):
            read_trace(csv_path)

    def test_verify_from_reloaded_trace(self, tmp_path):
        problem = quadratic(np.diag(np.arange(1.0, 11.0)), np.zeros(10))
        cfg = RunConfig(
            problem="quadratic", optimizer="hb", betas=(0.9,),
            stepsize_mode="theory-ncvx", iters=200, seed=0,
            problem_params={"dim": 10},
        )
        export_trace(run(cfg, problem), tmp_path / "t.csv")
        loaded = read_trace(tmp_path / "t.csv")
        rebuilt = build_problem(loaded.config.problem, loaded.config.problem_params)
        assert verify_bounds(loaded, rebuilt).passed


class TestBuildProblem:
    def test_quadratic_default(self):
        p = build_problem("quadratic", {"dim": 4})
        assert p.dim == 4
        assert p.L == pytest.approx(4.0)

    def test_rosenbrock(self):
        assert build_problem("rosenbrock", {}).name == "rosenbrock"

    def test_unknown_rejected(self):
        with pytest.raises(ValueError, match="unknown problem"):
            build_problem("simplex", {})

    def test_logreg_from_file_with_auto_regularization(self, tmp_path):
        path = tmp_path / "d.libsvm"
        path.write_text(synthetic_libsvm_text(M=30, n=5, seed=2))
        p = build_problem("logreg-l2", {"data": str(path), "l2": "auto"})
        assert p.mu > 0
        assert p.mu == pytest.approx((p.L - p.mu) / 1e5, rel=1e-6)

    def test_logreg_requires_data(self):
        with pytest.raises(ValueError, match="data"):
            build_problem("logreg-ncvx", {})

    def test_data_dir_env_fallback(self, tmp_path, monkeypatch):
        path = tmp_path / "set.libsvm"
        path.write_text("1 1:1.0\n-1 1:2.0\n")
        monkeypatch.setenv("AGGHB_DATA_DIR", str(tmp_path))
        assert resolve_data_path("set.libsvm") == path
        monkeypatch.delenv("AGGHB_DATA_DIR")
        with pytest.raises(FileNotFoundError):
            resolve_data_path("set.libsvm")
