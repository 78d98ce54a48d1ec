"""Experiment-harness tests: aggregation math, determinism, CSV schema."""

import io
import math

import numpy as np
import pytest

from adaptsde.harness import (
    CSV_HEADER,
    ConvergenceTable,
    ExperimentConfig,
    OrderFit,
    TableRow,
    _worker_count,
    default_h_grid,
    default_levels,
    default_schemes,
    fit_order,
    read_table_csv,
    rmse,
    run_experiment,
    run_sample,
    write_table_csv,
)
from adaptsde.problems import gbm_exact_terminal


class TestRmse:
    def test_two_point_oracle(self):
        res = rmse([1.0, 9.0])
        assert res.value == math.sqrt(5.0)
        assert res.n_excluded == 0 and res.n_total == 2 and res.ok

    def test_single_sample(self):
        assert rmse([4.0]).value == 2.0

    def test_nan_exclusion(self):
        res = rmse([1.0, float("nan"), 9.0])
        assert res.value == math.sqrt(5.0)
        assert res.n_excluded == 1 and res.n_total == 3 and res.ok

    def test_all_excluded(self):
        res = rmse([float("nan"), float("inf")])
        assert math.isnan(res.value)
        assert res.n_excluded == 2 and not res.ok

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            rmse([])


class TestFitOrder:
    def test_exact_first_order(self):
        hs = [0.25, 0.025, 0.0025, 0.00025]
        fit = fit_order(hs, hs)
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.n_points == 4 and fit.ok

    def test_exact_half_order(self):
        hs = np.array([0.5, 0.05, 0.005])
        fit = fit_order(hs, 3.0 * np.sqrt(hs))
        assert fit.slope == pytest.approx(0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)

    def test_drops_unusable_points(self):
        fit = fit_order([0.1, 0.01, 0.001], [0.1, float("nan"), 0.001])
        assert fit.n_points == 2
        assert fit.slope == pytest.approx(1.0, abs=1e-12)

    def test_insufficient_points(self):
        fit = fit_order([0.1], [0.3])
        assert not fit.ok and math.isnan(fit.slope)
        assert not fit_order([0.1, 0.01], [float("nan")] * 2).ok


class TestConfig:
    def test_defaults_fill_in(self):
        cfg = ExperimentConfig(problem="gl")
        assert cfg.schemes == default_schemes("gl")
        assert cfg.schemes[-1] == "truncated"
        assert cfg.h_max_list == default_h_grid("gl") == (0.25, 0.025, 0.0025, 0.00025)
        assert cfg.levels == default_levels("gl") == 6

    def test_spde_defaults_differ(self):
        cfg = ExperimentConfig(problem="spde")
        assert cfg.h_max_list == (0.25, 0.05, 0.005, 0.0005)
        assert cfg.levels == 4
        assert "truncated" not in cfg.schemes

    @pytest.mark.parametrize("kwargs", [
        dict(samples=0),
        dict(levels=-1),
        dict(h_max_list=(0.25, 1.5)),
        dict(h_max_list=(0.0,)),
        dict(schemes=("adaptive_semi_implicit", "midpoint")),
        dict(schemes=("adaptive_explicit",)),
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentConfig(problem="gbm", **kwargs)

    def test_truncated_needs_gl(self):
        with pytest.raises(ValueError, match="truncated"):
            ExperimentConfig(problem="svol", schemes=("truncated",))

    def test_worker_count_sources(self, monkeypatch):
        monkeypatch.delenv("ADAPTSDE_WORKERS", raising=False)
        assert _worker_count(None) == 1
        assert _worker_count(3) == 3
        monkeypatch.setenv("ADAPTSDE_WORKERS", "2")
        assert _worker_count(None) == 2
        assert _worker_count(5) == 5  # explicit argument wins


def small_gbm_config(**overrides):
    base = dict(
        problem="gbm",
        schemes=("adaptive_semi_implicit", "balanced", "explicit_euler"),
        h_max_list=(0.25, 0.025),
        samples=5,
        levels=3,
        master_seed=7,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def assert_tables_match(a: ConvergenceTable, b: ConvergenceTable):
    """Equality in everything except measured CPU time."""
    assert (a.problem, a.rho, a.samples) == (b.problem, b.rho, b.samples)
    assert len(a.rows) == len(b.rows)
    for ra, rb in zip(a.rows, b.rows):
        assert ra.scheme == rb.scheme
        assert ra.h_max == rb.h_max
        assert ra.rmse == rb.rmse
        assert ra.n_excluded == rb.n_excluded
        assert ra.mean_adaptive_h == rb.mean_adaptive_h
        assert ra.n_backstop == rb.n_backstop
        assert ra.n_diverged == rb.n_diverged
    assert a.slopes.keys() == b.slopes.keys()
    for k in a.slopes:
        assert a.slopes[k].slope == b.slopes[k].slope
    assert a.moments.dw_sum == b.moments.dw_sum
    assert a.moments.normsq_sum == b.moments.normsq_sum
    assert a.moments.n_steps == b.moments.n_steps


@pytest.fixture(scope="module")
def baseline():
    return run_experiment(small_gbm_config(), workers=1)


class TestExperimentDeterminism:
    def test_rerun_is_identical(self, baseline):
        assert_tables_match(baseline, run_experiment(small_gbm_config(), workers=1))

    def test_worker_count_does_not_change_results(self, baseline):
        assert_tables_match(baseline, run_experiment(small_gbm_config(), workers=2))

    def test_run_sample_matches_single_sample_experiment(self):
        cfg = small_gbm_config(samples=1, h_max_list=(0.025,))
        table = run_experiment(cfg)
        rec = run_sample(cfg, 0, 0.025)
        for scheme in cfg.schemes:
            row = [r for r in table.rows if r.scheme == scheme][0]
            assert row.rmse == math.sqrt(rec.sq_err[scheme])
            assert row.n_diverged == int(rec.diverged[scheme])

    def test_sample_record_contents(self, baseline):
        rec = run_sample(small_gbm_config(), 2, 0.025)
        # no state dependence in the gbm controller: uniform forty-step mesh
        assert rec.n_adaptive_steps == 40
        assert rec.mean_adaptive_h == pytest.approx(0.025)
        assert rec.w_terminal.shape == (1,)
        checks = set(rec.path_checksum.values())
        assert len(checks) == 1  # every scheme consumed the same realization
        other = run_sample(small_gbm_config(), 3, 0.025)
        assert other.path_checksum["balanced"] not in checks

    def test_moment_accumulators_are_plausible(self, baseline):
        mom = baseline.moments
        assert mom.n_steps == 5 * (4 + 40)
        assert abs(mom.mean_dw()) < 0.5
        assert abs(mom.mean_normsq() - 1.0) < 0.5


class TestReferenceQuality:
    def test_reference_beats_coarse_scheme_on_gbm(self):
        cfg = ExperimentConfig(
            problem="gbm",
            schemes=("adaptive_semi_implicit",),
            h_max_list=(0.025,),
            samples=8,
            levels=6,
            master_seed=3,
        )
        ref_sq, sch_sq = [], []
        for i in range(cfg.samples):
            rec = run_sample(cfg, i, 0.025)
            exact = gbm_exact_terminal(rec.w_terminal[0])
            ref_sq.append((rec.reference_terminal[0] - exact) ** 2)
            sch_sq.append((rec.terminal["adaptive_semi_implicit"][0] - exact) ** 2)
        rmse_ref = math.sqrt(np.mean(ref_sq))
        rmse_sch = math.sqrt(np.mean(sch_sq))
        # the bridged reference runs 2^6 times finer, so it should sit well
        # below the scheme it judges
        assert rmse_ref < 0.5 * rmse_sch


class TestCsv:
    def make_table(self):
        rows = [
            TableRow("balanced", 0.25, 0.1 + 0.2, 0, 0.0123, 0.0184511, 3, 1),
            TableRow("balanced", 0.025, 1.4142135623730951e-05, 0, 0.5, 0.003, 0, 0),
            TableRow("increment_tamed", 0.25, float("nan"), 5, 0.01, 0.0184511, 0, 5),
        ]
        slopes = {
            "balanced": OrderFit(0.5000000000000001, 0.0, 0.999, 2),
            "increment_tamed": OrderFit(float("nan"), float("nan"), float("nan"), 0),
        }
        return ConvergenceTable(problem="fhn05", rho=100.0, samples=5, rows=rows, slopes=slopes)

    def test_round_trip_is_exact(self):
        table = self.make_table()
        buf = io.StringIO()
        write_table_csv(table, buf)
        buf.seek(0)
        back = read_table_csv(buf)
        assert back.problem == "fhn05"
        assert back.rho == 100.0 and back.samples == 5
        assert len(back.rows) == 3
        for orig, rt in zip(table.rows, back.rows):
            assert rt.scheme == orig.scheme
            assert rt.h_max == orig.h_max
            assert rt.rmse == orig.rmse or (math.isnan(rt.rmse) and math.isnan(orig.rmse))
            assert rt.mean_cputime_s == orig.mean_cputime_s
            assert rt.mean_adaptive_h == orig.mean_adaptive_h
            assert (rt.n_backstop, rt.n_diverged) == (orig.n_backstop, orig.n_diverged)
        assert back.slopes["balanced"].slope == 0.5000000000000001
        assert not back.slopes["increment_tamed"].ok

    def test_header_line(self):
        buf = io.StringIO()
        write_table_csv(self.make_table(), buf)
        assert buf.getvalue().splitlines()[0] == CSV_HEADER

    def test_empty_input(self):
        with pytest.raises(ValueError, match="missing header"):
            read_table_csv(io.StringIO(""))

    def test_wrong_header(self):
        with pytest.raises(ValueError, match="unexpected CSV header"):
            read_table_csv(io.StringIO("a,b,c\n"))

    def test_short_row(self):
        text = CSV_HEADER + "\ngl,balanced,0.25\n"
        with pytest.raises(ValueError, match="row 2"):
            read_table_csv(io.StringIO(text))

    def test_unparseable_field(self):
        text = CSV_HEADER + "\ngl,balanced,0.25,100.0,5,oops,0.1,0.2,0,0,\n"
        with pytest.raises(ValueError, match="row 2"):
            read_table_csv(io.StringIO(text))

    def test_blank_lines_are_skipped(self):
        buf = io.StringIO()
        write_table_csv(self.make_table(), buf)
        padded = buf.getvalue() + "\n\n"
        back = read_table_csv(io.StringIO(padded))
        assert len(back.rows) == 3
