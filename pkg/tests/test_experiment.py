import numpy as np
import pytest

from prefopt.acquisition import DecaySchedule, MaximizerOptions
from prefopt.experiment import (
    ExperimentConfig,
    ensure_experiment,
    regret_svg,
    run_experiment,
    write_artifacts,
)
from prefopt.preference import FitOptions
from prefopt.session import EngineOptions

TINY = EngineOptions(
    maximizer=MaximizerOptions(starts=8, iters=20, cull=((3, 2),)),
    refit=FitOptions(restarts=1, maxiter=3, inner_tol=1e-7),
    lookahead_fit=FitOptions(restarts=1, maxiter=1, inner_tol=1e-7),
)


@pytest.fixture(scope="module")
def tiny_config():
    return ExperimentConfig(
        function="hartmann3",
        methods=("random", "no_transfer_t", "meta_po_r_t"),
        iterations=5,
        seeds=(0, 1),
        population_users=2,
        test_users=2,
        options=TINY,
    )


@pytest.fixture(scope="module")
def tiny_result(tiny_config):
    return run_experiment(tiny_config)


class TestRunExperiment:
    def test_trace_shapes(self, tiny_config, tiny_result):
        assert len(tiny_result.traces) == 3 * 2 * 2  # methods x users x seeds
        for trace in tiny_result.traces:
            assert len(trace.values) == 5

    def test_traces_nonincreasing_and_nonnegative(self, tiny_result):
        for trace in tiny_result.traces:
            vals = trace.values
            assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
            assert min(vals) >= 0.0

    def test_summary_and_final_rows(self, tiny_config, tiny_result):
        rows = tiny_result.summary_rows()
        assert len(rows) == 3 * 5
        finals = tiny_result.final_rows()
        assert {r[1] for r in finals} == set(tiny_config.methods)

    def test_population_records_only_for_meta_strategies(self, tiny_result):
        assert set(tiny_result.population_records) == {(0, "two_step"), (1, "two_step")}
        for records in tiny_result.population_records.values():
            assert len(records) == 2
            assert all(r.model is not None for r in records)

    def test_deterministic_artifacts(self, tiny_config, tiny_result, tmp_path):
        out1 = write_artifacts(tiny_result, tmp_path / "a")
        result2 = run_experiment(tiny_config)
        out2 = write_artifacts(result2, tmp_path / "b")
        assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()
        assert (out1 / "final.csv").read_bytes() == (out2 / "final.csv").read_bytes()
        for trace_file in sorted((out1 / "traces").iterdir()):
            twin = out2 / "traces" / trace_file.name
            assert trace_file.read_bytes() == twin.read_bytes()

    def test_ensure_experiment_caches(self, tiny_config, tmp_path):
        first = ensure_experiment(tiny_config, tmp_path)
        marker = tmp_path / f"{tiny_config.function}__{tiny_config.digest()}" / "meta.json"
        assert marker.exists()
        stamp = marker.stat().st_mtime_ns
        second = ensure_experiment(tiny_config, tmp_path)
        assert marker.stat().st_mtime_ns == stamp  # cache hit, not re-run
        a = {t.method: t.values for t in first.traces if t.user == 0 and t.seed == 0}
        b = {t.method: t.values for t in second.traces if t.user == 0 and t.seed == 0}
        assert a == b

    def test_svg_emission(self, tiny_result):
        svg = regret_svg(tiny_result)
        assert svg.startswith("<svg") and svg.endswith("</svg>")
        for method in tiny_result.config.methods:
            assert method in svg

    def test_unknown_method_rejected(self):
        with pytest.raises(Exception, match="unknown method"):
            ExperimentConfig(function="hartmann3", methods=("sorcery",), iterations=3, seeds=(0,))
