import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from klidsvm.dsvm import DsvmConfig
from klidsvm.harness import (CSV_FIELDS, ExperimentConfig, ResultRow, cell_seed, emit_csv,
                             emit_plot, load_csv, run_experiment, summarize, write_outputs)


@pytest.fixture(scope="module")
def small_cfg():
    return ExperimentConfig("synthetic:two-gaussians", attack="random", rates=(0.0, 0.1, 0.2),
                            defenses=("svm", "klid-svm"), folds=5, seeds=(0,), n=120,
                            noise=0.8, k_neighbors=10, minibatch_size=40)


@pytest.fixture(scope="module")
def small_rows(small_cfg):
    return run_experiment(small_cfg)


def _row(**kw):
    base = dict(dataset="d", attack="a", rate=0.0, defense="svm", fold=0, seed=0, error_rate=0.1)
    return ResultRow(**{**base, **kw})


class TestConfig:

    @pytest.mark.parametrize("bad", [dict(rates=(0.6,)), dict(rates=()), dict(defenses=()),
                                     dict(defenses=("x",)), dict(seeds=()), dict(mode="grey"),
                                     dict(attack="nope"), dict(n_train=10),
                                     dict(n_train=10, n_test=10, folds=5)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            ExperimentConfig("synthetic:two-gaussians", **bad)

    def test_metadata_resolves_defaults(self, small_cfg):
        meta = small_cfg.metadata()
        assert meta["resolved"]["split"] == "kfold"
        assert meta["clip_quantile"] == 0.95 and "gamma_grid" in meta["resolved"]

    def test_cell_seed_depends_on_coordinates(self):
        seeds = {cell_seed(0, s, f, r) for s in range(2) for f in range(3) for r in range(3)}
        assert len(seeds) == 18
        assert cell_seed(0, 1, 2, 3) == cell_seed(0, 1, 2, 3)


class TestRunExperiment:

    def test_row_count(self, small_rows):
        assert len(small_rows) == 3 * 5 * 1 * 2
        assert not any(r.failed for r in small_rows)
        assert all(0 <= r.error_rate <= 1 for r in small_rows)

    def test_no_attack_regression(self, small_rows):
        for fold in range(5):
            cell = {r.defense: r.error_rate for r in small_rows if r.rate == 0 and r.fold == fold}
            assert abs(cell["klid-svm"] - cell["svm"]) <= 0.02

    def test_deterministic_csv(self, small_cfg, small_rows, tmp_path):
        emit_csv(small_rows, tmp_path / "a.csv")
        emit_csv(run_experiment(small_cfg), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_parallel_matches_serial(self, small_cfg, small_rows, tmp_path):
        par = run_experiment(ExperimentConfig(**{**small_cfg.__dict__, "workers": 2}))
        emit_csv(small_rows, tmp_path / "a.csv")
        emit_csv(par, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_dsvm_rows(self):
        cfg = ExperimentConfig("synthetic:two-gaussians", attack="random", rates=(0.1,),
                               defenses=("svm", "klid-svm", "ls-svm"), folds=1, seeds=(0,),
                               n=100, noise=0.5, k_neighbors=10, minibatch_size=30,
                               dsvm=DsvmConfig(M=3))
        rows = run_experiment(cfg)
        assert len(rows) == 3 + 2
        d = [r for r in rows if r.defense.startswith("dsvm")]
        assert {r.defense for r in d} == {"dsvm-svm", "dsvm-klid-svm"}
        assert all(r.comm_points_up > 0 and r.comm_points_down > 0 for r in d)

    def test_failures_recorded(self):
        # 12 samples cannot feed a 20-neighbour K-LID estimate: klid-svm fails, svm does not
        cfg = ExperimentConfig("synthetic:two-gaussians", attack="random", rates=(0.2,),
                               defenses=("svm", "klid-svm"), folds=1, seeds=(0,), n=30)
        rows = run_experiment(cfg)
        by = {r.defense: r for r in rows}
        assert not by["svm"].failed
        assert by["klid-svm"].failed and math.isnan(by["klid-svm"].error_rate)

    def test_artifacts(self, tmp_path):
        cfg = ExperimentConfig("synthetic:two-gaussians", attack="random", rates=(0.2,),
                               defenses=("klid-svm",), folds=1, seeds=(0,), n=100,
                               k_neighbors=10, minibatch_size=30, artifact_dir=str(tmp_path))
        run_experiment(cfg)
        assert (tmp_path / "mask_r0_f0_s0.json").exists()
        assert (tmp_path / "profile_r0_f0_s0.json").exists()


class TestSummaries:

    def test_single_row(self):
        s = summarize([_row(error_rate=0.25)])
        assert s.overall[0]["mean_error"] == 0.25 and s.overall[0]["best"]

    def test_double_entry(self, small_rows):
        s = summarize(small_rows)
        for o in s.overall:
            errs = [r.error_rate for r in small_rows if r.defense == o["defense"]]
            assert abs(o["mean_error"] - sum(errs) / len(errs)) <= 1e-12
        for p in s.per_rate:
            errs = [r.error_rate for r in small_rows
                    if r.defense == p["defense"] and r.rate == p["rate"]]
            assert abs(p["mean_error"] - sum(errs) / len(errs)) <= 1e-12

    def test_best_flag(self):
        s = summarize([_row(defense="svm", error_rate=0.3), _row(defense="ls-svm", error_rate=0.2)])
        assert [o["defense"] for o in s.overall if o["best"]] == ["ls-svm"]

    def test_failed_rows_excluded(self):
        s = summarize([_row(error_rate=0.2), _row(fold=1, error_rate=math.nan, error="boom")])
        assert s.overall[0]["mean_error"] == 0.2 and s.overall[0]["failed"] == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize([])


class TestEmission:

    def test_header_only(self, tmp_path):
        emit_csv([], tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text().strip() == ",".join(CSV_FIELDS)

    def test_roundtrip(self, small_rows, tmp_path):
        emit_csv(small_rows, tmp_path / "r.csv", include_runtime=True)
        back = load_csv(tmp_path / "r.csv")
        assert [r.key() for r in back] == [r.key() for r in small_rows]
        np.testing.assert_array_equal([r.error_rate for r in back],
                                      [r.error_rate for r in small_rows])
        assert summarize(back).overall == summarize(small_rows).overall

    def test_svg_well_formed(self, small_rows, tmp_path):
        emit_plot(summarize(small_rows), tmp_path / "p.svg")
        root = ET.parse(tmp_path / "p.svg").getroot()
        assert root.tag.endswith("svg")
        assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 2

    def test_unwritable(self, small_rows, tmp_path):
        with pytest.raises(OSError):
            emit_csv(small_rows, tmp_path / "missing" / "x.csv")

    def test_write_outputs(self, small_cfg, small_rows, tmp_path):
        write_outputs(small_cfg, small_rows, tmp_path)
        for f in ("results.csv", "timings.csv", "summary.csv", "plot.svg", "metadata.json"):
            assert (tmp_path / f).exists()
