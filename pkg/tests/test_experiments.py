import numpy as np
import pytest

from spatialbss import (
    Ball,
    FieldSample,
    LatentSampler,
    Ring,
    build_workspace,
    fk_matrix,
    gen_uniform_rect,
    latent_preset,
    mdi_limit_spectrum,
)
from spatialbss.dataio import write_fieldsample_csv, write_matrix_csv
from spatialbss.errors import DataFormatError
from spatialbss.experiments import (
    load_config,
    parse_config,
    run_data_analysis,
    run_density_comparison,
    run_experiment,
)

CONFIG_TOML = """
seed = 314
replications = 8
sample_sizes = [100, 200]
centered = false

[design]
kind = "nested_squares"
base_count = 100
layers = 2

[latent]
preset = "sim1"

[mixing]
kind = "identity"

[kernel_sets]
b1 = ["ball:1"]
joint = ["ball:1", "ring:1:2"]
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(CONFIG_TOML)
    return load_config(path)


class TestConfig:
    def test_parse_fields(self, config):
        assert config.seed == 314
        assert config.replications == 8
        assert config.sample_sizes == (100, 200)
        assert set(config.kernel_sets) == {"b1", "joint"}
        assert config.kernel_sets["joint"] == (Ball(1.0), Ring(1.0, 2.0))
        assert not config.centered

    def test_explicit_components_and_matrix_mixing(self):
        data = {
            "seed": 1,
            "replications": 2,
            "sample_sizes": [20],
            "design": {"kind": "uniform_rect", "n": 20, "bounds": [[0, 5], [0, 5]]},
            "latent": {"components": [[1.0, 1.0], [0.5, 2.0]]},
            "mixing": {"kind": "matrix", "matrix": [[1.0, 0.2], [0.0, 1.0]]},
            "kernel_sets": {"a": ["ball:1"]},
        }
        cfg = parse_config(data)
        assert cfg.latent.p == 2
        assert np.array_equal(cfg.mixing(2), [[1.0, 0.2], [0.0, 1.0]])

    def test_bad_config_raises_data_format_error(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("seed = 1\n")
        with pytest.raises(DataFormatError):
            load_config(path)

    def test_bad_toml_syntax(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("seed = [unterminated\n")
        with pytest.raises(DataFormatError):
            load_config(path)

    def test_random_mixing_reproducible(self):
        data = {
            "seed": 7,
            "replications": 1,
            "sample_sizes": [10],
            "design": {"kind": "uniform_rect", "n": 10, "bounds": [[0, 5], [0, 5]]},
            "latent": {"preset": "sim1"},
            "mixing": {"kind": "random"},
            "kernel_sets": {"a": ["ball:1"]},
        }
        m1 = parse_config(data).mixing(3)
        m2 = parse_config(data).mixing(3)
        assert np.array_equal(m1, m2)
        assert np.linalg.cond(m1) < 1e6


class TestRunExperiment:
    def test_smoke_report_shape(self, config):
        report = run_experiment(config)
        assert len(report.rows) == 4  # 2 sample sizes x 2 kernel sets
        for row in report.rows:
            assert row.replications == 8
            assert row.failures == 0
            assert np.isfinite(row.mean_nmdi)
            assert np.isfinite(row.expected_nmdi)
        assert "config_hash" in report.manifest

    def test_threaded_run_byte_identical(self, config):
        a = run_experiment(config, threads=1).to_csv_text()
        b = run_experiment(config, threads=4).to_csv_text()
        assert a == b

    def test_asymptotic_column_matches_standalone_call(self, config):
        report = run_experiment(config)
        full = config.design.build(config.seed)
        for row in report.rows:
            locs = full.prefix(row.n) if row.n < full.n else full
            ws = build_workspace(locs, config.latent)
            want = mdi_limit_spectrum(
                fk_matrix(ws, config.kernel_sets[row.kernel_set]).fk
            ).expected_nmdi
            assert row.expected_nmdi == want

    def test_failures_counted_not_dropped(self, config, monkeypatch):
        import spatialbss.experiments as exp

        original = exp._replication_values

        def flaky(locs, sampler, fits, omega, centered, seed, design_index, rep):
            if rep == 3:
                raise RuntimeError("boom")
            return original(locs, sampler, fits, omega, centered, seed, design_index, rep)

        monkeypatch.setattr(exp, "_replication_values", flaky)
        report = run_experiment(config)
        for row in report.rows:
            assert row.failures == 1
            assert row.replications == 7
            assert np.isfinite(row.mean_nmdi)

    def test_unachievable_sample_size_rejected(self, config):
        # more points than the nested design generates
        cfg = type(config)(**{**config.__dict__, "sample_sizes": (500,)})
        with pytest.raises(ValueError, match="not achievable"):
            run_experiment(cfg)
        # fixed grids admit exactly their own size
        data = {
            "seed": 1,
            "replications": 1,
            "sample_sizes": [100],
            "design": {"kind": "diamond", "radius": 10},
            "latent": {"preset": "sim1"},
            "kernel_sets": {"a": ["ball:1"]},
        }
        with pytest.raises(ValueError, match="not achievable"):
            run_experiment(parse_config(data))

    def test_prefix_sample_sizes_allowed_for_nested(self, config):
        cfg = type(config)(**{**config.__dict__, "sample_sizes": (77,), "replications": 2})
        report = run_experiment(cfg)
        assert report.rows[0].n == 77


class TestDensityComparison:
    def test_shapes_and_determinism(self, config):
        cfg = type(config)(**{**config.__dict__, "sample_sizes": (100,)})
        out = run_density_comparison(cfg, draws=5000)
        assert set(out) == {(100, "b1"), (100, "joint")}
        emp, lim = out[(100, "b1")]
        assert emp.shape == (8,)
        assert lim.shape == (5000,)
        out2 = run_density_comparison(cfg, draws=5000)
        assert np.array_equal(out2[(100, "b1")][1], lim)

    def test_empirical_vs_limit_ks_distance(self):
        # run-and-freeze regression: with the ring kernel the asymptotic
        # mixture already fits the finite-sample distribution at n=400
        # (measured KS 0.051 at this seed; bound kept at the headline 0.1)
        from scipy.stats import ks_2samp

        cfg = parse_config(
            {
                "seed": 4242,
                "replications": 300,
                "sample_sizes": [400],
                "centered": False,
                "design": {"kind": "nested_squares", "base_count": 200, "layers": 2},
                "latent": {"preset": "sim1"},
                "kernel_sets": {"r12": ["ring:1:2"]},
            }
        )
        emp, lim = run_density_comparison(cfg, draws=40_000)[(400, "r12")]
        assert ks_2samp(emp, lim).statistic < 0.1

    def test_limit_mean_matches_delta_sum(self, config):
        cfg = type(config)(**{**config.__dict__, "sample_sizes": (200,)})
        out = run_density_comparison(cfg, draws=200_000)
        full = cfg.design.build(cfg.seed)
        ws = build_workspace(full, cfg.latent)
        for name, ks in cfg.kernel_sets.items():
            spec = mdi_limit_spectrum(fk_matrix(ws, ks).fk)
            _, lim = out[(200, name)]
            se = np.sqrt(2 * np.sum(spec.deltas**2) / 200_000)
            assert abs(lim.mean() - spec.expected_nmdi) < 4 * se


class TestDataAnalysis:
    def test_self_reference_is_perfect(self, rng, tmp_path):
        locs = gen_uniform_rect(120, [[0, 15], [0, 15]], rng)
        z = LatentSampler(locs, latent_preset("sim1")).draw(rng)
        data_path = tmp_path / "data.csv"
        write_fieldsample_csv(z, data_path)
        fits, _ = run_data_analysis(data_path, {"r12": [Ring(1.0, 2.0)]})
        ref_path = tmp_path / "ref.csv"
        write_matrix_csv(fits["r12"].scores, ref_path)
        fits2, tables = run_data_analysis(
            data_path, {"r12": [Ring(1.0, 2.0)]}, reference_scores_csv=ref_path
        )
        assert np.allclose(tables["r12"], 1.0, atol=1e-10)

    def test_synthetic_recovery_against_truth(self, tmp_path):
        # mixed data with known truth: matched correlations are high at n=1000
        rng = np.random.default_rng(2718)
        locs = gen_uniform_rect(1000, [[0, 35], [0, 35]], rng)
        z = LatentSampler(locs, latent_preset("sim1")).draw(rng)
        omega = rng.normal(size=(3, 3)) + 2 * np.eye(3)
        x = FieldSample(locs, z.values @ omega.T)
        data_path = tmp_path / "data.csv"
        ref_path = tmp_path / "ref.csv"
        write_fieldsample_csv(x, data_path)
        write_matrix_csv(z.values, ref_path)
        _, tables = run_data_analysis(
            data_path, {"r12": [Ring(1.0, 2.0)]}, reference_scores_csv=ref_path
        )
        assert np.all(tables["r12"] > 0.95)

    def test_two_sets_emit_two_score_files(self, rng, tmp_path):
        locs = gen_uniform_rect(80, [[0, 12], [0, 12]], rng)
        z = LatentSampler(locs, latent_preset("sim1")).draw(rng)
        data_path = tmp_path / "data.csv"
        write_fieldsample_csv(z, data_path)
        out_dir = tmp_path / "out"
        fits, _ = run_data_analysis(
            data_path,
            {"a": [Ball(1.0)], "b": [Ring(1.0, 2.0)]},
            out_dir=out_dir,
        )
        assert (out_dir / "a.scores.csv").exists()
        assert (out_dir / "b.scores.csv").exists()
        assert (out_dir / "a.gamma.csv").exists()

    def test_row_count_mismatch_rejected(self, rng, tmp_path):
        locs = gen_uniform_rect(20, [[0, 5], [0, 5]], rng)
        z = LatentSampler(locs, latent_preset("sim1")).draw(rng)
        data_path = tmp_path / "data.csv"
        write_fieldsample_csv(z, data_path)
        ref_path = tmp_path / "ref.csv"
        write_matrix_csv(np.zeros((5, 3)), ref_path)
        with pytest.raises(DataFormatError, match="rows"):
            run_data_analysis(data_path, {"a": [Ball(1.0)]}, reference_scores_csv=ref_path)
