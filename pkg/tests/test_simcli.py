import numpy as np
import pytest
from scipy import integrate

from beamspace_noma.channel import rng_stream
from beamspace_noma.cli import main
from beamspace_noma.simcli import (CSV_COLUMNS, ConfigError, ScenarioConfig, SweepSpec, build_scenario,
                                   convergence_trace, drop_profiles, load_scenario, run_sweep, write_csv)

MINIMAL = "n_t: 16\nk: 12\np_max_db: 10\nseed: 7\n"


class TestLoad:
    def test_minimal_defaults(self):
        c = load_scenario(MINIMAL)
        assert c.cell_radius_m == 50.0 and c.mc_realizations == 1000
        assert c.num_sectors is None and c.sectors == 16
        assert c.weights == "uniform" and c.seed == 7

    def test_from_file_and_override(self, tmp_path):
        f = tmp_path / "s.yaml"
        f.write_text(MINIMAL)
        assert load_scenario(f).n_t == 16
        assert load_scenario(str(f), seed=3).seed == 3

    def test_large_config(self):
        c = load_scenario({"n_t": 64, "k": 60, "p_max_db": 10, "mc": 1000})
        assert c.mc_realizations == 1000 and c.k == 60

    def test_k_zero_names_field(self):
        with pytest.raises(ConfigError) as e:
            load_scenario("n_t: 16\nk: 0\np_max_db: 10\n")
        assert e.value.field == "k" and "k" in str(e.value)

    @pytest.mark.parametrize("text,field", [
        ("n_t: 1\nk: 2\np_max_db: 0\n", "n_t"),
        ("n_t: 4\nk: 2\np_max_db: 0\nmc_realizations: 0\n", "mc_realizations"),
        ("n_t: 4\nk: 2\np_max_db: 0\nweights: [1, 2, 3]\n".replace("[1, 2, 3]", "[1]"), "weights"),
        ("n_t: 4\nk: 2\np_max_db: 0\nweights: lopsided\n", "weights"),
        ("n_t: 4\nk: 2\np_max_db: 0\nnum_paths: 0\n", "num_paths"),
        ("n_t: 4\nk: 2\np_max_db: 0\nouter_tol: 0\n", "outer_tol"),
        ("n_t: 4\nk: 2\np_max_db: 0\nmin_distance_m: 100\n", "min_distance_m"),
        ("n_t: 4.5\nk: 2\np_max_db: 0\n", "n_t"),
        ("n_t: 4\nk: 2\n", "p_max_db"),
    ])
    def test_validation_errors(self, text, field):
        with pytest.raises(ConfigError) as e:
            load_scenario(text)
        assert e.value.field == field

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as e:
            load_scenario(MINIMAL + "colour: blue\n")
        assert e.value.field == "colour"

    def test_parse_error_line(self):
        with pytest.raises(ConfigError) as e:
            load_scenario("n_t: 16\nk: 12\np_max_db: [10\nseed: 1\n")
        assert e.value.line is not None and f"line {e.value.line}" in str(e.value)

    def test_not_a_mapping(self):
        with pytest.raises(ConfigError):
            load_scenario("- 1\n- 2\n")

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_scenario("no_such_file.yaml")

    def test_custom_weights(self):
        c = load_scenario("n_t: 4\nk: 3\np_max_db: 0\nweights: [1, 2, 0.5]\n")
        np.testing.assert_allclose(build_scenario(c).weights[np.argsort(build_scenario(c).ue_ids)], [1, 2, 0.5])


class TestSweepSpec:
    def test_invalid(self):
        with pytest.raises(ConfigError):
            SweepSpec("snr_db", [], ("alg1",))
        with pytest.raises(ConfigError):
            SweepSpec("snr_db", [10, 0], ("alg1",))
        with pytest.raises(ConfigError):
            SweepSpec("snr_db", [0], ())
        with pytest.raises(ConfigError):
            SweepSpec("snr_db", [0], ("alg9",))
        with pytest.raises(ConfigError):
            SweepSpec("bandwidth", [0], ("alg1",))
        with pytest.raises(ConfigError):
            SweepSpec("k", [2.5], ("alg1",))


class TestDrops:
    def test_prefix_property(self):
        c = ScenarioConfig(n_t=8, k=10, p_max_db=0.0, seed=3)
        big = drop_profiles(c)
        small = drop_profiles(c, k=4)
        for a, b in zip(small, big):
            assert a.aod == b.aod
            np.testing.assert_array_equal(a.beam_gains, b.beam_gains)

    def test_same_positions_across_array_sizes(self):
        c = ScenarioConfig(n_t=8, k=5, p_max_db=0.0, seed=3)
        assert [p.aod for p in drop_profiles(c)] == [p.aod for p in drop_profiles(c, n_t=32)]

    def test_num_sectors_knob(self):
        c = ScenarioConfig(n_t=8, k=12, p_max_db=0.0, seed=3, num_sectors=2)
        assert build_scenario(c).num_clusters <= 2


class TestSweep:
    def test_single_user_tdma(self):
        c = ScenarioConfig(n_t=8, k=1, p_max_db=10.0, seed=5, mc_realizations=20_000)
        rows = run_sweep(c, SweepSpec("snr_db", [10], ("tdma",)))
        assert len(rows) == 1
        sc = build_scenario(c)
        g = sc.eta[0].max()
        exact, _ = integrate.quad(lambda x: np.log2(1 + 10.0 * g * x) * np.exp(-x), 0, np.inf)
        assert abs(rows[0]["weighted_sum_rate"] - exact) < 4 * rows[0]["sum_rate_stderr"]
        assert rows[0]["upper_bound"] == pytest.approx(np.log2(1 + 10.0 * g))

    def test_row_count_and_order(self):
        c = ScenarioConfig(n_t=4, k=3, p_max_db=0.0, seed=1, mc_realizations=50)
        rows = run_sweep(c, SweepSpec("snr_db", [0, 5, 10], ("mf", "alg2")))
        assert len(rows) == 6
        assert [(r["algorithm"], r["axis_value"]) for r in rows] == [
            ("mf", 0.0), ("mf", 5.0), ("mf", 10.0), ("alg2", 0.0), ("alg2", 5.0), ("alg2", 10.0)]
        assert all(r["wall_time_ms"] is None for r in rows)

    def test_k_sweep_prefix(self):
        c = ScenarioConfig(n_t=4, k=2, p_max_db=5.0, seed=2, mc_realizations=50)
        rows = run_sweep(c, SweepSpec("k", [1, 3], ("sdma",)))
        one = build_scenario(ScenarioConfig(n_t=4, k=1, p_max_db=5.0, seed=2))
        assert [r["k"] for r in rows] == [1, 3]
        assert rows[0]["upper_bound"] == pytest.approx(np.log2(1 + 10 ** 0.5 * one.eta[0].max()))

    def test_n_t_sweep(self):
        c = ScenarioConfig(n_t=4, k=3, p_max_db=5.0, seed=2, mc_realizations=20)
        rows = run_sweep(c, SweepSpec("n_t", [4, 8], ("alg3",)))
        assert [r["n_t"] for r in rows] == [4, 8]

    def test_byte_identical(self, tmp_path):
        c = ScenarioConfig(n_t=4, k=4, p_max_db=0.0, seed=9, mc_realizations=40)
        sweep = SweepSpec("snr_db", [0, 10], ("alg1", "tdma"), str(tmp_path / "a.csv"))
        run_sweep(c, sweep)
        run_sweep(c, SweepSpec(sweep.axis, sweep.values, sweep.algorithms, str(tmp_path / "b.csv")), workers=3)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_csv_schema(self):
        c = ScenarioConfig(n_t=4, k=2, p_max_db=0.0, seed=1, mc_realizations=10)
        text = write_csv(run_sweep(c, SweepSpec("snr_db", [0], ("alg1",))))
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        fields = lines[1].split(",")
        assert len(fields) == len(CSV_COLUMNS) and fields[-1] == ""
        assert float(fields[8]) == float(repr(float(fields[8])))

    def test_timing_column(self):
        c = ScenarioConfig(n_t=4, k=2, p_max_db=0.0, seed=1, mc_realizations=10)
        rows = run_sweep(c, SweepSpec("snr_db", [0], ("mf",)), timing=True)
        assert rows[0]["wall_time_ms"] >= 0

    def test_failure_recorded_in_row(self, monkeypatch):
        import beamspace_noma.simcli as simcli

        def boom(*a, **k):
            raise FloatingPointError("diverged")

        monkeypatch.setattr(simcli, "design_for", boom)
        c = ScenarioConfig(n_t=4, k=2, p_max_db=0.0, seed=1, mc_realizations=10)
        rows = run_sweep(c, SweepSpec("snr_db", [0, 5], ("alg1", "tdma")))
        assert len(rows) == 4
        bad = [r for r in rows if r["algorithm"] == "alg1"]
        assert all(not r["converged"] and np.isnan(r["weighted_sum_rate"]) for r in bad)


class TestTrace:
    def test_alg1_monotone(self):
        c = ScenarioConfig(n_t=16, k=12, p_max_db=10.0, seed=7)
        rows = convergence_trace(c, "alg1")
        s = [r["surrogate"] for r in rows]
        assert all(b <= a + 1e-8 for a, b in zip(s, s[1:]))
        assert len(rows) <= c.max_outer_iters
        assert all(r["budget_usage"] <= c.p_max * (1 + 1e-6) for r in rows)

    def test_baseline_rejected(self):
        with pytest.raises(ValueError):
            convergence_trace(ScenarioConfig(n_t=4, k=2, p_max_db=0.0), "mf")


class TestCli:
    @pytest.fixture
    def cfg(self, tmp_path):
        f = tmp_path / "c.yaml"
        f.write_text("n_t: 4\nk: 3\np_max_db: 5\nseed: 1\nmc_realizations: 20\n")
        return str(f)

    def test_validate(self, cfg, capsys):
        assert main(["validate", "--config", cfg]) == 0
        assert "cell_radius_m: 50.0" in capsys.readouterr().out

    def test_solve(self, cfg, capsys):
        assert main(["solve", "--config", cfg, "--algo", "alg2", "--seed", "4"]) == 0
        out = capsys.readouterr().out
        assert '"weighted_sum_rate"' in out and '"seed": 4' in out

    def test_sweep_to_file(self, cfg, tmp_path):
        out = tmp_path / "o.csv"
        assert main(["sweep", "--config", cfg, "--axis", "snr_db", "--values", "0,5", "--algo", "mf,sdma",
                     "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 5

    def test_trace(self, cfg, capsys):
        assert main(["trace", "--config", cfg, "--algo", "alg3"]) == 0
        assert capsys.readouterr().out.startswith("iteration,surrogate,budget_usage")

    def test_invalid_config_exit(self, tmp_path, capsys):
        f = tmp_path / "bad.yaml"
        f.write_text("n_t: 4\nk: 0\np_max_db: 5\n")
        assert main(["validate", "--config", str(f)]) != 0
        err = capsys.readouterr()
        assert "k" in err.err and err.out == ""

    def test_bad_sweep_exit(self, cfg, capsys):
        assert main(["sweep", "--config", cfg, "--axis", "snr_db", "--values", "5,0"]) != 0
        assert "sorted" in capsys.readouterr().err

    def test_unwritable_output(self, cfg, tmp_path):
        assert main(["trace", "--config", cfg, "--out", str(tmp_path / "missing" / "t.csv")]) != 0

    def test_usage_error(self):
        with pytest.raises(SystemExit) as e:
            main(["sweep"])
        assert e.value.code != 0
