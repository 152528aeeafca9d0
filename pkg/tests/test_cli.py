import csv
import json

import pytest

from hover_es.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestSpecies:
    def test_list(self, capsys):
        code, out, _ = run(capsys, "species", "list")
        assert code == 0 and "hawkmoth" in out.split()

    def test_show(self, capsys):
        code, out, _ = run(capsys, "species", "show", "hawkmoth")
        assert code == 0 and "17.3331" in out

    def test_show_unknown(self, capsys):
        code, _, err = run(capsys, "species", "show", "nosuch")
        assert code == 2 and "unknown species 'nosuch'" in err

    def test_derive_bundled(self, capsys):
        code, out, _ = run(capsys, "species", "derive", "bundled", "hawkmoth")
        assert code == 0
        assert "k_d3 = 2 m k_L / I_F residual" in out
        assert "kd3" in out or "k_d3" in out

    def test_malformed_file(self, capsys, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        code, _, err = run(capsys, "species", "show", str(p))
        assert code == 2 and "cannot load species" in err


class TestSimulate:
    def test_settled_outputs(self, capsys, tmp_path):
        code, out, _ = run(capsys, "simulate", "--species", "bumblebee", "--objective", "altitude",
                           "--w0", "0.2", "--output", str(tmp_path), "--stride", "10")
        assert code == 0 and "settled=True" in out
        stem = tmp_path / "bumblebee_altitude"
        rows = list(csv.reader(open(f"{stem}_trajectory.csv", encoding="utf-8")))
        assert rows[0] == ["t", "z", "phi", "w", "phidot", "tauhat", "J", "lift_ratio"]
        assert len(rows) == 1 + 600 * 200 // 10 + 1
        doc = json.loads(open(f"{stem}_metrics.json", encoding="utf-8").read())
        meta = doc["metadata"]
        assert meta["tool"] == "hover-es" and "bumblebee" in meta["species_checksums"]
        from hover_es.esc import EscConfig
        from hover_es.species import load_species
        assert meta["esc"] == EscConfig.for_species(load_species("bumblebee"), "altitude").to_dict()
        assert meta["config"]["w0"] == 0.2
        assert doc["metrics"]["settled"] is True

    def test_plot_script_renders(self, capsys, tmp_path, monkeypatch):
        pytest.importorskip("matplotlib")
        monkeypatch.setenv("MPLBACKEND", "Agg")
        run(capsys, "simulate", "--species", "dragonfly", "--duration-periods", "30", "--no-assert",
            "--output", str(tmp_path))
        script = tmp_path / "dragonfly_altitude_plot.py"
        monkeypatch.chdir(tmp_path)
        monkeypatch.setattr("sys.argv", [str(script)])
        ns = {"__name__": "__main__"}
        exec(compile(script.read_text(encoding="utf-8"), str(script), "exec"), ns)
        assert len(ns["axes"]) == 6
        assert (tmp_path / "dragonfly_altitude_trajectory.png").stat().st_size > 0

    def test_hummingbird_lift_balance(self, capsys, tmp_path):
        code, _, _ = run(capsys, "simulate", "--species", "hummingbird", "--objective", "lift_balance",
                         "--output", str(tmp_path))
        assert code == 0

    def test_open_loop_unsettled(self, capsys, tmp_path):
        code, out, _ = run(capsys, "simulate", "--species", "hawkmoth", "--objective", "altitude",
                           "--w0", "-1", "--open-loop", "--output", str(tmp_path))
        assert code == 1 and "settled=False" in out
        code, _, _ = run(capsys, "simulate", "--species", "hawkmoth", "--objective", "altitude",
                         "--w0", "-1", "--open-loop", "--no-assert", "--output", str(tmp_path))
        assert code == 0

    def test_divergence_exit(self, capsys, tmp_path):
        code, _, err = run(capsys, "simulate", "--species", "hawkmoth", "--objective", "lift_balance",
                           "--output", str(tmp_path))
        assert code == 3 and "last finite time" in err

    def test_coarse_step_is_config_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "simulate", "--species", "bumblebee", "--dt", "1e-3",
                           "--output", str(tmp_path))
        assert code == 2 and "allow_coarse" in err

    @pytest.mark.parametrize("flag,value", [("--duration", "-1"), ("--dt", "0"), ("--a", "nan")])
    def test_bad_numbers(self, capsys, tmp_path, flag, value):
        code, _, _ = run(capsys, "simulate", "--species", "bumblebee", flag, value, "--output", str(tmp_path))
        assert code == 2

    def test_config_file_precedence(self, capsys, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"species": "dragonfly", "objective": "lift_balance", "w0": -0.2,
                                   "duration_periods": 50}))
        code, _, _ = run(capsys, "simulate", "--config", str(cfg), "--w0", "0.1", "--no-assert",
                         "--format", "json", "--output", str(tmp_path))
        assert code == 0
        doc = json.loads((tmp_path / "dragonfly_lift_balance_metrics.json").read_text())
        assert doc["metadata"]["config"]["w0"] == 0.1
        assert doc["metadata"]["config"]["duration_periods"] == 50
        assert not (tmp_path / "dragonfly_lift_balance_trajectory.csv").exists()

    def test_unknown_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"species": "dragonfly", "colour": "red"}))
        code, _, _ = run(capsys, "simulate", "--config", str(cfg), "--output", str(tmp_path))
        assert code == 2

    def test_data_dir_env(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("HOVER_ES_DATA", str(tmp_path))
        code, out, _ = run(capsys, "species", "list")
        assert code == 0 and out == ""


class TestStability:
    def test_single_pair(self, capsys, tmp_path):
        code, out, _ = run(capsys, "stability", "--species", "cranefly", "--objective", "lift_balance",
                           "--output", str(tmp_path))
        assert code == 0 and "stable" in out
        doc = json.loads((tmp_path / "stability_cranefly_lift_balance.json").read_text())
        assert all(e["re"] < 0 for e in doc["eigenvalues"])
        assert "metadata" in doc

    def test_literal_passthrough(self, capsys, tmp_path):
        run(capsys, "stability", "--species", "hawkmoth", "--a-placement", "literal", "--output", str(tmp_path))
        for obj in ("altitude", "lift_balance"):
            doc = json.loads((tmp_path / f"stability_hawkmoth_{obj}.json").read_text())
            assert doc["a_placement"] == "literal"

    def test_all_reports_and_exit(self, capsys, tmp_path):
        code, out, _ = run(capsys, "stability", "--all", "--output", str(tmp_path))
        files = sorted(tmp_path.glob("stability_*.json"))
        assert len(files) == 12
        verdicts = {f.name: json.loads(f.read_text())["verdict"] for f in files}
        # exit 0 iff every verdict is stable
        assert code == (0 if set(verdicts.values()) == {"stable"} else 1)

    def test_analysis_failure_exit(self, capsys, tmp_path, monkeypatch):
        from hover_es import cli
        from hover_es.stability import NoEquilibriumFound

        def no_equilibrium(*args, **kwargs):
            raise NoEquilibriumFound("no seed converged; best scaled residual 1", 1.0)

        monkeypatch.setattr(cli, "analyze", no_equilibrium)
        code, _, err = run(capsys, "stability", "--species", "hoverfly", "--objective", "altitude",
                           "--output", str(tmp_path))
        assert code == 4 and "hoverfly/altitude" in err


class TestSweep:
    def test_grid_outputs(self, capsys, tmp_path):
        code, _, _ = run(capsys, "sweep", "--species-list", "bumblebee", "hawkmoth", "--objectives", "altitude",
                         "--vary", "a_scale=0.5,1", "--set", "duration_periods=40", "--output", str(tmp_path))
        assert code == 0
        rows = list(csv.DictReader(open(tmp_path / "sweep.csv", encoding="utf-8")))
        assert [(r["species"], json.loads(r["overrides"])["a_scale"]) for r in rows] == [
            ("bumblebee", 0.5), ("bumblebee", 1), ("hawkmoth", 0.5), ("hawkmoth", 1)]
        doc = json.loads((tmp_path / "sweep.json").read_text())
        assert len(doc["cells"]) == 4 and "metadata" in doc

    def test_bad_vary(self, capsys, tmp_path):
        code, _, _ = run(capsys, "sweep", "--vary", "a_scale", "--output", str(tmp_path))
        assert code == 2


class TestReproduce:
    def test_short_run_fails_and_is_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        code, out, err = run(capsys, "reproduce", "--duration-periods", "5", "--output", str(a))
        assert code == 1 and "failing criteria" in err and "1 (" in err
        run(capsys, "reproduce", "--duration-periods", "5", "--output", str(b))
        assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
        assert (a / "summary.txt").read_bytes() == (b / "summary.txt").read_bytes()


class TestParser:
    def test_no_command(self, capsys):
        assert main([]) == 2

    def test_version(self, capsys):
        assert main(["--version"]) == 0
