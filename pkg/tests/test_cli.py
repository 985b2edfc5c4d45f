import csv
import json
import math

import numpy as np
import pytest

from semimed.cli import CURVE_COLUMNS, EXIT_INVALID, EXIT_OK, EXIT_PARTIAL_VARIANCE, main, read_curves, write_curves
from semimed.event_data import write_csv
from semimed.simulation import ScenarioConfig, generate_dataset


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "setting1.csv"
    write_csv(generate_dataset(ScenarioConfig.setting("1", m=300), 0), path)
    return path


def estimate(data_csv, out, *extra):
    return main(["estimate", "--input", str(data_csv), "--out-dir", str(out), "--n-boot", "20", *extra])


def body_rows(path):
    with open(path, newline="") as fh:
        fh.readline()
        return list(csv.DictReader(fh))


def load_csv(path):
    # simulate outputs carry a one-line manifest comment
    with open(path, newline="") as fh:
        assert fh.readline().startswith("# manifest=manifest.json config_hash=")
        return list(csv.DictReader(fh))


class TestEstimate:
    def test_shapes_and_manifest(self, data_csv, tmp_path):
        assert estimate(data_csv, tmp_path, "--grid", "1,2,4,6") == EXIT_OK
        rows = body_rows(tmp_path / "curves.csv")
        assert list(rows[0]) == list(CURVE_COLUMNS)
        curves = {(r["decomposition"], r["z1"], r["z2_or_effect"]) for r in rows}
        cells = {c for c in curves if c[1] != ""}
        assert len(cells) == 8 and len(curves - cells) == 10
        assert len(rows) == 18 * 4
        assert all(math.isfinite(float(r[c])) for r in rows for c in ("time", "estimate", "se", "ci_lo", "ci_hi"))
        assert {r["variance_method"] for r in rows} == {"bootstrap"}
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        comment = (tmp_path / "curves.csv").read_text().splitlines()[0]
        assert comment == f"# manifest=manifest.json config_hash={manifest['config_hash']}"
        assert manifest["command"] == "estimate" and manifest["seed"] == 0
        assert set(manifest["outputs"]) == {"curves.csv"}

    def test_events_grid_is_the_jump_times(self, data_csv, tmp_path):
        assert estimate(data_csv, tmp_path, "--ci", "none", "--decomposition", "haz", "--effects", "de") == EXIT_OK
        rows = body_rows(tmp_path / "curves.csv")
        times = sorted({float(r["time"]) for r in rows})
        with open(data_csv, newline="") as fh:
            events = set()
            for r in csv.DictReader(fh):
                if r["status_nonterminal"] == "1":
                    events.add(float(r["time_nonterminal"]))
                if r["status_terminal"] == "1":
                    events.add(float(r["time_terminal"]))
        assert times == sorted(events)
        assert {r["se"] for r in rows} == {""}

    def test_bad_csv_exits_2_with_row_numbers(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text(
            "id,z,time_nonterminal,status_nonterminal,time_terminal,status_terminal\n"
            "a,0,3.0,0,2.0,0\nb,1,1.0,0,1.0,1\nc,0,1.0,0,2.0,1\n"
        )
        assert estimate(path, tmp_path / "out") == EXIT_INVALID
        err = capsys.readouterr().err
        assert "row 2" in err and "row 4" in err
        assert not (tmp_path / "out" / "curves.csv").exists()

    @pytest.mark.parametrize("flags", [["--grid", "a,b"], ["--effects", "de,xx"], ["--alpha", "1.5"], ["--n-boot", "1"]])
    def test_bad_flags_exit_2(self, data_csv, tmp_path, flags):
        assert estimate(data_csv, tmp_path, *flags) == EXIT_INVALID

    def test_partial_variance_refusal(self, data_csv, tmp_path, capsys):
        code = estimate(data_csv, tmp_path, "--ci", "asymptotic", "--decomposition", "prev")
        assert code == EXIT_PARTIAL_VARIANCE
        err = capsys.readouterr().err
        assert "(X) process" in err and "--bootstrap-fallback" in err

    def test_bootstrap_fallback(self, data_csv, tmp_path):
        code = estimate(data_csv, tmp_path, "--ci", "asymptotic", "--decomposition", "prev", "--bootstrap-fallback",
                        "--grid", "2,4")
        assert code == EXIT_OK
        methods = {(r["z1"], r["z2_or_effect"]): r["variance_method"] for r in body_rows(tmp_path / "curves.csv")}
        assert methods["0", "0"] == methods["", "total"] == "asymptotic"
        assert methods["0", "1"] == methods["", "DE"] == "bootstrap"

    def test_ci_both_marks_bootstrap_only_targets(self, data_csv, tmp_path, capsys):
        assert estimate(data_csv, tmp_path, "--ci", "both", "--grid", "2,4") == EXIT_OK
        rows = body_rows(tmp_path / "curves.csv")
        prev_de = {r["variance_method"] for r in rows if r["decomposition"] == "prev" and r["z2_or_effect"] == "DE"}
        haz_de = {r["variance_method"] for r in rows if r["decomposition"] == "haz" and r["z2_or_effect"] == "DE"}
        assert prev_de == {"bootstrap"} and haz_de == {"asymptotic", "bootstrap"}
        assert "bootstrap intervals only" in capsys.readouterr().err

    def test_byte_identical_across_runs_and_threads(self, data_csv, tmp_path):
        outs = [tmp_path / name for name in ("a", "b", "c")]
        assert estimate(data_csv, outs[0], "--seed", "9") == EXIT_OK
        assert estimate(data_csv, outs[1], "--seed", "9") == EXIT_OK
        assert estimate(data_csv, outs[2], "--seed", "9", "--threads", "3") == EXIT_OK
        first = (outs[0] / "curves.csv").read_bytes()
        assert all((o / "curves.csv").read_bytes() == first for o in outs[1:])

    def test_threads_env_fallback(self, data_csv, tmp_path, monkeypatch):
        estimate(data_csv, tmp_path / "a", "--grid", "3")
        monkeypatch.setenv("SEMIMED_THREADS", "2")
        estimate(data_csv, tmp_path / "b", "--grid", "3")
        assert (tmp_path / "a" / "curves.csv").read_bytes() == (tmp_path / "b" / "curves.csv").read_bytes()

    def test_curves_round_trip(self, data_csv, tmp_path):
        assert estimate(data_csv, tmp_path, "--ci", "both") == EXIT_OK
        path = tmp_path / "curves.csv"
        original = path.read_bytes()
        comment, rows = read_curves(path)
        copy = tmp_path / "copy.csv"
        write_curves(copy, comment, rows)
        assert copy.read_bytes() == original


class TestSimulate:
    def test_single_replicate_smoke(self, tmp_path):
        code = main(["simulate", "--setting", "1", "--reps", "1", "--n-boot", "10", "--out-dir", str(tmp_path)])
        assert code == EXIT_OK
        summary = load_csv(tmp_path / "study_summary.csv")
        assert list(summary[0]) == ["setting", "effect", "decomposition", "truth_assumption", "stat", "t", "value"]
        oracle_rows = load_csv(tmp_path / "oracle_curves.csv")
        assert all(math.isfinite(float(r["value"])) for r in summary + oracle_rows)
        assert load_csv(tmp_path / "replicates.csv")
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert set(manifest["outputs"]) == {"study_summary.csv", "replicates.csv", "oracle_curves.csv"}
        assert manifest["config"]["n_reps"] == 1

    def test_null_custom_configuration(self, tmp_path):
        reps = 20
        code = main(["simulate", "--setting", "custom", "--a", "0", "--b", "0", "--c", "0", "--reps", str(reps),
                     "--n-boot", "10", "--out-dir", str(tmp_path)])
        assert code == EXIT_OK
        rows = load_csv(tmp_path / "study_summary.csv")
        assert {r["setting"] for r in rows} == {"custom"}
        value = {(r["effect"], r["decomposition"], r["truth_assumption"], r["stat"], r["t"]): float(r["value"]) for r in rows}
        for (effect, d, truth, stat, t), mean in value.items():
            if stat != "Mean estimate" or effect not in ("DE", "IE", "total"):
                continue
            sd = value[effect, d, truth, "SD", t]
            assert abs(mean) <= 4 * sd / np.sqrt(reps) + 1e-12, (effect, d, t)
            assert value[effect, d, truth, "Truth", t] == 0.0

    def test_config_file_and_overrides(self, tmp_path):
        cfg = tmp_path / "scenario.cfg"
        cfg.write_text("setting=2\nm=120\nn_reps=2\nn_boot=5\neval_times=2,4\n")
        assert main(["simulate", "--config", str(cfg), "--seed", "4", "--out-dir", str(tmp_path / "o")]) == EXIT_OK
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["config"]["m"] == 120 and manifest["seed"] == 4
        assert str(cfg) in manifest["inputs"]
        assert {r["t"] for r in load_csv(tmp_path / "o" / "study_summary.csv")} == {"2.0", "4.0"}

    @pytest.mark.parametrize("text", ["m=abc\n", "censor_low=9\ncensor_high=7\n", "colour=red\n"])
    def test_bad_config_exits_2(self, tmp_path, text):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(text)
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == EXIT_INVALID

    def test_missing_config_file_exits_2(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.cfg")]) == EXIT_INVALID
