import json
import subprocess
import sys

import pytest

from gdtspn_knn import __version__
from gdtspn_knn.cli import main
from gdtspn_knn.eventlog import read_log, write_csv
from gdtspn_knn.evaluate import COLUMNS, read_report
from gdtspn_knn.synthetic import deterministic_log, two_variant_log


@pytest.fixture
def small_csv(tmp_path):
    path = tmp_path / "small.csv"
    path.write_bytes(write_csv(two_variant_log(150, seed=1)))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_stats_json(capsys, small_csv):
    code, out, _ = run(capsys, "stats", "--log", small_csv, "--json")
    assert code == 0
    st = json.loads(out)
    assert st["cases"] == 150 and st["event_classes"] == 5 and st["max_case_length"] == 5


def test_stats_bundled_table(capsys):
    code, out, _ = run(capsys, "stats", "--log", "bundled:two_variant")
    assert code == 0
    assert "cases" in out and "1200" in out


@pytest.mark.parametrize("fmt,marker", [("pnml", b"<pnml"), ("dot", b"digraph"),
                                        ("gdtspn", b"<pnml")])
def test_discover_formats(capsys, small_csv, tmp_path, fmt, marker):
    out = tmp_path / f"model.{fmt}"
    code, _, _ = run(capsys, "discover", "--log", small_csv, "--format", fmt, "--out", out)
    assert code == 0
    assert marker in out.read_bytes()


def test_predict_json(capsys, small_csv):
    lg = read_log(small_csv)
    case = lg.traces[3].case_id
    code, out, _ = run(capsys, "predict", "--log", small_csv, "--case", case, "--t0", "+3h",
                       "--k", "20", "--n", "50")
    assert code == 0
    res = json.loads(out)
    assert res["case"] == case and res["method"] == "gdtspn_knn"
    assert res["remaining_s"] >= 0 and res["elapsed_s"] == 3 * 3600
    again = json.loads(run(capsys, "predict", "--log", small_csv, "--case", case, "--t0", "+3h",
                           "--k", "20", "--n", "50")[1])
    assert again == res


def test_predict_iso_t0_and_average(capsys, tmp_path):
    path = tmp_path / "d.csv"
    path.write_bytes(write_csv(deterministic_log(10)))
    code, out, _ = run(capsys, "predict", "--log", path, "--case", "d0",
                       "--t0", "2020-01-01T01:00:00Z", "--method", "average")
    assert code == 0
    assert json.loads(out)["remaining_s"] == pytest.approx(2 * 3600 + 1800)


def test_predict_unknown_case(capsys, small_csv):
    code, _, err = run(capsys, "predict", "--log", small_csv, "--case", "nope", "--t0", "+1h")
    assert code == 2 and err.startswith("error:")


def test_evaluate_bundled_defaults(capsys, tmp_path):
    out = tmp_path / "report.csv"
    code, _, _ = run(capsys, "-q", "evaluate", "--log", "bundled:two_variant", "--out", out,
                     "--jobs", "1")
    assert code == 0
    metrics = read_report(out.read_bytes())
    assert len(metrics) == 40 * 5
    assert metrics[0].active_traces == 500


def test_evaluate_train_test_json_and_plots(capsys, tmp_path):
    train, test = tmp_path / "train.csv", tmp_path / "test.csv"
    tr = two_variant_log(60, seed=2)
    train.write_bytes(write_csv(tr))
    test.write_bytes(write_csv(two_variant_log(5, seed=3, start=tr.traces[-1].end + 10**6,
                                               prefix="t")))
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "evaluate", "--train", train, "--test", test, "--N", "3",
                     "--k", "10", "--n", "20", "--methods", "gdtspn_knn,average",
                     "--out", out, "--plot-data", tmp_path / "plots", "--jobs", "1")
    assert code == 0
    rows = json.loads(out.read_text())
    assert len(rows) == 12 and set(rows[0]) == set(COLUMNS)
    assert (tmp_path / "plots" / "rmse_s.csv").exists()


def test_missing_file_exits_2(capsys, tmp_path):
    code, _, err = run(capsys, "stats", "--log", tmp_path / "absent.csv")
    assert code == 2
    assert err.startswith("error:")


def test_bad_flag_exits_2(capsys):
    code, _, err = run(capsys, "evaluate", "--N", "0")
    assert code == 2 and "error:" in err
    code, _, err = run(capsys, "evaluate", "--methods", "bogus")
    assert code == 2


def test_config_file_overridden_by_flags(capsys, tmp_path):
    path = tmp_path / "d.csv"
    path.write_bytes(write_csv(deterministic_log(10)))
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nmethod = average\nno_subtract_elapsed = true\n")
    code, out, _ = run(capsys, "--config", cfg, "predict", "--log", path, "--case", "d0",
                       "--t0", "+1h")
    assert code == 0
    res = json.loads(out)
    assert res["method"] == "average" and res["remaining_s"] == pytest.approx(12600)
    code, out, _ = run(capsys, "--config", cfg, "predict", "--log", path, "--case", "d0",
                       "--t0", "+1h", "--method", "knn_average_3")
    assert json.loads(out)["method"] == "knn_average_3"
    cfg.write_text("bogus_key = 1\n")
    code, _, err = run(capsys, "--config", cfg, "predict", "--log", path, "--case", "d0",
                       "--t0", "+1h")
    assert code == 2 and "bogus_key" in err


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


@pytest.mark.parametrize("name", ["g.csv", "g.xes.gz"])
def test_generate(capsys, tmp_path, name):
    out = tmp_path / name
    code, _, _ = run(capsys, "generate", "two_variant", "--traces", "30", "--seed", "2",
                     "--out", out)
    assert code == 0
    assert len(read_log(out)) == 30


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gdtspn_knn", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
