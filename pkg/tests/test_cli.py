import csv
import io

import numpy as np

from logtrunc.cli import EXIT_CONFIG, EXIT_FLAGGED, EXIT_OK, main
from logtrunc.datagen import Dataset
from logtrunc.experiment import REPORT_COLUMNS, export_csv, read_report

FAST = ["--set", "sgd.epochs=2", "--set", "search.iterations=2", "--set", "experiment.n=40",
        "--set", "experiment.p=4"]


def test_simulate_writes_report(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["simulate", "--reps", "2", "--output", str(out)] + FAST) == EXIT_OK
    rows = read_report(out)
    assert [r["arm"] for r in rows] == ["truncated", "untruncated"]


def test_simulate_json_stdout(capsys):
    assert main(["simulate", "--reps", "1", "--format", "json"] + FAST) == EXIT_OK
    assert '"columns"' in capsys.readouterr().out


def test_config_error_exit(tmp_path, capsys):
    assert main(["simulate", "--set", "noise.kind=bogus"]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "nope.ini")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_flagged_exit():
    args = ["simulate", "--reps", "2", "--set", "sgd.lr0=1e9", "--set", "sgd.max_objective=1",
            "--set", "experiment.warm_epochs=0", "--output", "/dev/null"] + FAST
    assert main(args) == EXIT_FLAGGED


def test_fit_csv(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 3))
    export_csv(Dataset(X, X @ [1.0, 2.0, 0.0] + rng.normal(size=30)), tmp_path / "d.csv")
    out = tmp_path / "r.csv"
    code = main(["fit-csv", str(tmp_path / "d.csv"), "--target", "y", "--reps", "1",
                 "--output", str(out), "--set", "sgd.epochs=2", "--set", "search.iterations=2"])
    assert code == EXIT_OK
    assert read_report(out)[0]["metric"] == "mae"


def test_bounds_table(capsys):
    assert main(["bounds", "--n", "1000", "4000", "--eps", "1.0"]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 2
    assert float(rows[0]["excess_bound"]) > float(rows[1]["excess_bound"])


def test_selftest(capsys):
    assert main(["selftest"]) == EXIT_OK
    assert "selftest passed" in capsys.readouterr().out
