import csv
import json

import pytest

from hawkesclt import cli
from hawkesclt import experiments
from hawkesclt.errors import NumericalFailure

SMALL = {
    "horizons": [10.0, 20.0, 40.0],
    "replications": 400,
    "debias_replicates": 8,
    "bootstrap": 20,
    "seed": 3,
    "verify": {
        "ibp": {"reps": 2000},
        "derivative_positivity": {"reps": 100},
        "offspring_bound": {"reps": 800, "T": 20.0},
        "martingale": {"reps": 500},
        "remainder_R": {"reps": 300, "horizons": [20.0, 40.0, 80.0]},
        "R_third_moment": {"reps": 400, "horizons": [10.0, 20.0, 40.0]},
    },
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def test_psi(tmp_path, small_config, capsys):
    out = tmp_path / "run"
    assert cli.main(["--config", small_config, "--out", str(out), "psi", "--horizon", "5"]) == 0
    rows = list(csv.reader(open(out / "psi.csv")))
    assert rows[0] == ["t", "psi"]
    meta = json.load(open(out / "psi.json"))
    assert meta["l1"] == pytest.approx(0.5)
    assert "l1_estimate" in capsys.readouterr().out


def test_sim_single_and_batch(tmp_path, small_config):
    out = tmp_path / "sim"
    assert cli.main(["--config", small_config, "--out", str(out), "sim", "--T", "20"]) == 0
    assert open(out / "events.csv").readline().strip() == "time,mark"
    assert cli.main(["--config", small_config, "--out", str(out), "sim", "--T", "20",
                     "--reps", "30", "--method", "cluster"]) == 0
    rows = list(csv.DictReader(open(out / "paths.csv")))
    assert len(rows) == 30 and set(rows[0]) == {"replication", "H", "S", "compensator"}


def test_rates_layout_and_determinism(tmp_path, small_config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["--config", small_config, "--out", str(a), "--threads", "1", "rates"]) == 0
    # global flags are also accepted after the subcommand
    assert cli.main(["--config", small_config, "rates", "--out", str(b), "--threads", "4"]) == 0
    for name in ("config.json", "distances.csv", "cumulants.csv", "ratefit.json"):
        assert (a / name).exists()
    assert (a / "distances.csv").read_bytes() == (b / "distances.csv").read_bytes()
    assert (a / "cumulants.csv").read_bytes() == (b / "cumulants.csv").read_bytes()
    header = open(a / "distances.csv").readline().strip().split(",")
    assert header == experiments.DISTANCE_COLUMNS
    doc = json.load(open(a / "ratefit.json"))
    assert doc["theory"]["gamma2"] == pytest.approx(2.0)
    assert {"config_hash", "git_hash", "timestamp"} <= set(doc["metadata"])
    assert doc["config"]["seed"] == 3


def test_seed_override_changes_output(tmp_path, small_config):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["--config", small_config, "--out", str(a), "rates"])
    cli.main(["--config", small_config, "--seed", "4", "--out", str(b), "rates"])
    assert (a / "distances.csv").read_bytes() != (b / "distances.csv").read_bytes()
    assert json.load(open(b / "config.json"))["seed"] == 4


def test_verify_and_report(tmp_path, small_config, capsys):
    out = tmp_path / "v"
    code = cli.main(["--config", small_config, "--out", str(out), "verify", "--negative-control"])
    text = capsys.readouterr().out
    assert "failed as expected" in text
    doc = json.load(open(out / "lemmas.json"))
    assert len(doc["reports"]) == 12
    assert code == (3 if doc["failed"] or doc["vacuous_controls"] else 0)
    assert cli.main(["report", str(out)]) == 0
    assert "ibp" in capsys.readouterr().out


def test_report_on_rates(tmp_path, small_config, capsys):
    out = tmp_path / "r"
    cli.main(["--config", small_config, "--out", str(out), "rates"])
    capsys.readouterr()
    assert cli.main(["report", str(out)]) == 0
    assert "slope=" in capsys.readouterr().out


def test_zero_kernel_verify_passes(tmp_path):
    cfg = dict(SMALL, kernel={"family": "zero"})
    cfg["verify"] = dict(SMALL["verify"], ibp={"reps": 20_000})
    path = tmp_path / "z.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["--config", str(path), "--out", str(tmp_path / "z"), "verify",
                     "--negative-control"]) == 0
    doc = json.load(open(tmp_path / "z" / "lemmas.json"))
    assert all(r["verdict"] == "pass" for r in doc["reports"] if not r["negative_control"])


def test_exit_code_config_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"mu": 1.0, "typo": 1}))
    assert cli.main(["--config", str(path), "rates"]) == 2
    assert "typo" in capsys.readouterr().err
    assert cli.main(["--config", str(tmp_path / "missing.json"), "rates"]) == 2


def test_exit_code_unstable_kernel(tmp_path):
    path = tmp_path / "u.json"
    path.write_text(json.dumps({"kernel": {"family": "exponential", "alpha": 2.0, "beta": 2.0}}))
    assert cli.main(["--config", str(path), "--out", str(tmp_path / "u"), "rates"]) == 2
    assert not (tmp_path / "u" / "distances.csv").exists()


def test_exit_code_numerical_failure(tmp_path, small_config):
    out = str(tmp_path / "p")
    assert cli.main(["--config", small_config, "--out", out, "psi", "--max-iter", "3"]) == 4


def test_exit_code_verification_failure(tmp_path, small_config, monkeypatch):
    real = experiments.V.check_martingale

    def broken(model, **kw):
        kw["omit_compensator"] = True
        r = real(model, **kw)
        r.negative_control = False
        return r

    monkeypatch.setattr(experiments.V, "check_martingale", broken)
    assert cli.main(["--config", small_config, "--out", str(tmp_path / "f"), "verify"]) == 3


def test_exit_code_numerical_failure_from_rates(tmp_path, small_config, monkeypatch):
    def boom(*a, **k):
        raise NumericalFailure("forced")

    monkeypatch.setattr(experiments, "simulate_batch", boom)
    assert cli.main(["--config", small_config, "--out", str(tmp_path / "n"), "rates"]) == 4


def test_bad_threads(small_config):
    assert cli.main(["--config", small_config, "--threads", "0", "rates"]) == 2
