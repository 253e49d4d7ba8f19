import csv
import json
import math

import pytest

from risdsca import cli
from risdsca.experiments import SWEEP_COLUMNS

SMALL = ["--set", "system.K=4", "--set", "system.M=2"]


def _run(tmp_path, name, *argv):
    out = tmp_path / name
    assert cli.main([*argv, "--out", str(out)]) == cli.EXIT_OK
    return out


@pytest.fixture(scope="module")
def preset_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    a = _run(tmp, "a.json", "run", "--set", "seed=7")
    b = _run(tmp, "b.json", "run", "--set", "seed=7")
    return a, b


def test_run_is_byte_identical(preset_run):
    a, b = preset_run
    assert a.read_bytes() == b.read_bytes()


def test_run_terminates_or_flags(preset_run):
    out = json.loads(preset_run[0].read_text())
    assert out["config"]["seed"] == 7 and out["ris_enabled"]
    assert out["converged"] or out["history"][-1]["term_metric"] > 1e-3
    if out["converged"]:
        assert out["history"][-1]["term_metric"] <= 1e-3
    assert len(out["history"]) == out["iterations"] + 1
    assert {"p", "phi", "lorentzian_params"} <= set(out["final"])


def test_run_without_ris(tmp_path):
    out = json.loads(_run(tmp_path, "r.json", "run", *SMALL, "--set", "system.M=0").read_text())
    assert out["ris_enabled"] is False
    assert set(out["final"]) == {"p"}


def test_run_bus_log_and_channel_dump(tmp_path):
    log_path, ch_path = tmp_path / "bus.jsonl", tmp_path / "ch.json"
    args = ["run", *SMALL, "--set", "algo.max_iter=3", "--log-messages", str(log_path), "--dump-channels", str(ch_path)]
    out = json.loads(_run(tmp_path, "r.json", *args).read_text())
    assert out["overhead"]["rounds"] == len(log_path.read_text().splitlines())
    assert ch_path.exists()


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"system": {"Q": 3, "K": 4, "M": 0}, "algo": {"max_iter": 2}}))
    out = json.loads(_run(tmp_path, "r.json", "run", "--config", str(cfg)).read_text())
    assert out["config"]["system"]["Q"] == 3 and len(out["final"]["p"]) == 3


@pytest.mark.parametrize(
    "argv, needle",
    [
        (["run", "--set", "system.K=0"], "system.K"),
        (["run", "--set", "algo.nope=1"], "algo.nope"),
        (["run", "--config", "/nonexistent.json"], "config"),
        (["sweep", "--powers", "10,0"], "sorted"),
        (["sweep", "--variants", "2:maybe"], "variant"),
        (["sweep", "--jobs", "0"], "jobs"),
    ],
)
def test_usage_errors(argv, needle, capsys):
    assert cli.main(argv) == cli.EXIT_USAGE
    assert needle in capsys.readouterr().err


def test_argparse_errors_exit_one():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == cli.EXIT_USAGE


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sweep")
    out = _run(tmp, "s.csv", "sweep", *SMALL, "--powers", "10", "--realizations", "1")
    return out, tmp / "s_summary.csv"


def test_sweep_row_count(small_sweep):
    rows = list(csv.DictReader(small_sweep[0].open()))
    assert list(rows[0]) == SWEEP_COLUMNS
    assert len(rows) == 4
    assert all(r["error"] == "" for r in rows)


def test_sweep_pairing(small_sweep):
    rows = list(csv.DictReader(small_sweep[0].open()))
    by_q = {}
    for r in rows:
        by_q.setdefault(r["Q"], set()).add(r["channel_hash"])
    assert all(len(h) == 1 for h in by_q.values())


def test_summary_means(tmp_path):
    out = _run(tmp_path, "s.csv", "sweep", *SMALL, "--powers", "0,10", "--realizations", "3", "--variants", "2:ris")
    rows = list(csv.DictReader(out.open()))
    summary = list(csv.DictReader((tmp_path / "s_summary.csv").open()))
    assert len(summary) == 2
    for s in summary:
        vals = [float(r["sum_rate_bps"]) for r in rows if r["P_dbm"] == s["P_dbm"]]
        assert int(s["n"]) == len(vals) == 3
        assert abs(float(s["mean_sum_rate_bps"]) - math.fsum(vals) / 3) <= 1e-12 * abs(float(s["mean_sum_rate_bps"]))


def test_validate_exit_codes(monkeypatch, capsys):
    monkeypatch.setattr(cli, "validate_all", lambda price_sign: {"passed": price_sign > 0, "suites": []})
    assert cli.main(["validate"]) == cli.EXIT_OK
    assert cli.main(["validate", "--inject-price-sign-flip"]) == cli.EXIT_VALIDATION
    assert json.loads(capsys.readouterr().out.split("\n}\n")[0] + "}")["passed"] is True


def test_validate_sign_flip_fails_gradient_suite(tmp_path):
    out = tmp_path / "v.json"
    assert cli.main(["validate", "--inject-price-sign-flip", "--out", str(out)]) == cli.EXIT_VALIDATION
    verdict = json.loads(out.read_text())
    suites = {s["name"]: s for s in verdict["suites"]}
    assert not suites["gradients"]["passed"]
    assert all(s["passed"] for name, s in suites.items() if name != "gradients")
    assert all("max_error" in s for s in suites.values())
