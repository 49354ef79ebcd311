import json
import math

from typer.testing import CliRunner

from ergolab import __version__
from ergolab.cli import app
from ergolab.storage import read_results
from ergolab.transfer import free_growth

runner = CliRunner()


def _summary(directory):
    return json.loads((directory / "summary.json").read_text())


def test_version_flag():
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert f"ergolab v{__version__}" in result.output


def test_config_errors_exit_3_without_output(tmp_path):
    out = tmp_path / "out"
    for extra in (["--f", "square"], ["--colour", "blue"], ["--samples", "lots"]):
        result = runner.invoke(app, ["lyapunov", *extra, "--output", str(out)])
        assert result.exit_code == 3, extra
        assert not out.exists()


def test_lyapunov_free_operator(tmp_path):
    out = tmp_path / "lyap"
    args = ["lyapunov", "--coupling", "0", "--energies", "2.5:3.5:3", "--n", "2000", "--samples", "2"]
    result = runner.invoke(app, [*args, "--output", str(out)])
    assert result.exit_code == 0, result.output

    header, rows = read_results(out / "results.csv")
    assert header == ["E", "L", "stderr", "N", "samples", "reference"]
    assert len(rows) == 3
    for row in rows:
        assert abs(float(row[1]) - free_growth(float(row[0]))) < 1e-3

    summary = _summary(out)
    assert summary["status"] == "ok"
    assert summary["tally"]["free-closed-form"] == {"passed": 3, "failed": 0}
    assert (out / "config.txt").exists()


def test_ids_free_operator_uses_default_results_root(results_dir):
    result = runner.invoke(app, ["ids", "--coupling", "0", "--n", "3", "--energies", "0", "--samples", "2"])
    assert result.exit_code == 0, result.output

    header, rows = read_results(results_dir / "ids" / "results.csv")
    assert header == ["E", "k_M", "stderr", "M", "samples", "lambda"]
    assert math.isclose(float(rows[0][1]), 1.0 / 3.0)
    assert rows[0][3] == "3"


def test_worker_count_does_not_change_results(tmp_path):
    args = ["ids", "--coupling", "1", "--n", "5", "--energies", "-2:2:9", "--samples", "2100"]
    outputs = []
    for workers in ("1", "2"):
        out = tmp_path / f"workers{workers}"
        result = runner.invoke(app, [*args, "--workers", workers, "--output", str(out)])
        assert result.exit_code == 0, result.output
        outputs.append((out / "results.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_summary_config_echo_reproduces_run(tmp_path):
    first = tmp_path / "first"
    args = ["ids", "--system", "skew-shift", "--f", "linear-centered", "--coupling", "0.5"]
    result = runner.invoke(app, [*args, "--n", "8", "--energies", "-1:1:5", "--samples", "50", "--output", str(first)])
    assert result.exit_code == 0, result.output

    second = tmp_path / "second"
    result = runner.invoke(app, ["ids", "--config", str(first / "summary.json"), "--output", str(second)])
    assert result.exit_code == 0, result.output
    assert (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()


def test_msa_certify_at_large_coupling(tmp_path):
    out = tmp_path / "msa"
    args = [
        "msa-certify", "--system", "iid", "--law", "bernoulli", "--coupling", "100", "--n", "50",
        "--block", "2", "--coarse", "3", "--energies", "0", "--output", str(out),
    ]
    result = runner.invoke(app, args)
    assert result.exit_code == 0, result.output

    witness = json.loads((out / "witness.json").read_text())
    assert witness["L"] == 24
    assert witness["badset"] == []
    steps = json.loads((out / "steps.json").read_text())["steps"]
    assert len(steps) == 1
    assert len(steps[0]["children"]) == 4

    summary = _summary(out)
    assert summary["metrics"]["surviving_fraction"] > 0.999
    assert summary["tally"]["witness-replay"]["passed"] == 1


def test_nondegen_constant_table_is_hypothesis_violation(tmp_path):
    table = tmp_path / "f.txt"
    table.write_text("0.0 0.5\n0.5 0.5\n")
    out = tmp_path / "nondegen"
    args = ["nondegen", "--f", "table", "--table", str(table), "--samples", "2000", "--output", str(out)]
    result = runner.invoke(app, args)
    assert result.exit_code == 1

    summary = _summary(out)
    assert summary["status"] == "hypothesis-violated"
    assert summary["error"].startswith("NonDegeneracyViolation")


def test_prufer_check_exit_codes(tmp_path):
    base = ["prufer-check", "--n", "200", "--trials", "2"]
    result = runner.invoke(app, [*base, "--coupling", "0.25", "--output", str(tmp_path / "large")])
    assert result.exit_code == 1
    assert _summary(tmp_path / "large")["error"].startswith("StepTooLarge")

    result = runner.invoke(app, [*base, "--coupling", "0.1", "--output", str(tmp_path / "lenient")])
    assert result.exit_code == 0, result.output
    assert _summary(tmp_path / "lenient")["metrics"]["hypotheses"]["condlam1"] is False

    result = runner.invoke(app, [*base, "--coupling", "0.1", "--strict", "--output", str(tmp_path / "strict")])
    assert result.exit_code == 1
    assert _summary(tmp_path / "strict")["status"] == "hypothesis-violated"


def test_wegner_skew_records_the_measured_holder_exponent(tmp_path):
    out = tmp_path / "skew"
    args = [
        "wegner-skew", "--coupling", "0.5", "--n", "20", "--dimension", "3", "--eps", "1e-5",
        "--energies", "-1,0,1", "--samples", "500", "--output", str(out),
    ]
    result = runner.invoke(app, args)
    assert result.exit_code == 0, result.output

    metrics = _summary(out)["metrics"]
    assert 0.5 < metrics["holder_alpha"] < 1.5
    assert math.isclose(metrics["loghoelder_C"], math.exp(-1.0) / metrics["holder_alpha"])
