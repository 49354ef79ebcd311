import json

import numpy as np

from ergolab.dynamics import make_function, make_system, potential
from ergolab.models import CriticalityWitness, IDSTable, PotentialWindow, StepOutcome
from ergolab.storage import (
    ReportWriter,
    StorageError,
    export_potential,
    ids_rows,
    import_potential,
    outcome_from_dict,
    outcome_to_dict,
    read_results,
    read_sampling_table,
    witness_from_dict,
    witness_to_dict,
)


def test_results_csv_has_format_line_and_full_precision(tmp_path):
    writer = ReportWriter(tmp_path / "out")
    path = writer.write_results(("E", "L", "ok"), [[0.1, 1.0 / 3.0, True], [2, np.float64(0.5), False]])

    lines = path.read_text().splitlines()
    assert lines[0] == "# format_version=1"
    assert lines[1] == "E,L,ok"
    assert lines[2] == "0.10000000000000001,0.33333333333333331,true"
    assert lines[3] == "2,0.5,false"

    header, rows = read_results(path)
    assert header == ["E", "L", "ok"]
    assert float(rows[0][1]) == 1.0 / 3.0


def test_read_results_rejects_unknown_format(tmp_path):
    path = tmp_path / "results.csv"
    path.write_text("E,L\n0,1\n")
    try:
        read_results(path)
    except StorageError:
        pass
    else:
        raise AssertionError("Expected StorageError for a file without the format line")


def test_summary_and_artifacts_carry_format_version(tmp_path):
    writer = ReportWriter(tmp_path)
    writer.write_summary({"status": "ok", "metrics": {"tails": np.array([0.5, 0.25]), "n": np.int64(3)}})

    payload = json.loads((tmp_path / "summary.json").read_text())
    assert payload["format_version"] == 1
    assert payload["metrics"] == {"tails": [0.5, 0.25], "n": 3}


def test_ids_rows_follow_column_order():
    table = IDSTable(
        M=3,
        energies=np.array([-1.0, 0.0]),
        values=np.array([0.0, 1.0 / 3.0]),
        stderr=np.zeros(2),
        samples=4,
        coupling=0.0,
    )
    assert ids_rows(table)[1] == [0.0, 1.0 / 3.0, 0.0, 3, 4, 0.0]


def test_potential_export_and_import(tmp_path):
    values = np.array([0.1, -0.25, 1.0 / 3.0])
    path = tmp_path / "potential.txt"
    export_potential(PotentialWindow(values=values, coupling=2.5), path, kind="iid", seed=11)

    assert path.read_text().splitlines()[0] == "# lambda=2.5 kind=iid seed=11"
    loaded = import_potential(path)
    assert loaded.coupling == 2.5
    assert np.array_equal(loaded.values, values)
    assert loaded.origin == {"kind": "iid", "seed": 11}


def test_exported_orbit_potential_keeps_its_origin(tmp_path):
    system = make_system("skew-shift", alpha=0.3, seed=7)
    window = potential(system, make_function("linear-centered"), 0.5, np.array([0.1, 0.2]), 5)
    path = tmp_path / "skew.txt"
    export_potential(window, path)

    assert path.read_text().splitlines()[0] == "# lambda=0.5 kind=skew-shift seed=7"
    again = tmp_path / "again.txt"
    export_potential(import_potential(path), again)
    assert again.read_text() == path.read_text()


def test_import_potential_requires_header(tmp_path):
    path = tmp_path / "potential.txt"
    path.write_text("0.5\n0.25\n")
    try:
        import_potential(path)
    except StorageError:
        pass
    else:
        raise AssertionError("Expected StorageError for a headerless potential")


def test_read_sampling_table(tmp_path):
    path = tmp_path / "f.txt"
    path.write_text("# x f(x)\n0.0 1.0\n0.5 -1.0\n")
    xs, ys = read_sampling_table(path)
    assert list(xs) == [0.0, 0.5]
    assert list(ys) == [1.0, -1.0]

    bad = tmp_path / "bad.txt"
    bad.write_text("0.0 1.0 2.0\n")
    try:
        read_sampling_table(bad)
    except StorageError:
        pass
    else:
        raise AssertionError("Expected StorageError for three columns")


def test_witness_and_step_outcome_survive_json(tmp_path):
    witness = CriticalityWitness(delta=1.5, sigma=0.25, L=4, energies=(-1.0, 1.0), k=(0, 2, 4, 6, 8, 10), badset=(3,))
    outcome = StepOutcome(
        variant="eliminate",
        M=3,
        delta=2.25,
        sigma=0.125,
        L=1,
        coarse=(0, 8, 10),
        children=(witness,),
        eliminated=(1,),
        resonance_counts={0: 0, 1: 1},
        Q=2,
        q_bound=10.0,
        diagnostics={"tolerance": 0.9},
    )
    ReportWriter(tmp_path).write_artifact("steps.json", {"steps": [outcome_to_dict(outcome)]})
    payload = json.loads((tmp_path / "steps.json").read_text())

    restored = outcome_from_dict(payload["steps"][0])
    assert restored == outcome
    assert witness_from_dict(witness_to_dict(witness)) == witness


def test_malformed_witness_raises():
    try:
        witness_from_dict({"delta": 1.0})
    except StorageError:
        pass
    else:
        raise AssertionError("Expected StorageError for a truncated witness")
