import csv

import pytest

from fedcdl.cli import main, parse_spec, SpecError
from fedcdl.data import load_csv

MINIMAL = """\
[experiment]
spec_version = 1
seeds = 0
output = {out}

[data]
samples_total = 400
dirichlet_alpha = 0.5

[topology]
name = {topology}
silos = 4

[trainer]
scheme = DFL
rounds = {rounds}
local_updates = 2
cdl_enabled = {cdl}

[net]
hidden_dim = 8
residual_blocks = 1
feature_dim = 4
"""


def write_spec(tmp_path, name="spec.ini", out="run", topology="ring", rounds=5, cdl="true", extra=""):
    path = tmp_path / name
    path.write_text(MINIMAL.format(out=tmp_path / out, topology=topology, rounds=rounds, cdl=cdl) + extra)
    return path


def test_run_minimal_spec(tmp_path, capsys):
    spec = write_spec(tmp_path)
    assert main(["run", str(spec)]) == 0
    rows = list(csv.DictReader((tmp_path / "run" / "seed_0" / "metrics.csv").open()))
    assert sum(r["silo"] == "global" for r in rows) == 5
    assert (tmp_path / "run" / "summary.md").is_file()
    assert (tmp_path / "run" / "seed_0" / "summary.json").is_file()


def test_rerun_identical_bytes(tmp_path):
    assert main(["run", str(write_spec(tmp_path, out="a"))]) == 0
    assert main(["run", str(write_spec(tmp_path, out="b"))]) == 0
    a = (tmp_path / "a" / "seed_0" / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / "seed_0" / "metrics.csv").read_bytes()
    assert a == b


def test_unknown_topology_exit_2(tmp_path, capsys):
    assert main(["run", str(write_spec(tmp_path, topology="atlantis"))]) == 2
    assert "[topology] name" in capsys.readouterr().err


def test_spec_version_checked(tmp_path, capsys):
    path = write_spec(tmp_path)
    path.write_text(path.read_text().replace("spec_version = 1", "spec_version = 7"))
    assert main(["run", str(path)]) == 2
    assert "spec_version" in capsys.readouterr().err


@pytest.mark.parametrize(
    "patch,field",
    [
        (("rounds = 5", "rounds = five"), "[trainer] rounds"),
        (("scheme = DFL", "scheme = MESH"), "[trainer]"),
        (("seeds = 0", "seeds = "), "[experiment] seeds"),
        (("[net]", "[net]\ncolour = red"), "[net] colour"),
    ],
)
def test_invalid_fields_named(tmp_path, capsys, patch, field):
    path = write_spec(tmp_path)
    path.write_text(path.read_text().replace(*patch))
    assert main(["run", str(path)]) == 2
    assert field in capsys.readouterr().err


def test_output_root_env(tmp_path, monkeypatch):
    spec = tmp_path / "spec.ini"
    spec.write_text(MINIMAL.format(out="relative_run", topology="ring", rounds=1, cdl="false"))
    monkeypatch.setenv("FEDCDL_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["run", str(spec)]) == 0
    assert (tmp_path / "root" / "relative_run" / "seed_0" / "metrics.csv").is_file()


def test_parse_spec_defaults(tmp_path):
    spec = parse_spec(MINIMAL.format(out=tmp_path, topology="gaia11", rounds=3, cdl="yes"))
    assert spec.trainer.cdl_enabled and spec.trainer.rounds == 3 and spec.seeds == [0]
    assert spec.trainer.cdl.beta == 0.5
    with pytest.raises(SpecError, match="required"):
        parse_spec("[experiment]\noutput = x\n")


def test_compare(tmp_path, capsys):
    assert main(["run", str(write_spec(tmp_path, out="on", rounds=2))]) == 0
    assert main(["run", str(write_spec(tmp_path, out="off", rounds=2, cdl="false"))]) == 0
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "on"), str(tmp_path / "on")]) == 0
    report = capsys.readouterr().out
    assert "+0.00000" in report and "tie 1" in report
    assert main(["compare", str(tmp_path / "on"), str(tmp_path / "off"), "--output", str(tmp_path / "cmp.md")]) == 0
    assert "lower RMSE" in (tmp_path / "cmp.md").read_text()


def test_compare_missing_metrics(tmp_path, capsys):
    (tmp_path / "empty" / "seed_0").mkdir(parents=True)
    assert main(["run", str(write_spec(tmp_path, out="ok", rounds=1))]) == 0
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "ok"), str(tmp_path / "empty")]) != 0
    assert "metrics.csv" in capsys.readouterr().err


def test_compare_mismatched_seeds(tmp_path, capsys):
    assert main(["run", str(write_spec(tmp_path, out="a", rounds=1))]) == 0
    path = write_spec(tmp_path, name="s2.ini", out="b", rounds=1)
    path.write_text(path.read_text().replace("seeds = 0", "seeds = 1"))
    assert main(["run", str(path)]) == 0
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) != 0
    assert "seed" in capsys.readouterr().err


def test_cdtheory(tmp_path, capsys):
    report = tmp_path / "cd.csv"
    assert main(["cdtheory", "--report", str(report)]) == 0
    rows = list(csv.DictReader(report.open()))
    assert [int(r["sweeps"]) for r in rows] == [0, 1, 5, 50]
    assert float(rows[0]["stderr"]) == 0.0


def test_inspect_topology(tmp_path, capsys):
    tri = tmp_path / "tri.txt"
    tri.write_text("# silos 3\n0 1 10 100\n1 2 10 100\n0 2 10 100\n")
    assert main(["inspect-topology", str(tri)]) == 0
    out = capsys.readouterr().out
    assert "spectral gap: 1\n" in out and "N: 3" in out
    assert main(["inspect-topology", "gaia11"]) == 0
    assert "N: 11" in capsys.readouterr().out
    bad = tmp_path / "split.txt"
    bad.write_text("# silos 4\n0 1 1 1\n2 3 1 1\n")
    assert main(["inspect-topology", str(bad)]) != 0
    assert "components" in capsys.readouterr().err


def test_gen_data(tmp_path):
    assert main(["gen-data", str(tmp_path / "d.csv"), "--samples", "90", "--seed", "2"]) == 0
    ds = load_csv(tmp_path / "d.csv")
    assert len(ds) == 90 and ds.input_dim == 16
    assert main(["gen-data", str(tmp_path / "e.csv"), "--modes", "1"]) == 2


def test_csv_source_spec(tmp_path):
    assert main(["gen-data", str(tmp_path / "d.csv"), "--samples", "200"]) == 0
    path = write_spec(tmp_path, rounds=1)
    path.write_text(path.read_text().replace("samples_total = 400", "source = d.csv"))
    assert main(["run", str(path)]) == 0
