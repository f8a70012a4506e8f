import csv
import json

import pytest

from memarith.cli import main, write_trace_csv
from memarith.device import DeviceParams, DeviceState, sweep


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_block_divider(capsys):
    code, out, _ = run(capsys, "block", "div", "--m1", "416", "--m2", "520", "--vi", "-1")
    assert code == 0 and out.strip() == "1.25"


def test_block_adder(capsys):
    code, out, _ = run(capsys, "block", "add", "--m1", "100", "--m2", "100", "--iread", "0.001")
    assert code == 0 and out.strip() == "200"


def test_block_csv_row(capsys):
    code, out, _ = run(capsys, "block", "mul", "--m1", "520", "--m2", "416", "--csv")
    header, row = out.strip().splitlines()
    assert header == "block,m1,m2,excitation,v_out,numeric,dM1,dM2"
    assert row == "mul,520.0,416.0,1.0,0.21632,216320.0,0.0,0.0"


def test_block_physical_reports_disturb(capsys):
    code, out, _ = run(capsys, "block", "div", "--m1", "416", "--m2", "520", "--mode", "physical", "--csv")
    row = out.strip().splitlines()[1].split(",")
    assert code == 0
    assert float(row[6]) == pytest.approx(-0.38, rel=0.02)


def test_compile_then_run(capsys, tmp_path):
    plan = tmp_path / "p.json"
    assert run(capsys, "compile", "520/416", "-o", str(plan))[0] == 0
    assert json.loads(plan.read_text())["steps"][-1]["op"] == "div"
    code, out, _ = run(capsys, "run", str(plan))
    assert code == 0 and out.strip() == "1.25"


def test_compile_to_stdout(capsys):
    code, out, _ = run(capsys, "compile", "(2+3)*4", "--gamma", "100")
    assert code == 0 and json.loads(out)["gamma"] == 100.0


def test_run_writes_traces_and_reads(capsys, tmp_path):
    plan = tmp_path / "p.json"
    run(capsys, "compile", "(2+3)*4", "--gamma", "100", "-o", str(plan))
    code, out, _ = run(capsys, "run", str(plan), "--mode", "physical", "--out-dir", str(tmp_path / "out"))
    assert code == 0 and float(out) == pytest.approx(20.0, rel=0.01)
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["reads.csv", "reg0.csv", "reg1.csv",
                                                                    "reg2.csv", "reg3.csv"]
    reads = list(csv.DictReader((tmp_path / "out" / "reads.csv").open()))
    assert [r["block"] for r in reads] == ["add", "mul"]


def test_program_trace(capsys, tmp_path):
    out_csv = tmp_path / "t.csv"
    code, out, _ = run(capsys, "program", "--target", "520", "-o", str(out_csv))
    assert code == 0
    rows = list(csv.DictReader(out_csv.open()))
    assert list(rows[0]) == ["t", "M", "v_drop", "comparator", "drive_sign"]
    assert 519.9 <= float(rows[-1]["M"]) <= 520.1
    assert float(out) == pytest.approx(520.0, abs=0.15)  # printed to 4 significant figures


def test_sweep_zero_current_is_flat(capsys):
    code, out, _ = run(capsys, "sweep", "--current", "0", "--steps", "20")
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0 and len(rows) == 21
    assert len({r["x"] for r in rows}) == 1


@pytest.mark.parametrize("argv, code", [
    (["block", "div", "--m1", "416"], 1),
    (["block", "pow", "--m1", "1", "--m2", "2"], 1),
    (["sweep", "--curr", "1"], 1),
    (["compile", "(2+3)*4"], 2),
    (["compile", "2+*3"], 2),
    (["compile", "1/0"], 2),
    (["program", "--target", "50"], 2),
    (["program", "--target", "520", "--max-time", "1e-5"], 2),
    (["run", "/nonexistent/plan.json"], 2),
    (["block", "div", "--m1", "416", "--m2", "520", "--r-on", "200", "--r-off", "100"], 2),
])
def test_exit_codes(capsys, argv, code):
    got, out, err = run(capsys, *argv)
    assert got == code
    assert err


def test_usage_error_prints_help(capsys):
    _, _, err = run(capsys, "block", "div", "--m1", "416")
    assert "usage:" in err and "--m2" in err


def test_range_error_names_subexpression(capsys):
    _, _, err = run(capsys, "compile", "(2+3)*4")
    assert "'2'" in err
    _, _, err = run(capsys, "compile", "2+*3")
    assert "byte 2" in err


def test_empty_trace_path_rejected():
    tr = sweep(DeviceParams(), DeviceState(0.5), 1e-3, 1e-6, 3)
    with pytest.raises(ValueError):
        write_trace_csv(tr, "")


def test_config_file_and_env(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "dev.cfg"
    cfg.write_text("r_on = 50\ngamma = 100\n")
    # gamma from the file makes (2+3)*4 representable
    assert run(capsys, "compile", "(2+3)*4", "--config", str(cfg))[0] == 0
    monkeypatch.setenv("MEMARITH_CONFIG", str(cfg))
    code, out, _ = run(capsys, "sweep", "--steps", "0", "--x0", "1")
    assert code == 0 and float(list(csv.DictReader(out.splitlines()))[0]["M"]) == 50.0
    # flags override the file
    code, out, _ = run(capsys, "sweep", "--steps", "0", "--x0", "1", "--r-on", "75")
    assert float(list(csv.DictReader(out.splitlines()))[0]["M"]) == 75.0
    cfg.write_text("colour = red\n")
    assert run(capsys, "sweep", "--steps", "0")[0] == 2


def test_outputs_are_deterministic(capsys, tmp_path):
    outputs = []
    for k in range(2):
        d = tmp_path / str(k)
        run(capsys, "compile", "(2+3)*4", "--gamma", "100", "-o", str(tmp_path / f"p{k}.json"))
        run(capsys, "run", str(tmp_path / f"p{k}.json"), "--mode", "physical", "--out-dir", str(d))
        outputs.append({p.name: p.read_bytes() for p in d.iterdir()})
    assert outputs[0] == outputs[1]
    assert (tmp_path / "p0.json").read_bytes() == (tmp_path / "p1.json").read_bytes()
