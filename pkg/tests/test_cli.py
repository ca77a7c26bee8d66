import numpy as np
import pytest

from decpi import builtin_domain, parse_dpomdp
from decpi.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_writes_logs(tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run(["solve", "--domain", "dec-tiger", "--max-iters", "2",
                           "--out", str(out)], capsys)
    assert code == 0
    assert "value_b0: -117.852500" in stdout
    rows = [ln for ln in (out / "log.csv").read_text().splitlines() if not ln.startswith("#")]
    assert [float(r.split(",")[6]) for r in rows[1:]] == pytest.approx([-150, -137, -117.8525])
    for name in ("controller.ctl", "summary.txt", "timings.csv", "checkpoints/iter_002.ctl"):
        assert (out / name).exists()
    assert (out / "log.csv").read_text().startswith("# decpi ")


def test_log_is_reproducible(tmp_path, capsys):
    for d in ("a", "b"):
        run(["solve", "--domain", "dec-tiger", "--max-iters", "1", "--out",
             str(tmp_path / d)], capsys)
    body = [(tmp_path / d / "log.csv").read_text().splitlines()[3:] for d in ("a", "b")]
    assert body[0] == body[1]


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DECPI_OUTPUT_DIR", str(tmp_path / "env"))
    code, _, _ = run(["solve", "--domain", "dec-tiger", "--algo", "hpi", "--k", "4",
                      "--max-iters", "1"], capsys)
    assert code == 0
    assert (tmp_path / "env" / "points.txt").exists()


def test_bounded_only(tmp_path, capsys):
    out = tmp_path / "b"
    code, stdout, _ = run(["solve", "--domain", "dec-tiger", "--algo", "bounded-only",
                           "--sizes", "2", "--device", "2", "--steps", "5", "--restarts", "2",
                           "--seed", "7", "--out", str(out)], capsys)
    assert code == 0 and "best_run" in stdout
    assert len((out / "runs.csv").read_text().splitlines()) == 3 + 1 + 2
    assert len((out / "best_trace.csv").read_text().splitlines()) == 3 + 1 + 6


def test_capacity_is_clean_abort(tmp_path, capsys):
    code, stdout, err = run(["solve", "--domain", "dec-tiger", "--max-nodes", "20",
                             "--out", str(tmp_path / "c")], capsys)
    assert code == 0 and "termination: capacity" in stdout and "stopped early" in err


@pytest.mark.parametrize("argv", [
    ["solve", "--file", "missing.dpomdp"],
    ["solve", "--domain", "dec-tiger", "--k", "3"],
    ["solve", "--domain", "dec-tiger", "--algo", "bounded-only"],
    ["solve", "--domain", "dec-tiger", "--epsilon", "-1"],
    ["solve", "--domain", "dec-tiger", "--R", "3"],
    ["solve", "--domain", "dec-tiger", "--initial-actions", "0"],
    ["eval", "--domain", "dec-tiger", "--controller", "nope.ctl"],
])
def test_usage_errors_exit_2_without_outputs(argv, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, _, err = run(argv + (["--out", "o"] if argv[0] == "solve" else []), capsys)
    assert code == 2 and "error" in err
    assert not (tmp_path / "o").exists()


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == 2


def test_eval_and_export_controller(tmp_path, capsys):
    ctl = tmp_path / "init.ctl"
    assert run(["export", "--domain", "dec-tiger", "--format", "controller",
                "--initial-actions", "0", "0", "-o", str(ctl)], capsys)[0] == 0
    code, stdout, _ = run(["eval", "--domain", "dec-tiger", "--controller", str(ctl),
                           "--table"], capsys)
    assert code == 0 and "V(b0): -150.000000" in stdout


def test_export_dpomdp_round_trip(tmp_path, capsys):
    path = tmp_path / "grid.dpomdp"
    run(["export", "--domain", "meeting-grid", "--format", "dpomdp", "-o", str(path)], capsys)
    assert parse_dpomdp(path.read_text()).allclose(builtin_domain("meeting-grid"), atol=1e-12)
    code, stdout, _ = run(["eval", "--file", str(path)], capsys)
    assert code == 0 and "V(b0)" in stdout


def test_export_dot(capsys):
    code, stdout, _ = run(["export", "--domain", "dec-tiger", "--format", "dot"], capsys)
    assert code == 0 and stdout.count("digraph") == 3


def test_verify_correlation(capsys):
    code, stdout, _ = run(["verify", "--domain", "correlation-example", "--R", "10",
                           "--episodes", "2000"], capsys)
    assert code == 0
    assert "-50.0000" in stdout and "100.000000" in stdout and stdout.count("[PASS]") == 4


def test_verify_tiger(capsys):
    code, stdout, _ = run(["verify", "--domain", "dec-tiger", "--episodes", "5000"], capsys)
    assert code == 0 and "[FAIL]" not in stdout


def test_simulate(capsys):
    code, stdout, _ = run(["simulate", "--domain", "dec-tiger", "--episodes", "2000",
                           "--seed", "3"], capsys)
    assert code == 0 and "exact: -150.000000" in stdout


def test_internal_error_exit_1(capsys, monkeypatch):
    import decpi.cli as cli

    def boom(args):
        raise RuntimeError("boom")
    monkeypatch.setitem(cli.COMMANDS, "eval", boom)
    assert run(["eval", "--domain", "dec-tiger"], capsys)[0] == 1
