import json
import socket
import subprocess
import sys

import pytest

from trafficsafe.cli import main

CLI = [sys.executable, "-m", "trafficsafe"]


def run_main(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_budget_default(capsys):
    code, out, _ = run_main(capsys, "budget")
    assert code == 0
    assert "25.205" in out and "(25.20)" in out


def test_budget_json(capsys):
    code, out, _ = run_main(capsys, "budget", "--json")
    d = json.loads(out)
    assert code == 0 and d["feasible"]
    assert d["t_eval"] == pytest.approx(25.205) and d["t_exe"] == pytest.approx(25.205)


def test_budget_infeasible(capsys):
    code, out, _ = run_main(capsys, "budget", "--t-tot", "90", "--json")
    assert code == 2
    assert json.loads(out)["deficit"] == pytest.approx(9.59)


def test_budget_negative_is_validation_error(capsys):
    code, _, err = run_main(capsys, "budget", "--t-s", "-1")
    assert code == 4 and "invalid input" in err


def test_budget_csv(capsys):
    code, out, _ = run_main(capsys, "budget", "--format", "csv")
    assert out.splitlines()[1] == "150.000,99.590,50.410,25.205,25.205"


def test_impact_table(capsys):
    code, out, _ = run_main(capsys, "impact")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 7
    assert lines[1].split() == ["150", "1.1445", "4.1202"]


def test_impact_custom_k(capsys):
    code, out, _ = run_main(capsys, "impact", "--latencies", "150", "--k", "8.53", "--json")
    assert json.loads(out)["rows"][0]["impact_mps"] == pytest.approx(1.2795)


def test_intersect(capsys):
    code, out, _ = run_main(capsys, "intersect", "--user", "0,0,90", "--sensor", "5,5,180", "--json")
    d = json.loads(out)
    assert d["intersects"] and d["x"] == pytest.approx(5) and d["y"] == pytest.approx(0, abs=1e-9)
    code, out, _ = run_main(capsys, "intersect", "--user", "0,0,90", "--sensor", "0,5,90", "--json")
    assert json.loads(out) == {"intersects": False, "reason": "parallel"}


def test_intersect_bad_input(capsys):
    code, _, _ = run_main(capsys, "intersect", "--user", "0,0", "--sensor", "5,5,180")
    assert code == 4


def test_classify_scenario(capsys):
    code, out, _ = run_main(capsys, "classify", "--scenario", "", "--user-id", "V2", "--json")
    assert code == 0 and json.loads(out)["level"] == "alarm"
    code, out, _ = run_main(capsys, "classify", "--user-id", "V1")
    assert out.startswith("WARNING2")


def test_classify_explicit(capsys):
    code, out, _ = run_main(capsys, "classify", "--user", "1600,3300,0", "--sensor", "1500,3500,90",
                            "--no-event", "--json")
    d = json.loads(out)
    assert d["level"] == "none" and d["user_cell"] == "B3" and not d["event"]


def test_usage_error_is_validation(capsys):
    assert run_main(capsys, "budget", "--t-tot", "abc")[0] == 4
    assert run_main(capsys, "nonsense")[0] == 4
    assert run_main(capsys, "budget", "--help")[0] == 0


def test_classify_off_grid(capsys):
    code, _, _ = run_main(capsys, "classify", "--user=-5,0,0", "--sensor", "1,1,0")
    assert code == 4


def test_simulate_and_report(capsys, tmp_path):
    path = tmp_path / "runs.csv"
    code, out, _ = run_main(capsys, "simulate", "--csv", str(path), "--json")
    d = json.loads(out)
    assert code == 0
    assert d["total"]["mean"] == pytest.approx(149.99)
    assert d["deadline_met"] == d["n_records"]
    code, out, _ = run_main(capsys, "report", str(path), "--histogram", "total")
    assert code == 0 and "total histogram" in out
    code, _, _ = run_main(capsys, "report", str(tmp_path / "missing.csv"))
    assert code == 4


def test_simulate_json_stable(capsys):
    _, a, _ = run_main(capsys, "simulate", "--profile", "measured", "--runs", "5", "--seed", "3", "--json")
    _, b, _ = run_main(capsys, "simulate", "--profile", "measured", "--runs", "5", "--seed", "3", "--json")
    assert a == b


def test_scenario_init_validate(capsys, tmp_path):
    path = tmp_path / "sc.yaml"
    assert run_main(capsys, "scenario", "init", "--out", str(path))[0] == 0
    code, out, _ = run_main(capsys, "scenario", "validate", str(path), "--json")
    assert code == 0 and json.loads(out) == {"valid": True, "sensors": 1, "users": 2}
    path.write_text("sensors: []\nusers: []\n")
    code, _, err = run_main(capsys, "scenario", "validate", str(path))
    assert code == 4 and "no sensors" in err


@pytest.mark.parametrize("cmd", ["intersect", "classify", "budget", "impact", "simulate",
                                 "scenario", "report", "serve", "sensor", "consumer"])
def test_help_shows_defaults(cmd):
    out = subprocess.run(CLI + [cmd, "--help"], capture_output=True, text=True, check=True).stdout
    assert "--json" in out and "default" in out


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_sensor_unreachable_exit_code():
    port = free_port()
    p = subprocess.run(CLI + ["sensor", "--connect", f"127.0.0.1:{port}", "--frames", "1"],
                       capture_output=True, text=True, timeout=30)
    assert p.returncode == 3
    assert "connection error" in p.stderr


def test_serve_prints_bound_port():
    p = subprocess.Popen(CLI + ["serve", "--listen", "127.0.0.1:0", "--max-seconds", "5"],
                         stdout=subprocess.PIPE, text=True)
    try:
        line = p.stdout.readline()
        assert line.startswith("listening on 127.0.0.1:")
        port = int(line.rsplit(":", 1)[1])
        assert port > 0
        with socket.create_connection(("127.0.0.1", port), timeout=5):
            pass
    finally:
        p.terminate()
        p.wait(timeout=10)
