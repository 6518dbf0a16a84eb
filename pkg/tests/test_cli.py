import json
import subprocess
import sys

import pytest

from hdcharge.cli import load_config, main, validate_config
from hdcharge.errors import ConfigError
from hdcharge.network import save_feeder, to_per_unit
from oracles import two_bus, two_bus_voltage


def read_csv_column(path, col):
    lines = path.read_text().splitlines()
    idx = lines[0].split(",").index(col)
    return [line.split(",")[idx] for line in lines[1:]]


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_size_prints_case2(tmp_path, capsys):
    assert main(["size", "--out", str(tmp_path)]) == 0
    assert "S_charger = 3718 kVA" in capsys.readouterr().out
    doc = json.loads((tmp_path / "sizing.json").read_text())
    assert doc["result"]["scenario"] == 2
    assert (tmp_path / "cost_curve.csv").read_text().startswith("s_charger_kva,cost_usd\n")


def test_size_config_override(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"sizing": {"q_ref": 0.0}})
    assert main(["size", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert "S_charger = 3600 kVA" in capsys.readouterr().out


def test_solve_zero_loads(tmp_path):
    loads = tmp_path / "zero.csv"
    loads.write_text("bus_id,p_kw,q_kvar\n")
    assert main(["solve", "--feeder", "ieee34_like", "--loads", str(loads), "--out", str(tmp_path)]) == 0
    assert {float(v) for v in read_csv_column(tmp_path / "solution.csv", "v_pu")} == {1.0}


def test_solve_two_bus_analytic(tmp_path):
    f = two_bus(1.0, 2.0)
    save_feeder(f, tmp_path / "two_bus.json")
    loads = tmp_path / "loads.csv"
    loads.write_text("bus_id,p_kw,q_kvar\nb1,1000,300\n")
    rc = main(["solve", "--feeder", str(tmp_path / "two_bus.json"), "--loads", str(loads),
               "--out", str(tmp_path)])
    assert rc == 0
    br = to_per_unit(f).branches[0]
    v = float(read_csv_column(tmp_path / "solution.csv", "v_pu")[1])
    assert v == pytest.approx(two_bus_voltage(br.r, br.x, 0.1, 0.03), abs=1e-6)
    assert v == pytest.approx(0.9895409, abs=1e-6)


def test_usage_errors(tmp_path, capsys):
    assert main(["solve", "--loads", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 2
    assert main(["rank", "--feeder", "nope", "--out", str(tmp_path)]) == 2
    assert main(["size", "--config", str(tmp_path / "none.json")]) == 2
    bad = write_cfg(tmp_path, {"sizing": {"q_ref": 1.0, "colour": 3}})
    assert main(["size", "--config", bad]) == 2
    assert "sizing.colour" in capsys.readouterr().err
    bad = write_cfg(tmp_path, {"sizing": {"p_c_max": -5.0}}, "neg.json")
    assert main(["size", "--config", bad]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_computation_failure_exit_one(tmp_path):
    f = two_bus(5.0, 5.0)
    save_feeder(f, tmp_path / "weak.json")
    loads = tmp_path / "heavy.csv"
    loads.write_text("bus_id,p_kw,q_kvar\nb1,50000,20000\n")
    rc = main(["solve", "--feeder", str(tmp_path / "weak.json"), "--loads", str(loads),
               "--out", str(tmp_path)])
    assert rc == 1


def test_validate_config():
    validate_config({"seed": 3, "station": {"ports": 6}})
    for doc in ({"bogus": 1}, {"station": {"rate": 1}}, {"station": 5}, {"seed": -1}, []):
        with pytest.raises(ConfigError):
            validate_config(doc)


def test_load_config_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_rank_outputs(tmp_path, capsys):
    assert main(["rank", "--feeder", "ieee34_like", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "representative 812" in out and "representative 836" in out
    assert (tmp_path / "ranking.csv").exists()


def test_vlsm_outputs(tmp_path):
    assert main(["vlsm", "--feeder", "ieee34_like", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "vlsm_p.csv").exists() and (tmp_path / "vlsm_q.csv").exists()


def test_repeat_runs_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 11, "station": {"ports": 3, "days": 2, "iterations": 2}})
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(["station", "--config", cfg, "--out", str(d)]) == 0
        assert main(["size", "--config", cfg, "--out", str(d)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1] and len(outs[0]) == 5


def test_seed_flag_overrides(tmp_path):
    cfg = write_cfg(tmp_path, {"seed": 1, "station": {"days": 1, "iterations": 1}})
    main(["station", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["station", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "station_envelope.csv").read_bytes()
    b = (tmp_path / "b" / "station_envelope.csv").read_bytes()
    assert a != b


def test_hosting_dedicated(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"hosting": {"days": 1, "iterations": 2}})
    assert main(["hosting", "--feeder", "dedicated", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert "hosted = 6" in capsys.readouterr().out
    assert main(["hosting", "--feeder", "x.json", "--config", cfg]) == 2


def test_matrix_command(tmp_path):
    cfg = write_cfg(tmp_path, {"matrix": {"feeders": ["dedicated"], "days": 1, "iterations": 1}})
    assert main(["matrix", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "results.csv").read_text().splitlines()) == 5
    bad = write_cfg(tmp_path, {"matrix": {"feeders": ["ieee13"]}}, "bad.json")
    assert main(["matrix", "--config", bad]) == 2


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "hdcharge.cli", "size", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "3718" in res.stdout
