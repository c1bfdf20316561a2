import json

import pytest

from snnscale import model
from snnscale.cli import main


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


IZH = {"kind": "izhikevich", "nNeurons": 200, "nConn": 40, "excFraction": 0.8, "gScale": 2.0,
       "seed": 1, "durationMs": 200.0}


def test_simulate_writes_outputs(tmp_path):
    cfg = write(tmp_path, "c.json", {"network": IZH})
    assert main(["simulate", cfg, "--output", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "raster.csv").read_text().startswith("step,population,neuron\n")
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert set(summary) >= {"avgSpike", "sumNaNs", "timing"}


def test_simulate_storage_equivalence_bytes(tmp_path):
    cfg = write(tmp_path, "c.json", {"network": IZH})
    assert main(["simulate", cfg, "--storage", "dense", "--output", str(tmp_path / "d")]) == 0
    assert main(["simulate", cfg, "--storage", "sparse", "--output", str(tmp_path / "s")]) == 0
    assert (tmp_path / "d" / "raster.csv").read_bytes() == (tmp_path / "s" / "raster.csv").read_bytes()


def test_simulate_seed_override_and_full_spec(tmp_path):
    spec = model.build_izhikevich_net(100, 20, 0.8, 3.0, 0, duration_ms=100.0)
    cfg = write(tmp_path, "c.json", {"network": model.to_dict(spec)})
    assert main(["simulate", cfg, "--output", str(tmp_path / "a")]) == 0
    assert main(["simulate", cfg, "--seed", "9", "--output", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "raster.csv").read_bytes() != (tmp_path / "b" / "raster.csv").read_bytes()


def test_simulate_invalid_dt(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"network": {**IZH, "dt": 0}})
    assert main(["simulate", cfg, "--output", str(tmp_path / "o")]) == 2
    assert "dt must be positive" in capsys.readouterr().err


def test_output_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("SNNSCALE_OUTPUT", str(tmp_path / "envout"))
    cfg = write(tmp_path, "c.json", {"network": IZH})
    assert main(["simulate", cfg]) == 0
    assert (tmp_path / "envout" / "raster.csv").exists()


@pytest.mark.parametrize("doc", [{"nope": 1}, {"network": {"kind": "blob"}}, {"network": {**IZH, "zzz": 1}}])
def test_config_errors_exit_2(tmp_path, doc):
    cfg = write(tmp_path, "c.json", doc)
    assert main(["simulate", cfg, "--output", str(tmp_path / "o")]) == 2


def test_missing_config_exit_2(tmp_path):
    assert main(["simulate", str(tmp_path / "missing.json")]) == 2


def sweep_cfg(tmp_path, **sweep):
    base = {"nConnValues": [20, 40, 60, 80, 100], "gScaleValues": {"logspace": [0.5, 8.0, 9]},
            "targetPopulation": "cortex", "refNConn": 100, "refGScale": 1.0}
    base.update(sweep)
    net = {k: v for k, v in IZH.items() if k not in ("nConn", "gScale")}
    return write(tmp_path, "s.json", {"network": net, "sweep": base, "output": str(tmp_path / "sw")})


def test_sweep_outputs_and_determinism(tmp_path):
    cfg = sweep_cfg(tmp_path)
    assert main(["sweep", cfg]) == 0
    out = tmp_path / "sw"
    first = {n: (out / n).read_bytes() for n in ("simulation_result.out", "optima.csv", "fit.json")}
    assert first["simulation_result.out"].startswith(b"nConn,gScale,avgSpike,sumNaNs\n")
    assert len(first["simulation_result.out"].splitlines()) == 1 + 5 * 9
    assert first["optima.csv"].startswith(b"nConn,gScale\n")
    fit = json.loads(first["fit.json"])
    assert set(fit) == {"k1", "k2", "k3", "sse", "mapePercent", "converged", "iterations"}
    assert main(["sweep", cfg]) == 0
    assert first == {n: (out / n).read_bytes() for n in first}


def test_sweep_single_point(tmp_path):
    cfg = sweep_cfg(tmp_path, nConnValues=[100], gScaleValues=[1.0])
    assert main(["sweep", cfg]) == 0
    assert (tmp_path / "sw" / "optima.csv").read_text() == "nConn,gScale\n100,1.0\n"
    assert json.loads((tmp_path / "sw" / "fit.json").read_text())["converged"] is False


def test_sweep_missing_reference(tmp_path, capsys):
    cfg = sweep_cfg(tmp_path, refNConn=70)
    assert main(["sweep", cfg]) == 2
    err = capsys.readouterr().err
    assert "nConn=70" in err and "gScale=1.0" in err


def test_sweep_nan_warning(tmp_path, capsys):
    cfg = sweep_cfg(tmp_path, nConnValues=[20, 100], gScaleValues=[1.0, 1e6])
    # nConn=20 keeps a NaN-free row at gScale 1; drop it to force exclusion
    doc = json.loads(open(cfg).read())
    doc["sweep"]["nConnValues"] = [20, 100]
    doc["sweep"]["gScaleValues"] = [1.0, 1e6]
    open(cfg, "w").write(json.dumps(doc))
    assert main(["sweep", cfg]) == 0
    rows = (tmp_path / "sw" / "simulation_result.out").read_text().splitlines()[1:]
    nan_rows = [r for r in rows if r.split(",")[1] == "1000000.0"]
    assert all(int(r.split(",")[3]) > 0 for r in nan_rows)


def test_validate_command(tmp_path, capsys):
    assert main(["validate", sweep_cfg(tmp_path)]) == 0
    cfg = write(tmp_path, "bad.json", {"network": {**IZH, "dt": -1}})
    assert main(["validate", cfg]) == 2


def test_occupancy_command(capsys):
    assert main(["occupancy", "--device", "cc30", "--threads", "256", "--regs", "32", "--shared", "0"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["occupancy"] == 1.0 and rep["recommendation"] is None
    assert main(["occupancy", "--device", "cc30", "--regs", "64", "--shared", "0", "--recommend"]) == 0
    rec = json.loads(capsys.readouterr().out)["recommendation"]
    assert (rec["blockSize"], rec["occupancy"]) == (1024, 0.5)
    assert main(["occupancy", "--device", "cc99", "--threads", "32"]) == 2


def test_occupancy_device_file(tmp_path, capsys):
    dev = {"name": "mini", "maxWarpsPerSm": 8, "maxBlocksPerSm": 2, "maxThreadsPerBlock": 256,
           "sharedMemPerSm": 4096, "regsPerSm": 8192}
    path = write(tmp_path, "dev.json", dev)
    assert main(["occupancy", "--device-file", path, "--threads", "128"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["activeBlocks"] == 2 and rep["limiters"] == ["warps", "blocks"]


@pytest.mark.parametrize("args, sparse, dense", [((1000, 1000, 100), 201000, 1000000),
                                                 ((1000, 1000, 1000), 2001000, 1000000)])
def test_mem_report(capsys, args, sparse, dense):
    n_pre, n_post, k = args
    assert main(["mem-report", "--nPre", str(n_pre), "--nPost", str(n_post), "--nConn", str(k)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert (rep["sparse"], rep["dense"]) == (sparse, dense)
    assert rep["sparseWins"] == (sparse < dense)
    assert "nPre+1" in rep["footnote"]


def test_mem_report_rejects_nconn(capsys):
    assert main(["mem-report", "--nPre", "800", "--nPost", "200", "--nConn", "300"]) == 2
    assert "exceeds" in capsys.readouterr().err
