"""Command-line entry point: ``snnscale <command> ...``.

Commands
--------
simulate CONFIG         one run; writes raster.csv and summary.json
sweep CONFIG            sweep + optima + fit; writes simulation_result.out, optima.csv, fit.json
occupancy               occupancy report (JSON) for a device and kernel
mem-report              sparse vs dense element counts
validate CONFIG         check a config and print its violations

Config files are JSON::

    {
      "network": {"kind": "izhikevich", "nNeurons": 1000, "nConn": 100,
                  "excFraction": 0.8, "gScale": 1.0, "seed": 0},
      "storage": "sparse",
      "sweep": {"nConnValues": {"start": 100, "stop": 1000, "step": 50},
                "gScaleValues": {"logspace": [0.7937, 10.079, 12]},
                "targetPopulation": "cortex", "refNConn": 1000, "refGScale": 1.0},
      "output": "results/izhikevich",
      "parallelism": 1
    }

``network`` is either builder shorthand (``kind`` izhikevich or mbody) or a
full serialized NetworkSpec.  mbody shorthand takes ``nPN, nLHI, nKC, nDN,
gScales`` (one entry per synapse group) plus optional ``pnRate, pnKcFraction,
kcDnFraction, dt, durationMs``; its sweep varies ``nPN`` and the gScale of
``sweep.group`` (default ``PN-KC``).  The output directory defaults to
``$SNNSCALE_OUTPUT`` or ``./results``.

Exit codes: 0 success, 2 user or config error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import calibration, connectivity, engine, model, occupancy
from .fitting import FitResult

OUTPUT_ENV = "SNNSCALE_OUTPUT"


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config

_IZH_KEYS = {"nNeurons": "n_neurons", "nConn": "n_conn", "excFraction": "exc_fraction",
             "gScale": "g_scale", "seed": "seed", "dt": "dt", "durationMs": "duration_ms"}
_MBODY_KEYS = {"nPN": "n_pn", "nLHI": "n_lhi", "nKC": "n_kc", "nDN": "n_dn", "gScales": "g_scales",
               "seed": "seed", "pnRate": "pn_rate", "pnKcFraction": "pn_kc_fraction",
               "kcDnFraction": "kc_dn_fraction", "dt": "dt", "durationMs": "duration_ms"}


def load_config(path: str | Path) -> dict[str, Any]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "network" not in doc:
        raise ConfigError("config must be a JSON object with a 'network' section")
    return doc


def _builder_args(net: Mapping[str, Any]) -> tuple[str, dict[str, Any]]:
    kind = net.get("kind")
    keys = {"izhikevich": _IZH_KEYS, "mbody": _MBODY_KEYS}.get(kind)
    if keys is None:
        raise ConfigError(f"network.kind must be 'izhikevich' or 'mbody', got {kind!r}")
    unknown = set(net) - set(keys) - {"kind"}
    if unknown:
        raise ConfigError(f"unknown network keys for {kind}: {', '.join(sorted(unknown))}")
    return kind, {keys[k]: v for k, v in net.items() if k != "kind"}


def build_network(cfg: Mapping[str, Any], seed: int | None = None) -> model.NetworkSpec:
    net = cfg["network"]
    try:
        if "kind" not in net:
            spec = model.from_dict(net)
            return model.reseed(spec, seed) if seed is not None else spec
        kind, kwargs = _builder_args(net)
        if seed is not None:
            kwargs["seed"] = seed
        if kind == "izhikevich":
            return model.build_izhikevich_net(**kwargs)
        return model.build_mbody_net(**kwargs)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid network section: {exc}") from None


def _values(spec: Any, label: str) -> list:
    if isinstance(spec, list):
        return spec
    if isinstance(spec, dict) and {"start", "stop", "step"} <= set(spec):
        return list(range(spec["start"], spec["stop"] + 1, spec["step"]))
    if isinstance(spec, dict) and "logspace" in spec:
        lo, hi, num = spec["logspace"]
        return calibration.log_grid(lo, hi, int(num))
    raise ConfigError(f"sweep.{label} must be a list, {{start, stop, step}} or {{logspace: [lo, hi, num]}}")


def sweep_plan(cfg: Mapping[str, Any]) -> dict[str, Any]:
    """Expand the sweep section into a template and value lists."""
    sw = cfg.get("sweep")
    if not isinstance(sw, dict):
        raise ConfigError("config has no 'sweep' section")
    net = cfg["network"]
    if "kind" not in net:
        raise ConfigError("sweeps need builder shorthand in 'network' (kind izhikevich or mbody)")
    kind, kwargs = _builder_args(net)
    if kind == "izhikevich":
        kwargs.pop("n_conn", None)
        kwargs.pop("g_scale", None)
        template = calibration.make_template("izhikevich", **kwargs)
        target = sw.get("targetPopulation", "cortex")
    else:
        kwargs.pop("n_pn", None)
        group = sw.get("group", "PN-KC")
        if group not in model.MBODY_GROUPS:
            raise ConfigError(f"sweep.group must be one of {', '.join(model.MBODY_GROUPS)}")
        if "g_scales" not in kwargs:
            raise ConfigError("mbody network needs gScales")
        template = calibration.make_template("mbody", group=group, **kwargs)
        target = sw.get("targetPopulation", "KC")
    n_conn = [int(n) for n in _values(sw.get("nConnValues"), "nConnValues")]
    g_scale = [float(g) for g in _values(sw.get("gScaleValues"), "gScaleValues")]
    if not n_conn or not g_scale:
        raise ConfigError("sweep value lists must be non-empty")
    return {
        "template": template,
        "n_conn": n_conn,
        "g_scale": g_scale,
        "target": target,
        "ref_n_conn": int(sw.get("refNConn", max(n_conn))),
        "ref_g_scale": float(sw.get("refGScale", 1.0)),
    }


def output_dir(cfg: Mapping[str, Any], override: str | None) -> Path:
    out = Path(override or cfg.get("output") or os.environ.get(OUTPUT_ENV) or "results")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


# ---------------------------------------------------------------- commands


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    if "sweep" in cfg:
        # the swept variable may be absent from `network`; check the reference cell
        plan = sweep_plan(cfg)
        try:
            spec = plan["template"](plan["ref_n_conn"], plan["ref_g_scale"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid network section: {exc}") from None
    else:
        spec = build_network(cfg)
    violations = model.validate(spec)
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    if violations:
        return 2
    print(json.dumps({"valid": True, "populations": len(spec.populations),
                      "synapses": len(spec.synapses), "neurons": spec.n_neurons}))
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    spec = build_network(cfg, args.seed)
    violations = model.validate(spec)
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return 2
    storage = args.storage or cfg.get("storage")
    if storage not in (None, model.DENSE, model.SPARSE):
        raise ConfigError(f"storage must be 'dense' or 'sparse', got {storage!r}")
    out = output_dir(cfg, args.output)
    result = engine.run(spec, storage)
    with open(out / "raster.csv", "w", newline="") as fh:
        result.raster.write_csv(fh)
    with open(out / "summary.json", "w") as fh:
        result.write_summary(fh)
    print(json.dumps({"avgSpike": result.avg_spike, "sumNaNs": result.sum_nans, "output": str(out)},
                     sort_keys=True))
    return 0


def _fit_json(fit: FitResult | None, n_optima: int) -> dict:
    if fit is None:
        return {"k1": None, "k2": None, "k3": None, "sse": None, "mapePercent": None,
                "converged": False, "iterations": 0,
                "note": f"fit needs at least 4 optima, got {n_optima}"}
    return fit.to_json()


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    plan = sweep_plan(cfg)
    workers = int(args.workers or cfg.get("parallelism", 1))
    if workers < 1:
        raise ConfigError("parallelism must be >= 1")
    out = output_dir(cfg, args.output)
    failures: list[calibration.SweepFailure] = []
    rows = calibration.sweep(plan["template"], plan["n_conn"], plan["g_scale"], plan["target"],
                             storage=cfg.get("storage"), workers=workers, failures=failures)
    with open(out / calibration.RESULTS_FILE, "w", newline="") as fh:
        calibration.write_rows(rows, fh)
    if failures:
        with open(out / "sweep_failures.csv", "w", newline="") as fh:
            fh.write("nConn,gScale,error\n")
            for f in failures:
                fh.write(f"{f.n_conn},{f.g_scale!r},{json.dumps(f.error)}\n")
        for f in failures:
            print(f"warning: cell nConn={f.n_conn} gScale={f.g_scale} failed: {f.error}", file=sys.stderr)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", calibration.CalibrationWarning)
            optima = calibration.select_optima(rows, plan["ref_n_conn"], plan["ref_g_scale"])
    except calibration.CalibrationError as exc:
        raise ConfigError(str(exc)) from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    with open(out / "optima.csv", "w", newline="") as fh:
        calibration.write_optima(optima, fh)
    fit = calibration.fit_gscale(optima) if len(optima) >= 4 else None
    doc = _fit_json(fit, len(optima))
    with open(out / "fit.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(json.dumps(doc, sort_keys=True))
    return 0


def cmd_occupancy(args) -> int:
    if args.device_file:
        try:
            dev = occupancy.load_device(args.device_file)
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad device file {args.device_file}: {exc}") from None
    else:
        try:
            dev = occupancy.device_preset(args.device)
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
    threads = args.threads
    if threads is None:
        if not args.recommend:
            raise ConfigError("--threads is required unless --recommend is given")
        threads = dev.max_threads_per_block
    try:
        kernel = occupancy.KernelSpec(threads, args.regs, args.shared)
        rep = occupancy.report(dev, kernel, recommend=args.recommend)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(json.dumps(rep, indent=1, sort_keys=True))
    return 0


def mem_report(n_pre: int, n_post: int, n_conn: int) -> dict:
    if min(n_pre, n_post, n_conn) < 1:
        raise ConfigError("nPre, nPost and nConn must be >= 1")
    if n_conn > n_post:
        raise ConfigError(f"nConn={n_conn} exceeds nPost={n_post}")
    nnz = n_pre * n_conn
    sparse = connectivity.mem_sparse(nnz, n_post)
    dense = connectivity.mem_dense(n_pre, n_post)
    return {
        "nNZ": nnz,
        "sparse": sparse,
        "dense": dense,
        "ratio": sparse / dense,
        "sparseWins": sparse < dense,
        "footnote": (f"sparse count uses 2*nNZ + nPost; the stored row-offset array "
                     f"actually has nPre+1 = {n_pre + 1} entries"),
    }


def cmd_mem_report(args) -> int:
    print(json.dumps(mem_report(args.nPre, args.nPost, args.nConn), indent=1))
    return 0


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snnscale", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one simulation")
    s.add_argument("config")
    s.add_argument("--storage", choices=[model.DENSE, model.SPARSE])
    s.add_argument("--seed", type=int)
    s.add_argument("--output")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", aliases=["calibrate"], help="sweep, select optima and fit")
    s.add_argument("config")
    s.add_argument("--workers", type=int)
    s.add_argument("--output")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("occupancy", help="GPU occupancy report")
    dev = s.add_mutually_exclusive_group()
    dev.add_argument("--device", default="cc30")
    dev.add_argument("--device-file")
    s.add_argument("--threads", type=int)
    s.add_argument("--regs", type=int, default=0)
    s.add_argument("--shared", type=int, default=0)
    s.add_argument("--recommend", action="store_true")
    s.set_defaults(func=cmd_occupancy)

    s = sub.add_parser("mem-report", help="sparse vs dense storage cost")
    s.add_argument("--nPre", type=int, required=True)
    s.add_argument("--nPost", type=int, required=True)
    s.add_argument("--nConn", type=int, required=True)
    s.set_defaults(func=cmd_mem_report)

    s = sub.add_parser("validate", help="validate a config")
    s.add_argument("config")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, engine.SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort exit code 1
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
