"""Command-line entry point: ``hdcharge <command> [--config FILE] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, HDChargeError, UnknownFeeder
from .network import resolve_feeder
from .powerflow import read_loads_csv, solve, write_solution_csv
from .scenarios import (DIMENSIONS, Study, hosting_table, load_case_params, mitigation_case,
                        nominal_loads, scenario_matrix)
from .sensitivity import compute_vlsm, rank_locations, write_ranking_csv, write_vlsm_csv
from .sizing import (cost_curve, dumps_result, inputs_from_dict,
                     max_charger_size, prices_from_dict, size_system)
from .station import StationConfig, monte_carlo, write_profile_csv

# allowed keys per config section; anything else is rejected
SCHEMA = {
    "feeder": None,
    "seed": None,
    "out": None,
    "loads": None,
    "p_c_max": None,
    "station": {"ports", "pattern", "iterations", "days", "vehicles_per_day", "port_power",
                "station_cap"},
    "sizing": {"p_c_max", "q_ref", "p_ref", "eta", "delta"},
    "prices": {"lambda_charger", "lambda_pv", "lambda_es_e", "lambda_es_p", "alpha", "beta",
               "lambda_pv_es"},
    "case": set(load_case_params()) - {"prices"},
    "matrix": {"feeders", "mitigations", "days", "iterations", "workers"},
    "hosting": {"days", "iterations"},
}


def load_config(path) -> dict:
    """Read and validate a JSON run config; unknown keys raise ConfigError with their path."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    validate_config(doc)
    return doc


def validate_config(doc) -> None:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    for key, value in doc.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key: {key}")
        allowed = SCHEMA[key]
        if allowed is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"{key}: expected an object")
        for sub in value:
            if sub not in allowed:
                raise ConfigError(f"unknown config key: {key}.{sub}")
    if "seed" in doc and (not isinstance(doc["seed"], int) or doc["seed"] < 0):
        raise ConfigError("seed: expected a non-negative integer")


def _outdir(args, cfg) -> Path:
    out = Path(args.out or cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, cfg) -> int:
    return args.seed if args.seed is not None else int(cfg.get("seed", 0))


def _feeder(args, cfg, default="ieee34_like"):
    return resolve_feeder(args.feeder or cfg.get("feeder") or default)


def cmd_solve(args, cfg) -> int:
    feeder = _feeder(args, cfg)
    path = args.loads or cfg.get("loads")
    if path is None:
        loads = nominal_loads(feeder)
    else:
        if not Path(path).exists():
            raise ConfigError(f"loads file not found: {path}")
        loads = read_loads_csv(path)
    sol = solve(feeder, loads)
    out = _outdir(args, cfg) / "solution.csv"
    write_solution_csv(sol, out)
    print(f"{feeder.name}: {sol.iterations} iterations, V min {sol.voltages.min():.6f} "
          f"max {sol.voltages.max():.6f} p.u., losses {sol.losses:.3f} kW")
    print(f"wrote {out}")
    return 0


def cmd_vlsm(args, cfg) -> int:
    feeder = _feeder(args, cfg)
    vlsm = compute_vlsm(feeder, nominal_loads(feeder))
    out = _outdir(args, cfg)
    write_vlsm_csv(vlsm, out / "vlsm_p.csv", "p")
    write_vlsm_csv(vlsm, out / "vlsm_q.csv", "q")
    print(f"{feeder.name}: {vlsm.n} x {vlsm.n} sensitivities written to {out}")
    return 0


def cmd_rank(args, cfg) -> int:
    feeder = _feeder(args, cfg)
    p = float(args.p_c_max or cfg.get("p_c_max") or 1200.0)
    ranking = rank_locations(compute_vlsm(feeder, nominal_loads(feeder)), p)
    out = _outdir(args, cfg) / "ranking.csv"
    write_ranking_csv(ranking, out)
    for g, bus in ranking.representatives.items():
        print(f"{g:>5}: {len(ranking.groups[g])} buses, representative {bus}")
    print(f"wrote {out}")
    return 0


def cmd_station(args, cfg) -> int:
    s = cfg.get("station", {})
    config = StationConfig(int(s.get("ports", 3)), float(s.get("port_power", 1200.0)),
                           s.get("station_cap"))
    ens = monte_carlo(config, s.get("pattern", "daytime"), int(s.get("iterations", 10)),
                      _seed(args, cfg), int(s.get("vehicles_per_day", 72)),
                      int(s.get("days", 30)))
    out = _outdir(args, cfg)
    write_profile_csv(ens.max_envelope, out / "station_envelope.csv")
    write_profile_csv(ens.mean_profile, out / "station_mean.csv")
    summary = {"peaks_kw": ens.peaks.tolist(), "unserved": [r.unserved for r in ens.runs],
               "max_wait_min": [r.max_wait for r in ens.runs], **ens.meta}
    (out / "station_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(f"{config.ports} ports: peak {ens.peaks.max():.1f} kW over {len(ens.runs)} runs")
    return 0


def cmd_hosting(args, cfg) -> int:
    h = cfg.get("hosting", {})
    name = args.feeder or cfg.get("feeder") or "ieee34_like"
    if name not in DIMENSIONS:
        raise ConfigError(f"hosting needs a bundled feeder, got {name!r}")
    study = Study(_seed(args, cfg), int(h.get("days", 30)), int(h.get("iterations", 10)))
    table = hosting_table(study, [name])
    out = _outdir(args, cfg) / "hosting.json"
    out.write_text(json.dumps(table, indent=2, sort_keys=True))
    for loc, row in table[name].items():
        bus = study.location_bus(name, loc)
        print(f"{name} {loc} ({bus}): hosted = {row['none']} without mitigation, "
              f"{row['pf_control']} with pf_control")
    return 0


def _sizing_inputs(cfg):
    case = json.loads((Path(__file__).parent / "data" / "case2.json").read_text())
    try:
        inputs = inputs_from_dict({**case["sizing"], **cfg.get("sizing", {})})
        prices = prices_from_dict({**case["prices"], **cfg.get("prices", {})})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sizing/prices: {exc}") from None
    return inputs, prices


def cmd_size(args, cfg) -> int:
    inputs, prices = _sizing_inputs(cfg)
    result = size_system(inputs, prices)
    out = _outdir(args, cfg)
    (out / "sizing.json").write_text(dumps_result(inputs, prices, result))
    s = np.linspace(inputs.p_c_max, max_charger_size(inputs.p_c_max, inputs.q_ref), 201)
    c = cost_curve(s, prices, inputs.p_c_max, inputs.q_ref, inputs.eta)
    with open(out / "cost_curve.csv", "w") as fh:
        fh.write("s_charger_kva,cost_usd\n")
        fh.writelines(f"{a:.6f},{b:.6f}\n" for a, b in zip(s, c))
    print(f"scenario {result.scenario}: S_charger = {result.s_charger:.0f} kVA, "
          f"S_PV = {result.s_pv:.1f} kVA, E_ES = {result.e_es:.1f} kWh, "
          f"P_ES = {result.p_es:.1f} kW, cost = {result.cost:,.0f} $")
    return 0


def _case(args, cfg):
    params = dict(cfg.get("case", {}))
    if args.seed is not None:
        params["seed_system"] = args.seed
        params["seed_station"] = args.seed + 100
        params["seed_pv"] = args.seed + 200
    if args.feeder:
        params["feeder"] = args.feeder
    return mitigation_case(params)


def cmd_fit_ab(args, cfg) -> int:
    case = _case(args, cfg)
    d = case.design
    out = _outdir(args, cfg) / "alpha_beta.json"
    out.write_text(json.dumps({"alpha": d.alpha, "beta": d.beta, "q_ref_kvar": d.q_ref},
                              indent=2, sort_keys=True))
    print(f"alpha = {d.alpha:.3f} kWh/kVA, beta = {d.beta:.3f} kW/kVA (Q_ref {d.q_ref:.1f} kvar)")
    return 0


def cmd_dispatch(args, cfg) -> int:
    case = _case(args, cfg)
    out = _outdir(args, cfg)
    case.design.trace.write_csv(out / "dispatch_trace.csv")
    (out / "dispatch_summary.json").write_text(json.dumps(case.summary(), indent=2, sort_keys=True))
    print(f"effective PV fraction {case.fraction:.3f} with storage, "
          f"{case.fraction_no_es:.3f} without; violations {case.unmitigated.count} -> "
          f"{case.mitigated.count}")
    return 0


def cmd_matrix(args, cfg) -> int:
    m = cfg.get("matrix", {})
    feeders = m.get("feeders", list(DIMENSIONS))
    if args.feeder:
        feeders = [args.feeder]
    for name in feeders:
        if name not in DIMENSIONS:
            raise ConfigError(f"matrix.feeders: unknown feeder {name!r}")
    result = scenario_matrix(feeders, tuple(m.get("mitigations", ("none",))), _seed(args, cfg),
                             int(m.get("days", 30)), int(m.get("iterations", 10)),
                             int(m.get("workers", 1)))
    out = _outdir(args, cfg)
    result.write_csv(out / "results.csv")
    result.write_json(out / "hosting.json")
    print(f"{len(result.rows)} scenarios written to {out / 'results.csv'}")
    return 0


COMMANDS = {
    "solve": (cmd_solve, "steady-state power flow"),
    "vlsm": (cmd_vlsm, "voltage-load sensitivity matrices"),
    "rank": (cmd_rank, "rank candidate station locations"),
    "station": (cmd_station, "Monte Carlo station load profiles"),
    "hosting": (cmd_hosting, "hosting capacity per location"),
    "size": (cmd_size, "PV-ES-charger sizing and cost curve"),
    "fit-ab": (cmd_fit_ab, "fit storage-to-PV ratios on the bundled week"),
    "dispatch": (cmd_dispatch, "PV-ES-charger dispatch on the bundled week"),
    "matrix": (cmd_matrix, "full scenario matrix"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--feeder", help="bundled feeder name or feeder JSON path")
    parser = argparse.ArgumentParser(prog="hdcharge", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        if name == "solve":
            p.add_argument("--loads", help="CSV with bus_id,p_kw,q_kvar")
        if name == "rank":
            p.add_argument("--p-c-max", type=float, help="station peak kW (default 1200)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        return COMMANDS[args.command][0](args, cfg)
    except (ConfigError, UnknownFeeder) as exc:
        print(f"hdcharge {args.command}: {exc}", file=sys.stderr)
        return 2
    except HDChargeError as exc:
        print(f"hdcharge {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
