"""Scenario matrix, hosting capacity and the bundled PV-ES-charger case."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import HDChargeError, ScenarioError
from .mitigation import DispatchTrace, MitigationPlan, PFControl, dispatch, effective_pv_fraction
from .network import Feeder, bundled_feeder
from .powerflow import LoadPoint, ViolationReport, qsts, violation_scan
from .profiles import LOAD_PF, ProfileSet, generate_pv_profiles, generate_system_loads
from .sensitivity import ImpactRanking, Vlsm, compute_refs, compute_vlsm, rank_locations
from .sizing import PriceSet, SizingInputs, SizingResult, fit_alpha_beta, size_system
from .station import MONTH_DAYS, PORT_KW, StationConfig, monte_carlo

LOCATIONS = ("best", "good", "worst")
PORTS = (1, 3, 6)
CHARGING = ("daytime", "multishift")
SYSTEM = ("residential", "commercial")
MITIGATIONS = ("none", "pf_control", "pv_es_charger")

# valid dimensions per bundled feeder
DIMENSIONS = {
    "ieee34_like": dict(locations=LOCATIONS, ports=PORTS, charging=CHARGING, system=SYSTEM),
    "single_feeder": dict(locations=LOCATIONS, ports=PORTS, charging=CHARGING,
                          system=("residential",)),
    "two_feeder": dict(locations=LOCATIONS, ports=PORTS, charging=CHARGING,
                       system=("residential",)),
    "dedicated": dict(locations=("best",), ports=(3, 6), charging=CHARGING,
                      system=("residential",)),
}

RESULT_COLUMNS = ("scenario_id", "feeder", "location_class", "ports", "charging_pattern",
                  "system_pattern", "mitigation", "min_v_pu", "max_v_pu", "violations", "hosted")


@dataclass(frozen=True)
class Scenario:
    feeder: str
    location_class: str
    ports: int
    charging_pattern: str
    system_pattern: str
    mitigation: str = "none"
    seed: int = 0

    def __post_init__(self):
        dims = DIMENSIONS.get(self.feeder)
        if dims is None:
            raise ValueError(f"no scenario dimensions for feeder {self.feeder!r}")
        checks = (("location_class", self.location_class, dims["locations"]),
                  ("ports", self.ports, dims["ports"]),
                  ("charging_pattern", self.charging_pattern, dims["charging"]),
                  ("system_pattern", self.system_pattern, dims["system"]),
                  ("mitigation", self.mitigation, MITIGATIONS))
        for name, value, allowed in checks:
            if value not in allowed:
                raise ValueError(f"{name}={value!r} invalid for {self.feeder}; allowed {allowed}")

    @property
    def scenario_id(self) -> str:
        return (f"{self.feeder}/{self.location_class}/{self.ports}p/"
                f"{self.charging_pattern}/{self.system_pattern}/{self.mitigation}")


def enumerate_scenarios(feeder: str, mitigation: str = "none", seed: int = 0) -> list[Scenario]:
    d = DIMENSIONS[feeder]
    return [Scenario(feeder, loc, n, ch, sy, mitigation, seed)
            for loc in d["locations"] for n in d["ports"]
            for ch in d["charging"] for sy in d["system"]]


def nominal_loads(feeder: Feeder) -> list[LoadPoint]:
    tan_phi = np.tan(np.arccos(LOAD_PF))
    return [LoadPoint(b.id, b.nominal_kw, b.nominal_kw * tan_phi) for b in feeder.load_buses]


def peak_operating_point(profiles: ProfileSet) -> list[LoadPoint]:
    if not profiles.series:
        return []
    k = int(np.argmax(profiles.aggregate()))
    return [LoadPoint(b, float(s.values[k]), float(s.q[k])) for b, s in profiles.series.items()]


@dataclass
class ScenarioReport:
    scenario: Scenario
    bus: str
    min_v: float
    max_v: float
    report: ViolationReport
    worst_bus: str | None
    trace: DispatchTrace | None = None

    @property
    def hosted(self) -> bool:
        return self.report.ok

    def row(self) -> dict:
        s = self.scenario
        return dict(scenario_id=s.scenario_id, feeder=s.feeder, location_class=s.location_class,
                    ports=s.ports, charging_pattern=s.charging_pattern,
                    system_pattern=s.system_pattern, mitigation=s.mitigation,
                    min_v_pu=f"{self.min_v:.6f}", max_v_pu=f"{self.max_v:.6f}",
                    violations=self.report.count, hosted=int(self.hosted))


class Study:
    """Caches feeders, profiles, placements and station envelopes for one master seed.

    Seeds derive from ``seed``: system loads use ``seed``, station traffic
    ``seed + 100`` (plus the iteration index), PV ``seed + 200``.
    """

    def __init__(self, seed: int = 0, days: int = MONTH_DAYS, iterations: int = 10,
                 feeders: dict[str, Feeder] | None = None):
        self.seed = seed
        self.days = days
        self.iterations = iterations
        self._feeders = dict(feeders or {})
        self._profiles: dict = {}
        self._envelopes: dict = {}
        self._placement: dict = {}

    def feeder(self, name: str) -> Feeder:
        if name not in self._feeders:
            self._feeders[name] = bundled_feeder(name)
        return self._feeders[name]

    def profiles(self, name: str, pattern: str) -> ProfileSet:
        key = (name, pattern)
        if key not in self._profiles:
            self._profiles[key] = generate_system_loads(self.feeder(name), pattern, self.days,
                                                        self.seed)
        return self._profiles[key]

    def envelope(self, ports: int, pattern: str):
        key = (ports, pattern)
        if key not in self._envelopes:
            ens = monte_carlo(StationConfig(ports), pattern, self.iterations, self.seed + 100,
                              days=self.days)
            self._envelopes[key] = ens.max_envelope
        return self._envelopes[key]

    def placement(self, name: str) -> tuple[Vlsm, ImpactRanking]:
        """Ranking at the feeder's nominal peak, shared by every pattern."""
        if name not in self._placement:
            f = self.feeder(name)
            vlsm = compute_vlsm(f, nominal_loads(f))
            self._placement[name] = (vlsm, rank_locations(vlsm, PORT_KW))
        return self._placement[name]

    def location_bus(self, name: str, location_class: str) -> str:
        return self.placement(name)[1].representatives[location_class]


def _voltage_stats(feeder: Feeder, volts: np.ndarray):
    report = violation_scan(volts)
    worst_bus = None
    if not report.ok:
        dev = np.maximum(0.95 - volts, volts - 1.05).max(axis=1)
        worst_bus = feeder.bus_ids[int(np.argmax(dev))]
    return float(volts.min()), float(volts.max()), report, worst_bus


def _run(study: Study, s: Scenario, prices: PriceSet | None = None) -> ScenarioReport:
    f = study.feeder(s.feeder)
    loads = study.profiles(s.feeder, s.system_pattern)
    station = study.envelope(s.ports, s.charging_pattern)
    bus = study.location_bus(s.feeder, s.location_class)
    trace = None
    controls = ()
    if s.mitigation == "pf_control":
        controls = (PFControl(0.9),)
    elif s.mitigation == "pv_es_charger":
        design = design_pv_es_charger(f, loads, station.values, bus, s.ports * PORT_KW,
                                      prices or CASE2_PRICES, seed=study.seed + 200)
        trace = design.trace
        controls = (trace.as_control(),)
    res = qsts(f, loads.series, station, bus, controls)
    lo, hi, report, worst = _voltage_stats(f, res.voltages)
    return ScenarioReport(s, bus, lo, hi, report, worst, trace)


def run_scenario(s: Scenario, study: Study | None = None,
                 prices: PriceSet | None = None) -> ScenarioReport:
    """Profiles, station envelope, placement, QSTS with the chosen mitigation, limit scan."""
    study = study or Study(s.seed)
    try:
        return _run(study, s, prices)
    except HDChargeError as exc:
        raise ScenarioError(s.scenario_id, exc) from exc


def hosting_profile(study: Study, feeder: str, bus: str, mitigation: str = "none",
                    charging=None, system=None, ports=PORTS) -> dict[int, bool]:
    """Pass/fail per port count; a size passes only if every listed pattern pair does."""
    if mitigation not in ("none", "pf_control"):
        raise ValueError("hosting capacity is defined for 'none' and 'pf_control'")
    dims = DIMENSIONS.get(feeder, DIMENSIONS["ieee34_like"])
    charging = tuple(charging or dims["charging"])
    system = tuple(system or dims["system"])
    f = study.feeder(feeder)
    controls = (PFControl(0.9),) if mitigation == "pf_control" else ()
    out = {}
    for n in sorted(ports):
        out[n] = all(
            violation_scan(qsts(f, study.profiles(feeder, sp).series, study.envelope(n, ch), bus,
                                controls).voltages).ok
            for ch in charging for sp in system)
    return out


def baseline_ok(study: Study, feeder: str, system=None) -> bool:
    system = tuple(system or DIMENSIONS.get(feeder, DIMENSIONS["ieee34_like"])["system"])
    f = study.feeder(feeder)
    for sp in system:
        loads = study.profiles(feeder, sp)
        if loads.series and not violation_scan(qsts(f, loads.series).voltages).ok:
            return False
    return True


def hosting_capacity(study: Study, feeder: str, bus: str, mitigation: str = "none",
                     charging=None, system=None, ports=PORTS) -> int:
    """Largest port count whose station runs without a single violating sample.

    Sizes are tried in ascending order and the search stops at the first
    failure, so the result is monotone by construction. A feeder that
    already violates without any station hosts 0.
    """
    if not baseline_ok(study, feeder, system):
        return 0
    hosted = 0
    for n in sorted(ports):
        if not hosting_profile(study, feeder, bus, mitigation, charging, system, (n,))[n]:
            break
        hosted = n
    return hosted


def hosting_table(study: Study, feeders, mitigations=("none", "pf_control")) -> dict:
    out = {}
    for name in feeders:
        locs = DIMENSIONS[name]["locations"]
        ports = DIMENSIONS[name]["ports"]
        out[name] = {
            loc: {m: hosting_capacity(study, name, study.location_bus(name, loc), m, ports=ports)
                  for m in mitigations}
            for loc in locs
        }
    return out


@dataclass
class MatrixResult:
    rows: list[dict]
    hosting: dict
    meta: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
            w.writeheader()
            w.writerows(self.rows)

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"hosting": self.hosting, "meta": self.meta}, fh, indent=2, sort_keys=True)


def _matrix_chunk(args):
    seed, days, iterations, scenarios = args
    study = Study(seed, days, iterations)
    return [run_scenario(s, study).row() for s in scenarios]


def scenario_matrix(feeders=tuple(DIMENSIONS), mitigations=("none",), seed: int = 0,
                    days: int = MONTH_DAYS, iterations: int = 10, workers: int = 1,
                    hosting: bool = True, study: Study | None = None) -> MatrixResult:
    """Run every valid scenario for the selected feeders, ordered by scenario id.

    ``workers > 1`` distributes feeders over processes; results are
    identical to a sequential run. A ``study`` built with the same seed,
    days and iterations may be passed in to share its caches.
    """
    feeders = tuple(feeders)
    scenarios = [s for name in feeders for m in mitigations
                 for s in enumerate_scenarios(name, m, seed)]
    if workers > 1 and len(feeders) > 1:
        jobs = [(seed, days, iterations, [s for s in scenarios if s.feeder == name])
                for name in feeders]
        with ProcessPoolExecutor(workers) as pool:
            rows = [r for chunk in pool.map(_matrix_chunk, jobs) for r in chunk]
        study = study or Study(seed, days, iterations)
    else:
        study = study or Study(seed, days, iterations)
        rows = [run_scenario(s, study).row() for s in scenarios]
    rows.sort(key=lambda r: r["scenario_id"])
    bars = hosting_table(study, feeders) if hosting and feeders else {}
    return MatrixResult(rows, bars, {"seed": seed, "days": days, "iterations": iterations})


# ---------------------------------------------------------------------------
# PV-ES-charger design on a time series

CASE2_PRICES = PriceSet(17956.0, 1000.0, 661.0, 350.0, 4.75, 1.0)


@dataclass
class PvEsDesign:
    bus: str
    p_c_max: float
    q_ref: float
    alpha: float
    beta: float
    prices: PriceSet
    sizing: SizingResult
    plan: MitigationPlan
    trace: DispatchTrace
    vlsm: Vlsm
    base_voltages: np.ndarray
    pv_unit: np.ndarray  # PV output per kVA


def hostable_power(vlsm: Vlsm, base_voltages: np.ndarray, bus: str, lower: float = 0.95):
    """Per-step station kW the bus can take before the predicted minimum hits ``lower``."""
    col = vlsm.p_column(bus)
    live = col > 0
    return np.clip(np.min((base_voltages[live] - lower) / col[live][:, None], axis=0), 0.0, None)


def design_pv_es_charger(feeder: Feeder, loads: ProfileSet, station_kw: np.ndarray, bus: str,
                         p_c_max: float, prices: PriceSet = CASE2_PRICES, seed: int = 0,
                         v_ref: float = 0.953, estimator: str = "max", margin: float = 0.01,
                         guard: float = 0.0005, eta: float = 1.0) -> PvEsDesign:
    """Size and dispatch a PV-ES-charger system for one station time series.

    Q_ref comes from the sensitivities at the system-load peak with the
    station at ``p_c_max``. Storage ratios are fitted on the station load
    above the per-minute hostable power, day by day against unit PV.
    """
    station_kw = np.asarray(station_kw, dtype=float)
    T = len(station_kw)
    days = T // 1440
    vlsm = compute_vlsm(feeder, peak_operating_point(loads))
    if loads.series:
        base = qsts(feeder, loads.series).voltages
    else:
        base = np.repeat(vlsm.base_voltages[:, None], T, axis=1)
    v_pred = vlsm.base_voltages - p_c_max * vlsm.p_column(bus)
    refs = compute_refs(vlsm, v_pred, v_ref, bus, estimator)

    pv_days = generate_pv_profiles(days, 1.0, seed)
    pv_unit = np.concatenate([p.values for p in pv_days])
    need = np.clip(station_kw - hostable_power(vlsm, base, bus), 0.0, None)
    if refs.q_ref > 0:
        alpha, beta = fit_alpha_beta(pv_days, np.split(need[: days * 1440], days), refs.q_ref)
    else:
        alpha, beta = 0.0, 0.0
    priced = replace(prices, alpha=alpha, beta=beta)
    sizing = size_system(SizingInputs(p_c_max, refs.q_ref, eta=eta), priced)
    plan = MitigationPlan(pv_kva=sizing.s_pv, es_kwh=sizing.e_es, es_kw=sizing.p_es,
                          charger_s=sizing.s_charger, eta=eta, margin=margin, guard=guard)
    trace = dispatch(plan, station_kw, pv_unit * sizing.s_pv, vlsm, base, bus)
    return PvEsDesign(bus, p_c_max, refs.q_ref, alpha, beta, priced, sizing, plan, trace, vlsm,
                      base, pv_unit)


@dataclass
class MitigationCase:
    params: dict
    feeder: Feeder
    loads: ProfileSet
    station: object  # TimeSeries
    design: PvEsDesign
    no_es_trace: DispatchTrace
    fraction: float
    fraction_no_es: float
    unmitigated: ViolationReport
    mitigated: ViolationReport

    def summary(self) -> dict:
        d = self.design
        return {
            "bus": d.bus,
            "q_ref_kvar": d.q_ref,
            "alpha": d.alpha,
            "beta": d.beta,
            "sizing": d.sizing.to_dict(),
            "effective_pv_fraction": self.fraction,
            "effective_pv_fraction_no_es": self.fraction_no_es,
            "violations_unmitigated": self.unmitigated.count,
            "violations_mitigated": self.mitigated.count,
        }


def load_case_params(name: str = "pv_es_week") -> dict:
    text = resources.files("hdcharge").joinpath("data", f"{name}.json").read_text()
    return json.loads(text)


def mitigation_case(params: dict | None = None) -> MitigationCase:
    """Build the bundled one-week PV-ES-charger case and evaluate it end to end."""
    p = {**load_case_params(), **(params or {})}
    f = bundled_feeder(p["feeder"])
    loads = generate_system_loads(f, p["system_pattern"], p["days"], p["seed_system"])
    ens = monte_carlo(StationConfig(p["ports"]), p["charging_pattern"], p["iterations"],
                      p["seed_station"], days=p["days"])
    station = ens.max_envelope
    prices = PriceSet(**p["prices"])
    design = design_pv_es_charger(f, loads, station.values, p["bus"], p["ports"] * PORT_KW,
                                  prices, p["seed_pv"], p["v_ref"], p["estimator"], p["margin"],
                                  p["guard"], p["eta"])
    no_es = dispatch(replace(design.plan, es_kwh=0.0, es_kw=0.0), station.values,
                     design.pv_unit * design.sizing.s_pv, design.vlsm, design.base_voltages,
                     design.bus)
    un = violation_scan(qsts(f, loads.series, station, design.bus).voltages)
    mit = violation_scan(qsts(f, loads.series, station, design.bus,
                              (design.trace.as_control(),)).voltages)
    return MitigationCase(p, f, loads, station, design, no_es,
                          effective_pv_fraction(design.trace), effective_pv_fraction(no_es),
                          un, mit)
