"""Time-series operation of charger PF control, on-site PV and energy storage."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPf, SeriesMismatch
from .profiles import TimeSeries
from .sensitivity import Vlsm

LOWER, UPPER = 0.95, 1.05


def pf_factor(pf: float) -> float:
    if not 0 < abs(pf) <= 1:
        raise InvalidPf(f"power factor magnitude must lie in (0, 1], got {pf}")
    return math.tan(math.acos(abs(pf)))


def pf_control_series(station_p: TimeSeries, pf: float = 0.9) -> TimeSeries:
    """Reactive injection (kvar, voltage-raising) that holds the charger at ``pf``."""
    k = pf_factor(pf)
    return TimeSeries(station_p.start, np.clip(station_p.values, 0.0, None) * k, station_p.step_minutes)


@dataclass(frozen=True)
class PFControl:
    """QSTS control: inject ``P * tan(acos pf)`` while charging, optionally capped by charger kVA."""

    pf: float = 0.9
    charger_s: float | None = None

    def __call__(self, p: np.ndarray, q: np.ndarray):
        inj = np.clip(p, 0.0, None) * pf_factor(self.pf)
        if self.charger_s is not None:
            inj = np.minimum(inj, np.sqrt(np.clip(self.charger_s**2 - p**2, 0.0, None)))
        return p, q - inj


@dataclass
class MitigationPlan:
    pf_control: bool = False
    pf: float = 0.9
    pv_kva: float = 0.0
    pv_profile: TimeSeries | None = None  # kW available
    es_kwh: float = 0.0
    es_kw: float = 0.0
    efficiency: float = 0.88  # applied on charge
    initial_soc: float = 0.5
    charger_s: float | None = None
    eta: float = 1.0  # PV inverter var ratio
    lower: float = LOWER
    upper: float = UPPER
    margin: float = 0.005  # support lifts the worst bus to lower + margin
    guard: float = 0.0  # support triggers below lower + guard

    def __post_init__(self):
        pf_factor(self.pf)
        if self.es_kwh < 0 or self.es_kw < 0:
            raise ValueError("storage energy and power must be >= 0")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")


@dataclass
class DispatchTrace:
    start: object
    station_p: np.ndarray
    grid_p: np.ndarray  # net draw at the connection point, kW
    grid_q: np.ndarray  # net kvar, positive = consumption
    pv_available: np.ndarray
    pv_support: np.ndarray  # PV real power offsetting load during need
    pv_to_es: np.ndarray  # PV real power into storage (before losses)
    pv_export: np.ndarray  # other PV real output reaching the grid
    pv_curtailed: np.ndarray
    pv_q: np.ndarray
    charger_q: np.ndarray
    es_power: np.ndarray  # + discharge / - charge (charge measured at the input)
    es_soc: np.ndarray  # SOC at the end of each step
    es_pv_discharge: np.ndarray  # PV-derived part of the discharge, kW
    need: np.ndarray
    v_unmitigated_min: np.ndarray
    v_mitigated_min: np.ndarray
    v_mitigated_max: np.ndarray
    efficiency: float = 0.88
    es_kwh: float = 0.0
    initial_soc: float = 0.5
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.station_p)

    @property
    def pv_real(self) -> np.ndarray:
        return self.pv_support + self.pv_to_es + self.pv_export

    def as_control(self):
        """QSTS control that replaces the station injection with the dispatched one."""
        def apply(p, q):
            if len(p) != len(self):
                raise SeriesMismatch("trace length differs from the QSTS horizon")
            return self.grid_p.copy(), self.grid_q.copy()
        return apply

    def write_csv(self, path) -> None:
        cols = ["station_p_kw", "grid_p_kw", "grid_q_kvar", "pv_available_kw", "pv_support_kw",
                "pv_to_es_kw", "pv_export_kw", "pv_curtailed_kw", "pv_q_kvar", "charger_q_kvar",
                "es_power_kw", "es_soc", "need"]
        arrs = [self.station_p, self.grid_p, self.grid_q, self.pv_available, self.pv_support,
                self.pv_to_es, self.pv_export, self.pv_curtailed, self.pv_q, self.charger_q,
                self.es_power, self.es_soc, self.need.astype(int)]
        ts = TimeSeries(self.start, self.station_p)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp", *cols])
            for k, t in enumerate(ts.times()):
                w.writerow([t.isoformat(), *(f"{a[k]:.6f}" if a.dtype.kind == "f" else int(a[k])
                                             for a in arrs)])


def _series(x, name):
    if isinstance(x, TimeSeries):
        return x.start, np.asarray(x.values, dtype=float)
    if x is None:
        raise SeriesMismatch(f"{name} is required")
    return None, np.asarray(x, dtype=float)


def dispatch(plan: MitigationPlan, station_p, pv_profile, vlsm: Vlsm, base_voltages,
             station_bus: str) -> DispatchTrace:
    """Step through the horizon allocating PV, storage and var support.

    Voltages are predicted with the sensitivity columns of the station bus
    around ``base_voltages`` (the feeder without the station; shape n or
    n x T). When the unmitigated prediction falls below ``lower`` the
    support order is PV real power, storage discharge, charger vars, PV
    vars, each sized to lift the worst bus to ``lower + margin``. PV not
    needed for support charges storage; what remains is exported only as
    far as the upper limit allows and curtailed beyond that.
    """
    start, p_st = _series(station_p, "station_p")
    if pv_profile is None:
        pv = np.zeros_like(p_st)
    else:
        _, pv = _series(pv_profile, "pv_profile")
    T = len(p_st)
    if len(pv) != T:
        raise SeriesMismatch("station and PV series must have the same length")
    base = np.asarray(base_voltages, dtype=float)
    if base.ndim == 1:
        base = np.repeat(base[:, None], T, axis=1)
    if base.shape != (vlsm.n, T):
        raise SeriesMismatch("base voltages must be n or n x T")

    pcol = vlsm.p_column(station_bus)
    qcol = vlsm.q_column(station_bus)
    live = pcol > 0
    live_q = qcol > 0
    lo, hi = plan.lower, plan.upper
    target = lo + plan.margin
    e_max = plan.es_kwh
    energy = plan.initial_soc * e_max
    pv_pool = 0.0
    dt = 1.0 / 60.0
    eff = plan.efficiency
    k_pf = pf_factor(plan.pf)

    out = {k: np.zeros(T) for k in (
        "grid_p", "grid_q", "pv_support", "pv_to_es", "pv_export", "pv_curtailed", "pv_q",
        "charger_q", "es_power", "es_soc", "es_pv", "v_un", "v_min", "v_max")}
    need_flag = np.zeros(T, dtype=bool)

    for t in range(T):
        P = max(p_st[t], 0.0)
        avail = max(pv[t], 0.0)
        v_un = base[:, t] - pcol * P
        need = bool(v_un.min() < lo + plan.guard)
        need_flag[t] = need
        cap_ch = 0.0
        if plan.charger_s is not None:
            cap_ch = math.sqrt(max(plan.charger_s**2 - P**2, 0.0))

        pv_sup = es_dis = 0.0
        if need:
            short = (target - v_un) > 0
            p_need = float(np.max((target - v_un)[short & live] / pcol[short & live], initial=0.0))
            pv_sup = min(avail, p_need, P)
            es_dis = min(p_need - pv_sup, plan.es_kw, energy / dt, P - pv_sup)
            es_dis = max(es_dis, 0.0)

        surplus = avail - pv_sup
        to_es = 0.0
        if surplus > 0 and e_max > 0 and not es_dis:
            room = (e_max - energy) / (eff * dt)
            to_es = max(min(surplus, plan.es_kw, room), 0.0)
            surplus -= to_es
        v_now = v_un + pcol * (pv_sup + es_dis)
        allowed = np.min((hi - plan.margin - v_now)[live] / pcol[live], initial=np.inf)
        export = min(surplus, max(allowed, 0.0))
        curtailed = surplus - export
        v_now = v_now + pcol * export

        # vars
        q_ch = q_pv = 0.0
        if plan.pf_control:
            q_ch = min(P * k_pf, cap_ch) if plan.charger_s is not None else P * k_pf
        if need:
            gap = target - v_now - qcol * q_ch
            sel = (gap > 0) & live_q
            q_need = float(np.max(gap[sel] / qcol[sel], initial=0.0))
            extra = min(q_need, max(cap_ch - q_ch, 0.0))
            q_ch += extra
            q_need -= extra
            pv_real = pv_sup + to_es + export
            pv_head = min(plan.eta * plan.pv_kva,
                          math.sqrt(max(plan.pv_kva**2 - pv_real**2, 0.0)))
            q_pv = min(q_need, pv_head)
        v_now = v_now + qcol * (q_ch + q_pv)

        # storage bookkeeping with a PV-derived share
        if es_dis > 0:
            share = pv_pool / energy if energy > 0 else 0.0
            pv_part = es_dis * dt * share
            pv_pool -= pv_part
            energy -= es_dis * dt
            out["es_pv"][t] = pv_part / dt
        if to_es > 0:
            energy += to_es * eff * dt
            pv_pool += to_es * eff * dt
        energy = min(max(energy, 0.0), e_max)
        pv_pool = min(max(pv_pool, 0.0), energy)

        out["grid_p"][t] = P - pv_sup - es_dis - export
        out["grid_q"][t] = -(q_ch + q_pv)
        out["pv_support"][t] = pv_sup
        out["pv_to_es"][t] = to_es
        out["pv_export"][t] = export
        out["pv_curtailed"][t] = curtailed
        out["pv_q"][t] = q_pv
        out["charger_q"][t] = q_ch
        out["es_power"][t] = es_dis - to_es
        out["es_soc"][t] = energy / e_max if e_max > 0 else 0.0
        out["v_un"][t] = v_un.min()
        out["v_min"][t] = v_now.min()
        out["v_max"][t] = v_now.max()

    return DispatchTrace(
        start, p_st.copy(), out["grid_p"], out["grid_q"], pv.copy(), out["pv_support"],
        out["pv_to_es"], out["pv_export"], out["pv_curtailed"], out["pv_q"], out["charger_q"],
        out["es_power"], out["es_soc"], out["es_pv"], need_flag, out["v_un"], out["v_min"],
        out["v_max"], eff, e_max, plan.initial_soc)


def effective_pv_fraction(trace: DispatchTrace, support_need=None) -> float:
    """Share of available PV energy that supported voltage when it was needed.

    Direct PV support during need steps counts in full; storage discharge
    counts through its PV-derived part, converted back to the PV energy it
    consumed (divided by the charge efficiency).
    """
    need = trace.need if support_need is None else np.asarray(support_need, dtype=bool)
    total = float(trace.pv_available.sum())
    if total <= 0:
        return 0.0
    used = trace.pv_support[need].sum() + trace.es_pv_discharge[need].sum() / trace.efficiency
    return float(min(max(used / total, 0.0), 1.0))
