"""Backward/forward sweep power flow and quasi-static time-series driver."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EmptySeries, InvalidBus, NoConvergence, SeriesLengthMismatch
from .network import Feeder, Topology
from .profiles import TimeSeries

TOL = 1e-8
MAX_ITERS = 100


@dataclass(frozen=True)
class LoadPoint:
    """Constant-power load in kW/kvar; negative values are injections."""

    bus: str
    p: float
    q: float = 0.0


@dataclass
class PowerFlowSolution:
    bus_ids: tuple[str, ...]
    voltages: np.ndarray
    slack_injection: complex
    losses: float
    iterations: int
    converged: bool
    total_load: complex = 0j
    phasors: np.ndarray = field(repr=False, default=None)

    def v(self, bus: str) -> float:
        return float(self.voltages[self.bus_ids.index(bus)])


@dataclass
class SweepResult:
    voltages: np.ndarray  # (n, T) complex phasors
    iterations: int
    converged: np.ndarray  # (T,) bool
    currents: np.ndarray  # (n, T) branch current into each bus


def sweep(topo: Topology, s_pu: np.ndarray, v0: float = 1.0, tol: float = TOL,
          max_iters: int = MAX_ITERS) -> SweepResult:
    """Solve every column of ``s_pu`` (n buses x T cases, complex p.u. load).

    Flat start for each column; a column is converged once the largest
    voltage change between successive sweeps drops below ``tol``. Iteration
    stops when every column has converged.
    """
    s_pu = np.asarray(s_pu, dtype=complex)
    if s_pu.ndim == 1:
        s_pu = s_pu[:, None]
    n, T = s_pu.shape
    v = np.full((n, T), complex(v0))
    order, parent, z = topo.order, topo.parent, topo.z
    up = [(i, parent[i]) for i in order if parent[i] >= 0]
    down = up[::-1]
    done = np.zeros(T, dtype=bool)
    it = 0
    cur = np.zeros((n, T), dtype=complex)
    while it < max_iters:
        it += 1
        cur = np.conj(s_pu / v)
        # backward: accumulate branch currents toward the slack
        for i, p in up:
            cur[p] += cur[i]
        v_new = v.copy()
        for i, p in down:
            v_new[i] = v_new[p] - z[i] * cur[i]
        delta = np.max(np.abs(v_new - v), axis=0)
        v = v_new
        done = delta < tol
        if done.all():
            break
    # currents consistent with the final voltages
    cur = np.conj(s_pu / v)
    for i, p in up:
        cur[p] += cur[i]
    return SweepResult(v, it, done, cur)


def _load_vector(feeder: Feeder, loads: Sequence[LoadPoint]) -> np.ndarray:
    idx = feeder.index
    eligible = {b.id for b in feeder.buses if b.load_connection}
    s = np.zeros(len(feeder.buses), dtype=complex)
    for lp in loads:
        if lp.bus not in idx:
            raise InvalidBus(f"unknown bus {lp.bus!r}")
        if lp.bus not in eligible:
            raise InvalidBus(f"bus {lp.bus!r} is not load-eligible")
        s[idx[lp.bus]] += complex(lp.p, lp.q)
    return s


def solve(feeder: Feeder, loads: Sequence[LoadPoint] = (), slack_voltage: float = 1.0,
          tol: float = TOL, max_iters: int = MAX_ITERS) -> PowerFlowSolution:
    """Steady-state voltages of a radial feeder with constant-power loads."""
    if not 0.9 <= slack_voltage <= 1.1:
        raise ValueError(f"slack_voltage {slack_voltage} outside [0.9, 1.1]")
    topo = feeder.topology
    base_kva = feeder.base_power_mva * 1000.0
    s_kva = _load_vector(feeder, loads)
    res = sweep(topo, s_kva / base_kva, slack_voltage, tol, max_iters)
    if not res.converged.all():
        raise NoConvergence(max_iters)
    v = res.voltages[:, 0]
    i = res.currents[:, 0]
    sl = topo.slack
    kids = topo.parent >= 0
    s_slack = v[sl] * np.conj(i[sl]) * base_kva
    losses = float(np.sum(np.abs(i[kids]) ** 2 * topo.z[kids].real) * base_kva)
    return PowerFlowSolution(topo.bus_ids, np.abs(v), complex(s_slack), losses,
                             res.iterations, True, complex(s_kva.sum()), v)


# ---------------------------------------------------------------------------
# QSTS

Control = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass
class QstsResult:
    bus_ids: tuple[str, ...]
    times: list[datetime]
    voltages: np.ndarray  # (n, T) magnitudes
    station_p: np.ndarray
    station_q: np.ndarray

    @property
    def v_min(self) -> np.ndarray:
        return self.voltages.min(axis=1)

    @property
    def v_max(self) -> np.ndarray:
        return self.voltages.max(axis=1)

    def series(self, bus: str) -> TimeSeries:
        row = self.voltages[self.bus_ids.index(bus)]
        return TimeSeries(self.times[0], row.copy())

    def summary(self) -> dict:
        return {b: (float(lo), float(hi)) for b, lo, hi in zip(self.bus_ids, self.v_min, self.v_max)}


def qsts(feeder: Feeder, load_series: Mapping[str, TimeSeries] | None,
         station_series: TimeSeries | None = None, station_bus: str | None = None,
         controls: Sequence[Control] = (), slack_voltage: float = 1.0,
         station_q: TimeSeries | None = None, chunk: int = 20000,
         tol: float = TOL, max_iters: int = MAX_ITERS) -> QstsResult:
    """One constant-power solve per 1-minute step.

    ``load_series`` maps bus id to a TimeSeries whose ``values`` are kW and
    whose optional ``q`` are kvar. Each control receives the station P and Q
    arrays (kW, kvar, positive = consumption) and returns modified arrays
    before any solve runs; controls carrying storage state compute their
    whole trajectory causally, step by step, inside that call.
    """
    load_series = dict(load_series or {})
    all_series = list(load_series.values())
    if station_series is not None:
        all_series.append(station_series)
    if not all_series:
        raise EmptySeries("qsts needs at least one series")
    ref = all_series[0]
    T = len(ref)
    for s in all_series:
        if len(s) != T or s.start != ref.start or s.step_minutes != ref.step_minutes:
            raise SeriesLengthMismatch("all series must share start, step and length")
    if ref.step_minutes != 1:
        raise SeriesLengthMismatch("qsts runs at a 1-minute step")

    idx = feeder.index
    n = len(feeder.buses)
    s_kva = np.zeros((n, T), dtype=complex)
    for bus, ts in load_series.items():
        if bus not in idx:
            raise InvalidBus(f"unknown bus {bus!r}")
        s_kva[idx[bus]] += ts.values + 1j * (ts.q if ts.q is not None else 0.0)

    sp = np.zeros(T)
    sq = np.zeros(T)
    if station_series is not None:
        if station_bus not in idx:
            raise InvalidBus(f"unknown station bus {station_bus!r}")
        sp = np.asarray(station_series.values, dtype=float).copy()
        if station_q is not None:
            sq = np.asarray(station_q.values, dtype=float).copy()
        for ctl in controls:
            sp, sq = ctl(sp, sq)
        s_kva[idx[station_bus]] += sp + 1j * sq

    base_kva = feeder.base_power_mva * 1000.0
    topo = feeder.topology
    out = np.empty((n, T))
    for lo in range(0, T, chunk):
        hi = min(T, lo + chunk)
        res = sweep(topo, s_kva[:, lo:hi] / base_kva, slack_voltage, tol, max_iters)
        if not res.converged.all():
            bad = lo + int(np.argmin(res.converged))
            raise NoConvergence(max_iters, ref.times()[bad])
        out[:, lo:hi] = np.abs(res.voltages)
    return QstsResult(topo.bus_ids, ref.times(), out, sp, sq)


# ---------------------------------------------------------------------------
# Limit checks


@dataclass
class ViolationReport:
    count: int
    low_count: int
    high_count: int
    worst: float | None
    timestamps: list
    indices: np.ndarray

    @property
    def ok(self) -> bool:
        return self.count == 0


def violation_scan(series, lower: float = 0.95, upper: float = 1.05) -> ViolationReport:
    """Samples strictly outside [lower, upper].

    ``series`` is a TimeSeries or an array; 2-D arrays (buses x time) are
    scanned in full and timestamps refer to the time axis.
    """
    if isinstance(series, TimeSeries):
        vals = np.asarray(series.values, dtype=float)
        times = series.times()
    else:
        vals = np.asarray(series, dtype=float)
        times = None
    if vals.size == 0:
        raise EmptySeries("cannot scan an empty series")
    low = vals < lower
    high = vals > upper
    bad = low | high
    if vals.ndim == 2:
        t_bad = np.flatnonzero(bad.any(axis=0))
    else:
        t_bad = np.flatnonzero(bad)
    worst = None
    if bad.any():
        dev = np.where(low, lower - vals, np.where(high, vals - upper, -np.inf))
        worst = float(vals.flat[int(np.argmax(dev))])
    stamps = [times[k] for k in t_bad] if times is not None else list(t_bad)
    return ViolationReport(int(bad.sum()), int(low.sum()), int(high.sum()), worst, stamps, t_bad)


def write_voltage_csv(result: QstsResult, path, buses: Sequence[str] | None = None) -> None:
    """``timestamp,bus_id,v_pu`` rows, time-major."""
    rows = [result.bus_ids.index(b) for b in (buses or result.bus_ids)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "bus_id", "v_pu"])
        for k, t in enumerate(result.times):
            stamp = t.isoformat()
            for r in rows:
                w.writerow([stamp, result.bus_ids[r], f"{result.voltages[r, k]:.8f}"])


def write_solution_csv(sol: PowerFlowSolution, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus_id", "v_pu"])
        for b, v in zip(sol.bus_ids, sol.voltages):
            w.writerow([b, f"{v:.10f}"])


def read_loads_csv(path) -> list[LoadPoint]:
    """``bus_id,p_kw,q_kvar`` rows (header required)."""
    with open(path, newline="") as fh:
        return [LoadPoint(r["bus_id"], float(r["p_kw"]), float(r.get("q_kvar") or 0.0))
                for r in csv.DictReader(fh)]


def timestamps(start: datetime, n: int, step_minutes: int = 1) -> list[datetime]:
    return [start + timedelta(minutes=step_minutes * k) for k in range(n)]
