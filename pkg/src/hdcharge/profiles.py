"""Synthetic system-load and PV profiles at 1-minute resolution."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
from scipy.signal import lfilter

from .errors import NoLoadBuses

MINUTES_PER_DAY = 1440
DEFAULT_START = datetime(2020, 7, 6)  # a Monday
LOAD_PF = 0.95
PV_CLEARNESS = (1.0, 0.85, 0.7, 0.5, 0.35, 0.2, 0.1)
DAYLIGHT = (6.0, 20.0)


@dataclass
class TimeSeries:
    """Uniformly sampled kW (or p.u.) trajectory; ``q`` optionally carries kvar."""

    start: datetime
    values: np.ndarray
    step_minutes: int = 1
    q: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("TimeSeries values must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("TimeSeries values must be finite")
        if self.q is not None:
            self.q = np.asarray(self.q, dtype=float)
            if self.q.shape != self.values.shape:
                raise ValueError("q must match values in length")

    def __len__(self):
        return len(self.values)

    def times(self) -> list[datetime]:
        step = timedelta(minutes=self.step_minutes)
        return [self.start + k * step for k in range(len(self.values))]

    def energy(self) -> float:
        """Integral in kWh when values are kW."""
        return float(self.values.sum() * self.step_minutes / 60.0)

    def peak(self) -> float:
        return float(self.values.max()) if len(self.values) else 0.0

    def slice_days(self, first: int, count: int = 1) -> "TimeSeries":
        per_day = MINUTES_PER_DAY // self.step_minutes
        lo, hi = first * per_day, (first + count) * per_day
        q = None if self.q is None else self.q[lo:hi].copy()
        start = self.start + timedelta(minutes=lo * self.step_minutes)
        return TimeSeries(start, self.values[lo:hi].copy(), self.step_minutes, q)


@dataclass
class ProfileSet:
    series: dict[str, TimeSeries]
    pattern: str
    seed: int
    diversity_factor: float = 1.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.series)

    def aggregate(self) -> np.ndarray:
        if not self.series:
            return np.zeros(0)
        return np.sum([s.values for s in self.series.values()], axis=0)


def _circ(h, centre):
    d = np.abs(h - centre)
    return np.minimum(d, 24.0 - d)


def base_shape(pattern: str, hours: np.ndarray) -> np.ndarray:
    """Normalised daily load shape with unit maximum."""
    if pattern == "residential":
        s = (0.30
             + 0.25 * np.exp(-0.5 * (_circ(hours, 7.5) / 1.2) ** 2)
             + 0.70 * np.exp(-0.5 * (_circ(hours, 19.0) / 2.0) ** 2))
    elif pattern == "commercial":
        rise = 1.0 / (1.0 + np.exp(-(hours - 8.5) * 3.0))
        fall = 1.0 / (1.0 + np.exp((hours - 17.5) * 3.0))
        s = 0.25 + 0.75 * rise * fall
    else:
        raise ValueError(f"unknown load pattern {pattern!r}")
    return s / s.max()


def generate_system_loads(feeder, pattern: str = "residential", days: int = 1,
                          seed: int = 0, start: datetime = DEFAULT_START,
                          shift_minutes: float = 45.0, peak_sigma: float = 0.25,
                          ar_phi: float = 0.98, ar_std: float = 0.12) -> ProfileSet:
    """Diversified per-bus loads rescaled to the feeder's stated peak.

    Each bus gets the pattern shape shifted by a random offset, a lognormal
    peak multiplier, day-to-day scaling and multiplicative AR(1) noise. The
    aggregate is then scaled so its coincident peak equals the sum of the
    buses' nominal kW.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    if not any(b.load_connection for b in feeder.buses):
        raise NoLoadBuses(f"feeder {feeder.name!r} has no load-connection buses")
    load_buses = feeder.load_buses
    if not load_buses:
        return ProfileSet({}, pattern, seed, 1.0)

    rng = np.random.default_rng(seed)
    T = days * MINUTES_PER_DAY
    minutes = np.arange(T)
    innov = ar_std * np.sqrt(1.0 - ar_phi**2)
    raw = np.empty((len(load_buses), T))
    for k, bus in enumerate(load_buses):
        shift = rng.uniform(-shift_minutes, shift_minutes)
        hours = ((minutes - shift) / 60.0) % 24.0
        shape = base_shape(pattern, hours)
        scale = rng.lognormal(0.0, peak_sigma)
        daily = np.repeat(rng.uniform(0.9, 1.1, size=days), MINUTES_PER_DAY)
        eps = rng.standard_normal(T) * innov
        acc0 = rng.standard_normal() * ar_std
        noise, _ = lfilter([1.0], [1.0, -ar_phi], eps, zi=[ar_phi * acc0])
        raw[k] = np.clip(bus.nominal_kw * scale * shape * daily * (1.0 + noise), 0.0, None)

    target = feeder.peak_load_kw
    raw *= target / raw.sum(axis=0).max()
    agg_peak = raw.sum(axis=0).max()
    diversity = float(raw.max(axis=1).sum() / agg_peak)
    tan_phi = np.tan(np.arccos(LOAD_PF))
    series = {b.id: TimeSeries(start, raw[k], 1, raw[k] * tan_phi)
              for k, b in enumerate(load_buses)}
    return ProfileSet(series, pattern, seed, diversity)


def clear_sky(hours: np.ndarray) -> np.ndarray:
    """Unit-peak bell over the daylight window, zero outside it."""
    lo, hi = DAYLIGHT
    out = np.sin(np.pi * (hours - lo) / (hi - lo))
    return np.where((hours > lo) & (hours < hi), np.clip(out, 0.0, None), 0.0)


def generate_pv_profiles(days: int = 7, capacity: float = 1.0, seed: int = 0,
                         start: datetime = DEFAULT_START,
                         clearness=PV_CLEARNESS, shade: float = 0.1,
                         mean_switch_minutes: float = 10.0) -> list[TimeSeries]:
    """One-day PV output series in kW for a plant of ``capacity`` kVA.

    Day ``d`` has daily energy exactly ``clearness[d]`` times the clear-sky
    energy. The first and last days are smooth; days in between alternate
    between full sun and shade through a two-state Markov chain, which keeps
    cloud-edge peaks near clear-sky levels while lowering the daily total.
    """
    if capacity <= 0:
        raise ValueError("capacity must be > 0")
    rng = np.random.default_rng(seed)
    hours = np.arange(MINUTES_PER_DAY) / 60.0
    cs = clear_sky(hours)
    lit = cs > 0
    out = []
    for d in range(days):
        c = clearness[d % len(clearness)]
        smooth = d % len(clearness) in (0, len(clearness) - 1)
        if smooth or c >= 1.0:
            factor = np.full(MINUTES_PER_DAY, c)
        else:
            factor = _cloud_factor(rng, cs, lit, c, shade, mean_switch_minutes)
        out.append(TimeSeries(start + timedelta(days=d), capacity * cs * factor))
    return out


def _cloud_factor(rng, cs, lit, c, shade, mean_switch):
    p_sun = (c - shade) / (1.0 - shade) if c > shade else 0.05
    rate = 1.0 / mean_switch
    a, b = p_sun * rate, (1.0 - p_sun) * rate  # shade->sun, sun->shade
    total = cs.sum()
    for _ in range(1000):
        state = np.empty(len(cs), dtype=bool)
        s = rng.random() < p_sun
        u = rng.random(len(cs))
        for t in range(len(cs)):
            state[t] = s
            s = (u[t] >= b) if s else (u[t] < a)
        e_sun = cs[state].sum()
        e_shade = cs[~state].sum()
        if e_shade <= 0:
            continue
        tau = (c * total - e_sun) / e_shade
        if 0.0 <= tau <= 1.0:
            return np.where(state, 1.0, tau)
    raise RuntimeError("could not draw a cloud sequence for the requested clearness")


# ---------------------------------------------------------------------------
# CSV


def write_loads_csv(profiles: ProfileSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "bus_id", "p_kw", "q_kvar"])
        items = sorted(profiles.series.items())
        if not items:
            return
        times = items[0][1].times()
        for k, t in enumerate(times):
            stamp = t.isoformat()
            for bus, ts in items:
                q = ts.q[k] if ts.q is not None else 0.0
                w.writerow([stamp, bus, f"{ts.values[k]:.6f}", f"{q:.6f}"])


def read_loads_csv(path, pattern: str = "measured") -> ProfileSet:
    """Accept measured profiles in the ``timestamp,bus_id,p_kw,q_kvar`` layout."""
    p: dict[str, list[float]] = {}
    q: dict[str, list[float]] = {}
    starts: dict[str, datetime] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            b = row["bus_id"]
            if b not in p:
                p[b], q[b] = [], []
                starts[b] = datetime.fromisoformat(row["timestamp"])
            p[b].append(float(row["p_kw"]))
            q[b].append(float(row.get("q_kvar") or 0.0))
    series = {b: TimeSeries(starts[b], np.array(p[b]), 1, np.array(q[b])) for b in p}
    return ProfileSet(series, pattern, -1, _diversity(series))


def _diversity(series) -> float:
    if not series:
        return 1.0
    arr = np.array([s.values for s in series.values()])
    agg = arr.sum(axis=0).max()
    return float(arr.max(axis=1).sum() / agg) if agg > 0 else 1.0


def write_series_csv(ts: TimeSeries, path, column: str = "p_kw") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", column])
        for t, v in zip(ts.times(), ts.values):
            w.writerow([t.isoformat(), f"{v:.6f}"])


def read_series_csv(path, column: str = "p_kw") -> TimeSeries:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    start = datetime.fromisoformat(rows[0]["timestamp"])
    step = 1
    if len(rows) > 1:
        step = int((datetime.fromisoformat(rows[1]["timestamp"]) - start).total_seconds() // 60)
    return TimeSeries(start, np.array([float(r[column]) for r in rows]), step)
