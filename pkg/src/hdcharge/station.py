"""Agent-based heavy-duty charging station simulation at a 1-minute step."""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .errors import NegativePower, StepMismatch
from .profiles import DEFAULT_START, MINUTES_PER_DAY, TimeSeries

PORT_KW = 1200.0
BATTERY_KWH = (660.0, 1200.0)
INITIAL_SOC = (0.1, 0.4)
TARGET_SOC = 0.9
DWELL_CAP_MIN = 120
MONTH_DAYS = 30


@dataclass(frozen=True)
class AcceptanceCurve:
    """Constant ``max_kw`` up to ``taper_soc``, then linear down to ``floor * max_kw`` at SOC 1."""

    max_kw: float = PORT_KW
    taper_soc: float = 0.8
    floor: float = 0.1

    def __call__(self, soc: float) -> float:
        if soc <= self.taper_soc:
            return self.max_kw
        if soc >= 1.0:
            return self.floor * self.max_kw
        frac = (soc - self.taper_soc) / (1.0 - self.taper_soc)
        return self.max_kw * (1.0 - frac * (1.0 - self.floor))

    @classmethod
    def flat(cls, max_kw: float = PORT_KW) -> "AcceptanceCurve":
        return cls(max_kw, 1.0, 1.0)


@dataclass(frozen=True)
class VehicleAgent:
    battery_kwh: float
    arrival: int  # minutes after simulation start
    initial_soc: float
    target_soc: float = TARGET_SOC
    deadline: int | None = None
    energy_demand: float | None = None  # kWh, caps the target when set
    acceptance: AcceptanceCurve = AcceptanceCurve()

    def __post_init__(self):
        if not 0 <= self.initial_soc < self.target_soc <= 1:
            raise ValueError("need 0 <= initial_soc < target_soc <= 1")
        if self.battery_kwh <= 0:
            raise ValueError("battery_kwh must be > 0")

    @property
    def energy_needed(self) -> float:
        e = (self.target_soc - self.initial_soc) * self.battery_kwh
        return e if self.energy_demand is None else min(e, self.energy_demand)


@dataclass(frozen=True)
class StationConfig:
    ports: int = 3
    port_power: float = PORT_KW
    station_cap: float | None = None  # kVA; defaults to ports * port_power

    def __post_init__(self):
        if self.ports < 1:
            raise ValueError("ports must be >= 1")
        if self.cap < self.port_power:
            raise ValueError("station_cap must be >= port_power")

    @property
    def cap(self) -> float:
        return self.ports * self.port_power if self.station_cap is None else self.station_cap

    @property
    def peak_kw(self) -> float:
        return min(self.ports * self.port_power, self.cap)


def sample_traffic(pattern: str = "daytime", vehicles_per_day: int = 72, days: int = MONTH_DAYS,
                   seed: int = 0, dwell_cap: int = DWELL_CAP_MIN,
                   battery_kwh=BATTERY_KWH, initial_soc=INITIAL_SOC,
                   target_soc: float = TARGET_SOC,
                   acceptance: AcceptanceCurve = AcceptanceCurve()) -> list[VehicleAgent]:
    """Draw ``vehicles_per_day`` arrivals for each day.

    ``daytime`` mixes two normal modes at 10:00 and 15:00 (sd 1.5 h);
    ``multishift`` spreads arrivals uniformly over the 24 hours.
    """
    if vehicles_per_day < 0:
        raise ValueError("vehicles_per_day must be >= 0")
    rng = np.random.default_rng(seed)
    agents = []
    for day in range(days):
        n = vehicles_per_day
        if pattern == "daytime":
            mode = rng.random(n) < 0.5
            hours = np.where(mode, rng.normal(10.0, 1.5, n), rng.normal(15.0, 1.5, n)) % 24.0
        elif pattern == "multishift":
            hours = rng.uniform(0.0, 24.0, n)
        else:
            raise ValueError(f"unknown charging pattern {pattern!r}")
        caps = rng.uniform(*battery_kwh, n)
        socs = rng.uniform(*initial_soc, n)
        for h, cap, soc in zip(hours, caps, socs):
            arrival = day * MINUTES_PER_DAY + int(h * 60.0)
            agents.append(VehicleAgent(float(cap), arrival, float(soc), target_soc,
                                       arrival + dwell_cap, None, acceptance))
    agents.sort(key=lambda a: a.arrival)
    return agents


@dataclass
class StationRun:
    load_profile: TimeSeries
    energy: np.ndarray  # kWh delivered per agent, in input order
    waits: np.ndarray  # minutes queued, served agents only
    unserved: int
    max_active: int
    seed: int | None = None

    @property
    def max_wait(self) -> float:
        return float(self.waits.max()) if len(self.waits) else 0.0

    @property
    def mean_wait(self) -> float:
        return float(self.waits.mean()) if len(self.waits) else 0.0


def _share(demand: list[float], cap: float) -> list[float]:
    """Equal split of ``cap`` with unused share passed on to the others."""
    if sum(demand) <= cap:
        return demand
    out = [0.0] * len(demand)
    left = cap
    pending = sorted(range(len(demand)), key=lambda i: demand[i])
    while pending:
        share = left / len(pending)
        i = pending[0]
        if demand[i] <= share:
            out[i] = demand[i]
            left -= demand[i]
            pending.pop(0)
        else:
            for j in pending:
                out[j] = share
            break
    return out


def simulate_station(config: StationConfig, agents, duration: int = MONTH_DAYS * MINUTES_PER_DAY,
                     step_minutes: int = 1, start: datetime = DEFAULT_START,
                     seed: int | None = None) -> StationRun:
    """FIFO queue over ``config.ports`` ports, one minute per step.

    A plugged vehicle draws ``min(port_power, acceptance(SOC), remaining
    energy / step)``; the station cap is shared equally when binding. A
    vehicle leaves when its target energy is in, or at its deadline; queued
    vehicles whose deadline passes leave unserved.
    """
    if step_minutes != 1:
        raise StepMismatch("the station model runs at a 1-minute step")
    agents = list(agents)
    order = sorted(range(len(agents)), key=lambda k: (agents[k].arrival, k))
    dt_h = step_minutes / 60.0
    load = np.zeros(duration)
    energy = np.zeros(len(agents))
    remaining = [a.energy_needed for a in agents]
    soc = [a.initial_soc for a in agents]
    plugged_at = {}
    queue: deque[int] = deque()
    active: list[int] = []
    nxt = 0
    max_active = 0
    cap = config.cap

    for t in range(duration):
        while nxt < len(order) and agents[order[nxt]].arrival <= t:
            queue.append(order[nxt])
            nxt += 1
        if not active and not queue:
            if nxt >= len(order):
                break
            continue
        if queue:
            queue = deque(k for k in queue if agents[k].deadline is None or agents[k].deadline > t)
        while queue and len(active) < config.ports:
            k = queue.popleft()
            plugged_at[k] = t
            active.append(k)
        max_active = max(max_active, len(active))
        demand = [min(config.port_power, agents[k].acceptance(soc[k]), remaining[k] / dt_h)
                  for k in active]
        power = _share(demand, cap)
        total = 0.0
        done = []
        for k, p in zip(active, power):
            if p < 0:
                raise NegativePower(f"agent {k} drew {p} kW")
            e = p * dt_h
            energy[k] += e
            remaining[k] -= e
            soc[k] += e / agents[k].battery_kwh
            total += p
            dl = agents[k].deadline
            if remaining[k] <= 1e-9 or soc[k] >= 1.0 or (dl is not None and t + 1 >= dl):
                done.append(k)
        load[t] = total
        if done:
            active = [k for k in active if k not in done]

    waits = np.array([plugged_at[k] - agents[k].arrival for k in sorted(plugged_at)], dtype=float)
    unserved = len(agents) - len(plugged_at)
    return StationRun(TimeSeries(start, load, step_minutes), energy, waits, unserved, max_active, seed)


@dataclass
class Ensemble:
    runs: list[StationRun]
    config: StationConfig
    meta: dict = field(default_factory=dict)

    @property
    def profiles(self) -> np.ndarray:
        return np.array([r.load_profile.values for r in self.runs])

    @property
    def mean_profile(self) -> TimeSeries:
        return TimeSeries(self.runs[0].load_profile.start, self.profiles.mean(axis=0))

    @property
    def max_envelope(self) -> TimeSeries:
        """Per-minute maximum across iterations."""
        return TimeSeries(self.runs[0].load_profile.start, self.profiles.max(axis=0))

    @property
    def peaks(self) -> np.ndarray:
        return self.profiles.max(axis=1)


def monte_carlo(config: StationConfig, pattern: str = "daytime", iterations: int = 10,
                seed: int = 0, vehicles_per_day: int = 72, days: int = MONTH_DAYS,
                start: datetime = DEFAULT_START, **traffic) -> Ensemble:
    """Independent month-long runs; iteration ``k`` draws traffic with ``seed + k``."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    runs = []
    for k in range(iterations):
        agents = sample_traffic(pattern, vehicles_per_day, days, seed + k, **traffic)
        runs.append(simulate_station(config, agents, days * MINUTES_PER_DAY, start=start,
                                     seed=seed + k))
    return Ensemble(runs, config, {"pattern": pattern, "seed": seed, "iterations": iterations})


def write_profile_csv(ts: TimeSeries, path) -> None:
    """Station load in the standard ``timestamp,bus_id,p_kw,q_kvar`` layout (bus ``station``)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "bus_id", "p_kw", "q_kvar"])
        for t, v in zip(ts.times(), ts.values):
            w.writerow([t.isoformat(), "station", f"{v:.6f}", "0.000000"])
