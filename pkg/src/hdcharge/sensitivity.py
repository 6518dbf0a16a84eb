"""Voltage-load sensitivity matrices, station impact prediction and location ranking.

Sign convention: sensitivities are positive for a radial feeder. A load
increase ``dP`` (kW) and ``dQ`` (kvar) lowers voltages by
``p_matrix @ dP + q_matrix @ dQ``; injections are negative loads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NoConvergence, UnknownBus, ZeroPerturbation, ZeroSensitivity
from .network import Feeder
from .powerflow import LoadPoint, _load_vector, sweep

VLSM_TOL = 1e-12
GROUPS = ("best", "good", "worst")


@dataclass(frozen=True)
class Vlsm:
    bus_ids: tuple[str, ...]
    p_matrix: np.ndarray  # p.u. volt per kW
    q_matrix: np.ndarray  # p.u. volt per kvar
    base_voltages: np.ndarray
    eligible: tuple[bool, ...]
    operating_point: tuple[LoadPoint, ...] = ()

    @property
    def n(self) -> int:
        return len(self.bus_ids)

    def idx(self, bus: str) -> int:
        try:
            return self.bus_ids.index(bus)
        except ValueError:
            raise UnknownBus(f"bus {bus!r} not in sensitivity matrix") from None

    def p_column(self, bus: str) -> np.ndarray:
        """Voltage drop at every bus per kW drawn at ``bus``."""
        return self.p_matrix[:, self.idx(bus)]

    def q_column(self, bus: str) -> np.ndarray:
        return self.q_matrix[:, self.idx(bus)]

    def predict_drop(self, d_p, d_q=None) -> np.ndarray:
        """Linear voltage drop for nodal load changes (kW, kvar vectors)."""
        d_p = np.asarray(d_p, dtype=float)
        out = self.p_matrix @ d_p
        if d_q is not None:
            out = out + self.q_matrix @ np.asarray(d_q, dtype=float)
        return out


def compute_vlsm(feeder: Feeder, base_loads: Sequence[LoadPoint] = (),
                 perturbation: tuple[float, float] = (10.0, 10.0),
                 slack_voltage: float = 1.0, tol: float = VLSM_TOL) -> Vlsm:
    """Finite-difference sensitivities around ``base_loads``.

    Column j holds ``(V_base - V_perturbed) / delta`` with the perturbation
    applied at bus j alone. All columns are solved in one batched sweep.
    """
    dp, dq = perturbation
    if dp == 0 or dq == 0:
        raise ZeroPerturbation("both real and reactive perturbations must be non-zero")
    topo = feeder.topology
    base_kva = feeder.base_power_mva * 1000.0
    s0 = _load_vector(feeder, base_loads) / base_kva
    n = topo.n
    base = sweep(topo, s0, slack_voltage, tol)
    if not base.converged.all():
        raise NoConvergence(base.iterations)
    v0 = np.abs(base.voltages[:, 0])

    cols = [j for j in range(n) if j != topo.slack]
    mats = []
    for delta, unit in ((dp, 1.0), (dq, 1j)):
        s = np.repeat(s0[:, None], len(cols), axis=1)
        s[cols, np.arange(len(cols))] += unit * delta / base_kva
        res = sweep(topo, s, slack_voltage, tol)
        if not res.converged.all():
            raise NoConvergence(res.iterations)
        m = np.zeros((n, n))
        m[:, cols] = (v0[:, None] - np.abs(res.voltages)) / delta
        mats.append(m)
    eligible = tuple(b.load_connection and b.kind != "slack" for b in feeder.buses)
    return Vlsm(topo.bus_ids, mats[0], mats[1], v0, eligible, tuple(base_loads))


def predict_station_voltage(vlsm: Vlsm, base_voltages, station_bus: str,
                            p_c_max: float) -> np.ndarray:
    """Voltages after adding ``p_c_max`` kW at the station bus (linearised)."""
    if p_c_max < 0:
        raise ValueError("p_c_max must be >= 0")
    return np.asarray(base_voltages, dtype=float) - p_c_max * vlsm.p_column(station_bus)


@dataclass(frozen=True)
class SupportRefs:
    p_ref: float
    q_ref: float
    delta_v: np.ndarray
    v_ref: np.ndarray


def compute_refs(vlsm: Vlsm, v_predicted, v_ref=0.95, station_bus: str | None = None,
                 estimator: str = "sum") -> SupportRefs:
    """Real and reactive support that restores every bus to ``v_ref``.

    Only buses below reference contribute. ``estimator='sum'`` adds the
    per-bus requirements; ``'max'`` takes the largest single one.
    """
    v_predicted = np.asarray(v_predicted, dtype=float)
    v_ref = np.broadcast_to(np.asarray(v_ref, dtype=float), v_predicted.shape).copy()
    if v_predicted.shape != (vlsm.n,):
        raise ValueError("voltage vectors must match the sensitivity matrix dimension")
    dv = np.minimum(v_predicted - v_ref, 0.0)
    short = dv < 0
    if not short.any():
        return SupportRefs(0.0, 0.0, dv, v_ref)
    p_col = vlsm.p_column(station_bus)
    q_col = vlsm.q_column(station_bus)
    for i in np.flatnonzero(short):
        if p_col[i] == 0 or q_col[i] == 0:
            raise ZeroSensitivity(vlsm.bus_ids[i])
    p_need = -dv[short] / p_col[short]
    q_need = -dv[short] / q_col[short]
    if estimator == "sum":
        return SupportRefs(float(p_need.sum()), float(q_need.sum()), dv, v_ref)
    if estimator == "max":
        return SupportRefs(float(p_need.max()), float(q_need.max()), dv, v_ref)
    raise ValueError(f"unknown estimator {estimator!r}")


@dataclass(frozen=True)
class ImpactRanking:
    bus_ids: tuple[str, ...]  # best first
    scores: np.ndarray
    groups: dict
    representatives: dict

    def group_of(self, bus: str) -> str:
        for g, members in self.groups.items():
            if bus in members:
                return g
        raise UnknownBus(bus)


def impact_scores(vlsm: Vlsm, p_c_max: float) -> dict[str, float]:
    """Aggregate linear voltage depression caused by ``p_c_max`` at each candidate."""
    col_sum = vlsm.p_matrix.sum(axis=0)
    return {b: float(p_c_max * col_sum[k]) for k, b in enumerate(vlsm.bus_ids) if vlsm.eligible[k]}


def rank_locations(vlsm: Vlsm, p_c_max: float = 1200.0) -> ImpactRanking:
    """Order candidates by impact score and split them into terciles.

    Ties (to nine significant digits) break on bus id. Each group's
    representative is its median member (lower median for even sizes).
    """
    scores = impact_scores(vlsm, p_c_max)
    ordered = sorted(scores, key=lambda b: (float(f"{scores[b]:.9e}"), b))
    parts = np.array_split(np.array(ordered, dtype=object), 3)
    groups = {g: tuple(str(b) for b in part) for g, part in zip(GROUPS, parts)}
    reps = {g: m[(len(m) - 1) // 2] for g, m in groups.items() if m}
    return ImpactRanking(tuple(ordered), np.array([scores[b] for b in ordered]), groups, reps)


def write_vlsm_csv(vlsm: Vlsm, path, which: str = "p") -> None:
    mat = vlsm.p_matrix if which == "p" else vlsm.q_matrix
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus_id", *vlsm.bus_ids])
        for b, row in zip(vlsm.bus_ids, mat):
            w.writerow([b, *(f"{v:.12e}" for v in row)])


def write_ranking_csv(ranking: ImpactRanking, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus_id", "score", "group"])
        for b, s in zip(ranking.bus_ids, ranking.scores):
            w.writerow([b, f"{s:.9e}", ranking.group_of(b)])
