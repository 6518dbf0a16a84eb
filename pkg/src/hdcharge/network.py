"""Radial feeder data model, per-unit conversion and the bundled test feeders."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    CycleDetected,
    DisconnectedBus,
    MissingBase,
    MultipleSlack,
    TopologyError,
    UnknownFeeder,
)

BUNDLED_FEEDERS = ("ieee34_like", "single_feeder", "two_feeder", "dedicated")


@dataclass(frozen=True)
class Bus:
    """A feeder node.

    ``load_connection`` marks buses where system load or a charging station
    may attach. ``nominal_kw`` is the bus share of the feeder's peak system
    load; it is zero on junction buses and everywhere on the dedicated feeder.
    """

    id: str
    kind: str = "load"
    base_kv: float = 12.47
    load_connection: bool = False
    nominal_kw: float = 0.0

    def __post_init__(self):
        if self.kind not in ("slack", "load"):
            raise ValueError(f"bus {self.id!r}: kind must be 'slack' or 'load', got {self.kind!r}")
        if self.nominal_kw < 0:
            raise ValueError(f"bus {self.id!r}: nominal_kw must be >= 0")


@dataclass(frozen=True)
class Branch:
    """Series impedance between two buses, in ohms unless the feeder is per-unit."""

    from_bus: str
    to_bus: str
    r: float
    x: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"branch {self.from_bus}->{self.to_bus}: negative resistance")
        if self.r == 0 and self.x == 0:
            raise ValueError(f"branch {self.from_bus}->{self.to_bus}: |Z| must be > 0")


@dataclass(frozen=True)
class Topology:
    """Index arrays used by the sweep solver.

    ``order`` lists bus indices leaves-first with the slack last; ``parent[i]``
    is the upstream bus of ``i`` (-1 for the slack) and ``z[i]`` the p.u.
    impedance of the branch feeding ``i``.
    """

    bus_ids: tuple[str, ...]
    slack: int
    order: np.ndarray
    parent: np.ndarray
    z: np.ndarray
    depth: np.ndarray

    @property
    def n(self) -> int:
        return len(self.bus_ids)


@dataclass(frozen=True)
class Feeder:
    name: str
    base_power_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    per_unit: bool = False
    note: str = ""
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))

    @property
    def bus_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.buses)

    @cached_property
    def index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def slack(self) -> Bus:
        return next(b for b in self.buses if b.kind == "slack")

    @property
    def peak_load_kw(self) -> float:
        return float(sum(b.nominal_kw for b in self.buses))

    @property
    def load_buses(self) -> list[Bus]:
        """Buses carrying system load."""
        return [b for b in self.buses if b.load_connection and b.nominal_kw > 0]

    @property
    def eligible_buses(self) -> list[Bus]:
        """Buses where a charging station may be placed."""
        return [b for b in self.buses if b.load_connection and b.kind != "slack"]

    @cached_property
    def topology(self) -> Topology:
        order = validate_radial(self)
        idx = self.index
        n = len(self.buses)
        parent = np.full(n, -1, dtype=int)
        z = np.zeros(n, dtype=complex)
        pu = to_per_unit(self)
        for br in pu.branches:
            a, b = idx[br.from_bus], idx[br.to_bus]
            # orient every branch away from the slack
            child, par = (b, a) if order.index(br.from_bus) > order.index(br.to_bus) else (a, b)
            parent[child] = par
            z[child] = complex(br.r, br.x)
        ordered = np.array([idx[b] for b in order], dtype=int)
        depth = np.zeros(n, dtype=int)
        for i in ordered[::-1]:
            if parent[i] >= 0:
                depth[i] = depth[parent[i]] + 1
        return Topology(self.bus_ids, idx[self.slack.id], ordered, parent, z, depth)


def validate_radial(feeder: Feeder) -> list[str]:
    """Check radiality and return bus ids in sweep order (leaves first, slack last)."""
    slacks = [b.id for b in feeder.buses if b.kind == "slack"]
    if len(slacks) != 1:
        raise MultipleSlack(f"expected exactly one slack bus, found {len(slacks)}")
    ids = [b.id for b in feeder.buses]
    if len(set(ids)) != len(ids):
        raise TopologyError("duplicate bus ids")
    known = set(ids)
    adj: dict[str, list[tuple[str, int]]] = {i: [] for i in ids}
    for k, br in enumerate(feeder.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in known:
                raise TopologyError(f"branch {k} references unknown bus {end!r}")
        if br.from_bus == br.to_bus:
            raise CycleDetected(f"self-loop at bus {br.from_bus!r}")
        adj[br.from_bus].append((br.to_bus, k))
        adj[br.to_bus].append((br.from_bus, k))

    root = slacks[0]
    seen = {root}
    visit = [root]
    used_branch = set()
    queue = [root]
    while queue:
        nxt = []
        for u in queue:
            for v, k in adj[u]:
                if k in used_branch:
                    continue
                used_branch.add(k)
                if v in seen:
                    raise CycleDetected(f"branch {u}->{v} closes a loop")
                seen.add(v)
                visit.append(v)
                nxt.append(v)
        queue = nxt
    for i in ids:
        if i not in seen:
            raise DisconnectedBus(i)
    return visit[::-1]


def _z_base(base_kv: float, base_mva: float) -> float:
    return base_kv**2 / base_mva


def _check_bases(feeder: Feeder):
    if not feeder.base_power_mva or feeder.base_power_mva <= 0:
        raise MissingBase(f"feeder {feeder.name!r} has no positive base_power_mva")
    for b in feeder.buses:
        if not b.base_kv or b.base_kv <= 0:
            raise MissingBase(f"bus {b.id!r} has no positive base_kv")


def _rescale_branches(feeder: Feeder, to_pu: bool) -> tuple[Branch, ...]:
    kv = {b.id: b.base_kv for b in feeder.buses}
    out = []
    for br in feeder.branches:
        zb = _z_base(kv[br.to_bus], feeder.base_power_mva)
        f = 1.0 / zb if to_pu else zb
        out.append(replace(br, r=br.r * f, x=br.x * f))
    return tuple(out)


def to_per_unit(feeder: Feeder) -> Feeder:
    """Return the feeder with branch impedances divided by Z_base = kV^2 / MVA.

    Already-normalised feeders are returned unchanged.
    """
    if feeder.per_unit:
        return feeder
    _check_bases(feeder)
    return replace(feeder, branches=_rescale_branches(feeder, True), per_unit=True)


def to_ohmic(feeder: Feeder) -> Feeder:
    if not feeder.per_unit:
        return feeder
    _check_bases(feeder)
    return replace(feeder, branches=_rescale_branches(feeder, False), per_unit=False)


# ---------------------------------------------------------------------------
# JSON file format


def feeder_to_dict(feeder: Feeder) -> dict:
    f = to_ohmic(feeder)
    return {
        "name": f.name,
        "base_power_mva": f.base_power_mva,
        "note": f.note,
        "buses": [
            {
                "id": b.id,
                "kind": b.kind,
                "base_kv": b.base_kv,
                "load_connection": b.load_connection,
                "nominal_kw": b.nominal_kw,
            }
            for b in f.buses
        ],
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "r_ohm": br.r, "x_ohm": br.x}
            for br in f.branches
        ],
    }


def feeder_from_dict(doc: dict) -> Feeder:
    try:
        buses = tuple(
            Bus(
                id=str(b["id"]),
                kind=b.get("kind", "load"),
                base_kv=float(b["base_kv"]),
                load_connection=bool(b.get("load_connection", False)),
                nominal_kw=float(b.get("nominal_kw", 0.0)),
            )
            for b in doc["buses"]
        )
        branches = tuple(
            Branch(str(br["from"]), str(br["to"]), float(br["r_ohm"]), float(br["x_ohm"]))
            for br in doc["branches"]
        )
        base = doc.get("base_power_mva")
    except KeyError as exc:
        raise TopologyError(f"feeder document missing field {exc}") from None
    feeder = Feeder(doc.get("name", "feeder"), base, buses, branches, note=doc.get("note", ""))
    _check_bases(feeder)
    validate_radial(feeder)
    return feeder


def dumps_feeder(feeder: Feeder) -> str:
    return json.dumps(feeder_to_dict(feeder), indent=2, sort_keys=True)


def save_feeder(feeder: Feeder, path) -> None:
    Path(path).write_text(dumps_feeder(feeder) + "\n")


def load_feeder(path) -> Feeder:
    return feeder_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Bundled synthetic feeders

# IEEE 34-bus layout: (from, to, length in kft, distributed + spot load in kW
# attached to the downstream bus). Regulators and the 24.9/4.16 kV transformer
# of the original are collapsed into plain line sections.
_IEEE34_SECTIONS = [
    ("800", "802", 2.58, 0.0),
    ("802", "806", 1.73, 55.0),
    ("806", "808", 32.23, 0.0),
    ("808", "810", 5.80, 16.0),
    ("808", "812", 37.50, 0.0),
    ("812", "814", 29.73, 0.0),
    ("814", "850", 0.01, 0.0),
    ("850", "816", 0.31, 0.0),
    ("816", "818", 1.71, 0.0),
    ("818", "820", 48.15, 34.0),
    ("820", "822", 13.74, 135.0),
    ("816", "824", 10.21, 5.0),
    ("824", "826", 3.03, 40.0),
    ("824", "828", 0.84, 4.0),
    ("828", "830", 20.44, 52.0),
    ("830", "854", 0.52, 0.0),
    ("854", "856", 23.33, 4.0),
    ("854", "852", 36.83, 0.0),
    ("852", "832", 0.01, 0.0),
    ("832", "858", 4.90, 15.0),
    ("832", "888", 0.01, 0.0),
    ("888", "890", 10.56, 450.0),
    ("858", "864", 1.62, 2.0),
    ("858", "834", 5.83, 16.0),
    ("834", "860", 2.02, 216.0),
    ("834", "842", 0.28, 0.0),
    ("842", "844", 1.35, 414.0),
    ("844", "846", 3.64, 45.0),
    ("846", "848", 0.53, 83.0),
    ("860", "836", 2.68, 40.0),
    ("836", "840", 0.86, 67.0),
    ("836", "862", 0.28, 0.0),
    ("862", "838", 4.86, 28.0),
]
# buses kept off the station candidate list (regulator / transformer nodes)
_IEEE34_NO_CONNECT = {"850", "852", "888"}


_IEEE34_TRUNK = {"802", "806", "808", "812", "814", "850", "816", "824", "828", "830",
                 "854", "852", "832", "858", "834", "860", "836", "840"}


def _ieee34_like(trunk=(0.042, 0.050), lateral=(0.080, 0.090)) -> Feeder:
    kv = 24.9
    # ohm per kft; stiffer conductors than the 1/0 ACSR of the original so the
    # unregulated feeder stays inside [0.95, 1.05] at 1.8 MW
    total = sum(s[3] for s in _IEEE34_SECTIONS)
    scale = 1800.0 / total
    loads = {to: kw * scale for _, to, _, kw in _IEEE34_SECTIONS}
    buses = [Bus("800", "slack", kv)]
    branches = []
    for frm, to, kft, _ in _IEEE34_SECTIONS:
        r, x = trunk if to in _IEEE34_TRUNK else lateral
        buses.append(Bus(to, "load", kv, to not in _IEEE34_NO_CONNECT, round(loads[to], 6)))
        branches.append(Branch(frm, to, round(kft * r, 6), round(kft * x, 6)))
    return Feeder(
        "ieee34_like",
        10.0,
        tuple(buses),
        tuple(branches),
        note="IEEE 34-bus topology, balanced equivalent, 1.8 MW peak, no regulators",
    )


def _radial_tree(prefix: str, rng, n_main: int, main_z, lat_z, root: str,
                 seg_km=(0.15, 0.35), lat_km=(0.1, 0.3)):
    """Long main line with short laterals hanging off two of every three main buses."""
    buses, branches = [], []
    prev = root
    for k in range(1, n_main + 1):
        bid = f"{prefix}m{k:02d}"
        km = round(float(rng.uniform(*seg_km)), 3)
        buses.append(bid)
        branches.append(Branch(prev, bid, round(km * main_z[0], 6), round(km * main_z[1], 6)))
        if k % 3 != 0:
            lp = bid
            for j in range(1, int(rng.integers(1, 4)) + 1):
                lid = f"{prefix}m{k:02d}l{j}"
                lkm = round(float(rng.uniform(*lat_km)), 3)
                buses.append(lid)
                branches.append(Branch(lp, lid, round(lkm * lat_z[0], 6), round(lkm * lat_z[1], 6)))
                lp = lid
        prev = bid
    return buses, branches


def _allocate(n: int, rng, total_kw: float):
    w = rng.uniform(0.5, 1.5, size=n)
    w = w / w.sum() * total_kw
    return [round(float(v), 6) for v in w]


UTILITY_PARAMS = dict(n_main=48, main_z=(0.12, 0.145), lat_z=(0.35, 0.40), seg_km=(0.15, 0.35))
TWO_FEEDER_PARAMS = dict(n_main=(30, 26), main_z=(0.17, 0.20), lat_z=(0.35, 0.40), seg_km=(0.15, 0.35))


def _utility_feeder(name: str, dedicated: bool = False, **params) -> Feeder:
    kv = 12.47
    p = {**UTILITY_PARAMS, **params}
    rng = np.random.default_rng(2500)
    ids, branches = _radial_tree("", rng, p["n_main"], p["main_z"], p["lat_z"], "sub", p["seg_km"])
    kws = _allocate(len(ids), rng, 5000.0)
    buses = [Bus("sub", "slack", kv)]
    for bid, kw in zip(ids, kws):
        buses.append(Bus(bid, "load", kv, True, 0.0 if dedicated else kw))
    note = ("scaled-down analog of a >2,500-node utility feeder "
            f"({len(buses)} buses); peak 5 MW")
    if dedicated:
        note = f"single_feeder topology with all system loads removed ({len(buses)} buses)"
    return Feeder(name, 10.0, tuple(buses), tuple(branches), note=note)


def _two_feeder(**params) -> Feeder:
    kv = 12.47
    p = {**TWO_FEEDER_PARAMS, **params}
    rng = np.random.default_rng(3500)
    buses = [Bus("sub", "slack", kv)]
    branches = []
    for prefix, n_main, kw in (("a", p["n_main"][0], 3300.0), ("b", p["n_main"][1], 2700.0)):
        ids, brs = _radial_tree(prefix, rng, n_main, p["main_z"], p["lat_z"], "sub", p["seg_km"])
        kws = _allocate(len(ids), rng, kw)
        buses += [Bus(bid, "load", kv, True, w) for bid, w in zip(ids, kws)]
        branches += brs
    return Feeder(
        "two_feeder",
        10.0,
        tuple(buses),
        tuple(branches),
        note=f"two radial feeders sharing one substation bus ({len(buses)} buses); peak 6 MW",
    )


def bundled_feeder(name: str) -> Feeder:
    """Return one of the deterministic synthetic feeders in ohmic units."""
    if name == "ieee34_like":
        return _ieee34_like()
    if name == "single_feeder":
        return _utility_feeder("single_feeder")
    if name == "two_feeder":
        return _two_feeder()
    if name == "dedicated":
        return _utility_feeder("dedicated", dedicated=True)
    raise UnknownFeeder(f"unknown feeder {name!r}; choose from {', '.join(BUNDLED_FEEDERS)}")


def resolve_feeder(spec: str) -> Feeder:
    """Bundled feeder name or path to a feeder JSON file."""
    if spec in BUNDLED_FEEDERS:
        return bundled_feeder(spec)
    p = Path(spec)
    if p.exists():
        return load_feeder(p)
    raise UnknownFeeder(f"{spec!r} is neither a bundled feeder nor a readable file")
