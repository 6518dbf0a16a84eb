import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hdcharge.errors import CycleDetected, DisconnectedBus, MissingBase, MultipleSlack, UnknownFeeder
from hdcharge.network import (BUNDLED_FEEDERS, Branch, Bus, Feeder, bundled_feeder, dumps_feeder,
                              feeder_from_dict, load_feeder, resolve_feeder, save_feeder,
                              to_ohmic, to_per_unit, validate_radial)
from oracles import bfs_levels, chain_feeder, random_tree, two_bus


def test_two_bus_order():
    assert validate_radial(two_bus()) == ["b1", "b0"]


@pytest.mark.parametrize("name", BUNDLED_FEEDERS)
def test_sweep_order_matches_bfs(name):
    f = bundled_feeder(name)
    order = validate_radial(f)
    assert sorted(order) == sorted(f.bus_ids)
    assert order[-1] == f.slack.id
    levels = bfs_levels(f)
    depth = [levels[b] for b in order]
    assert depth == sorted(depth, reverse=True)
    topo = f.topology
    pos = {b: k for k, b in enumerate(order)}
    for i, p in enumerate(topo.parent):
        if p >= 0:
            assert pos[topo.bus_ids[i]] < pos[topo.bus_ids[p]]
            assert levels[topo.bus_ids[i]] == levels[topo.bus_ids[p]] + 1


def test_duplicate_branch_is_a_cycle():
    f = chain_feeder(3)
    loop = Feeder("loop", 10.0, f.buses, f.branches + (Branch("b1", "b2", 0.3, 0.3),))
    with pytest.raises(CycleDetected):
        validate_radial(loop)


def test_disconnected_bus_reported():
    f = chain_feeder(3)
    island = Feeder("island", 10.0, f.buses + (Bus("lost", "load", 12.47),), f.branches)
    with pytest.raises(DisconnectedBus) as err:
        validate_radial(island)
    assert err.value.bus_id == "lost"


def test_two_slacks_rejected():
    f = chain_feeder(3)
    buses = (f.buses[0], Bus("b1", "slack", 12.47), f.buses[2])
    with pytest.raises(MultipleSlack):
        validate_radial(Feeder("x", 10.0, buses, f.branches))


def test_per_unit_hand_value():
    f = Feeder("pu", 10.0, (Bus("s", "slack", 12.47), Bus("a", "load", 12.47)),
               (Branch("s", "a", 10.0, 0.0 + 1e-9),))
    br = to_per_unit(f).branches[0]
    assert br.r == pytest.approx(10 * 10 / 12.47**2, rel=1e-12)
    assert br.r == pytest.approx(0.6431, abs=5e-5)


def test_per_unit_zero_component_and_idempotence():
    f = Feeder("pu", 10.0, (Bus("s", "slack", 12.47), Bus("a", "load", 12.47)),
               (Branch("s", "a", 0.0, 3.0),))
    once = to_per_unit(f)
    assert once.branches[0].r == 0.0
    assert to_per_unit(once) == once
    assert to_ohmic(once).branches[0].x == pytest.approx(3.0)


def test_missing_base():
    f = Feeder("nobase", 0.0, (Bus("s", "slack", 12.47), Bus("a", "load", 12.47)),
               (Branch("s", "a", 1.0, 1.0),))
    with pytest.raises(MissingBase):
        to_per_unit(f)


@pytest.mark.parametrize("name,peak", [("ieee34_like", 1800.0), ("single_feeder", 5000.0),
                                       ("two_feeder", 6000.0), ("dedicated", 0.0)])
def test_bundled_peaks(name, peak):
    f = bundled_feeder(name)
    assert f.peak_load_kw == pytest.approx(peak, rel=0.01, abs=1e-9)


def test_dedicated_shares_single_topology():
    a, b = bundled_feeder("single_feeder"), bundled_feeder("dedicated")
    assert a.bus_ids == b.bus_ids
    assert a.branches == b.branches
    assert not b.load_buses
    assert len(b.eligible_buses) == len(a.eligible_buses)


def test_bundled_is_deterministic():
    assert dumps_feeder(bundled_feeder("two_feeder")) == dumps_feeder(bundled_feeder("two_feeder"))


def test_unknown_feeder():
    with pytest.raises(UnknownFeeder):
        bundled_feeder("ieee13")
    with pytest.raises(UnknownFeeder):
        resolve_feeder("no/such/file.json")


def test_json_round_trip(tmp_path):
    f = bundled_feeder("ieee34_like")
    path = tmp_path / "f.json"
    save_feeder(f, path)
    g = load_feeder(path)
    assert g.buses == f.buses and g.branches == f.branches
    assert resolve_feeder(str(path)).bus_ids == f.bus_ids
    doc = json.loads(path.read_text())
    assert {"base_power_mva", "buses", "branches"} <= set(doc)
    assert set(doc["branches"][0]) == {"from", "to", "r_ohm", "x_ohm"}


trees = st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, n - 1), min_size=n, max_size=n),
    st.lists(st.floats(0.01, 2.0), min_size=n, max_size=n),
    st.lists(st.floats(0.01, 2.0), min_size=n, max_size=n)))


@given(trees)
def test_random_trees_validate_and_round_trip(draw):
    raw, r, x = draw
    parents = [min(p, k) for k, p in enumerate(raw)]
    f = random_tree(parents, r, x)
    order = validate_radial(f)
    assert order[-1] == "n0" and len(order) == len(parents) + 1
    g = feeder_from_dict(json.loads(dumps_feeder(f)))
    assert g.buses == f.buses
    np.testing.assert_allclose([b.r for b in g.branches], r)
