"""Smoke test for the netevo Python bindings.

Build the extension first:

    cargo build --release -p netevo-py --features extension-module
    cp target/release/libnetevo_py.so python/netevo_py.so

then run `python3 python/smoke_test.py` (or `pytest python/`).
"""

import csv
import io
import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import netevo_py as ne  # noqa: E402

DELAY = 1.3 * math.hypot(3000.0, 1500.0)


def test_ring_design_and_insertion():
    pool = ne.gen_pool(12, seed=3)
    ring = ne.ring_design(pool[:10], seed=1)
    assert ring.node_count == 10 and ring.link_count == 10
    assert all(ring.degree(p[0]) == 2 for p in pool[:10])
    grown, purchased = ne.ring_insert(ring, pool[10:])
    assert grown.link_count == 12
    assert purchased > 0
    back = ne.Network.from_json(grown.to_json())
    assert back.links() == grown.links()


def test_mesh_design_and_evolution():
    pool = ne.gen_pool(9, seed=5)
    opt = ne.mesh_design(pool[:8], DELAY, seed=2)
    assert opt.is_acceptable(DELAY)
    evo, c_mod, inventory = ne.mesh_evolve(opt, pool[8:], DELAY, policy="inventory", seed=2)
    assert evo.node_count == 9 and evo.is_acceptable(DELAY)
    assert c_mod >= 0
    assert all(isinstance(a, int) and isinstance(b, int) for a, b in inventory)
    opt9 = ne.mesh_design(pool, DELAY, seed=2)
    m = ne.compare(opt9, evo, c_mod=c_mod)
    assert m["c_opt"] == opt9.cost and m["c_evo"] == evo.cost
    assert 0 <= m["t"] <= 1


def test_infeasible_bound_raises():
    pool = ne.gen_pool(5, seed=1)
    try:
        ne.mesh_design(pool, 1.0)
    except ne.NoAcceptableNetworkError:
        return
    raise AssertionError("expected NoAcceptableNetworkError")


def test_experiment_is_deterministic():
    cfg = json.dumps({"topology": "ring", "model": "random", "max_size": 15, "repetitions": 2, "seed": 4})
    a, prov = ne.run_experiment("single-node", cfg)
    b, _ = ne.run_experiment("single-node", cfg)
    assert a == b
    rows = list(csv.DictReader(io.StringIO(a)))
    assert len(rows) == 2 * 12  # one row per added node
    assert json.loads(prov)["master_seed"] == 4


def test_statistics():
    mk = ne.mann_kendall([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
    assert mk["trend"] == "increasing" and mk["p_increasing"] < 0.05
    a, b, r2 = ne.power_law_fit([1.0, 2.0, 4.0, 8.0], [3.0, 6.0, 12.0, 24.0])
    assert abs(a - 3.0) < 1e-9 and abs(b - 1.0) < 1e-9 and r2 > 0.999


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"{name}: ok")
