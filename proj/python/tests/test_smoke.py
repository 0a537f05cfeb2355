import json
import math

import numpy as np
import pytest

import beable_mech as bm


@pytest.fixture(scope="module")
def example():
    sys = bm.seven_level_example()
    field, transfer = bm.optimize(sys, 0, 6)
    return sys, field, transfer


def test_example_system():
    sys = bm.seven_level_example()
    assert sys.count == 7
    assert len(sys.edges) == 8
    assert sys.shortest_jumps(0, 6) == 4
    assert np.allclose(sys.mu, sys.mu.T)


def test_bad_system_raises():
    with pytest.raises(bm.ConfigError):
        bm.LevelSystem([0.0, 1.0], np.array([[0.0, 1.0], [2.0, 0.0]]))


def test_optimized_transfer(example):
    sys, field, transfer = example
    assert transfer >= 0.90
    assert field.steps == 4000
    pops = bm.populations(sys, field)
    assert pops.shape == (4001, 7)
    assert np.allclose(pops.sum(axis=1), 1.0, atol=1e-8)
    assert pops[-1, 6] == pytest.approx(transfer, abs=1e-10)


def test_ensemble_tracks_populations(example):
    sys, field, _ = example
    ens = bm.run_ensemble(sys, field, 2000, seed=3)
    assert len(ens) == 2000
    pops = bm.populations(sys, field)
    occ = bm.occupancy(ens, 4000)
    assert np.max(np.abs(np.array(occ) - pops[-1])) < 5 / math.sqrt(2000)
    rows = bm.pathway_table(ens)
    assert sum(r[1] for r in rows) == 2000
    for sites, *_ in rows:
        assert all(sys.coupled(a, b) for a, b in zip(sites, sites[1:]))
    moments = bm.jump_moments(ens, 2, 6)
    assert moments[0] == 1.0 and moments[2] >= moments[1] ** 2


def test_same_seed_same_ensemble(example):
    sys, field, _ = example
    a = bm.run_ensemble(sys, field, 200, seed=9, workers=1)
    b = bm.run_ensemble(sys, field, 200, seed=9, workers=3)
    key = lambda e: [[(j.step, j.source, j.target) for j in t.events] for t in e.trajectories]
    assert key(a) == key(b)


def test_fit_recovers_model():
    grid = bm.modulation_grid(0.01, 1.6, 0.01)
    moments, a, amp = [4.8, 24.0, 125.0, 680.0], 5.5, 0.9
    pops = [bm.model_population(m, moments, a, amp) for m in grid]
    ds = bm.dataset(grid, pops)
    fit = bm.lm_fit(ds, 0.3, 1.2, a_lower_bound=4)
    assert fit["points"] == 91
    assert fit["a"] == pytest.approx(a, rel=1e-6)
    assert fit["moments"] == pytest.approx(moments, rel=1e-6)


def test_mechanism_report(example):
    sys, field, _ = example
    grid = bm.modulation_grid(0.01, 1.6, 0.01)
    ds = bm.sweep(sys, field, 0, 6, grid, sigma=0.0)
    j_min, _ = bm.estimate_jmin(ds)
    assert j_min == 4
    assert len(ds.population) == 160


def test_field_round_trip(tmp_path, example):
    _, field, _ = example
    path = tmp_path / "field.csv"
    bm.write_field(path, field)
    back = bm.read_field(path)
    assert back.values() == field.values()
    with pytest.raises(bm.ConfigError):
        bm.read_field(tmp_path / "missing.csv")
