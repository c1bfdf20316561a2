from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snnscale import model
from snnscale.connectivity import DenseMatrix, gen_fixed_outdegree, to_sparse
from snnscale.engine import (
    Raster, SpecError, avg_spike, detect_nans, init_state, propagate, results_equal, run,
)
from snnscale.model import (
    IZHIKEVICH, POISSON, IzhikevichParams, NetworkSpec, NeuronPopulation, PoissonParams, Uniform,
    build_izhikevich_net, build_mbody_net,
)

G = {"PN-KC": 1.0, "PN-LHI": 1.0, "LHI-KC": 1.0, "KC-DN": 1.0}


def single_neuron(i_ext, noise=0.0, duration=1000.0, dt=1.0):
    params = IzhikevichParams((0.02,), (0.2,), (-65.0,), (8.0,), (noise,), (i_ext,))
    pop = NeuronPopulation("rs", 1, IZHIKEVICH, params, 0)
    return NetworkSpec((pop,), (), dt, duration, 0)


def scalar_reference(i_ext, steps, dt=1.0):
    """Independent scalar float32 integration of the two-half-step scheme."""
    f = np.float32
    a, b, c, d = f(0.02), f(0.2), f(-65.0), f(8.0)
    v = f(-65.0)
    u = b * v
    current = f(i_ext)
    half = f(0.5 * dt)
    spikes = []
    for step in range(steps):
        v = v + half * (f(0.04) * v * v + f(5.0) * v + f(140.0) - u + current)
        v = v + half * (f(0.04) * v * v + f(5.0) * v + f(140.0) - u + current)
        u = u + f(dt) * a * (b * v - u)
        if v >= f(30.0):
            spikes.append(step)
            v = c
            u = u + d
    return spikes, v


def test_single_neuron_matches_scalar_reference():
    res = run(single_neuron(10.0))
    ref_spikes, _ = scalar_reference(10.0, 1000)
    assert res.raster.step.tolist() == ref_spikes
    assert len(ref_spikes) > 0


def test_single_neuron_rests_at_stable_equilibrium():
    spec = single_neuron(0.0)
    state = init_state(spec)
    res = run(spec, state=state)
    assert len(res.raster) == 0
    # 0.04 v^2 + 4.8 v + 140 = 0 has roots -70 (stable) and -50
    roots = np.roots([0.04, 4.8, 140.0])
    assert min(roots) == pytest.approx(-70.0)
    assert state.pops[0].vars["v"][0] == pytest.approx(-70.0, abs=0.05)


def test_overflow_produces_nans():
    res = run(build_izhikevich_net(1000, 100, 0.8, 1e6, 0, duration_ms=100))
    assert res.sum_nans > 0


def test_propagate_hand_case():
    m = DenseMatrix(np.array([[0, 0.5, 0], [0.2, 0, 0.3]]))
    for mat in (m, to_sparse(m)):
        acc = np.zeros(3)
        propagate(mat, [0, 1], acc)
        assert acc.tolist() == [0.2, 0.5, 0.3]
        before = acc.copy()
        propagate(mat, [], acc)
        assert (acc == before).all()


def test_propagate_index_errors():
    m = DenseMatrix(np.ones((2, 3)))
    with pytest.raises(IndexError):
        propagate(m, [2], np.zeros(3))
    with pytest.raises(IndexError):
        propagate(to_sparse(m), [0], np.zeros(4))


def python_loop(weights, spikes, acc):
    for i in sorted(spikes):
        for j in range(weights.shape[1]):
            if weights[i, j] != 0:
                acc[j] += weights[i, j]
    return acc


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_dense_sparse_bit_identical_200_cases(dtype):
    for seed in range(200):
        gen = np.random.default_rng(seed)
        n_pre, n_post = gen.integers(1, 60, size=2)
        k = int(gen.integers(1, n_post + 1))
        d = gen_fixed_outdegree(n_pre, n_post, k, Uniform(0, 1), 1 if seed % 2 else -1, gen).astype(dtype)
        spikes = np.flatnonzero(gen.random(n_pre) < 0.3)
        init = gen.normal(size=n_post).astype(dtype)
        a = propagate(d, spikes, init.copy())
        b = propagate(to_sparse(d), spikes, init.copy())
        assert a.tobytes() == b.tobytes()
        assert a.tobytes() == python_loop(d.weights, spikes, init.copy()).tobytes()


def test_detect_nans_monotone():
    spec = build_izhikevich_net(20, 5, 0.8, 1.0, 0)
    state = init_state(spec)
    assert detect_nans(state) == 0
    state.pops[0].vars["v"][3] = np.inf
    assert detect_nans(state) == 1
    state.pops[0].vars["v"][3] = -65.0
    assert detect_nans(state) == 0
    assert state.pops[0].nan_flag[3] and state.sum_nans == 1


def test_injected_nan_flag_persists_through_run():
    spec = build_izhikevich_net(100, 100, 0.8, 1.0, 3, duration_ms=200, storage=model.DENSE)
    state = init_state(spec)
    state.pops[0].vars["v"][0] = np.nan
    res = run(spec, state=state, record_nan_history=True)
    assert (res.nan_history >= 1).all()
    assert np.all(np.diff(res.nan_history) >= 0)
    # a NaN membrane never crosses threshold, so spike-carried synapses keep it local
    assert res.sum_nans == 1
    assert not np.any(res.raster.neuron == 0)


def test_overflow_contagion_spreads_within_bounded_steps():
    res = run(build_izhikevich_net(1000, 100, 0.8, 1e6, 0, duration_ms=60), record_nan_history=True)
    h = res.nan_history
    first = int(np.flatnonzero(h)[0])
    assert h[first] < 1000
    # measured: every neuron is flagged 6 steps after the first NaN appears
    assert h[first + 10] == 1000
    assert np.all(np.diff(h) >= 0)


def test_avg_spike_examples():
    r = Raster(("p",), {"p": 2}, np.array([1, 5, 9, 3]), np.zeros(4, dtype=int), np.array([0, 0, 0, 1]))
    assert avg_spike(r, "p", 1000.0) == 2.0
    empty = Raster(("p",), {"p": 2}, np.zeros(0, int), np.zeros(0, int), np.zeros(0, int))
    assert avg_spike(empty, "p", 1000.0) == 0.0
    with pytest.raises(KeyError):
        avg_spike(r, "q", 1000.0)
    with pytest.raises(ValueError):
        avg_spike(r, "p", 0.0)


def test_poisson_rate_statistics():
    pop = NeuronPopulation("pn", 1000, POISSON, PoissonParams(50.0), 123)
    res = run(NetworkSpec((pop,), (), 1.0, 10_000.0, 0))
    # binomial: mean 50 Hz, sd of the population mean ~ sqrt(50 / 10 s / 1000 neurons) = 0.07 Hz
    assert res.avg_spike["pn"] == pytest.approx(50.0, rel=0.05)


def test_storage_equivalence_izhikevich():
    spec = build_izhikevich_net(300, 60, 0.8, 3.0, 5, duration_ms=300)
    a, b = run(spec, model.DENSE), run(spec, model.SPARSE)
    assert len(a.raster) > 0
    assert a.raster == b.raster and results_equal(a, b)


def test_storage_equivalence_mbody():
    spec = build_mbody_net(200, 20, 300, 30, {**G, "PN-KC": 4.0}, 2, duration_ms=200)
    a, b = run(spec, model.DENSE), run(spec, model.SPARSE)
    assert a.raster.count("KC") > 0
    assert results_equal(a, b)


@settings(max_examples=15)
@given(n=st.integers(5, 80), frac=st.floats(0.1, 0.9), g=st.floats(0.1, 20.0), seed=st.integers(0, 2**32))
def test_storage_equivalence_property(n, frac, g, seed):
    k = max(1, n // 3)
    spec = build_izhikevich_net(n, k, frac, g, seed, duration_ms=100)
    assert results_equal(run(spec, model.DENSE), run(spec, model.SPARSE))


def test_determinism():
    spec = build_mbody_net(50, 5, 100, 10, {**G, "PN-KC": 5.0}, 8, duration_ms=100)
    assert results_equal(run(spec), run(spec))


def test_avg_spike_consistent_with_raster():
    spec = build_izhikevich_net(200, 50, 0.8, 2.0, 1, duration_ms=250)
    res = run(spec)
    for name in res.raster.populations:
        assert avg_spike(res.raster, name, spec.duration_ms) == res.avg_spike[name]
        assert res.avg_spike[name] == res.raster.count(name) / (spec.population(name).size * 0.25)


def test_nan_count_monotone_within_run():
    res = run(build_izhikevich_net(200, 50, 0.8, 1e4, 0, duration_ms=100), record_nan_history=True)
    assert np.all(np.diff(res.nan_history) >= 0)
    assert res.nan_history[-1] == res.sum_nans <= 200


@pytest.mark.parametrize("spec", [
    build_izhikevich_net(200, 50, 0.8, 0.0, 4, duration_ms=200),
    build_mbody_net(50, 5, 100, 10, {g: 0.0 for g in G}, 4, duration_ms=200),
])
def test_zero_gscale_equals_input_only_baseline(spec):
    baseline = replace(spec, synapses=())
    assert run(spec).avg_spike == run(baseline).avg_spike


def test_run_rejects_invalid_spec():
    with pytest.raises(SpecError, match="dt"):
        run(replace(build_izhikevich_net(10, 5), dt=0.0))


def test_run_step_count():
    spec = replace(single_neuron(10.0), duration_ms=10.5)
    assert run(spec).n_steps == 11


def test_raster_csv(tmp_path):
    res = run(build_izhikevich_net(50, 10, 0.8, 2.0, 0, duration_ms=50))
    with open(tmp_path / "r.csv", "w") as fh:
        res.raster.write_csv(fh)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "step,population,neuron"
    assert len(lines) == len(res.raster) + 1


def test_gscale_changes_weights_not_connectivity():
    from snnscale.engine import build_matrix
    a = build_izhikevich_net(100, 30, 0.8, 1.0, 9)
    b = build_izhikevich_net(100, 30, 0.8, 4.0, 9)
    for sa, sb in zip(a.synapses, b.synapses):
        ma = build_matrix(a, sa, model.SPARSE, np.float64)
        mb = build_matrix(b, sb, model.SPARSE, np.float64)
        assert np.array_equal(ma.post_ind, mb.post_ind)
        assert np.allclose(mb.g_values, 4.0 * ma.g_values)
