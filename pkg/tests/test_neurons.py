"""Neuron dynamics: hand-simulated traces, invariants, surrogate properties."""

import numpy as np
import pytest

from spikenorm.neurons import (
    NeuronParams,
    NeuronState,
    clif_step,
    lif_step,
    relaxed_spike,
    simulate_layer,
    surrogate_grad,
)


class TestLifStep:
    def test_subthreshold_integration_then_spike(self):
        # leak 1, threshold 1, constant current 0.5: h = 0.5 then 1.0,
        # so the neuron stays silent at t=1 and fires at t=2, resetting to 0.
        p = NeuronParams(leak=1.0, v_th=1.0, v_reset=0.0)
        state = NeuronState.zeros(1)
        s1, state = lif_step(state, [0.5], p)
        assert s1[0] == 0.0
        np.testing.assert_allclose(state.v, [0.5], atol=1e-10)
        s2, state = lif_step(state, [0.5], p)
        assert s2[0] == 1.0
        np.testing.assert_allclose(state.v, [0.0], atol=1e-10)

    def test_quiescence_with_zero_input(self):
        p = NeuronParams()
        state = NeuronState.zeros(4)
        for _ in range(20):
            s, state = lif_step(state, np.zeros(4), p)
            assert not s.any()
            assert not state.v.any()

    def test_saturation_fires_every_step(self):
        p = NeuronParams(v_th=1.0, v_reset=0.0)
        state = NeuronState.zeros(3)
        for _ in range(10):
            s, state = lif_step(state, np.full(3, 50.0), p)
            np.testing.assert_array_equal(s, 1.0)
            np.testing.assert_array_equal(state.v, 0.0)

    def test_threshold_is_inclusive(self):
        p = NeuronParams(leak=0.5, v_th=1.0)
        s, _ = lif_step(NeuronState.zeros(1), [1.0], p)
        assert s[0] == 1.0

    def test_leak_only_decay(self):
        p = NeuronParams(leak=0.75, v_th=1.0)
        state = NeuronState.zeros(1)
        state.v[:] = 0.9
        for t in range(1, 12):
            _, state = lif_step(state, [0.0], p)
            np.testing.assert_allclose(state.v, [0.9 * 0.75**t], atol=1e-10)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            lif_step(NeuronState.zeros(1), [np.inf], NeuronParams())


class TestClifStep:
    def test_zero_decay_collapses_to_lif(self):
        p = NeuronParams(current_decay=0.0)
        state_c = NeuronState.zeros(2)
        state_l = NeuronState.zeros(2)
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.normal(size=2)
            sc, state_c = clif_step(state_c, x, p)
            sl, state_l = lif_step(state_l, x, p)
            np.testing.assert_array_equal(sc, sl)
            np.testing.assert_array_equal(state_c.v, state_l.v)

    def test_current_decays_geometrically(self):
        p = NeuronParams(current_decay=0.5, v_th=100.0)  # high threshold: no spikes
        state = NeuronState.zeros(1)
        state.c[:] = 1.0
        for t in range(1, 8):
            _, state = clif_step(state, [0.0], p)
            np.testing.assert_allclose(state.c, [0.5**t], atol=1e-12)

    def test_steady_state_current_is_geometric_series_limit(self):
        d = 0.6
        p = NeuronParams(current_decay=d, v_th=1e9)
        state = NeuronState.zeros(1)
        for _ in range(100):
            _, state = clif_step(state, [0.8], p)
        np.testing.assert_allclose(state.c, [0.8 / (1 - d)], atol=1e-6)


class TestSurrogate:
    def test_center_value(self):
        p = NeuronParams(surrogate_width=0.5)
        np.testing.assert_allclose(surrogate_grad(p.v_th, p), 1.0)

    def test_outside_window_is_zero(self):
        p = NeuronParams(surrogate_width=0.5)
        assert surrogate_grad(p.v_th + 1.0, p) == 0.0
        assert surrogate_grad(p.v_th - 2 * p.surrogate_width, p) == 0.0

    def test_integrates_to_one(self):
        p = NeuronParams(surrogate_width=0.37)
        w = p.surrogate_width
        h = np.linspace(p.v_th - 2 * w, p.v_th + 2 * w, 200_001)
        integral = np.trapezoid(surrogate_grad(h, p), h)
        assert abs(integral - 1.0) < 1e-6

    def test_is_derivative_of_relaxed_spike(self):
        p = NeuronParams(surrogate_width=0.4)
        rng = np.random.default_rng(1)
        # stay clear of the two kinks where the derivative is undefined
        h = rng.uniform(-2, 4, 500)
        h = h[np.abs(np.abs(h - p.v_th) - p.surrogate_width) > 1e-4]
        eps = 1e-7
        fd = (relaxed_spike(h + eps, p) - relaxed_spike(h - eps, p)) / (2 * eps)
        np.testing.assert_allclose(fd, surrogate_grad(h, p), atol=1e-6)


class TestSimulateLayer:
    def test_agrees_with_stepwise_lif(self):
        rng = np.random.default_rng(2)
        p = NeuronParams()
        currents = rng.normal(size=(6, 3, 5))
        spikes, membranes = simulate_layer(currents, p, kind="lif")
        state = NeuronState.zeros(5)
        states = [NeuronState.zeros(5) for _ in range(3)]
        for t in range(6):
            for b in range(3):
                s, states[b] = lif_step(states[b], currents[t, b], p)
                np.testing.assert_array_equal(spikes[t, b], s)

    def test_agrees_with_stepwise_clif(self):
        rng = np.random.default_rng(3)
        p = NeuronParams(current_decay=0.5)
        currents = rng.normal(size=(5, 2, 4))
        spikes, _ = simulate_layer(currents, p, kind="clif")
        states = [NeuronState.zeros(4) for _ in range(2)]
        for t in range(5):
            for b in range(2):
                s, states[b] = clif_step(states[b], currents[t, b], p)
                np.testing.assert_array_equal(spikes[t, b], s)

    def test_spike_binarity_and_reset_fuzz(self):
        rng = np.random.default_rng(4)
        p = NeuronParams(v_reset=0.0)
        total = 0
        for _ in range(20):
            currents = rng.normal(0, 2, size=(50, 10, 10))
            spikes, membranes = simulate_layer(currents, p, kind="clif")
            total += spikes.size
            assert np.isin(spikes, (0.0, 1.0)).all()
            # wherever a spike fired, the potential must have reached threshold
            assert np.all(membranes[spikes == 1.0] >= p.v_th)
            assert np.all(membranes[spikes == 0.0] < p.v_th)
        assert total == 20 * 50 * 10 * 10  # 10^5 steps of 10x10 neurons

    def test_reset_value_exact(self):
        rng = np.random.default_rng(5)
        p = NeuronParams(v_reset=-0.25)
        currents = rng.normal(0, 2, size=(8, 4, 6))
        # re-run stepwise to inspect v after spikes
        states = [NeuronState.zeros(6) for _ in range(4)]
        for b in range(4):
            st = states[b]
            st.v = st.v + 0.0
            for t in range(8):
                s, st = lif_step(st, currents[t, b], p)
                assert np.all(st.v[s == 1.0] == p.v_reset)

    def test_relaxed_outputs_graded(self):
        rng = np.random.default_rng(6)
        currents = rng.normal(size=(4, 3, 5))
        spikes, _ = simulate_layer(currents, NeuronParams(), kind="lif", relaxed=True)
        assert np.all(spikes >= 0.0) and np.all(spikes <= 1.0)
        assert np.any((spikes > 0.0) & (spikes < 1.0))


class TestParamsValidation:
    def test_bounds(self):
        with pytest.raises(ValueError):
            NeuronParams(leak=0.0)
        with pytest.raises(ValueError):
            NeuronParams(leak=1.5)
        with pytest.raises(ValueError):
            NeuronParams(current_decay=1.0)
        with pytest.raises(ValueError):
            NeuronParams(v_th=0.0, v_reset=0.0)
        with pytest.raises(ValueError):
            NeuronParams(surrogate_width=0.0)
