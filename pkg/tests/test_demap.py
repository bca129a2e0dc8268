import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssd_lab.channel import ChannelConfig, Observation, sample_channel, transmit
from ssd_lab.complexity import analytic_cost, erasure_fallback_cost
from ssd_lab.constellation import (
    SUPPORTED_ORDERS,
    UnsupportedAngleError,
    angle_for,
    build_spec,
    dvbt2_angle,
    map_bits,
    q_delay,
)
from ssd_lab.demap import (
    DegenerateChannelError,
    all_distances,
    candidates,
    coset_minima_full,
    distance,
    equalize,
    expanded_distance,
    hard_decision,
    llr_exact,
    llr_maxlog_full,
    maxlog_full_counted,
    mmse_demap,
    sphere_coset_minima,
    sphere_demap,
    sphere_demap_counted,
    window,
    window_range,
)


def lattice_spec(M):
    return build_spec(M, angle_for(M))


def random_obs(spec, n, esn0=15.0, erasure=0.0, seed=0, fading=True):
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, (n, spec.bits_per_symbol))
    z = map_bits(spec, bits).complex
    cfg = ChannelConfig(esn0, erasure_prob=erasure, fading=fading)
    obs = transmit(q_delay(z), sample_channel(cfg, n, rng), cfg.sigma2, rng)
    return bits, obs


def qpsk_case():
    spec = lattice_spec(4)
    z = spec.z[3]  # (p_i, p_q) = (1, 1)
    return spec, Observation(1.0 * z.real, 0.5 * z.imag, 1.0, 0.5, 0.5)


class TestDistance:
    def test_exact_match(self):
        spec = lattice_spec(16)
        z = map_bits(spec, [1, 0, 1, 1])
        obs = Observation(0.7 * z.z_i, 1.3 * z.z_q, 0.7, 1.3, 0.1)
        assert distance(obs, z) == pytest.approx(0.0, abs=1e-30)

    def test_axis_perturbation(self):
        spec = lattice_spec(16)
        z = map_bits(spec, [0, 0, 1, 1])
        obs = Observation(z.z_i + 0.01, z.z_q, 1.0, 1.0, 0.1)
        assert distance(obs, z) == pytest.approx(1e-4, rel=1e-9)

    def test_expansion_identity_random(self):
        rng = np.random.default_rng(11)
        theta = math.atan(1 / 4)
        for _ in range(200):
            y_i, y_q, s_i, s_q = rng.standard_normal(4)
            h_i, h_q = rng.rayleigh(size=2)
            obs = Observation(y_i, y_q, h_i, h_q, 1.0)
            z_i = s_i * math.cos(theta) - s_q * math.sin(theta)
            z_q = s_i * math.sin(theta) + s_q * math.cos(theta)
            direct = (y_i - h_i * z_i) ** 2 + (y_q - h_q * z_q) ** 2
            assert expanded_distance(obs, s_i, s_q, theta) == pytest.approx(direct, rel=1e-9)

    def test_cross_term_vanishes_for_equal_gains(self):
        # with h_i == h_q the metric separates: no s_i s_q dependence
        obs = Observation(0.3, -0.2, 0.8, 0.8, 1.0)
        theta = 0.4
        f = lambda a, b: expanded_distance(obs, a, b, theta).item()
        assert f(1, 1) - f(1, 0) - f(0, 1) + f(0, 0) == pytest.approx(0.0, abs=1e-12)

    def test_cross_term_present_for_unequal_gains(self):
        obs = Observation(0.3, -0.2, 0.8, 0.2, 1.0)
        theta = 0.4
        f = lambda a, b: expanded_distance(obs, a, b, theta).item()
        assert abs(f(1, 1) - f(1, 0) - f(0, 1) + f(0, 0)) > 1e-3

    def test_degenerate(self):
        with pytest.raises(DegenerateChannelError):
            expanded_distance(Observation(0.1, 0.1, 0.0, 0.0, 1.0), 1.0, 1.0, 0.3)


class TestFullDemappers:
    def test_qpsk_exact_oracle(self):
        spec, obs = qpsk_case()
        # brute-force log-sum-exp over the 4 points
        np.testing.assert_allclose(llr_exact(obs, spec)[0], [-2.4128000749405603, -1.319566782906642], rtol=1e-12)

    def test_qpsk_maxlog_oracle(self):
        spec, obs = qpsk_case()
        np.testing.assert_allclose(llr_maxlog_full(obs, spec)[0], [-2.6, -1.6], rtol=1e-12)

    @pytest.mark.parametrize("M", SUPPORTED_ORDERS)
    def test_noiseless_signs(self, M):
        spec = lattice_spec(M)
        bits, obs = random_obs(spec, 500, esn0=300.0)
        for demapper in (llr_exact, llr_maxlog_full):
            np.testing.assert_array_equal(hard_decision(demapper(obs, spec)), bits)

    def test_exact_tends_to_maxlog_at_low_noise(self):
        spec = lattice_spec(16)
        _, obs = random_obs(spec, 200, esn0=15.0)
        gaps = []
        for scale in (1.0, 0.1, 0.01):
            o = Observation(obs.y_i, obs.y_q, obs.h_i, obs.h_q, obs.sigma2 * scale)
            a = llr_exact(o, spec, cap=None) * o.sigma2
            b = llr_maxlog_full(o, spec, cap=None) * o.sigma2
            gaps.append(np.max(np.abs(a - b)))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-3

    def test_symmetric_observation(self):
        spec = lattice_spec(16)
        obs = Observation(0.0, 0.0, 1.0, 1.0, 0.1)
        llr = llr_maxlog_full(obs, spec)[0]
        # the MSB of each axis splits the alphabet into mirror images
        np.testing.assert_allclose(llr[:2], 0.0, atol=1e-12)

    def test_sign_agreement_in_confident_region(self):
        spec = lattice_spec(16)
        _, obs = random_obs(spec, 10**5, esn0=10.0, seed=3)
        exact = llr_exact(obs, spec)
        maxlog = llr_maxlog_full(obs, spec)
        confident = np.abs(exact) > 1
        assert np.all(np.sign(exact[confident]) == np.sign(maxlog[confident]))

    def test_scale_contract(self):
        spec = lattice_spec(64)
        _, obs = random_obs(spec, 300)
        base = llr_maxlog_full(obs, spec, cap=None)
        scaled = llr_maxlog_full(Observation(obs.y_i, obs.y_q, obs.h_i, obs.h_q, obs.sigma2 * 3), spec, cap=None)
        np.testing.assert_allclose(scaled, base / 3, rtol=1e-12)
        s_base = sphere_demap(obs, spec, cap=None)[0]
        s_scaled = sphere_demap(Observation(obs.y_i, obs.y_q, obs.h_i, obs.h_q, obs.sigma2 * 3), spec, cap=None)[0]
        np.testing.assert_allclose(s_scaled, s_base / 3, rtol=1e-12)

    def test_cap_and_finiteness_with_erasures(self):
        spec = lattice_spec(16)
        _, obs = random_obs(spec, 2000, esn0=40.0, erasure=0.3)
        for llr in (llr_exact(obs, spec), llr_maxlog_full(obs, spec), sphere_demap(obs, spec)[0], mmse_demap(obs, spec)):
            assert np.all(np.isfinite(llr))
            assert np.max(np.abs(llr)) <= 50.0

    def test_rejects_zero_noise(self):
        spec, obs = qpsk_case()
        obs.sigma2 = 0.0
        with pytest.raises(ValueError):
            llr_maxlog_full(obs, spec)


class TestEqualizeAndWindow:
    def test_noiseless_hits_grid(self):
        spec = lattice_spec(64)
        _, obs = random_obs(spec, 100, esn0=300.0)
        eq = equalize(obs, spec)
        np.testing.assert_allclose(eq.Y_i, np.round(eq.Y_i), atol=1e-6)

    def test_qpsk_example(self):
        spec = lattice_spec(4)
        z = spec.z[3]
        eq = equalize(Observation(z.real, z.imag, 1.0, 1.0, 0.1), spec)
        assert (eq.Y_i.item(), eq.Y_q.item()) == pytest.approx((2.0, 3.0), abs=1e-12)

    def test_erased_axis_flagged(self):
        eq = equalize(Observation(0.1, 0.2, 1.0, 0.0, 0.1), lattice_spec(16))
        assert bool(eq.valid_i) and not bool(eq.valid_q)

    def test_needs_lattice_angle(self):
        with pytest.raises(UnsupportedAngleError):
            equalize(Observation(0.1, 0.2, 1.0, 1.0, 0.1), build_spec(16, dvbt2_angle(16)))

    @pytest.mark.parametrize("Y, expected", [(0.7, (0, 3)), (14.5, (12, 15)), (7.2, (6, 9))])
    def test_window_examples(self, Y, expected):
        r = window_range(Y, 16, 2)
        assert (r[0], r[-1]) == expected

    @settings(max_examples=200, deadline=None)
    @given(st.sampled_from(SUPPORTED_ORDERS), st.floats(-50, 300), st.integers(1, 128))
    def test_window_size_and_bounds(self, M, Y, d):
        d = min(d, M // 2)
        r = window_range(Y, M, d)
        assert len(r) == 2 * d and r[0] >= 0 and r[-1] <= M - 1

    def test_window_rejects_bad_radius(self):
        with pytest.raises(ValueError):
            window(3.0, 16, 0)


def _grid_of_equalized(spec):
    """Y values covering every branch of the window rule on both axes."""
    M = spec.M
    values = np.concatenate([np.linspace(-3, M + 2, 4 * M + 1), np.arange(M) + 0.5, np.arange(M, dtype=float)])
    Y_i, Y_q = np.meshgrid(values, values[::3])
    return Y_i.ravel(), Y_q.ravel()


class TestSphere:
    @pytest.mark.parametrize("M", SUPPORTED_ORDERS)
    def test_candidate_completeness(self, M):
        spec = lattice_spec(M)
        Y_i, Y_q = _grid_of_equalized(spec)
        valid = np.ones(Y_i.size, dtype=bool)
        from ssd_lab.demap import EqualizedObservation

        cand = candidates(EqualizedObservation(Y_i, Y_q, valid, valid), spec)
        assert cand.points.shape == (Y_i.size, 2 * spec.U)
        bits = spec.bit_table[cand.points]
        assert np.all(bits.min(axis=1) == 0) and np.all(bits.max(axis=1) == 1)

    @pytest.mark.parametrize("M", SUPPORTED_ORDERS)
    def test_noiseless_contains_transmitted_point(self, M):
        spec = lattice_spec(M)
        bits, obs = random_obs(spec, 500, esn0=300.0)
        llr, _ = sphere_demap(obs, spec)
        np.testing.assert_array_equal(hard_decision(llr), bits)

    @pytest.mark.parametrize("M", SUPPORTED_ORDERS)
    def test_grid_metric_equals_2d_distance(self, M):
        spec = lattice_spec(M)
        _, obs = random_obs(spec, 200, seed=2)
        eq = equalize(obs, spec)
        g_i = spec.d_1d_min * obs.h_i
        g_q = spec.d_1d_min * obs.h_q
        grid = (g_i[:, None] * (eq.Y_i[:, None] - spec.t_i)) ** 2 + (g_q[:, None] * (eq.Y_q[:, None] - spec.t_q)) ** 2
        np.testing.assert_allclose(grid, all_distances(obs, spec), rtol=1e-9)

    @pytest.mark.parametrize("M", SUPPORTED_ORDERS)
    def test_sphere_minima_never_below_full(self, M):
        spec = lattice_spec(M)
        _, obs = random_obs(spec, 3000, esn0=10.0, seed=4)
        s0, s1 = sphere_coset_minima(obs, spec)
        full = coset_minima_full(obs, spec)
        assert np.all(s0 >= full[..., 0] * (1 - 1e-12))
        assert np.all(s1 >= full[..., 1] * (1 - 1e-12))
        glob_sphere = np.minimum(s0, s1)[:, 0]
        dist = all_distances(obs, spec)
        inside = (candidates(equalize(obs, spec), spec).points == dist.argmin(1)[:, None]).any(1)
        np.testing.assert_allclose(glob_sphere[inside], dist.min(1)[inside], rtol=1e-9)

    @pytest.mark.parametrize("M", [16, 64])
    def test_larger_radius_never_increases_minima(self, M):
        spec = lattice_spec(M)
        _, obs = random_obs(spec, 1000, esn0=10.0, seed=8)
        previous = None
        for d in range(spec.U // 2, M // 2 + 1):
            s0, s1 = sphere_coset_minima(obs, spec, radius=d)
            if previous is not None:
                assert np.all(s0 <= previous[0]) and np.all(s1 <= previous[1])
            previous = (s0, s1)

    @pytest.mark.parametrize("M", SUPPORTED_ORDERS)
    def test_full_range_window_equals_maxlog(self, M):
        spec = lattice_spec(M)
        _, obs = random_obs(spec, 500, seed=9)
        full = sphere_demap(obs, spec, radius=M // 2, cap=None)[0]
        np.testing.assert_allclose(full, llr_maxlog_full(obs, spec, cap=None), rtol=1e-9, atol=1e-9)

    @pytest.mark.parametrize("M", SUPPORTED_ORDERS)
    def test_counted_scalar_matches_vectorized(self, M):
        spec = lattice_spec(M)
        _, obs = random_obs(spec, 60, esn0=8.0, erasure=0.2, seed=12)
        batch, counters = sphere_demap(obs, spec, cap=None)
        total = None
        for j in range(len(obs)):
            llr, c = sphere_demap_counted(obs[j : j + 1], spec, cap=None)
            np.testing.assert_array_equal(llr, batch[j])
            total = c if total is None else total + c
        assert total == counters

    @pytest.mark.parametrize("M", SUPPORTED_ORDERS)
    def test_counters_input_independent(self, M):
        spec = lattice_spec(M)
        expected = analytic_cost(M, "sphere")
        Y = np.concatenate([np.linspace(-5, M + 5, 40), [0.0, spec.U / 2, M - spec.U / 2, M - 1.0]])
        for y_i, y_q in itertools.product(Y, Y[::5]):
            # build observations that equalize to (y_i, y_q) with random gains
            h_i, h_q = 0.3 + (y_i % 1), 1.7 - (y_q % 1)
            off = (M - 1) / 2
            obs = Observation((y_i - off) * spec.d_1d_min * h_i, (y_q - off) * spec.d_1d_min * h_q, h_i, h_q, 0.1)
            assert sphere_demap_counted(obs, spec)[1] == expected

    def test_maxlog_counted_matches_vectorized(self):
        spec = lattice_spec(16)
        _, obs = random_obs(spec, 40, seed=13)
        batch = llr_maxlog_full(obs, spec, cap=None)
        for j in range(len(obs)):
            llr, c = maxlog_full_counted(obs[j : j + 1], spec, cap=None)
            np.testing.assert_array_equal(llr, batch[j])
            assert c == analytic_cost(16, "maxlog_full")

    def test_single_axis_erasure_uses_surviving_axis(self):
        spec = lattice_spec(16)
        bits, obs = random_obs(spec, 400, esn0=60.0, seed=14)
        obs.h_q[:] = 0.0
        obs.y_q[:] = 0.0
        llr, counters = sphere_demap(obs, spec)
        np.testing.assert_array_equal(hard_decision(llr), bits)
        assert counters == erasure_fallback_cost(16) * 400
        np.testing.assert_allclose(llr, llr_maxlog_full(obs, spec), rtol=1e-9, atol=1e-9)

    def test_double_erasure_gives_zero(self):
        spec = lattice_spec(16)
        llr, counters = sphere_demap(Observation([0.1], [0.2], [0.0], [0.0], 0.1), spec)
        np.testing.assert_array_equal(llr, 0.0)
        assert counters.as_tuple() == (0, 0, 0, 0, 0)

    def test_tie_break_first_in_window_order(self):
        spec = lattice_spec(4)
        # equidistant from grid values: exact integers reached from both windows
        obs = Observation([0.0], [0.0], [1.0], [1.0], 1.0)
        llr, _ = sphere_demap_counted(obs, spec, cap=None)
        np.testing.assert_allclose(llr, llr_maxlog_full(obs, spec, cap=None)[0], atol=1e-12)

    def test_needs_lattice_angle(self):
        with pytest.raises(UnsupportedAngleError):
            sphere_demap(Observation([0.1], [0.1], [1.0], [1.0], 0.1), build_spec(16, dvbt2_angle(16)))


class TestMmse:
    def test_orthogonal_channel_recovers_bits(self):
        spec = lattice_spec(64)
        bits, obs = random_obs(spec, 500, esn0=300.0, fading=False)
        np.testing.assert_array_equal(hard_decision(mmse_demap(obs, spec)), bits)

    def test_double_erasure_zero(self):
        llr = mmse_demap(Observation([0.1], [0.2], [0.0], [0.0], 0.1), lattice_spec(16))
        np.testing.assert_array_equal(llr, 0.0)

    def test_worse_than_sphere_on_fading(self):
        spec = lattice_spec(16)
        bits, obs = random_obs(spec, 10**5, esn0=15.0, seed=21)
        ber_mmse = np.mean(hard_decision(mmse_demap(obs, spec)) != bits)
        ber_sphere = np.mean(hard_decision(sphere_demap(obs, spec)[0]) != bits)
        assert ber_mmse > ber_sphere
