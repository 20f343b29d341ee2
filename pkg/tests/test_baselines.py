import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linespec.baselines import (
    HankelConfig,
    cadzow,
    crb,
    dehankel,
    fisher_information,
    hankel,
    prony,
    root_music,
    single_tone_crb,
)
from linespec.localization import ConditioningError
from linespec.signal import DomainError, SpikeSignal, add_noise, make_rng, random_separated_taus, synthesize


def wrapped(a, b):
    return np.abs(np.mod(np.asarray(a) - np.asarray(b) + 0.5, 1.0) - 0.5)


def two_spikes(n=101, sep=1.5, t0=0.2):
    return SpikeSignal([t0, t0 + sep / n], [1.0, -1.0])


def sigma_at(x, snr_db):
    return np.sqrt(np.linalg.norm(x) ** 2 / (len(x) * 10 ** (snr_db / 10)))


class TestHankel:
    def test_shape_and_entries(self):
        z = np.arange(6.0)
        H = hankel(z, 3)
        assert H.shape == (3, 4)
        assert H[1, 2] == 3
        np.testing.assert_array_equal(dehankel(H), z)

    def test_check(self):
        with pytest.raises(DomainError):
            HankelConfig(pencil=3).check(10, 3)
        assert HankelConfig().check(10, 2) == 5


class TestProny:
    @pytest.mark.parametrize("seed", range(5))
    def test_noiseless_exact(self, seed):
        rng = make_rng(seed)
        taus = random_separated_taus(3, 1 / 20, rng)
        s = SpikeSignal(taus, rng.uniform(0.5, 2, 3) * np.exp(2j * np.pi * rng.uniform(size=3)))
        est = prony(synthesize(s, 20), 3)
        assert est.r == 3
        assert np.max(wrapped(est.taus, taus)) <= 1e-8
        np.testing.assert_allclose(est.amps, s.amps, atol=1e-7)

    def test_zero_order(self):
        assert prony(np.ones(5), 0).r == 0

    def test_order_too_large(self):
        with pytest.raises(DomainError):
            prony(np.ones(6), 4)


class TestRootMusic:
    @pytest.mark.parametrize("seed", range(5))
    def test_noiseless_exact(self, seed):
        rng = make_rng(seed)
        taus = random_separated_taus(4, 1 / 32, rng)
        s = SpikeSignal(taus, np.exp(2j * np.pi * rng.uniform(size=4)))
        est = root_music(synthesize(s, 32), 4)
        assert np.max(wrapped(est.taus, taus)) <= 1e-8

    def test_close_pair(self):
        s = two_spikes()
        est = root_music(synthesize(s, 101), 2)
        assert np.max(wrapped(est.taus, s.taus)) <= 1e-8

    def test_pencil_must_exceed_order(self):
        with pytest.raises(DomainError):
            root_music(np.ones(20), 3, HankelConfig(pencil=3))

    @given(st.integers(0, 2**31), st.floats(0.0, 1.0, exclude_max=True))
    @settings(max_examples=20, deadline=None)
    def test_phase_rotation_invariant(self, seed, phi):
        """A global phase leaves the locations unchanged; a modulation shifts them."""
        rng = make_rng(seed)
        n = 24
        s = SpikeSignal(random_separated_taus(2, 2 / n, rng), [1.0, 0.7j])
        z = add_noise(synthesize(s, n), 0.05, seed).data
        base = root_music(z, 2)
        rot = root_music(np.exp(2j * np.pi * phi) * z, 2)
        assert np.max(wrapped(rot.taus, base.taus)) <= 1e-8
        shifted = root_music(z * np.exp(2j * np.pi * 0.25 * np.arange(n)), 2)
        assert np.max(wrapped(np.sort(np.mod(base.taus + 0.25, 1.0)), shifted.taus)) <= 1e-8


class TestCadzow:
    def test_fixed_point(self):
        x = synthesize(two_spikes(), 101)
        np.testing.assert_allclose(cadzow(x, 2), x, atol=1e-10)

    def test_zero_iterations(self):
        z = make_rng(0).standard_normal(12) + 0j
        np.testing.assert_array_equal(cadzow(z, 2, iters=0), z)

    def test_low_rank_at_moderate_snr(self):
        n = 101
        x = synthesize(two_spikes(), n)
        for seed in range(5):
            z = add_noise(x, sigma_at(x, 10.0), seed)
            sv = np.linalg.svd(hankel(cadzow(z, 2, iters=20), n // 2), compute_uv=False)
            assert sv[2] <= 1e-8 * sv[0]

    def test_monte_carlo_improvement(self):
        n, sigma = 101, 0.1
        x = synthesize(SpikeSignal([0.2, 0.6], [1.0, 1j]), n)
        better = 0
        for trial in range(200):
            z = add_noise(x, sigma, trial).data
            better += np.linalg.norm(cadzow(z, 2) - x) < np.linalg.norm(z - x)
        assert better >= 180


class TestCrb:
    @pytest.mark.parametrize("n", [8, 33, 101])
    def test_single_tone_closed_form(self, n):
        rep = crb(SpikeSignal([0.3], [2.0 - 1j]), 0.1, n)
        assert rep.tau[0] == pytest.approx(single_tone_crb(2.0 - 1j, 0.1, n), rel=1e-9)

    def test_sigma_scaling(self):
        s = two_spikes()
        a, b = crb(s, 0.1, 101), crb(s, 0.2, 101)
        np.testing.assert_allclose(b.tau, 4 * a.tau, rtol=1e-10)
        np.testing.assert_allclose(b.amp_real, 4 * a.amp_real, rtol=1e-10)

    def test_far_apart_decouple(self):
        n = 64
        rep = crb(SpikeSignal([0.1, 0.6], [1.0, 1.0]), 0.1, n)
        np.testing.assert_allclose(rep.tau, single_tone_crb(1.0, 0.1, n), rtol=1e-2)

    def test_decreasing_in_n(self):
        s = SpikeSignal([0.1, 0.4], [1.0, 0.5j])
        vals = [crb(s, 0.1, n).tau.max() for n in (16, 32, 64, 128)]
        assert np.all(np.diff(vals) < 0)

    @given(st.integers(0, 2**31), st.integers(1, 4))
    @settings(max_examples=25, deadline=None)
    def test_fisher_psd(self, seed, r):
        rng = make_rng(seed)
        s = SpikeSignal(np.sort(rng.uniform(size=r)), rng.standard_normal(r) + 1j * rng.standard_normal(r))
        F = fisher_information(s, 0.3, 10)
        np.testing.assert_allclose(F, F.T, atol=1e-9 * np.abs(F).max())
        assert np.linalg.eigvalsh(F).min() >= -1e-9 * np.abs(F).max()

    def test_singular(self):
        with pytest.raises(ConditioningError):
            crb(SpikeSignal([0.2, 0.2 + 1e-14], [1.0, 1.0]), 0.1, 16)
        with pytest.raises(ConditioningError):
            crb(SpikeSignal([0.2, 0.5], [1.0, 0.0]), 0.1, 16)
        with pytest.raises(DomainError):
            crb(SpikeSignal([0.2], [1.0]), 0.0, 16)
