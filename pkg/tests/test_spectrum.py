import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmlvamp.spectrum import (
    BandLayout,
    BandLayoutError,
    PriorSpec,
    band_power,
    dft,
    idft,
    prior_from_scenario,
    sample_signal,
    trial_rng,
)

LAYOUT = BandLayout(512, ((0, 100), (300, 400)))


def random_complex(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_idft_of_delta_is_constant():
    e0 = np.zeros(16, dtype=complex)
    e0[0] = 1.0
    out = idft(e0)
    assert np.allclose(out, np.full(16, 1.0 / np.sqrt(16)), atol=1e-14)


def test_round_trip_and_parseval():
    rng = np.random.default_rng(0)
    x = random_complex(rng, 512)
    assert np.max(np.abs(dft(idft(x)) - x)) < 1e-12
    assert abs(np.linalg.norm(dft(x)) - np.linalg.norm(x)) < 1e-12 * np.linalg.norm(x)


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        dft(np.zeros(8, dtype=complex), n=16)
    with pytest.raises(ValueError):
        idft(np.zeros(8, dtype=complex), n=16)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=257), st.integers(min_value=0, max_value=2**31))
def test_unitarity_any_length(n, seed):
    rng = np.random.default_rng(seed)
    x = random_complex(rng, n)
    assert np.max(np.abs(idft(dft(x)) - x)) < 1e-10
    assert np.isclose(np.linalg.norm(dft(x)), np.linalg.norm(x), rtol=1e-10)


def test_overlapping_bands_rejected():
    with pytest.raises(BandLayoutError):
        BandLayout(512, ((0, 100), (50, 150)))
    with pytest.raises(BandLayoutError):
        BandLayout(512, ((0, 100), (300, 600)))


def test_prior_off_band_support_rejected():
    mu = np.zeros(512, dtype=complex)
    S = np.zeros(512)
    S[200] = 1.0
    with pytest.raises(ValueError):
        PriorSpec(LAYOUT, mu, S)


def test_band_power_values():
    # invert the definition ratio = S_l |B_l| / (N sigma_a2)
    assert band_power(10.0, 512, 1.0, 100) == pytest.approx(51.2)
    assert band_power(1000.0, 512, 1.0, 100) == pytest.approx(5120.0)
    assert band_power(0.0, 512, 1.0, 100) == 0.0


def test_prior_from_scenario_unknown():
    rng = np.random.default_rng(1)
    prior = prior_from_scenario(LAYOUT, 10.0, 30.0, 1.0, False, rng)
    assert np.allclose(prior.S[:100], 51.2)
    assert np.allclose(prior.S[300:400], 5120.0)
    assert np.all(prior.S[100:300] == 0)
    assert np.all(prior.mu == 0)


def test_prior_from_scenario_known():
    rng = np.random.default_rng(1)
    prior = prior_from_scenario(LAYOUT, 10.0, 30.0, 1.0, True, rng)
    # desired band stays unknown; interferer band becomes a point mass
    assert np.allclose(prior.S[:100], 51.2)
    assert np.all(prior.S[300:400] == 0)
    assert np.all(prior.mu[:100] == 0)
    assert np.all(prior.mu[300:400] != 0)
    # realized interferer power matches its variance on average
    assert np.mean(np.abs(prior.mu[300:400]) ** 2) == pytest.approx(5120.0, rel=0.5)


def test_empty_band_rejected():
    with pytest.raises(BandLayoutError):
        BandLayout(512, ((0, 0), (300, 400)))


def test_sample_signal_degenerate_variance():
    layout = BandLayout(16, ((0, 4), (8, 12)))
    mu = np.zeros(16, dtype=complex)
    mu[8:12] = 1.0 + 2.0j
    prior = PriorSpec(layout, mu, np.zeros(16))
    sig = sample_signal(prior, np.random.default_rng(2))
    assert np.array_equal(sig.x, mu)
    assert np.allclose(sig.r, idft(mu))


def test_sample_signal_moments():
    layout = BandLayout(16, ((0, 4),))
    S = np.zeros(16)
    S[:4] = 51.2
    mu = np.zeros(16, dtype=complex)
    mu[0] = 3.0 - 1.0j
    prior = PriorSpec(layout, mu, S)
    rng = np.random.default_rng(3)
    draws = np.array([sample_signal(prior, rng).x for _ in range(100_000)])
    assert np.all(draws[:, 4:] == 0)
    var = np.var(draws[:, 1])
    assert abs(var - 51.2) / 51.2 < 0.02
    # mean within 3 standard errors
    se = np.sqrt(51.2 / draws.shape[0])
    assert abs(draws[:, 0].mean() - mu[0]) < 3 * se * np.sqrt(2)
    # circularity: each real component carries half the variance
    for part in (draws[:, 2].real, draws[:, 2].imag):
        half = 51.2 / 2
        se_var = half * np.sqrt(2.0 / draws.shape[0])
        assert abs(np.var(part) - half) < 3 * se_var


def test_trial_rng_reproducible_and_distinct():
    a = trial_rng(7, 3).standard_normal(8)
    b = trial_rng(7, 3).standard_normal(8)
    c = trial_rng(7, 4).standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
