import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risdsca.channel import ChannelSet, channel_hash, dft_taps, dump_channels, generate_channels, load_channels
from risdsca.scenario import default_scenario, pathloss


def test_impulse_is_flat():
    np.testing.assert_allclose(dft_taps([1, 0, 0, 0], 16), np.ones(16))


def test_unit_delay():
    np.testing.assert_allclose(dft_taps([0, 1], 4), [1, -1j, -1, 1j], atol=1e-15)


def test_taps_longer_than_k_rejected():
    with pytest.raises(ValueError):
        dft_taps(np.ones(5), 4)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_parseval(L, seed):
    rng = np.random.default_rng(seed)
    taps = rng.standard_normal(L) + 1j * rng.standard_normal(L)
    h = dft_taps(taps, 16)
    assert np.sum(np.abs(h) ** 2) == pytest.approx(16 * np.sum(np.abs(taps) ** 2), rel=1e-12)


def test_shapes_and_finiteness():
    cfg = default_scenario(3, M=5)
    ch = generate_channels(cfg)
    assert ch.h_direct.shape == (3, 3, 16)
    assert ch.g_ris.shape == (3, 3, 16, 5)
    assert ch.h_bs_ris.shape == (3, 16, 5)
    for arr in (ch.h_direct, ch.g_ris, ch.h_bs_ris):
        assert np.all(np.isfinite(arr))
        assert not arr.flags.writeable


def test_energy_concentrated_in_first_taps():
    cfg = default_scenario(2, M=3, L=3)
    ch = generate_channels(cfg)
    for arr, axis in ((ch.h_direct, 2), (ch.g_ris, 2), (ch.h_bs_ris, 1)):
        energy = np.abs(np.fft.ifft(arr, axis=axis)) ** 2
        head = np.take(energy, range(3), axis=axis).sum(axis=axis)
        assert np.all(head >= (1 - 1e-10) * energy.sum(axis=axis))


def test_single_tap_is_flat_and_scaled():
    cfg = default_scenario(2, M=2, L=1)
    ch = generate_channels(cfg)
    h = ch.h_direct[0, 0]
    np.testing.assert_allclose(h, h[0])
    amp = pathloss(cfg.bs_pos[0], cfg.ue_pos[0], cfg.alpha_direct)
    # |c| sqrt(PL) with c ~ CN(0,1): the ratio must be a plausible unit-variance draw
    assert 1e-3 < abs(h[0]) / amp < 10


def test_mean_gain_equals_tap_count():
    cfg = default_scenario(2, M=0, L=4)
    amp = pathloss(cfg.bs_pos[0], cfg.ue_pos[0], cfg.alpha_direct)
    gains = [np.mean(np.abs(generate_channels(cfg, realization=r).h_direct[0, 0]) ** 2) / amp**2 for r in range(10_000)]
    assert np.mean(gains) == pytest.approx(4.0, rel=0.05)


def test_determinism_and_seed_sensitivity():
    cfg = default_scenario(2, M=4, seed=3)
    a, b = generate_channels(cfg), generate_channels(cfg)
    for x, y in zip((a.h_direct, a.g_ris, a.h_bs_ris), (b.h_direct, b.g_ris, b.h_bs_ris)):
        assert np.array_equal(x, y)
    assert not np.array_equal(a.h_direct, generate_channels(cfg, seed=4).h_direct)


def test_pairing_across_variants():
    ris = generate_channels(default_scenario(2, M=8), realization=5)
    bare = generate_channels(default_scenario(2, M=0), realization=5)
    q3 = generate_channels(default_scenario(3, M=8), realization=5)
    assert np.array_equal(ris.h_direct, bare.h_direct)
    assert np.array_equal(q3.h_direct[:2, :2], ris.h_direct)
    assert channel_hash(ris) == channel_hash(bare)
    assert channel_hash(ris) != channel_hash(generate_channels(default_scenario(2, M=0), realization=6))


def test_cascade_is_elementwise_product():
    ch = generate_channels(default_scenario(2, M=3))
    np.testing.assert_array_equal(ch.cascade(), ch.g_ris * ch.h_bs_ris[:, None])


def test_without_ris():
    ch = generate_channels(default_scenario(2, M=3)).without_ris()
    assert ch.M == 0 and ch.g_ris.shape == (2, 2, 16, 0)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        ChannelSet(np.zeros((2, 2, 4), complex), np.zeros((2, 2, 4, 3), complex), np.zeros((2, 4, 2), complex))


def test_dump_load_round_trip(tmp_path):
    ch = generate_channels(default_scenario(2, M=2))
    path = tmp_path / "ch.json"
    dump_channels(ch, path)
    back = load_channels(path)
    assert np.array_equal(back.h_direct, ch.h_direct)
    assert np.array_equal(back.g_ris, ch.g_ris)
    assert np.array_equal(back.h_bs_ris, ch.h_bs_ris)
