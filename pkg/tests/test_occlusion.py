import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from firegap.datagen import ENV_CHANNELS, FIRE_CHANNEL, FIRE_TIME_CHANNEL
from firegap.gradcore import ConfigError, DimensionError
from firegap.occlusion import (
    MASK_STATE,
    CorruptionSpec,
    apply_mask,
    blockwise_mask,
    corrupt,
    make_masks,
    masked_fraction,
    pixelwise_mask,
)


def _fire_map(seed, p=0.1, shape=(64, 64)):
    return (np.random.default_rng(seed).random(shape) < p).astype(np.uint8)


def _stack(seed, t=5):
    r = np.random.default_rng(seed)
    x = r.standard_normal((t, 42, 16, 16)).astype(np.float32)
    x[:, FIRE_CHANNEL] = r.random((t, 16, 16)) < 0.2
    x[:, FIRE_TIME_CHANNEL] *= x[:, FIRE_CHANNEL]
    return x


# -- masked_fraction -------------------------------------------------------

def test_masked_fraction_examples():
    f = np.zeros((4, 4))
    assert masked_fraction(f, np.zeros((4, 4))) == 0.0
    f[0, :4] = 1
    assert masked_fraction(f, np.ones((4, 4))) == 0.0
    m = np.ones((4, 4))
    m[0, 0] = 0
    m[3, 3] = 0  # non-fire cell: does not count
    assert masked_fraction(f, m) == 0.25


# -- pixel-wise --------------------------------------------------------------

def test_pixelwise_eta_zero_is_identity(rng):
    assert np.all(pixelwise_mask(_fire_map(0), 0.0, rng) == 1)


def test_pixelwise_high_eta_masks_nearly_all(rng):
    f = _fire_map(1)
    m = pixelwise_mask(f, 0.999999, rng)
    assert masked_fraction(f, m) == 1.0


def test_pixelwise_binomial_count():
    f = np.ones((100, 100), dtype=np.uint8)
    n, eta = f.size, 0.3
    sd = np.sqrt(n * eta * (1 - eta))
    for seed in range(5):
        m = pixelwise_mask(f, eta, np.random.default_rng(seed))
        assert abs((m == 0).sum() - n * eta) < 3 * sd


def test_pixelwise_fire_scope_keeps_background(rng):
    f = _fire_map(2)
    m = pixelwise_mask(f, 0.7, rng, scope="fire")
    assert np.all(m[f == 0] == 1)


def test_pixelwise_grid_scope_masks_background_too(rng):
    f = _fire_map(3, p=0.05)
    m = pixelwise_mask(f, 0.5, rng, scope="grid")
    frac = (m[f == 0] == 0).mean()
    assert 0.45 < frac < 0.55


def test_pixelwise_masks_are_spatially_uncorrelated():
    f = np.ones((128, 128), dtype=np.uint8)
    m = pixelwise_mask(f, 0.4, np.random.default_rng(5)).astype(float)
    a, b = m[:, :-1].ravel(), m[:, 1:].ravel()
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.03


@pytest.mark.parametrize("eta", [-0.1, 1.0, 1.5])
def test_eta_out_of_range(eta, rng):
    with pytest.raises(ConfigError):
        pixelwise_mask(_fire_map(0), eta, rng)
    with pytest.raises(ConfigError):
        CorruptionSpec("blockwise", eta)


# -- block-wise --------------------------------------------------------------

def test_blockwise_eta_zero_is_identity(rng):
    m, frac, rects = blockwise_mask(_fire_map(0), 0.0, rng)
    assert np.all(m == 1) and frac == 0.0 and rects == []


def test_blockwise_single_pixel_one_block(rng):
    f = np.zeros((64, 64), dtype=np.uint8)
    f[30, 30] = 1
    m, frac, rects = blockwise_mask(f, 0.5, rng)
    assert len(rects) == 1 and frac == 1.0 and m[30, 30] == 0


def test_blockwise_no_fire(rng):
    m, frac, rects = blockwise_mask(np.zeros((64, 64)), 0.5, rng)
    assert np.all(m == 1) and frac == 0.0
    m, frac, rects = blockwise_mask(np.zeros((64, 64)), 0.5, rng, cover_empty=True)
    assert (m == 0).mean() >= 0.5 and frac == 0.0


def _rect_cover(shape, rects):
    cover = np.zeros(shape, dtype=bool)
    for y0, x0, y1, x1 in rects:
        cover[y0:y1, x0:x1] = True
    return cover


@given(seed=st.integers(0, 2 ** 16), eta=st.sampled_from([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]))
def test_blockwise_reaches_eta_with_rectangles(seed, eta):
    f = np.zeros((64, 64), dtype=np.uint8)
    r = np.random.default_rng(seed)
    f[r.integers(0, 64, 500), r.integers(0, 64, 500)] = 1
    m, frac, rects = blockwise_mask(f, eta, np.random.default_rng(seed + 1))
    assert frac >= eta
    assert frac == masked_fraction(f, m)
    # every missing cell lies in a recorded rectangle and vice versa
    np.testing.assert_array_equal(_rect_cover(f.shape, rects), m == 0)
    for y0, x0, y1, x1 in rects:
        assert 1 <= y1 - y0 <= 16 and 1 <= x1 - x0 <= 16
        assert f[y0:y1, x0:x1].any()  # placed over fire


def test_blockwise_sizes_in_range():
    f = np.zeros((200, 200), dtype=np.uint8)
    f[50:150, 50:150] = 1
    _, _, rects = blockwise_mask(f, 0.8, np.random.default_rng(0))
    sizes = [(y1 - y0) for y0, x0, y1, x1 in rects if 0 < y0 and y1 < 200]
    assert min(sizes) >= 4 and max(sizes) <= 16


# -- spec / stacks / apply ---------------------------------------------------

def test_spec_validation():
    with pytest.raises(ConfigError):
        CorruptionSpec("cloudy", 0.1)
    with pytest.raises(ConfigError):
        CorruptionSpec("blockwise", 0.1, block_min=2)
    with pytest.raises(ConfigError):
        CorruptionSpec("blockwise", 0.1, block_min=8, block_max=20)
    with pytest.raises(ConfigError):
        CorruptionSpec("pixelwise", 0.1, scope="sky")


@pytest.mark.parametrize("mech", ["pixelwise", "blockwise"])
def test_same_seed_same_masks(mech):
    x = _stack(0)
    spec = CorruptionSpec(mech, 0.4, seed=11)
    a = make_masks(x[:, FIRE_CHANNEL], spec, key=(3, 7))
    b = make_masks(x[:, FIRE_CHANNEL], spec, key=(3, 7))
    np.testing.assert_array_equal(a.masks, b.masks)
    c = make_masks(x[:, FIRE_CHANNEL], spec, key=(3, 8))
    assert not np.array_equal(a.masks, c.masks)


@pytest.mark.parametrize("mech", ["pixelwise", "blockwise"])
def test_masks_nest_in_eta(mech):
    x = _stack(1)
    prev = None
    for eta in (0.1, 0.3, 0.5, 0.8):
        m = make_masks(x[:, FIRE_CHANNEL], CorruptionSpec(mech, eta, seed=2), key=(1,)).masks
        if prev is not None:
            assert np.all(m <= prev)
        prev = m


def test_apply_mask_identity_and_full():
    x = _stack(2)
    same = apply_mask(x, np.ones((5, 16, 16)))
    np.testing.assert_array_equal(same.inputs, x)
    gone = apply_mask(x, np.zeros((5, 16, 16)))
    assert np.all(gone.fire == -1)
    assert np.all(gone.inputs[:, FIRE_TIME_CHANNEL] == 0)


def test_apply_mask_shape_mismatch():
    with pytest.raises(DimensionError):
        apply_mask(_stack(0), np.ones((4, 16, 16)))


def test_apply_mask_single_day():
    x = _stack(0)[0]
    m = np.ones((16, 16))
    m[0, 0] = 0
    out = apply_mask(x, m)
    assert out.inputs.shape == x.shape and out.inputs[FIRE_CHANNEL, 0, 0] == -1


@given(seed=st.integers(0, 2 ** 16), mech=st.sampled_from(["pixelwise", "blockwise"]),
       eta=st.floats(0.0, 0.95), scope=st.sampled_from(["grid", "fire"]))
def test_corruption_invariants(seed, mech, eta, scope):
    x = _stack(seed)
    c = corrupt(x, CorruptionSpec(mech, eta, seed=seed, scope=scope), key=(seed,))
    observed = c.masks.masks == 1
    clean_fire = x[:, FIRE_CHANNEL]
    # observed cells carry the clean value; missing cells the sentinel
    np.testing.assert_array_equal(c.fire[observed], clean_fire[observed])
    assert np.all(c.fire[~observed] == -1)
    # environment untouched, bit for bit
    assert c.inputs[:, list(ENV_CHANNELS)].tobytes() == x[:, list(ENV_CHANNELS)].tobytes()
    # Hadamard view is F * M
    np.testing.assert_array_equal(c.hadamard()[:, FIRE_CHANNEL], clean_fire * c.masks.masks)
    cat = c.categorical()
    assert set(np.unique(cat)) <= {0, 1, MASK_STATE}
    np.testing.assert_array_equal(cat == MASK_STATE, ~observed)
    for d in range(5):
        assert c.masks.achieved[d] == masked_fraction(clean_fire[d], c.masks.masks[d])
        if mech == "blockwise" and clean_fire[d].any():
            assert c.masks.achieved[d] >= eta


def test_spec_serialises():
    s = CorruptionSpec("blockwise", 0.3, seed=4)
    assert CorruptionSpec(**s.to_json()) == s
    assert s.with_eta(0.5).eta == 0.5 and s.with_eta(0.5).mechanism == "blockwise"
