import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftahash.core import SynthSpec, VideoSequence, make_synthetic, transform_rate, transform_scale, transform_translate
from ftahash.hashing import (
    NEVER,
    FtaCode,
    HashSpec,
    Mode,
    ProjectionBank,
    bits_per_symbol,
    encode,
    encode_bow,
    first_act_peak,
    first_act_threshold,
    hash_scores,
    hash_sequence,
    make_bank,
    make_hash_spec,
    pack,
    pack_bytes,
    packed_nbytes,
    sample_groups,
    score,
    unpack,
    unpack_bytes,
)


def scan_peak(row, theta):
    best, at = None, None
    for i, s in enumerate(row, start=1):
        if s >= theta and (best is None or s > best):
            best, at = s, i
    return NEVER if at is None else at


def scan_threshold(row, theta):
    for i, s in enumerate(row, start=1):
        if s >= theta:
            return i
    return NEVER


def fixed_spec(groups, m=4, theta=0.5, mode="peak"):
    groups = np.asarray(groups)
    bank = make_bank(0, m, 2)
    return HashSpec(bank, groups.shape[1], groups.shape[0], theta, mode, groups, 0)


# -- projection bank -------------------------------------------------------

def test_bank_deterministic():
    assert make_bank(7, 5, 3) == make_bank(7, 5, 3)
    assert not np.array_equal(make_bank(7, 5, 3).vectors, make_bank(8, 5, 3).vectors)


def test_bank_sigma_scales():
    assert np.array_equal(make_bank(3, 4, 6, sigma=2.0).vectors, 2.0 * make_bank(3, 4, 6, sigma=1.0).vectors)


def test_bank_mean_statistics():
    sigma = 1.5
    w = make_bank(11, 1000, 100, sigma).vectors
    assert abs(w.mean()) < 4 * sigma / np.sqrt(w.size)
    assert w.std() == pytest.approx(sigma, rel=0.02)


def test_bank_rejects_invalid():
    for args in ((0, 0, 3), (0, 3, 0), (0, 3, 3, 0.0)):
        with pytest.raises(ValueError):
            make_bank(*args)


# -- scores ----------------------------------------------------------------

def test_score_identity_bank():
    bank = ProjectionBank(2, 2, 1.0, 0, np.eye(2))
    frames = np.array([[1.0, 2.0], [3.0, 4.0], [0.0, 0.0]])
    S = score(bank, VideoSequence(frames))
    assert np.array_equal(S, frames.T)
    assert not S[:, 2].any()


def test_score_linear_and_checks_dimension():
    rng = np.random.default_rng(0)
    bank = make_bank(1, 7, 5)
    v = VideoSequence(rng.standard_normal((9, 5)))
    assert np.allclose(score(bank, transform_scale(v, 3.0)), 3.0 * score(bank, v))
    with pytest.raises(ValueError):
        score(bank, VideoSequence(np.zeros((3, 4))))


def test_score_bit_stable_for_repeated_frames():
    rng = np.random.default_rng(2)
    bank = make_bank(4, 300, 190)
    v = VideoSequence(rng.standard_normal((301, 190)))
    S = score(bank, v)
    assert np.array_equal(score(bank, transform_rate(v, 3)), np.repeat(S, 3, axis=1))
    assert np.array_equal(score(bank, transform_translate(v, 17, 5))[:, 17:-5], S)


# -- first-act times ---------------------------------------------------------

@pytest.mark.parametrize(
    "row, theta",
    [([0.1, 0.9, 0.4, 0.2], 0.5), ([0.3, 0.2], 0.5), ([0.7, 0.9, 0.9], 0.5), ([0.6, 0.2, 1.0], 0.5)],
)
def test_first_act_against_scan(row, theta):
    S = np.array([row])
    assert first_act_peak(S, theta)[0] == scan_peak(row, theta)
    assert first_act_threshold(S, theta)[0] == scan_threshold(row, theta)


def test_first_act_frozen_values():
    # values computed with scan_peak / scan_threshold above
    assert first_act_peak(np.array([[0.1, 0.9, 0.4, 0.2]]), 0.5).tolist() == [2]
    assert first_act_peak(np.array([[0.3, 0.2]]), 0.5).tolist() == [NEVER]
    assert first_act_peak(np.array([[0.7, 0.9, 0.9]]), 0.5).tolist() == [2]
    assert first_act_threshold(np.array([[0.1, 0.9, 0.4]]), 0.5).tolist() == [2]
    assert first_act_threshold(np.array([[0.6, 0.2, 1.0]]), 0.5).tolist() == [1]
    assert first_act_peak(np.array([[0.6, 0.2, 1.0]]), 0.5).tolist() == [3]
    assert first_act_threshold(np.array([[0.1, 0.2, 0.3]]), 0.5).tolist() == [NEVER]


def test_threshold_is_inclusive():
    assert first_act_threshold(np.array([[0.2, 0.5]]), 0.5).tolist() == [2]
    assert first_act_peak(np.array([[0.5, 0.2]]), 0.5).tolist() == [1]


@settings(max_examples=200, deadline=None)
@given(
    rows=st.lists(st.lists(st.integers(-3, 3), min_size=1, max_size=12), min_size=1, max_size=5).filter(
        lambda r: len({len(x) for x in r}) == 1
    ),
    theta=st.integers(-3, 4),
)
def test_first_act_matches_scan_with_ties(rows, theta):
    S = np.array(rows, dtype=float)
    assert first_act_peak(S, theta).tolist() == [scan_peak(r, theta) for r in rows]
    assert first_act_threshold(S, theta).tolist() == [scan_threshold(r, theta) for r in rows]


# -- encoding ----------------------------------------------------------------

def test_encode_earliest_wins():
    spec = fixed_spec([[0, 1]])
    assert encode(spec, np.array([2, 1, NEVER, NEVER])).symbols.tolist() == [2]


def test_encode_all_never_is_zero():
    spec = fixed_spec([[0, 1, 2]])
    assert encode(spec, np.full(4, NEVER)).symbols.tolist() == [0]


def test_encode_never_loses():
    spec = fixed_spec([[0, 1]])
    assert encode(spec, np.array([NEVER, 4, 1, 1])).symbols.tolist() == [2]


def test_encode_tie_goes_to_first_position():
    spec = fixed_spec([[2, 0], [0, 2]])
    assert encode(spec, np.array([3, NEVER, 3, NEVER])).symbols.tolist() == [1, 1]


def test_encode_bow():
    bank = make_bank(0, 2, 2)
    spec = HashSpec(bank, 1, 2, 0.5, "bow", [[0], [1]], 0)
    S = np.array([[0.1, 0.9, 0.2], [0.3, 0.1, 0.2]])
    assert encode_bow(spec, S).symbols.tolist() == [1, 0]
    perm = S[:, [2, 0, 1]]
    assert encode_bow(spec, perm) == encode_bow(spec, S)


def test_bow_code_ignores_frame_order():
    rng = np.random.default_rng(5)
    v = VideoSequence(rng.standard_normal((20, 6)))
    spec = make_hash_spec(make_bank(1, 40, 6), 1, 40, 0.8, "bow", 2)
    shuffled = v.with_frames(v.frames[rng.permutation(20)])
    assert hash_sequence(spec, shuffled) == hash_sequence(spec, v)


def test_spec_validation():
    bank = make_bank(0, 4, 2)
    with pytest.raises(ValueError, match="distinct"):
        HashSpec(bank, 2, 1, 0.5, "peak", [[1, 1]], 0)
    with pytest.raises(ValueError):
        HashSpec(bank, 2, 1, 0.5, "peak", [[1, 4]], 0)
    with pytest.raises(ValueError):
        HashSpec(bank, 2, 1, 0.5, "bow", [[1, 2]], 0)
    with pytest.raises(ValueError):
        make_hash_spec(bank, 5, 3, 0.5, "peak", 0)
    assert make_hash_spec(bank, 2, 3, 0.5, "bow", 0).k == 1
    assert Mode.parse("thresholding") is Mode.THRESHOLD


def test_group_sampling():
    g = sample_groups(9, 10, 3, 500)
    assert g.shape == (500, 3)
    assert all(len(set(row)) == 3 for row in g.tolist())
    assert np.array_equal(g, sample_groups(9, 10, 3, 500))
    # every posture gets picked roughly equally often
    counts = np.bincount(g.ravel(), minlength=10)
    assert counts.min() > 100


# -- whole-video hashing -------------------------------------------------------

def test_hash_is_pure():
    v = make_synthetic(SynthSpec(2, 8, 3, [0, 1, 2], 4, 0.1))
    spec = make_hash_spec(make_bank(1, 30, 8), 2, 100, 0.3, "peak", 4)
    assert hash_sequence(spec, v) == hash_sequence(spec, v)


def test_padding_does_not_change_code():
    v = make_synthetic(SynthSpec(2, 8, 3, [0, 1, 2], 4, 0.1))
    for mode in ("peak", "threshold"):
        spec = make_hash_spec(make_bank(1, 30, 8), 2, 100, 0.3, mode, 4)
        assert hash_sequence(spec, transform_translate(v, 7, 3)) == hash_sequence(spec, v)


def test_reversed_order_changes_code():
    fwd = make_synthetic(SynthSpec(1, 8, 2, [0, 1], 5))
    rev = make_synthetic(SynthSpec(1, 8, 2, [1, 0], 5))
    bank = make_bank(3, 20, 8)
    S = score(bank, fwd)
    # brute force: postures whose score passes theta on both prototypes, peaking on different ones
    peak_on_first = S[:, 0] > S[:, 5]
    passes = S.max(axis=1) >= 0.1
    a = np.flatnonzero(peak_on_first & passes)
    b = np.flatnonzero(~peak_on_first & passes)
    assert a.size and b.size
    spec = HashSpec(bank, 2, 1, 0.1, "peak", [[a[0], b[0]]], 0)
    assert hash_sequence(spec, fwd).symbols.tolist() == [1]
    assert hash_sequence(spec, rev).symbols.tolist() == [2]


def test_hash_scores_theta_override():
    rng = np.random.default_rng(0)
    S = rng.standard_normal((10, 15))
    spec = make_hash_spec(make_bank(0, 10, 2), 2, 20, 0.0, "threshold", 1)
    assert hash_scores(spec, S, theta=0.7) == hash_scores(spec.with_theta(0.7), S)


# -- packing -----------------------------------------------------------------

def test_pack_fields():
    code = FtaCode([0, 1, 2], 2)
    assert pack(code).tolist() == [0, 0, 0, 1, 1, 0]


@pytest.mark.parametrize("k, width", [(1, 1), (2, 2), (3, 2), (4, 3), (7, 3), (8, 4)])
def test_bits_per_symbol(k, width):
    assert bits_per_symbol(k) == width == int(np.ceil(np.log2(k + 1)))


def test_pack_size_for_k2_p1000():
    code = FtaCode(np.random.default_rng(0).integers(0, 3, 1000), 2)
    assert pack(code).size == 2000
    assert len(pack_bytes(code)) == 250 == packed_nbytes(2, 1000)


def test_unpack_rejects_bad_length():
    with pytest.raises(ValueError):
        unpack(np.zeros(5, dtype=np.uint8), 2, 3)
    with pytest.raises(ValueError):
        unpack_bytes(b"\x00", 2, 8)


@settings(max_examples=100, deadline=None)
@given(k=st.integers(1, 20), data=st.data())
def test_pack_roundtrip(k, data):
    symbols = data.draw(st.lists(st.integers(0, k), min_size=1, max_size=64))
    code = FtaCode(symbols, k)
    assert unpack(pack(code), k, len(symbols)) == code
    assert unpack_bytes(pack_bytes(code), k, len(symbols)) == code
    assert pack(code).size == code.nbits


def test_code_rejects_out_of_range():
    with pytest.raises(ValueError):
        FtaCode([0, 3], 2)
