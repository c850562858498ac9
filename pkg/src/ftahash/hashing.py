"""First-Take-All hashing of whole sequences.

A video ``X`` (``n`` frames, ``d`` dims) is projected on ``m`` Gaussian
directions ("latent postures"), giving an ``m x n`` score matrix. For each
posture the first-act time is found (thresholded peak, or first threshold
crossing). Each of ``p`` random groups of ``k`` postures then emits the
1-based position of the posture that acts first, or 0 if none of them acts.

Frame indices are 1-based throughout; ``NEVER`` marks postures that never
reach the threshold and compares greater than every real frame index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import VideoSequence

NEVER = np.iinfo(np.int64).max
_SCORE_BLOCK = 256


class Mode(str, enum.Enum):
    PEAK = "peak"
    THRESHOLD = "threshold"
    BOW = "bow"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        value = str(value).lower()
        if value == "thresholding":
            return cls.THRESHOLD
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown mode {value!r}; expected peak, threshold or bow") from None


def bits_per_symbol(k: int) -> int:
    """ceil(log2(k + 1)), the width needed for symbols 0..k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return int(k).bit_length()


@dataclass(frozen=True, eq=False)
class ProjectionBank:
    m: int
    d: int
    sigma: float
    seed: int
    vectors: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, ProjectionBank):
            return NotImplemented
        return (self.m, self.d, self.sigma, self.seed) == (other.m, other.d, other.sigma, other.seed) and np.array_equal(
            self.vectors, other.vectors
        )

    __hash__ = None


def make_bank(seed: int, m: int, d: int, sigma: float = 1.0) -> ProjectionBank:
    """Draw ``m`` projections from N(0, sigma^2 I).

    Generator: numpy PCG64 seeded with ``seed``; standard normals are drawn
    row-major into an ``(m, d)`` array and multiplied by ``sigma``.
    """
    if m < 1 or d < 1:
        raise ValueError(f"bank sizes must be positive, got m={m}, d={d}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    rng = np.random.Generator(np.random.PCG64(seed))
    vectors = rng.standard_normal((m, d)) * sigma
    vectors.setflags(write=False)
    return ProjectionBank(int(m), int(d), float(sigma), int(seed), vectors)


def score(bank: ProjectionBank, v: VideoSequence | np.ndarray) -> np.ndarray:
    """Confidence scores ``S[l, i] = <w_l, x_i>`` as an ``(m, n)`` array.

    Every entry is an independent dot product with a fixed summation order, so
    equal frames get bit-identical scores wherever they sit in any sequence.
    A BLAS matmul does not guarantee that, and the invariance properties of the
    hash depend on it.
    """
    frames = v.frames if isinstance(v, VideoSequence) else np.asarray(v, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != bank.d:
        raise ValueError(f"sequence dimension {frames.shape[-1]} does not match bank dimension {bank.d}")
    out = np.empty((bank.m, frames.shape[0]))
    # frame blocks keep the working set in cache so cost stays linear in n
    for start in range(0, frames.shape[0], _SCORE_BLOCK):
        stop = start + _SCORE_BLOCK
        out[:, start:stop] = np.einsum("ld,nd->ln", bank.vectors, frames[start:stop])
    return out


def first_act_peak(S: np.ndarray, theta: float) -> np.ndarray:
    """Per row, the frame of the highest score that is >= theta.

    Ties go to the earliest frame; rows that never reach theta get NEVER.
    """
    S = np.atleast_2d(np.asarray(S))
    if S.shape[1] == 0:
        return np.full(S.shape[0], NEVER, dtype=np.int64)
    # the max over passing frames is the row max whenever anything passes
    peak = np.argmax(S, axis=1)
    passed = S[np.arange(S.shape[0]), peak] >= theta
    return np.where(passed, peak + 1, NEVER).astype(np.int64)


def first_act_threshold(S: np.ndarray, theta: float) -> np.ndarray:
    """Per row, the first frame whose score is >= theta, else NEVER."""
    S = np.atleast_2d(np.asarray(S))
    if S.shape[1] == 0:
        return np.full(S.shape[0], NEVER, dtype=np.int64)
    hit = S >= theta
    first = np.argmax(hit, axis=1)
    return np.where(hit.any(axis=1), first + 1, NEVER).astype(np.int64)


def first_act(S: np.ndarray, theta: float, mode) -> np.ndarray:
    mode = Mode.parse(mode)
    if mode is Mode.PEAK:
        return first_act_peak(S, theta)
    if mode is Mode.THRESHOLD:
        return first_act_threshold(S, theta)
    raise ValueError("bow mode has no first-act table")


def sample_groups(selection_seed: int, m: int, k: int, p: int) -> np.ndarray:
    """``p`` groups of ``k`` distinct posture indices in ``[0, m)``.

    Each group is drawn uniformly without replacement, independently of the
    others (a posture may appear in several groups).
    """
    if k < 1 or p < 1:
        raise ValueError(f"k and p must be positive, got k={k}, p={p}")
    if k > m:
        raise ValueError(f"group size k={k} exceeds projection count m={m}")
    rng = np.random.Generator(np.random.PCG64(selection_seed))
    keys = rng.random((p, m))
    return np.argsort(keys, axis=1, kind="stable")[:, :k].astype(np.int64)


@dataclass(frozen=True, eq=False)
class HashSpec:
    """Everything needed to hash a sequence: bank, group layout, threshold and mode.

    ``groups`` is a ``(p, k)`` array of 0-based posture indices. In bow mode
    ``k`` is 1 and each group names the single posture tested for presence.
    """

    bank: ProjectionBank
    k: int
    p: int
    theta: float
    mode: Mode
    groups: np.ndarray
    selection_seed: int

    def __post_init__(self):
        mode = Mode.parse(self.mode)
        object.__setattr__(self, "mode", mode)
        groups = np.array(self.groups, dtype=np.int64)
        if groups.shape != (self.p, self.k):
            raise ValueError(f"groups shape {groups.shape} != (p, k) = ({self.p}, {self.k})")
        if mode is Mode.BOW:
            if self.k != 1:
                raise ValueError("bow mode uses singleton groups (k = 1)")
        elif self.k < 2:
            raise ValueError("FTA modes need k >= 2")
        if groups.size and (groups.min() < 0 or groups.max() >= self.bank.m):
            raise ValueError(f"group indices must lie in [0, {self.bank.m})")
        if self.k > 1 and np.any(np.diff(np.sort(groups, axis=1), axis=1) == 0):
            raise ValueError("posture indices within a group must be distinct")
        groups.setflags(write=False)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def m(self) -> int:
        return self.bank.m

    @property
    def d(self) -> int:
        return self.bank.d

    def with_theta(self, theta: float) -> "HashSpec":
        return HashSpec(self.bank, self.k, self.p, theta, self.mode, self.groups, self.selection_seed)

    def __eq__(self, other):
        if not isinstance(other, HashSpec):
            return NotImplemented
        return (
            self.bank == other.bank
            and (self.k, self.p, self.theta, self.mode, self.selection_seed)
            == (other.k, other.p, other.theta, other.mode, other.selection_seed)
            and np.array_equal(self.groups, other.groups)
        )

    __hash__ = None


def make_hash_spec(
    bank: ProjectionBank,
    k: int,
    p: int,
    theta: float,
    mode="peak",
    selection_seed: int = 0,
) -> HashSpec:
    mode = Mode.parse(mode)
    if mode is Mode.BOW:
        k = 1
    groups = sample_groups(selection_seed, bank.m, k, p)
    return HashSpec(bank, int(k), int(p), float(theta), mode, groups, int(selection_seed))


@dataclass(frozen=True, eq=False)
class FtaCode:
    """``p`` symbols in ``{0, ..., k}``."""

    symbols: np.ndarray
    k: int

    def __post_init__(self):
        sym = np.array(self.symbols, dtype=np.uint8 if self.k < 256 else np.uint16)
        if sym.ndim != 1:
            raise ValueError("symbols must be one-dimensional")
        if sym.size and int(sym.max()) > self.k:
            raise ValueError(f"symbol {int(sym.max())} out of range for k={self.k}")
        sym.setflags(write=False)
        object.__setattr__(self, "symbols", sym)

    @property
    def p(self) -> int:
        return self.symbols.shape[0]

    @property
    def nbits(self) -> int:
        return self.p * bits_per_symbol(self.k)

    def __eq__(self, other):
        if not isinstance(other, FtaCode):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.symbols, other.symbols)

    __hash__ = None

    def __repr__(self):
        head = " ".join(map(str, self.symbols[:16].tolist()))
        more = " ..." if self.p > 16 else ""
        return f"FtaCode(k={self.k}, p={self.p}, [{head}{more}])"


def encode_symbols(groups: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Vectorised argmin over each group's first-act times.

    Ties go to the smallest within-group position; all-NEVER groups give 0.
    """
    t = times[groups]
    winner = np.argmin(t, axis=1)
    return np.where(t.min(axis=1) == NEVER, 0, winner + 1)


def encode(spec: HashSpec, table: np.ndarray) -> FtaCode:
    table = np.asarray(table, dtype=np.int64)
    if table.shape[0] < spec.m:
        raise ValueError(f"first-act table has {table.shape[0]} entries, spec needs {spec.m}")
    return FtaCode(encode_symbols(spec.groups, table), spec.k)


def encode_bow(spec: HashSpec, S: np.ndarray) -> FtaCode:
    """Presence bits: 1 iff the selected posture's best score reaches theta."""
    if spec.mode is not Mode.BOW:
        raise ValueError("encode_bow requires a bow-mode spec")
    S = np.atleast_2d(S)
    if S.shape[1] == 0:
        present = np.zeros(spec.m, dtype=bool)
    else:
        present = S.max(axis=1) >= spec.theta
    return FtaCode(present[spec.groups[:, 0]].astype(np.uint8), 1)


def hash_scores(spec: HashSpec, S: np.ndarray, theta: Optional[float] = None) -> FtaCode:
    """Hash a precomputed score matrix (``theta`` overrides the hash spec's)."""
    if theta is not None and theta != spec.theta:
        spec = spec.with_theta(theta)
    if spec.mode is Mode.BOW:
        return encode_bow(spec, S)
    return encode(spec, first_act(S, spec.theta, spec.mode))


def hash_sequence(spec: HashSpec, v: VideoSequence) -> FtaCode:
    """Score, compute the first-act table once, and encode all ``p`` groups."""
    return hash_scores(spec, score(spec.bank, v))


def pack(code: FtaCode) -> np.ndarray:
    """Bit array (uint8 0/1) of fixed-width big-endian fields, one per symbol."""
    width = bits_per_symbol(code.k)
    shifts = np.arange(width - 1, -1, -1)
    bits = (code.symbols[:, None].astype(np.int64) >> shifts) & 1
    return bits.reshape(-1).astype(np.uint8)


def unpack(bits, k: int, p: int) -> FtaCode:
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    width = bits_per_symbol(k)
    if bits.shape[0] != p * width:
        raise ValueError(f"expected {p * width} bits for k={k}, p={p}, got {bits.shape[0]}")
    if bits.size and bits.max() > 1:
        raise ValueError("bit array must contain only 0 and 1")
    weights = 1 << np.arange(width - 1, -1, -1)
    symbols = bits.reshape(p, width).astype(np.int64) @ weights
    return FtaCode(symbols, k)


def packed_nbytes(k: int, p: int) -> int:
    return (p * bits_per_symbol(k) + 7) // 8


def pack_bytes(code: FtaCode) -> bytes:
    """``pack`` then MSB-first byte packing, zero-padded to a whole byte."""
    return np.packbits(pack(code)).tobytes()


def unpack_bytes(data: bytes, k: int, p: int) -> FtaCode:
    if len(data) != packed_nbytes(k, p):
        raise ValueError(f"expected {packed_nbytes(k, p)} bytes for k={k}, p={p}, got {len(data)}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    return unpack(bits[: p * bits_per_symbol(k)], k, p)
