"""Sequence containers, synthetic posture sequences and temporal transforms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

TRAIN = "train"
TEST = "test"

# prototypes closer than this (in |cos|) are redrawn
_MAX_PROTOTYPE_COS = 0.99


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class VideoSequence:
    """An ordered run of ``n`` frames, each a ``d``-dimensional feature vector.

    ``frames`` is an ``(n, d)`` float array; row ``i`` is frame ``i + 1``.
    ``label`` indexes the owning dataset's ``class_names`` (or is ``None``).
    """

    frames: np.ndarray
    label: Optional[int] = None
    source_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim == 1:
            frames = frames[:, None]
        if frames.ndim != 2:
            raise ValueError(f"frames must be 2-D (n, d), got shape {frames.shape}")
        if frames.shape[0] < 1:
            raise ValueError("a sequence needs at least one frame")
        if frames.shape[1] < 1:
            raise ValueError("frame dimension must be positive")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frames contain NaN or infinite values")
        object.__setattr__(self, "frames", _frozen_array(frames))

    @property
    def n(self) -> int:
        return self.frames.shape[0]

    @property
    def d(self) -> int:
        return self.frames.shape[1]

    def __len__(self) -> int:
        return self.n

    def with_frames(self, frames) -> "VideoSequence":
        return VideoSequence(frames, label=self.label, source_id=self.source_id)

    def __eq__(self, other):
        if not isinstance(other, VideoSequence):
            return NotImplemented
        return (
            self.label == other.label
            and self.source_id == other.source_id
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    """A labelled collection of equal-dimension sequences with split tags."""

    sequences: tuple
    class_names: tuple
    split_tags: tuple
    subjects: tuple = ()

    def __post_init__(self):
        seqs = tuple(self.sequences)
        tags = tuple(self.split_tags)
        subjects = tuple(self.subjects)
        object.__setattr__(self, "sequences", seqs)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "split_tags", tags)
        object.__setattr__(self, "subjects", subjects)
        if len(tags) != len(seqs):
            raise ValueError("split_tags must have one entry per sequence")
        if subjects and len(subjects) != len(seqs):
            raise ValueError("subjects must be empty or one entry per sequence")
        for i, tag in enumerate(tags):
            if tag not in (TRAIN, TEST):
                raise ValueError(f"sequence {i}: split tag must be 'train' or 'test', got {tag!r}")
        dims = {s.d for s in seqs}
        if len(dims) > 1:
            raise ValueError(f"sequences have mixed dimensions {sorted(dims)}")
        for i, s in enumerate(seqs):
            if s.label is not None and not 0 <= s.label < len(self.class_names):
                raise ValueError(f"sequence {i}: label {s.label} does not index class_names")

    @property
    def d(self) -> int:
        if not self.sequences:
            raise ValueError("empty dataset has no dimension")
        return self.sequences[0].d

    def __len__(self):
        return len(self.sequences)

    def labels(self) -> np.ndarray:
        return np.array([-1 if s.label is None else s.label for s in self.sequences], dtype=np.int64)

    def split(self, tag: str) -> "Dataset":
        idx = [i for i, t in enumerate(self.split_tags) if t == tag]
        return self.subset(idx)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = list(indices)
        return Dataset(
            sequences=tuple(self.sequences[i] for i in indices),
            class_names=self.class_names,
            split_tags=tuple(self.split_tags[i] for i in indices),
            subjects=tuple(self.subjects[i] for i in indices) if self.subjects else (),
        )

    def map(self, fn) -> "Dataset":
        """Apply ``fn`` to every sequence, keeping labels, tags and subjects."""
        return Dataset(tuple(fn(s) for s in self.sequences), self.class_names, self.split_tags, self.subjects)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic posture sequence.

    ``seed`` fixes the posture prototypes; ``instance`` selects an independent
    noise stream so that many noisy samples can share one set of prototypes.
    """

    seed: int
    d: int
    num_postures: int
    posture_order: tuple
    frames_per_posture: int
    noise_sigma: float = 0.0
    instance: int = 0

    def __post_init__(self):
        object.__setattr__(self, "posture_order", tuple(int(i) for i in self.posture_order))
        if self.num_postures < 1:
            raise ValueError("num_postures must be positive")
        if not self.posture_order:
            raise ValueError("posture_order must not be empty")
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.frames_per_posture < 1:
            raise ValueError("frames_per_posture must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        bad = [i for i in self.posture_order if not 0 <= i < self.num_postures]
        if bad:
            raise ValueError(f"posture_order entries {bad} out of range for {self.num_postures} postures")


def posture_prototypes(seed: int, num_postures: int, d: int) -> np.ndarray:
    """Unit-norm prototype directions, pairwise non-collinear, one per row."""
    if num_postures < 1:
        raise ValueError("num_postures must be positive")
    rng = np.random.default_rng([seed, 0])
    protos = []
    attempts = 0
    while len(protos) < num_postures:
        v = rng.standard_normal(d)
        norm = np.linalg.norm(v)
        attempts += 1
        if attempts > 1000 * num_postures:
            raise ValueError(f"cannot draw {num_postures} non-collinear prototypes in dimension {d}")
        if norm < 1e-12:
            continue
        v = v / norm
        if all(abs(float(v @ p)) <= _MAX_PROTOTYPE_COS for p in protos):
            protos.append(v)
    return np.stack(protos)


def make_synthetic(spec: SynthSpec, label: Optional[int] = None, source_id: str = "") -> VideoSequence:
    protos = posture_prototypes(spec.seed, spec.num_postures, spec.d)
    frames = np.repeat(protos[list(spec.posture_order)], spec.frames_per_posture, axis=0)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng([spec.seed, 1, spec.instance])
        frames = frames + spec.noise_sigma * rng.standard_normal(frames.shape)
    return VideoSequence(frames, label=label, source_id=source_id or f"synth-{spec.seed}-{spec.instance}")


def transform_translate(v: VideoSequence, pad_front: int, pad_back: int) -> VideoSequence:
    """Surround ``v`` with all-zero frames."""
    if pad_front < 0 or pad_back < 0:
        raise ValueError("pad counts must be nonnegative")
    frames = np.concatenate([np.zeros((pad_front, v.d)), v.frames, np.zeros((pad_back, v.d))])
    return v.with_frames(frames)


def transform_scale(v: VideoSequence, c: float) -> VideoSequence:
    if not c > 0:
        raise ValueError(f"scale factor must be positive, got {c}")
    return v.with_frames(v.frames * c)


def transform_rate(v: VideoSequence, r: int) -> VideoSequence:
    """Slow ``v`` down by repeating every frame ``r`` times in place."""
    if int(r) != r or r < 1:
        raise ValueError(f"rate factor must be a positive integer, got {r}")
    return v.with_frames(np.repeat(v.frames, int(r), axis=0))
