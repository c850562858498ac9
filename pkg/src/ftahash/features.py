"""Per-frame skeleton features (PJD, JO, PA) and z-score standardization.

Joint layout of the ``msr20`` preset (0-based), the 20-joint Kinect v1 order::

    0 hip-center   1 spine        2 shoulder-center  3 head
    4 l-shoulder   5 l-elbow      6 l-wrist          7 l-hand
    8 r-shoulder   9 r-elbow     10 r-wrist         11 r-hand
   12 l-hip       13 l-knee      14 l-ankle         15 l-foot
   16 r-hip       17 r-knee      18 r-ankle         19 r-foot

Files that store joints in another order are remapped with a joint
permutation at load time (see ``ftahash.loaders``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .core import Dataset, VideoSequence

EPS = 1e-8


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """``joints`` has shape ``(n, J, 3)``; ``confidence`` is ``(n, J)`` or None."""

    joints: np.ndarray
    confidence: Optional[np.ndarray] = None
    label: Optional[int] = None
    source_id: str = ""

    def __post_init__(self):
        joints = np.array(self.joints, dtype=np.float64)
        if joints.ndim != 3 or joints.shape[2] != 3:
            raise ValueError(f"joints must have shape (n, J, 3), got {joints.shape}")
        if joints.shape[0] < 1:
            raise ValueError("skeleton sequence has no frames")
        if not np.all(np.isfinite(joints)):
            raise ValueError("joint positions contain NaN or infinite values")
        joints.setflags(write=False)
        object.__setattr__(self, "joints", joints)
        if self.confidence is not None:
            conf = np.array(self.confidence, dtype=np.float64)
            if conf.shape != joints.shape[:2]:
                raise ValueError(f"confidence shape {conf.shape} does not match joints {joints.shape[:2]}")
            conf.setflags(write=False)
            object.__setattr__(self, "confidence", conf)

    @property
    def n(self) -> int:
        return self.joints.shape[0]

    @property
    def num_joints(self) -> int:
        return self.joints.shape[1]


@dataclass(frozen=True)
class SkeletonTopology:
    num_joints: int
    bones: tuple
    reference_pair: tuple

    def __post_init__(self):
        bones = tuple((int(a), int(b)) for a, b in self.bones)
        ref = tuple(int(j) for j in self.reference_pair)
        object.__setattr__(self, "bones", bones)
        object.__setattr__(self, "reference_pair", ref)
        J = self.num_joints
        if len(ref) != 2 or ref[0] == ref[1] or not all(0 <= j < J for j in ref):
            raise ValueError(f"invalid reference pair {ref} for {J} joints")
        for a, b in bones:
            if not (0 <= a < J and 0 <= b < J) or a == b:
                raise ValueError(f"bone ({a}, {b}) invalid for {J} joints")
        if bones and not _is_tree(J, bones):
            raise ValueError("bones must form a connected tree over the joints")

    @classmethod
    def from_dict(cls, doc: dict) -> "SkeletonTopology":
        return cls(int(doc["num_joints"]), tuple(map(tuple, doc["bones"])), tuple(doc["reference_pair"]))


def _is_tree(num_joints, bones):
    if len(bones) != num_joints - 1:
        return False
    parent = list(range(num_joints))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in bones:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


MSR20 = SkeletonTopology(
    num_joints=20,
    bones=(
        (0, 1), (1, 2), (2, 3),
        (2, 4), (4, 5), (5, 6), (6, 7),
        (2, 8), (8, 9), (9, 10), (10, 11),
        (0, 12), (12, 13), (13, 14), (14, 15),
        (0, 16), (16, 17), (17, 18), (18, 19),
    ),
    reference_pair=(0, 1),
)

TOPOLOGIES = {"msr20": MSR20}


def get_topology(name_or_doc) -> SkeletonTopology:
    if isinstance(name_or_doc, SkeletonTopology):
        return name_or_doc
    if isinstance(name_or_doc, dict):
        return SkeletonTopology.from_dict(name_or_doc)
    try:
        return TOPOLOGIES[name_or_doc]
    except KeyError:
        raise ValueError(f"unknown topology preset {name_or_doc!r}; known: {sorted(TOPOLOGIES)}") from None


def _reference_lengths(s: SkeletonSequence, topo: SkeletonTopology) -> np.ndarray:
    a, b = topo.reference_pair
    if max(a, b) >= s.num_joints:
        raise ValueError(f"reference pair {topo.reference_pair} out of range for {s.num_joints} joints")
    ref = np.linalg.norm(s.joints[:, a] - s.joints[:, b], axis=1)
    bad = np.flatnonzero(ref < EPS)
    if bad.size:
        raise ValueError(f"degenerate skeleton: reference length below {EPS} at frame {int(bad[0]) + 1}")
    return ref


def extract_pjd(s: SkeletonSequence, topo: SkeletonTopology = MSR20) -> VideoSequence:
    """Pairwise joint distances, normalised by the per-frame reference length.

    Output dimension is ``J * (J - 1) / 2`` (pairs in row-major upper-triangle order).
    """
    if s.num_joints < 2:
        raise ValueError("PJD needs at least two joints")
    ref = _reference_lengths(s, topo)
    iu, ju = np.triu_indices(s.num_joints, k=1)
    dist = np.linalg.norm(s.joints[:, iu] - s.joints[:, ju], axis=2)
    return VideoSequence(dist / ref[:, None], label=s.label, source_id=s.source_id)


def extract_jo(s: SkeletonSequence, topo: SkeletonTopology = MSR20) -> VideoSequence:
    """Joint offsets from the previous frame, ``3J`` values per frame.

    The first frame has zero offsets so the output keeps the input length.
    """
    if s.n < 2:
        raise ValueError("JO needs at least two frames")
    ref = _reference_lengths(s, topo)
    offsets = np.zeros_like(s.joints)
    offsets[1:] = s.joints[1:] - s.joints[:-1]
    feats = offsets.reshape(s.n, -1) / ref[:, None]
    return VideoSequence(feats, label=s.label, source_id=s.source_id)


def extract_pa(s: SkeletonSequence, topo: SkeletonTopology = MSR20) -> VideoSequence:
    """Cosine between every unordered pair of bones; ``B * (B - 1) / 2`` values.

    Bones shorter than ``EPS`` contribute a cosine of 0.
    """
    if len(topo.bones) < 2:
        raise ValueError("PA needs at least two bones")
    parents = np.array([a for a, _ in topo.bones])
    children = np.array([b for _, b in topo.bones])
    if max(parents.max(), children.max()) >= s.num_joints:
        raise ValueError("topology references joints beyond the skeleton")
    vec = s.joints[:, children] - s.joints[:, parents]
    norm = np.linalg.norm(vec, axis=2)
    ok = norm >= EPS
    unit = np.where(ok[..., None], vec / np.where(ok, norm, 1.0)[..., None], 0.0)
    ib, jb = np.triu_indices(len(topo.bones), k=1)
    cos = np.einsum("nbc,nbc->nb", unit[:, ib], unit[:, jb])
    return VideoSequence(np.clip(cos, -1.0, 1.0), label=s.label, source_id=s.source_id)


EXTRACTORS = {"pjd": extract_pjd, "jo": extract_jo, "pa": extract_pa}


def extract(feature: str, s: SkeletonSequence, topo: SkeletonTopology = MSR20) -> VideoSequence:
    try:
        fn = EXTRACTORS[feature]
    except KeyError:
        raise ValueError(f"unknown feature {feature!r}; expected one of {sorted(EXTRACTORS)}") from None
    return fn(s, topo)


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64)
        std = np.maximum(np.array(self.std, dtype=np.float64), EPS)
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def apply(self, v: VideoSequence) -> VideoSequence:
        if v.d != self.mean.shape[0]:
            raise ValueError(f"sequence dimension {v.d} != standardizer dimension {self.mean.shape[0]}")
        return v.with_frames((v.frames - self.mean) / self.std)


def fit_standardizer(train: Dataset | Iterable[VideoSequence]) -> Standardizer:
    """Per-dimension mean/std over all training frames pooled together."""
    seqs = train.sequences if isinstance(train, Dataset) else list(train)
    if not seqs:
        raise ValueError("cannot fit a standardizer on an empty training set")
    pooled = np.concatenate([s.frames for s in seqs])
    return Standardizer(pooled.mean(axis=0), pooled.std(axis=0))


def apply_standardizer(st: Standardizer, v: VideoSequence) -> VideoSequence:
    return st.apply(v)
