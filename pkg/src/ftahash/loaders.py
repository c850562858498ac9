"""Skeleton file parsing, manifest-driven dataset loading and feature caches.

A manifest is a JSON document::

    {
      "class_names": ["wave", "clap"],
      "feature": "pjd",                 # pjd | jo | pa | raw
      "topology": "msr20",              # preset name, inline object, or path to a JSON file
      "joint_permutation": [...],       # optional: file joint i -> canonical joint perm[i]
      "records": [
        {"file": "a01_s01_e01.txt", "label": "wave", "subject": 1, "split": "train"},
        ...
      ]
    }

Relative file paths resolve against the manifest's directory. ``raw`` records
are whitespace-separated ``n x d`` feature matrices, one frame per line.
"""

from __future__ import annotations

import io
import json
import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import TRAIN, Dataset, VideoSequence
from .features import SkeletonSequence, SkeletonTopology, extract, get_topology
from .formats import atomic_write

DATA_DIR_ENV = "FTA_DATA_DIR"
MSR_JOINTS = 20


class ParseError(ValueError):
    pass


def resolve_data_path(path) -> Path:
    """``path`` as given, or under ``$FTA_DATA_DIR`` if it is relative and missing."""
    path = Path(path)
    if path.exists() or path.is_absolute():
        return path
    base = os.environ.get(DATA_DIR_ENV)
    if base and (Path(base) / path).exists():
        return Path(base) / path
    return path


def load_msr_skeleton(
    path,
    joints_per_frame: int = MSR_JOINTS,
    permutation: Optional[Sequence[int]] = None,
) -> SkeletonSequence:
    """Parse rows of ``x y z confidence``, ``joints_per_frame`` rows per frame."""
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 values (x y z confidence), got {len(tokens)}")
            try:
                rows.append([float(t) for t in tokens])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric token in {line.strip()!r}") from None
    if not rows:
        raise ParseError(f"{path}: no frames")
    if len(rows) % joints_per_frame:
        raise ParseError(
            f"{path}:{len(rows)}: {len(rows)} joint rows is not a multiple of {joints_per_frame} joints per frame"
        )
    data = np.array(rows).reshape(-1, joints_per_frame, 4)
    if permutation is not None:
        perm = np.asarray(permutation, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(joints_per_frame)):
            raise ValueError("joint_permutation must be a permutation of the joint indices")
        reordered = np.empty_like(data)
        reordered[:, perm] = data
        data = reordered
    return SkeletonSequence(data[..., :3], confidence=data[..., 3], source_id=path.name)


def load_raw_features(path) -> np.ndarray:
    path = Path(path)
    try:
        frames = np.loadtxt(path, ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if frames.size == 0:
        raise ParseError(f"{path}: no frames")
    return frames


def _topology_from_manifest(value, base: Path) -> SkeletonTopology:
    if isinstance(value, str) and value.endswith(".json"):
        doc = json.loads((base / value).read_text(encoding="utf-8"))
        return SkeletonTopology.from_dict(doc)
    return get_topology(value)


def load_dataset(manifest_path, feature: Optional[str] = None) -> Dataset:
    manifest_path = resolve_data_path(manifest_path)
    base = manifest_path.parent
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    class_names = [str(c) for c in doc["class_names"]]
    feature = feature or doc.get("feature", "raw")
    topo = _topology_from_manifest(doc.get("topology", "msr20"), base)
    perm = doc.get("joint_permutation")
    joints = int(doc.get("joints_per_frame", topo.num_joints))
    seqs, tags, subjects = [], [], []
    for i, rec in enumerate(doc["records"]):
        file = base / rec["file"]
        if not file.exists():
            raise FileNotFoundError(f"record {i}: file {rec['file']!r} not found")
        label = rec.get("label")
        if label is not None:
            if isinstance(label, int) and not isinstance(label, bool):
                if not 0 <= label < len(class_names):
                    raise ValueError(f"record {i}: label index {label} out of range")
            elif str(label) in class_names:
                label = class_names.index(str(label))
            else:
                raise ValueError(f"record {i}: unknown label {label!r}")
        try:
            if feature == "raw":
                seq = VideoSequence(load_raw_features(file), label=label, source_id=str(rec["file"]))
            else:
                skel = load_msr_skeleton(file, joints, perm)
                seq = extract(feature, skel, topo)
                seq = VideoSequence(seq.frames, label=label, source_id=str(rec["file"]))
        except ValueError as exc:
            raise type(exc)(f"record {i}: {exc}") from None
        if seqs and seq.d != seqs[0].d:
            raise ValueError(f"record {i}: dimension {seq.d} differs from dimension {seqs[0].d} of record 0")
        seqs.append(seq)
        tags.append(rec.get("split", TRAIN))
        subjects.append(int(rec.get("subject", 0)))
    return Dataset(tuple(seqs), tuple(class_names), tuple(tags), tuple(subjects))


def save_dataset_cache(path, data: Dataset) -> None:
    buf = io.BytesIO()
    lengths = np.array([s.n for s in data.sequences], dtype=np.int64)
    np.savez(
        buf,
        frames=np.concatenate([s.frames for s in data.sequences]),
        lengths=lengths,
        labels=data.labels(),
        class_names=np.array(data.class_names, dtype=str),
        split_tags=np.array(data.split_tags, dtype=str),
        subjects=np.array(data.subjects or [0] * len(data), dtype=np.int64),
        source_ids=np.array([s.source_id for s in data.sequences], dtype=str),
    )
    atomic_write(path, buf.getvalue())


def load_dataset_cache(path) -> Dataset:
    with np.load(resolve_data_path(path)) as z:
        bounds = np.concatenate([[0], np.cumsum(z["lengths"])])
        frames = z["frames"]
        seqs = tuple(
            VideoSequence(frames[a:b], label=None if lab < 0 else int(lab), source_id=str(sid))
            for a, b, lab, sid in zip(bounds[:-1], bounds[1:], z["labels"], z["source_ids"])
        )
        return Dataset(
            seqs,
            tuple(str(c) for c in z["class_names"]),
            tuple(str(t) for t in z["split_tags"]),
            tuple(int(s) for s in z["subjects"]),
        )


def load_any(path, feature: Optional[str] = None) -> Dataset:
    """Load a manifest (``.json``) or a feature cache (``.npz``)."""
    path = resolve_data_path(path)
    if path.suffix == ".npz":
        return load_dataset_cache(path)
    return load_dataset(path, feature)
