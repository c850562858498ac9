"""Hamming distance between FTA codes and exhaustive-scan KNN classification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .hashing import FtaCode, pack


class FingerprintMismatch(ValueError):
    """A code or file was produced by a different hash spec."""


def hamming(a: FtaCode, b: FtaCode, bitwise: bool = False) -> int:
    """Number of differing symbols (or differing packed bits with ``bitwise``)."""
    if a.k != b.k or a.p != b.p:
        raise ValueError(f"code shapes differ: (k={a.k}, p={a.p}) vs (k={b.k}, p={b.p})")
    if bitwise:
        return int(np.count_nonzero(pack(a) != pack(b)))
    return int(np.count_nonzero(a.symbols != b.symbols))


@dataclass(frozen=True, eq=False)
class CodeDatabase:
    """Stacked codes with parallel labels, tied to one hash spec by fingerprint."""

    codes: np.ndarray  # (N, p) symbol matrix
    labels: tuple
    k: int
    spec_fingerprint: str = ""

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.uint8 if self.k < 256 else np.uint16)
        if codes.ndim != 2:
            raise ValueError("codes must be a (count, p) matrix")
        if codes.shape[0] != len(self.labels):
            raise ValueError("one label per code required")
        if codes.size and int(codes.max()) > self.k:
            raise ValueError(f"symbol out of range for k={self.k}")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def build(cls, codes: Sequence[FtaCode], labels, spec_fingerprint: str = "") -> "CodeDatabase":
        codes = list(codes)
        if not codes:
            raise ValueError("cannot build an empty code database")
        k, p = codes[0].k, codes[0].p
        if any(c.k != k or c.p != p for c in codes):
            raise ValueError("all codes in a database must share (k, p)")
        return cls(np.stack([c.symbols for c in codes]), tuple(labels), k, spec_fingerprint)

    @property
    def p(self) -> int:
        return self.codes.shape[1]

    def __len__(self):
        return self.codes.shape[0]

    def code(self, i: int) -> FtaCode:
        return FtaCode(self.codes[i], self.k)

    def distances(self, q: FtaCode, bitwise: bool = False) -> np.ndarray:
        if q.k != self.k or q.p != self.p:
            raise ValueError(f"query shape (k={q.k}, p={q.p}) does not match database (k={self.k}, p={self.p})")
        if not bitwise:
            return np.count_nonzero(self.codes != q.symbols, axis=1)
        db_bits = np.stack([pack(self.code(i)) for i in range(len(self))])
        return np.count_nonzero(db_bits != pack(q), axis=1)


def _vote(labels, dists):
    """Majority label; ties by smaller summed distance, then first appearance."""
    tally = {}
    for rank, (lab, dist) in enumerate(zip(labels, dists)):
        count, total, first = tally.get(lab, (0, 0, rank))
        tally[lab] = (count + 1, total + int(dist), first)
    return min(tally, key=lambda lab: (-tally[lab][0], tally[lab][1], tally[lab][2]))


def nearest(db: CodeDatabase, q: FtaCode, K: int = 1, bitwise: bool = False):
    """Indices and distances of the ``K`` closest entries (ties by database order)."""
    dists = db.distances(q, bitwise=bitwise)
    order = np.argsort(dists, kind="stable")[:K]
    return order, dists[order]


def knn_classify(
    db: CodeDatabase,
    q: FtaCode,
    K: int = 1,
    fingerprint: Optional[str] = None,
    bitwise: bool = False,
):
    """Predict the label of ``q`` by majority vote of its ``K`` nearest codes.

    ``fingerprint`` identifies the hash spec that produced ``q``; when given it must
    match the database's.
    """
    if len(db) == 0:
        raise ValueError("empty code database")
    if K < 1:
        raise ValueError("K must be >= 1")
    if fingerprint is not None and db.spec_fingerprint and fingerprint != db.spec_fingerprint:
        raise FingerprintMismatch(
            f"query spec fingerprint {fingerprint[:12]} != database fingerprint {db.spec_fingerprint[:12]}"
        )
    idx, dists = nearest(db, q, K, bitwise=bitwise)
    return _vote([db.labels[i] for i in idx], dists)


def classify_matrix(train_codes: np.ndarray, train_labels: np.ndarray, test_codes: np.ndarray, K: int = 1) -> np.ndarray:
    """Batch KNN over symbol matrices with the same tie rules as ``knn_classify``."""
    train_labels = np.asarray(train_labels)
    preds = np.empty(test_codes.shape[0], dtype=train_labels.dtype)
    for i, q in enumerate(test_codes):
        dists = np.count_nonzero(train_codes != q, axis=1)
        if K == 1:
            preds[i] = train_labels[int(np.argmin(dists))]
            continue
        order = np.argsort(dists, kind="stable")[:K]
        preds[i] = _vote(train_labels[order].tolist(), dists[order])
    return preds
