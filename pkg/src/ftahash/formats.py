"""On-disk formats: hash spec JSON, binary code database, evaluation reports.

JSON documents are canonical: sorted keys, two-space indent, scalar lists on
one line, floats written with 17 significant digits. Saving, loading and
saving again reproduces the same bytes.

Code database layout (all integers little-endian)::

    magic      4s   b"FTAC"
    version    u16
    k          u16
    p          u32
    count      u32
    fingerprint 32s  raw SHA-256 digest of the hash spec
    records    count * ceil(p * ceil(log2(k+1)) / 8) bytes, pack() bit layout
    n_classes  u32
    classes    n_classes * (u16 length, utf-8 bytes)
    labels     count * i32 class index, -1 for unlabelled
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .evaluation import EvalReport
from .features import Standardizer
from .hashing import HashSpec, Mode, make_bank, pack_bytes, packed_nbytes, sample_groups, unpack_bytes
from .search import CodeDatabase, FingerprintMismatch

FORMAT_VERSION = 1
MAGIC = b"FTAC"
_HEADER = struct.Struct("<4sHHII32s")


class FormatError(ValueError):
    pass


class FormatVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


# -- canonical JSON ---------------------------------------------------------

def _scalar(x) -> str:
    if x is None or isinstance(x, (bool, str)):
        return json.dumps(x, ensure_ascii=False)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            raise ValueError(f"non-finite float {x} cannot be written as JSON")
        text = format(x, ".17g")
        # keep floats recognisable as floats after a load/save cycle
        return text if any(c in text for c in ".en") else text + ".0"
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _is_scalar(x) -> bool:
    return not isinstance(x, (dict, list, tuple, np.ndarray))


def _dump(obj, indent: int) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(key), ensure_ascii=False)}: {_dump(obj[key], indent + 1)}" for key in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(_is_scalar(x) for x in obj):
            return "[" + ", ".join(_scalar(x) for x in obj) + "]"
        return "[\n" + ",\n".join(pad + _dump(x, indent + 1) for x in obj) + "\n" + end + "]"
    return _scalar(obj)


def canonical_json(obj) -> str:
    return _dump(obj, 0) + "\n"


def atomic_write(path, data: bytes | str) -> None:
    """Write to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- hash spec --------------------------------------------------------------

def _sha256(arr: np.ndarray, dtype) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr, dtype=dtype).tobytes()).hexdigest()


def spec_fingerprint(spec: HashSpec, standardizer: Optional[Standardizer] = None) -> str:
    """SHA-256 over the hash spec parameters, projection matrix, groups and standardizer."""
    ident = {
        "m": spec.m,
        "d": spec.d,
        "k": spec.k,
        "p": spec.p,
        "theta": spec.theta,
        "mode": spec.mode.value,
        "sigma": spec.bank.sigma,
        "bank_seed": spec.bank.seed,
        "selection_seed": spec.selection_seed,
        "bank_sha256": _sha256(spec.bank.vectors, "<f8"),
        "groups_sha256": _sha256(spec.groups, "<i8"),
    }
    if standardizer is not None:
        ident["standardizer_sha256"] = _sha256(np.concatenate([standardizer.mean, standardizer.std]), "<f8")
    return hashlib.sha256(canonical_json(ident).encode()).hexdigest()


def spec_to_dict(spec: HashSpec, standardizer: Optional[Standardizer] = None, explicit_groups: bool = False) -> dict:
    regenerated = sample_groups(spec.selection_seed, spec.m, spec.k, spec.p)
    doc = {
        "format_version": FORMAT_VERSION,
        "m": spec.m,
        "d": spec.d,
        "k": spec.k,
        "p": spec.p,
        "theta": spec.theta,
        "mode": spec.mode.value,
        "sigma": spec.bank.sigma,
        "bank_seed": spec.bank.seed,
        "selection_seed": spec.selection_seed,
        "groups": spec.groups.tolist() if explicit_groups or not np.array_equal(regenerated, spec.groups) else None,
        "standardizer": None
        if standardizer is None
        else {"mean": standardizer.mean.tolist(), "std": standardizer.std.tolist()},
        "fingerprint": spec_fingerprint(spec, standardizer),
    }
    return doc


def spec_from_dict(doc: dict):
    """Rebuild (spec, standardizer) and check the stored fingerprint."""
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"hash spec format_version {version!r}, this build reads {FORMAT_VERSION}")
    try:
        bank = make_bank(int(doc["bank_seed"]), int(doc["m"]), int(doc["d"]), float(doc["sigma"]))
        k, p = int(doc["k"]), int(doc["p"])
        groups = doc.get("groups")
        if groups is None:
            groups = sample_groups(int(doc["selection_seed"]), bank.m, k, p)
        spec = HashSpec(bank, k, p, float(doc["theta"]), Mode.parse(doc["mode"]), groups, int(doc["selection_seed"]))
        st = doc.get("standardizer")
        standardizer = None if st is None else Standardizer(st["mean"], st["std"])
    except KeyError as exc:
        raise FormatError(f"hash spec is missing field {exc.args[0]!r}") from None
    expected = doc.get("fingerprint")
    actual = spec_fingerprint(spec, standardizer)
    if expected != actual:
        raise FingerprintMismatch(f"hash spec fingerprint {expected!r} does not match regenerated spec {actual!r}")
    return spec, standardizer


def save_hash_spec(path, spec: HashSpec, standardizer: Optional[Standardizer] = None, explicit_groups: bool = False) -> str:
    doc = spec_to_dict(spec, standardizer, explicit_groups)
    atomic_write(path, canonical_json(doc))
    return doc["fingerprint"]


def load_hash_spec(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TruncatedFileError(f"{path}: malformed or truncated JSON ({exc})") from None
    return spec_from_dict(doc)


# -- code database ------------------------------------------------------------

def code_db_to_bytes(db: CodeDatabase) -> bytes:
    if db.k > 0xFFFF:
        raise ValueError("k too large for the code database header")
    try:
        fp = bytes.fromhex(db.spec_fingerprint) if db.spec_fingerprint else bytes(32)
    except ValueError:
        raise ValueError("spec fingerprint must be a hex SHA-256 digest") from None
    if len(fp) != 32:
        raise ValueError("spec fingerprint must be a SHA-256 digest")
    out = [_HEADER.pack(MAGIC, FORMAT_VERSION, db.k, db.p, len(db), fp)]
    out.extend(pack_bytes(db.code(i)) for i in range(len(db)))
    classes = []
    for lab in db.labels:
        if lab is not None and str(lab) not in classes:
            classes.append(str(lab))
    out.append(struct.pack("<I", len(classes)))
    for name in classes:
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
    index = [-1 if lab is None else classes.index(str(lab)) for lab in db.labels]
    out.append(struct.pack(f"<{len(index)}i", *index))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data, self.pos, self.name = data, 0, name

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"{self.name}: truncated while reading {what} (need {n} bytes at offset {self.pos})")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def code_db_from_bytes(data: bytes, expected_fingerprint: Optional[str] = None, name: str = "code database") -> CodeDatabase:
    r = _Reader(data, name)
    magic, version, k, p, count, fp = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"{name}: not a code database (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"{name}: format_version {version}, this build reads {FORMAT_VERSION}")
    fingerprint = fp.hex()
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise FingerprintMismatch(
            f"{name}: built with spec {fingerprint[:12]}..., expected {expected_fingerprint[:12]}..."
        )
    nbytes = packed_nbytes(k, p)
    codes = [unpack_bytes(r.take(nbytes, f"record {i}"), k, p).symbols for i in range(count)]
    (n_classes,) = struct.unpack("<I", r.take(4, "class count"))
    classes = []
    for c in range(n_classes):
        (length,) = struct.unpack("<H", r.take(2, f"class name {c} length"))
        classes.append(r.take(length, f"class name {c}").decode("utf-8"))
    index = struct.unpack(f"<{count}i", r.take(4 * count, "label table"))
    if r.pos != len(data):
        raise FormatError(f"{name}: {len(data) - r.pos} trailing bytes")
    labels = []
    for i in index:
        if i == -1:
            labels.append(None)
        elif 0 <= i < n_classes:
            labels.append(classes[i])
        else:
            raise FormatError(f"{name}: label index {i} out of range")
    matrix = np.stack(codes) if codes else np.zeros((0, p), dtype=np.uint8)
    return CodeDatabase(matrix, tuple(labels), k, fingerprint)


def save_code_db(path, db: CodeDatabase) -> None:
    atomic_write(path, code_db_to_bytes(db))


def load_code_db(path, expected_fingerprint: Optional[str] = None) -> CodeDatabase:
    return code_db_from_bytes(Path(path).read_bytes(), expected_fingerprint, name=str(path))


# -- reports ----------------------------------------------------------------

def save_report(path, report: EvalReport | list) -> None:
    if isinstance(report, list):
        doc = {"format_version": FORMAT_VERSION, "reports": [r.to_dict() for r in report]}
    else:
        doc = {"format_version": FORMAT_VERSION, **report.to_dict()}
    atomic_write(path, canonical_json(doc))


def load_report(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TruncatedFileError(f"{path}: malformed or truncated JSON ({exc})") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatVersionError(f"{path}: format_version {doc.get('format_version')!r}")
    if "reports" in doc:
        return [EvalReport.from_dict(r) for r in doc["reports"]]
    return EvalReport.from_dict(doc)
