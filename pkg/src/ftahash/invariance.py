"""Executable invariance checks behind ``ftahash verify``.

Each check returns a :class:`CheckResult`; a check passes only when every
case agrees exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import (
    SynthSpec,
    VideoSequence,
    make_synthetic,
    posture_prototypes,
    transform_rate,
    transform_scale,
    transform_translate,
)
from .evaluation import theta_grid
from .hashing import (
    HashSpec,
    Mode,
    hash_scores,
    hash_sequence,
    make_bank,
    make_hash_spec,
    score,
)

FTA_MODES = (Mode.PEAK, Mode.THRESHOLD)


@dataclass
class CheckResult:
    name: str
    passed: int
    total: int
    failures: list = field(default_factory=list)
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.total > 0 and self.passed == self.total

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}: {self.passed}/{self.total}{extra}"


@dataclass
class Case:
    """One corpus video with the bank, theta grid and spec parameters it is hashed with."""

    video: VideoSequence
    bank_index: int
    thetas: list
    k: int
    p: int
    selection_seed: int


def random_corpus(seed: int = 0, count: int = 200, d_choices=(8, 64), n_range=(10, 200), noise: float = 0.1):
    """Synthetic posture videos of varied length and dimension."""
    rng = np.random.default_rng([seed, 11])
    videos = []
    for j in range(count):
        d = int(rng.choice(d_choices))
        num_postures = int(rng.integers(2, 7))
        length = int(rng.integers(2, 9))
        order = rng.integers(0, num_postures, size=length)
        n_target = int(rng.integers(n_range[0], n_range[1] + 1))
        fpp = max(1, n_target // length)
        while length * fpp < n_range[0]:
            fpp += 1
        spec = SynthSpec(int(rng.integers(2**31)), d, num_postures, order, fpp, noise, instance=j)
        videos.append(make_synthetic(spec, label=j % 2, source_id=f"corpus-{j}"))
    return videos


def build_cases(videos, seed: int = 0, m: int = 50, p: int = 256, k_choices=(2, 3, 4)):
    """Attach one bank per dimension and an AUTO-style theta grid pooled over the corpus."""
    rng = np.random.default_rng([seed, 13])
    dims = sorted({v.d for v in videos})
    banks = [make_bank(int(rng.integers(2**62)), m, d) for d in dims]
    grids = []
    for bank in banks:
        grids.append(theta_grid([score(bank, v) for v in videos if v.d == bank.d]))
    cases = []
    for v in videos:
        b = dims.index(v.d)
        cases.append(Case(v, b, grids[b], int(rng.choice(k_choices)), p, int(rng.integers(2**62))))
    return banks, cases


def naive_code(S: np.ndarray, groups: np.ndarray, theta: float, mode) -> list:
    """Reference encoder: rescans every group's rows from scratch, in plain Python."""
    mode = Mode.parse(mode)
    symbols = []
    for group in groups.tolist():
        times = []
        for l in group:
            row = S[l].tolist()
            t = None
            if mode is Mode.THRESHOLD:
                for i, s in enumerate(row):
                    if s >= theta:
                        t = i + 1
                        break
            else:
                best = None
                for i, s in enumerate(row):
                    if s >= theta and (best is None or s > best):
                        best, t = s, i + 1
            times.append(t)
        finite = [(t, j) for j, t in enumerate(times) if t is not None]
        if not finite:
            symbols.append(0)
        else:
            symbols.append(min(finite)[1] + 1)
    return symbols


def _spec(bank, case: Case, theta: float, mode) -> HashSpec:
    return make_hash_spec(bank, case.k if Mode.parse(mode) is not Mode.BOW else 1, case.p, theta, mode, case.selection_seed)


def check_translation(banks, cases, seed: int = 0, max_pad: int = 50) -> CheckResult:
    rng = np.random.default_rng([seed, 21])
    res = CheckResult("translation invariance", 0, 0)
    for idx, case in enumerate(cases):
        theta = float(rng.choice(case.thetas))
        a, b = (int(x) for x in rng.integers(0, max_pad + 1, size=2))
        padded = transform_translate(case.video, a, b)
        for mode in FTA_MODES:
            spec = _spec(banks[case.bank_index], case, theta, mode)
            res.total += 1
            if hash_sequence(spec, padded) == hash_sequence(spec, case.video):
                res.passed += 1
            else:
                res.failures.append((idx, mode.value, a, b))
    return res


def check_rate(banks, cases, seed: int = 0, rates=(2, 3, 5)) -> CheckResult:
    rng = np.random.default_rng([seed, 22])
    res = CheckResult("execution-rate invariance", 0, 0)
    for idx, case in enumerate(cases):
        theta = float(rng.choice(case.thetas))
        for mode in FTA_MODES:
            spec = _spec(banks[case.bank_index], case, theta, mode)
            base = hash_sequence(spec, case.video)
            for r in rates:
                res.total += 1
                if hash_sequence(spec, transform_rate(case.video, r)) == base:
                    res.passed += 1
                else:
                    res.failures.append((idx, mode.value, r))
    return res


def monotone_warp(v: VideoSequence, rng, max_repeat: int = 4) -> VideoSequence:
    """Repeat each frame an independent random number of times (>= 1)."""
    counts = rng.integers(1, max_repeat + 1, size=v.n)
    return v.with_frames(np.repeat(v.frames, counts, axis=0))


def check_time_warp(banks, cases, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng([seed, 23])
    res = CheckResult("monotone time-warp invariance (peak)", 0, 0)
    for idx, case in enumerate(cases):
        theta = float(rng.choice(case.thetas))
        spec = _spec(banks[case.bank_index], case, theta, Mode.PEAK)
        res.total += 1
        if hash_sequence(spec, monotone_warp(case.video, rng)) == hash_sequence(spec, case.video):
            res.passed += 1
        else:
            res.failures.append(idx)
    return res


def check_scale(banks, cases, seed: int = 0, factors=(0.1, 2.0, 10.0)) -> CheckResult:
    """Scaling features by c together with theta by c leaves every code unchanged."""
    rng = np.random.default_rng([seed, 24])
    res = CheckResult("scale invariance (theta scaled with features)", 0, 0)
    for idx, case in enumerate(cases):
        theta = float(rng.choice(case.thetas))
        for mode in (*FTA_MODES, Mode.BOW):
            spec = _spec(banks[case.bank_index], case, theta, mode)
            base = hash_sequence(spec, case.video)
            for c in factors:
                res.total += 1
                scaled = hash_sequence(spec.with_theta(c * theta), transform_scale(case.video, c))
                if scaled == base:
                    res.passed += 1
                else:
                    res.failures.append((idx, mode.value, c))
    return res


def passing_spec(bank, video: VideoSequence, k: int, p: int, c: float, selection_seed: int) -> Optional[HashSpec]:
    """Peak-mode spec whose groups only use postures that pass theta at scales 1 and c.

    Returns None when fewer than ``k`` postures have a positive peak.
    """
    S = score(bank, video)
    peaks = S.max(axis=1)
    usable = np.flatnonzero(peaks > 0)
    if usable.size < k:
        return None
    theta = 0.5 * min(1.0, c) * float(peaks[usable].min())
    rng = np.random.default_rng(selection_seed)
    groups = np.stack([rng.choice(usable, size=k, replace=False) for _ in range(p)])
    return HashSpec(bank, k, p, theta, Mode.PEAK, groups, selection_seed)


def check_scale_same_theta(banks, cases, factors=(0.1, 2.0, 10.0)) -> CheckResult:
    """With every selected posture passing before and after scaling, theta can stay fixed."""
    res = CheckResult("scale invariance (same theta, all selected postures pass)", 0, 0)
    for idx, case in enumerate(cases):
        for c in factors:
            spec = passing_spec(banks[case.bank_index], case.video, case.k, case.p, c, case.selection_seed)
            if spec is None:
                continue
            res.total += 1
            if hash_sequence(spec, transform_scale(case.video, c)) == hash_sequence(spec, case.video):
                res.passed += 1
            else:
                res.failures.append((idx, c))
    return res


def random_oracle_instance(rng):
    """A small random (scores, spec) pair; half the instances have quantised, tie-heavy scores."""
    n = int(rng.integers(1, 60))
    d = int(rng.integers(1, 10))
    m = int(rng.integers(2, 30))
    k = int(rng.integers(2, min(m, 5) + 1))
    p = int(rng.integers(1, 40))
    frames = rng.standard_normal((n, d))
    if rng.random() < 0.5:
        frames = np.round(frames)
    v = VideoSequence(frames)
    bank = make_bank(int(rng.integers(2**62)), m, d)
    if rng.random() < 0.5:
        bank = type(bank)(m, d, 1.0, bank.seed, np.round(bank.vectors))
    theta = float(np.round(rng.normal(0.5, 1.5), 1))
    return v, bank, k, p, theta, int(rng.integers(2**62))


def check_oracle(seed: int = 0, count: int = 1000) -> CheckResult:
    rng = np.random.default_rng([seed, 25])
    res = CheckResult("oracle equivalence (table vs per-group rescan)", 0, 0)
    for idx in range(count):
        v, bank, k, p, theta, sel = random_oracle_instance(rng)
        S = score(bank, v)
        for mode in FTA_MODES:
            spec = make_hash_spec(bank, k, p, theta, mode, sel)
            res.total += 1
            fast = hash_scores(spec, S).symbols.tolist()
            if fast == naive_code(S, spec.groups, theta, mode):
                res.passed += 1
            else:
                res.failures.append((idx, mode.value))
    return res


def check_core_invariants(seed: int = 0, count: int = 50) -> CheckResult:
    """Zero-noise synthetic frames are prototypes; transforms keep d and label; rates compose."""
    rng = np.random.default_rng([seed, 26])
    res = CheckResult("core sequence invariants", 0, 0)
    for _ in range(count):
        d = int(rng.integers(2, 12))
        num = int(rng.integers(1, 5))
        order = rng.integers(0, num, size=int(rng.integers(1, 6)))
        s = SynthSpec(int(rng.integers(2**31)), d, num, order, int(rng.integers(1, 4)), 0.0)
        v = make_synthetic(s, label=1)
        protos = posture_prototypes(s.seed, num, d)
        ok = all(any(np.array_equal(f, pr) for pr in protos) for f in v.frames)
        a, b = (int(x) for x in rng.integers(1, 6, size=2))
        ok &= transform_rate(transform_rate(v, a), b) == transform_rate(v, a * b)
        for w in (transform_rate(v, a), transform_scale(v, 0.5 + a), transform_translate(v, a, b)):
            ok &= w.d == v.d and w.label == v.label
        res.total += 1
        res.passed += bool(ok)
    return res


def time_hash(spec: HashSpec, v: VideoSequence, repeats: int = 7) -> float:
    hash_sequence(spec, v)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        hash_sequence(spec, v)
        times.append(time.perf_counter() - t0)
    return float(np.min(times))


def linear_fit_deviation(xs, ts) -> float:
    """Largest relative residual of an affine least-squares fit of ts on xs."""
    xs, ts = np.asarray(xs, float), np.asarray(ts, float)
    A = np.stack([np.ones_like(xs), xs], axis=1)
    coef, *_ = np.linalg.lstsq(A, ts, rcond=None)
    fit = A @ coef
    return float(np.max(np.abs(ts - fit) / fit))


def scaling_timings(axis: str, base=None, factors=(1, 2, 4, 8, 16), seed: int = 0, repeats: int = 7):
    """Wall time of ``hash_sequence`` as one of n, m, p grows; returns (xs, times)."""
    base = dict(n=400, m=256, p=2000, d=64, k=2) | (base or {})
    rng = np.random.default_rng([seed, 27])
    xs, ts = [], []
    for f in factors:
        cfg = dict(base)
        cfg[axis] = base[axis] * f
        v = VideoSequence(rng.standard_normal((cfg["n"], cfg["d"])))
        bank = make_bank(1, cfg["m"], cfg["d"])
        spec = make_hash_spec(bank, cfg["k"], cfg["p"], 0.5, Mode.PEAK, 2)
        xs.append(cfg[axis])
        ts.append(time_hash(spec, v, repeats))
    return xs, ts


def check_linearity(seed: int = 0, tolerance: float = 0.5) -> CheckResult:
    res = CheckResult("hash cost linear in n, m, p", 0, 0)
    devs = []
    for axis in ("n", "m", "p"):
        xs, ts = scaling_timings(axis, seed=seed)
        dev = linear_fit_deviation(xs, ts)
        devs.append(f"{axis}: {dev:.2f}")
        res.total += 1
        if dev < tolerance:
            res.passed += 1
        else:
            res.failures.append((axis, dev))
    res.detail = "max relative deviation " + ", ".join(devs)
    return res


def run_suite(seed: int = 0, count: int = 200, oracle_count: int = 1000, timing: bool = True) -> List[CheckResult]:
    videos = random_corpus(seed, count)
    banks, cases = build_cases(videos, seed)
    results = [
        check_core_invariants(seed),
        check_translation(banks, cases, seed),
        check_rate(banks, cases, seed),
        check_time_warp(banks, cases, seed),
        check_scale(banks, cases, seed),
        check_scale_same_theta(banks, cases),
        check_oracle(seed, oracle_count),
    ]
    if timing:
        results.append(check_linearity(seed))
    return results
