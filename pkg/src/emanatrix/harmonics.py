"""
Computational harmonic / intermodulation-product detector.

A peak list is turned into a difference matrix (one column per peak pair),
sorted with an index-tracking quicksort, optionally smoothed for small
frequency variations, and then split into product groups, one per
generator step. Each product group is walked column by column to build
harmonic (or IMP) lists.

Generators are registered smallest-first: a sorted difference becomes a new
generator only when it is not an integer multiple of an earlier one. A
generator's product group holds every column that is a multiple of it, so a
column may sit in several groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

HARMONIC = "harmonic"
IMP = "imp"


@dataclass(frozen=True)
class DetectorConfig:
    d_min_hz: float
    d_max_hz: float
    eps_freq: float = 0.005
    eps_mult: float = 0.01
    flag_subband: bool = False
    # absolute frequency uncertainty of one peak (bin quantization)
    tol_abs_hz: float = 0.0
    dedupe_hz: float = 0.0

    def __post_init__(self):
        if not 0 < self.d_min_hz < self.d_max_hz:
            raise ValueError(f"need 0 < d_min_hz < d_max_hz, got {self.d_min_hz}, {self.d_max_hz}")
        for name in ("eps_freq", "eps_mult"):
            v = getattr(self, name)
            if not 0 < v <= 0.1:
                raise ValueError(f"{name} must lie in (0, 0.1], got {v}")
        if self.tol_abs_hz < 0 or self.dedupe_hz < 0:
            raise ValueError("tol_abs_hz and dedupe_hz must be >= 0")

    @property
    def kind(self) -> str:
        return IMP if self.flag_subband else HARMONIC

    def with_(self, **kw) -> "DetectorConfig":
        return replace(self, **kw)


@dataclass
class DifferenceMatrix:
    """Pairwise differences with the peak indices they came from.

    Stored column-wise as three parallel arrays, mirroring the 3 x n layout
    (difference, lower index, upper index).
    """

    diff: np.ndarray
    idx_lo: np.ndarray
    idx_hi: np.ndarray

    def __post_init__(self):
        self.diff = np.asarray(self.diff, dtype=np.float64).ravel()
        self.idx_lo = np.asarray(self.idx_lo, dtype=np.int64).ravel()
        self.idx_hi = np.asarray(self.idx_hi, dtype=np.int64).ravel()
        if not (self.diff.size == self.idx_lo.size == self.idx_hi.size):
            raise ValueError("difference matrix rows must have equal length")

    def __len__(self):
        return self.diff.size

    @classmethod
    def from_columns(cls, cols: Iterable[tuple]) -> "DifferenceMatrix":
        cols = list(cols)
        if not cols:
            return cls.empty()
        d, lo, hi = zip(*cols)
        return cls(d, lo, hi)

    @classmethod
    def empty(cls) -> "DifferenceMatrix":
        return cls(np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64))

    def columns(self) -> list[tuple]:
        return list(zip(self.diff.tolist(), self.idx_lo.tolist(), self.idx_hi.tolist()))

    def take(self, sel) -> "DifferenceMatrix":
        return DifferenceMatrix(self.diff[sel], self.idx_lo[sel], self.idx_hi[sel])


@dataclass
class HarmonicGroup:
    kind: str
    step_hz: float
    member_indices: list
    member_freqs_hz: list = field(default_factory=list)

    def frozen_freqs(self) -> frozenset:
        return frozenset(self.member_freqs_hz)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "step_hz": float(self.step_hz),
            "member_freqs_hz": [float(f) for f in self.member_freqs_hz],
            "member_indices": [int(i) for i in self.member_indices],
        }


def is_multiple(x, y: float, eps_mult: float, tol_abs: float = 0.0):
    """Whether `x` is an integer multiple (>= 1) of `y` within tolerance.

    Allowed error is ``eps_mult * y`` plus ``tol_abs`` per peak involved
    (``n + 1`` peaks contribute to ``x - n*y``). A tolerance reaching a
    quarter of `y` makes the multiple ambiguous and the test fails.
    """
    x = np.asarray(x, dtype=np.float64)
    n = np.rint(x / y)
    tol = eps_mult * y + tol_abs * (n + 1)
    return (n >= 1) & (np.abs(x - n * y) <= tol) & (tol < 0.25 * y)


def custom_quicksort(cols: DifferenceMatrix) -> DifferenceMatrix:
    """Sort columns by difference, carrying each column's indices along.

    Iterative three-way partitioning; columns with equal differences keep
    their input order, so the result is a stable sort.
    """
    n = len(cols)
    if n < 2:
        return cols.take(slice(None))
    order = np.arange(n)
    keys = cols.diff
    out = np.empty(n, dtype=np.int64)
    # stack of (start offset in output, candidate positions)
    stack = [(0, order)]
    while stack:
        start, part = stack.pop()
        c = part.size
        if c < 2:
            out[start:start + c] = part
            continue
        k = keys[part]
        # median of first/middle/last avoids quadratic behaviour on sorted input
        pivot = float(np.median(k[[0, c // 2, c - 1]]))
        lo, eq, hi = part[k < pivot], part[k == pivot], part[k > pivot]
        out[start + lo.size:start + lo.size + eq.size] = eq
        stack.append((start, lo))
        stack.append((start + lo.size + eq.size, hi))
    return cols.take(out)


def _fix_freq_var_pass(d: np.ndarray, eps_freq: float) -> np.ndarray:
    d = d.copy()
    n = d.size
    i = 0
    while i < n - 1:
        j = i
        while abs(d[i] - d[j + 1]) <= eps_freq * d[j + 1]:
            j += 1
            if j == n - 1:
                break
        if j > i:
            d[i:j + 1] = d[i:j + 1].mean()
        i = j + 1
    return d


def fix_freq_var(cols: DifferenceMatrix, eps_freq: float) -> DifferenceMatrix:
    """Replace runs of near-equal sorted differences by their mean.

    A run grows while the next value lies within ``eps_freq`` (relative) of
    the run's first value. Passes repeat until nothing changes, which makes
    the operation idempotent; each effective pass strictly reduces the
    number of distinct values.
    """
    d = cols.diff
    while True:
        nd = _fix_freq_var_pass(d, eps_freq)
        if np.array_equal(nd, d):
            break
        d = nd
    return DifferenceMatrix(d, cols.idx_lo.copy(), cols.idx_hi.copy())


def build_difference_matrix(freqs: Sequence[float], cfg: DetectorConfig) -> DifferenceMatrix:
    """Columns for every pair j<k whose separation lies in [d_min, d_max]."""
    f = np.asarray(freqs, dtype=np.float64)
    if f.size < 2:
        return DifferenceMatrix.empty()
    j, k = np.triu_indices(f.size, 1)
    d = np.abs(f[k] - f[j])
    keep = (d >= cfg.d_min_hz) & (d <= cfg.d_max_hz)
    return DifferenceMatrix(d[keep], j[keep], k[keep])


def find_harmonics(group: DifferenceMatrix, freqs: Sequence[float], step_hz: Optional[float] = None,
                   eps_mult: float = 0.01, tol_abs: float = 0.0) -> list[list[int]]:
    """Walk a product group column by column and collect harmonic lists.

    A column whose indices are both unknown joins an existing list when its
    lower frequency is an integer number of steps away from that list's
    most recent member, otherwise it opens a new list. Lists with two
    members or fewer are dropped.
    """
    if len(group) == 0:
        return []
    f = np.asarray(freqs, dtype=np.float64)
    step = float(group.diff[0]) if step_hz is None else float(step_hz)
    lists: list[list[int]] = []
    members: list[set] = []
    for d, a, b in zip(group.diff.tolist(), group.idx_lo.tolist(), group.idx_hi.tolist()):
        placed = False
        for lst, mem in zip(lists, members):
            has_a, has_b = a in mem, b in mem
            if has_a and has_b:
                placed = True
            elif has_a:
                lst.append(b)
                mem.add(b)
                placed = True
            elif has_b:
                lst.append(a)
                mem.add(a)
                placed = True
            else:
                separation = abs(f[lst[-1]] - f[a])
                if is_multiple(separation, step, eps_mult, tol_abs):
                    lst.extend((a, b))
                    mem.update((a, b))
                    placed = True
            if placed:
                break
        if not placed:
            lists.append([a, b])
            members.append({a, b})
    return [lst for lst in lists if len(lst) > 2]


def _dedupe(f: np.ndarray, tol: float) -> np.ndarray:
    """Indices of `f` (ascending) keeping the first of any run closer than `tol`."""
    keep = [0]
    for i in range(1, f.size):
        if f[i] - f[keep[-1]] > tol:
            keep.append(i)
    return np.asarray(keep, dtype=np.int64)


def _refine_step(freqs: np.ndarray, step: float) -> float:
    """Least-squares step through members placed on integer multiples."""
    if freqs.size < 2:
        return step
    n = np.rint((freqs - freqs[0]) / step)
    if np.ptp(n) == 0:
        return step
    slope = np.polyfit(n, freqs, 1)[0]
    return float(slope)


def detect(freqs: Sequence[float], cfg: DetectorConfig) -> tuple[list[float], list[HarmonicGroup]]:
    """Find harmonic (or IMP) groups in a list of peak frequencies.

    Returns ``(steps, groups)``; ``steps[i]`` is the generator that produced
    ``groups[i]``. Group member indices refer to positions in `freqs`.
    """
    f_in = np.asarray(freqs, dtype=np.float64)
    if f_in.size < 3:
        return [], []
    order = np.argsort(f_in, kind="stable")
    f_sorted = f_in[order]
    keep = _dedupe(f_sorted, cfg.dedupe_hz)
    orig = order[keep]
    f = f_sorted[keep]

    D = build_difference_matrix(f, cfg)
    if len(D) < 2:
        return [], []
    D = custom_quicksort(D)
    if not cfg.flag_subband:
        D = fix_freq_var(D, cfg.eps_freq)

    steps: list[float] = []
    groups: list[HarmonicGroup] = []
    covered = np.zeros(len(D), dtype=bool)
    while not covered.all():
        i = int(np.argmin(covered))  # smallest difference not yet explained
        gen = float(D.diff[i])
        sel = is_multiple(D.diff, gen, cfg.eps_mult, cfg.tol_abs_hz)
        sel[i] = True
        covered |= sel
        if sel.sum() <= 2:
            continue
        group = D.take(sel)
        if cfg.flag_subband:
            multiples = np.rint(group.diff / gen)
            if np.unique(multiples).size < 2:
                continue
        for lst in find_harmonics(group, f, gen, cfg.eps_mult, cfg.tol_abs_hz):
            lst = sorted(lst, key=lambda k: f[k])
            member_f = f[lst]
            steps.append(gen)
            groups.append(HarmonicGroup(
                kind=cfg.kind,
                step_hz=_refine_step(member_f, gen),
                member_indices=[int(orig[k]) for k in lst],
                member_freqs_hz=[float(x) for x in member_f],
            ))
    return steps, groups


def _collapse_clusters(freqs: np.ndarray, power: np.ndarray, width: float) -> np.ndarray:
    """Indices of the strongest peak in every run of peaks closer than `width`."""
    if freqs.size == 0 or width <= 0:
        return np.arange(freqs.size)
    keep = []
    start = 0
    for i in range(1, freqs.size + 1):
        if i == freqs.size or freqs[i] - freqs[i - 1] > width:
            run = np.arange(start, i)
            keep.append(int(run[np.argmax(power[run])]))
            start = i
    return np.asarray(keep, dtype=np.int64)


def detect_two_pass(peaks, coarse_cfg: DetectorConfig, fine_cfg: DetectorConfig,
                    cluster_hz: float = 0.0) -> list[HarmonicGroup]:
    """Harmonic pass then IMP pass over one spectrum's peaks.

    The fine pass only looks at separations below half the smallest
    harmonic step found by the coarse pass. `cluster_hz` > 0 feeds the
    coarse pass one representative (strongest) peak per cluster of peaks
    closer than `cluster_hz`. Group member indices refer to `peaks`.
    """
    peaks = sorted(peaks, key=lambda p: p.freq_hz)
    freqs = np.array([p.freq_hz for p in peaks], dtype=np.float64)
    power = np.array([p.power_dbm for p in peaks], dtype=np.float64)
    if freqs.size < 3:
        return []

    rep = _collapse_clusters(freqs, power, cluster_hz)
    _, coarse = detect(freqs[rep], coarse_cfg.with_(flag_subband=False))
    for g in coarse:
        g.member_indices = [int(rep[k]) for k in g.member_indices]

    fine_cfg = fine_cfg.with_(flag_subband=True)
    if coarse:
        d_max = min(fine_cfg.d_max_hz, 0.5 * min(g.step_hz for g in coarse))
        if d_max <= fine_cfg.d_min_hz:
            fine = []
        else:
            _, fine = detect(freqs, fine_cfg.with_(d_max_hz=d_max))
    else:
        _, fine = detect(freqs, fine_cfg)

    out: list[HarmonicGroup] = []
    seen = set()
    for g in coarse + fine:
        key = frozenset(g.member_indices)
        if key in seen:
            continue
        seen.add(key)
        out.append(g)
    return out
