"""Thresholded spectra and counts of additive configurations in them."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from .errors import CapacityError, ContractError
from .measures import FourierTable

# products of counts recovered from float FFTs are exact below this bound
SAFE_INTEGER = 2**50


@dataclass(frozen=True)
class SpectrumWindow:
    n: int
    members: tuple
    threshold: float = 0.0

    def __post_init__(self):
        mem = tuple(sorted({int(m) for m in self.members}))
        if self.n < 0:
            raise ContractError("window radius must be non-negative")
        if mem and (mem[0] < -self.n or mem[-1] > self.n):
            raise ContractError("members must lie in [-n, n]")
        object.__setattr__(self, "members", mem)

    @classmethod
    def full(cls, n: int) -> "SpectrumWindow":
        return cls(n, tuple(range(-n, n + 1)))

    def indicator(self) -> np.ndarray:
        """Boolean array over ``[-n, n]`` (index ``m + n``)."""
        ind = np.zeros(2 * self.n + 1, dtype=bool)
        ind[np.asarray(self.members, dtype=np.int64) + self.n] = True
        return ind

    def restrict(self, n: int) -> "SpectrumWindow":
        return SpectrumWindow(n, tuple(m for m in self.members if -n <= m <= n), self.threshold)

    def negate(self) -> "SpectrumWindow":
        return SpectrumWindow(self.n, tuple(-m for m in self.members), self.threshold)

    def is_symmetric(self) -> bool:
        return set(self.members) == {-m for m in self.members}

    def __len__(self) -> int:
        return len(self.members)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m"])
            w.writerows([m] for m in self.members)

    @classmethod
    def from_csv(cls, path, n: int) -> "SpectrumWindow":
        with open(path, newline="") as fh:
            return cls(n, tuple(int(r["m"]) for r in csv.DictReader(fh)))


def extract_spectrum(table: FourierTable, tau: float = 0.0) -> SpectrumWindow:
    if tau < 0:
        raise ContractError("threshold must be non-negative")
    keep = np.abs(table.values) > tau
    return SpectrumWindow(table.window, tuple(table.frequencies[keep].tolist()), tau)


def count_triples_brute(S: SpectrumWindow) -> int:
    """#{(m, r) : m, m+r, m+2r in S}, by direct enumeration of shifts."""
    ind = S.indicator()
    L = ind.size
    total = int(ind.sum())  # r = 0
    for r in range(1, (L - 1) // 2 + 1):
        # each r > 0 progression, read backwards, is one with -r
        hits = ind[: L - 2 * r] & ind[r : L - r] & ind[2 * r :]
        total += 2 * int(hits.sum())
    return total


def count_triples_fft(S: SpectrumWindow) -> int:
    """Same count via t = sum_b 1_S(b) (1_S * 1_S)(2b)."""
    if not S.members:
        return 0
    n = S.n
    if (2 * n + 1) ** 2 >= SAFE_INTEGER:
        raise CapacityError(f"window n={n} exceeds the exact-integer range of the FFT count")
    ind = S.indicator().astype(float)
    size = 1 << math.ceil(math.log2(4 * n + 3))
    conv = irfft(rfft(ind, size) ** 2, size)[: 4 * n + 1]
    conv = np.rint(conv).astype(np.int64)  # index j <-> sum j - 2n
    # (1_S*1_S)(2b) sits at index 2b + 2n = 2*(b + n)
    return int(conv[0 : 4 * n + 1 : 2][S.indicator()].sum())


def trivial_triple_count(S: SpectrumWindow) -> int:
    """Pairs with r = 0 plus pairs with middle term 0, counted once."""
    mem = set(S.members)
    total = len(mem)
    if 0 in mem:
        total += sum(1 for m in mem if m > 0 and -m in mem) * 2
    return total


def has_nontrivial_3ap(S: SpectrumWindow) -> bool:
    return count_triples_brute(S) > trivial_triple_count(S)


@dataclass(frozen=True)
class GrowthFit:
    beta: float
    intercept: float
    residual: float
    ns: tuple
    counts: tuple

    def as_dict(self) -> dict:
        return {
            "beta": self.beta,
            "intercept": self.intercept,
            "residual": self.residual,
            "ns": list(self.ns),
            "counts": list(self.counts),
        }


def growth_exponent(counts) -> GrowthFit:
    """Least-squares slope of log t_n against log n."""
    pts = [(int(n), float(t)) for n, t in counts]
    if len(pts) < 4:
        raise ContractError("need at least 4 samples")
    ns = np.array([p[0] for p in pts], dtype=float)
    ts = np.array([p[1] for p in pts])
    if np.any(np.diff(ns) <= 0):
        raise ContractError("n must be strictly increasing")
    if np.any(ts <= 0):
        raise ContractError("log of a zero count is undefined")
    A = np.vstack([np.log(ns), np.ones_like(ns)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(ts), rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - np.log(ts)) ** 2)))
    return GrowthFit(float(coef[0]), float(coef[1]), res, tuple(int(n) for n in ns), tuple(ts.tolist()))


# --------------------------------------------------------------------------
# configurations in R^n
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfigFamily:
    matrices: tuple

    def __post_init__(self):
        mats = tuple(np.array(m, dtype=float, ndmin=2) for m in self.matrices)
        if not mats:
            raise ContractError("need at least one matrix")
        n = mats[0].shape[0]
        for m in mats:
            if m.shape != (n, n):
                raise ContractError("all matrices must be n x n with a common n")
            if not np.all(np.isfinite(m)):
                raise ContractError("matrices must be finite")
            m.setflags(write=False)
        object.__setattr__(self, "matrices", mats)

    @property
    def k(self) -> int:
        return len(self.matrices)

    @property
    def dim(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack(self.matrices)

    def to_config(self) -> list:
        return [m.tolist() for m in self.matrices]


@dataclass(frozen=True)
class GridSpectrum:
    dim: int
    half_width: float
    cells_per_axis: int
    indicator: np.ndarray = field(repr=False)

    def __post_init__(self):
        ind = np.asarray(self.indicator, dtype=bool)
        if ind.shape != (self.cells_per_axis,) * self.dim:
            raise ContractError("indicator shape does not match the grid")
        ind.setflags(write=False)
        object.__setattr__(self, "indicator", ind)

    @property
    def spacing(self) -> float:
        return 2 * self.half_width / self.cells_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def centers(self) -> np.ndarray:
        """Cell centres, shape ``cells^dim x dim`` in C order."""
        ax = -self.half_width + self.spacing * (np.arange(self.cells_per_axis) + 0.5)
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @classmethod
    def from_predicate(cls, dim, half_width, cells_per_axis, pred) -> "GridSpectrum":
        g = cls(dim, half_width, cells_per_axis, np.zeros((cells_per_axis,) * dim, bool))
        ind = np.asarray(pred(g.centers()), dtype=bool).reshape((cells_per_axis,) * dim)
        return cls(dim, half_width, cells_per_axis, ind)

    def lookup(self, pts: np.ndarray) -> np.ndarray:
        """Indicator at the nearest cell; points off the grid are non-members."""
        idx = np.floor((pts + self.half_width) / self.spacing).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < self.cells_per_axis), axis=-1)
        out = np.zeros(pts.shape[0], dtype=bool)
        out[inside] = self.indicator[tuple(idx[inside].T)]
        return out

    def header(self) -> dict:
        return {"dim": self.dim, "half_width": self.half_width, "cells_per_axis": self.cells_per_axis}

    def save(self, stem) -> None:
        stem = Path(stem)
        stem.with_suffix(".json").write_text(json.dumps(self.header()))
        np.packbits(self.indicator.ravel()).tofile(stem.with_suffix(".bin"))

    @classmethod
    def load(cls, stem) -> "GridSpectrum":
        stem = Path(stem)
        h = json.loads(stem.with_suffix(".json").read_text())
        size = h["cells_per_axis"] ** h["dim"]
        bits = np.unpackbits(np.fromfile(stem.with_suffix(".bin"), dtype=np.uint8))[:size]
        return cls(h["dim"], h["half_width"], h["cells_per_axis"],
                   bits.astype(bool).reshape((h["cells_per_axis"],) * h["dim"]))


def count_b_configurations(G: GridSpectrum, fam: ConfigFamily) -> tuple[int, float]:
    if fam.dim != G.dim:
        raise ContractError(f"family acts on R^{fam.dim}, grid is R^{G.dim}")
    xi = G.centers()
    ok = G.indicator.ravel().copy()
    for B in fam.matrices:
        ok &= G.lookup(xi @ B.T)
    count = int(ok.sum())
    return count, count * G.cell_volume
