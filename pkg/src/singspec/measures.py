"""Singular measures given by exact oracles, plus the smoothing kernels.

Every one-dimensional model lives on ``[0, 1)`` viewed as a subset of the
real line.  Fourier coefficients use the convention

    c(m) = \\int_0^1 exp(-2 pi i m x) d mu(x),

so probability measures have ``c(0) == 1``.  Ball masses are taken with the
Euclidean metric of the line (no wrap-around).
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .errors import (
    ContractError,
    ResolutionError,
    TruncationError,
    UnsupportedModelError,
)

FACTOR_EPS = 1e-14
MAX_PRODUCT_DEPTH = 4000
CONVENTION = "c(m) = int_0^1 exp(-2*pi*i*m*x) dmu(x)"


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, index)``."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(index)]))


# --------------------------------------------------------------------------
# measure models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SelfSimilarMeasure1D:
    """Invariant measure of the maps ``x -> ratio*x + t_i`` with weights ``p_i``."""

    ratio: float
    translations: tuple
    weights: tuple
    kind: str = field(default="self_similar", init=False)

    def __post_init__(self):
        object.__setattr__(self, "translations", tuple(float(t) for t in self.translations))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not 0.0 < self.ratio < 1.0:
            raise ContractError(f"ratio must lie in (0,1), got {self.ratio}")
        if len(self.translations) != len(self.weights):
            raise ContractError("translations and weights differ in length")
        if len(self.weights) < 2:
            raise ContractError("a single map gives an atom; use AtomMeasure")
        if any(w <= 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-12:
            raise ContractError("weights must be positive and sum to 1")
        if any(not 0.0 <= t < 1.0 for t in self.translations):
            raise ContractError("translations must lie in [0,1)")
        lo, hi = self.hull
        if lo < 0.0 or hi > 1.0 + 1e-15:
            raise ContractError("images of [0,1) leave the unit interval")

    @property
    def hull(self) -> tuple[float, float]:
        """Convex hull of the attractor: the fixed points of the extreme maps."""
        d = 1.0 - self.ratio
        return min(self.translations) / d, max(self.translations) / d

    @property
    def similarity_dimension(self) -> float:
        """Entropy over log(1/ratio): the a.e. local dimension when cylinders do not overlap."""
        p = np.asarray(self.weights)
        return float(-(p * np.log(p)).sum() / math.log(1.0 / self.ratio))

    def transform(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        t = np.asarray(self.translations)
        p = np.asarray(self.weights)
        tmax = max(abs(t).max(), 1e-300)
        scale = np.abs(xi).max(initial=0.0)
        out = np.ones(xi.shape, dtype=complex)
        for depth in range(MAX_PRODUCT_DEPTH):
            r = self.ratio**depth
            if 2 * math.pi * r * scale * tmax < FACTOR_EPS:
                return out
            arg = np.multiply.outer(r * xi, t)
            out *= np.exp(-2j * math.pi * arg) @ p
        raise TruncationError(
            f"product factors still exceed {FACTOR_EPS} after {MAX_PRODUCT_DEPTH} terms"
        )

    def ball_mass(self, center: float, radius: float) -> float:
        a, b = _ball_interval(center, radius)
        h0, h1 = self.hull
        stop = radius * 1e-10
        total = 0.0
        stack = [(0.0, 1.0, 1.0)]
        t, p, rho = self.translations, self.weights, self.ratio
        while stack:
            off, scale, w = stack.pop()
            lo, hi = off + scale * h0, off + scale * h1
            if hi < a or lo > b:
                continue
            if lo >= a and hi <= b:
                total += w
                continue
            if hi - lo < stop:
                total += w * (min(hi, b) - max(lo, a)) / (hi - lo)
                continue
            for ti, pi in zip(t, p):
                stack.append((off + scale * ti, scale * rho, w * pi))
        return total

    def atoms(self, lo: float, hi: float, cell: float):
        """Cylinder midpoints/masses for cylinders of length < ``cell`` meeting [lo, hi]."""
        h0, h1 = self.hull
        pos, mass = [], []
        stack = [(0.0, 1.0, 1.0)]
        while stack:
            off, scale, w = stack.pop()
            c0, c1 = off + scale * h0, off + scale * h1
            if c1 < lo or c0 > hi:
                continue
            if c1 - c0 < cell:
                pos.append(0.5 * (c0 + c1))
                mass.append(w)
                continue
            for ti, pi in zip(self.translations, self.weights):
                stack.append((off + scale * ti, scale * self.ratio, w * pi))
        return np.asarray(pos), np.asarray(mass)

    def smoothed_density(self, t: float, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        pos, mass = self.atoms(x.min() - 12 * t, x.max() + 12 * t, t / 400)
        if pos.size == 0:
            return np.zeros_like(x)
        d = x[:, None] - pos[None, :]
        return (np.exp(-(d**2) / (2 * t * t)) @ mass) / (math.sqrt(2 * math.pi) * t)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        depth = int(math.ceil(math.log(1e-17) / math.log(self.ratio)))
        digits = rng.choice(len(self.weights), size=(size, depth), p=self.weights)
        t = np.asarray(self.translations)[digits]
        return t @ (self.ratio ** np.arange(depth))

    def to_config(self) -> dict:
        return {
            "kind": "self_similar",
            "ratio": self.ratio,
            "translations": list(self.translations),
            "weights": list(self.weights),
        }


def cantor_measure() -> SelfSimilarMeasure1D:
    """Middle-thirds Cantor measure."""
    return SelfSimilarMeasure1D(1 / 3, (0.0, 2 / 3), (0.5, 0.5))


@dataclass(frozen=True)
class RieszProductMeasure:
    """Weak limit of prod_k (1 + a_k cos(2 pi lambda_k x)), truncated at ``truncation_depth`` factors."""

    frequencies: tuple
    amplitudes: tuple
    truncation_depth: int | None = None
    kind: str = field(default="riesz", init=False)

    def __post_init__(self):
        f = tuple(int(v) for v in self.frequencies)
        a = tuple(float(v) for v in self.amplitudes)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "amplitudes", a)
        depth = len(f) if self.truncation_depth is None else int(self.truncation_depth)
        object.__setattr__(self, "truncation_depth", depth)
        if len(f) != len(a) or not f:
            raise ContractError("need one amplitude per frequency")
        if f[0] <= 0 or any(f[i + 1] < 3 * f[i] for i in range(len(f) - 1)):
            raise ContractError("frequencies must be positive with ratio >= 3")
        if any(abs(v) > 1 for v in a):
            raise ContractError("amplitudes must lie in [-1, 1]")
        if not 1 <= depth <= len(f):
            raise ContractError("truncation_depth out of range")

    @property
    def active(self):
        k = self.truncation_depth
        return self.frequencies[:k], self.amplitudes[:k]

    def spectrum_coefficients(self) -> dict[int, float]:
        """Exact coefficients on the signed-sum set; dissociativity makes sums unique."""
        return dict(self._coeffs)

    @cached_property
    def _coeffs(self) -> dict[int, float]:
        lam, amp = self.active
        coeffs: dict[int, float] = {}
        for eps in itertools.product((-1, 0, 1), repeat=len(lam)):
            m = sum(e * l for e, l in zip(eps, lam))
            v = 1.0
            for e, a in zip(eps, amp):
                if e:
                    v *= a / 2
            coeffs[m] = coeffs.get(m, 0.0) + v
        return coeffs

    @cached_property
    def _positive_spectrum(self):
        items = sorted((m, c) for m, c in self._coeffs.items() if m > 0)
        return np.array([m for m, _ in items], float), np.array([c for _, c in items])

    @property
    def _mean(self) -> float:
        return self._coeffs.get(0, 0.0)

    def transform(self, m) -> np.ndarray:
        m = np.asarray(m)
        if not np.issubdtype(m.dtype, np.integer):
            raise UnsupportedModelError("Riesz products are periodic: integer frequencies only")
        coeffs = self._coeffs
        return np.array([coeffs.get(int(k), 0.0) for k in m.ravel()], dtype=complex).reshape(m.shape)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.ones_like(x)
        for lam, a in zip(*self.active):
            out = out * (1 + a * np.cos(2 * math.pi * lam * x))
        return out

    def ball_mass(self, center: float, radius: float) -> float:
        a, b = _ball_interval(center, radius)
        a, b = max(a, 0.0), min(b, 1.0)
        if b <= a:
            return 0.0
        # exact antiderivative of the finite cosine series; the sine
        # difference is taken in product form to avoid cancellation
        m, c = self._positive_spectrum
        w = 2 * math.pi * m
        total = self._mean * (b - a)
        total += float(np.sum(4 * c * np.cos(w * (a + b) / 2) * np.sin(w * (b - a) / 2) / w))
        return max(total, 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        bound = float(np.prod([1 + abs(a) for a in self.active[1]]))
        out = np.empty(0)
        while out.size < size:
            x = rng.random(4 * size + 64)
            u = rng.random(x.size) * bound
            out = np.concatenate([out, x[u < self.density(x)]])
        return out[:size]

    def to_config(self) -> dict:
        return {
            "kind": "riesz",
            "frequencies": list(self.frequencies),
            "amplitudes": list(self.amplitudes),
            "truncation_depth": self.truncation_depth,
        }


@dataclass(frozen=True)
class AtomMeasure:
    """Unit point mass."""

    location: tuple = (0.0,)
    kind: str = field(default="atom", init=False)

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.location, dtype=float))
        object.__setattr__(self, "location", tuple(loc.tolist()))

    @property
    def dim(self) -> int:
        return len(self.location)

    def transform(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.dim == 1:
            return np.exp(-2j * math.pi * xi * self.location[0])
        return np.exp(-2j * math.pi * (xi @ np.asarray(self.location)))

    def ball_mass(self, center, radius: float) -> float:
        _check_radius(radius)
        d = np.linalg.norm(np.atleast_1d(np.asarray(center, float)) - np.asarray(self.location))
        return 1.0 if d <= radius else 0.0

    def smoothed_density(self, t: float, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return gaussian(t, 1, x - self.location[0])

    def sample(self, rng, size: int) -> np.ndarray:
        return np.full(size, self.location[0]) if self.dim == 1 else np.tile(self.location, (size, 1))

    def to_config(self) -> dict:
        return {"kind": "atom", "location": list(self.location)}


@dataclass(frozen=True)
class LebesgueMeasure:
    """Lebesgue measure on [0, 1)."""

    kind: str = field(default="lebesgue", init=False)

    def transform(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = np.ones(xi.shape, dtype=complex)
        nz = xi != 0
        w = 2j * math.pi * xi[nz]
        out[nz] = (1 - np.exp(-w)) / w
        # integer frequencies vanish exactly
        out[nz & (xi == np.round(xi))] = 0.0
        return out

    def ball_mass(self, center: float, radius: float) -> float:
        a, b = _ball_interval(center, radius)
        return max(0.0, min(b, 1.0) - max(a, 0.0))

    def smoothed_density(self, t: float, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return ndtr(x / t) - ndtr((x - 1) / t)

    def sample(self, rng, size: int) -> np.ndarray:
        return rng.random(size)

    def to_config(self) -> dict:
        return {"kind": "lebesgue"}


@dataclass(frozen=True)
class ScaledMeasure:
    """``factor * base``; only the ball-mass oracle and sampling are forwarded."""

    base: object
    factor: float

    def ball_mass(self, center, radius: float) -> float:
        return self.factor * self.base.ball_mass(center, radius)

    def sample(self, rng, size: int):
        return self.base.sample(rng, size)


MeasureModel = SelfSimilarMeasure1D | RieszProductMeasure | AtomMeasure | LebesgueMeasure


def _check_radius(radius: float) -> None:
    if not radius > 0:
        raise ContractError(f"radius must be positive, got {radius}")


def _ball_interval(center: float, radius: float) -> tuple[float, float]:
    _check_radius(radius)
    center = float(np.asarray(center).ravel()[0])
    if radius < 4 * np.finfo(float).eps * max(1.0, abs(center)):
        raise ResolutionError(f"radius {radius:g} is below the float resolution at x={center}")
    return center - radius, center + radius


def measure_from_config(cfg: dict) -> MeasureModel:
    """Build a model from ``{"kind": ..., parameters...}``; a ``seed`` key is ignored."""
    kind = cfg.get("kind")
    if kind == "self_similar":
        if cfg.get("preset") == "cantor":
            return cantor_measure()
        return SelfSimilarMeasure1D(cfg["ratio"], tuple(cfg["translations"]), tuple(cfg["weights"]))
    if kind == "riesz":
        return RieszProductMeasure(
            tuple(cfg["frequencies"]), tuple(cfg["amplitudes"]), cfg.get("truncation_depth")
        )
    if kind == "atom":
        return AtomMeasure(tuple(np.atleast_1d(cfg.get("location", 0.0))))
    if kind == "lebesgue":
        return LebesgueMeasure()
    raise ContractError(f"unknown measure kind {kind!r}")


# --------------------------------------------------------------------------
# coefficient tables
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FourierTable:
    """Coefficients ``c(m)`` for ``|m| <= window``; stored at index ``m + window``."""

    window: int
    values: np.ndarray
    convention: str = CONVENTION

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (2 * self.window + 1,):
            raise ContractError("values must have length 2*window + 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(-self.window, self.window + 1)

    def __getitem__(self, m: int) -> complex:
        if abs(m) > self.window:
            return 0j
        return complex(self.values[m + self.window])

    def as_dict(self) -> dict[int, complex]:
        return {int(m): complex(c) for m, c in zip(self.frequencies, self.values) if c != 0}

    @classmethod
    def from_dict(cls, coeffs: dict, window: int | None = None) -> "FourierTable":
        if window is None:
            window = max((abs(int(m)) for m in coeffs), default=0)
        v = np.zeros(2 * window + 1, dtype=complex)
        for m, c in coeffs.items():
            if abs(m) <= window:
                v[int(m) + window] = c
        return cls(window, v)

    def is_conjugate_symmetric(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.values - np.conj(self.values[::-1])) <= tol))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "re", "im"])
            for m, c in zip(self.frequencies, self.values):
                w.writerow([int(m), repr(float(c.real)), repr(float(c.imag))])

    @classmethod
    def from_csv(cls, path) -> "FourierTable":
        coeffs = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                coeffs[int(row["m"])] = complex(float(row["re"]), float(row["im"]))
        return cls.from_dict(coeffs, max(abs(m) for m in coeffs))


def fourier_coefficients(measure: MeasureModel, window: int) -> FourierTable:
    if window < 1:
        raise ContractError("window must be >= 1")
    m = np.arange(-window, window + 1)
    if isinstance(measure, RieszProductMeasure):
        return FourierTable(window, measure.transform(m))
    vals = measure.transform(m.astype(float))
    return FourierTable(window, vals)


def ball_mass(measure: MeasureModel, center, radius: float) -> float:
    return float(measure.ball_mass(center, radius))


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


def gaussian(t: float, dim: int, x) -> np.ndarray:
    """Heat kernel g_t on R^dim; ``x`` has trailing axis ``dim`` unless dim == 1."""
    if t <= 0:
        raise ContractError("t must be positive")
    x = np.asarray(x, dtype=float)
    r2 = x * x if dim == 1 else (x * x).sum(-1)
    return np.exp(-r2 / (2 * t * t)) / ((2 * math.pi) ** (dim / 2) * t**dim)


def gaussian_transform(t: float, dim: int, xi) -> np.ndarray:
    if t <= 0:
        raise ContractError("t must be positive")
    xi = np.asarray(xi, dtype=float)
    r2 = xi * xi if dim == 1 else (xi * xi).sum(-1)
    return np.exp(-2 * math.pi**2 * t * t * r2)


def fejer_weights(order: int, m) -> np.ndarray:
    m = np.abs(np.asarray(m, dtype=float))
    return np.clip(1.0 - m / (order + 1), 0.0, None)


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    width: float
    ambient_dim: int = 1

    def __post_init__(self):
        if self.kind not in ("gaussian", "fejer"):
            raise ContractError(f"unknown kernel {self.kind!r}")
        if self.width <= 0:
            raise ContractError("kernel width must be positive")

    def multiplier(self, m) -> np.ndarray:
        if self.kind == "gaussian":
            return gaussian_transform(self.width, 1, m)
        return fejer_weights(int(self.width), m)


def mollify(table: FourierTable, kernel: KernelSpec) -> FourierTable:
    if kernel.ambient_dim != 1:
        raise ContractError("coefficient tables live on the circle (dimension 1)")
    return FourierTable(table.window, table.values * kernel.multiplier(table.frequencies))


def load_measure(path) -> MeasureModel:
    return measure_from_config(json.loads(Path(path).read_text()))
