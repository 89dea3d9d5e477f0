"""Local and Hausdorff dimension estimates from ball masses, and the bound formulas."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .configurations import count_triples_fft, extract_spectrum, growth_exponent
from .errors import ContractError, NotInSupportError, UnsupportedModelError
from .measures import fourier_coefficients, sample_rng

MODES = ("liminf-proxy", "limsup-proxy", "slope")
DEFAULT_RADII = tuple(2.0 ** -np.arange(6, 41))


@dataclass(frozen=True)
class DimensionEstimate:
    value: float
    radii_range: tuple
    fit_residual: float
    mode: str

    def as_dict(self) -> dict:
        return asdict(self)


def _check_radii(radii) -> np.ndarray:
    r = np.asarray(radii, dtype=float)
    if r.size < 8:
        raise ContractError("need at least 8 radii")
    if np.any(r <= 0) or np.any(np.diff(r) >= 0):
        raise ContractError("radii must be positive and strictly decreasing")
    q = r[1:] / r[:-1]
    if np.ptp(np.log(q)) > 1e-9:
        raise ContractError("radii must form a geometric ladder")
    return r


def _anchored_chords(log_mass: np.ndarray, log_r: np.ndarray):
    """Chord slopes from the coarsest radius to each radius of the finest half."""
    half = log_r.size // 2
    dm = log_mass[half:] - log_mass[0]
    dr = log_r[half:] - log_r[0]
    return dm / dr, dm, dr


def local_dimension(measure, x, radii=DEFAULT_RADII, mode: str = "liminf-proxy") -> DimensionEstimate:
    """Estimate log mu(B(x,r)) / log r as r -> 0 on a geometric ladder.

    Each chord ``log(mu(B(x,r))/mu(B(x,r0))) / log(r/r0)`` against the coarsest
    radius ``r0`` removes the multiplicative constant.  The proxies take the
    min / max over the finest half of the ladder; ``slope`` is the least-squares
    slope through the anchor, a weighted mean of the same chords.
    """
    if mode not in MODES:
        raise ContractError(f"mode must be one of {MODES}")
    r = _check_radii(radii)
    mass = np.array([measure.ball_mass(x, ri) for ri in r])
    if not mass[0] > 0:
        raise NotInSupportError(f"no mass within {r[0]:g} of {x}")
    if np.any(mass <= 0):
        raise NotInSupportError(f"ball mass vanishes at radius {r[mass <= 0][0]:g}")
    lm, lr = np.log(mass), np.log(r)
    chords, dm, dr = _anchored_chords(lm, lr)
    fit = float(dm @ dr / (dr @ dr))
    resid = float(np.sqrt(np.mean((dm - fit * dr) ** 2)))
    value = {"liminf-proxy": chords.min(), "limsup-proxy": chords.max(), "slope": fit}[mode]
    # + 0.0 turns a -0.0 chord (constant mass) into 0.0
    return DimensionEstimate(float(value) + 0.0, (float(r[-1]), float(r[0])), resid, mode)


def measure_dimension(measure, sample_count: int = 200, seed: int = 0, radii=DEFAULT_RADII,
                      quantile: float = 5.0) -> DimensionEstimate:
    """Low quantile of liminf-proxies at mu-distributed points."""
    if not hasattr(measure, "sample"):
        raise UnsupportedModelError(f"{type(measure).__name__} has no sampler")
    if sample_count < 1:
        raise ContractError("sample_count must be positive")
    values, resid = [], []
    for i in range(sample_count):
        x = float(np.ravel(measure.sample(sample_rng(seed, i), 1))[0])
        est = local_dimension(measure, x, radii, "liminf-proxy")
        values.append(est.value)
        resid.append(est.fit_residual)
    r = np.asarray(radii, dtype=float)
    return DimensionEstimate(
        float(np.percentile(values, quantile)) + 0.0,
        (float(r[-1]), float(r[0])),
        float(np.median(resid)),
        "liminf-proxy",
    )


def corollary_bound(beta: float) -> float:
    if not 0.0 <= beta <= 2.0:
        raise ContractError(f"beta must lie in [0, 2], got {beta}")
    return (2.0 - beta) / 3.0


def dimension_bound(n: int, k: int) -> float:
    if n < 1 or k < 1:
        raise ContractError("n and k must be positive")
    return n / (k + 1)


@dataclass
class CorollaryReport:
    beta_hat: float
    d_hat: float
    bound: float
    tolerance: float
    passed: bool
    windows: list
    counts: list
    fit_residual: float

    def as_dict(self) -> dict:
        return asdict(self)


def certify_corollary(measure, windows, tau: float = 0.0, sample_count: int = 200, seed: int = 0,
                      tolerance: float = 0.1, radii=DEFAULT_RADII) -> CorollaryReport:
    """Check d_hat + tolerance >= (2 - beta_hat)/3 with beta_hat the growth exponent of t_n."""
    windows = sorted(int(w) for w in windows)
    table = fourier_coefficients(measure, windows[-1])
    spec = extract_spectrum(table, tau)
    counts = [count_triples_fft(spec.restrict(n)) for n in windows]
    fit = growth_exponent(list(zip(windows, counts)))
    # the fitted exponent can stray slightly outside [0, 2]
    beta = min(max(fit.beta, 0.0), 2.0)
    d = measure_dimension(measure, sample_count, seed, radii).value
    bound = corollary_bound(beta)
    return CorollaryReport(fit.beta, d, bound, tolerance, bool(d + tolerance >= bound),
                           windows, counts, fit.residual)
