"""Counting forms on the circle and on R^n, in frequency and time representations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import erfc

from .configurations import ConfigFamily
from .errors import ContractError, PreconditionError, ResolutionError, SymmetryViolationError
from .measures import (
    AtomMeasure,
    FourierTable,
    KernelSpec,
    LebesgueMeasure,
    MeasureModel,
    SelfSimilarMeasure1D,
    mollify,
)

TAIL_BUDGET = 1e-10


# --------------------------------------------------------------------------
# circle
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrigPolynomial:
    """f(x) = sum_m c(m) exp(2 pi i m x) with c stored as a FourierTable."""

    coefficients: FourierTable
    real: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "real", self.coefficients.is_conjugate_symmetric(1e-12))

    @classmethod
    def from_dict(cls, coeffs: dict) -> "TrigPolynomial":
        return cls(FourierTable.from_dict(coeffs))

    @classmethod
    def random_real(cls, rng: np.random.Generator, degree: int) -> "TrigPolynomial":
        c = rng.standard_normal(degree + 1) + 1j * rng.standard_normal(degree + 1)
        c[0] = c[0].real
        v = np.concatenate([np.conj(c[:0:-1]), c])
        return cls(FourierTable(degree, v))

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(self.coefficients.values)
        if nz.size == 0:
            return 0
        return int(np.abs(self.coefficients.frequencies[nz]).max())

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m = self.coefficients.frequencies
        return np.exp(2j * math.pi * np.multiply.outer(x, m)) @ self.coefficients.values

    def scaled_sum(self, other: "TrigPolynomial", a: complex, b: complex) -> "TrigPolynomial":
        w = max(self.coefficients.window, other.coefficients.window)
        u = FourierTable.from_dict(self.coefficients.as_dict(), w).values
        v = FourierTable.from_dict(other.coefficients.as_dict(), w).values
        return TrigPolynomial(FourierTable(w, a * u + b * v))


def _padded(t: FourierTable, w: int) -> np.ndarray:
    out = np.zeros(2 * w + 1, dtype=complex)
    out[w - t.window : w + t.window + 1] = t.values
    return out


def lambda_star(fc: FourierTable, gc: FourierTable, hc: FourierTable) -> complex:
    """sum_{n,r} f(n) g(n+r) h(n+2r) = sum_b g(b) (f * h)(2b)."""
    w = max(fc.window, gc.window, hc.window)
    f, g, h = (_padded(t, w) for t in (fc, gc, hc))
    fh = np.convolve(f, h)  # index j <-> frequency j - 2w
    return complex(np.dot(g, fh[0 : 4 * w + 1 : 2]))


def trilinear_frequency(f: TrigPolynomial, g: TrigPolynomial, h: TrigPolynomial) -> complex:
    return lambda_star(f.coefficients, g.coefficients, h.coefficients)


def trilinear_time(f: TrigPolynomial, g: TrigPolynomial, h: TrigPolynomial, order: int | None = None) -> complex:
    """int_0^1 f(x) conj(g(-2x) h(x)) dx by the trapezoid rule on ``order`` nodes.

    The integrand is a trig polynomial of degree up to 4*deg, so ``order``
    must exceed that for the rule to be exact.
    """
    deg = max(f.degree, g.degree, h.degree)
    need = 4 * deg + 1
    if order is None:
        order = need
    if order < need:
        raise ContractError(f"quadrature order {order} < {need} is not exact for degree {deg}")
    x = np.arange(order) / order
    vals = f(x) * np.conj(g(-2 * x) * h(x))
    return complex(vals.mean())


def fejer_form(table: FourierTable, n: int) -> float:
    if n < 1:
        raise ContractError("Fejer order must be >= 1")
    if table.window < 2 * n:
        raise ContractError(f"table window {table.window} < 2n = {2 * n}")
    fn = mollify(table, KernelSpec("fejer", n))
    val = lambda_star(fn, fn, fn)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise SymmetryViolationError(f"Lambda has imaginary part {val.imag:.3g}")
    return float(val.real)


# --------------------------------------------------------------------------
# R^n
# --------------------------------------------------------------------------


def _axis_tail(a: float, L: float, c0: float, c2: float) -> float:
    """int_{|x|>L} (c0 + c2 x^2) e^{-a x^2} dx."""
    sa = math.sqrt(a)
    t0 = math.sqrt(math.pi / a) * erfc(sa * L)
    t2 = L * math.exp(-a * L * L) / a + math.sqrt(math.pi) / (2 * a * sa) * erfc(sa * L)
    return c0 * t0 + c2 * t2


@dataclass(frozen=True)
class SchwartzSurrogate:
    """``amp * g_t(x - shift)`` ("gaussian") or ``amp * x_1^2 g_t(x)`` ("gaussian_poly")."""

    dim: int
    kind: str = "gaussian"
    width: float = 1.0
    shift: tuple = ()
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "gaussian_poly"):
            raise ContractError(f"unknown surrogate kind {self.kind!r}")
        if self.width <= 0:
            raise ContractError("width must be positive")
        s = tuple(float(v) for v in self.shift) or (0.0,) * self.dim
        if len(s) != self.dim:
            raise ContractError("shift has the wrong dimension")
        if self.kind == "gaussian_poly" and any(s):
            raise ContractError("gaussian_poly is centred")
        object.__setattr__(self, "shift", s)

    @property
    def _a(self) -> float:
        return 2 * math.pi**2 * self.width**2

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t, n = self.width, self.dim
        y = x - np.asarray(self.shift)
        base = np.exp(-(y * y).sum(-1) / (2 * t * t)) / ((2 * math.pi) ** (n / 2) * t**n)
        if self.kind == "gaussian_poly":
            base = base * x[..., 0] ** 2
        return self.amplitude * base

    def transform(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        a = self._a
        env = np.exp(-a * (xi * xi).sum(-1))
        if self.kind == "gaussian":
            phase = np.exp(-2j * math.pi * (xi @ np.asarray(self.shift)))
            return self.amplitude * env * phase
        return self.amplitude * (2 * a - 4 * a * a * xi[..., 0] ** 2) / (4 * math.pi**2) * env

    # bounds used for tail budgets ------------------------------------------
    def sup_transform(self) -> float:
        a = self._a
        if self.kind == "gaussian":
            return abs(self.amplitude)
        # |2a - 4a^2 s| e^{-a s} over s >= 0 peaks at s = 0 or s = 3/(2a)
        return abs(self.amplitude) * max(2 * a, 4 * a * math.exp(-1.5)) / (4 * math.pi**2)

    def tail_transform(self, L: float) -> float:
        """Bound on int of |transform| outside the cube [-L, L]^n."""
        a, n = self._a, self.dim
        full0 = math.sqrt(math.pi / a)
        if self.kind == "gaussian":
            per = _axis_tail(a, L, 1.0, 0.0)
            return abs(self.amplitude) * n * per * full0 ** (n - 1)
        c0, c2 = 2 * a / (4 * math.pi**2), 4 * a * a / (4 * math.pi**2)
        full2 = c0 * full0 + c2 * math.sqrt(math.pi) / (2 * a * math.sqrt(a))
        tail = _axis_tail(a, L, c0, c2) * full0 ** (n - 1)
        tail += (n - 1) * full2 * _axis_tail(a, L, 1.0, 0.0) * full0 ** (n - 2)
        return abs(self.amplitude) * tail

    def sup_space(self) -> float:
        t, n = self.width, self.dim
        peak = 1.0 / ((2 * math.pi) ** (n / 2) * t**n)
        if self.kind == "gaussian_poly":
            peak *= 2 * t * t * math.exp(-1.0)
        return abs(self.amplitude) * peak

    def l1_space(self) -> float:
        return abs(self.amplitude) * (1.0 if self.kind == "gaussian" else self.width**2)

    def tail_space(self, L: float) -> float:
        """Bound on int of |f| outside [-L, L]^n."""
        t, n = self.width, self.dim
        a = 1 / (2 * t * t)
        norm = 1.0 / ((2 * math.pi) ** (n / 2) * t**n)
        full0 = math.sqrt(math.pi / a)
        Leff = L - max((abs(s) for s in self.shift), default=0.0)
        if Leff <= 0:
            return self.l1_space()
        if self.kind == "gaussian":
            return abs(self.amplitude) * norm * n * _axis_tail(a, Leff, 1.0, 0.0) * full0 ** (n - 1)
        full2 = math.sqrt(math.pi) / (2 * a * math.sqrt(a))
        tail = _axis_tail(a, Leff, 0.0, 1.0) * full0 ** (n - 1)
        tail += (n - 1) * full2 * _axis_tail(a, Leff, 1.0, 0.0) * full0 ** max(n - 2, 0)
        return abs(self.amplitude) * norm * tail

    def freq_scale(self) -> float:
        return 1.0 / (2 * math.pi * self.width)


@dataclass(frozen=True)
class QuadGrid:
    """Tensor trapezoid grid on the cube [-half_width, half_width]^d."""

    half_width: float
    nodes: int

    def axis(self) -> tuple[np.ndarray, float]:
        x = np.linspace(-self.half_width, self.half_width, self.nodes)
        return x, x[1] - x[0]


@dataclass(frozen=True)
class QuadResult:
    value: complex
    error: float
    tail: float
    nodes: int


def _tensor_trapezoid(func, dim: int, grid: QuadGrid, chunk: int = 1 << 18) -> complex:
    x, h = grid.axis()
    w = np.full(x.size, h)
    w[0] = w[-1] = h / 2
    total = 0j
    # iterate over the leading axis to bound memory
    rest = np.stack(np.meshgrid(*([x] * (dim - 1)), indexing="ij"), -1).reshape(-1, dim - 1) if dim > 1 else np.zeros((1, 0))
    wrest = np.ones(1)
    for _ in range(dim - 1):
        wrest = np.multiply.outer(wrest, w).ravel()
    for x0, w0 in zip(x, w):
        pts = np.concatenate([np.full((rest.shape[0], 1), x0), rest], axis=1)
        for s in range(0, pts.shape[0], chunk):
            total += w0 * np.dot(func(pts[s : s + chunk]), wrest[s : s + chunk])
    return complex(total)


def _check_family(g, f_list, fam: ConfigFamily):
    if len(f_list) != fam.k:
        raise ContractError(f"{len(f_list)} functions for {fam.k} matrices")
    if any(f.dim != g.dim for f in f_list) or fam.dim != g.dim:
        raise ContractError("all dimensions must agree")


def _quad_with_error(func, dim, grid, tail):
    if tail > TAIL_BUDGET:
        raise ResolutionError(f"tail mass {tail:.2e} exceeds {TAIL_BUDGET:g}; enlarge the grid")
    fine = _tensor_trapezoid(func, dim, grid)
    coarse_grid = QuadGrid(grid.half_width, (grid.nodes + 1) // 2)
    coarse = _tensor_trapezoid(func, dim, coarse_grid) if coarse_grid.nodes >= 3 else fine
    err = abs(fine - coarse) + tail + 1e-14 * abs(fine)
    return QuadResult(fine, err, tail, grid.nodes)


def frequency_grid(g, f_list, fam: ConfigFamily, pts_per_scale: float = 6.0) -> QuadGrid:
    """Cube where the tail of the frequency integrand is below budget."""
    L = g.freq_scale()
    sup = math.prod(f.sup_transform() for f in f_list) or 1.0
    while g.tail_transform(L) * sup > TAIL_BUDGET / 10:
        L *= 1.25
    scales = [g.freq_scale()] + [
        f.freq_scale() / max(np.linalg.norm(B, 2), 1e-300) for f, B in zip(f_list, fam.matrices)
    ]
    h = min(scales) / pts_per_scale
    return QuadGrid(L, 2 * int(math.ceil(L / h)) + 1)


def space_grid(g, f_list, pts_per_scale: float = 6.0) -> QuadGrid:
    L = max(f.width for f in f_list)
    while _space_tail(g, f_list, L) > TAIL_BUDGET / 10:
        L *= 1.25
    h = min([g.width] + [f.width for f in f_list]) / pts_per_scale
    return QuadGrid(L, 2 * int(math.ceil(L / h)) + 1)


def _space_tail(g, f_list, L):
    total = 0.0
    for j, f in enumerate(f_list):
        others = math.prod(fi.l1_space() for i, fi in enumerate(f_list) if i != j)
        total += f.tail_space(L) * others
    return g.sup_space() * total


def multilinear_frequency(g: SchwartzSurrogate, f_list, fam: ConfigFamily, grid: QuadGrid | None = None) -> QuadResult:
    """int g^(xi) prod_j f_j^(B_j xi) d xi."""
    _check_family(g, f_list, fam)
    grid = grid or frequency_grid(g, f_list, fam)
    tail = g.tail_transform(grid.half_width) * math.prod(f.sup_transform() for f in f_list)

    def integrand(xi):
        out = g.transform(xi)
        for f, B in zip(f_list, fam.matrices):
            out = out * f.transform(xi @ B.T)
        return out

    return _quad_with_error(integrand, g.dim, grid, tail)


def multilinear_time(g: SchwartzSurrogate, f_list, fam: ConfigFamily, grid: QuadGrid | None = None) -> QuadResult:
    """int g(-B^T x) prod_j f_j(x_j) dx over (R^n)^k."""
    _check_family(g, f_list, fam)
    grid = grid or space_grid(g, f_list)
    n, k = g.dim, fam.k
    Bt = fam.stacked.T  # n x kn
    tail = _space_tail(g, f_list, grid.half_width)

    def integrand(x):
        out = g(-(x @ Bt.T))
        for j, f in enumerate(f_list):
            out = out * f(x[:, j * n : (j + 1) * n])
        return out

    return _quad_with_error(integrand, n * k, grid, tail)


# --------------------------------------------------------------------------
# scaling of the smoothed form
# --------------------------------------------------------------------------


def _support_interval(measure) -> tuple[float, float]:
    if isinstance(measure, AtomMeasure):
        return measure.location[0], measure.location[0]
    if isinstance(measure, SelfSimilarMeasure1D):
        return measure.hull
    if isinstance(measure, LebesgueMeasure):
        return 0.0, 1.0
    raise ContractError(f"no smoothed density for {type(measure).__name__}")


def smoothed_lambda(measure: MeasureModel, b: float, r: float, pts_per_r: int = 24) -> float:
    """int G_r(-b x) G_r(x) dx with G_r = g_r * mu on the line."""
    lo, hi = _support_interval(measure)
    pad = 9 * r
    a0, a1 = lo - pad, hi + pad
    if b != 0:
        c0, c1 = sorted((-a0 / b, -a1 / b))
        a0, a1 = max(a0, c0), min(a1, c1)
    if a1 <= a0:
        return 0.0
    m = max(int(math.ceil((a1 - a0) / r * pts_per_r)), 8)
    x = np.linspace(a0, a1, m + 1)
    vals = measure.smoothed_density(r, -b * x) * measure.smoothed_density(r, x)
    return float(trapezoid(vals, x))


@dataclass
class ScalingReport:
    radii: list
    lambda_values: list
    fitted_slope: float
    predicted_exponent: float
    passed: bool
    tolerance: float

    def as_dict(self) -> dict:
        return {
            "radii": self.radii,
            "lambda_values": self.lambda_values,
            "fitted_slope": self.fitted_slope,
            "predicted_exponent": self.predicted_exponent,
            "pass": self.passed,
        }


def scaling_experiment(measure: MeasureModel, fam: ConfigFamily, alpha: float, radii, tolerance: float = 0.1,
                       precondition_rtol: float = 1e-9) -> ScalingReport:
    """Fit log Lambda(G_r; G_r) against log r and compare with alpha(k+1) - n.

    Only line measures with a single scalar matrix are supported.
    """
    if fam.dim != 1 or fam.k != 1:
        raise ContractError("the smoothed form is implemented for n = 1, k = 1")
    radii = [float(r) for r in radii]
    if len(radii) < 3 or any(radii[i + 1] >= radii[i] for i in range(len(radii) - 1)):
        raise ContractError("need at least 3 strictly decreasing radii")
    bad = [r for r in radii if measure.ball_mass(0.0, r) < r**alpha * (1 - precondition_rtol)]
    if bad:
        raise PreconditionError(f"mu(B(0,r)) < r^{alpha} at {len(bad)} radii", bad)
    b = float(fam.matrices[0][0, 0])
    lam = [smoothed_lambda(measure, b, r) for r in radii]
    slope = float(np.polyfit(np.log(radii), np.log(lam), 1)[0])
    predicted = alpha * (fam.k + 1) - fam.dim
    return ScalingReport(radii, lam, slope, predicted, slope <= predicted + tolerance, tolerance)
