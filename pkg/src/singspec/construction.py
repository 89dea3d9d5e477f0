"""A polynomial line bundle on S^2 whose level sets can be rotated off themselves.

Pipeline: a centrally symmetric curve Gamma meeting every great circle and
disjoint from its image under a fixed rotation R; a symmetric cover of Gamma
by balls B(a_j, r); Q = prod_j (|xi - a_j|^2 - r^2)^2; and
P = (K x^2 Q, K y^2 Q, 1 + K z^2 Q).  The operator with symbol [P(xi)]_x
then has kernel span{P(xi)}.

For realistic covers K = delta^-(4N+1) is far outside floating range, so Q
and P are evaluated in factored form with logarithms; the expanded forms are
kept for small families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .bundles import (
    CapFamily,
    PDOperator,
    Subspace,
    cap_margin,
    chord_to_angle,
    cross_matrix,
    default_v_samples,
    fibonacci_sphere,
    rotation_separation_search,
    unit,
    wave_cone_witness,
)
from .dimension import dimension_bound
from .errors import CapacityError, ContractError
from .polynomials import Polynomial, homogenize, squared_norm

E1, E2, E3 = np.eye(3)
# (x, y, z) -> (z, x, y): quarter turn about e1 followed by a quarter turn about e3
CYCLIC_ROTATION = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
MAX_EXPANDED_CENTERS = 8
MAX_EXPANDED_K = 1e12


# --------------------------------------------------------------------------
# the curve
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaParams:
    """Shape of Gamma.

    ``hole`` is the angular half-width of the gaps in the equator at +-e2.
    With ``blocking`` the gap edges fold into a Z shape and a detour (the
    "thread") near +-e1 is added whose R-image passes through the gap.  The
    other lengths are in the gnomonic chart at e2, where (X, Z) maps to
    normalize(-X, 1, Z).
    """

    hole: float = 0.0
    blocking: bool = False
    h: float = 0.455
    c: float = 0.244
    s: float = 0.398
    L: float = 0.350
    t: float = 0.114
    H: float = 0.710
    B: float = 0.734
    X0: float = -0.150
    step: float = 1e-3

    def validate(self) -> None:
        if not 0.0 <= self.hole < math.pi / 4:
            raise ContractError("hole half-width must lie in [0, pi/4)")
        if not 0 < self.step <= 1e-3:
            raise ContractError("sampling step must lie in (0, 1e-3]")
        if not self.blocking:
            return
        g = math.tan(self.hole)
        if min(self.h, self.c, self.s, self.L, self.t, self.H, self.B) <= 0 or g <= 0:
            raise ContractError("blocking shape parameters must be positive")
        if not (self.c < self.s and self.h < self.H < self.B and g < self.L and abs(self.X0) < g):
            raise ContractError("blocking arcs would not nest symmetrically")
        if math.atan(self.B) + math.atan(self.L + 2 * self.s + self.t) >= math.pi / 2:
            raise ContractError("equator arcs would overlap the folds")


SHIPPED_GAMMA = GammaParams(hole=math.atan(0.346), blocking=True)


@dataclass(frozen=True)
class GammaCurve:
    segments: tuple  # connected polylines, each an (m, 3) array of unit vectors
    symmetric: bool
    params: GammaParams

    def points(self) -> np.ndarray:
        return np.concatenate(self.segments)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.points(), delimiter=",", header="x,y,z", comments="", fmt="%.17g")


def _slerp(a, b, step):
    a, b = unit(a), unit(b)
    om = math.acos(float(np.clip(a @ b, -1, 1)))
    n = max(2, int(om / step) + 2)
    t = np.linspace(0, 1, n)[:, None]
    if om < 1e-12:
        return np.repeat(a[None], n, 0)
    return (np.sin((1 - t) * om) * a + np.sin(t * om) * b) / math.sin(om)


def _polyline(vertices, step) -> np.ndarray:
    parts = [_slerp(a, b, step) for a, b in zip(vertices[:-1], vertices[1:])]
    return np.concatenate([parts[0]] + [p[1:] for p in parts[1:]])


def _chart(X, Z) -> np.ndarray:
    return unit(np.array([-X, 1.0, Z]))


def _lon(a) -> np.ndarray:
    return np.array([math.cos(a), math.sin(a), 0.0])


def _arc(a0, a1, step) -> np.ndarray:
    n = max(2, int(abs(a1 - a0) / step) + 2)
    a = np.linspace(a0, a1, n)
    return np.stack([np.cos(a), np.sin(a), np.zeros_like(a)], -1)


def build_gamma(params: GammaParams = SHIPPED_GAMMA) -> GammaCurve:
    """Candidate curve; validity is established only by the two verifiers."""
    params.validate()
    p, st = params, params.step
    half = []
    if not p.blocking:
        if p.hole == 0:
            return GammaCurve((_arc(0.0, 2 * math.pi, st),), True, p)
        half.append(_arc(math.pi / 2 + p.hole, 3 * math.pi / 2 - p.hole, st))
    else:
        g = math.tan(p.hole)
        X1, X2 = p.L + 2 * p.s, p.L + 2 * p.s + p.t
        fold_a = [(-X1, 0), (-p.L - p.s, p.h), (p.L, p.h), (p.L, 0), (g, 0)]
        fold_b = [(-g, 0), (-p.L, 0), (-p.L, -p.h), (p.L + p.s + p.t, -p.h), (X2, 0)]
        thread = [(0, -p.B), (-p.L - p.c, -p.B), (-p.L - p.c, p.h / 2), (p.X0, p.h / 2),
                  (p.X0, -p.h / 2), (p.L + p.c, -p.h / 2), (p.L + p.c, p.H), (0, p.H), (0, p.B)]
        Rinv = CYCLIC_ROTATION.T
        a0, a1 = math.atan(p.B), math.pi / 2 - math.atan(X1)
        a2, a3 = math.pi / 2 + math.atan(X2), math.pi - math.atan(p.B)
        # fold_a ends where the first equator arc ends; chain the pieces
        half.append(np.concatenate([_arc(a0, a1, st), _polyline([_chart(*q) for q in fold_a], st)[1:]]))
        half.append(np.concatenate([_polyline([_chart(*q) for q in fold_b], st), _arc(a2, a3, st)[1:]]))
        half.append(_polyline([Rinv @ _chart(*q) for q in thread], st))
    segs = tuple(half) + tuple(-q for q in half)
    return GammaCurve(segs, True, p)


@dataclass
class CrossingReport:
    passed: bool
    planes: int
    failures: int
    worst_margin: float
    worst_normal: list

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def plane_normals(count: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x9A7E]))
    return unit(rng.standard_normal((count, 3)))


def verify_gamma_plane_crossing(curve: GammaCurve, plane_samples: int = 10_000, seed: int = 0,
                                normals=None, touch: float = 1e-6, chunk: int = 256) -> CrossingReport:
    """Every sampled great circle must meet the curve (sign change or touching)."""
    nu = plane_normals(plane_samples, seed) if normals is None else unit(np.atleast_2d(normals))
    pts = curve.points()
    starts = np.cumsum([0] + [len(s) for s in curve.segments[:-1]])
    margin = np.empty(len(nu))
    for i in range(0, len(nu), chunk):
        v = nu[i : i + chunk] @ pts.T
        lo = np.minimum.reduceat(v, starts, axis=1)
        hi = np.maximum.reduceat(v, starts, axis=1)
        seg = np.minimum(-lo, hi).max(axis=1)
        touching = np.abs(v).min(axis=1) < touch
        margin[i : i + chunk] = np.where(touching & (seg < 0), 0.0, seg)
    j = int(np.argmin(margin))
    fails = int(np.sum(margin < 0))
    return CrossingReport(fails == 0, len(nu), fails, float(margin[j]), nu[j].tolist())


@dataclass
class SeparationReport:
    distance: float
    correction: float

    @property
    def margin(self) -> float:
        return self.distance - self.correction

    def as_dict(self) -> dict:
        return {"distance": self.distance, "correction": self.correction, "margin": self.margin}


def verify_gamma_separation(curve: GammaCurve, R=CYCLIC_ROTATION) -> SeparationReport:
    """Sampled geodesic distance between Gamma and R(Gamma).

    Consecutive samples are at most ``step`` apart, so each curve lies within
    step/2 of its samples and the true distance exceeds distance - step.
    """
    pts = curve.points()
    d, _ = cKDTree(pts).query(pts @ np.asarray(R).T)
    dist = float(2 * np.arcsin(min(d.min() / 2, 1.0)))
    return SeparationReport(dist, curve.params.step)


# --------------------------------------------------------------------------
# balls and polynomials
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BallFamily:
    centers: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        if len(c) % 2:
            raise ContractError("a symmetric family has an even number of centres")
        if len(c) and np.abs(c[1::2] + c[0::2]).max() > 1e-12:
            raise ContractError("centres must come in antipodal pairs (a, -a)")
        if not 0 < self.radius <= 0.5:
            raise ContractError("radius must lie in (0, 0.5]")
        object.__setattr__(self, "centers", c)

    @property
    def N(self) -> int:
        return len(self.centers)

    @property
    def angular_radius(self) -> float:
        return float(chord_to_angle(self.radius))


def cover_gamma(curve: GammaCurve, delta: float, max_centers: int = 20_000, fill: float = 0.9) -> BallFamily:
    """Greedy symmetric cover of the curve samples by balls of radius delta/2.

    A new pair (p, -p) is added whenever a sample is farther than
    ``fill * delta/2`` from every centre, so containment is strict.
    """
    r = delta / 2
    if not 0 < r <= 0.5:
        raise ContractError("delta must lie in (0, 1]")
    centers: list[np.ndarray] = []
    tree, pending = None, []
    for seg in curve.segments:
        for p in seg:
            if pending and np.min(np.linalg.norm(np.array(pending) - p, axis=1)) < fill * r:
                continue
            if tree is not None and tree.query(p)[0] < fill * r:
                continue
            centers += [p, -p]
            pending += [p, -p]
            if len(centers) > max_centers:
                raise CapacityError(f"cover needs more than {max_centers} centres")
            if len(pending) > 256:
                tree = cKDTree(np.array(centers))
                pending = []
    fam = BallFamily(np.array(centers), r)
    d, _ = cKDTree(fam.centers).query(curve.points())
    if d.max() >= r:
        raise ContractError("cover verification failed")  # unreachable by construction
    return fam


def build_Q(family: BallFamily) -> Polynomial:
    """Expanded prod_j (|xi - a_j|^2 - r^2)^2; small families only."""
    if family.N > MAX_EXPANDED_CENTERS:
        raise CapacityError(f"{family.N} centres: use FactoredQ instead of expansion")
    x = [Polynomial.variable(i) for i in range(3)]
    Q = Polynomial.constant(1.0)
    for a in family.centers:
        qj = sum(((x[i] - float(a[i])) ** 2 for i in range(3)), Polynomial.constant(-family.radius**2))
        Q = Q * qj * qj
    return Q


@dataclass(frozen=True)
class FactoredQ:
    """Q evaluated as a product; values on the sphere are handled in log form."""

    family: BallFamily

    @property
    def degree(self) -> int:
        return 4 * self.family.N

    def factors(self, xi) -> np.ndarray:
        """q_j(xi) = |xi - a_j|^2 - r^2, shape (..., N)."""
        xi = np.asarray(xi, dtype=float)
        d2 = (xi * xi).sum(-1)[..., None] - 2 * xi @ self.family.centers.T + 1.0
        return d2 - self.family.radius**2

    def log_value(self, xi, chunk: int = 4096) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        out = np.empty(xi.shape[0])
        for s in range(0, xi.shape[0], chunk):
            with np.errstate(divide="ignore"):
                out[s : s + chunk] = 2 * np.log(np.abs(self.factors(xi[s : s + chunk]))).sum(-1)
        return out

    def __call__(self, xi) -> np.ndarray:
        return np.exp(self.log_value(xi))


@dataclass(frozen=True)
class ConstructionParams:
    delta: float
    N: int
    r: float
    log_K: float

    @classmethod
    def from_delta(cls, delta: float, N: int) -> "ConstructionParams":
        return cls(delta, N, delta / 2, (4 * N + 1) * math.log(1 / delta))

    @property
    def K(self) -> float:
        return math.exp(self.log_K) if self.log_K < 709 else math.inf

    def check(self) -> None:
        if abs(self.r - self.delta / 2) > 1e-15:
            raise ContractError("r must equal delta/2")
        if self.log_K < (4 * self.N + 1) * math.log(1 / self.delta) - 1e-9:
            raise ContractError("K is below delta^-(4N+1)")


def build_P(Q, K: float | None = None, log_K: float | None = None):
    """P = (K x^2 Q, K y^2 Q, 1 + K z^2 Q): expanded when feasible, else factored."""
    if (K is None) == (log_K is None):
        raise ContractError("give exactly one of K, log_K")
    if K is not None and K <= 0:
        raise ContractError("K must be positive")
    log_K = math.log(K) if K is not None else float(log_K)
    if isinstance(Q, Polynomial):
        if log_K > math.log(MAX_EXPANDED_K):
            raise CapacityError("K too large for expanded coefficients; use the factored form")
        Kf = math.exp(log_K)
        x = [Polynomial.variable(i) for i in range(3)]
        return ExpandedP((Kf * x[0] ** 2 * Q, Kf * x[1] ** 2 * Q, 1.0 + Kf * x[2] ** 2 * Q))
    return FactoredP(Q, log_K)


@dataclass(frozen=True)
class ExpandedP:
    components: tuple

    @property
    def dim(self) -> int:
        return 3

    def evaluate(self, xi) -> np.ndarray:
        return np.stack([c(xi) for c in self.components], -1)

    def homogenized(self) -> tuple:
        return tuple(homogenize(c) for c in self.components)


@dataclass(frozen=True)
class FactoredP:
    """Direction field of P; ``evaluate`` returns unit vectors parallel to P(xi).

    Both P and its homogenisation are even of degree 4N + 2, so the line
    span{P(xi)} depends only on xi / |xi|.
    """

    Q: FactoredQ
    log_K: float

    @property
    def dim(self) -> int:
        return 3

    @property
    def degree(self) -> int:
        return self.Q.degree + 2

    @property
    def component_degrees(self) -> tuple:
        return (self.degree,) * 3

    def log_s(self, xi) -> np.ndarray:
        """log of 1 / (K Q(xi/|xi|)); +inf on the circles T_j."""
        u = unit(np.atleast_2d(xi))
        return -self.log_K - self.Q.log_value(u)

    def evaluate(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        flat = np.atleast_2d(xi)
        u = unit(flat)
        ls = self.log_s(u)
        psi = u * u
        # P is parallel to psi + s e3 with s = 1/(KQ); rescale when s is large
        small = ls <= 0
        out = np.empty_like(psi)
        s = np.exp(np.minimum(ls, 0.0))
        out[small] = psi[small] + s[small, None] * E3
        inv = np.exp(-np.maximum(ls, 0.0))
        out[~small] = psi[~small] * inv[~small, None] + E3
        out = unit(out)
        return out.reshape(xi.shape)

    def log_P3(self, xi) -> np.ndarray:
        """log P_3 on the sphere, computed as log(1 + exp(log K + 2 log|z| + log Q))."""
        u = unit(np.atleast_2d(xi))
        with np.errstate(divide="ignore"):
            t = self.log_K + 2 * np.log(np.abs(u[:, 2])) + self.Q.log_value(u)
        return np.logaddexp(0.0, t)

    def subspace(self, xi) -> Subspace:
        return Subspace.span(self.evaluate(np.asarray(xi, float)))

    def log_distance_to_squares(self, xi) -> np.ndarray:
        """log of sin angle(P(xi), (x^2, y^2, z^2)) on the sphere, stable for tiny 1/(KQ)."""
        u = unit(np.atleast_2d(xi))
        psi = u * u
        ls = self.log_s(u)
        npsi = np.linalg.norm(psi, axis=1)
        cross = np.hypot(psi[:, 0], psi[:, 1])
        # |psi x (psi + s e3)| = s |psi x e3|;  |psi + s e3| = sqrt(|psi|^2 + 2 s psi_3 + s^2)
        s = np.exp(np.minimum(ls, 700.0))
        log_norm_p = 0.5 * np.log(npsi**2 + 2 * s * psi[:, 2] + s * s)
        with np.errstate(divide="ignore"):
            out = ls + np.log(cross) - np.log(npsi) - log_norm_p
        big = ls > 700.0
        if np.any(big):
            # P is then e3 up to rounding; the angle to psi is computed directly
            ang = np.clip(cross[big] / npsi[big], 0, 1)
            with np.errstate(divide="ignore"):
                out[big] = np.log(ang)
        return out


def assemble_operator(P, four_rows: bool = False):
    """Operator whose symbol at xi is the cross-product matrix [P(xi)]_x.

    ``four_rows`` selects the four-row symbol (P x e1, (P x e1) x e1,
    P x e2, (P x e2) x e2) instead; its kernel is not span{P} in general.
    """
    if isinstance(P, FactoredP):
        return FactoredOperator(P, four_rows)
    comps = P.components if isinstance(P, ExpandedP) else P
    comps = tuple(comps)
    degs = {sum(e) for c in comps for e, _ in c.terms}
    if len(degs) != 1:
        raise ContractError("components must be homogeneous of one degree; homogenize first")
    m = degs.pop()
    alphas = sorted({e for c in comps for e, _ in c.terms})
    terms = []
    for al in alphas:
        coef = np.array([c.as_dict.get(al, 0.0) for c in comps])
        A = cross_matrix(coef) if not four_rows else _four_row_symbol(coef)
        terms.append((al, A))
    return PDOperator(m, tuple(terms))


def _four_row_symbol(p: np.ndarray) -> np.ndarray:
    r1 = np.cross(p, E1)
    r3 = np.cross(p, E2)
    # each row is linear in p, so the coefficientwise construction is exact
    return np.stack([r1, np.cross(r1, E1), r3, np.cross(r3, E2)], -2)


@dataclass(frozen=True)
class FactoredOperator:
    """Symbol [P(xi)/|P(xi)|]_x; the scalar normalisation leaves kernels unchanged."""

    P: FactoredP
    four_rows: bool = False

    @property
    def dim(self) -> int:
        return 3

    @property
    def order(self) -> int:
        return self.P.degree

    def symbol(self, xi) -> np.ndarray:
        d = self.P.evaluate(xi)
        if self.four_rows:
            r1 = np.cross(d, E1)
            r3 = np.cross(d, E2)
            return np.stack([r1, np.cross(r1, E1), r3, np.cross(r3, E2)], -2)
        return cross_matrix(d)

    def certify_plane_zero(self, w, V) -> bool:
        """Sign change of some q_j along the great circle of V when w is parallel to e3.

        On the circle T_j we have Q = 0, so P = e3 and [P]_x w = 0.  A great
        circle whose closest point to a_j is inside B(a_j, r) and which also
        has a point outside must cross T_j.
        """
        w = unit(np.asarray(w, dtype=float))
        if abs(abs(w[2]) - 1.0) > 1e-12 or self.four_rows:
            return False
        a = self.P.Q.family.centers
        if len(a) == 0:
            return False
        nu = unit(np.cross(V[:, 0], V[:, 1]))
        proj = a - np.outer(a @ nu, nu)
        ok = np.linalg.norm(proj, axis=1) > 1e-12
        if not np.any(ok):
            return False
        near = unit(proj[ok])
        far = np.cross(nu, near)
        r2 = self.P.Q.family.radius ** 2
        qn = ((near - a[ok]) ** 2).sum(1) - r2
        qf = ((far - a[ok]) ** 2).sum(1) - r2
        return bool(np.any((qn < 0) & (qf > 0)))


# --------------------------------------------------------------------------
# neighbourhoods and the three conditions
# --------------------------------------------------------------------------


def rotation_to(e) -> np.ndarray:
    """Rotation about e2 x e sending e2 to e."""
    e = unit(np.asarray(e, dtype=float))
    ax = np.cross(E2, e)
    s, c = np.linalg.norm(ax), float(E2 @ e)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        raise ContractError("e = -e2 does not determine an axis")
    k = ax / s
    Kx = cross_matrix(k)
    return np.eye(3) + s * Kx + (1 - c) * Kx @ Kx


def square_root_points(v) -> np.ndarray:
    """The points (+-sqrt|v1|, +-sqrt|v2|, +-sqrt|v3|) / sqrt(|v|_1), duplicates removed."""
    a = np.sqrt(np.abs(np.asarray(v, dtype=float)))
    a = a / np.linalg.norm(a)
    signs = np.array([[i, j, k] for i in (1, -1) for j in (1, -1) for k in (1, -1)], float)
    pts = signs * a
    keep = []
    for p in pts:
        if not keep or np.min(np.linalg.norm(np.array(keep) - p, axis=1)) > 1e-12:
            keep.append(p)
    return np.array(keep)


def _dedupe(pts, others=None) -> np.ndarray:
    keep = []
    ref = [] if others is None else list(others)
    for p in pts:
        if all(np.linalg.norm(p - q) > 1e-12 for q in keep + ref):
            keep.append(p)
    return np.array(keep).reshape(-1, 3)


def gamma_delta_neighborhood(v, params: ConstructionParams, family: BallFamily, scale: float = 4.0) -> CapFamily:
    """Caps B(a_i, 4 delta), B(p_i, delta) and B(+-e3, delta); Euclidean radii."""
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ContractError("v must be nonzero")
    d = params.delta
    poles = np.array([E3, -E3])
    p = _dedupe(square_root_points(v), poles)
    centers = np.vstack([family.centers, p, poles])
    radii = np.concatenate([np.full(family.N, scale * d), np.full(len(p) + 2, d)])
    return CapFamily(centers, chord_to_angle(radii))


def level_set_enclosure(v, params: ConstructionParams, family: BallFamily, eta: float | None = None) -> CapFamily:
    """Caps B(a_i, r + eta), B(p_i, eta), B(+-e3, eta) covering the level set of v.

    Away from the circles T_i the direction of P differs from (x^2, y^2, z^2)
    by about 1/(KQ), which is astronomically small there (see
    ``enclosure_certificate``), so the level set of v is within rounding of
    T_i union the p_i.  The p_i only occur when v lies in a closed
    coordinate orthant up to sign, since x^2, y^2, z^2 >= 0.
    """
    v = unit(np.asarray(v, dtype=float))
    eta = params.delta / 10 if eta is None else eta
    poles = np.array([E3, -E3])
    in_orthant = np.all(v >= -1e-12) or np.all(v <= 1e-12)
    p = _dedupe(square_root_points(v), poles) if in_orthant else np.zeros((0, 3))
    centers = np.vstack([family.centers, p, poles])
    radii = np.concatenate([np.full(family.N, family.radius + eta), np.full(len(p) + 2, eta)])
    return CapFamily(centers, chord_to_angle(radii))


def enclosure_certificate(P: FactoredP, params: ConstructionParams, samples: int = 20_000, seed: int = 0,
                          eta: float | None = None) -> dict:
    """Smallest log(KQ) on sampled points at geodesic distance >= eta from every T_i."""
    eta = params.delta / 10 if eta is None else eta
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xE7C]))
    xi = unit(rng.standard_normal((samples, 3)))
    fam = P.Q.family
    if fam.N:
        ang = np.arccos(np.clip(xi @ fam.centers.T, -1, 1))
        dist_T = np.abs(ang - fam.angular_radius).min(1)
        xi = xi[dist_T >= eta]
    lkq = -P.log_s(xi)
    return {"eta": eta, "points": int(len(xi)), "min_log_KQ": float(lkq.min()) if len(xi) else math.inf}


def candidate_rotations(base=CYCLIC_ROTATION, radius: float = 0.2, grid_points: int = 100_000) -> list[np.ndarray]:
    """R_e o R for e on a Fibonacci grid within ``radius`` of e2, nearest first (e = e2 gives R)."""
    E = fibonacci_sphere(grid_points)
    d = np.arccos(np.clip(E @ E2, -1, 1))
    E = E[d <= radius]
    E = E[np.argsort(np.arccos(np.clip(E @ E2, -1, 1)), kind="stable")]
    return [np.asarray(base)] + [rotation_to(e) @ base for e in E]


@dataclass
class Construction:
    delta: float
    gamma: GammaCurve
    family: BallFamily
    params: ConstructionParams
    Q: FactoredQ
    P: FactoredP
    operator: FactoredOperator

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "centers": self.family.centers.tolist(),
            "r": self.family.radius,
            "K": {"log": self.params.log_K, "log10": self.params.log_K / math.log(10)},
            "P_coefficients": {
                "form": "factored",
                "P1": "K x^2 Q", "P2": "K y^2 Q", "P3": "1 + K z^2 Q",
                "Q": "prod_j (|xi - a_j|^2 - r^2)^2",
                "degree": self.P.degree,
            },
            "operator_terms": {"form": "cross-product symbol [P(xi)]_x", "order": self.operator.order},
        }


def build_construction(delta: float, gamma_params: GammaParams = SHIPPED_GAMMA, empty_family: bool = False) -> Construction:
    gamma = build_gamma(gamma_params)
    fam = BallFamily(np.zeros((0, 3)), delta / 2) if empty_family else cover_gamma(gamma, delta)
    params = ConstructionParams.from_delta(delta, fam.N)
    params.check()
    Q = FactoredQ(fam)
    P = FactoredP(Q, params.log_K)
    return Construction(delta, gamma, fam, params, Q, P, FactoredOperator(P))


@dataclass
class ConditionsReport:
    A: bool
    B: bool
    C: bool
    details: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "pass" if (self.A and self.B and self.C) else "fail"

    def as_dict(self) -> dict:
        return {"A": self.A, "B": self.B, "C": self.C, "status": self.status, "details": self.details}


def _check_A(con: Construction, samples: int, seed: int) -> tuple[bool, dict]:
    degs = con.P.component_degrees
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xA]))
    xi = unit(rng.standard_normal((samples, 3)))
    lp3 = con.P.log_P3(xi)
    dirs = con.P.evaluate(xi)
    ok = len(set(degs)) == 1 and degs[0] % 2 == 0 and bool(np.all(lp3 >= 0)) and bool(np.all(np.isfinite(dirs)))
    return ok, {"degrees": list(degs), "samples": samples, "min_log_P3": float(lp3.min())}


def verify_conditions(con: Construction, v_samples=200, seed: int = 0, plane_samples: int = 10_000,
                      nonvanishing_samples: int = 100_000, candidates=None) -> ConditionsReport:
    A, infoA = _check_A(con, nonvanishing_samples, seed)

    wc = wave_cone_witness(con.operator, 2, E3, plane_samples, seed, structured=0)
    B = wc.status == "verified"
    infoB = {"wave_cone": wc.status, "planes": wc.planes_checked, "certificates": wc.certificates}
    if wc.refuting_plane is not None:
        infoB["refuting_plane"] = wc.refuting_plane

    vs = default_v_samples(v_samples, seed) if np.isscalar(v_samples) else np.atleast_2d(v_samples)
    cands = candidates if candidates is not None else candidate_rotations()
    fam_caps = CapFamily(con.family.centers, np.full(con.family.N, chord_to_angle(con.family.radius + con.delta / 10)))
    static = np.array([cap_margin(fam_caps, R) for R in cands])
    per_v, failed = [], []
    for v in vs:
        F = level_set_enclosure(v, con.params, con.family)
        res = rotation_separation_search(F, cands, static=(con.family.N, static))
        entry = {"v": [float(t) for t in v], "success": res.success, "margin": res.margin,
                 "candidate": res.index if res.success else res.best_index}
        if res.success:
            entry["rotation"] = res.rotation.tolist()
            entry["nominal_radius_margin"] = cap_margin(gamma_delta_neighborhood(v, con.params, con.family), res.rotation)
        else:
            failed.append(entry["v"])
        per_v.append(entry)
    C = not failed
    margins = [e["margin"] for e in per_v if e["success"]]
    infoC = {
        "v_count": len(vs),
        "failed_v": failed,
        "min_margin": min(margins) if margins else None,
        "max_candidate": max((e["candidate"] for e in per_v), default=None),
        "candidates": len(cands),
        "enclosure": enclosure_certificate(con.P, con.params, seed=seed),
        "best_nominal_radius_margin": max((e.get("nominal_radius_margin", -math.inf) for e in per_v), default=None),
        "per_v": per_v,
    }
    return ConditionsReport(A, B, C, {"A": infoA, "B": infoB, "C": infoC})


def certificate_bound(report: ConditionsReport) -> float | None:
    """The dimension bound 3/(1+1) once A, B and C hold."""
    return dimension_bound(3, 1) if report.status == "pass" else None


# --------------------------------------------------------------------------
# proximity of phi to psi
# --------------------------------------------------------------------------


def bundle_proximity(delta: float, samples: int = 20_000, seed: int = 0, gamma_params: GammaParams = SHIPPED_GAMMA) -> dict:
    """max over sampled xi outside the delta-neighbourhood of the T_i of dist(phi, psi) / delta.

    Returned in log10 because the ratio is far below double-precision range.
    """
    con = build_construction(delta, gamma_params)
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xB0]))
    xi = unit(rng.standard_normal((samples, 3)))
    fam = con.family
    ang = np.arccos(np.clip(xi @ fam.centers.T, -1, 1))
    dist_T = np.abs(ang - fam.angular_radius).min(1)
    xi = xi[dist_T >= delta]
    logd = con.P.log_distance_to_squares(xi)
    j = int(np.argmax(logd))
    log10_C = float((logd[j] - math.log(delta)) / math.log(10))
    # the same maximiser with the 1/(KQ) factor removed
    log10_prefactor = float((logd[j] + con.P.log_s(xi[j : j + 1])[0] * -1) / math.log(10))
    return {
        "delta": delta,
        "N": fam.N,
        "log10_K": con.params.log_K / math.log(10),
        "points": int(len(xi)),
        "log10_C": log10_C,
        "log10_KQ_at_max": float(-con.P.log_s(xi[j : j + 1])[0] / math.log(10)),
        "log10_prefactor": log10_prefactor,
    }
