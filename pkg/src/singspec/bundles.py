"""Subspace-valued fields on the sphere, operator symbols and wave-cone tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import null_space, orth
from scipy.optimize import minimize, minimize_scalar
from scipy.spatial.transform import Rotation

from .dimension import dimension_bound
from .errors import ContractError
from .polynomials import Polynomial


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Subspace:
    basis: np.ndarray  # ambient x d, orthonormal columns

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.ndim != 2:
            raise ContractError("basis must be a matrix")
        if B.shape[1] and np.abs(B.T @ B - np.eye(B.shape[1])).max() > 1e-12:
            raise ContractError("basis columns must be orthonormal")
        object.__setattr__(self, "basis", B)

    @classmethod
    def span(cls, vectors, tol: float = 1e-12) -> "Subspace":
        V = np.asarray(vectors, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        if not np.any(V):
            return cls(np.zeros((V.shape[0], 0)))
        return cls(orth(V, rcond=tol))

    @property
    def ambient(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def intersect(self, other: "Subspace", tol: float = 1e-10) -> "Subspace":
        if self.dim == 0 or other.dim == 0:
            return Subspace(np.zeros((self.ambient, 0)))
        ns = null_space(np.hstack([self.basis, -other.basis]), rcond=tol)
        if ns.shape[1] == 0:
            return Subspace(np.zeros((self.ambient, 0)))
        return Subspace.span(self.basis @ ns[: self.dim])


def kernel_subspace(M, tol: float = 1e-10) -> Subspace:
    """Right null space of ``M`` with singular values below ``tol * s_max`` treated as zero."""
    if tol <= 0:
        raise ContractError("tol must be positive")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[1]
    if not np.any(M):
        return Subspace(np.eye(n))
    _, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > tol * s[0]))
    return Subspace(vt[rank:].T.copy())


def grassmann_distance(V: Subspace, W: Subspace) -> float:
    """Sine of the largest principal angle: sup over unit z in V of dist(z, W)."""
    if V.dim != W.dim or V.ambient != W.ambient:
        raise ContractError("subspaces must share dimension and ambient space")
    if V.dim == 0:
        return 0.0
    resid = V.basis - W.basis @ (W.basis.T @ V.basis)
    return float(min(1.0, np.linalg.norm(resid, 2)))


def cross_matrix(p: np.ndarray) -> np.ndarray:
    """Matrices [p]_x with [p]_x v = p x v; ``p`` has trailing axis 3."""
    p = np.asarray(p, dtype=float)
    z = np.zeros(p.shape[:-1])
    x, y, w = p[..., 0], p[..., 1], p[..., 2]
    return np.stack(
        [np.stack([z, -w, y], -1), np.stack([w, z, -x], -1), np.stack([-y, x, z], -1)], -2
    )


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def geodesic(a, b) -> np.ndarray:
    """Angle between unit vectors (rows broadcast)."""
    return 2 * np.arcsin(np.clip(np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1) / 2, 0, 1))


def chord_to_angle(radius) -> np.ndarray:
    """Angular radius of the cap S^2 cap B(a, radius) for a on the sphere."""
    return 2 * np.arcsin(np.minimum(np.asarray(radius, dtype=float) / 2, 1.0))


# --------------------------------------------------------------------------
# fields and operators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PolynomialVectorField:
    """Line bundle xi -> span{F(xi)} given by polynomial components."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ContractError("need at least one component")
        n = comps[0].nvars
        if any(c.nvars != n for c in comps):
            raise ContractError("components must share the variable count")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_callables(cls, polys: Sequence[Polynomial]) -> "PolynomialVectorField":
        return cls(tuple(polys))

    @property
    def dim(self) -> int:
        return self.components[0].nvars

    @property
    def degree(self) -> int:
        return max(c.degree for c in self.components)

    def is_homogeneous(self) -> bool:
        degs = {sum(e) for c in self.components for e, _ in c.terms}
        return len(degs) <= 1

    def evaluate(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.stack([c(xi) for c in self.components], axis=-1)

    def subspace(self, xi) -> Subspace:
        return Subspace.span(self.evaluate(np.asarray(xi, float))[:, None])

    def to_json(self) -> dict:
        return {"components": [c.to_json() for c in self.components]}


def squares_bundle() -> PolynomialVectorField:
    """xi -> span{(x^2, y^2, z^2)}."""
    return PolynomialVectorField(tuple(Polynomial.monomial(tuple(2 * (i == j) for j in range(3))) for i in range(3)))


def tautological_bundle(n: int = 3) -> PolynomialVectorField:
    return PolynomialVectorField(tuple(Polynomial.variable(i, n) for i in range(n)))


def constant_bundle(v) -> PolynomialVectorField:
    v = np.asarray(v, dtype=float)
    return PolynomialVectorField(tuple(Polynomial.constant(float(c), v.size) for c in v))


@dataclass(frozen=True)
class PDOperator:
    """Principal part sum_{|alpha| = m} A_alpha d^alpha."""

    order: int
    terms: tuple  # ((alpha, A), ...)

    def __post_init__(self):
        terms = tuple((tuple(int(a) for a in al), np.asarray(A, dtype=float)) for al, A in self.terms)
        if not terms:
            raise ContractError("operator needs at least one term")
        shape = terms[0][1].shape
        n = len(terms[0][0])
        for al, A in terms:
            if A.shape != shape or A.ndim != 2:
                raise ContractError("all coefficient matrices must share one shape")
            if len(al) != n or sum(al) != self.order:
                raise ContractError(f"multi-index {al} does not have order {self.order}")
            A.setflags(write=False)
        if not any(np.any(A) for _, A in terms):
            raise ContractError("operator has no nonzero term")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self) -> int:
        return len(self.terms[0][0])

    @property
    def shape(self) -> tuple:
        return self.terms[0][1].shape

    def symbol(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1] + self.shape)
        for al, A in self.terms:
            out = out + np.prod(xi ** np.asarray(al), axis=-1)[..., None, None] * A
        return out

    def to_json(self) -> dict:
        return {"order": self.order, "terms": [{"alpha": list(al), "matrix": A.tolist()} for al, A in self.terms]}

    @classmethod
    def from_json(cls, data) -> "PDOperator":
        return cls(data["order"], tuple((t["alpha"], t["matrix"]) for t in data["terms"]))


def divergence_operator(n: int = 3) -> PDOperator:
    terms = []
    for i in range(n):
        al = [0] * n
        al[i] = 1
        A = np.zeros((1, n))
        A[0, i] = 1.0
        terms.append((tuple(al), A))
    return PDOperator(1, tuple(terms))


def symbol(op, xi) -> np.ndarray:
    if np.shape(xi)[-1] != op.dim:
        raise ContractError(f"xi has dimension {np.shape(xi)[-1]}, operator acts on R^{op.dim}")
    return op.symbol(xi)


# --------------------------------------------------------------------------
# sphere sampling and level sets
# --------------------------------------------------------------------------

# measured covering radius of an n-point Fibonacci lattice is below 2.71 / sqrt(n)
FIB_COVER = 2.8


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    th = math.pi * (1 + math.sqrt(5.0)) * i
    return np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=-1)


@dataclass(frozen=True)
class SphereGrid:
    resolution: float
    nodes: np.ndarray = field(repr=False)

    @classmethod
    def with_resolution(cls, h: float) -> "SphereGrid":
        if not 0 < h < 1:
            raise ContractError("resolution must lie in (0, 1)")
        n = int(math.ceil((FIB_COVER / h) ** 2))
        return cls(h, fibonacci_sphere(n))

    def __len__(self) -> int:
        return self.nodes.shape[0]


@dataclass(frozen=True)
class SpherePointSet:
    points: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_csv(self, path) -> None:
        np.savetxt(path, self.points, delimiter=",", header="x,y,z", comments="", fmt="%.17g")


def _tangent_frame(p: np.ndarray):
    a = np.eye(3)[np.argmin(np.abs(p))]
    t1 = unit(np.cross(p, a))
    return t1, np.cross(p, t1)


def parallel_residual(bundle, v: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """sin of the angle between F(xi) and v; NaN where F vanishes."""
    F = bundle.evaluate(xi)
    nF = np.linalg.norm(F, axis=-1)
    vh = unit(v)
    perp = F - (F @ vh)[..., None] * vh
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(nF > 0, np.linalg.norm(perp, axis=-1) / nF, np.nan)


def level_set(bundle, v, grid: SphereGrid, tol: float | None = None, accept: float = 1e-8) -> SpherePointSet:
    """Points xi with v in span{F(xi)}: grid candidates refined by local minimisation."""
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ContractError("v must be nonzero")
    h = grid.resolution
    tol = 4 * h if tol is None else tol
    res = parallel_residual(bundle, v, grid.nodes)
    cand = grid.nodes[np.nan_to_num(res, nan=np.inf) < tol]
    cand_res = res[np.nan_to_num(res, nan=np.inf) < tol]
    found = []
    for p, r0 in zip(cand, cand_res):
        if r0 < accept:
            found.append(p)
            continue
        t1, t2 = _tangent_frame(p)

        def f(ab):
            return float(parallel_residual(bundle, v, unit(p + ab[0] * t1 + ab[1] * t2)[None])[0])

        opt = minimize(f, np.zeros(2), method="Nelder-Mead",
                       options={"xatol": h * 1e-4, "fatol": accept * 1e-2, "initial_simplex": [[0, 0], [h, 0], [0, h]]})
        q = unit(p + opt.x[0] * t1 + opt.x[1] * t2)
        if opt.fun < accept and geodesic(p, q) < 2 * h:
            found.append(q)
    if not found:
        return SpherePointSet(np.zeros((0, 3)))
    pts = np.array(found)
    keep = []
    for q in pts:
        if not keep or geodesic(np.array(keep), q).min() > h / 10:
            keep.append(q)
    return SpherePointSet(np.array(keep))


@dataclass(frozen=True)
class OneConeResult:
    holds: bool
    certificate: np.ndarray  # nodes whose subspaces already intersect trivially
    witness: np.ndarray | None  # surviving common vector


def one_cone_condition(bundle, grid: SphereGrid, tol: float = 1e-10) -> OneConeResult:
    n = bundle.dim
    U = Subspace(np.eye(n))
    used = []
    for xi in grid.nodes:
        W = bundle.subspace(xi)
        V = U.intersect(W, tol)
        if V.dim < U.dim:
            used.append(xi)
            U = V
        if U.dim == 0:
            return OneConeResult(True, np.array(used), None)
    return OneConeResult(False, np.array(used).reshape(-1, n), U.basis[:, 0].copy())


# --------------------------------------------------------------------------
# wave cone
# --------------------------------------------------------------------------


@dataclass
class WaveConeResult:
    status: str  # verified | refuted | indeterminate
    planes_checked: int
    refuting_plane: list | None = None
    indeterminate_planes: list = field(default_factory=list)
    certificates: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "status": self.status,
            "planes_checked": self.planes_checked,
            "refuting_plane": self.refuting_plane,
            "indeterminate_planes": self.indeterminate_planes,
            "certificates": self.certificates,
        }


def sample_planes(n: int, k: int, count: int, seed: int, sweep: int = 0) -> list[np.ndarray]:
    """Random k-planes (orthonormal n x k bases) plus ``sweep`` planes through the last axis."""
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x5EED]))
    planes = [np.linalg.qr(rng.standard_normal((n, k)))[0] for _ in range(count)]
    if sweep and k >= 2:
        axis = np.eye(n)[-1]
        for th in np.linspace(0, math.pi, sweep, endpoint=False):
            u = np.zeros(n)
            u[0], u[1] = math.cos(th), math.sin(th)
            extra = [np.eye(n)[j] for j in range(2, n - 1)][: k - 2]
            planes.append(np.linalg.qr(np.column_stack([axis, u] + extra))[0])
    return planes


def _relative_residual(op, w, xi):
    S = op.symbol(xi)
    num = np.linalg.norm(S @ w, axis=-1)
    den = np.linalg.norm(S, axis=(-2, -1)) * np.linalg.norm(w)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0), S @ w


def wave_cone_witness(op, k: int, w, plane_samples: int = 200, seed: int = 0, tol: float = 1e-9,
                      sweep_points: int = 720, structured: int = 0) -> WaveConeResult:
    """Decide whether w lies in ker A[xi] for some xi in every sampled k-plane."""
    w = np.asarray(w, dtype=float)
    n = op.dim
    if not np.any(w):
        raise ContractError("w must be nonzero")
    if not 1 <= k < n:
        raise ContractError("need 1 <= k < n")
    planes = sample_planes(n, k, plane_samples, seed, structured)
    certs = {"sign_change": 0, "factor_sign_change": 0, "min_norm": 0}
    indet = []
    hook = getattr(op, "certify_plane_zero", None)
    for V in planes:
        if k >= 2 and hook is not None:
            ok = hook(w, V)
            if ok:
                certs["factor_sign_change"] += 1
                continue
        if k == 1:
            rho, _ = _relative_residual(op, w, V[:, 0][None])
            rho = float(rho[0])
            if rho < tol:
                certs["min_norm"] += 1
                continue
            if rho > 100 * tol:
                return WaveConeResult("refuted", len(planes), V.T.tolist(), indet, certs)
            indet.append(V.T.tolist())
            continue
        # sweep a great circle of the plane (first two basis vectors suffice
        # for k = 2; larger k uses the same circle as a sufficient witness)
        s = np.linspace(0, math.pi, sweep_points)
        xi = np.outer(np.cos(s), V[:, 0]) + np.outer(np.sin(s), V[:, 1])
        rho, out = _relative_residual(op, w, xi)
        if out.shape[-1] == 1:
            col = out[:, 0]
            if np.any(col == 0) or np.any(np.sign(col[1:]) != np.sign(col[:-1])):
                certs["sign_change"] += 1
                continue
        i = int(np.argmin(rho))
        lo, hi = s[max(i - 1, 0)], s[min(i + 1, s.size - 1)]
        f = lambda t: float(_relative_residual(op, w, (math.cos(t) * V[:, 0] + math.sin(t) * V[:, 1])[None])[0][0])
        best = min(float(rho[i]), minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                                   options={"xatol": 1e-12}).fun)
        if best < tol:
            certs["min_norm"] += 1
        elif best > 100 * tol:
            return WaveConeResult("refuted", len(planes), V.T.tolist(), indet, certs)
        else:
            indet.append(V.T.tolist())
    status = "indeterminate" if indet else "verified"
    return WaveConeResult(status, len(planes), None, indet, certs)


# --------------------------------------------------------------------------
# cap families and rotation search
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CapFamily:
    centers: np.ndarray  # m x 3 unit vectors
    radii: np.ndarray  # angular radii

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        r = np.broadcast_to(np.asarray(self.radii, dtype=float), (c.shape[0],)).copy()
        if c.shape[0] and np.abs(np.linalg.norm(c, axis=1) - 1).max() > 1e-9:
            raise ContractError("cap centres must be unit vectors")
        if np.any(r < 0):
            raise ContractError("cap radii must be non-negative")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)

    def __len__(self) -> int:
        return self.centers.shape[0]

    def union(self, other: "CapFamily") -> "CapFamily":
        return CapFamily(np.vstack([self.centers, other.centers]), np.concatenate([self.radii, other.radii]))

    def contains(self, pts, slack: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        d = geodesic(pts[:, None, :], self.centers[None])
        return np.any(d <= self.radii[None] + slack, axis=1)


def cap_margin(F: CapFamily, R: np.ndarray, G: CapFamily | None = None, chunk: int = 2048) -> float:
    """min_{i,j} [d(c_i, R g_j) - rho_i - sigma_j]; positive iff F and R(G) are disjoint."""
    G = F if G is None else G
    if len(F) == 0 or len(G) == 0:
        return math.inf
    RG = G.centers @ np.asarray(R).T
    best = math.inf
    for s in range(0, len(F), chunk):
        c = F.centers[s : s + chunk]
        d = 2 * np.arcsin(np.clip(np.sqrt(np.maximum(2 - 2 * c @ RG.T, 0)) / 2, 0, 1))
        best = min(best, float((d - F.radii[s : s + chunk, None] - G.radii[None]).min()))
    return best


@dataclass
class SearchResult:
    success: bool
    index: int | None
    rotation: np.ndarray | None
    margin: float
    best_index: int

    def as_dict(self) -> dict:
        return {
            "success": self.success,
            "index": self.index,
            "rotation": None if self.rotation is None else self.rotation.tolist(),
            "margin": self.margin,
        }


def rotation_separation_search(F: CapFamily, candidates, static: tuple | None = None) -> SearchResult:
    """First candidate R with F and R(F) disjoint, else the best margin seen.

    ``static = (m, margins)`` declares that the first ``m`` caps of ``F`` are
    shared across calls and ``margins[i]`` already holds their self-margin
    under candidate ``i``; only pairs involving the remaining caps are computed.
    """
    cands = list(candidates)
    if not cands:
        raise ContractError("empty candidate list")
    if static is not None:
        m_static, margins = static
        dyn = CapFamily(F.centers[m_static:], F.radii[m_static:])
    best, best_i = -math.inf, 0
    for i, R in enumerate(cands):
        if static is None:
            m = cap_margin(F, R)
        else:
            m = margins[i]
            if m > 0 and len(dyn):
                m = min(m, cap_margin(dyn, R, F), cap_margin(F, R, dyn))
        if m > 0:
            return SearchResult(True, i, np.asarray(R), m, i)
        if m > best:
            best, best_i = m, i
    return SearchResult(False, None, None, best, best_i)


def rotation_about(axis, angle: float) -> np.ndarray:
    return Rotation.from_rotvec(unit(axis) * angle).as_matrix()


def random_rotations(count: int, seed: int) -> list[np.ndarray]:
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xC0FFEE]))
    return list(Rotation.random(count, random_state=rng).as_matrix())


def default_v_samples(count: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x7E57]))
    structured = np.vstack([np.eye(3), unit(np.ones(3))[None]])
    return np.vstack([structured, unit(rng.standard_normal((count, 3)))])


@dataclass
class DimensionCertificate:
    certified: bool
    bound: float
    k: int
    per_v: list
    failed_v: list
    conditional_on: str = "tangent-measure reduction steps cited, not verified"

    def as_dict(self) -> dict:
        return {
            "certified": self.certified,
            "bound": self.bound,
            "k": self.k,
            "per_v": self.per_v,
            "failed_v": self.failed_v,
            "conditional_on": self.conditional_on,
        }


def certify_dimension_bound(bundle, k: int, grid: SphereGrid, v_samples=20, seed: int = 0,
                            enclose: Callable | None = None, candidates=None) -> DimensionCertificate:
    """For each v, find a rotation separating an enclosure of the level set from its image.

    A single rotation with F and R(F) disjoint also empties the common
    intersection of F with any further rotated copies, so the k = 1 search
    certifies every k.
    """
    if k < 1:
        raise ContractError("k must be positive")
    vs = default_v_samples(v_samples, seed) if np.isscalar(v_samples) else np.atleast_2d(v_samples)
    if enclose is None:
        def enclose(v):
            pts = level_set(bundle, v, grid).points
            return CapFamily(pts, np.full(len(pts), 2 * grid.resolution))
    cands = candidates if candidates is not None else random_rotations(64, seed)
    per_v, failed = [], []
    for v in vs:
        F = enclose(v)
        res = rotation_separation_search(F, cands)
        per_v.append({"v": list(map(float, v)), "caps": len(F), **res.as_dict()})
        if not res.success:
            failed.append(list(map(float, v)))
    n = bundle.dim
    ok = not failed
    return DimensionCertificate(ok, dimension_bound(n, k), k, per_v, failed)
