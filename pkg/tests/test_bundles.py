import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import subspace_angles
from scipy.spatial.transform import Rotation

from singspec.bundles import (
    CapFamily,
    PDOperator,
    SphereGrid,
    Subspace,
    cap_margin,
    certify_dimension_bound,
    constant_bundle,
    cross_matrix,
    divergence_operator,
    grassmann_distance,
    kernel_subspace,
    level_set,
    one_cone_condition,
    rotation_about,
    rotation_separation_search,
    squares_bundle,
    symbol,
    tautological_bundle,
    wave_cone_witness,
)
from singspec.errors import ContractError

E = np.eye(3)
CUBE = np.array([[i, j, k] for i in (1, -1) for j in (1, -1) for k in (1, -1)]) / math.sqrt(3)


def rand_unit(seed, n=3):
    v = np.random.default_rng(seed).standard_normal(n)
    return v / np.linalg.norm(v)


def same_points(a, b, tol):
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if len(a) != len(b):
        return False
    d = np.linalg.norm(a[:, None] - b[None], axis=-1)
    return bool(d.min(1).max() < tol and d.min(0).max() < tol)


class TestSymbols:
    def test_divergence(self):
        assert np.array_equal(symbol(divergence_operator(), np.array([1.0, 2.0, 3.0])), [[1.0, 2.0, 3.0]])
        assert not np.any(symbol(divergence_operator(), np.zeros(3)))

    def test_cross_matrix_e3(self):
        assert np.array_equal(cross_matrix(E[2]), [[0, -1, 0], [1, 0, 0], [0, 0, 0]])

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            symbol(divergence_operator(), np.ones(2))

    def test_operator_validation(self):
        with pytest.raises(ContractError):
            PDOperator(1, (((1, 0), np.zeros((1, 2))),))
        with pytest.raises(ContractError):
            PDOperator(2, (((1, 0), np.ones((1, 2))),))

    def test_json_round_trip(self):
        op = divergence_operator()
        back = PDOperator.from_json(op.to_json())
        xi = rand_unit(0)
        assert np.array_equal(back.symbol(xi), op.symbol(xi))


class TestKernels:
    def test_examples(self):
        assert kernel_subspace(np.zeros((3, 3))).dim == 3
        K = kernel_subspace(np.array([[1.0, 2.0, 3.0]]))
        assert K.dim == 2 and np.allclose(K.basis.T @ [1, 2, 3], 0)
        K = kernel_subspace(cross_matrix(E[2]))
        assert grassmann_distance(K, Subspace.span(E[2])) < 1e-15

    def test_bad_tol(self):
        with pytest.raises(ContractError):
            kernel_subspace(np.eye(2), 0.0)

    def test_grassmann_examples(self):
        e1, e2 = Subspace.span(E[0]), Subspace.span(E[1])
        assert grassmann_distance(e1, e1) == 0
        assert grassmann_distance(e1, e2) == pytest.approx(1.0)
        assert grassmann_distance(e1, Subspace.span(E[0] + E[1])) == pytest.approx(math.sqrt(2) / 2)
        with pytest.raises(ContractError):
            grassmann_distance(e1, Subspace.span(E[:, :2]))


class TestLevelSets:
    grid = SphereGrid.with_resolution(0.05)

    def test_grid_covers(self):
        probe = np.random.default_rng(0).standard_normal((2000, 3))
        probe /= np.linalg.norm(probe, axis=1, keepdims=True)
        d = np.arccos(np.clip(probe @ self.grid.nodes.T, -1, 1)).min(1)
        assert d.max() <= self.grid.resolution

    def test_squares_diagonal(self):
        pts = level_set(squares_bundle(), np.ones(3), self.grid).points
        assert same_points(pts, CUBE, 1e-6)

    def test_squares_pole(self):
        pts = level_set(squares_bundle(), E[2], self.grid).points
        assert same_points(pts, [E[2], -E[2]], self.grid.resolution / 10)

    def test_squares_empty(self):
        assert len(level_set(squares_bundle(), np.array([1.0, -1.0, 0.0]), self.grid)) == 0

    def test_signed_permutation_equivariance(self):
        v = np.array([1.0, 2.0, 3.0])
        perm = np.array([[0, 0, -1], [1, 0, 0], [0, -1, 0]], float)
        a = level_set(squares_bundle(), v, self.grid).points
        # (x^2, y^2, z^2) only sees |v_i|, so the level set of Pv is the permuted level set of v
        b = level_set(squares_bundle(), np.abs(perm) @ v, self.grid).points
        assert len(a) == 8 and same_points(a @ np.abs(perm).T, b, 1e-6)

    def test_csv(self, tmp_path):
        ls = level_set(squares_bundle(), np.ones(3), self.grid)
        ls.to_csv(tmp_path / "l.csv")
        back = np.loadtxt(tmp_path / "l.csv", delimiter=",", skiprows=1)
        assert np.array_equal(back, ls.points)


class TestOneCone:
    grid = SphereGrid.with_resolution(0.2)

    def test_constant(self):
        res = one_cone_condition(constant_bundle(E[0]), self.grid)
        assert not res.holds and abs(abs(res.witness @ E[0]) - 1) < 1e-12

    def test_tautological(self):
        res = one_cone_condition(tautological_bundle(), self.grid)
        assert res.holds and len(res.certificate) == 2

    def test_squares(self):
        assert one_cone_condition(squares_bundle(), self.grid).holds


class TestWaveCone:
    def test_divergence_line_refuted(self):
        assert wave_cone_witness(divergence_operator(), 1, E[0], plane_samples=20).status == "refuted"

    def test_divergence_plane_verified(self):
        res = wave_cone_witness(divergence_operator(), 2, rand_unit(3), plane_samples=50)
        assert res.status == "verified" and res.certificates["sign_change"] == 50

    def test_common_kernel(self):
        # every symbol annihilates e3
        terms = tuple(((1, 0, 0) if i == 0 else (0, 1, 0) if i == 1 else (0, 0, 1), np.outer(E[i], [1, 1, 0]))
                      for i in range(3))
        res = wave_cone_witness(PDOperator(1, terms), 2, E[2], plane_samples=30, structured=10)
        assert res.status == "verified" and res.planes_checked == 40

    def test_rejects(self):
        with pytest.raises(ContractError):
            wave_cone_witness(divergence_operator(), 3, E[0])
        with pytest.raises(ContractError):
            wave_cone_witness(divergence_operator(), 2, np.zeros(3))


class TestRotationSearch:
    def test_single_cap(self):
        F = CapFamily(E[0][None], [0.1])
        res = rotation_separation_search(F, [np.eye(3), rotation_about(E[2], math.pi)])
        assert res.success and res.index == 1 and res.margin == pytest.approx(math.pi - 0.2, abs=1e-12)

    def test_full_sphere(self):
        F = CapFamily(E[0][None], [math.pi])
        assert not rotation_separation_search(F, [rotation_about(E[2], 1.0), np.eye(3)]).success

    def test_cube(self):
        F = CapFamily(CUBE, np.full(8, 0.1))
        res = rotation_separation_search(F, [rotation_about(E[2], math.pi / 4)])
        gap = math.acos((math.sqrt(2) + 1) / 3)
        assert res.success and res.margin == pytest.approx(gap - 0.2, abs=1e-12)

    def test_empty(self):
        with pytest.raises(ContractError):
            rotation_separation_search(CapFamily(CUBE, 0.1), [])

    def test_static_margins_agree(self):
        F = CapFamily(CUBE, np.full(8, 0.1))
        G = CapFamily(np.vstack([CUBE, E[2][None]]), np.r_[np.full(8, 0.1), 0.05])
        cands = [rotation_about(rand_unit(i), 0.3 + 0.2 * i) for i in range(6)]
        pre = [cap_margin(F, R) for R in cands]
        a = rotation_separation_search(G, cands)
        b = rotation_separation_search(G, cands, static=(8, pre))
        assert a.index == b.index and a.margin == pytest.approx(b.margin, abs=1e-15)


class TestCertificate:
    @pytest.mark.slow
    def test_squares(self):
        cert = certify_dimension_bound(squares_bundle(), 1, SphereGrid.with_resolution(0.05), v_samples=6)
        assert cert.certified and cert.bound == 1.5 and not cert.failed_v

    def test_constant(self):
        cert = certify_dimension_bound(constant_bundle(E[0]), 1, SphereGrid.with_resolution(0.3),
                                       v_samples=np.array([E[0]]))
        assert not cert.certified and cert.failed_v == [list(E[0])]

    def test_bad_k(self):
        with pytest.raises(ContractError):
            certify_dimension_bound(squares_bundle(), 0, SphereGrid.with_resolution(0.3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 10.0))
def test_symbol_homogeneity(seed, t):
    xi = rand_unit(seed)
    op = PDOperator(2, (((2, 0, 0), np.ones((2, 3))), ((0, 1, 1), np.arange(6.0).reshape(2, 3))))
    assert np.linalg.norm(op.symbol(t * xi) - t**2 * op.symbol(xi)) < 1e-9 * max(1, t * t)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5), st.integers(0, 4))
def test_kernel_correctness(seed, rows, rank):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((rows, min(rank, rows))) @ rng.standard_normal((min(rank, rows), 5))
    tol = 1e-10
    K = kernel_subspace(M, tol)
    assert np.linalg.norm(M @ K.basis) <= 10 * tol * max(np.linalg.norm(M, 2), 1e-300) + 1e-300
    assert K.dim == 5 - np.linalg.matrix_rank(M)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3))
def test_grassmann_metric(seed, d):
    rng = np.random.default_rng(seed)
    V, W, U = (Subspace.span(rng.standard_normal((5, d))) for _ in range(3))
    dvw = grassmann_distance(V, W)
    assert dvw == pytest.approx(grassmann_distance(W, V), abs=1e-12)
    assert dvw <= grassmann_distance(V, U) + grassmann_distance(U, W) + 1e-9
    assert dvw == pytest.approx(np.sin(subspace_angles(V.basis, W.basis).max()), abs=1e-9)
    assert grassmann_distance(V, V) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_search_conjugation_invariance(seed):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((5, 3))
    F = CapFamily(C / np.linalg.norm(C, axis=1, keepdims=True), rng.uniform(0.01, 0.2, 5))
    S = Rotation.random(random_state=seed).as_matrix()
    cands = list(Rotation.random(4, random_state=seed + 1).as_matrix())
    a = rotation_separation_search(F, cands)
    b = rotation_separation_search(CapFamily(F.centers @ S.T, F.radii), [S @ R @ S.T for R in cands])
    assert a.success == b.success and a.margin == pytest.approx(b.margin, abs=1e-9)
