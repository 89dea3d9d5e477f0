import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singspec.bundles import SphereGrid, Subspace, grassmann_distance, kernel_subspace, level_set, unit
from singspec.construction import (
    CYCLIC_ROTATION,
    SHIPPED_GAMMA,
    BallFamily,
    ConstructionParams,
    ExpandedP,
    FactoredP,
    FactoredQ,
    GammaParams,
    assemble_operator,
    build_construction,
    build_gamma,
    build_P,
    build_Q,
    bundle_proximity,
    cover_gamma,
    enclosure_certificate,
    gamma_delta_neighborhood,
    rotation_to,
    verify_conditions,
    verify_gamma_plane_crossing,
    verify_gamma_separation,
)
from singspec.errors import CapacityError, ContractError
from singspec.polynomials import Polynomial, homogenize

E = np.eye(3)
EQUATOR = build_gamma(GammaParams())


@pytest.fixture(scope="module")
def shipped():
    return build_construction(0.05)


def sphere(n, seed=0):
    return unit(np.random.default_rng(seed).standard_normal((n, 3)))


class TestGamma:
    def test_full_equator(self):
        pts = EQUATOR.points()
        assert np.abs(pts[:, 2]).max() == 0 and np.allclose(np.linalg.norm(pts, axis=1), 1)

    def test_equator_touching(self):
        rep = verify_gamma_plane_crossing(EQUATOR, normals=[E[2]])
        assert rep.passed and rep.worst_margin == 0

    def test_equator_any_plane(self):
        assert verify_gamma_plane_crossing(EQUATOR, 2000, seed=1).passed

    def test_holes_escape(self):
        holes = build_gamma(GammaParams(hole=math.pi / 8))
        assert not verify_gamma_plane_crossing(holes, normals=[E[0]]).passed
        assert not verify_gamma_plane_crossing(holes, 2000).passed

    def test_shipped_crossing_and_separation(self, shipped):
        assert verify_gamma_plane_crossing(shipped.gamma, 2000, seed=3).passed
        sep = verify_gamma_separation(shipped.gamma)
        assert sep.margin > 0.1

    def test_separation_zero_cases(self):
        assert verify_gamma_separation(build_gamma(), np.eye(3)).distance == 0
        assert verify_gamma_separation(EQUATOR, CYCLIC_ROTATION).distance < 1e-12

    def test_cyclic_rotation(self):
        # quarter turn about e1 followed by a quarter turn about e3
        Rx = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0.0]])
        Rz = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
        assert np.allclose(Rz @ Rx, CYCLIC_ROTATION)

    def test_central_symmetry(self, shipped):
        from scipy.spatial import cKDTree

        pts = shipped.gamma.points()
        assert cKDTree(pts).query(-pts)[0].max() < 1e-9
        assert np.allclose(np.linalg.norm(pts, axis=1), 1, atol=1e-14)

    def test_sampling_step(self, shipped):
        for seg in shipped.gamma.segments:
            assert np.linalg.norm(np.diff(seg, axis=0), axis=1).max() <= shipped.gamma.params.step

    @pytest.mark.parametrize("kw", [{"hole": 1.0}, {"step": 0.01}, {"hole": 0.3, "blocking": True, "X0": 0.5}])
    def test_invalid_params(self, kw):
        with pytest.raises(ContractError):
            build_gamma(GammaParams(**kw))

    def test_csv(self, tmp_path):
        EQUATOR.to_csv(tmp_path / "g.csv")
        assert np.loadtxt(tmp_path / "g.csv", delimiter=",", skiprows=1).shape == EQUATOR.points().shape


class TestCover:
    def test_equator_unit_delta(self):
        assert cover_gamma(EQUATOR, 1.0).N <= 14

    def test_shipped_cover(self, shipped):
        fam = shipped.family
        from scipy.spatial import cKDTree

        assert cKDTree(fam.centers).query(shipped.gamma.points())[0].max() < fam.radius
        assert np.allclose(fam.centers[0::2], -fam.centers[1::2])
        assert fam.N == 646

    @pytest.mark.slow
    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.05, 0.5))
    def test_doubling_monotone(self, delta):
        g = build_gamma(SHIPPED_GAMMA)
        assert cover_gamma(g, 2 * delta).N <= cover_gamma(g, delta).N

    def test_capacity(self):
        with pytest.raises(CapacityError):
            cover_gamma(EQUATOR, 0.01, max_centers=50)

    def test_family_validation(self):
        with pytest.raises(ContractError):
            BallFamily(np.array([E[0], E[1]]), 0.1)
        with pytest.raises(ContractError):
            BallFamily(np.array([E[0], -E[0]]), 0.6)


class TestPolynomials:
    pair = BallFamily(np.array([E[2], -E[2]]), 0.5)

    def test_Q_at_pole(self):
        assert build_Q(self.pair)(E[2]) == pytest.approx(225 / 256, abs=1e-15)
        assert FactoredQ(self.pair)(E[2])[0] == pytest.approx(225 / 256, rel=1e-14)

    def test_Q_vanishes_on_T(self):
        # points at Euclidean distance r = 1/2 from e3 on the sphere have z = 1 - r^2/2
        z = 1 - 0.125
        pts = np.array([[math.sqrt(1 - z * z) * math.cos(a), math.sqrt(1 - z * z) * math.sin(a), z]
                        for a in np.linspace(0, 6, 7)])
        assert np.abs(build_Q(self.pair)(pts)).max() < 1e-15

    def test_capacity(self, shipped):
        with pytest.raises(CapacityError):
            build_Q(shipped.family)
        with pytest.raises(CapacityError):
            build_P(build_Q(self.pair), K=1e13)
        with pytest.raises(ContractError):
            build_P(build_Q(self.pair))

    def test_factored_matches_expanded(self):
        fam = BallFamily(np.array([unit([1.0, 2, 2]), -unit([1.0, 2, 2]), E[0], -E[0]]), 0.3)
        xi = sphere(200)
        Qe, Qf = build_Q(fam), FactoredQ(fam)
        assert np.abs(Qf(xi) - Qe(xi)).max() < 1e-12
        Pe = build_P(Qe, K=50.0)
        Pf = build_P(Qf, K=50.0)
        assert isinstance(Pe, ExpandedP) and isinstance(Pf, FactoredP)
        assert np.allclose(np.abs(np.sum(unit(Pe.evaluate(xi)) * Pf.evaluate(xi), axis=1)), 1, atol=1e-12)

    def test_nonvanishing(self, shipped):
        assert shipped.P.log_P3(sphere(100_000, 1)).min() >= 0

    def test_params(self):
        p = ConstructionParams.from_delta(0.05, 10)
        p.check()
        assert p.r == 0.025 and p.log_K == pytest.approx(41 * math.log(20))
        with pytest.raises(ContractError):
            ConstructionParams(0.05, 10, 0.025, 1.0).check()

    def test_homogenized_components(self):
        P = build_P(build_Q(self.pair), K=3.0)
        H = P.homogenized()
        xi = sphere(500)
        assert len({c.degree for c in H}) == 1
        for c, h in zip(P.components, H):
            assert h.is_homogeneous() and np.allclose(h(xi), c(xi), atol=1e-10)


class TestOperator:
    def test_e3_symbol(self):
        op = assemble_operator((Polynomial(3, {}), Polynomial(3, {}), Polynomial.monomial((2, 0, 0)) + Polynomial.monomial((0, 2, 0)) + Polynomial.monomial((0, 0, 2))))
        S = op.symbol(unit(np.array([0.3, -0.4, 0.5])))
        assert np.allclose(S, [[0, -1, 0], [1, 0, 0], [0, 0, 0]])
        assert grassmann_distance(kernel_subspace(S), Subspace.span(E[2])) < 1e-15

    def test_needs_homogeneous(self):
        P = build_P(build_Q(TestPolynomials.pair), K=3.0)
        with pytest.raises(ContractError):
            assemble_operator(P)

    def test_expanded_annihilates_P(self):
        P = build_P(build_Q(TestPolynomials.pair), K=3.0)
        op = assemble_operator(P.homogenized())
        xi = sphere(300)
        S = op.symbol(xi)
        Pv = P.evaluate(xi)
        assert np.allclose(S, -np.swapaxes(S, -1, -2))
        assert np.abs(np.einsum("nij,nj->ni", S, Pv)).max() < 1e-9 * np.abs(S).max()

    def test_four_rows_discrepancy(self):
        P = (Polynomial(3, {}), Polynomial(3, {}), Polynomial.monomial((0, 0, 2)))
        A = assemble_operator(P, four_rows=True).symbol(E[2])
        assert np.allclose(A @ E[2], [0, -1, 0, -1])

    def test_shipped_kernel(self, shipped):
        for x in sphere(1000, 2):
            K = kernel_subspace(shipped.operator.symbol(x))
            assert K.dim == 1
            assert grassmann_distance(K, shipped.P.subspace(x)) < 1e-8


class TestNeighbourhoods:
    def test_counts(self, shipped):
        N = shipped.family.N
        assert len(gamma_delta_neighborhood(E[2], shipped.params, shipped.family)) == N + 2
        assert len(gamma_delta_neighborhood(np.ones(3), shipped.params, shipped.family)) == N + 10

    def test_radii(self, shipped):
        F = gamma_delta_neighborhood(np.ones(3), shipped.params, shipped.family)
        assert F.radii[0] == pytest.approx(2 * math.asin(0.1))
        assert F.radii[-1] == pytest.approx(2 * math.asin(0.025))

    @pytest.mark.parametrize("v", [np.ones(3), np.array([1.0, 2.0, 3.0])])
    def test_contains_level_set(self, shipped, v):
        ls = level_set(shipped.P, v, SphereGrid.with_resolution(0.05))
        assert len(ls) == 8
        assert gamma_delta_neighborhood(v, shipped.params, shipped.family).contains(ls.points).all()

    def test_rotation_to(self):
        e = unit(np.array([0.1, 1.0, -0.2]))
        R = rotation_to(e)
        assert np.allclose(R @ E[1], e) and np.allclose(R @ R.T, np.eye(3))
        assert np.allclose(R @ np.cross(E[1], e), np.cross(E[1], e))

    def test_enclosure_certificate(self, shipped):
        assert enclosure_certificate(shipped.P, shipped.params, samples=5000)["min_log_KQ"] > 7000


class TestConditions:
    def test_equator_fails_C(self):
        con = build_construction(0.05, GammaParams())
        rep = verify_conditions(con, v_samples=np.array([E[2]]), plane_samples=50, nonvanishing_samples=1000)
        assert rep.A and not rep.C and rep.status == "fail"

    def test_empty_family_fails_B(self):
        con = build_construction(0.05, empty_family=True)
        rep = verify_conditions(con, v_samples=np.array([E[2]]), plane_samples=50, nonvanishing_samples=1000)
        assert not rep.B and rep.details["B"]["refuting_plane"] is not None

    def test_shipped_small(self, shipped):
        rep = verify_conditions(shipped, v_samples=10, seed=5, plane_samples=500, nonvanishing_samples=10_000)
        assert rep.status == "pass"
        for e in rep.details["C"]["per_v"]:
            R = np.array(e["rotation"])
            assert np.allclose(R @ R.T, np.eye(3)) and np.linalg.det(R) == pytest.approx(1)

    @settings(max_examples=5, deadline=None)
    @given(st.integers(0, 10**6))
    def test_B_monotone(self, seed):
        con = build_construction(0.1)
        extra = unit(np.random.default_rng(seed).standard_normal((3, 3)))
        bigger = BallFamily(np.vstack([con.family.centers] + [np.array([a, -a]) for a in extra]), con.family.radius)
        params = ConstructionParams.from_delta(0.1, bigger.N)
        from singspec.construction import FactoredOperator

        P = FactoredP(FactoredQ(bigger), params.log_K)
        from singspec.bundles import wave_cone_witness

        base = wave_cone_witness(con.operator, 2, E[2], 300, seed)
        more = wave_cone_witness(FactoredOperator(P), 2, E[2], 300, seed)
        assert base.status != "verified" or more.status == "verified"


class TestProximity:
    def test_finite(self):
        rep = bundle_proximity(0.1, samples=2000)
        assert math.isfinite(rep["log10_C"]) and rep["log10_C"] < 0

    def test_json(self, shipped):
        d = json.loads(json.dumps(shipped.to_json()))
        assert d["delta"] == 0.05 and len(d["centers"]) == 646 and d["r"] == 0.025
        assert d["P_coefficients"]["degree"] == 4 * 646 + 2
