import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from singspec.errors import ContractError, ResolutionError, TruncationError, UnsupportedModelError
from singspec.measures import (
    AtomMeasure,
    FourierTable,
    KernelSpec,
    LebesgueMeasure,
    RieszProductMeasure,
    SelfSimilarMeasure1D,
    ball_mass,
    cantor_measure,
    fourier_coefficients,
    gaussian,
    gaussian_transform,
    load_measure,
    measure_from_config,
    mollify,
    sample_rng,
)

# exp(-pi i m) prod_{k>=1} cos(2 pi m 3^-k), evaluated independently to 80 factors
CANTOR_FROZEN = {1: 0.3714373567087654, 2: -0.07654171272866844, 5: -0.1706579664302125, 7: -0.004242942488047615}


@st.composite
def self_similar(draw):
    k = draw(st.integers(2, 4))
    ratio = draw(st.floats(0.05, 1.0 / k))
    raw = draw(st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k))
    ts = [t * (1 - ratio) * 0.999 for t in raw]
    w = np.array(draw(st.lists(st.floats(0.1, 1.0), min_size=k, max_size=k)))
    w = w / w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return SelfSimilarMeasure1D(ratio, tuple(ts), tuple(w))


class TestCoefficients:
    def test_lebesgue_window_4(self):
        t = fourier_coefficients(LebesgueMeasure(), 4)
        assert t[0] == 1
        assert all(t[m] == 0 for m in range(-4, 5) if m)

    def test_cantor_matches_closed_form(self):
        t = fourier_coefficients(cantor_measure(), 8)
        for m, v in CANTOR_FROZEN.items():
            assert t[m] == pytest.approx(v, abs=1e-13)

    def test_cantor_self_similarity(self):
        t = fourier_coefficients(cantor_measure(), 99)
        for m in range(-33, 34):
            assert abs(t[3 * m] - t[m]) < 1e-9

    def test_riesz_values(self):
        t = fourier_coefficients(RieszProductMeasure((4, 16, 64), (1.0, 1.0, 1.0)), 100)
        assert t[4] == 0.5
        assert t[20] == 0.25
        assert t[5] == 0

    def test_riesz_rejects_real_frequencies(self):
        with pytest.raises(UnsupportedModelError):
            RieszProductMeasure((4, 16), (1.0, 1.0)).transform(np.array([0.5]))

    def test_truncation_error(self):
        m = SelfSimilarMeasure1D(0.999, (0.0, 0.0005), (0.5, 0.5))
        with pytest.raises(TruncationError):
            m.transform(np.array([1e6]))

    def test_csv_round_trip(self, tmp_path):
        t = fourier_coefficients(cantor_measure(), 16)
        t.to_csv(tmp_path / "c.csv")
        back = FourierTable.from_csv(tmp_path / "c.csv")
        assert np.array_equal(back.values, t.values)


class TestBallMass:
    def test_lebesgue(self):
        assert ball_mass(LebesgueMeasure(), 0.5, 0.1) == pytest.approx(0.2, abs=1e-15)

    def test_atom(self):
        a = AtomMeasure()
        assert ball_mass(a, 0.05, 0.1) == 1.0
        assert ball_mass(a, 0.2, 0.1) == 0.0

    @pytest.mark.parametrize("k", [1, 3, 7, 12])
    def test_cantor_dyadic_radii(self, k):
        assert ball_mass(cantor_measure(), 0.0, 3.0**-k) == pytest.approx(2.0**-k, rel=1e-12)

    def test_riesz_against_quadrature(self):
        R = RieszProductMeasure((4, 16, 64), (1.0, 1.0, 1.0))
        for x, r in [(0.335, 0.035), (0.5, 0.2), (0.01, 0.003)]:
            a, b = max(x - r, 0), min(x + r, 1)
            ref = quad(R.density, a, b, limit=500, epsabs=1e-13)[0]
            assert R.ball_mass(x, r) == pytest.approx(ref, abs=1e-9)

    def test_resolution_error(self):
        with pytest.raises(ResolutionError):
            cantor_measure().ball_mass(0.5, 1e-18)

    def test_nonpositive_radius(self):
        with pytest.raises(ContractError):
            AtomMeasure().ball_mass(0.0, 0.0)


class TestKernels:
    def test_gaussian_values(self):
        assert gaussian_transform(0.7, 3, np.zeros(3)) == 1.0
        assert gaussian(1.0, 1, 0.0) == pytest.approx(0.3989422804014327, rel=1e-15)

    def test_gaussian_square_integral(self):
        val = quad(lambda x: gaussian(1.0, 1, x) ** 2, -np.inf, np.inf)[0]
        assert val == pytest.approx(1 / (2 * math.sqrt(math.pi)), abs=1e-10)

    def test_gaussian_integrates_to_one(self):
        assert quad(lambda x: gaussian(0.3, 1, x), -np.inf, np.inf)[0] == pytest.approx(1.0, abs=1e-10)

    def test_fejer_on_dirac(self):
        t = mollify(fourier_coefficients(AtomMeasure(), 3), KernelSpec("fejer", 1))
        assert t[0] == 1 and t[1] == 0.5 and t[-1] == 0.5 and t[2] == 0

    def test_gaussian_mollify_cantor(self):
        base = fourier_coefficients(cantor_measure(), 10)
        out = mollify(base, KernelSpec("gaussian", 0.05))
        m = base.frequencies
        assert np.allclose(np.abs(out.values), np.abs(base.values) * np.exp(-2 * math.pi**2 * 0.05**2 * m**2), atol=1e-15)

    def test_bad_kernel(self):
        with pytest.raises(ContractError):
            KernelSpec("box", 1.0)


class TestValidationAndConfig:
    @pytest.mark.parametrize("args", [
        (1.2, (0.0, 0.5), (0.5, 0.5)),
        (0.3, (0.0,), (1.0,)),
        (0.3, (0.0, 0.5), (0.6, 0.6)),
        (0.5, (0.0, 0.9), (0.5, 0.5)),
    ])
    def test_self_similar_rejects(self, args):
        with pytest.raises(ContractError):
            SelfSimilarMeasure1D(*args)

    def test_riesz_rejects_non_lacunary(self):
        with pytest.raises(ContractError):
            RieszProductMeasure((4, 8), (1.0, 1.0))

    def test_config_round_trip(self, tmp_path):
        for m in [cantor_measure(), RieszProductMeasure((3, 9), (0.5, -1.0)), AtomMeasure((0.25,)), LebesgueMeasure()]:
            assert measure_from_config(m.to_config()) == m
        (tmp_path / "m.json").write_text('{"kind": "self_similar", "preset": "cantor", "seed": 3}')
        assert load_measure(tmp_path / "m.json") == cantor_measure()

    def test_unknown_kind(self):
        with pytest.raises(ContractError):
            measure_from_config({"kind": "poisson"})

    def test_samples_lie_in_hull(self):
        m = cantor_measure()
        x = m.sample(sample_rng(0, 0), 500)
        assert x.min() >= 0 and x.max() <= 1
        assert np.all(np.array([m.ball_mass(v, 1e-9) for v in x[:20]]) > 0)


@settings(max_examples=40, deadline=None)
@given(self_similar(), st.integers(1, 40))
def test_conjugate_symmetry_and_mass_bound(mu, window):
    t = fourier_coefficients(mu, window)
    assert t.is_conjugate_symmetric(1e-12)
    assert np.all(np.abs(t.values) <= t[0].real + 1e-12)
    assert abs(t[0] - 1) < 1e-12


@settings(max_examples=40, deadline=None)
@given(self_similar(), st.floats(0.0, 1.0), st.floats(1e-6, 0.5), st.floats(1.0, 10.0))
def test_ball_mass_monotone(mu, x, r, factor):
    assert mu.ball_mass(x, r) <= mu.ball_mass(x, r * factor) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=4), st.integers(2, 4))
def test_riesz_exact_zeros(amps, base):
    freqs = tuple(base * 3**k for k in range(len(amps)))
    R = RieszProductMeasure(freqs, tuple(amps))
    sums = set(R.spectrum_coefficients())
    t = fourier_coefficients(R, freqs[-1])
    for m in t.frequencies:
        if int(m) not in sums:
            assert t[int(m)] == 0
