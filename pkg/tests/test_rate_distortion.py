import logging

import numpy as np
import pytest

from cas_optim.data_types import Grid
from cas_optim.data_types import Pmf
from cas_optim.data_types import ScalarScenario
from cas_optim.errors import DimensionError
from cas_optim.prob import entropy
from cas_optim.rate_distortion import build_curve
from cas_optim.rate_distortion import curve_for_rate
from cas_optim.rate_distortion import default_slopes
from cas_optim.rate_distortion import distortion_at_rate
from cas_optim.rate_distortion import rate_at_distortion
from cas_optim.rate_distortion import rd_point
from cas_optim.rate_distortion import rd_point_at_rate
from cas_optim.rate_distortion import scaled_slopes
from cas_optim.rate_distortion import zero_rate_distortion
from cas_optim.scalar_model import state_prior

HAMMING = 1.0 - np.eye(2)
DENSE_SLOPES = tuple(-value for value in np.geomspace(0.3, 15.0, 80))


def binary_entropy(p: float) -> float:
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


@pytest.fixture
def gaussian_source() -> Pmf:
    return state_prior(ScalarScenario())


@pytest.fixture
def gaussian_curve(gaussian_source: Pmf):
    return build_curve(gaussian_source, DENSE_SLOPES)


@pytest.mark.parametrize("slope", [0.0, 0.5, 3.0])
def test_rd_point_requires_negative_slope(gaussian_source: Pmf, slope: float):
    with pytest.raises(ValueError):
        rd_point(gaussian_source, slope)


def test_rd_point_needs_grid_or_matrix():
    with pytest.raises(DimensionError):
        rd_point(Pmf(mass=np.array([0.5, 0.5])), -1.0)


def test_rd_point_matrix_shape_mismatch():
    with pytest.raises(DimensionError):
        rd_point(Pmf(mass=np.array([0.5, 0.5])), -1.0, distortion=np.ones((3, 2)))


@pytest.mark.parametrize("p, target", [(0.3, 0.1), (0.5, 0.2), (0.2, 0.05)])
def test_rd_point_hamming(p: float, target: float):
    source = Pmf(mass=np.array([1 - p, p]))
    # the tangent slope of h(p) - h(D) at D is ln(D / (1 - D)) nats
    point = rd_point(source, np.log(target / (1 - target)), distortion=HAMMING)
    assert point.converged
    assert point.distortion == pytest.approx(target, abs=1e-3)
    assert point.rate_bits == pytest.approx(
        binary_entropy(p) - binary_entropy(target), abs=1e-3
    )


def test_rd_point_lagrangian_monotone(gaussian_source: Pmf):
    point = rd_point(gaussian_source, -2.0)
    history = np.asarray(point.lagrangian_history)
    assert np.all(np.diff(history) <= 1e-12)
    np.testing.assert_allclose(point.test_channel.rows.sum(axis=1), 1.0, atol=1e-10)


def test_zero_rate_distortion(gaussian_source: Pmf):
    assert zero_rate_distortion(gaussian_source) == pytest.approx(
        gaussian_source.variance(), rel=1e-9
    )
    assert zero_rate_distortion(Pmf(mass=np.array([0.7, 0.3])), distortion=HAMMING) == (
        pytest.approx(0.3)
    )


def test_curve_endpoints(gaussian_source: Pmf, gaussian_curve):
    assert gaussian_curve.rates[-1] == 0.0
    assert gaussian_curve.distortions[-1] == pytest.approx(gaussian_source.variance(), rel=1e-3)
    assert gaussian_curve.zero_rate_distortion == pytest.approx(gaussian_source.variance())
    assert gaussian_curve.source_entropy_bits == pytest.approx(entropy(gaussian_source))
    assert np.all(np.diff(gaussian_curve.distortions) > 0)
    assert np.all(np.diff(gaussian_curve.rates) <= 0)
    chords = np.diff(gaussian_curve.rates) / np.diff(gaussian_curve.distortions)
    assert np.all(np.diff(chords) >= -1e-9 * np.abs(chords).max())


@pytest.mark.parametrize("distortion", [0.05, 0.1, 0.2, 0.4, 0.8])
def test_gaussian_curve(gaussian_curve, distortion: float):
    expected = 0.5 * np.log2(1.0 / distortion)
    assert rate_at_distortion(gaussian_curve, distortion) == pytest.approx(expected, rel=3e-2)


def test_gaussian_distortion_at_one_bit(gaussian_curve):
    lookup = distortion_at_rate(gaussian_curve, 1.0)
    assert lookup.distortion == pytest.approx(0.25, rel=3e-2)
    assert not lookup.extrapolated


def test_distortion_at_zero_rate(gaussian_curve):
    lookup = distortion_at_rate(gaussian_curve, 0.0)
    assert lookup.distortion == pytest.approx(gaussian_curve.zero_rate_distortion, rel=1e-3)


def test_distortion_at_rate_clamps(gaussian_curve, caplog: pytest.LogCaptureFixture):
    with caplog.at_level(logging.WARNING, logger="cas_optim.rate_distortion"):
        lookup = distortion_at_rate(gaussian_curve, gaussian_curve.max_rate + 1.0)
    assert lookup.extrapolated
    assert lookup.distortion == gaussian_curve.distortions[0]
    assert "clamping" in caplog.text


def test_distortion_at_negative_rate(gaussian_curve):
    with pytest.raises(ValueError):
        distortion_at_rate(gaussian_curve, -0.1)


def test_rate_beyond_zero_rate_distortion(gaussian_curve):
    assert rate_at_distortion(gaussian_curve, 10.0) == 0.0


def test_finer_slopes_never_raise_rate(gaussian_source: Pmf):
    fine = DENSE_SLOPES
    coarse = fine[::8]
    fine_curve = build_curve(gaussian_source, fine)
    coarse_curve = build_curve(gaussian_source, coarse)
    for distortion in np.linspace(0.06, 0.9, 15):
        assert rate_at_distortion(fine_curve, distortion) <= (
            rate_at_distortion(coarse_curve, distortion) + 1e-9
        )


def test_curve_needs_two_slopes(gaussian_source: Pmf):
    with pytest.raises(ValueError):
        build_curve(gaussian_source, [-1.0, -1.0])


def test_hamming_curve():
    p = 0.3
    source = Pmf(mass=np.array([1 - p, p]))
    slopes = [np.log(d / (1 - d)) for d in np.linspace(0.02, 0.28, 14)]
    curve = build_curve(source, slopes, distortion=HAMMING)
    assert curve.distortions[-1] == pytest.approx(p)
    for distortion in (0.05, 0.15, 0.25):
        expected = binary_entropy(p) - binary_entropy(distortion)
        assert rate_at_distortion(curve, distortion) == pytest.approx(expected, abs=1e-2)


def test_default_slopes():
    slopes = default_slopes()
    assert all(slope < 0 for slope in slopes)
    assert len(set(slopes)) == len(slopes)


def test_rd_point_at_rate(gaussian_source: Pmf):
    point = rd_point_at_rate(gaussian_source, 1.0)
    assert point.rate_bits == pytest.approx(1.0, abs=1e-4)
    assert point.distortion == pytest.approx(0.25, rel=3e-2)
    assert point.slope < 0


@pytest.mark.parametrize("rate", [0.0, -1.0, 100.0])
def test_rd_point_at_rate_out_of_range(gaussian_source: Pmf, rate: float):
    with pytest.raises(ValueError):
        rd_point_at_rate(gaussian_source, rate)


def test_scaled_slopes():
    source = state_prior(ScalarScenario(state_variance=0.1))
    variance = source.variance()
    assert np.allclose(np.array(scaled_slopes(source)) * variance, default_slopes())


def test_scaled_slopes_reach_small_variance_sources():
    source = state_prior(ScalarScenario(state_variance=0.1))
    curve = build_curve(source, scaled_slopes(source))
    unscaled = build_curve(source, default_slopes())
    assert curve.max_rate > unscaled.max_rate
    assert not distortion_at_rate(curve, 2.5).extrapolated


def test_curve_for_rate_extends_slopes(gaussian_source: Pmf):
    shallow = (-0.05, -0.1)
    assert build_curve(gaussian_source, shallow).max_rate < 2.0
    curve = curve_for_rate(gaussian_source, 2.0, shallow)
    assert curve.max_rate >= 2.0
    lookup = distortion_at_rate(curve, 2.0)
    assert not lookup.extrapolated
    assert lookup.distortion == pytest.approx(2.0**-4, rel=0.1)


def test_curve_for_rate_stops_at_source_entropy():
    source = Pmf(mass=np.array([0.5, 0.5]), grid=Grid(points=np.array([-1.0, 1.0])))
    curve = curve_for_rate(source, 3.0, (-0.5, -1.0))
    assert curve.max_rate <= 1.0 + 1e-9
    assert distortion_at_rate(curve, 3.0).extrapolated
