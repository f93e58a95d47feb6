import logging
import typing

import joblib
import numpy as np
import scipy.optimize
from scipy.special import logsumexp

from . import constants
from .data_types import CondPmf
from .data_types import DistortionAtRate
from .data_types import Grid
from .data_types import Pmf
from .data_types import RdCurve
from .data_types import RdPoint
from .errors import DimensionError
from .errors import InvariantViolation
from .prob import LN2
from .prob import entropy


def default_slopes(
    count: int = constants.RD_SLOPE_COUNT,
    low: float = constants.RD_SLOPE_MIN,
    high: float = constants.RD_SLOPE_MAX,
) -> tuple[float, ...]:
    return tuple(-value for value in np.geomspace(low, high, count))


def squared_error_matrix(source_grid: Grid, reproduction_grid: Grid) -> np.ndarray:
    return (source_grid.points[:, None] - reproduction_grid.points[None, :]) ** 2


def _distortion_matrix(
    source: Pmf, reproduction_grid: Grid | None, distortion: np.ndarray | None
) -> np.ndarray:
    if distortion is None:
        if source.grid is None:
            raise DimensionError("Source without grid needs an explicit distortion matrix")
        distortion = squared_error_matrix(source.grid, reproduction_grid or source.grid)
    distortion = np.asarray(distortion, dtype=float)
    if distortion.ndim != 2 or distortion.shape[0] != len(source):
        raise DimensionError(
            f"Distortion matrix shape {distortion.shape} does not match source length {len(source)}"
        )
    return distortion


def zero_rate_distortion(
    source: Pmf,
    reproduction_grid: Grid | None = None,
    distortion: np.ndarray | None = None,
) -> float:
    distortion = _distortion_matrix(source, reproduction_grid, distortion)
    return float((source.mass @ distortion).min())


def rd_point(
    source: Pmf,
    slope: float,
    reproduction_grid: Grid | None = None,
    distortion: np.ndarray | None = None,
    max_iters: int = constants.RD_MAX_ITERS,
    rel_tol: float = constants.RD_REL_TOL,
) -> RdPoint:
    """Tangent point of the rate-distortion curve with slope ``slope`` (nats per unit distortion).

    Coordinate descent between the test channel Q(s_hat|s) and the output
    marginal q(s_hat), done in the log domain.
    """
    logger = logging.getLogger(__name__)
    if not slope < 0:
        raise ValueError(f"Rate-distortion slope must be negative, got {slope}")
    rho = _distortion_matrix(source, reproduction_grid, distortion)
    support = source.support
    p = source.mass[support]
    log_p = np.log(p)
    rho_support = rho[support]
    scaled = slope * rho_support
    m = rho.shape[1]
    log_q = np.full(m, -np.log(m))
    history = []
    previous = np.inf
    converged = False
    step = 0
    rate = 0.0
    mean_distortion = 0.0
    log_Q = np.zeros_like(rho_support)
    for step in range(1, max_iters + 1):
        log_Q = scaled + log_q[None, :]
        log_Q -= logsumexp(log_Q, axis=1, keepdims=True)
        log_q = logsumexp(log_p[:, None] + log_Q, axis=0)
        Q = np.exp(log_Q)
        finite = Q > 0
        rate = float(
            p @ np.where(finite, Q * (log_Q - np.where(finite, log_q[None, :], 0.0)), 0.0).sum(axis=1)
        )
        rate = max(rate, 0.0)
        mean_distortion = float(p @ (Q * rho_support).sum(axis=1))
        lagrangian = rate - slope * mean_distortion
        history.append(lagrangian)
        if previous - lagrangian <= rel_tol * max(abs(lagrangian), 1e-12):
            converged = True
            break
        previous = lagrangian
    if not converged:
        logger.warning(
            "Rate-distortion BA did not converge within %s iterations (slope=%s)",
            max_iters,
            slope,
        )
    rows = np.zeros((len(source), m))
    rows[support] = np.exp(log_Q)
    rows[~support] = np.exp(log_q)
    rows /= rows.sum(axis=1, keepdims=True)
    return RdPoint(
        slope=float(slope),
        distortion=mean_distortion,
        rate_bits=rate / LN2,
        iterations=step,
        converged=converged,
        test_channel=CondPmf(
            rows=rows, input_grid=source.grid, output_grid=reproduction_grid or source.grid
        ),
        lagrangian_history=tuple(history),
    )


def _lower_hull(points: list[tuple[float, float, float]]) -> list[tuple[float, float, float]]:
    hull = []
    for point in points:
        while len(hull) >= 2:
            (x1, y1, _), (x2, y2, _) = hull[-2], hull[-1]
            cross = (x2 - x1) * (point[1] - y1) - (y2 - y1) * (point[0] - x1)
            if cross > 0:
                break
            hull.pop()
        hull.append(point)
    return hull


def build_curve(
    source: Pmf,
    slope_set: typing.Sequence[float] | None = None,
    reproduction_grid: Grid | None = None,
    distortion: np.ndarray | None = None,
    n_jobs: int = 1,
    max_iters: int = constants.RD_MAX_ITERS,
    rel_tol: float = constants.RD_REL_TOL,
) -> RdCurve:
    if slope_set is None:
        slope_set = default_slopes()
    slopes = sorted(set(float(slope) for slope in slope_set))
    if len(slopes) < 2:
        raise ValueError("At least two distinct slopes are required to build a curve")
    points = joblib.Parallel(n_jobs=n_jobs)(
        joblib.delayed(rd_point)(
            source,
            slope,
            reproduction_grid=reproduction_grid,
            distortion=distortion,
            max_iters=max_iters,
            rel_tol=rel_tol,
        )
        for slope in slopes
    )
    d_max = zero_rate_distortion(source, reproduction_grid, distortion)
    raw = [(point.distortion, point.rate_bits, point.slope) for point in points]
    raw.append((d_max, 0.0, 0.0))
    raw.sort(key=lambda item: (item[0], -item[1]))
    deduped = []
    for item in raw:
        if deduped and abs(item[0] - deduped[-1][0]) <= 1e-12 * max(1.0, d_max):
            continue
        deduped.append(item)
    hull = _lower_hull(deduped)
    # keep the decreasing branch up to the first zero-rate point
    last = min(range(len(hull)), key=lambda index: (hull[index][1], hull[index][0]))
    hull = hull[: last + 1]
    if len(hull) < 2:
        raise ValueError("Rate-distortion curve is degenerate: all points coincide")
    curve = RdCurve(
        distortions=np.array([item[0] for item in hull]),
        rates=np.array([item[1] for item in hull]),
        slopes=np.array([item[2] for item in hull]),
        zero_rate_distortion=d_max,
        source_entropy_bits=entropy(source),
    )
    chord_slopes = np.diff(curve.rates) / np.diff(curve.distortions)
    if np.any(np.diff(chord_slopes) < -1e-9 * max(1.0, np.abs(chord_slopes).max())):
        raise InvariantViolation("Rate-distortion curve is not convex after the hull step")
    return curve


def scaled_slopes(source: Pmf) -> tuple[float, ...]:
    """Default slopes divided by the source variance.

    The slope of a Gaussian curve at distortion D is -1/(2D), so dividing by
    the variance keeps the same range of D relative to the variance.
    """
    variance = source.variance()
    if variance <= 0:
        return default_slopes()
    return tuple(slope / variance for slope in default_slopes())


def curve_for_rate(
    source: Pmf,
    rate_bits: float,
    slope_set: typing.Sequence[float] | None = None,
    n_jobs: int = 1,
    max_extensions: int = constants.RD_MAX_EXTENSIONS,
) -> RdCurve:
    """Curve whose tabulated rates reach ``rate_bits`` whenever the source allows it.

    Steeper slopes are appended while the tabulated maximum falls short of the
    target rate. Extension stops once it no longer raises the maximum rate,
    which happens when the source entropy is reached.
    """
    logger = logging.getLogger(__name__)
    slopes = list(scaled_slopes(source) if slope_set is None else slope_set)
    curve = build_curve(source, slopes, n_jobs=n_jobs)
    factors = np.geomspace(
        constants.RD_SLOPE_EXTENSION_FACTOR ** (1.0 / constants.RD_SLOPE_EXTENSION_COUNT),
        constants.RD_SLOPE_EXTENSION_FACTOR,
        constants.RD_SLOPE_EXTENSION_COUNT,
    )
    for _ in range(max_extensions):
        if curve.max_rate >= rate_bits:
            break
        steepest = min(slopes)
        slopes.extend(float(steepest * factor) for factor in factors)
        logger.debug(
            "Curve tops out at %.6g bits below %.6g bits, extending slopes to %.6g",
            curve.max_rate,
            rate_bits,
            min(slopes),
        )
        extended = build_curve(source, slopes, n_jobs=n_jobs)
        saturated = extended.max_rate <= curve.max_rate + 1e-12
        curve = extended
        if saturated:
            break
    return curve


def distortion_at_rate(curve: RdCurve, rate_bits: float) -> DistortionAtRate:
    logger = logging.getLogger(__name__)
    if len(curve) == 0:
        raise ValueError("Rate-distortion curve is empty")
    if rate_bits < 0:
        raise ValueError(f"Rate must be non-negative, got {rate_bits}")
    if rate_bits > curve.max_rate:
        logger.warning(
            "Rate %.6g bits beyond tabulated maximum %.6g, clamping distortion",
            rate_bits,
            curve.max_rate,
        )
        return DistortionAtRate(distortion=float(curve.distortions[0]), extrapolated=True)
    value = np.interp(rate_bits, curve.rates[::-1], curve.distortions[::-1])
    return DistortionAtRate(distortion=float(value), extrapolated=False)


def rate_at_distortion(curve: RdCurve, distortion: float) -> float:
    if len(curve) == 0:
        raise ValueError("Rate-distortion curve is empty")
    if distortion >= curve.distortions[-1]:
        return float(curve.rates[-1])
    return float(np.interp(distortion, curve.distortions, curve.rates))


def rd_point_at_rate(
    source: Pmf,
    rate_bits: float,
    reproduction_grid: Grid | None = None,
    distortion: np.ndarray | None = None,
    log_slope_tol: float = 1e-6,
) -> RdPoint:
    """Point of the curve whose rate matches ``rate_bits``, found by bisecting the slope."""
    if rate_bits <= 0:
        raise ValueError(f"Target rate must be positive, got {rate_bits}")
    if rate_bits >= entropy(source):
        raise ValueError(
            f"Target rate {rate_bits} bits reaches the source entropy {entropy(source)}"
        )

    def rate_gap(log_magnitude: float) -> float:
        point = rd_point(source, -np.exp(log_magnitude), reproduction_grid, distortion)
        return point.rate_bits - rate_bits

    low, high = np.log(1e-3), np.log(1e1)
    while rate_gap(low) > 0:
        low -= np.log(10.0)
    while rate_gap(high) < 0:
        high += np.log(10.0)
        if high > np.log(1e8):
            raise ValueError(f"No slope reaches rate {rate_bits} bits")
    log_magnitude = scipy.optimize.brentq(rate_gap, low, high, xtol=log_slope_tol)
    return rd_point(source, -np.exp(log_magnitude), reproduction_grid, distortion)
