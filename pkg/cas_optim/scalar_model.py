import functools
import logging

import numpy as np
from scipy.stats import norm

from . import constants
from .data_types import CondPmf
from .data_types import EstimatorTable
from .data_types import Grid
from .data_types import Pmf
from .data_types import ScalarGrids
from .data_types import ScalarScenario
from .data_types import SensingChannel
from .data_types import SensingCostTable
from .errors import DimensionError
from .errors import TruncationError
from .prob import normalize


@functools.lru_cache(maxsize=32)
def build_grids(sc: ScalarScenario) -> ScalarGrids:
    x_half = (
        sc.x_half_span
        if sc.x_half_span is not None
        else constants.DEFAULT_X_SPAN_FACTOR * np.sqrt(sc.power_budget)
    )
    s_half = (
        sc.s_half_span
        if sc.s_half_span is not None
        else constants.DEFAULT_S_SPAN_FACTOR * np.sqrt(sc.state_variance)
    )
    z_half = (
        sc.z_half_span
        if sc.z_half_span is not None
        else x_half * s_half
        + constants.DEFAULT_NOISE_SPAN_FACTOR * np.sqrt(sc.sensing_noise_variance)
    )
    y_half = (
        sc.y_half_span
        if sc.y_half_span is not None
        else x_half + constants.DEFAULT_NOISE_SPAN_FACTOR * np.sqrt(sc.comm_noise_variance)
    )
    s_grid = Grid.linspace(-s_half, s_half, sc.s_points)
    return ScalarGrids(
        x=Grid.linspace(-x_half, x_half, sc.x_points),
        s=s_grid,
        z=Grid.linspace(-z_half, z_half, sc.z_points),
        y=Grid.linspace(-y_half, y_half, sc.y_points),
        s_tilde=s_grid,
        s_hat=s_grid,
    )


def discretize_gaussian(
    means: np.ndarray, std: float | np.ndarray, grid: Grid, tol: float
) -> tuple[np.ndarray, float]:
    """Integrate N(mean, std^2) over the bins of grid, one row per mean.

    Returns the renormalised rows and the largest mass that fell outside the
    outermost bin edges.
    """
    means = np.atleast_1d(np.asarray(means, dtype=float))
    std = np.broadcast_to(np.asarray(std, dtype=float), means.shape)
    edges = grid.edges()
    cdf = norm.cdf((edges[None, :] - means[:, None]) / std[:, None])
    rows = np.diff(cdf, axis=1)
    kept = rows.sum(axis=1)
    lost = float(1.0 - kept.min())
    if lost > tol:
        worst = int(np.argmin(kept))
        raise TruncationError(
            f"Grid [{grid.min}, {grid.max}] loses {lost:.3e} of the mass of N({means[worst]}, {std[worst] ** 2})",
            lost_mass=lost,
        )
    return rows / kept[:, None], max(lost, 0.0)


def state_prior(sc: ScalarScenario) -> Pmf:
    grids = build_grids(sc)
    rows, _ = discretize_gaussian(
        np.zeros(1), np.sqrt(sc.state_variance), grids.s, sc.truncation_tol
    )
    return normalize(rows[0], grid=grids.s)


def build_sensing_channel(sc: ScalarScenario) -> SensingChannel:
    logger = logging.getLogger(__name__)
    grids = build_grids(sc)
    means = np.outer(grids.x.points, grids.s.points).ravel()
    rows, lost = discretize_gaussian(
        means, np.sqrt(sc.sensing_noise_variance), grids.z, sc.truncation_tol
    )
    logger.debug(
        "Built sensing channel %sx%sx%s, worst truncation %.3e",
        grids.x.count,
        grids.s.count,
        grids.z.count,
        lost,
    )
    return SensingChannel(
        law=rows.reshape(grids.x.count, grids.s.count, grids.z.count),
        x_grid=grids.x,
        s_grid=grids.s,
        z_grid=grids.z,
        lost_mass=lost,
    )


def build_comm_channel(sc: ScalarScenario) -> CondPmf:
    grids = build_grids(sc)
    rows, _ = discretize_gaussian(
        grids.x.points, np.sqrt(sc.comm_noise_variance), grids.y, sc.truncation_tol
    )
    return CondPmf(rows=rows, input_grid=grids.x, output_grid=grids.y)


def _joint_state_observation(channel: SensingChannel, prior: Pmf) -> np.ndarray:
    if len(prior) != channel.s_grid.count:
        raise DimensionError(
            f"Prior has {len(prior)} entries but the S grid has {channel.s_grid.count} points"
        )
    # joint[i, j, k] = P_S(s_j) Q(z_k | x_i, s_j)
    return prior.mass[None, :, None] * channel.law


def optimal_estimator(
    sc: ScalarScenario, sensing_channel: SensingChannel, prior: Pmf | None = None
) -> EstimatorTable:
    """Posterior-mean estimator, the minimiser of the expected squared error."""
    if prior is None:
        prior = state_prior(sc)
    joint = _joint_state_observation(sensing_channel, prior)
    marginal = joint.sum(axis=1)
    reachable = marginal > 0
    weighted = np.einsum("ijk,j->ik", joint, sensing_channel.s_grid.points)
    values = np.where(
        reachable, weighted / np.where(reachable, marginal, 1.0), prior.mean()
    )
    return EstimatorTable(
        values=values,
        reachable=reachable,
        x_grid=sensing_channel.x_grid,
        z_grid=sensing_channel.z_grid,
    )


def sensing_cost(
    sc: ScalarScenario,
    sensing_channel: SensingChannel,
    estimator: EstimatorTable,
    prior: Pmf | None = None,
) -> SensingCostTable:
    if prior is None:
        prior = state_prior(sc)
    if estimator.values.shape != (
        sensing_channel.x_grid.count,
        sensing_channel.z_grid.count,
    ):
        raise DimensionError("Estimator table does not match the sensing channel")
    joint = _joint_state_observation(sensing_channel, prior)
    s = sensing_channel.s_grid.points
    squared_error = (s[None, :, None] - estimator.values[:, None, :]) ** 2
    e = np.einsum("ijk,ijk->i", joint, squared_error)
    x = sensing_channel.x_grid.points
    return SensingCostTable(e=e, b=x**2, x_grid=sensing_channel.x_grid)


def gaussian_sensing_cost(sc: ScalarScenario) -> SensingCostTable:
    """Closed form e(x) = nu^2 sigma^2 / (sigma^2 + x^2 nu^2) of the linear-Gaussian model."""
    grids = build_grids(sc)
    x = grids.x.points
    nu2 = sc.state_variance
    sigma2 = sc.sensing_noise_variance
    e = nu2 * sigma2 / (sigma2 + x**2 * nu2)
    return SensingCostTable(e=e, b=x**2, x_grid=grids.x)


def estimate_variance(sc: ScalarScenario, x: np.ndarray) -> np.ndarray:
    nu2 = sc.state_variance
    sigma2 = sc.sensing_noise_variance
    return x**2 * nu2**2 / (sigma2 + x**2 * nu2)


def _point_mass_rows(values: np.ndarray, grid: Grid) -> np.ndarray:
    edges = grid.edges()
    index = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, grid.count - 1)
    rows = np.zeros((values.size, grid.count))
    rows[np.arange(values.size), index] = 1.0
    return rows


def _gaussian_estimate_rows(sc: ScalarScenario, p_x: Pmf, gain: float) -> np.ndarray:
    grids = build_grids(sc)
    x = grids.x.points[p_x.support]
    variance = gain**2 * estimate_variance(sc, x)
    rows = np.zeros((x.size, grids.s_tilde.count))
    degenerate = variance <= 0
    if np.any(degenerate):
        rows[degenerate] = _point_mass_rows(np.zeros(degenerate.sum()), grids.s_tilde)
    if np.any(~degenerate):
        rows[~degenerate], _ = discretize_gaussian(
            np.zeros((~degenerate).sum()),
            np.sqrt(variance[~degenerate]),
            grids.s_tilde,
            sc.truncation_tol,
        )
    return rows


def _spread_onto_grid(values: np.ndarray, mass: np.ndarray, grid: Grid) -> np.ndarray:
    """Bin point estimates onto grid, spreading each one uniformly between the
    midpoints to its neighbouring estimates."""
    if values.size == 1:
        return mass[0] * _point_mass_rows(values, grid)[0]
    edges = grid.edges()
    order = np.argsort(values, kind="stable")
    values = values[order]
    mass = mass[order]
    mid = (values[1:] + values[:-1]) / 2
    low = np.concatenate([[values[0] - (mid[0] - values[0])], mid])
    high = np.concatenate([mid, [values[-1] + (values[-1] - mid[-1])]])
    width = high - low
    result = np.zeros(grid.count)
    spread = width > 1e-12 * max(1.0, grid.max - grid.min)
    if np.any(spread):
        overlap = np.clip(
            np.minimum(high[spread, None], edges[None, 1:])
            - np.maximum(low[spread, None], edges[None, :-1]),
            0.0,
            None,
        )
        result += (mass[spread, None] * overlap / width[spread, None]).sum(axis=0)
    if np.any(~spread):
        result += mass[~spread] @ _point_mass_rows(values[~spread], grid)
    return result


def _generic_estimate_mass(sc: ScalarScenario, p_x: Pmf, gain: float) -> np.ndarray:
    grids = build_grids(sc)
    channel = build_sensing_channel(sc)
    prior = state_prior(sc)
    estimator = optimal_estimator(sc, channel, prior)
    observation = _joint_state_observation(channel, prior).sum(axis=1)
    result = np.zeros(grids.s_tilde.count)
    for index in np.flatnonzero(p_x.support):
        # observations that cannot occur carry no mass and no estimate
        keep = estimator.reachable[index] & (observation[index] > 0)
        result += _spread_onto_grid(
            gain * estimator.values[index][keep],
            p_x.mass[index] * observation[index][keep],
            grids.s_tilde,
        )
    return result


def estimate_distribution(
    sc: ScalarScenario, p_x: Pmf, generic: bool = False, gain: float = 1.0
) -> Pmf:
    """Law of the encoder-side estimate S_tilde = gain * E[S | X, Z] under P_X."""
    grids = build_grids(sc)
    if len(p_x) != grids.x.count:
        raise DimensionError(
            f"Input distribution has {len(p_x)} entries but the X grid has {grids.x.count} points"
        )
    if generic:
        mass = _generic_estimate_mass(sc, p_x, gain)
    else:
        mass = p_x.mass[p_x.support] @ _gaussian_estimate_rows(sc, p_x, gain)
    return normalize(mass, grid=grids.s_tilde)
