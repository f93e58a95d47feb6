import logging
import typing

import joblib
import numpy as np

from . import constants
from .ba_capacity import solve
from .data_types import BaCapacityConfig
from .data_types import CondPmf
from .data_types import DistortionAtRate
from .data_types import Pmf
from .data_types import RdCurve
from .data_types import ScalarScenario
from .data_types import SensingCostTable
from .data_types import SweepRecord
from .data_types import SweepResult
from .errors import CasOptimError
from .rate_distortion import curve_for_rate
from .rate_distortion import distortion_at_rate
from .rate_distortion import rate_at_distortion
from .scalar_model import build_comm_channel
from .scalar_model import build_sensing_channel
from .scalar_model import estimate_distribution
from .scalar_model import gaussian_sensing_cost
from .scalar_model import optimal_estimator
from .scalar_model import sensing_cost
from .scalar_model import state_prior


def scenario_costs(scenario: ScalarScenario, generic: bool = False) -> SensingCostTable:
    if not generic:
        return gaussian_sensing_cost(scenario)
    channel = build_sensing_channel(scenario)
    prior = state_prior(scenario)
    estimator = optimal_estimator(scenario, channel, prior)
    return sensing_cost(scenario, channel, estimator, prior)


def ba_config(scenario: ScalarScenario, mu: float, **kwargs) -> BaCapacityConfig:
    return BaCapacityConfig(
        penalty=mu,
        budget=scenario.power_budget,
        channel_dimensions=scenario.channel_dimensions,
        **kwargs,
    )


def _comm_distortion(
    p_x: Pmf,
    scenario: ScalarScenario,
    axis_rate: float,
    generic: bool,
    slopes: typing.Sequence[float] | None,
) -> tuple[DistortionAtRate, RdCurve | None]:
    source = estimate_distribution(scenario, p_x, generic=generic)
    if np.count_nonzero(source.support) <= 1:
        # a point-mass source is reproduced exactly at any rate
        return DistortionAtRate(distortion=0.0, extrapolated=False), None
    curve = curve_for_rate(source, axis_rate, slopes)
    return distortion_at_rate(curve, axis_rate), curve


def dc_for_mu(
    p_x: Pmf,
    scenario: ScalarScenario,
    mi_bits: float,
    generic: bool = False,
    slopes: typing.Sequence[float] | None = None,
) -> float:
    """Communication distortion of the estimate when ``mi_bits`` are available.

    ``mi_bits`` covers all ``channel_dimensions`` real components of the
    channel, each component carries an independent copy of the estimate.
    """
    if mi_bits < 0:
        raise ValueError(f"Rate must be non-negative, got {mi_bits}")
    axis_rate = mi_bits / scenario.channel_dimensions
    lookup, _ = _comm_distortion(p_x, scenario, axis_rate, generic, slopes)
    return lookup.distortion


def _sweep_record(
    scenario: ScalarScenario,
    mu: float,
    costs: SensingCostTable,
    comm: CondPmf,
    generic: bool,
    slopes: typing.Sequence[float] | None,
) -> SweepRecord:
    logger = logging.getLogger(__name__)
    result = solve(costs, comm, ba_config(scenario, mu))
    axis_rate = result.mi_bits / scenario.channel_dimensions
    lookup, curve = _comm_distortion(result.p_x, scenario, axis_rate, generic, slopes)
    axis_msst_rate = 0.0 if curve is None else rate_at_distortion(curve, lookup.distortion)
    msst_feasible = axis_msst_rate <= axis_rate + constants.MSST_SLACK
    if not msst_feasible:
        logger.error(
            "R(D_c)=%.9g bits exceeds I=%.9g bits per component at mu=%s",
            axis_msst_rate,
            axis_rate,
            mu,
        )
    logger.info(
        "mu=%s Ds=%.6g I=%.6g bits Dc=%.6g",
        mu,
        result.sensing_distortion,
        result.mi_bits,
        lookup.distortion,
    )
    return SweepRecord(
        mu=float(mu),
        sensing_distortion=result.sensing_distortion,
        mi_bits=result.mi_bits,
        comm_distortion=lookup.distortion,
        total_distortion=result.sensing_distortion + lookup.distortion,
        p_x=result.p_x,
        converged=result.converged,
        extrapolated=lookup.extrapolated,
        msst_rate_bits=scenario.channel_dimensions * axis_msst_rate,
        iterations=result.iterations,
        msst_feasible=msst_feasible,
    )


def _guarded_record(
    scenario: ScalarScenario,
    mu: float,
    costs: SensingCostTable,
    comm: CondPmf,
    generic: bool,
    slopes: typing.Sequence[float] | None,
) -> SweepRecord | None:
    logger = logging.getLogger(__name__)
    try:
        return _sweep_record(scenario, mu, costs, comm, generic, slopes)
    except CasOptimError as exc:
        logger.error("Sweep point mu=%s failed: %s", mu, exc)
        return None


def _exclusion_reason(record: SweepRecord) -> str | None:
    if not record.converged:
        return "capacity solve did not converge"
    if record.extrapolated:
        return "the rate lies beyond the tabulated rate-distortion curve"
    if not record.msst_feasible:
        return "the estimate cannot be sent at the reported distortion"
    return None


def sweep(
    scenario: ScalarScenario,
    mu_set: typing.Iterable[float] = constants.DEFAULT_MU_GRID,
    generic: bool = False,
    slopes: typing.Sequence[float] | None = None,
    n_jobs: int = 1,
) -> SweepResult:
    logger = logging.getLogger(__name__)
    mus = sorted(set(float(mu) for mu in mu_set))
    if not mus:
        raise ValueError("At least one penalty factor is required")
    if any(mu < 0 for mu in mus):
        raise ValueError("Penalty factors must be non-negative")
    costs = scenario_costs(scenario, generic=generic)
    comm = build_comm_channel(scenario)
    outcomes = joblib.Parallel(n_jobs=n_jobs)(
        joblib.delayed(_guarded_record)(scenario, mu, costs, comm, generic, slopes)
        for mu in mus
    )
    failed_mus = tuple(mu for mu, record in zip(mus, outcomes) if record is None)
    records = tuple(
        sorted((record for record in outcomes if record is not None), key=lambda r: r.mu)
    )
    candidates = []
    for index, record in enumerate(records):
        reason = _exclusion_reason(record)
        if reason is not None:
            logger.warning("Excluding mu=%s from the optimum search, %s", record.mu, reason)
            continue
        candidates.append(index)
    best_index = None
    if candidates:
        best_index = min(candidates, key=lambda index: records[index].total_distortion)
        logger.info(
            "CAS optimum at mu=%s with D=%.6g",
            records[best_index].mu,
            records[best_index].total_distortion,
        )
    else:
        logger.warning("No usable record in the sweep, optimum is undefined")
    return SweepResult(records=records, best_index=best_index, failed_mus=failed_mus)
