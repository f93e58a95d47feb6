import dataclasses

import numpy as np
import pytest
from pytest_mock import MockerFixture

from cas_optim import search
from cas_optim.data_types import Pmf
from cas_optim.data_types import ScalarScenario
from cas_optim.data_types import DistortionAtRate
from cas_optim.errors import InfeasibleError
from cas_optim.scalar_model import build_grids
from cas_optim.scalar_model import estimate_distribution
from cas_optim.search import dc_for_mu
from cas_optim.search import sweep

FIVE_POINT = ScalarScenario(x_points=5, x_half_span=2.0)


def point_mass(scenario: ScalarScenario, x: float) -> Pmf:
    grids = build_grids(scenario)
    mass = np.zeros(grids.x.count)
    mass[int(np.argmin(np.abs(grids.x.points - x)))] = 1.0
    return Pmf(mass=mass, grid=grids.x)


def test_dc_point_mass_source():
    assert dc_for_mu(point_mass(FIVE_POINT, 0.0), FIVE_POINT, 0.0) == 0.0
    assert dc_for_mu(point_mass(FIVE_POINT, 0.0), FIVE_POINT, 3.0) == 0.0


def test_dc_at_zero_rate():
    # the estimate of a single input x = 2 has variance 4 / 5
    assert dc_for_mu(point_mass(FIVE_POINT, 2.0), FIVE_POINT, 0.0) == pytest.approx(
        0.8, rel=1e-2
    )


def test_dc_decreases_with_rate():
    p_x = point_mass(FIVE_POINT, 2.0)
    values = [dc_for_mu(p_x, FIVE_POINT, rate) for rate in (0.0, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(values) < 0)


def test_dc_splits_rate_across_components():
    p_x = point_mass(FIVE_POINT, 2.0)
    single = FIVE_POINT.model_copy(update={"channel_dimensions": 1})
    assert dc_for_mu(p_x, FIVE_POINT, 2.0) == pytest.approx(dc_for_mu(p_x, single, 1.0))


def test_dc_negative_rate():
    with pytest.raises(ValueError):
        dc_for_mu(point_mass(FIVE_POINT, 2.0), FIVE_POINT, -1.0)


def test_single_penalty_sweep(coarse_scenario: ScalarScenario):
    result = sweep(coarse_scenario, [0.0])
    assert len(result.records) == 1
    assert result.best_index == 0
    record = result.best
    assert record.mu == 0.0
    assert record.total_distortion == pytest.approx(
        record.sensing_distortion + record.comm_distortion
    )
    assert record.msst_rate_bits <= record.mi_bits + 2e-9


def test_sweep_sorts_and_dedupes(coarse_scenario: ScalarScenario):
    result = sweep(coarse_scenario, [1.0, 0.0, 1.0])
    assert result.mus.tolist() == [0.0, 1.0]
    # more weight on sensing never raises the sensing distortion
    sensing = result.column("sensing_distortion")
    assert sensing[1] <= sensing[0] + 1e-6


@pytest.mark.parametrize("mu_set", [[], [-1.0, 2.0]])
def test_sweep_rejects_penalties(coarse_scenario: ScalarScenario, mu_set: list):
    with pytest.raises(ValueError):
        sweep(coarse_scenario, mu_set)


def test_sweep_excludes_non_converged(coarse_scenario: ScalarScenario, mocker: MockerFixture):
    real_solve = search.solve

    def solve(costs, comm, cfg):
        result = real_solve(costs, comm, cfg)
        if cfg.penalty == 1.0:
            return dataclasses.replace(result, converged=False)
        return result

    mocker.patch.object(search, "solve", side_effect=solve)
    result = sweep(coarse_scenario, [0.0, 1.0])
    assert len(result.records) == 2
    assert not result.records[1].converged
    assert result.best.mu == 0.0


def test_sweep_without_converged_records(coarse_scenario: ScalarScenario, mocker: MockerFixture):
    real_solve = search.solve
    mocker.patch.object(
        search,
        "solve",
        side_effect=lambda *args: dataclasses.replace(real_solve(*args), converged=False),
    )
    result = sweep(coarse_scenario, [0.0])
    assert result.best_index is None
    assert result.best is None


def test_sweep_flags_source_coding_violation(
    coarse_scenario: ScalarScenario, mocker: MockerFixture
):
    mocker.patch.object(search, "rate_at_distortion", return_value=1e6)
    result = sweep(coarse_scenario, [0.0, 1.0])
    assert len(result.records) == 2
    assert not any(record.msst_feasible for record in result.records)
    assert result.best is None
    assert result.failures == 2


def test_sweep_continues_after_failed_point(
    coarse_scenario: ScalarScenario, mocker: MockerFixture
):
    real_solve = search.solve

    def solve(costs, comm, cfg):
        if cfg.penalty == 1.0:
            raise InfeasibleError("budget cannot be met")
        return real_solve(costs, comm, cfg)

    mocker.patch.object(search, "solve", side_effect=solve)
    result = sweep(coarse_scenario, [0.0, 1.0, 2.0])
    assert result.mus.tolist() == [0.0, 2.0]
    assert result.failed_mus == (1.0,)
    assert result.failures == 1
    assert result.best is not None


def test_sweep_excludes_extrapolated(coarse_scenario: ScalarScenario, mocker: MockerFixture):
    mocker.patch.object(
        search,
        "distortion_at_rate",
        return_value=DistortionAtRate(distortion=0.1, extrapolated=True),
    )
    result = sweep(coarse_scenario, [0.0])
    assert result.records[0].extrapolated
    assert result.best is None
    assert result.failures == 1


def test_dc_matches_gaussian_bound(coarse_scenario: ScalarScenario):
    # each real component carries mi_bits / channel_dimensions bits
    record = sweep(coarse_scenario, [0.0]).best
    source = estimate_distribution(coarse_scenario, record.p_x)
    axis_rate = record.mi_bits / coarse_scenario.channel_dimensions
    bound = source.variance() * 2.0 ** (-2.0 * axis_rate)
    assert 0.85 * bound <= record.comm_distortion <= 1.05 * bound


def test_small_state_variance_needs_no_extrapolation(coarse_scenario: ScalarScenario):
    scenario = coarse_scenario.model_copy(update={"state_variance": 0.1})
    result = sweep(scenario, [0.0, 10.0, 100.0, 700.0])
    assert not any(record.extrapolated for record in result.records)
    assert np.all(result.column("msst_rate_bits") <= result.column("mi_bits") + 2e-9)


@pytest.mark.slow
def test_interior_optimum(reference_scenario: ScalarScenario):
    result = sweep(reference_scenario)
    totals = result.column("total_distortion")
    best = result.best
    assert 1.0 <= best.mu <= 5.0
    assert best.total_distortion <= min(totals[0], totals[-1]) - 1e-3
    rates = result.column("mi_bits")
    msst = result.column("msst_rate_bits")
    assert np.all(msst <= rates + 2e-9)


@pytest.mark.slow
def test_small_variance_optimum_is_sensing_dominant(reference_scenario: ScalarScenario):
    scenario = reference_scenario.model_copy(update={"state_variance": 0.1})
    result = sweep(scenario, [0.0, 10.0, 50.0, 100.0, 200.0, 400.0, 690.0])
    assert not any(record.extrapolated for record in result.records)
    assert result.best.mu >= 100.0
