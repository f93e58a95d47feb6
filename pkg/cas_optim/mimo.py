"""Gaussian MIMO branch: closed-form distortions, the convexified waveform
subproblem, the successive convex approximation loop and the reference
designs it is compared against.

Covariances are complex Hermitian. Rates are reported in bits; the barrier
problems are posed in nats.
"""
import dataclasses
import logging
import typing
import warnings

import numpy as np

from . import constants
from .convex import AffineMatrixMap
from .convex import LinearFunction
from .convex import LogDetFunction
from .convex import MatrixBarrier
from .convex import ScalarBarrier
from .convex import SumFunction
from .convex import TraceInverseFunction
from .convex import barrier_solve
from .convex import eigh_desc
from .convex import from_coordinates
from .convex import hermitian_basis
from .convex import hermitize
from .convex import is_positive_definite
from .convex import logdet
from .convex import reverse_water_fill
from .convex import to_coordinates
from .convex import water_fill
from .data_types import CasDistortion
from .data_types import CovarianceMatrix
from .data_types import ExhaustiveResult
from .data_types import GaussianRd
from .data_types import HeuristicResult
from .data_types import MimoScenario
from .data_types import P3Solution
from .data_types import ScaResult
from .data_types import ScaState
from .errors import DimensionError
from .errors import InfeasibleError
from .prob import LN2

CovarianceLike = typing.Union[np.ndarray, CovarianceMatrix]


def _matrix(r_x: CovarianceLike, scenario: MimoScenario) -> np.ndarray:
    matrix = hermitize(np.asarray(r_x, dtype=complex))
    if matrix.shape != (scenario.n_t, scenario.n_t):
        raise DimensionError(
            f"Covariance shape {matrix.shape} does not match {scenario.n_t} transmit antennas"
        )
    return matrix


@dataclasses.dataclass(frozen=True, eq=False)
class StateRange:
    """Positive-eigenvalue subspace of the state covariance."""

    basis: np.ndarray
    values: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.values.size)


def state_range(scenario: MimoScenario) -> StateRange:
    decomposition = eigh_desc(scenario.state_covariance)
    keep = decomposition.values > constants.EIGEN_TOL * max(
        1.0, float(decomposition.values[0])
    )
    if not np.any(keep):
        raise DimensionError("State covariance has no positive eigenvalue")
    return StateRange(
        basis=decomposition.vectors[:, keep], values=decomposition.values[keep]
    )


def _error_covariance_range(r_x: np.ndarray, scenario: MimoScenario) -> np.ndarray:
    subspace = state_range(scenario)
    root = np.sqrt(subspace.values)
    projected = subspace.basis.conj().T @ r_x @ subspace.basis
    # (R/sigma^2 + Sigma^-1)^-1 written without inverting Sigma
    precision = np.eye(subspace.rank) + (
        root[:, None] * projected * root[None, :]
    ) / scenario.sensing_noise_variance
    return hermitize(root[:, None] * np.linalg.inv(precision) * root[None, :])


def error_covariance(r_x: CovarianceLike, scenario: MimoScenario) -> np.ndarray:
    matrix = _matrix(r_x, scenario)
    subspace = state_range(scenario)
    error = _error_covariance_range(matrix, scenario)
    return hermitize(subspace.basis @ error @ subspace.basis.conj().T)


def sensing_distortion(r_x: CovarianceLike, scenario: MimoScenario) -> float:
    matrix = _matrix(r_x, scenario)
    error = _error_covariance_range(matrix, scenario)
    return float(scenario.sensing_antennas * np.trace(error).real)


def estimate_covariance(r_x: CovarianceLike, scenario: MimoScenario) -> CovarianceMatrix:
    return CovarianceMatrix(
        entries=scenario.state_covariance - error_covariance(r_x, scenario)
    )


def capacity(r_x: CovarianceLike, scenario: MimoScenario) -> float:
    matrix = _matrix(r_x, scenario)
    channel = scenario.channel
    gram = np.eye(scenario.m_c) + channel @ matrix @ channel.conj().T / (
        scenario.comm_noise_variance
    )
    return max(logdet(gram) / LN2, 0.0)


def sensing_mi(r_x: CovarianceLike, scenario: MimoScenario) -> float:
    """log2 det(Sigma_s R_x / sigma_s^2 + I)."""
    matrix = _matrix(r_x, scenario)
    subspace = state_range(scenario)
    root = np.sqrt(subspace.values)
    projected = subspace.basis.conj().T @ matrix @ subspace.basis
    gram = np.eye(subspace.rank) + (
        root[:, None] * projected * root[None, :]
    ) / scenario.sensing_noise_variance
    return max(logdet(gram) / LN2, 0.0)


def gaussian_rd(
    r_s_tilde: CovarianceLike, d_c_budget: float, sensing_antennas: int
) -> GaussianRd:
    if d_c_budget <= 0:
        raise ValueError(f"Distortion budget must be positive, got {d_c_budget}")
    decomposition = eigh_desc(np.asarray(r_s_tilde))
    variances = np.clip(decomposition.values, 0.0, None)
    filling = reverse_water_fill(variances, d_c_budget)
    distortions = filling.allocation
    positive = variances > 0
    rate = sensing_antennas * float(
        np.log2(variances[positive] / distortions[positive]).sum()
    )
    matrix = (decomposition.vectors * distortions) @ decomposition.vectors.conj().T
    return GaussianRd(
        rate_bits=max(rate, 0.0),
        distortion=float(distortions.sum()),
        distortion_matrix=CovarianceMatrix(entries=matrix),
        level=filling.level,
    )


def gaussian_dr(
    r_s_tilde: CovarianceLike, rate_bits: float, sensing_antennas: int
) -> GaussianRd:
    """Smallest tr(D) whose reverse water-filling rate does not exceed ``rate_bits``."""
    if rate_bits < 0:
        raise ValueError(f"Rate must be non-negative, got {rate_bits}")
    decomposition = eigh_desc(np.asarray(r_s_tilde))
    variances = np.clip(decomposition.values, 0.0, None)
    positive = variances > constants.EIGEN_TOL * max(1.0, float(variances.max(initial=0.0)))
    if not np.any(positive) or rate_bits == 0:
        distortions = variances
        level = float(variances.max(initial=0.0))
    else:
        active = variances[positive]
        logs = np.log(active)
        per_mode = rate_bits * LN2 / sensing_antennas
        level = float(active[-1])
        for k in range(1, active.size + 1):
            log_level = (logs[:k].sum() - per_mode) / k
            if log_level <= logs[k - 1] and (k == active.size or log_level >= logs[k]):
                level = float(np.exp(log_level))
                break
        distortions = np.minimum(level, variances)
    matrix = (decomposition.vectors * distortions) @ decomposition.vectors.conj().T
    return GaussianRd(
        rate_bits=float(rate_bits),
        distortion=float(distortions.sum()),
        distortion_matrix=CovarianceMatrix(entries=matrix),
        level=level,
    )


def cas_objective(r_x: CovarianceLike, scenario: MimoScenario) -> CasDistortion:
    matrix = _matrix(r_x, scenario)
    estimate = scenario.state_covariance - error_covariance(matrix, scenario)
    bits = capacity(matrix, scenario)
    comm = gaussian_dr(estimate, bits, scenario.sensing_antennas)
    return CasDistortion(
        sensing=sensing_distortion(matrix, scenario),
        communication=comm.distortion,
        capacity_bits=bits,
        distortion_matrix=np.asarray(comm.distortion_matrix),
        n_t=scenario.n_t,
        sensing_antennas=scenario.sensing_antennas,
    )


@dataclasses.dataclass(frozen=True, eq=False)
class Linearization:
    """First-order expansion of R_s_tilde and log det R_s_tilde around R_0.

    Matrices with the ``range`` suffix live in the positive-eigenvalue
    subspace of the state covariance.
    """

    expansion_point: np.ndarray
    subspace: StateRange
    error_range: np.ndarray
    sensing_noise_variance: float
    log_det_value: float
    gradient: np.ndarray

    def r_tilde_range(self, r_x: np.ndarray) -> np.ndarray:
        basis = self.subspace.basis
        delta = basis.conj().T @ (r_x - self.expansion_point) @ basis
        return hermitize(
            np.diag(self.subspace.values)
            - self.error_range
            + self.error_range @ delta @ self.error_range / self.sensing_noise_variance
        )

    def r_tilde(self, r_x: CovarianceLike) -> np.ndarray:
        basis = self.subspace.basis
        return hermitize(basis @ self.r_tilde_range(np.asarray(r_x)) @ basis.conj().T)

    def f(self, r_x: CovarianceLike) -> float:
        delta = np.asarray(r_x) - self.expansion_point
        return float(self.log_det_value + np.trace(self.gradient @ delta).real)


def _needs_perturbation(r_0: np.ndarray, scenario: MimoScenario) -> bool:
    subspace = state_range(scenario)
    estimate = np.diag(subspace.values) - _error_covariance_range(r_0, scenario)
    smallest = np.linalg.eigvalsh(hermitize(estimate)).min()
    if smallest <= constants.EIGEN_TOL * float(subspace.values.max()):
        return True
    return not is_positive_definite(r_0)


def sca_linearize(r_0: CovarianceLike, scenario: MimoScenario) -> Linearization:
    matrix = _matrix(r_0, scenario)
    if _needs_perturbation(matrix, scenario):
        epsilon = constants.SCA_SINGULAR_PERTURBATION * scenario.power_budget / scenario.n_t
        warnings.warn(
            f"Expansion point is singular, perturbing it by {epsilon:.3e} I",
            RuntimeWarning,
        )
        matrix = matrix + epsilon * np.eye(scenario.n_t)
    subspace = state_range(scenario)
    error = _error_covariance_range(matrix, scenario)
    estimate = hermitize(np.diag(subspace.values) - error)
    sigma2 = scenario.sensing_noise_variance
    basis = subspace.basis
    gradient = basis @ (error @ np.linalg.inv(estimate) @ error) @ basis.conj().T / sigma2
    return Linearization(
        expansion_point=matrix,
        subspace=subspace,
        error_range=error,
        sensing_noise_variance=sigma2,
        log_det_value=logdet(estimate),
        gradient=hermitize(gradient),
    )


def _lift(
    parts: list[np.ndarray | None], sizes: tuple[int, ...], shape: tuple[int, int]
) -> np.ndarray:
    """Stack coefficient blocks of several variables, zero for absent blocks."""
    blocks = []
    for part, size in zip(parts, sizes):
        if part is None:
            blocks.append(np.zeros((size,) + shape, dtype=complex))
        else:
            blocks.append(np.asarray(part, dtype=complex))
    return np.concatenate(blocks, axis=0)


def _image(basis: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    return np.einsum("ij,kjl,lm->kim", left, basis, right)


def solve_p3(
    r_0: CovarianceLike,
    scenario: MimoScenario,
    linearization: Linearization | None = None,
) -> P3Solution:
    """Convex subproblem of the SCA loop over the pair (R_x, D)."""
    logger = logging.getLogger(__name__)
    if linearization is None:
        linearization = sca_linearize(r_0, scenario)
    subspace = linearization.subspace
    n, r = scenario.n_t, subspace.rank
    m_s = scenario.sensing_antennas
    sigma2 = scenario.sensing_noise_variance
    basis_r = hermitian_basis(n)
    basis_d = hermitian_basis(r)
    sizes = (basis_r.shape[0], basis_d.shape[0])
    u = subspace.basis
    root = np.sqrt(subspace.values)
    error = linearization.error_range
    channel = scenario.channel

    covariance_map = AffineMatrixMap(
        constant=np.zeros((n, n), dtype=complex),
        coefficients=_lift([basis_r, None], sizes, (n, n)),
    )
    trace_coefficients = np.concatenate(
        [np.einsum("kii->k", basis_r).real, np.zeros(sizes[1])]
    )
    precision_map = AffineMatrixMap(
        constant=np.eye(r, dtype=complex),
        coefficients=_lift(
            [_image(basis_r, (root[:, None] * u.conj().T), (u * root[None, :])) / sigma2, None],
            sizes,
            (r, r),
        ),
    )
    d_trace = np.concatenate([np.zeros(sizes[0]), np.einsum("kii->k", basis_d).real])
    objective = SumFunction(
        (
            TraceInverseFunction(
                precision_map, weight=np.diag(subspace.values).astype(complex), scale=m_s
            ),
            LinearFunction(d_trace),
        )
    )
    r_tilde_constant = linearization.r_tilde_range(np.zeros((n, n), dtype=complex))
    gap_map = AffineMatrixMap(
        constant=r_tilde_constant,
        coefficients=_lift(
            [_image(basis_r, error @ u.conj().T, u @ error) / sigma2, -basis_d],
            sizes,
            (r, r),
        ),
    )
    capacity_map = AffineMatrixMap(
        constant=np.eye(scenario.m_c, dtype=complex),
        coefficients=_lift(
            [_image(basis_r, channel, channel.conj().T) / scenario.comm_noise_variance, None],
            sizes,
            (scenario.m_c, scenario.m_c),
        ),
    )
    f_coefficients = np.einsum("ij,kji->k", linearization.gradient, basis_r).real
    f_offset = linearization.log_det_value - float(
        np.trace(linearization.gradient @ linearization.expansion_point).real
    )
    distortion_map = AffineMatrixMap(
        constant=np.zeros((r, r), dtype=complex),
        coefficients=_lift([None, basis_d], sizes, (r, r)),
    )
    msst = SumFunction(
        (
            LogDetFunction(capacity_map),
            LinearFunction(
                np.concatenate([-m_s * f_coefficients, np.zeros(sizes[1])]),
                offset=-m_s * f_offset,
            ),
            LogDetFunction(distortion_map, scale=m_s),
        )
    )
    barriers = (
        MatrixBarrier(covariance_map),
        ScalarBarrier(
            LinearFunction(-trace_coefficients, offset=scenario.power_budget)
        ),
        MatrixBarrier(gap_map),
        ScalarBarrier(msst),
    )

    start_covariance = (1.0 - constants.SCA_START_SHRINK) * linearization.expansion_point
    start_estimate = linearization.r_tilde_range(start_covariance)
    if not is_positive_definite(start_estimate):
        raise InfeasibleError("Linearised estimate covariance is singular at the start point")
    slack = (
        logdet(capacity_map.constant + channel @ start_covariance @ channel.conj().T / scenario.comm_noise_variance)
        - m_s * linearization.f(start_covariance)
        + m_s * logdet(start_estimate)
    )
    if not slack > 0:
        raise InfeasibleError(
            f"No strictly feasible start: separation slack {slack:.3e} at the expansion point"
        )
    alpha = np.exp(-slack / (2 * m_s * r))
    start = np.concatenate(
        [
            to_coordinates(start_covariance, basis_r),
            to_coordinates(alpha * start_estimate, basis_d),
        ]
    )
    result = barrier_solve(objective, barriers, start)
    covariance = hermitize(from_coordinates(result.x[: sizes[0]], basis_r))
    distortion_range = hermitize(from_coordinates(result.x[sizes[0] :], basis_d))
    logger.debug(
        "Convex subproblem solved: objective=%.12g gap=%.3e stages=%s newton=%s",
        result.objective,
        result.gap,
        result.stages,
        result.newton_steps,
    )
    return P3Solution(
        covariance=CovarianceMatrix(entries=covariance),
        distortion_matrix=CovarianceMatrix(entries=u @ distortion_range @ u.conj().T),
        objective=result.objective,
        msst_slack=float(msst.value(result.x)),
        barrier=result,
    )


def _channel_is_zero(scenario: MimoScenario) -> bool:
    return not np.any(np.abs(scenario.channel) > 0)


def sca_iterate(
    scenario: MimoScenario,
    r_init: CovarianceLike | None = None,
    max_outer: int = constants.SCA_MAX_OUTER,
    rel_tol: float = constants.SCA_REL_TOL,
    slack: float = constants.SCA_MONOTONE_SLACK,
) -> ScaResult:
    logger = logging.getLogger(__name__)
    if _channel_is_zero(scenario):
        covariance = baseline_sensing_optimal(scenario)
        distortion = cas_objective(covariance, scenario)
        return ScaResult(
            covariance=covariance,
            distortion=distortion,
            state=ScaState(
                expansion_point=np.asarray(covariance),
                iteration=0,
                objective_history=(distortion.total,),
            ),
            converged=True,
        )
    if r_init is None:
        r_init = scenario.power_budget / scenario.n_t * np.eye(scenario.n_t)
    current = _matrix(r_init, scenario)
    current_objective = cas_objective(current, scenario).total
    state = ScaState(
        expansion_point=current, iteration=0, objective_history=(current_objective,)
    )
    converged = False
    for iteration in range(1, max_outer + 1):
        try:
            solution = solve_p3(current, scenario)
        except (InfeasibleError, np.linalg.LinAlgError) as exc:
            logger.warning("SCA subproblem failed at iteration %s: %s", iteration, exc)
            break
        candidate = np.asarray(solution.covariance)
        candidate_objective = cas_objective(candidate, scenario).total
        decrease = current_objective - candidate_objective
        scale = max(abs(current_objective), 1e-12)
        if decrease < -slack * scale:
            if -decrease <= rel_tol * scale:
                converged = True
            else:
                logger.warning(
                    "SCA objective increased from %.12g to %.12g, keeping the last iterate",
                    current_objective,
                    candidate_objective,
                )
            break
        current, current_objective = candidate, candidate_objective
        state = ScaState(
            expansion_point=current,
            iteration=iteration,
            objective_history=state.objective_history + (current_objective,),
        )
        logger.debug("SCA iteration %s objective=%.12g", iteration, current_objective)
        if decrease <= rel_tol * scale:
            converged = True
            break
    if not converged and state.iteration == max_outer:
        logger.warning(
            "SCA stopped after %s iterations without converging, objective %.12g",
            max_outer,
            current_objective,
        )
    return ScaResult(
        covariance=CovarianceMatrix(entries=current),
        distortion=cas_objective(current, scenario),
        state=state,
        converged=converged,
    )


def baseline_sensing_optimal(scenario: MimoScenario) -> CovarianceMatrix:
    """Minimum-MMSE design: water-filling over the eigenvalues of Sigma_s / sigma_s^2."""
    subspace = state_range(scenario)
    filling = water_fill(
        subspace.values / scenario.sensing_noise_variance, scenario.power_budget
    )
    return CovarianceMatrix(
        entries=(subspace.basis * filling.allocation) @ subspace.basis.conj().T
    )


def baseline_comm_optimal(scenario: MimoScenario) -> CovarianceMatrix:
    """Capacity-achieving design: water-filling over the eigenmodes of H^H H / sigma_c^2."""
    if _channel_is_zero(scenario):
        return CovarianceMatrix(
            entries=scenario.power_budget / scenario.n_t * np.eye(scenario.n_t)
        )
    decomposition = eigh_desc(
        scenario.channel.conj().T @ scenario.channel / scenario.comm_noise_variance
    )
    active = decomposition.values > constants.EIGEN_TOL * float(decomposition.values[0])
    filling = water_fill(decomposition.values[active], scenario.power_budget)
    vectors = decomposition.vectors[:, active]
    return CovarianceMatrix(entries=(vectors * filling.allocation) @ vectors.conj().T)


def _weighted_mi_design(scenario: MimoScenario, beta: float) -> CovarianceMatrix:
    n = scenario.n_t
    subspace = state_range(scenario)
    root = np.sqrt(subspace.values)
    u = subspace.basis
    basis = hermitian_basis(n)
    channel = scenario.channel
    comm_map = AffineMatrixMap(
        constant=np.eye(scenario.m_c, dtype=complex),
        coefficients=_image(basis, channel, channel.conj().T) / scenario.comm_noise_variance,
    )
    sensing_map = AffineMatrixMap(
        constant=np.eye(subspace.rank, dtype=complex),
        coefficients=_image(basis, root[:, None] * u.conj().T, u * root[None, :])
        / scenario.sensing_noise_variance,
    )
    objective = SumFunction(
        (
            LogDetFunction(comm_map, scale=-beta),
            LogDetFunction(sensing_map, scale=-(1.0 - beta)),
        )
    )
    barriers = (
        MatrixBarrier(AffineMatrixMap(np.zeros((n, n), dtype=complex), basis)),
        ScalarBarrier(
            LinearFunction(-np.einsum("kii->k", basis).real, offset=scenario.power_budget)
        ),
    )
    start = to_coordinates(
        (1.0 - constants.SCA_START_SHRINK) * scenario.power_budget / n * np.eye(n), basis
    )
    result = barrier_solve(objective, barriers, start)
    return CovarianceMatrix(entries=from_coordinates(result.x, basis))


def baseline_heuristic(
    scenario: MimoScenario, beta_grid: typing.Sequence[float] | None = None
) -> HeuristicResult:
    """Best design over beta of argmax beta I_c + (1 - beta) I_s, judged by CAS distortion."""
    logger = logging.getLogger(__name__)
    if beta_grid is None:
        beta_grid = np.linspace(0.0, 1.0, constants.HEURISTIC_BETA_COUNT)
    best = None
    objectives = []
    for beta in beta_grid:
        beta = float(beta)
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"Weight beta must lie in [0, 1], got {beta}")
        if beta == 0.0:
            covariance = baseline_sensing_optimal(scenario)
        elif beta == 1.0:
            covariance = baseline_comm_optimal(scenario)
        else:
            covariance = _weighted_mi_design(scenario, beta)
        distortion = cas_objective(covariance, scenario)
        objectives.append(distortion.total)
        logger.debug("Heuristic beta=%s distortion=%.12g", beta, distortion.total)
        if best is None or distortion.total < best.distortion.total:
            best = HeuristicResult(
                covariance=covariance, beta=beta, distortion=distortion, objectives=()
            )
    return dataclasses.replace(best, objectives=tuple(objectives))


def exhaustive_2d(
    scenario: MimoScenario, points: int = constants.EXHAUSTIVE_POINTS
) -> ExhaustiveResult:
    """Grid search over power splits (p, P_T - p) along the channel's right singular vectors.

    This is a restricted benchmark. Designs outside that basis are never
    visited, so the result only bounds the CAS optimum from above.
    """
    if scenario.n_t != 2:
        raise DimensionError(f"Exhaustive search needs 2 transmit antennas, got {scenario.n_t}")
    state = scenario.state_covariance
    if abs(state[0, 1]) > 1e-12 * max(1.0, np.abs(state).max()):
        raise DimensionError("Exhaustive search needs a diagonal state covariance")
    if _channel_is_zero(scenario):
        vectors = np.eye(2, dtype=complex)
    else:
        _, _, vh = np.linalg.svd(scenario.channel, full_matrices=True)
        vectors = vh.conj().T
    best = None
    for split in np.linspace(0.0, scenario.power_budget, points):
        powers = np.array([split, scenario.power_budget - split])
        covariance = (vectors * powers) @ vectors.conj().T
        distortion = cas_objective(covariance, scenario)
        if best is None or distortion.total < best.distortion.total:
            best = ExhaustiveResult(
                covariance=CovarianceMatrix(entries=covariance),
                distortion=distortion,
                split=float(split),
            )
    return best


def sca_multistart(
    scenario: MimoScenario,
    starts: typing.Sequence[CovarianceLike] | None = None,
    max_outer: int = constants.SCA_MAX_OUTER,
) -> ScaResult:
    """Run the SCA loop from the uniform start and from every reference design, keep the best."""
    logger = logging.getLogger(__name__)
    if starts is None:
        starts = [
            scenario.power_budget / scenario.n_t * np.eye(scenario.n_t),
            baseline_sensing_optimal(scenario),
            baseline_comm_optimal(scenario),
            baseline_heuristic(scenario).covariance,
        ]
    best = None
    for start in starts:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            result = sca_iterate(scenario, start, max_outer=max_outer)
        logger.debug("SCA run finished at %.12g", result.distortion.total)
        if best is None or result.distortion.total < best.distortion.total:
            best = result
    return best
