"""Dense numerical kernels shared by the MIMO solvers.

Matrix variables are flattened into real coordinates over an orthonormal
Hermitian basis, so every barrier problem below works on a real vector and
every derivative is taken with respect to those coordinates.
"""
import dataclasses
import logging
import typing

import numpy as np
import scipy.linalg

from . import constants
from .data_types import BarrierResult
from .data_types import EigenDecomposition
from .data_types import FdCheckResult
from .data_types import WaterFilling
from .errors import DimensionError
from .errors import InfeasibleError


def hermitize(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix)
    return (matrix + matrix.conj().T) / 2


def eigh_desc(matrix: np.ndarray) -> EigenDecomposition:
    values, vectors = np.linalg.eigh(hermitize(matrix))
    return EigenDecomposition(values=values[::-1], vectors=vectors[:, ::-1])


def is_positive_definite(matrix: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(hermitize(matrix))
    except np.linalg.LinAlgError:
        return False
    return True


def logdet(matrix: np.ndarray) -> float:
    sign, value = np.linalg.slogdet(hermitize(matrix))
    if sign.real <= 0:
        return -np.inf
    return float(value)


def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis of n x n Hermitian matrices under <A, B> = Re tr(AB)."""
    basis = []
    for i in range(n):
        element = np.zeros((n, n), dtype=complex)
        element[i, i] = 1.0
        basis.append(element)
    for i in range(n):
        for j in range(i + 1, n):
            element = np.zeros((n, n), dtype=complex)
            element[i, j] = element[j, i] = 1.0 / np.sqrt(2.0)
            basis.append(element)
    for i in range(n):
        for j in range(i + 1, n):
            element = np.zeros((n, n), dtype=complex)
            element[i, j] = 1j / np.sqrt(2.0)
            element[j, i] = -1j / np.sqrt(2.0)
            basis.append(element)
    return np.array(basis)


def to_coordinates(matrix: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.einsum("kij,ji->k", basis, hermitize(matrix)).real


def from_coordinates(coordinates: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.tensordot(coordinates, basis, axes=1)


def water_fill(gains, budget: float) -> WaterFilling:
    """Maximise sum log(1 + g_i p_i) subject to sum p_i = budget, p_i >= 0."""
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 1 or gains.size == 0:
        raise DimensionError("Water-filling needs a non-empty vector of gains")
    if np.any(gains <= 0) or not np.all(np.isfinite(gains)):
        raise ValueError("Water-filling gains must be positive and finite")
    if budget <= 0:
        raise ValueError(f"Water-filling budget must be positive, got {budget}")
    floors = 1.0 / gains
    low = floors.min()
    high = low + budget
    for _ in range(200):
        level = (low + high) / 2
        if np.clip(level - floors, 0.0, None).sum() > budget:
            high = level
        else:
            low = level
        if high - low <= 1e-15 * max(1.0, high):
            break
    # exact level on the active set found by bisection
    active = floors < (low + high) / 2
    level = (budget + floors[active].sum()) / active.sum()
    powers = np.clip(level - floors, 0.0, None)
    return WaterFilling(allocation=powers, level=float(level))


def reverse_water_fill(variances, total_distortion: float) -> WaterFilling:
    """Distortions d_i = min(level, r_i) with sum d_i = min(total, sum r_i)."""
    variances = np.clip(np.asarray(variances, dtype=float), 0.0, None)
    if total_distortion <= 0:
        raise ValueError(f"Distortion budget must be positive, got {total_distortion}")
    if variances.sum() <= total_distortion:
        return WaterFilling(allocation=variances.copy(), level=float(variances.max()))
    low, high = 0.0, float(variances.max())
    for _ in range(200):
        level = (low + high) / 2
        if np.minimum(level, variances).sum() > total_distortion:
            high = level
        else:
            low = level
        if high - low <= 1e-15 * max(1.0, high):
            break
    level = (low + high) / 2
    clipped = variances < level
    level = (total_distortion - variances[clipped].sum()) / (~clipped).sum()
    return WaterFilling(allocation=np.minimum(level, variances), level=float(level))


@dataclasses.dataclass(frozen=True, eq=False)
class AffineMatrixMap:
    # M(x) = constant + sum_k x_k coefficients[k]
    constant: np.ndarray
    coefficients: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.constant + np.tensordot(x, self.coefficients, axes=1)

    @property
    def size(self) -> int:
        return int(self.coefficients.shape[0])


class SmoothFunction:
    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError()

    def derivatives(self, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        raise NotImplementedError()

    def __add__(self, other: "SmoothFunction") -> "SumFunction":
        return SumFunction((self, other))


@dataclasses.dataclass(frozen=True, eq=False)
class LinearFunction(SmoothFunction):
    coefficients: np.ndarray
    offset: float = 0.0

    def value(self, x):
        return float(self.coefficients @ x + self.offset)

    def derivatives(self, x):
        size = self.coefficients.size
        return self.value(x), np.array(self.coefficients, dtype=float), np.zeros((size, size))


@dataclasses.dataclass(frozen=True, eq=False)
class LogDetFunction(SmoothFunction):
    """scale * log det M(x), -inf outside the positive definite cone."""

    affine: AffineMatrixMap
    scale: float = 1.0

    def value(self, x):
        return self.scale * logdet(self.affine(x))

    def derivatives(self, x):
        matrix = hermitize(self.affine(x))
        inverse = np.linalg.inv(matrix)
        products = np.einsum("ij,kjl->kil", inverse, self.affine.coefficients)
        gradient = self.scale * np.einsum("kii->k", products).real
        hessian = -self.scale * np.einsum("kij,lji->kl", products, products).real
        return self.value(x), gradient, hermitize(hessian).real


@dataclasses.dataclass(frozen=True, eq=False)
class TraceInverseFunction(SmoothFunction):
    """scale * Re tr(W M(x)^-1), convex on the positive definite cone for W >= 0."""

    affine: AffineMatrixMap
    weight: np.ndarray | None = None
    scale: float = 1.0

    def _weight(self, size: int) -> np.ndarray:
        return np.eye(size) if self.weight is None else self.weight

    def value(self, x):
        matrix = hermitize(self.affine(x))
        if not is_positive_definite(matrix):
            return np.inf
        inverse = np.linalg.inv(matrix)
        return float(self.scale * np.trace(self._weight(matrix.shape[0]) @ inverse).real)

    def derivatives(self, x):
        matrix = hermitize(self.affine(x))
        inverse = np.linalg.inv(matrix)
        weighted = inverse @ self._weight(matrix.shape[0])
        products = np.einsum("ij,kjl->kil", inverse, self.affine.coefficients)
        weighted_products = np.einsum("ij,kjl->kil", weighted, products)
        gradient = -self.scale * np.einsum("kii->k", weighted_products).real
        half = np.einsum("kij,lji->kl", weighted_products, products).real
        hessian = self.scale * (half + half.T)
        value = float(self.scale * np.trace(weighted).real)
        return value, gradient, hessian


@dataclasses.dataclass(frozen=True, eq=False)
class SumFunction(SmoothFunction):
    terms: tuple[SmoothFunction, ...]

    def value(self, x):
        return float(sum(term.value(x) for term in self.terms))

    def derivatives(self, x):
        value, gradient, hessian = self.terms[0].derivatives(x)
        gradient = np.array(gradient, dtype=float)
        hessian = np.array(hessian, dtype=float)
        for term in self.terms[1:]:
            term_value, term_gradient, term_hessian = term.derivatives(x)
            value += term_value
            gradient += term_gradient
            hessian += term_hessian
        return value, gradient, hessian


class Barrier:
    degree: int

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError()

    def derivatives(self, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        raise NotImplementedError()


@dataclasses.dataclass(frozen=True, eq=False)
class MatrixBarrier(Barrier):
    """-log det M(x) for the constraint M(x) > 0."""

    affine: AffineMatrixMap

    @property
    def degree(self) -> int:
        return int(self.affine.constant.shape[0])

    def value(self, x):
        matrix = self.affine(x)
        if not is_positive_definite(matrix):
            return np.inf
        return -logdet(matrix)

    def derivatives(self, x):
        return LogDetFunction(self.affine, scale=-1.0).derivatives(x)


@dataclasses.dataclass(frozen=True, eq=False)
class ScalarBarrier(Barrier):
    """-log g(x) for the constraint g(x) > 0 with g concave."""

    function: SmoothFunction
    degree: int = 1

    def value(self, x):
        inner = self.function.value(x)
        if not np.isfinite(inner) or inner <= 0:
            return np.inf
        return -float(np.log(inner))

    def derivatives(self, x):
        inner, gradient, hessian = self.function.derivatives(x)
        value = -float(np.log(inner))
        return (
            value,
            -gradient / inner,
            np.outer(gradient, gradient) / inner**2 - hessian / inner,
        )


def _penalized_value(
    objective: SmoothFunction, barriers: typing.Sequence[Barrier], x: np.ndarray, t: float
) -> float:
    total = 0.0
    for barrier in barriers:
        value = barrier.value(x)
        if not np.isfinite(value):
            return np.inf
        total += value
    value = objective.value(x)
    if not np.isfinite(value):
        return np.inf
    return t * value + total


def _penalized_derivatives(
    objective: SmoothFunction, barriers: typing.Sequence[Barrier], x: np.ndarray, t: float
) -> tuple[np.ndarray, np.ndarray]:
    _, gradient, hessian = objective.derivatives(x)
    gradient = t * np.asarray(gradient, dtype=float)
    hessian = t * np.asarray(hessian, dtype=float)
    for barrier in barriers:
        _, barrier_gradient, barrier_hessian = barrier.derivatives(x)
        gradient = gradient + barrier_gradient
        hessian = hessian + barrier_hessian
    return gradient, (hessian + hessian.T) / 2


def _center(
    objective: SmoothFunction,
    barriers: typing.Sequence[Barrier],
    x: np.ndarray,
    t: float,
    newton_tol: float,
    max_newton: int,
) -> tuple[np.ndarray, int, bool, np.ndarray]:
    logger = logging.getLogger(__name__)
    gradient = np.zeros_like(x)
    for step in range(max_newton):
        gradient, hessian = _penalized_derivatives(objective, barriers, x, t)
        try:
            factor = scipy.linalg.cho_factor(hessian)
            direction = -scipy.linalg.cho_solve(factor, gradient)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            logger.debug("Hessian not positive definite at t=%s, using steepest descent", t)
            direction = -gradient
        decrement = float(-gradient @ direction)
        if not np.isfinite(decrement) or decrement < 0:
            direction = -gradient
            decrement = float(gradient @ gradient)
        if decrement / 2 <= newton_tol:
            return x, step, False, gradient
        current = _penalized_value(objective, barriers, x, t)
        step_size = 1.0
        while True:
            candidate = x + step_size * direction
            value = _penalized_value(objective, barriers, candidate, t)
            if value <= current - constants.ARMIJO_C * step_size * decrement:
                break
            step_size /= 2
            if step_size < constants.ARMIJO_MIN_STEP:
                # rounding swamps the Armijo test once the decrement is this small
                stalled = decrement / 2 > constants.BARRIER_STALL_DECREMENT
                return x, step, stalled, gradient
        x = candidate
    return x, max_newton, True, gradient


def barrier_solve(
    objective: SmoothFunction,
    barriers: typing.Sequence[Barrier],
    start: np.ndarray,
    t0: float = constants.BARRIER_T0,
    growth: float = constants.BARRIER_GROWTH,
    gap_tol: float = constants.BARRIER_GAP_TOL,
    newton_tol: float = constants.BARRIER_NEWTON_TOL,
    max_newton: int = constants.BARRIER_MAX_NEWTON,
    max_stages: int = constants.BARRIER_MAX_STAGES,
) -> BarrierResult:
    """Minimise objective over the interior of the barriers by the log-barrier path method."""
    logger = logging.getLogger(__name__)
    x = np.array(start, dtype=float)
    for barrier in barriers:
        if not np.isfinite(barrier.value(x)):
            raise InfeasibleError(f"Start point is not strictly feasible for {barrier!r}")
    if not np.isfinite(objective.value(x)):
        raise InfeasibleError("Objective is not finite at the start point")
    degree = sum(barrier.degree for barrier in barriers)
    t = t0
    history = []
    newton_steps = 0
    stalled = False
    stages = 0
    gradient = np.zeros_like(x)
    for stages in range(1, max_stages + 1):
        x, steps, stalled, gradient = _center(
            objective, barriers, x, t, newton_tol, max_newton
        )
        newton_steps += steps
        history.append(objective.value(x))
        logger.debug(
            "Barrier stage %s t=%.3e objective=%.12g newton_steps=%s",
            stages,
            t,
            history[-1],
            steps,
        )
        if stalled or degree / t < gap_tol:
            break
        t *= growth
    gap = degree / t
    if stalled:
        logger.warning("Barrier solver stalled at stage %s with gap %.3e", stages, gap)
    return BarrierResult(
        x=x,
        objective=float(objective.value(x)),
        gap=float(gap),
        kkt_residual=float(np.linalg.norm(gradient) / t),
        stages=stages,
        newton_steps=newton_steps,
        converged=not stalled and gap < gap_tol,
        stalled=stalled,
        objective_history=tuple(history),
    )


def fd_check(
    f: typing.Callable[[np.ndarray], float],
    grad: typing.Callable[[np.ndarray], np.ndarray],
    point,
    step: float = constants.FD_STEP,
    scale: float | None = None,
) -> FdCheckResult:
    """Compare an analytic gradient against central differences, coordinate by coordinate."""
    x = np.array(point, dtype=float)
    analytic = np.asarray(grad(x), dtype=float).reshape(x.shape)
    if scale is None:
        scale = max(1.0, float(np.abs(x).max()))
    h = step * scale
    numeric = np.empty_like(x)
    for index in np.ndindex(x.shape):
        forward = x.copy()
        backward = x.copy()
        forward[index] += h
        backward[index] -= h
        numeric[index] = (f(forward) - f(backward)) / (2 * h)
    floor = 1e-8 * max(1.0, float(np.abs(analytic).max()))
    errors = np.abs(numeric - analytic) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), floor
    )
    worst = np.unravel_index(int(np.argmax(errors)), x.shape)
    return FdCheckResult(
        max_relative_error=float(errors[worst]),
        worst_index=tuple(int(i) for i in worst),
    )
