import logging

import numpy as np
import scipy.optimize
from scipy.special import logsumexp

from . import constants
from .data_types import BaCapacityConfig
from .data_types import BaCapacityResult
from .data_types import BaTraceRow
from .data_types import CondPmf
from .data_types import Pmf
from .data_types import SensingCostTable
from .errors import DimensionError
from .errors import InfeasibleError
from .prob import LN2
from .prob import divergences_nats
from .prob import mutual_information


def _tilt(base: np.ndarray, b: np.ndarray, lambda_: float, dimensions: int) -> np.ndarray:
    logits = base + lambda_ * b / dimensions
    log_p = logits - logsumexp(logits)
    p = np.maximum(np.exp(log_p), constants.PROB_FLOOR)
    return p / p.sum()


def _find_lambda(
    base: np.ndarray, b: np.ndarray, cfg: BaCapacityConfig
) -> tuple[float, np.ndarray]:
    """Pick lambda <= 0 so that the tilted law meets E[b] = B when the budget binds."""
    p = _tilt(base, b, 0.0, cfg.channel_dimensions)
    if p @ b <= cfg.budget:
        return 0.0, p
    lambda_max = cfg.lambda_max_init
    while _tilt(base, b, -lambda_max, cfg.channel_dimensions) @ b > cfg.budget:
        lambda_max *= cfg.lambda_growth
        if lambda_max > cfg.lambda_max_limit:
            raise InfeasibleError(
                f"No multiplier up to {cfg.lambda_max_limit} meets power budget {cfg.budget}"
            )

    def excess(lambda_: float) -> float:
        return _tilt(base, b, lambda_, cfg.channel_dimensions) @ b - cfg.budget

    lambda_ = scipy.optimize.brentq(excess, -lambda_max, 0.0, xtol=1e-14, rtol=1e-14)
    p = _tilt(base, b, lambda_, cfg.channel_dimensions)
    return float(lambda_), p


def solve(
    costs: SensingCostTable, comm: CondPmf, cfg: BaCapacityConfig
) -> BaCapacityResult:
    """Maximise I(X;Y) - mu E[e(X)] over P_X subject to E[b(X)] <= B.

    I counts channel_dimensions identical real axes, so the input law of one
    axis is optimised against channel_dimensions times its mutual information.
    The penalty is applied in bits, the internal arithmetic is in nats.
    """
    logger = logging.getLogger(__name__)
    n = costs.x_grid.count
    if comm.shape[0] != n:
        raise DimensionError(
            f"Channel has {comm.shape[0]} inputs but the cost table has {n}"
        )
    if costs.b.min() > cfg.budget:
        raise InfeasibleError(
            f"Cheapest input costs {costs.b.min()} which exceeds budget {cfg.budget}"
        )
    dimensions = cfg.channel_dimensions
    rows = comm.rows
    penalty = cfg.penalty * LN2 * costs.e
    p = np.full(n, 1.0 / n)
    lambda_ = 0.0
    history = []
    trace = []
    previous = None
    converged = False
    iteration = 0
    for iteration in range(1, cfg.max_iters + 1):
        q_out = p @ rows
        divergence = divergences_nats(rows, q_out)
        mi_nats = dimensions * float(p @ divergence)
        objective = mi_nats - float(p @ penalty)
        power = float(p @ costs.b)
        if power <= cfg.budget + constants.BUDGET_TOL:
            # uniform start may exceed the budget, monotone from the first feasible law
            history.append(objective / LN2)
        if cfg.record_trace:
            trace.append(
                BaTraceRow(
                    iteration=iteration,
                    objective=objective / LN2,
                    mi_bits=mi_nats / LN2,
                    sensing_distortion=float(p @ costs.e),
                    power=power,
                    lambda_=lambda_,
                )
            )
        if previous is not None and abs(objective - previous) <= cfg.rel_tol * max(
            abs(objective), 1e-12
        ):
            converged = True
            break
        previous = objective
        # sum_y Q(y|x) ln Q(x|y) = ln P(x) + D(Q(.|x) || q)
        base = np.log(p) + divergence - penalty / dimensions
        lambda_, p = _find_lambda(base, costs.b, cfg)
        logger.debug(
            "BA iteration %s objective=%.12g lambda=%.6g", iteration, objective, lambda_
        )
    if not converged:
        logger.warning(
            "BA capacity did not converge within %s iterations (mu=%s)",
            cfg.max_iters,
            cfg.penalty,
        )
    p_x = Pmf(mass=p, grid=costs.x_grid)
    return BaCapacityResult(
        p_x=p_x,
        sensing_distortion=float(p @ costs.e),
        mi_bits=dimensions * mutual_information(p_x, comm),
        lambda_star=lambda_,
        iterations=iteration,
        converged=converged,
        power=float(p @ costs.b),
        objective_history=tuple(history),
        trace=tuple(trace),
    )
