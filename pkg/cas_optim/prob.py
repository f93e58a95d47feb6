import numpy as np
from scipy.special import xlogy

from .data_types import CondPmf
from .data_types import Grid
from .data_types import Pmf
from .errors import DegeneratePmf
from .errors import DimensionError

LN2 = np.log(2.0)


def normalize(raw, grid: Grid | None = None) -> Pmf:
    values = np.asarray(raw, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise DimensionError(f"Expected a non-empty vector, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise DegeneratePmf("Probability mass must be finite")
    if np.any(values < 0):
        raise DegeneratePmf("Probability mass must be non-negative")
    total = values.sum()
    if total <= 0:
        raise DegeneratePmf("Probability mass must have at least one positive entry")
    return Pmf(mass=values / total, grid=grid)


def uniform(grid: Grid) -> Pmf:
    return Pmf(mass=np.full(grid.count, 1.0 / grid.count), grid=grid)


def entropy(p: Pmf) -> float:
    value = -xlogy(p.mass, p.mass).sum() / LN2
    return float(min(max(value, 0.0), np.log2(len(p))))


def _check_law(p_in: Pmf, law: CondPmf):
    if len(p_in) != law.shape[0]:
        raise DimensionError(
            f"Input distribution has {len(p_in)} entries but law has {law.shape[0]} rows"
        )


def output_marginal(p_in: Pmf, law: CondPmf) -> Pmf:
    _check_law(p_in, law)
    return Pmf(mass=p_in.mass @ law.rows, grid=law.output_grid)


def divergences_nats(rows: np.ndarray, q_out: np.ndarray) -> np.ndarray:
    """Per-input KL divergence D(rows[i] || q_out) in nats, 0 log 0 taken as 0."""
    safe_q = np.where(q_out > 0, q_out, 1.0)
    return (xlogy(rows, rows) - xlogy(rows, safe_q[None, :])).sum(axis=1)


def mutual_information(p_in: Pmf, law: CondPmf) -> float:
    _check_law(p_in, law)
    q_out = p_in.mass @ law.rows
    value = p_in.mass @ divergences_nats(law.rows, q_out) / LN2
    return float(max(value, 0.0))


def bayes_posterior(prior: Pmf, law: CondPmf) -> CondPmf:
    """Posterior law from outputs back to inputs.

    Output symbols with zero marginal probability keep the prior as their row
    and are marked unreachable.
    """
    _check_law(prior, law)
    joint = prior.mass[:, None] * law.rows
    marginal = joint.sum(axis=0)
    reachable = marginal > 0
    safe_marginal = np.where(reachable, marginal, 1.0)
    posterior = np.where(
        reachable[None, :], joint / safe_marginal[None, :], prior.mass[:, None]
    ).T
    # absorb the rounding of the division so every row sums to one
    posterior = posterior / posterior.sum(axis=1, keepdims=True)
    return CondPmf(
        rows=posterior,
        input_grid=law.output_grid,
        output_grid=law.input_grid,
        reachable=reachable,
    )
