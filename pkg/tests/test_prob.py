import numpy as np
import pytest
from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st

from cas_optim.data_types import CondPmf
from cas_optim.data_types import Grid
from cas_optim.data_types import Pmf
from cas_optim.errors import DegeneratePmf
from cas_optim.errors import DimensionError
from cas_optim.errors import GridError
from cas_optim.prob import bayes_posterior
from cas_optim.prob import entropy
from cas_optim.prob import mutual_information
from cas_optim.prob import normalize
from cas_optim.prob import output_marginal
from cas_optim.prob import uniform


def bsc(p: float) -> CondPmf:
    return CondPmf(rows=np.array([[1 - p, p], [p, 1 - p]]))


masses = st.lists(
    st.floats(min_value=0.0, max_value=10.0, allow_nan=False), min_size=2, max_size=8
).filter(lambda values: sum(values) > 1e-3)


@pytest.mark.parametrize(
    "raw, expected",
    [
        ([2, 2], [0.5, 0.5]),
        ([1, 0, 3], [0.25, 0.0, 0.75]),
        ([5], [1.0]),
    ],
)
def test_normalize(raw: list, expected: list):
    result = normalize(raw)
    np.testing.assert_allclose(result.mass, expected, atol=1e-15)
    assert abs(result.mass.sum() - 1.0) <= 1e-12


@pytest.mark.parametrize(
    "raw",
    [
        [0, 0],
        [1, -1],
        [np.nan, 1],
        [np.inf, 1],
    ],
)
def test_normalize_degenerate(raw: list):
    with pytest.raises(DegeneratePmf):
        normalize(raw)


@pytest.mark.parametrize(
    "points",
    [
        [0.0],
        [0.0, 0.0],
        [1.0, 0.0],
        [0.0, np.inf],
    ],
)
def test_grid_invariants(points: list):
    with pytest.raises(GridError):
        Grid(points=np.array(points))


def test_pmf_grid_mismatch():
    with pytest.raises(DimensionError):
        Pmf(mass=np.array([0.5, 0.5]), grid=Grid.linspace(0, 1, 3))


def test_cond_pmf_rows_must_sum_to_one():
    with pytest.raises(DimensionError):
        CondPmf(rows=np.array([[0.5, 0.4], [0.5, 0.5]]))


@pytest.mark.parametrize(
    "mass, expected",
    [
        ([0.25, 0.25, 0.25, 0.25], 2.0),
        ([0.0, 1.0, 0.0], 0.0),
        ([0.11, 0.89], 0.49991),
    ],
)
def test_entropy(mass: list, expected: float):
    assert entropy(Pmf(mass=np.array(mass))) == pytest.approx(expected, abs=1e-4)


@pytest.mark.parametrize("n", [2, 3, 7, 64])
def test_entropy_uniform(n: int):
    assert entropy(uniform(Grid.linspace(0, 1, n))) == pytest.approx(np.log2(n), abs=1e-12)


@pytest.mark.parametrize(
    "p_in, law, expected, tolerance",
    [
        (np.full(4, 0.25), CondPmf(rows=np.eye(4)), 2.0, 1e-12),
        (np.array([0.2, 0.3, 0.5]), CondPmf(rows=np.full((3, 2), 0.5)), 0.0, 1e-12),
        (np.array([0.5, 0.5]), bsc(0.11), 0.5, 1e-3),
    ],
)
def test_mutual_information(p_in: np.ndarray, law: CondPmf, expected: float, tolerance: float):
    assert mutual_information(Pmf(mass=p_in), law) == pytest.approx(expected, abs=tolerance)


def test_mutual_information_dimension_mismatch():
    with pytest.raises(DimensionError):
        mutual_information(Pmf(mass=np.array([0.5, 0.5])), CondPmf(rows=np.eye(3)))


@pytest.mark.parametrize(
    "prior, law, expected",
    [
        (np.full(3, 1 / 3), np.eye(3), np.eye(3)),
        (np.array([0.3, 0.7]), np.full((2, 2), 0.5), np.array([[0.3, 0.7], [0.3, 0.7]])),
        (np.array([0.5, 0.5]), bsc(0.1).rows, np.array([[0.9, 0.1], [0.1, 0.9]])),
    ],
)
def test_bayes_posterior(prior: np.ndarray, law: np.ndarray, expected: np.ndarray):
    posterior = bayes_posterior(Pmf(mass=prior), CondPmf(rows=law))
    np.testing.assert_allclose(posterior.rows, expected, atol=1e-12)
    assert posterior.reachable.all()


def test_bayes_posterior_unreachable_output():
    prior = Pmf(mass=np.array([0.4, 0.6]))
    law = CondPmf(rows=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
    posterior = bayes_posterior(prior, law)
    assert posterior.reachable.tolist() == [True, True, False]
    assert np.all(np.isfinite(posterior.rows))
    np.testing.assert_allclose(posterior.rows[2], prior.mass)


@settings(max_examples=50, deadline=None)
@given(prior=masses, seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_mutual_information_properties(prior: list, seed: int):
    generator = np.random.default_rng(seed)
    p_in = normalize(prior)
    rows = generator.random((len(prior), 5)) + 1e-3
    law = CondPmf(rows=rows / rows.sum(axis=1, keepdims=True))
    value = mutual_information(p_in, law)
    assert value >= 0
    assert value <= min(entropy(p_in), entropy(output_marginal(p_in, law))) + 1e-9

    permutation = generator.permutation(len(prior))
    permuted = mutual_information(
        Pmf(mass=p_in.mass[permutation]), CondPmf(rows=law.rows[permutation])
    )
    assert permuted == pytest.approx(value, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(prior=masses, seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_bayes_posterior_remarginalises(prior: list, seed: int):
    generator = np.random.default_rng(seed)
    p_in = normalize(prior)
    rows = generator.random((len(prior), 4)) + 1e-3
    law = CondPmf(rows=rows / rows.sum(axis=1, keepdims=True))
    posterior = bayes_posterior(p_in, law)
    q_out = output_marginal(p_in, law).mass
    np.testing.assert_allclose(posterior.rows.sum(axis=1), 1.0, atol=1e-10)
    # mixing the posterior rows by the output marginal gives the prior back
    np.testing.assert_allclose(q_out @ posterior.rows, p_in.mass, atol=1e-12)
