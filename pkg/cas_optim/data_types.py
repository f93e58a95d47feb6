import dataclasses
import enum
import typing

import numpy as np
import pydantic
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import NonNegativeFloat
from pydantic import PositiveFloat
from pydantic import PositiveInt

from . import constants
from .errors import DimensionError
from .errors import GridError


class CasBaseModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _frozen_array(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclasses.dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray

    def __post_init__(self):
        points = _frozen_array(self.points)
        if points.ndim != 1:
            raise GridError(f"Grid must be one dimensional, got shape {points.shape}")
        if points.size < 2:
            raise GridError(f"Grid needs at least 2 points, got {points.size}")
        if not np.all(np.isfinite(points)):
            raise GridError("Grid contains non-finite values")
        if np.any(np.diff(points) <= 0):
            raise GridError("Grid points must be strictly increasing")
        object.__setattr__(self, "points", points)

    @classmethod
    def linspace(cls, start: float, stop: float, count: int) -> "Grid":
        return cls(points=np.linspace(start, stop, count))

    @property
    def min(self) -> float:
        return float(self.points[0])

    @property
    def max(self) -> float:
        return float(self.points[-1])

    @property
    def count(self) -> int:
        return int(self.points.size)

    def __len__(self) -> int:
        return self.count

    def edges(self) -> np.ndarray:
        """Bin edges: midpoints between neighbours, outer edges half a step beyond the ends."""
        points = self.points
        mid = (points[1:] + points[:-1]) / 2
        first = points[0] - (points[1] - points[0]) / 2
        last = points[-1] + (points[-1] - points[-2]) / 2
        return np.concatenate([[first], mid, [last]])


@dataclasses.dataclass(frozen=True, eq=False)
class Pmf:
    mass: np.ndarray
    grid: Grid | None = None

    def __post_init__(self):
        mass = _frozen_array(self.mass)
        if mass.ndim != 1:
            raise DimensionError(f"Pmf must be one dimensional, got shape {mass.shape}")
        if self.grid is not None and self.grid.count != mass.size:
            raise DimensionError(
                f"Pmf length {mass.size} does not match grid length {self.grid.count}"
            )
        object.__setattr__(self, "mass", mass)

    def __len__(self) -> int:
        return int(self.mass.size)

    @property
    def support(self) -> np.ndarray:
        return self.mass > 0

    def mean(self) -> float:
        if self.grid is None:
            raise DimensionError("Pmf without grid has no mean")
        return float(self.mass @ self.grid.points)

    def variance(self) -> float:
        mean = self.mean()
        return float(self.mass @ (self.grid.points - mean) ** 2)


@dataclasses.dataclass(frozen=True, eq=False)
class CondPmf:
    # rows[i, j] = probability of output j given input i
    rows: np.ndarray
    input_grid: Grid | None = None
    output_grid: Grid | None = None
    # inputs never observed under the prior the law was derived from
    reachable: np.ndarray | None = None

    def __post_init__(self):
        rows = _frozen_array(self.rows)
        if rows.ndim != 2:
            raise DimensionError(f"CondPmf rows must be a matrix, got shape {rows.shape}")
        if self.input_grid is not None and self.input_grid.count != rows.shape[0]:
            raise DimensionError(
                f"CondPmf has {rows.shape[0]} rows but input grid has {self.input_grid.count} points"
            )
        if self.output_grid is not None and self.output_grid.count != rows.shape[1]:
            raise DimensionError(
                f"CondPmf has {rows.shape[1]} columns but output grid has {self.output_grid.count} points"
            )
        if np.any(rows < 0) or not np.all(np.isfinite(rows)):
            raise DimensionError("CondPmf rows must be finite and non-negative")
        if np.any(np.abs(rows.sum(axis=1) - 1.0) > constants.ROW_SUM_TOL):
            raise DimensionError("CondPmf rows must sum to one")
        object.__setattr__(self, "rows", rows)
        if self.reachable is not None:
            object.__setattr__(
                self, "reachable", _frozen_array(self.reachable, dtype=bool)
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape


@dataclasses.dataclass(frozen=True, eq=False)
class ScalarGrids:
    x: Grid
    s: Grid
    z: Grid
    y: Grid
    s_tilde: Grid
    s_hat: Grid


@dataclasses.dataclass(frozen=True, eq=False)
class SensingChannel:
    # law[i, j, k] = Q(z_k | x_i, s_j)
    law: np.ndarray
    x_grid: Grid
    s_grid: Grid
    z_grid: Grid
    lost_mass: float = 0.0

    def __post_init__(self):
        law = _frozen_array(self.law)
        expected = (self.x_grid.count, self.s_grid.count, self.z_grid.count)
        if law.shape != expected:
            raise DimensionError(
                f"Sensing law shape {law.shape} does not match grids {expected}"
            )
        object.__setattr__(self, "law", law)

    def row(self, x_index: int, s_index: int) -> np.ndarray:
        return self.law[x_index, s_index]


@dataclasses.dataclass(frozen=True, eq=False)
class EstimatorTable:
    # values[i, k] = optimal estimate of S given x_i and z_k
    values: np.ndarray
    reachable: np.ndarray
    x_grid: Grid
    z_grid: Grid


@dataclasses.dataclass(frozen=True, eq=False)
class SensingCostTable:
    e: np.ndarray
    b: np.ndarray
    x_grid: Grid

    def __post_init__(self):
        e = _frozen_array(self.e)
        b = _frozen_array(self.b)
        if e.shape != (self.x_grid.count,) or b.shape != (self.x_grid.count,):
            raise DimensionError("Cost tables must align with the X grid")
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "b", b)


class ScalarScenario(CasBaseModel):
    state_variance: PositiveFloat = 1.0
    sensing_noise_variance: PositiveFloat = 1.0
    comm_noise_variance: PositiveFloat = 1.0
    power_budget: PositiveFloat = constants.DEFAULT_POWER_BUDGET
    channel_dimensions: PositiveInt = constants.DEFAULT_CHANNEL_DIMENSIONS
    x_points: int = pydantic.Field(constants.DEFAULT_X_POINTS, ge=2)
    x_half_span: PositiveFloat | None = None
    s_points: int = pydantic.Field(constants.DEFAULT_S_POINTS, ge=2)
    s_half_span: PositiveFloat | None = None
    z_points: int = pydantic.Field(constants.DEFAULT_Z_POINTS, ge=2)
    z_half_span: PositiveFloat | None = None
    y_points: int = pydantic.Field(constants.DEFAULT_Y_POINTS, ge=2)
    y_half_span: PositiveFloat | None = None
    truncation_tol: PositiveFloat = constants.TRUNCATION_TOL

    @classmethod
    def from_snr(cls, snr_s_db: float, snr_c_db: float, **kwargs) -> "ScalarScenario":
        return cls(
            sensing_noise_variance=db_to_noise_variance(snr_s_db),
            comm_noise_variance=db_to_noise_variance(snr_c_db),
            **kwargs,
        )


def db_to_noise_variance(snr_db: float) -> float:
    # SNR := 10 log10(1 / sigma^2)
    return float(10.0 ** (-snr_db / 10.0))


class BaCapacityConfig(CasBaseModel):
    penalty: NonNegativeFloat = 0.0
    budget: PositiveFloat = constants.DEFAULT_POWER_BUDGET
    channel_dimensions: PositiveInt = 1
    max_iters: PositiveInt = constants.BA_MAX_ITERS
    rel_tol: PositiveFloat = constants.BA_REL_TOL
    lambda_tol: PositiveFloat = constants.BA_LAMBDA_TOL
    lambda_max_init: PositiveFloat = constants.BA_LAMBDA_MAX_INIT
    lambda_growth: float = pydantic.Field(constants.BA_LAMBDA_GROWTH, gt=1.0)
    lambda_max_limit: PositiveFloat = constants.BA_LAMBDA_MAX_LIMIT
    record_trace: bool = False


@dataclasses.dataclass(frozen=True)
class BaTraceRow:
    iteration: int
    objective: float
    mi_bits: float
    sensing_distortion: float
    power: float
    lambda_: float


@dataclasses.dataclass(frozen=True, eq=False)
class BaCapacityResult:
    p_x: Pmf
    sensing_distortion: float
    mi_bits: float
    lambda_star: float
    iterations: int
    converged: bool
    power: float
    objective_history: tuple[float, ...] = ()
    trace: tuple[BaTraceRow, ...] = ()


@dataclasses.dataclass(frozen=True, eq=False)
class RdPoint:
    slope: float
    distortion: float
    rate_bits: float
    iterations: int
    converged: bool
    test_channel: CondPmf | None = None
    lagrangian_history: tuple[float, ...] = ()


@dataclasses.dataclass(frozen=True, eq=False)
class RdCurve:
    # distortion ascending, rate strictly descending
    distortions: np.ndarray
    rates: np.ndarray
    slopes: np.ndarray
    zero_rate_distortion: float
    source_entropy_bits: float

    def __post_init__(self):
        for name in ("distortions", "rates", "slopes"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        if not (self.distortions.shape == self.rates.shape == self.slopes.shape):
            raise DimensionError("RdCurve columns must have equal length")

    def __len__(self) -> int:
        return int(self.distortions.size)

    @property
    def max_rate(self) -> float:
        return float(self.rates[0])


@dataclasses.dataclass(frozen=True)
class DistortionAtRate:
    distortion: float
    extrapolated: bool


@dataclasses.dataclass(frozen=True, eq=False)
class SweepRecord:
    mu: float
    sensing_distortion: float
    mi_bits: float
    comm_distortion: float
    total_distortion: float
    p_x: Pmf
    converged: bool
    extrapolated: bool = False
    msst_rate_bits: float = 0.0
    iterations: int = 0
    msst_feasible: bool = True

    @property
    def usable(self) -> bool:
        return self.converged and not self.extrapolated and self.msst_feasible


@dataclasses.dataclass(frozen=True, eq=False)
class SweepResult:
    records: tuple[SweepRecord, ...]
    best_index: int | None
    # penalties whose solve raised, no record exists for them
    failed_mus: tuple[float, ...] = ()

    @property
    def failures(self) -> int:
        return len(self.failed_mus) + sum(not record.usable for record in self.records)

    @property
    def best(self) -> SweepRecord | None:
        if self.best_index is None:
            return None
        return self.records[self.best_index]

    @property
    def mus(self) -> np.ndarray:
        return np.array([record.mu for record in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(record, name) for record in self.records])


@dataclasses.dataclass(frozen=True, eq=False)
class EigenDecomposition:
    # descending eigenvalues, columns of vectors are the eigenvectors
    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


@dataclasses.dataclass(frozen=True, eq=False)
class WaterFilling:
    allocation: np.ndarray
    level: float


@dataclasses.dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionError(f"Covariance must be square, got shape {entries.shape}")
        entries = (entries + entries.conj().T) / 2
        values, vectors = np.linalg.eigh(entries)
        if values.size and values.min() < -1e-9 * max(1.0, abs(values).max()):
            raise DimensionError(
                f"Covariance is not positive semi-definite, min eigenvalue {values.min()}"
            )
        if values.size and values.min() < 0:
            entries = (vectors * np.clip(values, 0.0, None)) @ vectors.conj().T
            entries = (entries + entries.conj().T) / 2
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    @property
    def dimension(self) -> int:
        return int(self.entries.shape[0])

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)


@dataclasses.dataclass(frozen=True, eq=False)
class MimoScenario:
    channel: np.ndarray
    state_covariance: np.ndarray
    sensing_noise_variance: float
    comm_noise_variance: float
    power_budget: float
    sensing_antennas: int

    def __post_init__(self):
        channel = _frozen_array(self.channel, dtype=complex)
        state = np.array(self.state_covariance, dtype=complex)
        if channel.ndim != 2:
            raise DimensionError(f"Channel must be a matrix, got shape {channel.shape}")
        if state.shape != (channel.shape[1], channel.shape[1]):
            raise DimensionError(
                f"State covariance shape {state.shape} does not match {channel.shape[1]} transmit antennas"
            )
        if np.abs(state - state.conj().T).max() > 1e-10 * max(1.0, np.abs(state).max()):
            raise DimensionError("State covariance must be Hermitian")
        if np.linalg.eigvalsh(state).min() < -1e-9:
            raise DimensionError("State covariance must be positive semi-definite")
        if self.sensing_noise_variance <= 0 or self.comm_noise_variance <= 0:
            raise DimensionError("Noise variances must be positive")
        if self.power_budget <= 0:
            raise DimensionError("Power budget must be positive")
        if self.sensing_antennas < 1:
            raise DimensionError("At least one sensing antenna is required")
        state = (state + state.conj().T) / 2
        state.setflags(write=False)
        object.__setattr__(self, "channel", channel)
        object.__setattr__(self, "state_covariance", state)

    @property
    def n_t(self) -> int:
        return int(self.channel.shape[1])

    @property
    def m_c(self) -> int:
        return int(self.channel.shape[0])

    def replace(self, **changes) -> "MimoScenario":
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True, eq=False)
class CasDistortion:
    sensing: float
    communication: float
    capacity_bits: float
    distortion_matrix: np.ndarray
    n_t: int
    sensing_antennas: int

    @property
    def total(self) -> float:
        return self.sensing + self.communication

    @property
    def average(self) -> float:
        return self.total / (self.sensing_antennas * self.n_t)


@dataclasses.dataclass(frozen=True, eq=False)
class GaussianRd:
    rate_bits: float
    distortion: float
    distortion_matrix: CovarianceMatrix
    level: float


@dataclasses.dataclass(frozen=True, eq=False)
class BarrierResult:
    x: np.ndarray
    objective: float
    gap: float
    kkt_residual: float
    stages: int
    newton_steps: int
    converged: bool
    stalled: bool
    objective_history: tuple[float, ...] = ()


@dataclasses.dataclass(frozen=True)
class FdCheckResult:
    max_relative_error: float
    worst_index: tuple[int, ...]


@dataclasses.dataclass(frozen=True, eq=False)
class P3Solution:
    covariance: CovarianceMatrix
    distortion_matrix: CovarianceMatrix
    objective: float
    msst_slack: float
    barrier: BarrierResult


@dataclasses.dataclass(frozen=True, eq=False)
class ScaState:
    expansion_point: np.ndarray
    iteration: int
    objective_history: tuple[float, ...]


@dataclasses.dataclass(frozen=True, eq=False)
class ScaResult:
    covariance: CovarianceMatrix
    distortion: CasDistortion
    state: ScaState
    converged: bool

    @property
    def trajectory(self) -> tuple[float, ...]:
        return self.state.objective_history

    @property
    def iterations(self) -> int:
        return self.state.iteration


@dataclasses.dataclass(frozen=True, eq=False)
class HeuristicResult:
    covariance: CovarianceMatrix
    beta: float
    distortion: CasDistortion
    objectives: tuple[float, ...]


@dataclasses.dataclass(frozen=True, eq=False)
class ExhaustiveResult:
    covariance: CovarianceMatrix
    distortion: CasDistortion
    split: float


@dataclasses.dataclass(frozen=True)
class SeparabilityReport:
    estimator: str
    samples: int
    total_distortion: float
    sensing_distortion: float
    comm_distortion: float
    relative_violation: float


class ExperimentKind(str, enum.Enum):
    scalar_sweep = "scalar-sweep"
    ba_capacity = "ba-capacity"
    rd_curve = "rd-curve"
    variance_sweep = "variance-sweep"
    separability = "separability"
    mimo_sca = "mimo-sca"
    mimo_baselines = "mimo-baselines"
    exhaustive_2d = "exhaustive-2d"


class Method(str, enum.Enum):
    proposed = "proposed"
    proposed_multistart = "proposed-multistart"
    sensing_optimal = "sensing-optimal"
    comm_optimal = "comm-optimal"
    heuristic = "heuristic"
    exhaustive = "exhaustive"


class ChannelModel(str, enum.Enum):
    rayleigh = "rayleigh"
    identity = "identity"
    zero = "zero"


class SweepAxis(str, enum.Enum):
    snr_s_db = "snr_s_db"
    variance_scale = "variance_scale"
    sensing_antennas = "sensing_antennas"
    comm_antennas = "comm_antennas"


class MimoScenarioConfig(CasBaseModel):
    transmit_antennas: PositiveInt = 2
    sensing_antennas: PositiveInt = 2
    comm_antennas: PositiveInt = 2
    power_budget: PositiveFloat = constants.DEFAULT_MIMO_POWER_BUDGET
    snr_s_db: float = 0.0
    snr_c_db: float = 0.0
    state_diag: list[NonNegativeFloat] | None = None
    state_correlation: float = pydantic.Field(
        constants.DEFAULT_STATE_CORRELATION, ge=0.0, lt=1.0
    )
    variance_scale: PositiveFloat = 1.0
    channel: ChannelModel = ChannelModel.rayleigh

    @pydantic.model_validator(mode="after")
    def check_state_diag(self) -> "MimoScenarioConfig":
        if self.state_diag is not None:
            if len(self.state_diag) != self.transmit_antennas:
                raise ValueError(
                    f"state_diag has {len(self.state_diag)} entries but there are {self.transmit_antennas} transmit antennas"
                )
            if not any(value > 0 for value in self.state_diag):
                raise ValueError("state_diag needs at least one positive entry")
        return self


class ExperimentBase(CasBaseModel):
    schema_version: typing.Literal[1] = constants.SCHEMA_VERSION
    rng_seed: int | None = None
    trials: PositiveInt = 1
    output: str = constants.DEFAULT_OUTPUT_TEMPLATE

    @property
    def randomized(self) -> bool:
        return False

    @pydantic.model_validator(mode="after")
    def check_seed(self):
        if self.randomized and self.rng_seed is None:
            raise ValueError(f"rng_seed is required for {self.kind.value} experiments")
        return self


class ScalarSweepExperiment(ExperimentBase):
    kind: typing.Literal[ExperimentKind.scalar_sweep] = pydantic.Field(
        ExperimentKind.scalar_sweep
    )
    scenario: ScalarScenario = ScalarScenario()
    mu: list[NonNegativeFloat] = pydantic.Field(
        default_factory=lambda: list(constants.DEFAULT_MU_GRID), min_length=1
    )
    slopes: list[typing.Annotated[float, pydantic.Field(lt=0)]] | None = None
    generic: bool = False
    dump_distributions: bool = False


class BaCapacityExperiment(ExperimentBase):
    kind: typing.Literal[ExperimentKind.ba_capacity] = pydantic.Field(
        ExperimentKind.ba_capacity
    )
    scenario: ScalarScenario = ScalarScenario()
    mu: NonNegativeFloat = 0.0
    generic: bool = False


class RdSource(str, enum.Enum):
    state = "state"
    estimate = "estimate"


class RdCurveExperiment(ExperimentBase):
    kind: typing.Literal[ExperimentKind.rd_curve] = pydantic.Field(
        ExperimentKind.rd_curve
    )
    scenario: ScalarScenario = ScalarScenario()
    source: RdSource = RdSource.state
    mu: NonNegativeFloat = 0.0
    slopes: list[typing.Annotated[float, pydantic.Field(lt=0)]] | None = None


class VarianceSweepExperiment(ExperimentBase):
    kind: typing.Literal[ExperimentKind.variance_sweep] = pydantic.Field(
        ExperimentKind.variance_sweep
    )
    scenario: ScalarScenario = ScalarScenario()
    variances: list[PositiveFloat] = pydantic.Field(min_length=1)
    mu: list[list[NonNegativeFloat]] | None = None
    slopes: list[typing.Annotated[float, pydantic.Field(lt=0)]] | None = None

    @pydantic.model_validator(mode="after")
    def check_mu_lists(self) -> "VarianceSweepExperiment":
        if self.mu is not None and len(self.mu) != len(self.variances):
            raise ValueError("mu must provide one list per variance")
        return self


class SeparabilityExperiment(ExperimentBase):
    kind: typing.Literal[ExperimentKind.separability] = pydantic.Field(
        ExperimentKind.separability
    )
    scenario: ScalarScenario = ScalarScenario()
    mu: NonNegativeFloat = 2.5
    samples: PositiveInt = 100_000
    biased_gain: PositiveFloat = 0.5

    @property
    def randomized(self) -> bool:
        return True


class MimoScaExperiment(ExperimentBase):
    kind: typing.Literal[ExperimentKind.mimo_sca] = pydantic.Field(
        ExperimentKind.mimo_sca
    )
    scenario: MimoScenarioConfig = MimoScenarioConfig()
    snr_s_db: list[float] | None = None
    max_outer: PositiveInt = constants.SCA_MAX_OUTER

    @property
    def randomized(self) -> bool:
        return self.scenario.channel == ChannelModel.rayleigh


class MimoBaselinesExperiment(ExperimentBase):
    kind: typing.Literal[ExperimentKind.mimo_baselines] = pydantic.Field(
        ExperimentKind.mimo_baselines
    )
    scenario: MimoScenarioConfig = MimoScenarioConfig()
    axis: SweepAxis = SweepAxis.snr_s_db
    values: list[float] = pydantic.Field(min_length=1)
    methods: list[Method] = pydantic.Field(
        default_factory=lambda: [
            Method.proposed,
            Method.proposed_multistart,
            Method.sensing_optimal,
            Method.comm_optimal,
            Method.heuristic,
        ],
        min_length=1,
    )
    beta_points: int = pydantic.Field(constants.HEURISTIC_BETA_COUNT, ge=2)
    exhaustive_points: int = pydantic.Field(constants.EXHAUSTIVE_POINTS, ge=2)

    @property
    def randomized(self) -> bool:
        return self.scenario.channel == ChannelModel.rayleigh

    @pydantic.model_validator(mode="after")
    def check_axis_values(self) -> "MimoBaselinesExperiment":
        if self.axis in (SweepAxis.sensing_antennas, SweepAxis.comm_antennas):
            if any(value < 1 or value != int(value) for value in self.values):
                raise ValueError(f"{self.axis.value} values must be positive integers")
        if self.axis == SweepAxis.variance_scale and any(
            value <= 0 for value in self.values
        ):
            raise ValueError("variance_scale values must be positive")
        if Method.exhaustive in self.methods and (
            self.scenario.transmit_antennas != 2 or self.scenario.state_diag is None
        ):
            raise ValueError(
                "exhaustive method needs transmit_antennas = 2 and a diagonal state_diag"
            )
        return self


class Exhaustive2dExperiment(ExperimentBase):
    kind: typing.Literal[ExperimentKind.exhaustive_2d] = pydantic.Field(
        ExperimentKind.exhaustive_2d
    )
    scenario: MimoScenarioConfig = MimoScenarioConfig(state_diag=[0.4, 0.1])
    snr_s_db: list[float] | None = None
    points: int = pydantic.Field(constants.EXHAUSTIVE_POINTS, ge=2)

    @property
    def randomized(self) -> bool:
        return self.scenario.channel == ChannelModel.rayleigh

    @pydantic.model_validator(mode="after")
    def check_two_dimensional(self) -> "Exhaustive2dExperiment":
        if self.scenario.transmit_antennas != 2 or self.scenario.state_diag is None:
            raise ValueError(
                "exhaustive-2d needs transmit_antennas = 2 and a diagonal state_diag"
            )
        return self


ExperimentConfig = typing.Annotated[
    ScalarSweepExperiment
    | BaCapacityExperiment
    | RdCurveExperiment
    | VarianceSweepExperiment
    | SeparabilityExperiment
    | MimoScaExperiment
    | MimoBaselinesExperiment
    | Exhaustive2dExperiment,
    pydantic.Field(discriminator="kind"),
]
