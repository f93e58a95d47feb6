import dataclasses
import json
import logging
import pathlib
import typing

import joblib
import numpy as np
import pydantic
import scipy.linalg
import yaml

from . import constants
from .ba_capacity import solve
from .data_types import BaCapacityExperiment
from .data_types import CasDistortion
from .data_types import ChannelModel
from .data_types import Exhaustive2dExperiment
from .data_types import ExperimentConfig
from .data_types import Method
from .data_types import MimoBaselinesExperiment
from .data_types import MimoScaExperiment
from .data_types import MimoScenario
from .data_types import MimoScenarioConfig
from .data_types import Pmf
from .data_types import RdCurveExperiment
from .data_types import RdSource
from .data_types import ScalarScenario
from .data_types import ScalarSweepExperiment
from .data_types import SeparabilityExperiment
from .data_types import SeparabilityReport
from .data_types import SweepAxis
from .data_types import SweepResult
from .data_types import VarianceSweepExperiment
from .data_types import db_to_noise_variance
from .errors import CasOptimError
from .errors import ConfigError
from .mimo import baseline_comm_optimal
from .mimo import baseline_heuristic
from .mimo import baseline_sensing_optimal
from .mimo import cas_objective
from .mimo import exhaustive_2d
from .mimo import sca_iterate
from .mimo import sca_multistart
from .output import config_hash
from .output import write_csv
from .random_streams import complex_normal
from .random_streams import make_generator
from .random_streams import standard_normal
from .rate_distortion import build_curve
from .rate_distortion import rd_point_at_rate
from .scalar_model import build_comm_channel
from .scalar_model import build_grids
from .scalar_model import estimate_distribution
from .scalar_model import state_prior
from .search import ba_config
from .search import scenario_costs
from .search import sweep
from .templates import render_output_path

ExperimentAdapter = pydantic.TypeAdapter(ExperimentConfig)

Row = typing.Sequence[typing.Any]


@dataclasses.dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: list[Row]
    suffix: str = ""
    # trace tables are only written when traces are requested
    trace: bool = False


@dataclasses.dataclass(frozen=True)
class RunOutcome:
    paths: tuple[pathlib.Path, ...]
    failures: int

    @property
    def ok(self) -> bool:
        return self.failures == 0


def _format_validation_error(exc: pydantic.ValidationError) -> str:
    lines = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "<root>"
        lines.append(f"{location}: {error['msg']}")
    return "; ".join(lines)


def parse_config(payload: typing.Any) -> ExperimentConfig:
    try:
        return ExperimentAdapter.validate_python(payload)
    except pydantic.ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from exc


def load_config(path: pathlib.Path) -> ExperimentConfig:
    path = pathlib.Path(path)
    try:
        with open(path, "rt") as fo:
            if path.suffix.lower() == ".json":
                payload = json.load(fo)
            else:
                payload = yaml.safe_load(fo)
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"Cannot parse config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"Config {path} must be a mapping at the top level")
    return parse_config(payload)


def state_covariance(config: MimoScenarioConfig) -> np.ndarray:
    n = config.transmit_antennas
    if config.state_diag is not None:
        base = np.diag(np.asarray(config.state_diag, dtype=float))
    else:
        base = scipy.linalg.toeplitz(config.state_correlation ** np.arange(n))
    return config.variance_scale * base


def draw_channel(
    config: MimoScenarioConfig,
    generator: np.random.Generator | None,
    rows: int | None = None,
) -> np.ndarray:
    rows = config.comm_antennas if rows is None else rows
    shape = (rows, config.transmit_antennas)
    if config.channel == ChannelModel.zero:
        return np.zeros(shape, dtype=complex)
    if config.channel == ChannelModel.identity:
        return np.eye(*shape, dtype=complex)
    if generator is None:
        raise ValueError("Rayleigh channels need a random generator")
    return complex_normal(generator, shape)


def build_mimo_scenario(config: MimoScenarioConfig, channel: np.ndarray) -> MimoScenario:
    return MimoScenario(
        channel=channel[: config.comm_antennas],
        state_covariance=state_covariance(config),
        sensing_noise_variance=db_to_noise_variance(config.snr_s_db),
        comm_noise_variance=db_to_noise_variance(config.snr_c_db),
        power_budget=config.power_budget,
        sensing_antennas=config.sensing_antennas,
    )


SWEEP_COLUMNS = (
    "mu",
    "sensing_distortion",
    "mi_bits",
    "comm_distortion",
    "total_distortion",
    "msst_rate_bits",
    "iterations",
    "converged",
    "extrapolated",
    "msst_feasible",
    "is_best",
)


def _sweep_rows(result: SweepResult, prefix: Row = ()) -> list[Row]:
    rows = []
    for index, record in enumerate(result.records):
        rows.append(
            tuple(prefix)
            + (
                record.mu,
                record.sensing_distortion,
                record.mi_bits,
                record.comm_distortion,
                record.total_distortion,
                record.msst_rate_bits,
                record.iterations,
                record.converged,
                record.extrapolated,
                record.msst_feasible,
                index == result.best_index,
            )
        )
    return rows


def _run_scalar_sweep(config: ScalarSweepExperiment, n_jobs: int) -> tuple[list[Table], int]:
    result = sweep(
        config.scenario,
        config.mu,
        generic=config.generic,
        slopes=config.slopes,
        n_jobs=n_jobs,
    )
    tables = [Table(columns=SWEEP_COLUMNS, rows=_sweep_rows(result))]
    if config.dump_distributions:
        grid = build_grids(config.scenario).x
        rows = [
            (record.mu, float(x), float(mass))
            for record in result.records
            for x, mass in zip(grid.points, record.p_x.mass)
        ]
        tables.append(
            Table(columns=("mu", "x", "probability"), rows=rows, suffix="-distributions")
        )
    return tables, result.failures


def _run_ba_capacity(config: BaCapacityExperiment, trace: bool) -> list[Table]:
    costs = scenario_costs(config.scenario, generic=config.generic)
    comm = build_comm_channel(config.scenario)
    result = solve(costs, comm, ba_config(config.scenario, config.mu, record_trace=trace))
    distribution = [
        (float(x), float(mass), float(e), float(b))
        for x, mass, e, b in zip(costs.x_grid.points, result.p_x.mass, costs.e, costs.b)
    ]
    summary = [
        (
            config.mu,
            result.mi_bits,
            result.sensing_distortion,
            result.power,
            result.lambda_star,
            result.iterations,
            result.converged,
        )
    ]
    trace_rows = [
        (row.iteration, row.objective, row.mi_bits, row.sensing_distortion, row.power, row.lambda_)
        for row in result.trace
    ]
    return [
        Table(
            columns=("x", "probability", "sensing_cost", "power_cost"), rows=distribution
        ),
        Table(
            columns=(
                "mu",
                "mi_bits",
                "sensing_distortion",
                "power",
                "lambda",
                "iterations",
                "converged",
            ),
            rows=summary,
            suffix="-summary",
        ),
        Table(
            columns=(
                "iteration",
                "objective",
                "mi_bits",
                "sensing_distortion",
                "power",
                "lambda",
            ),
            rows=trace_rows,
            suffix="-trace",
            trace=True,
        ),
    ]


def _rd_source(config: RdCurveExperiment) -> Pmf:
    if config.source == RdSource.state:
        return state_prior(config.scenario)
    costs = scenario_costs(config.scenario)
    comm = build_comm_channel(config.scenario)
    result = solve(costs, comm, ba_config(config.scenario, config.mu))
    return estimate_distribution(config.scenario, result.p_x)


def _run_rd_curve(config: RdCurveExperiment, n_jobs: int) -> list[Table]:
    source = _rd_source(config)
    curve = build_curve(source, config.slopes, n_jobs=n_jobs)
    variance = source.variance()
    rows = []
    for distortion, rate, slope in zip(curve.distortions, curve.rates, curve.slopes):
        # Shannon bound of a Gaussian source with the same variance
        bound = max(0.0, 0.5 * np.log2(variance / distortion)) if distortion > 0 else np.inf
        rows.append((float(distortion), float(rate), float(slope), float(bound)))
    return [
        Table(columns=("distortion", "rate_bits", "slope", "gaussian_bound_bits"), rows=rows)
    ]


def _run_variance_sweep(
    config: VarianceSweepExperiment, n_jobs: int
) -> tuple[list[Table], int]:
    logger = logging.getLogger(__name__)
    rows, best_rows, failures = [], [], 0
    for index, variance in enumerate(config.variances):
        scenario = config.scenario.model_copy(update={"state_variance": variance})
        mu_set = constants.DEFAULT_MU_GRID if config.mu is None else config.mu[index]
        result = sweep(scenario, mu_set, slopes=config.slopes, n_jobs=n_jobs)
        rows.extend(_sweep_rows(result, prefix=(variance,)))
        failures += result.failures
        best = result.best
        if best is None:
            logger.warning("No optimum for state variance %s", variance)
            continue
        best_rows.append((variance, best.mu, best.total_distortion))
    return [
        Table(columns=("state_variance",) + SWEEP_COLUMNS, rows=rows),
        Table(
            columns=("state_variance", "best_mu", "total_distortion"),
            rows=best_rows,
            suffix="-optimum",
        ),
    ], failures


def _sample_indices(cdf: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    index = np.searchsorted(cdf, uniforms * cdf[-1], side="right")
    return np.clip(index, 0, cdf.size - 1)


def _sample_rows(
    rows: np.ndarray, row_index: np.ndarray, uniforms: np.ndarray, chunk: int = 10_000
) -> np.ndarray:
    cdf = np.cumsum(rows, axis=1)
    result = np.empty(row_index.size, dtype=int)
    for start in range(0, row_index.size, chunk):
        stop = start + chunk
        selected = cdf[row_index[start:stop]]
        result[start:stop] = (selected < uniforms[start:stop, None] * selected[:, -1:]).sum(
            axis=1
        )
    return np.clip(result, 0, rows.shape[1] - 1)


def separability_check(
    scenario: ScalarScenario,
    mu: float,
    samples: int,
    generator: np.random.Generator,
    gain: float = 1.0,
) -> SeparabilityReport:
    """Monte Carlo check of E(S - S_hat)^2 = E(S - S_tilde)^2 + E(S_tilde - S_hat)^2.

    ``gain`` scales the posterior-mean estimator; any gain other than one
    breaks the orthogonality the identity rests on.
    """
    logger = logging.getLogger(__name__)
    grids = build_grids(scenario)
    costs = scenario_costs(scenario)
    comm = build_comm_channel(scenario)
    capacity = solve(costs, comm, ba_config(scenario, mu))
    source = estimate_distribution(scenario, capacity.p_x, gain=gain)
    quantizer = rd_point_at_rate(source, capacity.mi_bits / scenario.channel_dimensions)

    x = grids.x.points[_sample_indices(np.cumsum(capacity.p_x.mass), generator.random(samples))]
    s = np.sqrt(scenario.state_variance) * standard_normal(generator, samples)
    noise = np.sqrt(scenario.sensing_noise_variance) * standard_normal(generator, samples)
    z = x * s + noise
    nu2 = scenario.state_variance
    estimate = gain * nu2 * x * z / (scenario.sensing_noise_variance + x**2 * nu2)

    cell = np.clip(
        np.searchsorted(grids.s_tilde.edges(), estimate, side="right") - 1,
        0,
        grids.s_tilde.count - 1,
    )
    reproduction_index = _sample_rows(quantizer.test_channel.rows, cell, generator.random(samples))
    reproduction = quantizer.test_channel.output_grid.points[reproduction_index]

    total = float(np.mean((s - reproduction) ** 2))
    sensing = float(np.mean((s - estimate) ** 2))
    communication = float(np.mean((estimate - reproduction) ** 2))
    violation = abs(total - sensing - communication) / total
    label = "mmse" if gain == 1.0 else f"gain={gain}"
    logger.info(
        "Separability %s: D=%.6g Ds=%.6g Dc=%.6g violation=%.3e",
        label,
        total,
        sensing,
        communication,
        violation,
    )
    return SeparabilityReport(
        estimator=label,
        samples=samples,
        total_distortion=total,
        sensing_distortion=sensing,
        comm_distortion=communication,
        relative_violation=violation,
    )


def _run_separability(config: SeparabilityExperiment) -> list[Table]:
    rows = []
    for trial in range(config.trials):
        for stream, gain in enumerate((1.0, config.biased_gain)):
            generator = make_generator(config.rng_seed, 2 * trial + stream)
            report = separability_check(
                config.scenario, config.mu, config.samples, generator, gain=gain
            )
            rows.append(
                (
                    trial,
                    report.estimator,
                    report.samples,
                    report.total_distortion,
                    report.sensing_distortion,
                    report.comm_distortion,
                    report.relative_violation,
                )
            )
    return [
        Table(
            columns=(
                "trial",
                "estimator",
                "samples",
                "total_distortion",
                "sensing_distortion",
                "comm_distortion",
                "relative_violation",
            ),
            rows=rows,
        )
    ]


def _trial_generator(seed: int | None, trial: int) -> np.random.Generator | None:
    if seed is None:
        return None
    return make_generator(seed, trial)


def _sca_trial(
    config: MimoScaExperiment, trial: int
) -> tuple[list[Row], list[Row], int]:
    logger = logging.getLogger(__name__)
    channel = draw_channel(config.scenario, _trial_generator(config.rng_seed, trial))
    snrs = config.snr_s_db if config.snr_s_db is not None else [config.scenario.snr_s_db]
    rows, trace_rows, failures = [], [], 0
    for snr in snrs:
        scenario = build_mimo_scenario(
            config.scenario.model_copy(update={"snr_s_db": snr}), channel
        )
        try:
            result = sca_iterate(scenario, max_outer=config.max_outer)
        except (CasOptimError, np.linalg.LinAlgError) as exc:
            logger.error("SCA failed for trial %s at SNR_s=%s dB: %s", trial, snr, exc)
            failures += 1
            continue
        distortion = result.distortion
        rows.append(
            (
                trial,
                snr,
                distortion.total,
                distortion.average,
                distortion.sensing,
                distortion.communication,
                distortion.capacity_bits,
                result.iterations,
                result.converged,
            )
        )
        trace_rows.extend(
            (trial, snr, iteration, objective)
            for iteration, objective in enumerate(result.trajectory)
        )
    return rows, trace_rows, failures


def _run_mimo_sca(config: MimoScaExperiment, n_jobs: int) -> tuple[list[Table], int]:
    results = joblib.Parallel(n_jobs=n_jobs)(
        joblib.delayed(_sca_trial)(config, trial) for trial in range(config.trials)
    )
    rows = [row for trial_rows, _, _ in results for row in trial_rows]
    trace_rows = [row for _, trial_trace, _ in results for row in trial_trace]
    failures = sum(count for _, _, count in results)
    return [
        Table(
            columns=(
                "trial",
                "snr_s_db",
                "total_distortion",
                "average_distortion",
                "sensing_distortion",
                "comm_distortion",
                "capacity_bits",
                "iterations",
                "converged",
            ),
            rows=rows,
        ),
        Table(
            columns=("trial", "snr_s_db", "iteration", "objective"),
            rows=trace_rows,
            suffix="-trace",
            trace=True,
        ),
    ], failures


def _axis_scenario(
    config: MimoBaselinesExperiment, channel: np.ndarray, value: float
) -> MimoScenario:
    if config.axis in (SweepAxis.sensing_antennas, SweepAxis.comm_antennas):
        value = int(value)
    scenario_config = config.scenario.model_copy(update={config.axis.value: value})
    return build_mimo_scenario(scenario_config, channel)


def evaluate_methods(
    scenario: MimoScenario,
    methods: typing.Sequence[Method],
    beta_points: int = constants.HEURISTIC_BETA_COUNT,
    exhaustive_points: int = constants.EXHAUSTIVE_POINTS,
) -> dict[Method, CasDistortion]:
    """CAS distortion of every requested design method on one scenario."""
    sensing = baseline_sensing_optimal(scenario)
    comm = baseline_comm_optimal(scenario)
    heuristic = baseline_heuristic(scenario, np.linspace(0.0, 1.0, beta_points))
    results = {}
    for method in methods:
        if method == Method.proposed:
            results[method] = sca_iterate(scenario).distortion
        elif method == Method.proposed_multistart:
            starts = [
                scenario.power_budget / scenario.n_t * np.eye(scenario.n_t),
                sensing,
                comm,
                heuristic.covariance,
            ]
            results[method] = sca_multistart(scenario, starts).distortion
        elif method == Method.sensing_optimal:
            results[method] = cas_objective(sensing, scenario)
        elif method == Method.comm_optimal:
            results[method] = cas_objective(comm, scenario)
        elif method == Method.heuristic:
            results[method] = heuristic.distortion
        elif method == Method.exhaustive:
            results[method] = exhaustive_2d(scenario, exhaustive_points).distortion
        else:
            raise ValueError(f"Unexpected method {method}")
    return results


def _baselines_trial(
    config: MimoBaselinesExperiment, trial: int
) -> tuple[list[Row], int]:
    logger = logging.getLogger(__name__)
    rows_needed = config.scenario.comm_antennas
    if config.axis == SweepAxis.comm_antennas:
        rows_needed = int(max(config.values))
    channel = draw_channel(
        config.scenario, _trial_generator(config.rng_seed, trial), rows=rows_needed
    )
    rows, failures = [], 0
    for value in config.values:
        scenario = _axis_scenario(config, channel, value)
        try:
            results = evaluate_methods(
                scenario, config.methods, config.beta_points, config.exhaustive_points
            )
        except (CasOptimError, np.linalg.LinAlgError) as exc:
            logger.error(
                "Design failed for trial %s at %s=%s: %s", trial, config.axis.value, value, exc
            )
            failures += 1
            continue
        for method in config.methods:
            distortion = results[method]
            rows.append(
                (
                    trial,
                    value,
                    method,
                    distortion.total,
                    distortion.average,
                    distortion.sensing,
                    distortion.communication,
                    distortion.capacity_bits,
                )
            )
    return rows, failures


def _mean_rows(rows: list[Row], key_size: int, value_index: int) -> list[Row]:
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        groups.setdefault(tuple(row[1 : 1 + key_size]), []).append(row[value_index])
    return [key + (float(np.mean(values)), len(values)) for key, values in groups.items()]


def _run_mimo_baselines(
    config: MimoBaselinesExperiment, n_jobs: int
) -> tuple[list[Table], int]:
    results = joblib.Parallel(n_jobs=n_jobs)(
        joblib.delayed(_baselines_trial)(config, trial) for trial in range(config.trials)
    )
    rows = [row for trial_rows, _ in results for row in trial_rows]
    failures = sum(count for _, count in results)
    return [
        Table(
            columns=(
                "trial",
                config.axis.value,
                "method",
                "total_distortion",
                "average_distortion",
                "sensing_distortion",
                "comm_distortion",
                "capacity_bits",
            ),
            rows=rows,
        ),
        Table(
            columns=(config.axis.value, "method", "mean_average_distortion", "trials"),
            rows=_mean_rows(rows, key_size=2, value_index=4),
            suffix="-mean",
        ),
    ], failures


def _exhaustive_trial(
    config: Exhaustive2dExperiment, trial: int
) -> tuple[list[Row], int]:
    logger = logging.getLogger(__name__)
    channel = draw_channel(config.scenario, _trial_generator(config.rng_seed, trial))
    snrs = config.snr_s_db if config.snr_s_db is not None else [config.scenario.snr_s_db]
    rows, failures = [], 0
    for snr in snrs:
        scenario = build_mimo_scenario(
            config.scenario.model_copy(update={"snr_s_db": snr}), channel
        )
        try:
            exhaustive = exhaustive_2d(scenario, config.points)
            proposed = sca_iterate(scenario)
        except (CasOptimError, np.linalg.LinAlgError) as exc:
            logger.error(
                "Exhaustive comparison failed for trial %s at SNR_s=%s dB: %s", trial, snr, exc
            )
            failures += 1
            continue
        trajectory = np.asarray(proposed.trajectory)
        slack = constants.SCA_MONOTONE_SLACK * np.abs(trajectory[:-1]).clip(1e-12)
        monotone = bool(np.all(np.diff(trajectory) <= slack))
        best = exhaustive.distortion.total
        rows.append(
            (
                trial,
                snr,
                exhaustive.split,
                best,
                proposed.distortion.total,
                (proposed.distortion.total - best) / best if best > 0 else 0.0,
                monotone,
            )
        )
    return rows, failures


def _run_exhaustive_2d(
    config: Exhaustive2dExperiment, n_jobs: int
) -> tuple[list[Table], int]:
    results = joblib.Parallel(n_jobs=n_jobs)(
        joblib.delayed(_exhaustive_trial)(config, trial) for trial in range(config.trials)
    )
    rows = [row for trial_rows, _ in results for row in trial_rows]
    failures = sum(count for _, count in results)
    return [
        Table(
            columns=(
                "trial",
                "snr_s_db",
                "exhaustive_split",
                "exhaustive_distortion",
                "sca_distortion",
                "relative_gap",
                "sca_monotone",
            ),
            rows=rows,
        )
    ], failures


def _tables(config: ExperimentConfig, trace: bool, n_jobs: int) -> tuple[list[Table], int]:
    if isinstance(config, ScalarSweepExperiment):
        return _run_scalar_sweep(config, n_jobs)
    elif isinstance(config, BaCapacityExperiment):
        return _run_ba_capacity(config, trace), 0
    elif isinstance(config, RdCurveExperiment):
        return _run_rd_curve(config, n_jobs), 0
    elif isinstance(config, VarianceSweepExperiment):
        return _run_variance_sweep(config, n_jobs)
    elif isinstance(config, SeparabilityExperiment):
        return _run_separability(config), 0
    elif isinstance(config, MimoScaExperiment):
        return _run_mimo_sca(config, n_jobs)
    elif isinstance(config, MimoBaselinesExperiment):
        return _run_mimo_baselines(config, n_jobs)
    elif isinstance(config, Exhaustive2dExperiment):
        return _run_exhaustive_2d(config, n_jobs)
    else:
        raise ValueError(f"Unexpected experiment type {type(config)}")


def run(
    config: ExperimentConfig,
    out_dir: pathlib.Path,
    trace: bool = False,
    seed: int | None = None,
    n_jobs: int = 1,
) -> RunOutcome:
    logger = logging.getLogger(__name__)
    if seed is not None:
        config = parse_config(
            config.model_copy(update={"rng_seed": seed}).model_dump(mode="json")
        )
    digest = config_hash(config)
    logger.info(
        "Running %s experiment (config %s, seed %s)",
        config.kind.value,
        digest[:12],
        config.rng_seed,
    )
    tables, failures = _tables(config, trace, n_jobs)
    main_path = pathlib.Path(out_dir) / render_output_path(
        config.output,
        kind=config.kind.value,
        seed="none" if config.rng_seed is None else config.rng_seed,
        config_hash=digest,
    )
    paths = []
    for table in tables:
        if table.trace and not trace:
            continue
        path = main_path.with_name(main_path.stem + table.suffix + main_path.suffix)
        paths.append(write_csv(path, table.columns, table.rows, digest, config.rng_seed))
    if failures:
        logger.error("%s experiment finished with %s failed points", config.kind.value, failures)
    else:
        logger.info("%s experiment finished", config.kind.value)
    return RunOutcome(paths=tuple(paths), failures=failures)
