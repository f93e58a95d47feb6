import json
import pathlib

import pytest
from pytest_mock import MockerFixture

from cas_optim.cli import EXIT_CONFIG_ERROR
from cas_optim.cli import EXIT_OK
from cas_optim.cli import EXIT_SOLVER_FAILURE
from cas_optim.cli import main
from cas_optim.cli import thread_count
from cas_optim.errors import ConfigError
from cas_optim.errors import InfeasibleError
from cas_optim.experiments import RunOutcome


@pytest.fixture
def ba_config(tmp_path: pathlib.Path) -> pathlib.Path:
    path = tmp_path / "ba.json"
    path.write_text(
        json.dumps(
            dict(
                kind="ba-capacity",
                scenario=dict(x_points=41, s_points=61, z_points=81, y_points=81),
                mu=0.5,
                output="{{ kind }}.csv",
            )
        )
    )
    return path


@pytest.mark.parametrize("command", ["run", "ba-capacity"])
def test_run_command(
    tmp_path: pathlib.Path,
    ba_config: pathlib.Path,
    command: str,
    capsys: pytest.CaptureFixture,
):
    out = tmp_path / "out"
    assert main([command, "--config", str(ba_config), "--out", str(out)]) == EXIT_OK
    assert (out / "ba-capacity.csv").exists()
    assert (out / "ba-capacity-summary.csv").exists()
    assert not (out / "ba-capacity-trace.csv").exists()
    assert str(out / "ba-capacity.csv") in capsys.readouterr().out


def test_run_with_trace(tmp_path: pathlib.Path, ba_config: pathlib.Path):
    assert main(["run", "--config", str(ba_config), "--out", str(tmp_path), "--trace"]) == EXIT_OK
    assert (tmp_path / "ba-capacity-trace.csv").exists()


def test_kind_mismatch(tmp_path: pathlib.Path, ba_config: pathlib.Path):
    assert main(["rd-curve", "--config", str(ba_config), "--out", str(tmp_path)]) == (
        EXIT_CONFIG_ERROR
    )


def test_invalid_config(tmp_path: pathlib.Path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(dict(kind="ba-capacity", unknown=True)))
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG_ERROR


def test_missing_config(tmp_path: pathlib.Path):
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG_ERROR


def test_solver_failure(tmp_path: pathlib.Path, ba_config: pathlib.Path, mocker: MockerFixture):
    mocker.patch("cas_optim.cli.run", side_effect=InfeasibleError("no feasible start"))
    assert main(["run", "--config", str(ba_config), "--out", str(tmp_path)]) == (
        EXIT_SOLVER_FAILURE
    )


def test_partial_failure(tmp_path: pathlib.Path, ba_config: pathlib.Path, mocker: MockerFixture):
    mocker.patch("cas_optim.cli.run", return_value=RunOutcome(paths=(), failures=3))
    assert main(["run", "--config", str(ba_config), "--out", str(tmp_path)]) == (
        EXIT_SOLVER_FAILURE
    )


def test_scalar_sweep_failed_points(tmp_path: pathlib.Path, mocker: MockerFixture):
    path = tmp_path / "sweep.json"
    path.write_text(
        json.dumps(
            dict(
                kind="scalar-sweep",
                scenario=dict(x_points=41, s_points=61, z_points=81, y_points=81),
                mu=[0.0, 1.0],
                output="{{ kind }}.csv",
            )
        )
    )
    mocker.patch("cas_optim.search.rate_at_distortion", return_value=1e6)
    out = tmp_path / "out"
    assert main(["scalar-sweep", "--config", str(path), "--out", str(out)]) == (
        EXIT_SOLVER_FAILURE
    )
    assert (out / "scalar-sweep.csv").exists()


def test_seed_is_forwarded(tmp_path: pathlib.Path, ba_config: pathlib.Path, mocker: MockerFixture):
    run = mocker.patch("cas_optim.cli.run", return_value=RunOutcome(paths=(), failures=0))
    assert main(["run", "--config", str(ba_config), "--seed", "9"]) == EXIT_OK
    assert run.call_args.kwargs["seed"] == 9
    assert run.call_args.kwargs["n_jobs"] == 1


def test_threads_from_environment(
    ba_config: pathlib.Path, mocker: MockerFixture, monkeypatch: pytest.MonkeyPatch
):
    monkeypatch.setenv("CAS_OPTIM_THREADS", "4")
    run = mocker.patch("cas_optim.cli.run", return_value=RunOutcome(paths=(), failures=0))
    assert main(["run", "--config", str(ba_config)]) == EXIT_OK
    assert run.call_args.kwargs["n_jobs"] == 4


def test_invalid_threads(ba_config: pathlib.Path, monkeypatch: pytest.MonkeyPatch):
    monkeypatch.setenv("CAS_OPTIM_THREADS", "many")
    assert main(["run", "--config", str(ba_config)]) == EXIT_CONFIG_ERROR


@pytest.mark.parametrize(
    "environ, expected",
    [
        ({}, 1),
        ({"CAS_OPTIM_THREADS": ""}, 1),
        ({"CAS_OPTIM_THREADS": "3"}, 3),
    ],
)
def test_thread_count(environ: dict, expected: int):
    assert thread_count(environ) == expected


@pytest.mark.parametrize("value", ["0", "-2", "two"])
def test_thread_count_invalid(value: str):
    with pytest.raises(ConfigError):
        thread_count({"CAS_OPTIM_THREADS": value})


@pytest.mark.parametrize(
    "expected_text, code",
    [
        ("mu,value\n0.5,1.0\n", EXIT_OK),
        ("mu,value\n0.5,1.5\n", EXIT_SOLVER_FAILURE),
    ],
)
def test_compare(tmp_path: pathlib.Path, expected_text: str, code: int):
    actual = tmp_path / "actual.csv"
    actual.write_text("# config_sha256=abc seed=None\nmu,value\n0.5,1.0\n")
    expected = tmp_path / "expected.csv"
    expected.write_text(expected_text)
    assert main(["compare", str(actual), str(expected)]) == code
