import pathlib

import pytest
from jinja2.sandbox import SandboxedEnvironment

from cas_optim.templates import make_environment
from cas_optim.templates import render_output_path


@pytest.mark.parametrize(
    "template, context, expected",
    [
        ("{{ kind }}.csv", dict(kind="rd_curve"), "rd_curve.csv"),
        (
            "{{ kind }}-seed{{ seed }}.csv",
            dict(kind="mimo_baselines", seed=3),
            "mimo_baselines-seed3.csv",
        ),
        (
            "runs/{{ config_hash[:8] }}/{{ kind }}.csv",
            dict(kind="ba_capacity", config_hash="0123456789abcdef"),
            "runs/01234567/ba_capacity.csv",
        ),
        ("  {{ kind }}.csv\n", dict(kind="x"), "x.csv"),
    ],
)
def test_render_output_path(template: str, context: dict, expected: str):
    assert render_output_path(template, **context) == pathlib.Path(expected)


def test_render_output_path_empty():
    with pytest.raises(ValueError):
        render_output_path("{{ missing }}")


def test_environment_is_sandboxed():
    assert isinstance(make_environment(), SandboxedEnvironment)
