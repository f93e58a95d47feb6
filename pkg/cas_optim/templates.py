import pathlib

from jinja2.sandbox import SandboxedEnvironment


def make_environment():
    return SandboxedEnvironment()


def render_output_path(template: str, **context) -> pathlib.Path:
    env = make_environment()
    rendered = env.from_string(template).render(**context).strip()
    if not rendered:
        raise ValueError(f"Output template {template!r} renders to an empty path")
    return pathlib.Path(rendered)
