import csv
import hashlib
import json
import logging
import math
import pathlib
import typing

from pydantic import BaseModel

from . import constants


def config_hash(config: BaseModel) -> str:
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode("utf8")).hexdigest()


def format_value(value: typing.Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def write_csv(
    path: pathlib.Path,
    columns: typing.Sequence[str],
    rows: typing.Iterable[typing.Sequence[typing.Any]],
    config_digest: str,
    seed: int | None,
) -> pathlib.Path:
    logger = logging.getLogger(__name__)
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "wt", newline="") as fo:
        fo.write(f"# config_sha256={config_digest} seed={seed}\n")
        writer = csv.writer(fo, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(
                    f"Row has {len(row)} values but there are {len(columns)} columns"
                )
            writer.writerow([format_value(value) for value in row])
            count += 1
    logger.info("Wrote %s rows to %s", count, path)
    return path


def read_csv(path: pathlib.Path) -> tuple[list[str], list[list[str]]]:
    with open(path, "rt", newline="") as fo:
        lines = [line for line in fo if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader]


def _cells_match(actual: str, expected: str, rel_tol: float, abs_tol: float) -> bool:
    if actual == expected:
        return True
    try:
        left, right = float(actual), float(expected)
    except ValueError:
        return False
    return math.isclose(left, right, rel_tol=rel_tol, abs_tol=abs_tol)


def compare_csv(
    actual: pathlib.Path,
    expected: pathlib.Path,
    rel_tol: float = constants.GOLDEN_REL_TOL,
    abs_tol: float = 1e-12,
) -> list[str]:
    """Differences between two result files, numeric cells compared with a relative tolerance."""
    actual_header, actual_rows = read_csv(actual)
    expected_header, expected_rows = read_csv(expected)
    if actual_header != expected_header:
        return [f"header {actual_header} != {expected_header}"]
    if len(actual_rows) != len(expected_rows):
        return [f"{len(actual_rows)} rows != {len(expected_rows)} rows"]
    problems = []
    for index, (left, right) in enumerate(zip(actual_rows, expected_rows)):
        for column, a, e in zip(actual_header, left, right):
            if not _cells_match(a, e, rel_tol, abs_tol):
                problems.append(f"row {index} column {column}: {a} != {e}")
    return problems
