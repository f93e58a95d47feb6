import logging
import pathlib
import sys

from cas_optim.experiments import load_config
from cas_optim.experiments import run

ROOT = pathlib.Path(__file__).parent.parent
EXPERIMENTS_FOLDER = ROOT / "experiments"
GOLDEN_FOLDER = EXPERIMENTS_FOLDER / "golden"


def main():
    logging.basicConfig(level=logging.INFO)
    names = sys.argv[1:]
    configs = sorted(
        path
        for path in EXPERIMENTS_FOLDER.iterdir()
        if path.suffix in (".json", ".yaml", ".yml")
    )
    if names:
        configs = [path for path in configs if path.stem in names]
    failed = 0
    for path in configs:
        outcome = run(load_config(path), GOLDEN_FOLDER)
        if not outcome.ok:
            failed += 1
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
