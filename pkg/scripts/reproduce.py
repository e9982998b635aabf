"""Run every checked-in table/figure config and write CSVs under ``results/``.

    python3 scripts/reproduce.py                # all configs
    python3 scripts/reproduce.py table3 fig7    # name prefixes

Set ESO_LEVY_WORKERS to fan solves out over processes.
"""

import pathlib
import sys
import time

from eso_levy import cli

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main(prefixes: list[str]) -> int:
    configs = sorted((ROOT / "configs").glob("*.cfg"))
    if prefixes:
        configs = [c for c in configs if any(c.stem.startswith(p) for p in prefixes)]
    worst = 0
    for path in configs:
        start = time.perf_counter()
        rc = cli.run(["tables", "--config", str(path), "--output", str(ROOT / "results" / f"{path.stem}.csv")])
        print(f"{path.stem}: exit {rc} in {time.perf_counter() - start:.1f}s", flush=True)
        worst = max(worst, rc)
    return worst


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
