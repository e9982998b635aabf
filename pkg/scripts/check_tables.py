"""Print relative deviations from the reference column of result CSVs."""

import csv
import math
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def report(path: pathlib.Path) -> None:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "reference" not in rows[0]:
        return
    print(f"# {path.name}")
    for r in rows:
        v, ref = float(r["value"]), float(r["reference"])
        rel = (v - ref) / ref if math.isfinite(ref) and ref else math.nan
        print(f"{r['model']:>7} {r['case']:>18} {r['method']:>9} {v:12.6f} {ref:10.4f} {rel:+9.4%}")


if __name__ == "__main__":
    paths = [pathlib.Path(p) for p in sys.argv[1:]] or sorted((ROOT / "results").glob("table*.csv"))
    for p in paths:
        report(p)
