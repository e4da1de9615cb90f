"""Run every shipped preset once and print the wall time of each.

    python3 scripts/run_all_presets.py [--out DIR] [--jobs N]

table1 runs before the trajectory presets so that certificate-derived gains
are available; everything lands under DIR/<preset>.
"""
import argparse
import os
import time
from pathlib import Path

from encobs.experiments.config import load_config, preset_names
from encobs.experiments.runner import OUT_ENV, run

ORDER = ["frontier", "table1", "table2", "table3", "fig3", "fig4", "fig5"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default=os.environ.get(OUT_ENV, "encobs-out"))
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    names = [n for n in ORDER if n in preset_names()]
    names += [n for n in preset_names() if n not in names]
    total = time.perf_counter()
    for name in names:
        t0 = time.perf_counter()
        report = run(load_config(preset=name), Path(args.out) / name, jobs=args.jobs)
        print(f"{name:10s} {len(report.rows):3d} cells  {time.perf_counter() - t0:7.1f} s")
    print(f"{'total':10s}            {time.perf_counter() - total:7.1f} s")


if __name__ == "__main__":
    main()
