"""Run a simulation preset and write the size/power tables as markdown and TSV.

Example:
    python3 scripts/reproduce_tables.py --preset paper-table1-desk --reps 1000 --seed 42 --outdir results
"""

import argparse
import pathlib
import sys

from fishercov import mc


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--preset", default="paper-table1-desk", choices=sorted(mc.PRESETS))
    parser.add_argument("--reps", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--workers", type=int, default=mc.default_workers())
    parser.add_argument("--outdir", default="results")
    args = parser.parse_args(argv)

    config = mc.preset(args.preset, reps=args.reps, master_seed=args.seed, workers=args.workers)
    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)

    def progress(cell):
        label = f"{cell.spec.model}/{cell.spec.label} n=({cell.n1},{cell.n2}) p={cell.spec.p}"
        rates = " ".join(f"{r.method}={100 * r.rate:.1f}" for r in cell.rows)
        print(f"{label}: {rates}", file=sys.stderr)

    report = mc.run_grid(config, progress=progress)
    for fmt, suffix in (("markdown", "md"), ("tsv", "tsv"), ("json", "json")):
        (out / f"{args.preset}.{suffix}").write_text(mc.emit_table(report, fmt))
    print(mc.emit_table(report, "markdown"))


if __name__ == "__main__":
    main()
