"""Command-line front end: ``fishercov test | sim | genesets``.

Exit codes: 0 success, 1 runtime error (bad data, parse failure, numerical
failure), 2 usage error (bad flags, invalid grid, wrong number of groups).
Output files are written only after every computation has succeeded, each
through a temporary file and an atomic rename.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import tempfile
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import geneset as gs
from . import mc
from .clx import clx_test
from .combine import fisher_combine
from .errors import CovTestError, SpecError, UsageError
from .geneset import GroupError, ParseError
from .lc import lc_test
from .matcore import SampleMatrix
from .simgen import ALTERNATIVES, MODELS

__all__ = ["main", "read_samples", "test_document", "render_test_text", "atomic_write"]

TEST_SCHEMA = "fishercov.test/1"


# ------------------------------------------------------------------ helpers

def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a sibling temporary file and ``os.replace``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".fishercov-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_all(outputs: Sequence[Tuple[Optional[str], str]]) -> None:
    for path, text in outputs:
        if path:
            atomic_write(path, text)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_samples(path: str) -> SampleMatrix:
    """Read a samples x variables matrix from comma- or tab-delimited text.

    A first row with any non-numeric field is a header of variable names.
    Blank lines and lines starting with ``#`` are skipped.
    """
    with open(path, newline="") as fh:
        lines = [(i, line) for i, line in enumerate(fh.read().splitlines(), start=1)
                 if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise ParseError(path, 1, "no data rows")
    delim = "\t" if "\t" in lines[0][1] else ","
    names = None
    rows: List[List[float]] = []
    width = None
    for k, (lineno, line) in enumerate(lines):
        fields = [f.strip() for f in next(csv.reader([line], delimiter=delim))]
        if k == 0 and not all(_is_number(f) for f in fields):
            names = fields
            width = len(fields)
            continue
        if width is None:
            width = len(fields)
        if len(fields) != width:
            raise ParseError(path, lineno, f"expected {width} fields, got {len(fields)}")
        values = []
        for col, f in enumerate(fields, start=1):
            try:
                v = float(f)
            except ValueError:
                raise ParseError(path, lineno, f"column {col}: cannot parse {f!r} as a number") from None
            if not math.isfinite(v):
                raise ParseError(path, lineno, f"column {col}: non-finite value {f!r}")
            values.append(v)
        rows.append(values)
    if not rows:
        raise ParseError(path, lines[-1][0], "header but no data rows")
    return SampleMatrix(np.array(rows), names)


# --------------------------------------------------------------------- test

def test_document(x: SampleMatrix, y: SampleMatrix, method: str = "all", alpha: float = 0.05) -> dict:
    """Result document of the ``test`` command (schema ``fishercov.test/1``).

    Keys: ``schema``, ``n1``, ``n2``, ``p``, ``alpha``, ``method`` and, as
    requested, blocks ``lc`` (``t``, ``a_hat``, ``b_hat``, ``c_hat``,
    ``sigma0``, ``z``, ``p``, ``log_p``, ``reject``), ``clx`` (``m``,
    ``m_norm``, ``p``, ``log_p``, ``argmax``, ``argmax_names``, ``reject``)
    and ``fisher`` (``f``, ``p``, ``log_p``, ``reject``). ``fisher`` needs
    both other blocks and is computed whenever it is requested.
    """
    doc: Dict[str, object] = {"schema": TEST_SCHEMA, "n1": x.n, "n2": y.n, "p": x.p, "alpha": alpha,
                              "method": method}
    want_lc = method in ("lc", "fisher", "all")
    want_clx = method in ("clx", "fisher", "all")
    lc = clx = None
    if want_lc:
        lc = lc_test(x, y)
        doc["lc"] = {"t": lc.t_tilde, "a_hat": lc.a_hat, "b_hat": lc.b_hat, "c_hat": lc.c_hat,
                     "sigma0": lc.sigma0_hat, "z": lc.z, "p": lc.p.value, "log_p": lc.p.log_value,
                     "reject": lc.reject(alpha)}
    if want_clx:
        clx = clx_test(x, y)
        i, j = clx.argmax
        doc["clx"] = {"m": clx.m, "m_norm": clx.m_norm, "p": clx.p.value, "log_p": clx.p.log_value,
                      "argmax": [i, j], "argmax_names": [x.name_of(i), x.name_of(j)],
                      "reject": clx.reject(alpha)}
    if method in ("fisher", "all"):
        fc = fisher_combine(lc.p, clx.p)
        doc["fisher"] = {"f": fc.f, "p": fc.p.value, "log_p": fc.p.log_value, "reject": fc.reject(alpha)}
    return doc


def _yn(flag: bool) -> str:
    return "reject" if flag else "accept"


def render_test_text(doc: dict) -> str:
    """Plain-text rendering of a ``test`` document; floats use ``repr``."""
    lines = [f"n1={doc['n1']} n2={doc['n2']} p={doc['p']} alpha={doc['alpha']!r}"]
    if "lc" in doc:
        b = doc["lc"]
        lines.append(f"LC      T={b['t']!r} sigma0={b['sigma0']!r} z={b['z']!r} "
                     f"p={b['p']!r} log_p={b['log_p']!r} -> {_yn(b['reject'])}")
    if "clx" in doc:
        b = doc["clx"]
        i, j = b["argmax"]
        names = b["argmax_names"]
        lines.append(f"CLX     M={b['m']!r} M_norm={b['m_norm']!r} p={b['p']!r} log_p={b['log_p']!r} "
                     f"argmax=({i},{j}) [{names[0]},{names[1]}] -> {_yn(b['reject'])}")
    if "fisher" in doc:
        b = doc["fisher"]
        lines.append(f"Fisher  F={b['f']!r} p={b['p']!r} log_p={b['log_p']!r} -> {_yn(b['reject'])}")
    return "\n".join(lines) + "\n"


def _cmd_test(args) -> int:
    x = read_samples(args.x_file)
    y = read_samples(args.y_file)
    doc = test_document(x, y, args.method, args.alpha)
    if args.output == "json":
        text = json.dumps(doc, indent=2) + "\n"
    else:
        text = render_test_text(doc)
    if args.out:
        _write_all([(args.out, text)])
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------- sim

def _sim_config(args) -> mc.McConfig:
    overrides = {}
    if args.reps is not None:
        overrides["reps"] = args.reps
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.methods is not None:
        overrides["methods"] = tuple(args.methods)
    if args.freeze_u:
        overrides["freeze_u"] = True

    grid_flags = [args.model, args.alt, args.rho, args.n, args.n1, args.n2, args.p]
    sources = sum([args.config is not None, args.preset is not None, any(v is not None for v in grid_flags)])
    if sources != 1:
        raise UsageError("give exactly one of --config, --preset, or grid flags (--model/--p/...)")
    if args.config is not None:
        base = mc.load_config(args.config)
        fields = {k: getattr(base, k) for k in ("models", "sizes", "reps", "alpha", "methods",
                                                 "master_seed", "workers", "freeze_u")}
        fields.update(overrides)
        return mc.McConfig(**fields)
    overrides.setdefault("workers", mc.default_workers())
    if args.preset is not None:
        return mc.preset(args.preset, **overrides)
    if args.model is None or args.p is None:
        raise UsageError("--model and --p are required without --preset or --config")
    if args.n is not None and (args.n1 is not None or args.n2 is not None):
        raise UsageError("use either --n or --n1/--n2")
    if args.n is not None:
        sizes = tuple((n, n) for n in args.n)
    else:
        sizes = ((args.n1 or 100, args.n2 or 100),)
    rhos = args.rho if args.rho is not None else (0.2, 0.3)
    specs = mc.expand_grid(args.model, args.alt or ["null"], args.p, rhos)
    return mc.McConfig(models=specs, sizes=sizes, **overrides)


def _cmd_sim(args, parser) -> int:
    try:
        config = _sim_config(args)
    except (UsageError, SpecError) as exc:
        parser.error(str(exc))
    print(f"master seed: {config.master_seed}", file=sys.stderr)

    def progress(cell):
        if not args.quiet:
            rates = "  ".join(f"{r.method}={100 * r.rate:.1f}%" for r in cell.rows)
            print(f"  {cell.spec.model} {cell.spec.label} n=({cell.n1},{cell.n2}) p={cell.spec.p}: {rates}",
                  file=sys.stderr)

    report = mc.run_grid(config, progress)
    targets = {"tsv": args.tsv, "json": args.json, "markdown": args.markdown}
    _write_all([(path, mc.emit_table(report, fmt)) for fmt, path in targets.items() if path])
    if not (args.tsv or args.json or args.markdown) or args.format:
        sys.stdout.write(mc.emit_table(report, args.format or "tsv"))
    return 0


# ----------------------------------------------------------------- genesets

def _cmd_genesets(args, parser) -> int:
    matrix, probes, samples = gs.read_expression(args.expr)
    labels = gs.read_labels(args.labels)
    try:
        data = gs.attach_labels(matrix, probes, samples, labels, log2=args.input_scale == "log2")
    except GroupError as exc:
        parser.error(str(exc))
    sets = gs.read_gmt(args.gmt)
    if not args.no_filter:
        data = gs.iqr_filter(data, args.intensity_floor, args.intensity_fraction, args.iqr_floor)
        print(f"{len(data.probe_ids)} probes pass the intensity/IQR filter", file=sys.stderr)
    report = gs.run_genesets(data, sets, alpha=args.alpha, min_size=args.min_size, fdr=not args.no_fdr,
                             test_scale=args.test_scale, workers=args.workers)
    if not report.tested:
        print("warning: no gene set had min_size usable members; nothing was tested", file=sys.stderr)
    for r in report.results:
        if not r.tested:
            print(f"warning: gene set {r.name}: {r.status}", file=sys.stderr)
    _write_all([(args.out, gs.report_tsv(report)), (args.json, gs.report_json(report))])
    sys.stdout.write(gs.summary_text(report))
    if not args.no_fdr and report.tested:
        hits = [r.name for r in report.tested if r.bh_significant.get("fisher")]
        sys.stdout.write("BH-significant (Fisher): " + (", ".join(hits) if hits else "none") + "\n")
    return 0


# ------------------------------------------------------------------- parser

def _probability(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (0.0 < v < 1.0):
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {v}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fishercov", description="Two-sample tests of covariance equality.")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test Sigma1 == Sigma2 for two sample files")
    t.add_argument("x_file", help="samples x variables, comma or tab delimited")
    t.add_argument("y_file")
    t.add_argument("--method", choices=("lc", "clx", "fisher", "all"), default="all")
    t.add_argument("--output", choices=("text", "json"), default="text")
    t.add_argument("--alpha", type=_probability, default=0.05)
    t.add_argument("--out", help="write the report here instead of stdout")

    s = sub.add_parser("sim", help="Monte Carlo size/power tables")
    s.add_argument("--preset", choices=sorted(mc.PRESETS))
    s.add_argument("--config", help="INI file with a [sim] section")
    s.add_argument("--model", nargs="+", choices=MODELS)
    s.add_argument("--alt", nargs="+", choices=ALTERNATIVES)
    s.add_argument("--rho", nargs="+", type=float)
    s.add_argument("--n", nargs="+", type=_positive_int, help="equal group sizes")
    s.add_argument("--n1", type=_positive_int)
    s.add_argument("--n2", type=_positive_int)
    s.add_argument("--p", nargs="+", type=_positive_int)
    s.add_argument("--reps", type=_positive_int)
    s.add_argument("--alpha", type=_probability)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=_positive_int,
                   help=f"process count (default: ${mc.WORKERS_ENV} or 1)")
    s.add_argument("--methods", nargs="+", choices=mc.ALL_METHODS)
    s.add_argument("--freeze-u", action="store_true",
                   help="draw the sparse perturbation once per cell instead of once per replication")
    s.add_argument("--tsv", help="write the TSV table here")
    s.add_argument("--json", help="write the JSON table here")
    s.add_argument("--markdown", help="write the markdown table here")
    s.add_argument("--format", choices=("tsv", "json", "markdown"),
                   help="also print this format to stdout (default tsv when no file is given)")
    s.add_argument("--quiet", action="store_true", help="no per-cell progress on stderr")

    g = sub.add_parser("genesets", help="gene-set covariance screening with BH control")
    g.add_argument("expr", help="probes x samples expression matrix")
    g.add_argument("labels", help="sample id, group tag")
    g.add_argument("gmt", help="gene sets in GMT format")
    g.add_argument("--alpha", type=_probability, default=0.05)
    g.add_argument("--min-size", type=_positive_int, default=10)
    g.add_argument("--no-fdr", action="store_true", help="skip the Benjamini-Hochberg step")
    g.add_argument("--input-scale", choices=("log2", "raw"), default="log2",
                   help="scale of the values in the expression file")
    g.add_argument("--test-scale", choices=("log2", "raw"), default="log2",
                   help="scale the covariance tests run on")
    g.add_argument("--no-filter", action="store_true", help="skip the intensity/IQR probe filter")
    g.add_argument("--intensity-floor", type=_nonneg_float, default=100.0)
    g.add_argument("--intensity-fraction", type=_nonneg_float, default=0.25)
    g.add_argument("--iqr-floor", type=_nonneg_float, default=0.5)
    g.add_argument("--workers", type=_positive_int, default=None)
    g.add_argument("--out", help="per-set TSV report")
    g.add_argument("--json", help="per-set JSON report")
    for sp in (t, s, g):
        sp.set_defaults(subparser=sp)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    sub_parser = args.subparser
    try:
        if args.command == "test":
            return _cmd_test(args)
        if args.command == "sim":
            return _cmd_sim(args, sub_parser)
        if args.workers is None:
            args.workers = mc.default_workers()
        return _cmd_genesets(args, sub_parser)
    except UsageError as exc:
        sub_parser.error(str(exc))
    except (CovTestError, OSError, ValueError, ArithmeticError) as exc:
        print(f"fishercov {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0  # unreachable


if __name__ == "__main__":
    sys.exit(main())
