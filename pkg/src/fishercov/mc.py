"""Monte Carlo size/power harness.

One *cell* is a covariance model/alternative at fixed ``(n1, n2, p)``.
Replication ``r`` of a cell draws its covariance pair and both samples from
``child_rng(seed, r)``, then evaluates every method on that same pair of
samples. Workers only return per-replication p-values; counting happens in
the parent, so the report does not depend on the worker count.
"""

from __future__ import annotations

import configparser
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .clx import clx_test
from .combine import alt_combine, fisher_combine
from .errors import CovTestError, McAbortError, UsageError
from .lc import lc_test
from .matcore import cholesky
from .simgen import (
    CovModelSpec,
    CovPair,
    build_pair,
    child_rng,
    mvn_sample,
    null_covariance,
    sparse_alternative,
)

__all__ = [
    "ALL_METHODS",
    "PRESETS",
    "McConfig",
    "McRow",
    "McReport",
    "RepResult",
    "CellResult",
    "evaluate",
    "replicate",
    "run_cell",
    "run_grid",
    "emit_table",
    "expand_grid",
    "load_config",
    "preset",
    "default_workers",
]

ALL_METHODS = ("fisher", "clx", "lc", "bonferroni", "tippett", "stouffer", "cauchy")
_FAILURE_LIMIT = 0.01
WORKERS_ENV = "FISHERCOV_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class McConfig:
    models: Tuple[CovModelSpec, ...]
    sizes: Tuple[Tuple[int, int], ...] = ((100, 100),)
    reps: int = 1000
    alpha: float = 0.05
    methods: Tuple[str, ...] = ("fisher", "clx", "lc")
    master_seed: int = 0
    workers: int = 1
    freeze_u: bool = False

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "sizes", tuple((int(a), int(b)) for a, b in self.sizes))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.models:
            raise UsageError("no covariance models given")
        if self.reps < 1:
            raise UsageError(f"reps must be >= 1, got {self.reps}")
        if not (0.0 < self.alpha < 1.0):
            raise UsageError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.sizes or any(a < 2 or b < 2 for a, b in self.sizes):
            raise UsageError(f"sample sizes must be >= 2, got {self.sizes}")
        if not self.methods:
            raise UsageError("no methods given")
        unknown = sorted(set(self.methods) - set(ALL_METHODS))
        if unknown:
            raise UsageError(f"unknown methods {unknown}; choose from {', '.join(ALL_METHODS)}")
        if self.workers < 1:
            raise UsageError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class McRow:
    model: str
    alternative: str
    n1: int
    n2: int
    p: int
    method: str
    rejections: int
    reps: int
    rate: float
    mc_stderr: float
    failed: int = 0


@dataclass(frozen=True)
class McReport:
    rows: Tuple[McRow, ...]
    master_seed: int
    alpha: float


@dataclass(frozen=True)
class RepResult:
    index: int
    z: float = math.nan
    m_norm: float = math.nan
    log_p: Dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass(frozen=True)
class CellResult:
    spec: CovModelSpec
    n1: int
    n2: int
    rows: Tuple[McRow, ...]
    reps: Tuple[RepResult, ...]


def evaluate(x, y, methods: Sequence[str] = ALL_METHODS):
    """Run both base tests once and derive every requested combination.

    Returns ``(z, m_norm, {method: log p-value})``.
    """
    lc = lc_test(x, y)
    clx = clx_test(x, y)
    log_p = {}
    for method in methods:
        if method == "lc":
            log_p[method] = lc.p.log_value
        elif method == "clx":
            log_p[method] = clx.p.log_value
        elif method == "fisher":
            log_p[method] = fisher_combine(lc.p, clx.p).p.log_value
        else:
            log_p[method] = alt_combine(method, lc.p, clx.p).p.log_value
    return lc.z, clx.m_norm, log_p


def replicate(spec: CovModelSpec, n1: int, n2: int, seed: int, index: int,
              methods: Sequence[str] = ALL_METHODS, frozen: Optional[CovPair] = None) -> RepResult:
    """Replication ``index`` of a cell; a pure function of its arguments."""
    rng = child_rng(seed, index)
    try:
        pair = build_pair(spec, rng, frozen)
        f1 = cholesky(pair.sigma1)
        f2 = f1 if pair.sigma2 is pair.sigma1 else cholesky(pair.sigma2)
        x = mvn_sample(pair.sigma1, n1, rng, factor=f1)
        y = mvn_sample(pair.sigma2, n2, rng, factor=f2)
        z, m_norm, log_p = evaluate(x, y, methods)
    except (CovTestError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return RepResult(index, error=f"{type(exc).__name__}: {exc}")
    return RepResult(index, z, m_norm, log_p)


def _replicate_block(args):
    spec, n1, n2, seed, indices, methods, frozen = args
    return [replicate(spec, n1, n2, seed, r, methods, frozen) for r in indices]


def _rejects(log_p: float, alpha: float) -> bool:
    if alpha <= 0.0:
        return False
    return log_p <= math.log(alpha)


def _frozen_pair(spec: CovModelSpec, seed: int) -> Optional[CovPair]:
    if spec.alternative != "sparse":
        return None
    # a stream no replication index can reach
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(2**63,)))
    return sparse_alternative(null_covariance(spec, rng), rng)


def run_cell(spec: CovModelSpec, n1: int, n2: int, reps: int, alpha: float,
             methods: Sequence[str] = ("fisher", "clx", "lc"), seed: int = 0,
             workers: int = 1, freeze_u: bool = False) -> CellResult:
    """Estimate rejection rates of ``methods`` for one cell.

    ``alpha`` may be 0 or 1 here, which the sanity checks use. Failed
    replications are excluded from the rates and counted; more than 1%
    failures aborts the cell.
    """
    if reps < 1:
        raise UsageError(f"reps must be >= 1, got {reps}")
    if not (0.0 <= alpha <= 1.0):
        raise UsageError(f"alpha must lie in [0, 1], got {alpha}")
    methods = tuple(methods)
    frozen = _frozen_pair(spec, seed) if freeze_u else None
    if workers <= 1 or reps < 2:
        results = _replicate_block((spec, n1, n2, seed, range(reps), methods, frozen))
    else:
        chunk = math.ceil(reps / (4 * workers))
        blocks = [range(s, min(s + chunk, reps)) for s in range(0, reps, chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_replicate_block, [(spec, n1, n2, seed, b, methods, frozen) for b in blocks])
            results = [r for part in parts for r in part]

    failures = [r for r in results if r.error is not None]
    if len(failures) > _FAILURE_LIMIT * reps:
        sample = "; ".join(f"rep {r.index}: {r.error}" for r in failures[:3])
        raise McAbortError(
            f"{len(failures)}/{reps} replications failed for {spec.model}/{spec.label} "
            f"n=({n1},{n2}) p={spec.p}: {sample}"
        )
    good = [r for r in results if r.error is None]
    rows = []
    for method in methods:
        k = sum(_rejects(r.log_p[method], alpha) for r in good)
        m = len(good)
        rate = k / m if m else math.nan
        stderr = math.sqrt(rate * (1.0 - rate) / m) if m else math.nan
        rows.append(McRow(spec.model, spec.label, n1, n2, spec.p, method, k, m, rate, stderr, len(failures)))
    return CellResult(spec, n1, n2, tuple(rows), tuple(results))


def run_grid(config: McConfig, progress=None) -> McReport:
    rows: List[McRow] = []
    for spec in config.models:
        for n1, n2 in config.sizes:
            cell = run_cell(spec, n1, n2, config.reps, config.alpha, config.methods,
                            config.master_seed, config.workers, config.freeze_u)
            rows.extend(cell.rows)
            if progress is not None:
                progress(cell)
    return McReport(tuple(rows), config.master_seed, config.alpha)


# ---------------------------------------------------------------- rendering

TSV_COLUMNS = ("model", "alternative", "n1", "n2", "p", "method", "rate", "mc_stderr", "reps", "seed")
_DISPLAY = {"fisher": "Fisher", "clx": "CLX", "lc": "LC", "bonferroni": "Bonferroni",
            "tippett": "Tippett", "stouffer": "Stouffer", "cauchy": "Cauchy"}


def _pct(x: float, digits: int = 1) -> str:
    return "nan" if math.isnan(x) else f"{100.0 * x:.{digits}f}"


def _tsv(report: McReport) -> str:
    out = ["\t".join(TSV_COLUMNS)]
    for r in report.rows:
        out.append("\t".join([
            r.model, r.alternative, str(r.n1), str(r.n2), str(r.p), r.method,
            _pct(r.rate), _pct(r.mc_stderr, 2), str(r.reps), str(report.master_seed),
        ]))
    return "\n".join(out) + "\n"


def _json(report: McReport) -> str:
    doc = {
        "schema": "fishercov.mc/1",
        "master_seed": report.master_seed,
        "alpha": report.alpha,
        "rows": [asdict(r) for r in report.rows],
    }
    return json.dumps(doc, indent=2) + "\n"


def _markdown(report: McReport) -> str:
    """One table per (model, alternative): rows are (n, method), columns are p."""
    blocks: Dict[Tuple[str, str], List[McRow]] = {}
    for r in report.rows:
        blocks.setdefault((r.model, r.alternative), []).append(r)
    out = []
    for (model, alt), rows in blocks.items():
        ps = sorted({r.p for r in rows})
        sizes = sorted({(r.n1, r.n2) for r in rows})
        methods = list(dict.fromkeys(r.method for r in rows))
        lookup = {(r.n1, r.n2, r.method, r.p): r for r in rows}
        out.append(f"**{model}, {alt}** (rejection rate %, alpha = {report.alpha:g}, seed {report.master_seed})")
        out.append("")
        out.append("| n | method | " + " | ".join(f"p={p}" for p in ps) + " |")
        out.append("|---|---|" + "---:|" * len(ps))
        for n1, n2 in sizes:
            n_label = str(n1) if n1 == n2 else f"{n1}/{n2}"
            for k, method in enumerate(methods):
                cells = [_pct(lookup[(n1, n2, method, p)].rate) if (n1, n2, method, p) in lookup else ""
                         for p in ps]
                first = n_label if k == 0 else ""
                out.append(f"| {first} | {_DISPLAY.get(method, method)} | " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out)


def emit_table(report: McReport, fmt: str = "tsv") -> str:
    """Render a report as ``tsv``, ``json`` or ``markdown``.

    TSV and markdown print rates as percentages with one decimal; JSON keeps
    the raw fractions and counts.
    """
    if not report.rows:
        raise UsageError("empty report")
    if fmt == "tsv":
        return _tsv(report)
    if fmt == "json":
        return _json(report)
    if fmt in ("markdown", "md"):
        return _markdown(report)
    raise UsageError(f"unknown table format {fmt!r}; choose tsv, json or markdown")


# ------------------------------------------------------------ grid building

def expand_grid(models: Iterable[str], alternatives: Iterable[str], ps: Iterable[int],
                rhos: Iterable[float] = (0.2, 0.3)) -> Tuple[CovModelSpec, ...]:
    """Cartesian grid of cell specs; m1's dense alternative expands over ``rhos``."""
    specs = []
    rhos = tuple(rhos)
    for model in models:
        for alt in alternatives:
            for p in ps:
                if model == "m1" and alt == "dense":
                    specs.extend(CovModelSpec(model, int(p), alt, float(r)) for r in rhos)
                else:
                    specs.append(CovModelSpec(model, int(p), alt))
    return tuple(specs)


FULL_PS = (100, 200, 500, 800, 1000)
FULL_NS = (100, 200)

PRESETS = {
    # Table 1 at the two smallest dimensions
    "paper-table1-desk": dict(models=("m1",), alternatives=("null", "sparse", "dense"), ps=(100, 200), ns=(100,)),
    "paper-table1": dict(models=("m1",), alternatives=("null", "sparse", "dense"), ps=FULL_PS, ns=FULL_NS),
    "paper-tables-desk": dict(models=("m1", "m2", "m3", "m4", "m5"), alternatives=("null", "sparse", "dense"),
                              ps=(100, 200), ns=(100,)),
    "paper-tables": dict(models=("m1", "m2", "m3", "m4", "m5"), alternatives=("null", "sparse", "dense"),
                         ps=FULL_PS, ns=FULL_NS),
}


def preset(name: str, **overrides) -> McConfig:
    try:
        grid = PRESETS[name]
    except KeyError:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    specs = expand_grid(grid["models"], grid["alternatives"], grid["ps"])
    kwargs = dict(models=specs, sizes=tuple((n, n) for n in grid["ns"]))
    kwargs.update(overrides)
    return McConfig(**kwargs)


def _split(value: str) -> List[str]:
    return [v for v in (s.strip() for s in value.replace(",", " ").split()) if v]


def load_config(text_or_path) -> McConfig:
    """Read a simulation config: an INI file with a ``[sim]`` section.

    Keys (all optional except ``models`` and ``p`` unless ``preset`` is set)::

        [sim]
        preset = paper-table1-desk
        models = m1 m2
        alternatives = null sparse dense
        rho = 0.2 0.3
        n = 100 200            ; equal sizes, or use n1/n2
        n1 = 100
        n2 = 120
        p = 100 200
        reps = 1000
        alpha = 0.05
        methods = fisher clx lc
        seed = 42
        workers = 1
        freeze_u = false
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if isinstance(text_or_path, (str, os.PathLike)) and os.path.exists(str(text_or_path)):
        with open(text_or_path) as fh:
            parser.read_file(fh)
    else:
        parser.read_file(io.StringIO(str(text_or_path)))
    if not parser.has_section("sim"):
        raise UsageError("config file needs a [sim] section")
    sec = parser["sim"]
    known = {"preset", "models", "alternatives", "rho", "n", "n1", "n2", "p", "reps", "alpha",
             "methods", "seed", "workers", "freeze_u"}
    extra = sorted(set(sec) - known)
    if extra:
        raise UsageError(f"unknown config keys: {', '.join(extra)}")
    try:
        common = dict(
            reps=sec.getint("reps", 1000),
            alpha=sec.getfloat("alpha", 0.05),
            master_seed=sec.getint("seed", 0),
            workers=sec.getint("workers", default_workers()),
            freeze_u=sec.getboolean("freeze_u", False),
        )
    except ValueError as exc:
        raise UsageError(f"bad config value: {exc}") from None
    if "methods" in sec:
        common["methods"] = tuple(_split(sec["methods"]))
    if "preset" in sec:
        return preset(sec["preset"], **common)
    if "models" not in sec or "p" not in sec:
        raise UsageError("config needs 'models' and 'p' (or a 'preset')")
    try:
        ps = [int(v) for v in _split(sec["p"])]
        rhos = [float(v) for v in _split(sec.get("rho", "0.2 0.3"))]
        if "n" in sec:
            sizes = tuple((int(v), int(v)) for v in _split(sec["n"]))
        else:
            sizes = ((sec.getint("n1", 100), sec.getint("n2", 100)),)
    except ValueError as exc:
        raise UsageError(f"bad config value: {exc}") from None
    specs = expand_grid(_split(sec["models"]), _split(sec.get("alternatives", "null")), ps, rhos)
    return McConfig(models=specs, sizes=sizes, **common)
