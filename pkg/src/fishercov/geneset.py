"""Gene-set differential-covariance screening.

Pipeline: read a probes x samples expression matrix, two-group sample labels
and a GMT file; keep probes that are both bright and variable; for every gene
set with enough surviving members, test equality of the two groups'
covariance matrices restricted to the set; apply Benjamini-Hochberg across
the sets actually tested.

Expression files are probes x samples. Tests run on samples x probes, so
the per-set matrices are transposed here and nowhere else.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .clx import clx_test
from .combine import alt_combine, fisher_combine
from .errors import CovTestError, DomainError, InsufficientDataError
from .lc import lc_test

logger = logging.getLogger(__name__)

__all__ = [
    "REPORT_METHODS",
    "ParseError",
    "EmptyResultError",
    "GroupError",
    "ExpressionData",
    "GeneSet",
    "GeneSetCollection",
    "GeneSetResult",
    "GeneSetReport",
    "read_expression",
    "read_labels",
    "read_gmt",
    "write_study",
    "attach_labels",
    "iqr_filter",
    "split_groups",
    "run_genesets",
    "bh_fdr",
    "report_tsv",
    "report_json",
    "summary_text",
    "synthetic_study",
]

REPORT_METHODS = ("clx", "lc", "bonferroni", "fisher")


class ParseError(CovTestError, ValueError):
    """An input file could not be parsed; carries the 1-based line number."""

    def __init__(self, path, line, message):
        self.path, self.line = path, line
        super().__init__(f"{path}:{line}: {message}")


class EmptyResultError(CovTestError, ValueError):
    pass


class GroupError(CovTestError, ValueError):
    """Labels do not define exactly two non-empty groups."""


@dataclass(frozen=True)
class ExpressionData:
    matrix: np.ndarray  # probes x samples
    probe_ids: Tuple[str, ...]
    sample_ids: Tuple[str, ...]
    group_labels: Tuple[str, ...]
    log2: bool = True  # values already on the log2 scale

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        for name in ("probe_ids", "sample_ids", "group_labels"):
            object.__setattr__(self, name, tuple(str(v) for v in getattr(self, name)))
        if m.ndim != 2 or m.shape != (len(self.probe_ids), len(self.sample_ids)):
            raise ValueError(
                f"matrix shape {m.shape} does not match {len(self.probe_ids)} probes x "
                f"{len(self.sample_ids)} samples"
            )
        if len(self.group_labels) != len(self.sample_ids):
            raise ValueError("one group label per sample is required")
        if len(set(self.probe_ids)) != len(self.probe_ids):
            raise ValueError("probe ids are not unique")
        groups = sorted(set(self.group_labels))
        if len(groups) != 2:
            raise GroupError(f"expected exactly two groups, found {len(groups)}: {groups}")

    @property
    def groups(self) -> Tuple[str, str]:
        a, b = sorted(set(self.group_labels))
        return a, b

    def group_mask(self, group: str) -> np.ndarray:
        return np.array([g == group for g in self.group_labels])

    def subset_probes(self, keep: np.ndarray) -> "ExpressionData":
        ids = tuple(p for p, k in zip(self.probe_ids, keep) if k)
        return ExpressionData(self.matrix[keep], ids, self.sample_ids, self.group_labels, self.log2)


@dataclass(frozen=True)
class GeneSet:
    name: str
    description: str
    members: Tuple[str, ...]


@dataclass(frozen=True)
class GeneSetCollection:
    sets: Tuple[GeneSet, ...]

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(self.sets))
        seen = set()
        for s in self.sets:
            if s.name in seen:
                raise ValueError(f"duplicate gene-set name {s.name!r}")
            seen.add(s.name)

    def __len__(self):
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)


@dataclass
class GeneSetResult:
    name: str
    size_used: int
    n_unknown: int
    n_constant_dropped: int = 0
    status: str = "ok"
    lc_z: float = math.nan
    clx_m: float = math.nan
    p_lc: float = math.nan
    p_clx: float = math.nan
    p_fisher: float = math.nan
    p_bonferroni: float = math.nan
    significant: Dict[str, bool] = field(default_factory=dict)
    bh_significant: Dict[str, bool] = field(default_factory=dict)

    @property
    def tested(self) -> bool:
        return self.status == "ok"

    def pvalue(self, method: str) -> float:
        return getattr(self, f"p_{method}")


@dataclass
class GeneSetReport:
    results: List[GeneSetResult]
    excluded: List[Tuple[str, int]]  # (name, usable members) below min_size
    alpha: float
    min_size: int
    fdr: bool = True

    @property
    def tested(self) -> List[GeneSetResult]:
        return [r for r in self.results if r.tested]

    def counts(self) -> Dict[str, Dict[str, int]]:
        tested = self.tested
        out = {"significant": {}, "bh_significant": {}}
        for m in REPORT_METHODS:
            out["significant"][m] = sum(r.significant.get(m, False) for r in tested)
            out["bh_significant"][m] = sum(r.bh_significant.get(m, False) for r in tested)
        return out


# ------------------------------------------------------------------ parsing

def _sniff_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def read_expression(path, log2: bool = True):
    """Read a probes x samples matrix.

    First row: a corner cell then sample ids. Each later row: probe id then
    one value per sample. Comma or tab separated.

    Returns ``(matrix, probe_ids, sample_ids)``; pass them with the labels to
    :func:`attach_labels`.
    """
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.strip():
            raise ParseError(path, 1, "missing header row")
        delim = _sniff_delimiter(first)
        header = next(csv.reader([first], delimiter=delim))
        sample_ids = [h.strip() for h in header[1:]]
        if not sample_ids:
            raise ParseError(path, 1, "header names no samples")
        probes, rows = [], []
        for lineno, row in enumerate(csv.reader(fh, delimiter=delim), start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != len(sample_ids) + 1:
                raise ParseError(path, lineno, f"expected {len(sample_ids) + 1} fields, got {len(row)}")
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError(path, lineno, "non-finite value")
            probes.append(row[0].strip())
            rows.append(values)
    if not rows:
        raise ParseError(path, 2, "no probe rows")
    if len(set(probes)) != len(probes):
        dup = next(p for p in probes if probes.count(p) > 1)
        raise ParseError(path, probes.index(dup) + 2, f"duplicate probe id {dup!r}")
    return np.array(rows), tuple(probes), tuple(sample_ids)


def read_labels(path) -> Dict[str, str]:
    """Two-column ``sample_id, group`` file. A leading ``sample...`` header is skipped."""
    labels: Dict[str, str] = {}
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise ParseError(path, 1, "empty labels file")
    delim = _sniff_delimiter(lines[0])
    for lineno, row in enumerate(csv.reader(lines, delimiter=delim), start=1):
        if not row or not row[0].strip() or row[0].startswith("#"):
            continue
        if len(row) < 2:
            raise ParseError(path, lineno, "expected 'sample<delim>group'")
        sample, group = row[0].strip(), row[1].strip()
        if lineno == 1 and sample.lower() in ("sample", "sample_id", "sampleid", "id"):
            continue
        if sample in labels and labels[sample] != group:
            raise ParseError(path, lineno, f"sample {sample!r} labelled twice")
        labels[sample] = group
    return labels


def read_gmt(path) -> GeneSetCollection:
    """GMT: ``name<TAB>description<TAB>member...`` per line."""
    sets, seen = [], {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) < 2 or not fields[0].strip():
                raise ParseError(path, lineno, "GMT line needs at least a name and a description")
            name = fields[0].strip()
            if name in seen:
                raise ParseError(path, lineno, f"duplicate gene-set name {name!r} (first on line {seen[name]})")
            seen[name] = lineno
            members = tuple(dict.fromkeys(m.strip() for m in fields[2:] if m.strip()))
            sets.append(GeneSet(name, fields[1], members))
    return GeneSetCollection(tuple(sets))


def attach_labels(matrix, probe_ids, sample_ids, labels: Mapping[str, str], log2: bool = True) -> ExpressionData:
    missing = [s for s in sample_ids if s not in labels]
    if missing:
        raise GroupError(f"{len(missing)} samples have no group label, e.g. {missing[0]!r}")
    return ExpressionData(matrix, probe_ids, sample_ids, tuple(labels[s] for s in sample_ids), log2)


def write_study(data: ExpressionData, sets: GeneSetCollection, directory) -> Tuple[str, str, str]:
    """Write ``data`` and ``sets`` as expression CSV, labels TSV and GMT files.

    Returns the three paths in that order.
    """
    expr = os.path.join(directory, "expression.csv")
    labels = os.path.join(directory, "labels.tsv")
    gmt = os.path.join(directory, "sets.gmt")
    with open(expr, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["probe", *data.sample_ids])
        for pid, row in zip(data.probe_ids, data.matrix):
            w.writerow([pid, *(repr(float(v)) for v in row)])
    with open(labels, "w") as fh:
        fh.write("sample\tgroup\n")
        fh.writelines(f"{s}\t{g}\n" for s, g in zip(data.sample_ids, data.group_labels))
    with open(gmt, "w") as fh:
        fh.writelines("\t".join([g.name, g.description, *g.members]) + "\n" for g in sets)
    return expr, labels, gmt


# ---------------------------------------------------------------- filtering

def iqr_filter(data: ExpressionData, intensity_floor: float = 100.0,
               intensity_fraction: float = 0.25, iqr_floor: float = 0.5) -> ExpressionData:
    """Keep probes that are bright in enough samples and variable on the log2 scale.

    A probe survives when its absolute-scale intensity exceeds
    ``intensity_floor`` in at least ``intensity_fraction`` of the samples and
    the interquartile range of its log2 values exceeds ``iqr_floor``.
    """
    if min(intensity_floor, intensity_fraction, iqr_floor) < 0:
        raise ValueError("filter thresholds must be non-negative")
    m = data.matrix
    if data.log2:
        absolute, logged = np.exp2(m), m
    else:
        if np.any(m <= 0):
            raise ValueError("absolute-scale intensities must be positive to take log2")
        absolute, logged = m, np.log2(m)
    bright = (absolute > intensity_floor).mean(axis=1) >= intensity_fraction
    q75, q25 = np.percentile(logged, [75, 25], axis=1)
    keep = bright & ((q75 - q25) > iqr_floor)
    if not keep.any():
        raise EmptyResultError("no probe passed the intensity and IQR filter")
    return data.subset_probes(keep)


# ------------------------------------------------------------------ testing

def split_groups(data: ExpressionData, rows: Sequence[int], test_scale: str = "log2"):
    """Per-group samples x probes matrices for the probe rows ``rows``."""
    values = data.matrix[np.asarray(rows, dtype=int)]
    if test_scale == "log2" and not data.log2:
        values = np.log2(values)
    elif test_scale == "raw" and data.log2:
        values = np.exp2(values)
    elif test_scale not in ("log2", "raw"):
        raise ValueError(f"test_scale must be 'log2' or 'raw', got {test_scale!r}")
    g1, g2 = data.groups
    return values[:, data.group_mask(g1)].T, values[:, data.group_mask(g2)].T


def _test_one(data, gset, index, min_size, alpha, test_scale):
    rows = [index[m] for m in gset.members if m in index]
    n_unknown = len(gset.members) - len(rows)
    if len(rows) < min_size:
        return None, (gset.name, len(rows))
    x, y = split_groups(data, rows, test_scale)
    constant = (np.ptp(x, axis=0) == 0) | (np.ptp(y, axis=0) == 0)
    n_const = int(constant.sum())
    result = GeneSetResult(gset.name, len(rows) - n_const, n_unknown, n_const)
    if n_const:
        logger.warning("gene set %s: dropped %d probe(s) constant within a group", gset.name, n_const)
        x, y = x[:, ~constant], y[:, ~constant]
    if result.size_used < min_size:
        result.status = f"error: {result.size_used} non-constant probes left, below min_size {min_size}"
        return result, None
    try:
        lc = lc_test(x, y)
        clx = clx_test(x, y)
    except CovTestError as exc:
        result.status = f"error: {exc}"
        return result, None
    result.lc_z, result.clx_m = lc.z, clx.m
    result.p_lc, result.p_clx = lc.p.value, clx.p.value
    result.p_fisher = fisher_combine(lc.p, clx.p).p.value
    result.p_bonferroni = alt_combine("bonferroni", lc.p, clx.p).p.value
    result.significant = {m: result.pvalue(m) <= alpha for m in REPORT_METHODS}
    return result, None


def run_genesets(data: ExpressionData, sets: GeneSetCollection, alpha: float = 0.05,
                 min_size: int = 10, fdr: bool = True, test_scale: str = "log2",
                 workers: int = 1) -> GeneSetReport:
    """Test every gene set with at least ``min_size`` probes present in ``data``.

    Sets below ``min_size`` are listed in ``report.excluded``. Probes constant
    within a group are dropped from that set only; a set left below
    ``min_size``, or one whose test fails, is reported with an ``error``
    status and left out of the FDR step.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    g1, g2 = data.groups
    n1, n2 = int(data.group_mask(g1).sum()), int(data.group_mask(g2).sum())
    if min(n1, n2) < 4:
        raise InsufficientDataError(f"each group needs at least 4 samples, got {n1} and {n2}")
    index = {p: i for i, p in enumerate(data.probe_ids)}

    def work(gset):
        return _test_one(data, gset, index, min_size, alpha, test_scale)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, sets))  # map() keeps input order
    else:
        outcomes = [work(s) for s in sets]
    results = [r for r, _ in outcomes if r is not None]
    excluded = [e for _, e in outcomes if e is not None]

    tested = [r for r in results if r.tested]
    for r in results:
        r.bh_significant = {m: False for m in REPORT_METHODS}
    if fdr and tested:
        for m in REPORT_METHODS:
            flags = bh_fdr([r.pvalue(m) for r in tested], alpha)
            for r, f in zip(tested, flags):
                r.bh_significant[m] = bool(f)
    if not tested:
        logger.warning("no gene set was tested (%d excluded below min_size %d)", len(excluded), min_size)
    return GeneSetReport(results, excluded, alpha, min_size, fdr)


def bh_fdr(pvals, alpha: float = 0.05) -> np.ndarray:
    """Benjamini-Hochberg step-up rejections, in input order.

    With ``k`` the largest rank such that ``p_(k) <= k alpha / m``, every
    hypothesis with ``p <= p_(k)`` is rejected.
    """
    p = np.asarray(pvals, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("need at least one p-value")
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise DomainError("p-values must lie in [0, 1]")
    m = p.size
    ordered = np.sort(p)
    passed = np.flatnonzero(ordered <= alpha * np.arange(1, m + 1) / m)
    if passed.size == 0:
        return np.zeros(m, dtype=bool)
    return p <= ordered[passed[-1]]


# ---------------------------------------------------------------- reporting

TSV_FIELDS = ("name", "size_used", "n_unknown", "n_constant_dropped", "status", "lc_z", "clx_m",
              "p_lc", "p_clx", "p_fisher", "p_bonferroni")


def _fmt(v) -> str:
    if isinstance(v, float):
        return "NA" if math.isnan(v) else repr(v)
    return str(v)


def report_tsv(report: GeneSetReport) -> str:
    head = list(TSV_FIELDS) + [f"sig_{m}" for m in REPORT_METHODS] + [f"bh_{m}" for m in REPORT_METHODS]
    lines = ["\t".join(head)]
    for r in report.results:
        vals = [_fmt(getattr(r, f)) for f in TSV_FIELDS]
        vals += [str(int(r.significant.get(m, False))) for m in REPORT_METHODS]
        vals += [str(int(r.bh_significant.get(m, False))) for m in REPORT_METHODS]
        lines.append("\t".join(vals))
    return "\n".join(lines) + "\n"


def report_json(report: GeneSetReport) -> str:
    """JSON document ``fishercov.genesets/1``.

    ``{"schema", "alpha", "min_size", "fdr", "summary": {"tested", "excluded",
    "errors", "significant": {method: count}, "bh_significant": {...}},
    "excluded": [{"name", "usable"}], "results": [GeneSetResult fields]}``;
    missing p-values are ``null``.
    """
    def clean(d):
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}

    doc = {
        "schema": "fishercov.genesets/1",
        "alpha": report.alpha,
        "min_size": report.min_size,
        "fdr": report.fdr,
        "summary": _summary_dict(report),
        "excluded": [{"name": n, "usable": k} for n, k in report.excluded],
        "results": [clean(asdict(r)) for r in report.results],
    }
    return json.dumps(doc, indent=2) + "\n"


def _summary_dict(report: GeneSetReport) -> dict:
    counts = report.counts()
    return {
        "tested": len(report.tested),
        "excluded": len(report.excluded),
        "errors": sum(not r.tested for r in report.results),
        **counts,
    }


def summary_text(report: GeneSetReport) -> str:
    s = _summary_dict(report)
    names = {"clx": "CLX", "lc": "LC", "bonferroni": "Bonferroni", "fisher": "Fisher"}
    lines = [
        f"gene sets tested: {s['tested']}  (excluded below min_size {report.min_size}: {s['excluded']}, "
        f"errors: {s['errors']})",
        "method       significant at alpha={:g}   BH-significant".format(report.alpha),
    ]
    for m in REPORT_METHODS:
        bh = s["bh_significant"][m] if report.fdr else "-"
        lines.append(f"{names[m]:<12} {s['significant'][m]:>24}   {bh:>14}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- synthetic

def synthetic_study(rng: np.random.Generator, n_null: int = 20, n_planted: int = 5, set_size: int = 20,
                    n1: int = 40, n2: int = 40, spike: float = 2.5, n_background: int = 50,
                    base_log2: float = 8.0):
    """Two-group log2 expression data with planted differential-covariance sets.

    Every probe is ``base_log2 + N(0, 1)`` independently, except that in each
    planted set the first two probes of group 2 share an extra ``spike * f``
    term, ``f ~ N(0, 1)``: their covariance becomes ``spike^2`` instead of 0.
    Sets do not overlap; ``n_background`` probes belong to no set.

    Returns ``(data, sets, planted_names)``.
    """
    if spike < 0:
        raise ValueError(f"spike must be non-negative, got {spike}")
    n_sets = n_null + n_planted
    p = n_sets * set_size + n_background
    values = rng.standard_normal((p, n1 + n2))
    names, planted = [], []
    gsets = []
    for k in range(n_sets):
        is_planted = k >= n_null
        name = f"planted_{k - n_null:02d}" if is_planted else f"null_{k:02d}"
        rows = range(k * set_size, (k + 1) * set_size)
        if is_planted:
            a, b = rows[0], rows[1]
            factor = spike * rng.standard_normal(n2)
            values[a, n1:] += factor
            values[b, n1:] += factor
            planted.append(name)
        gsets.append(GeneSet(name, "synthetic", tuple(f"probe{r:05d}" for r in rows)))
        names.append(name)
    probes = tuple(f"probe{r:05d}" for r in range(p))
    samples = tuple(f"s{j:03d}" for j in range(n1 + n2))
    labels = ("g1",) * n1 + ("g2",) * n2
    data = ExpressionData(values + base_log2, probes, samples, labels, log2=True)
    return data, GeneSetCollection(tuple(gsets)), planted
