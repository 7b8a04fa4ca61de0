import json
import logging
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fishercov import geneset as gs
from fishercov.clx import clx_test
from fishercov.errors import DomainError, InsufficientDataError
from fishercov.lc import lc_test

from oracles import naive_bh


def _data(values, log2=False, groups=("a", "b")):
    values = np.asarray(values, dtype=float)
    k = values.shape[1]
    labels = [groups[0]] * (k // 2) + [groups[1]] * (k - k // 2)
    return gs.ExpressionData(values, [f"p{i}" for i in range(len(values))], [f"s{j}" for j in range(k)], labels, log2)


@pytest.fixture
def study():
    return gs.synthetic_study(np.random.default_rng(3), n_null=6, n_planted=2, set_size=12, n_background=5)


class TestExpressionData:
    def test_two_groups_required(self):
        with pytest.raises(gs.GroupError):
            _data(np.ones((2, 4)), groups=("a", "a"))
        with pytest.raises(gs.GroupError):
            gs.ExpressionData(np.ones((1, 3)), ["p"], ["s1", "s2", "s3"], ["a", "b", "c"])

    def test_unique_probes(self):
        with pytest.raises(ValueError, match="unique"):
            gs.ExpressionData(np.ones((2, 2)), ["p", "p"], ["s1", "s2"], ["a", "b"])

    def test_shape(self):
        with pytest.raises(ValueError, match="shape"):
            gs.ExpressionData(np.ones((2, 2)), ["p"], ["s1", "s2"], ["a", "b"])

    def test_groups_sorted(self):
        d = _data(np.ones((1, 4)), groups=("tumour", "normal"))
        assert d.groups == ("normal", "tumour")


class TestParsers:
    def test_expression_csv_and_tsv(self, tmp_path):
        for delim in (",", "\t"):
            path = tmp_path / f"e{ord(delim)}.txt"
            path.write_text(delim.join(["probe", "s1", "s2"]) + "\n" + delim.join(["a", "1", "2"]) + "\n\n"
                            + delim.join(["b", "3", "4.5"]) + "\n")
            m, probes, samples = gs.read_expression(path)
            np.testing.assert_array_equal(m, [[1, 2], [3, 4.5]])
            assert probes == ("a", "b") and samples == ("s1", "s2")

    @pytest.mark.parametrize("body, line", [
        ("probe,s1,s2\na,1,2\nb,1\n", 3),
        ("probe,s1,s2\na,1,x\n", 2),
        ("probe,s1,s2\na,1,2\na,3,4\n", 2),
        ("probe,s1,s2\na,1,nan\n", 2),
    ])
    def test_expression_errors_name_line(self, tmp_path, body, line):
        path = tmp_path / "e.csv"
        path.write_text(body)
        with pytest.raises(gs.ParseError) as err:
            gs.read_expression(path)
        assert err.value.line == line
        assert f":{line}:" in str(err.value)

    def test_labels(self, tmp_path):
        path = tmp_path / "l.tsv"
        path.write_text("sample\tgroup\ns1\tB\n# comment\ns2\tT\n")
        assert gs.read_labels(path) == {"s1": "B", "s2": "T"}

    def test_labels_conflict(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("s1,B\ns1,T\n")
        with pytest.raises(gs.ParseError):
            gs.read_labels(path)

    def test_attach_missing_label(self):
        with pytest.raises(gs.GroupError, match="no group label"):
            gs.attach_labels(np.ones((1, 2)), ["p"], ["s1", "s2"], {"s1": "a"})

    def test_gmt(self, tmp_path):
        path = tmp_path / "s.gmt"
        path.write_text("SET1\tdesc\ta\tb\tb\n\nSET2\t\tc\n")
        sets = gs.read_gmt(path)
        assert [s.name for s in sets] == ["SET1", "SET2"]
        assert sets.sets[0].members == ("a", "b")

    def test_gmt_duplicate(self, tmp_path):
        path = tmp_path / "s.gmt"
        path.write_text("S\td\ta\nT\td\tb\nS\td\tc\n")
        with pytest.raises(gs.ParseError, match="duplicate") as err:
            gs.read_gmt(path)
        assert err.value.line == 3

    def test_gmt_unparseable(self, tmp_path):
        path = tmp_path / "s.gmt"
        path.write_text("S\td\ta\njustaname\n")
        with pytest.raises(gs.ParseError) as err:
            gs.read_gmt(path)
        assert err.value.line == 2


class TestFilter:
    def test_dim_probe_dropped(self):
        d = _data([[50.0] * 8, [150, 300, 200, 600, 180, 400, 250, 700]])
        assert gs.iqr_filter(d).probe_ids == ("p1",)

    def test_constant_probe_dropped(self):
        d = _data([[200.0] * 8, [150, 300, 200, 600, 180, 400, 250, 700]])
        assert gs.iqr_filter(d).probe_ids == ("p1",)

    def test_spread_probe_kept(self):
        logs = np.array([7.0, 7.0, 7.0, 7.0, 8.0, 8.0, 8.0, 8.0])
        q75, q25 = np.percentile(logs, [75, 25])
        assert q75 - q25 == pytest.approx(1.0)
        d = _data([2.0 ** logs, [50.0] * 8])
        assert gs.iqr_filter(d).probe_ids == ("p0",)

    def test_scale_flag_equivalent(self):
        rng = np.random.default_rng(0)
        raw = 2.0 ** rng.normal(7, 1, size=(50, 10))
        a = gs.iqr_filter(_data(raw, log2=False))
        b = gs.iqr_filter(_data(np.log2(raw), log2=True))
        assert a.probe_ids == b.probe_ids

    def test_fraction_threshold(self):
        # bright in exactly 2 of 8 samples: 25% passes, 37.5% does not
        row = [50, 50, 50, 50, 50, 50, 400, 800]
        d = _data([row, row])
        assert len(gs.iqr_filter(d, intensity_fraction=0.25, iqr_floor=0.0).probe_ids) == 2
        with pytest.raises(gs.EmptyResultError):
            gs.iqr_filter(d, intensity_fraction=0.375, iqr_floor=0.0)

    def test_empty(self):
        with pytest.raises(gs.EmptyResultError):
            gs.iqr_filter(_data([[10.0] * 8]))

    def test_non_positive_raw(self):
        with pytest.raises(ValueError):
            gs.iqr_filter(_data([[0.0] * 8]))


class TestRun:
    def test_min_size_exclusion(self):
        d, _, _ = gs.synthetic_study(np.random.default_rng(0), n_null=1, n_planted=0, set_size=9, n_background=0)
        sets = gs.GeneSetCollection((gs.GeneSet("nine", "", d.probe_ids + ("missing",)),))
        report = gs.run_genesets(d, sets, min_size=10)
        assert report.results == [] and report.excluded == [("nine", 9)]
        report = gs.run_genesets(d, sets, min_size=9)
        assert report.results[0].n_unknown == 1 and report.results[0].size_used == 9

    def test_constant_probe_dropped_locally(self, study, caplog):
        d, sets, _ = study
        m = d.matrix.copy()
        g1 = d.group_mask(d.groups[0])
        m[0, g1] = 8.0  # first probe of the first set is constant in group 1
        d2 = gs.ExpressionData(m, d.probe_ids, d.sample_ids, d.group_labels, True)
        with caplog.at_level(logging.WARNING, logger="fishercov.geneset"):
            report = gs.run_genesets(d2, sets, min_size=10)
        first = report.results[0]
        assert first.n_constant_dropped == 1 and first.size_used == 11 and first.tested
        assert "constant" in caplog.text
        report = gs.run_genesets(d2, sets, min_size=12)
        assert report.results[0].status.startswith("error")
        assert not report.results[0].bh_significant["fisher"]
        assert len(report.tested) == len(sets) - 1

    def test_matches_direct_tests(self, study):
        d, sets, _ = study
        report = gs.run_genesets(d, sets, min_size=10)
        index = {p: i for i, p in enumerate(d.probe_ids)}
        g1, g2 = d.groups
        for gset, res in zip(sets, report.results):
            rows = [index[m] for m in gset.members]
            x = d.matrix[rows][:, d.group_mask(g1)].T
            y = d.matrix[rows][:, d.group_mask(g2)].T
            assert res.p_lc == lc_test(x, y).p.value
            assert res.p_clx == clx_test(x, y).p.value

    def test_order_independent(self, study):
        d, sets, _ = study
        base = {r.name: (r.p_fisher, r.significant, r.bh_significant) for r in gs.run_genesets(d, sets).results}
        shuffled = list(sets)
        random.Random(1).shuffle(shuffled)
        report = gs.run_genesets(d, gs.GeneSetCollection(tuple(shuffled)))
        assert [r.name for r in report.results] == [s.name for s in shuffled]
        assert {r.name: (r.p_fisher, r.significant, r.bh_significant) for r in report.results} == base

    def test_threads_keep_order(self, study):
        d, sets, _ = study
        serial = gs.run_genesets(d, sets)
        threaded = gs.run_genesets(d, sets, workers=3)
        assert [r.name for r in threaded.results] == [r.name for r in serial.results]
        assert [r.p_fisher for r in threaded.results] == [r.p_fisher for r in serial.results]

    def test_invariants(self, study):
        d, sets, _ = study
        report = gs.run_genesets(d, sets, min_size=10)
        for r in report.results:
            for m in gs.REPORT_METHODS:
                assert 0.0 <= r.pvalue(m) <= 1.0
                if r.bh_significant[m]:
                    assert r.size_used >= report.min_size

    def test_small_groups(self):
        d = _data(np.random.default_rng(0).normal(8, 1, (12, 6)), log2=True)
        with pytest.raises(InsufficientDataError):
            gs.run_genesets(d, gs.GeneSetCollection(()))

    def test_raw_scale_input_tested_on_log2(self, study):
        d, sets, _ = study
        raw = gs.ExpressionData(2.0 ** d.matrix, d.probe_ids, d.sample_ids, d.group_labels, log2=False)
        a = gs.run_genesets(d, sets).results
        b = gs.run_genesets(raw, sets).results
        np.testing.assert_allclose([r.p_fisher for r in a], [r.p_fisher for r in b], rtol=1e-8)

    def test_null_fisher_uniform(self):
        d, sets, _ = gs.synthetic_study(np.random.default_rng(0), n_null=200, n_planted=0, set_size=20,
                                        n1=60, n2=60, n_background=0)
        p = np.sort([r.p_fisher for r in gs.run_genesets(d, sets).results])
        k = np.arange(1, p.size + 1) / p.size
        assert max(np.max(k - p), np.max(p - k + 1 / p.size)) <= 0.1

    def test_planted_spike(self):
        wins = clx_small = 0
        for t in range(200):
            d, sets, _ = gs.synthetic_study(np.random.default_rng(t), n_null=0, n_planted=1, set_size=20,
                                            n1=60, n2=60, n_background=0)
            r = gs.run_genesets(d, sets).results[0]
            wins += r.p_fisher <= r.p_lc
            clx_small += r.p_clx <= 0.05
        assert wins >= 160 and clx_small >= 160


class TestBH:
    def test_example(self):
        assert list(gs.bh_fdr([0.01, 0.02, 0.04, 0.5], 0.05)) == [True, True, False, False]

    def test_all_ones(self):
        assert not gs.bh_fdr([1.0] * 5).any()

    @pytest.mark.parametrize("p", [0.03, 0.05, 0.07])
    def test_single(self, p):
        assert gs.bh_fdr([p], 0.05)[0] == (p <= 0.05)

    def test_ties(self):
        assert list(gs.bh_fdr([0.03, 0.03, 0.03, 0.9], 0.05)) == [True, True, True, False]

    @pytest.mark.parametrize("bad", [[], [0.1, 1.2], [np.nan], [-0.1]])
    def test_invalid(self, bad):
        with pytest.raises((DomainError, ValueError)):
            gs.bh_fdr(bad)

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0.001, 0.5))
    def test_oracle(self, p, alpha):
        assert list(gs.bh_fdr(p, alpha)) == naive_bh(p, alpha)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.data())
    def test_monotone(self, p, data):
        i = data.draw(st.integers(0, len(p) - 1))
        lowered = list(p)
        lowered[i] = data.draw(st.floats(0, p[i]))
        before, after = gs.bh_fdr(p), gs.bh_fdr(lowered)
        assert np.all(after[before])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
    def test_dominates_bonferroni(self, p):
        assert gs.bh_fdr(p).sum() >= sum(v <= 0.05 / len(p) for v in p)


class TestReports:
    def test_tsv_json_summary(self, study):
        d, sets, planted = study
        report = gs.run_genesets(d, sets)
        lines = gs.report_tsv(report).splitlines()
        assert len(lines) == len(sets) + 1
        head = lines[0].split("\t")
        assert head[:2] == ["name", "size_used"] and "bh_fisher" in head
        doc = json.loads(gs.report_json(report))
        assert doc["schema"] == "fishercov.genesets/1"
        assert doc["summary"]["tested"] == len(sets)
        assert [r["name"] for r in doc["results"]] == [s.name for s in sets]
        text = gs.summary_text(report)
        assert f"gene sets tested: {len(sets)}" in text
        assert "Fisher" in text and "Bonferroni" in text

    def test_error_rows_are_null(self, study):
        d, sets, _ = study
        m = d.matrix.copy()
        m[:12, d.group_mask(d.groups[0])] = 8.0
        d2 = gs.ExpressionData(m, d.probe_ids, d.sample_ids, d.group_labels, True)
        report = gs.run_genesets(d2, sets)
        doc = json.loads(gs.report_json(report))
        assert doc["results"][0]["p_fisher"] is None and doc["summary"]["errors"] == 1
        assert "\tNA\t" in gs.report_tsv(report).splitlines()[1]
