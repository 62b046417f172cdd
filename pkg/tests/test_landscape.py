import logging
import math

import numpy as np
import pytest

from rdnovelty.config import RunConfig
from rdnovelty.corpus import select_new_cohort
from rdnovelty.embeddings import ComponentTag, EmbeddingMatrix, InMemoryMatrixStore
from rdnovelty.landscape import (
    LandscapeError,
    build_landscape,
    compute_k,
    matrix_to_csv,
    normalize_scores,
    parse_scores_csv,
    rescore_matrix,
    score_year,
    scores_to_csv,
)
from rdnovelty.lof import PointSet, lof_bruteforce_oracle

from synthdata import corpus_from_objs, record_obj

ANNUAL_NEW_COUNTS = [
    (2010, 1052), (2011, 940), (2012, 990), (2013, 894), (2014, 863),
    (2015, 898), (2016, 728), (2017, 1008), (2018, 830), (2019, 844),
    (2020, 945), (2021, 1127), (2022, 1137),
]
EXPECTED_K = {
    2010: 11, 2011: 20, 2012: 30, 2013: 39, 2014: 47, 2015: 56, 2016: 64,
    2017: 74, 2018: 82, 2019: 90, 2020: 100, 2021: 111, 2022: 123,
}


def small_world(rng, years=(2010, 2011), per_year=(30, 20), dim=6):
    """Corpus + store with per-year cumulative matrices of random vectors."""
    objs = []
    vectors: dict[str, np.ndarray] = {}
    for year, n in zip(years, per_year):
        for i in range(n):
            doc_id = f"Y{year}D{i:03d}"
            objs.append(record_obj(doc_id, year))
            vectors[doc_id] = rng.normal(size=dim)
    corpus = corpus_from_objs(objs)
    store = InMemoryMatrixStore()
    for t in years:
        member_ids = [
            d for y in years if y <= t for d in corpus.year_index.get(y, ())
        ]
        for tag in ComponentTag:
            store.add(
                EmbeddingMatrix.from_rows(
                    t, tag, {d: vectors[d] for d in member_ids}
                )
            )
    return corpus, store


class TestComputeK:
    def test_reference_points(self):
        assert compute_k(4739, 0.01, 2, "nearest") == 47
        assert compute_k(9047, 0.01, 2, "nearest") == 90
        assert compute_k(150, 0.01, 2, "nearest") == 2

    def test_reference_series(self):
        cumulative = 0
        for year, new in ANNUAL_NEW_COUNTS:
            cumulative += new
            assert compute_k(cumulative, 0.01, 2, "nearest") == EXPECTED_K[year]

    def test_floor_mode(self):
        assert compute_k(199, 0.01, 2, "floor") == 2
        assert compute_k(999, 0.01, 2, "floor") == 9

    def test_clamped_to_size_minus_one(self):
        assert compute_k(4, 0.9, 3, "nearest") == 3
        assert compute_k(3, 0.5, 2, "nearest") == 2

    def test_too_small(self):
        with pytest.raises(LandscapeError, match="too small"):
            compute_k(2, 0.01, 2, "nearest")

    def test_bad_args(self):
        with pytest.raises(ValueError):
            compute_k(100, 0.0, 2, "nearest")
        with pytest.raises(ValueError):
            compute_k(100, 0.01, 2, "up")


class TestBuildLandscape:
    def test_first_year_members(self, rng):
        corpus, store = small_world(rng)
        ls = build_landscape(corpus, store, 2010, RunConfig())
        assert len(ls) == 30
        assert ls.k == 2

    def test_cumulative_second_year(self, rng):
        corpus, store = small_world(rng)
        ls = build_landscape(corpus, store, 2011, RunConfig())
        assert len(ls) == 50
        first_year_doc = "Y2010D000"
        assert first_year_doc in ls.member_ids
        # re-presented with the year-2011 model vectors
        expected = store.get(2011, ComponentTag.TITLE).row(first_year_doc)
        assert np.array_equal(ls.matrices[ComponentTag.TITLE].row(first_year_doc), expected)

    def test_reference_counts_2012(self):
        objs = []
        vectors = {}
        rng = np.random.default_rng(5)
        for year, n in ANNUAL_NEW_COUNTS[:3]:
            for i in range(n):
                doc_id = f"D{year}N{i:05d}"
                objs.append(record_obj(doc_id, year))
                vectors[doc_id] = rng.normal(size=4)
        corpus = corpus_from_objs(objs)
        store = InMemoryMatrixStore()
        for tag in ComponentTag:
            store.add(EmbeddingMatrix.from_rows(2012, tag, vectors))
        ls = build_landscape(corpus, store, 2012, RunConfig())
        assert len(ls) == 2982
        assert ls.k == 30

    def test_strict_missing_embeddings(self, rng):
        corpus, store = small_world(rng)
        bare = InMemoryMatrixStore()  # nothing in it
        with pytest.raises(LandscapeError, match="no embeddings"):
            build_landscape(corpus, bare, 2010, RunConfig())

    def test_strict_partial_coverage(self, rng):
        corpus, store = small_world(rng)
        partial = InMemoryMatrixStore()
        for tag in ComponentTag:
            full = store.get(2010, tag)
            rows = {d: full.row(d) for d in full.ids[:-1]}  # drop one doc
            partial.add(EmbeddingMatrix.from_rows(2010, tag, rows))
        with pytest.raises(LandscapeError, match="missing embeddings"):
            build_landscape(corpus, partial, 2010, RunConfig())

    def test_lenient_falls_back_with_warning(self, rng, caplog):
        corpus, store = small_world(rng)
        # year-2011 matrices missing the 2010 docs: lenient run borrows 2010 rows
        partial = InMemoryMatrixStore()
        for tag in ComponentTag:
            partial.add(store.get(2010, tag))
            full = store.get(2011, tag)
            rows = {d: full.row(d) for d in full.ids if d.startswith("Y2011")}
            partial.add(EmbeddingMatrix.from_rows(2011, tag, rows))
        config = RunConfig(strict_embeddings=False)
        with caplog.at_level(logging.WARNING):
            ls = build_landscape(corpus, partial, 2011, config)
        assert len(ls) == 50
        assert any("falling back" in r.message for r in caplog.records)
        expected = store.get(2010, ComponentTag.TITLE).row("Y2010D000")
        assert np.array_equal(ls.matrices[ComponentTag.TITLE].row("Y2010D000"), expected)

    def test_lenient_dim_inconsistency(self, rng):
        corpus, store = small_world(rng)
        broken = InMemoryMatrixStore()
        for tag in ComponentTag:
            rows_2010 = {
                d: rng.normal(size=3)
                for d in corpus.year_index[2010]
            }
            broken.add(EmbeddingMatrix.from_rows(2010, tag, rows_2010))
            full = store.get(2011, tag)
            rows = {d: full.row(d) for d in full.ids if d.startswith("Y2011")}
            broken.add(EmbeddingMatrix.from_rows(2011, tag, rows))
        with pytest.raises(LandscapeError, match="dim inconsistency"):
            build_landscape(corpus, broken, 2011, RunConfig(strict_embeddings=False))

    def test_pca_reduction_applied(self, rng):
        corpus, store = small_world(rng)
        ls = build_landscape(corpus, store, 2010, RunConfig(pca_dim=3))
        assert all(ls.matrices[tag].dim == 3 for tag in ComponentTag)


class TestNormalize:
    def test_basic(self):
        assert list(normalize_scores([2.0, 4.0, 6.0])) == [0.0, 0.5, 1.0]

    def test_degenerate_constant(self):
        assert list(normalize_scores([3.0, 3.0, 3.0])) == [0.0, 0.0, 0.0]

    def test_max_is_exactly_one(self, rng):
        for _ in range(20):
            values = rng.normal(size=rng.integers(2, 30)) * rng.uniform(0.1, 100)
            if values.max() == values.min():
                continue
            normalized = normalize_scores(values)
            assert normalized.max() == 1.0
            assert normalized.min() == 0.0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            normalize_scores([1.0, math.inf])
        with pytest.raises(ValueError, match="empty"):
            normalize_scores([])


class TestScoreYear:
    def test_total_is_mean_and_in_unit_interval(self, rng):
        corpus, store = small_world(rng)
        ls = build_landscape(corpus, store, 2011, RunConfig())
        scores = score_year(corpus, ls)
        assert len(scores) == 50
        for s in scores:
            assert 0.0 <= s.total <= 1.0
            assert abs(s.total - sum(s.normalized) / 4.0) <= 1e-12
            assert all(0.0 <= v <= 1.0 for v in s.normalized)

    def test_reference_total_rows(self):
        # published four-component rows reproduce their published totals
        rows = [
            ((0.1960, 0.3494, 0.3700, 0.8704), 0.4464),
            ((0.4174, 0.1570, 0.3993, 0.7658), 0.4349),
        ]
        for components, total in rows:
            assert abs(sum(components) / 4.0 - total) <= 5e-5

    def test_cohort_flag_matches_select_new_cohort(self, rng):
        corpus, store = small_world(rng)
        ls = build_landscape(corpus, store, 2011, RunConfig())
        scores = score_year(corpus, ls)
        flagged = sorted(s.doc_id for s in scores if s.in_cohort)
        assert flagged == select_new_cohort(corpus, 2011)

    def test_rank_preserved_within_component(self, rng):
        corpus, store = small_world(rng)
        ls = build_landscape(corpus, store, 2010, RunConfig())
        scores = score_year(corpus, ls)
        for ci in range(4):
            raw = [s.raw_lof[ci] for s in scores]
            norm = [s.normalized[ci] for s in scores]
            assert np.array_equal(np.argsort(raw, kind="stable"), np.argsort(norm, kind="stable"))

    def test_identical_vectors_normalize_to_zero(self, rng):
        objs = [record_obj(f"D{i:02d}", 2010) for i in range(8)]
        corpus = corpus_from_objs(objs)
        store = InMemoryMatrixStore()
        same = np.ones(4)
        for tag in ComponentTag:
            store.add(
                EmbeddingMatrix.from_rows(
                    2010, tag, {f"D{i:02d}": same for i in range(8)}
                )
            )
        ls = build_landscape(corpus, store, 2010, RunConfig())
        scores = score_year(corpus, ls)
        assert all(s.normalized == (0.0, 0.0, 0.0, 0.0) for s in scores)
        assert all(s.total == 0.0 for s in scores)

    def test_infinite_lof_capped_before_normalization(self, rng):
        # coincident trio produces infinite densities; outlier keeps max rank
        objs = [record_obj(f"D{i:02d}", 2010) for i in range(6)]
        corpus = corpus_from_objs(objs)
        store = InMemoryMatrixStore()
        base = np.zeros((6, 3))
        base[3] = (0.1, 0.0, 0.0)
        base[4] = (0.0, 0.1, 0.0)
        base[5] = (9.0, 9.0, 9.0)  # lone outlier vs coincident cluster
        for tag in ComponentTag:
            store.add(
                EmbeddingMatrix.from_rows(
                    2010, tag, {f"D{i:02d}": base[i] for i in range(6)}
                )
            )
        ls = build_landscape(corpus, store, 2010, RunConfig())
        scores = score_year(corpus, ls)
        assert all(math.isfinite(v) for s in scores for v in s.normalized)
        assert max(s.normalized[0] for s in scores) == 1.0

    def test_cohort_norm_scope_clamps(self, rng):
        corpus, store = small_world(rng)
        ls = build_landscape(corpus, store, 2011, RunConfig())
        scores = score_year(corpus, ls, norm_scope="cohort")
        for s in scores:
            assert all(0.0 <= v <= 1.0 for v in s.normalized)
        cohort_scores = [s for s in scores if s.in_cohort]
        assert max(v for s in cohort_scores for v in (s.normalized[0],)) == 1.0

    def test_weights(self, rng):
        corpus, store = small_world(rng)
        ls = build_landscape(corpus, store, 2010, RunConfig())
        scores = score_year(corpus, ls, weights=(1.0, 0.0, 0.0, 0.0))
        for s in scores:
            assert s.total == pytest.approx(s.normalized[0], abs=1e-12)


class TestRescoreMatrix:
    def test_entry_shape(self, rng):
        corpus, store = small_world(rng, years=(2010, 2011, 2012), per_year=(12, 9, 8))
        matrix = rescore_matrix(corpus, store, (2010, 2011, 2012), RunConfig())
        assert matrix.years_for("Y2012D000") == (2012,)
        assert matrix.years_for("Y2010D000") == (2010, 2011, 2012)
        for (doc_id, year) in matrix.cells:
            assert year >= corpus.get(doc_id).year

    def test_planted_outlier_novelty_decays(self):
        # year 1: one far outlier; year 2: a cluster lands around it
        rng = np.random.default_rng(3)
        objs, vec1, vec2 = [], {}, {}
        for i in range(30):
            doc_id = f"Y2010D{i:03d}"
            objs.append(record_obj(doc_id, 2010))
            vec1[doc_id] = rng.normal(0.0, 0.5, size=4)
        outlier = "Y2010D000"
        vec1[outlier] = np.full(4, 8.0)
        for i in range(30):
            doc_id = f"Y2011D{i:03d}"
            objs.append(record_obj(doc_id, 2011))
            vec2[doc_id] = np.full(4, 8.0) + rng.normal(0.0, 0.3, size=4)
        corpus = corpus_from_objs(objs)
        store = InMemoryMatrixStore()
        for tag in ComponentTag:
            store.add(EmbeddingMatrix.from_rows(2010, tag, vec1))
            store.add(EmbeddingMatrix.from_rows(2011, tag, {**vec1, **vec2}))
        config = RunConfig()
        matrix = rescore_matrix(corpus, store, (2010, 2011), config)
        first = matrix.score(outlier, 2010).total
        second = matrix.score(outlier, 2011).total
        assert second < first

        # cross-check the raw scores against the literal oracle (k_t = 2 both years)
        for year in (2010, 2011):
            m = store.get(year, ComponentTag.TITLE)
            points = PointSet(ids=m.ids, vectors=m.vectors)
            score = matrix.score(outlier, year)
            oracle = lof_bruteforce_oracle(points, 2)
            idx = points.index_of(outlier)
            assert score.raw_lof[0] == pytest.approx(oracle.lof[idx], rel=1e-9)

    def test_deterministic(self, rng):
        corpus, store = small_world(rng)
        a = rescore_matrix(corpus, store, (2010, 2011), RunConfig())
        b = rescore_matrix(corpus, store, (2010, 2011), RunConfig())
        assert a.cells == b.cells


class TestCsv:
    def test_scores_round_trip(self, rng):
        corpus, store = small_world(rng)
        ls = build_landscape(corpus, store, 2010, RunConfig())
        scores = score_year(corpus, ls)
        text = scores_to_csv(scores, precision=None)
        parsed = parse_scores_csv(text)
        assert [p.doc_id for p in parsed] == [s.doc_id for s in scores]
        for p, s in zip(parsed, scores):
            assert p.total == s.total
            assert p.normalized == s.normalized

    def test_scores_fixed_precision(self, rng):
        corpus, store = small_world(rng)
        ls = build_landscape(corpus, store, 2010, RunConfig())
        text = scores_to_csv(score_year(corpus, ls))
        line = text.splitlines()[1]
        cells = line.split(",")
        assert all(len(c.split(".")[1]) == 4 for c in cells[2:])

    def test_matrix_csv_shape(self, rng):
        corpus, store = small_world(rng, years=(2010, 2011), per_year=(8, 6))
        matrix = rescore_matrix(corpus, store, (2010, 2011), RunConfig())
        text = matrix_to_csv(matrix)
        lines = text.splitlines()
        assert lines[0] == "doc_id,2010,2011"
        assert len(lines) == 1 + 14
        late_doc = next(l for l in lines if l.startswith("Y2011D000"))
        assert late_doc.split(",")[1] == ""  # no score before selection year

    def test_bad_header_rejected(self):
        with pytest.raises(ValueError, match="header"):
            parse_scores_csv("doc,year\nx,1\n")
