"""Acceptance suite: every release criterion at its pinned tolerance.

Each test prints one [PASS]/[FAIL] line (run with -s to watch them live).
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from rdnovelty.cli import main
from rdnovelty.landscape import compute_k, parse_scores_csv
from rdnovelty.lof import (
    PointSet,
    lof_batch,
    lof_bruteforce_oracle,
    max_relative_deviation,
)
from rdnovelty.validation import IndicatorSample, mann_whitney_u, mwu_permutation_oracle

from synthdata import make_synthetic_workspace


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


ANNUAL_NEW_COUNTS = [
    (2010, 1052), (2011, 940), (2012, 990), (2013, 894), (2014, 863),
    (2015, 898), (2016, 728), (2017, 1008), (2018, 830), (2019, 844),
    (2020, 945), (2021, 1127), (2022, 1137),
]


@pytest.fixture(scope="module")
def random_fixture():
    rng = np.random.default_rng(20260810)
    ids = tuple(f"r{i:03d}" for i in range(200))
    return PointSet(ids=ids, vectors=rng.normal(size=(200, 10)))


def test_lof_oracle_equivalence(random_fixture):
    with criterion("lof-oracle-equivalence (n=200, dims=10, k in {2,5,20}, both tie modes, <10s)"):
        start = time.monotonic()
        worst = 0.0
        for k in (2, 5, 20):
            for tie_mode in ("exact-k", "inclusive"):
                fast = lof_batch(random_fixture, k, tie_mode)
                slow = lof_bruteforce_oracle(random_fixture, k, tie_mode)
                worst = max(worst, max_relative_deviation(fast.lof, slow.lof))
        elapsed = time.monotonic() - start
        assert worst <= 1e-9, f"max relative deviation {worst:.3e}"
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_symmetry_and_invariance(random_fixture):
    with criterion("symmetry: tetrahedron LOF=1 (1e-12); rigid-motion and scaling invariance (1e-9)"):
        tetrahedron = PointSet.from_rows(
            [
                ("p0", (1.0, 1.0, 1.0)),
                ("p1", (1.0, -1.0, -1.0)),
                ("p2", (-1.0, 1.0, -1.0)),
                ("p3", (-1.0, -1.0, 1.0)),
            ]
        )
        lof = lof_batch(tetrahedron, 2).lof
        assert np.max(np.abs(lof - 1.0)) <= 1e-12

        base = lof_batch(random_fixture, 5).lof
        rng = np.random.default_rng(99)
        rotation, _ = np.linalg.qr(rng.normal(size=(10, 10)))
        shift = rng.normal(size=10)
        moved = PointSet(
            ids=random_fixture.ids,
            vectors=random_fixture.vectors @ rotation + shift,
        )
        assert max_relative_deviation(lof_batch(moved, 5).lof, base) <= 1e-9
        scaled = PointSet(ids=random_fixture.ids, vectors=random_fixture.vectors * 4.2)
        assert max_relative_deviation(lof_batch(scaled, 5).lof, base) <= 1e-9


def test_hand_derived_outlier():
    # Oracle-verified value: lrd(outlier) = 2/(sqrt(162)+sqrt(181)), corner
    # lrds = 1, so LOF = (sqrt(162)+sqrt(181))/2 = 13.0908 to 4dp. (A 4dp
    # constant of 13.0906 sometimes quoted for this fixture is a rounding
    # slip; the derivation and the brute-force oracle agree on 13.0908.)
    with criterion("hand-derived outlier: unit square + (10,10), k=2 -> LOF = 13.0908 (1e-4)"):
        points = PointSet.from_rows(
            [
                ("a", (0.0, 0.0)),
                ("b", (1.0, 0.0)),
                ("c", (0.0, 1.0)),
                ("d", (1.0, 1.0)),
                ("e", (10.0, 10.0)),
            ]
        )
        expected = (math.sqrt(162.0) + math.sqrt(181.0)) / 2.0
        got = lof_batch(points, 2).lof[4]
        oracle = lof_bruteforce_oracle(points, 2).lof[4]
        assert abs(got - expected) <= 1e-4
        assert abs(got - oracle) <= 1e-9 * abs(oracle)


def test_k_rule_reproduction():
    with criterion("k-rule: 1% nearest-rounding reproduces 2011-2021 k exactly; "
                   "2010/2022 deviations documented"):
        expected = {
            2011: 20, 2012: 30, 2013: 39, 2014: 47, 2015: 56, 2016: 64,
            2017: 74, 2018: 82, 2019: 90, 2020: 100, 2021: 111,
        }
        cumulative = 0
        computed = {}
        for year, new in ANNUAL_NEW_COUNTS:
            cumulative += new
            computed[year] = compute_k(cumulative, 0.01, 2, "nearest")
        for year, k in expected.items():
            assert computed[year] == k, f"{year}: {computed[year]} != {k}"
        # known discrepancy cases (reference series lists 10 and 122)
        assert computed[2010] == 11
        assert computed[2022] == 123


def test_composite_arithmetic():
    with criterion("composite arithmetic: reference component rows -> totals (5e-5)"):
        rows = [
            ((0.1960, 0.3494, 0.3700, 0.8704), 0.4464),
            ((0.4174, 0.1570, 0.3993, 0.7658), 0.4349),
        ]
        for components, published_total in rows:
            total = sum(components) / 4.0
            assert abs(total - published_total) <= 5e-5


def test_mann_whitney():
    with criterion("mann-whitney: exact p=0.3333 (1e-4); approx within 0.01 of "
                   "exhaustive oracle across 5<=n1,n2<=12"):
        exact = mann_whitney_u(IndicatorSample("x", (1.0, 2.0), (3.0, 4.0)))
        assert exact.method == "exact"
        assert abs(exact.p_value - 0.3333) <= 1e-4

        rng = np.random.default_rng(424242)
        worst = 0.0
        for n1 in range(5, 13):
            for n2 in range(n1, 13):
                if (n1 + n2) % 2 == 0:
                    x = tuple(rng.uniform(0.0, 100.0, n1).tolist())
                    y = tuple(rng.uniform(0.0, 100.0, n2).tolist())
                else:
                    x = tuple(float(v) for v in rng.integers(0, 40, n1))
                    y = tuple(float(v) for v in rng.integers(0, 40, n2))
                sample = IndicatorSample("x", x, y)
                approx = mann_whitney_u(sample, method="approx")
                assert approx.method == "normal-approx-tie-corrected"
                reference = mwu_permutation_oracle(x, y)
                worst = max(worst, abs(approx.p_value - reference))
        assert worst <= 0.01, f"worst |approx - exact| = {worst:.4f}"


@pytest.fixture(scope="module")
def synthetic_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e") / "ws"
    start = time.monotonic()
    synth = make_synthetic_workspace(
        root, n_years=3, docs_per_year=300, dim=32, outliers_per_year=10
    )
    ws = str(root)
    assert main(["--workspace", ws, "score", "--all-years", "--threads", "1"]) == 0
    single = {
        y: synth.workspace.scores_path(y).read_bytes() for y in (2010, 2011, 2012)
    }
    assert main(["--workspace", ws, "score", "--all-years", "--threads", "8"]) == 0
    threaded = {
        y: synth.workspace.scores_path(y).read_bytes() for y in (2010, 2011, 2012)
    }
    assert main(["--workspace", ws, "rescore"]) == 0
    elapsed = time.monotonic() - start
    return synth, single, threaded, elapsed


def test_end_to_end_synthetic(synthetic_run):
    with criterion("end-to-end synthetic: planted-outlier recall >= 0.8/year; "
                   "<60s; thread-count independent bytes"):
        synth, single, threaded, elapsed = synthetic_run
        assert elapsed < 60.0, f"took {elapsed:.1f}s"
        assert single == threaded, "scores differ across thread counts"

        for year in (2010, 2011, 2012):
            rows = parse_scores_csv(single[year].decode())
            cohort_ids = set(synth.corpus.year_index[year])
            cohort = [r for r in rows if r.doc_id in cohort_ids]
            assert len(cohort) == 300
            top = sorted(cohort, key=lambda r: (-r.total, r.doc_id))[:30]  # top decile
            recall = len({r.doc_id for r in top} & set(synth.planted[year])) / 10.0
            assert recall >= 0.8, f"{year}: recall {recall}"


def test_score_matrix_shape(synthetic_run):
    with criterion("re-scoring matrix shape: one entry for final-year docs, three for "
                   "first-year docs, none before selection"):
        synth, _, _, _ = synthetic_run
        text = synth.workspace.matrix_path.read_text()
        lines = text.splitlines()
        assert lines[0] == "doc_id,2010,2011,2012"
        year_of = {r.doc_id: r.year for r in synth.corpus if r.is_new}
        seen = 0
        for line in lines[1:]:
            cells = line.split(",")
            doc_id, values = cells[0], cells[1:]
            selected = year_of[doc_id]
            defined = [2010 + i for i, v in enumerate(values) if v != ""]
            assert defined == list(range(selected, 2013)), doc_id
            seen += 1
        assert seen == 900
