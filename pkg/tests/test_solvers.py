"""Objective arithmetic, solver exactness, oracles, and the averaging bound."""
import itertools

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from unbsim.core import Assignment, DecodeStats
from unbsim.sinr import DecodeTable, metrics
from unbsim.solvers import (
    QuadraticAssignmentObjective,
    build_p3_objective,
    build_p4_objective,
    oracle_best_assignment,
    random_assignment,
    solve_enumeration,
    solve_local_search,
)
from unbsim.training import empirical_table_stats


def stats_2x2():
    s = np.array([[0.9, 0.5], [0.9, 0.5]])
    r = np.zeros((2, 2, 2))
    r[0, 1, 0] = r[1, 0, 0] = 0.81
    r[0, 1, 1] = r[1, 0, 1] = 0.25
    for b in range(2):
        r[b, b, :] = s[b, :]
    counts = np.full_like(s, 100, dtype=np.int64)
    return DecodeStats(s=s, r_corr=r, s_counts=counts, r_counts=np.full_like(r, 100, dtype=np.int64))


def naive_value(obj, bands):
    """Pure-python reference evaluator."""
    total = 0.0
    for b, m in enumerate(bands):
        total += obj.linear[b, m - 1]
    pen = 0.0
    for b in range(len(bands)):
        for k in range(b + 1, len(bands)):
            if bands[b] == bands[k]:
                pen += obj.quadratic[bands[b] - 1, b, k]
    return total - pen if obj.sense == "maximize" else total + pen


def random_objective(rng, B, M, sense="maximize"):
    lin = rng.uniform(0, 1, (B, M))
    q = rng.uniform(0, 1, (M, B, B))
    q = (q + np.swapaxes(q, 1, 2)) / 2
    idx = np.arange(B)
    q[:, idx, idx] = 0.0
    return QuadraticAssignmentObjective(linear=lin, quadratic=q, sense=sense)


class TestObjective:
    def test_worked_two_station_values(self):
        obj = build_p3_objective(stats_2x2())
        vals = obj.values_of(np.array([[1, 1], [2, 2], [1, 2], [2, 1]]))
        assert vals == pytest.approx([0.99, 0.75, 1.40, 1.40])

    def test_value_matches_batch(self):
        obj = build_p3_objective(stats_2x2())
        assert obj.value(Assignment.from_bands([1, 1], 2)) == pytest.approx(0.99)

    def test_correlated_pair_penalized_harder(self):
        s = np.array([[0.6, 0.6], [0.6, 0.6]])
        base = np.zeros((2, 2, 2))
        for b in range(2):
            base[b, b, :] = 0.6
        indep, corr = base.copy(), base.copy()
        indep[0, 1, :] = indep[1, 0, :] = 0.36   # product of marginals
        corr[0, 1, :] = corr[1, 0, :] = 0.6      # always decode together
        c = np.full((2, 2), 10, dtype=np.int64)
        rc = np.full((2, 2, 2), 10, dtype=np.int64)
        v_ind = build_p3_objective(DecodeStats(s, indep, c, rc)).values_of(np.array([[1, 1]]))[0]
        v_cor = build_p3_objective(DecodeStats(s, corr, c, rc)).values_of(np.array([[1, 1]]))[0]
        assert v_cor < v_ind

    def test_validation(self):
        with pytest.raises(ValueError):
            QuadraticAssignmentObjective(np.zeros((2, 2)), np.zeros((2, 2, 2)), "best")
        bad_diag = np.zeros((2, 2, 2))
        bad_diag[0, 0, 0] = 1.0
        with pytest.raises(ValueError):
            QuadraticAssignmentObjective(np.zeros((2, 2)), bad_diag, "maximize")
        asym = np.zeros((2, 2, 2))
        asym[0, 0, 1] = 1.0
        with pytest.raises(ValueError):
            QuadraticAssignmentObjective(np.zeros((2, 2)), asym, "maximize")
        with pytest.raises(ValueError):
            QuadraticAssignmentObjective(np.full((2, 2), np.nan), np.zeros((2, 2, 2)), "maximize")


class TestEnumeration:
    def test_single_station_band_argmax(self):
        obj = QuadraticAssignmentObjective(
            np.array([[0.1, 0.7, 0.2]]), np.zeros((3, 1, 1)), "maximize"
        )
        res = solve_enumeration(obj)
        assert list(res.assignment.bands) == [2]
        assert res.value == pytest.approx(0.7)
        assert res.visited == 3

    def test_two_station_split_optimal(self):
        res = solve_enumeration(build_p3_objective(stats_2x2()))
        assert res.value == pytest.approx(1.40)
        assert list(res.assignment.bands) == [1, 2]  # lex-first of the two splits
        assert res.visited == 4

    def test_minimize_picks_the_maximize_worst_case(self):
        obj = build_p3_objective(stats_2x2())
        flipped = QuadraticAssignmentObjective(obj.linear, obj.quadratic, "minimize")
        res = solve_enumeration(flipped)
        assert list(res.assignment.bands) == [2, 2]
        assert res.value == pytest.approx(0.5 + 0.5 + 0.25)

    def test_all_zero_ties_break_lexicographically(self):
        for sense in ("maximize", "minimize"):
            obj = QuadraticAssignmentObjective(np.zeros((3, 3)), np.zeros((3, 3, 3)), sense)
            assert list(solve_enumeration(obj).assignment.bands) == [1, 1, 1]

    def test_cap_refusal_mentions_local_search(self):
        obj = random_objective(np.random.default_rng(0), 10, 4)
        with pytest.raises(ValueError, match="local_search"):
            solve_enumeration(obj, cap=1000)

    def test_matches_pure_python_bruteforce(self):
        rng = np.random.default_rng(1)
        for _ in range(60):
            B, M = int(rng.integers(1, 5)), int(rng.integers(1, 4))
            sense = "maximize" if rng.random() < 0.5 else "minimize"
            obj = random_objective(rng, B, M, sense)
            res = solve_enumeration(obj)
            grid = list(itertools.product(range(1, M + 1), repeat=B))
            vals = [naive_value(obj, g) for g in grid]
            opt = max(vals) if sense == "maximize" else min(vals)
            assert res.value == pytest.approx(opt, abs=1e-12)
            first = next(g for g, v in zip(grid, vals) if abs(v - opt) < 1e-12)
            assert tuple(res.assignment.bands) == first
            assert res.visited == M ** B

    def test_band_permutation_equivariance(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            B, M = 4, 3
            obj = random_objective(rng, B, M)
            perm = rng.permutation(M)  # new_band = perm[old_band - 1] + 1
            lin_p = np.empty_like(obj.linear)
            quad_p = np.empty_like(obj.quadratic)
            lin_p[:, perm] = obj.linear
            quad_p[perm] = obj.quadratic
            res = solve_enumeration(obj)
            res_p = solve_enumeration(
                QuadraticAssignmentObjective(lin_p, quad_p, obj.sense)
            )
            assert res_p.value == pytest.approx(res.value, abs=1e-12)
            np.testing.assert_array_equal(res_p.assignment.bands, perm[res.assignment.bands - 1] + 1)


class TestHeuristicObjective:
    def test_two_station_split_costs_nothing(self):
        obj = build_p4_objective(np.array([[0.0, 0.0], [5000.0, 0.0]]), eta=1.0, num_bands=2)
        res = solve_enumeration(obj)
        assert res.value == pytest.approx(0.0)
        assert len(set(res.assignment.bands)) == 2

    def test_collinear_groups_far_pair(self):
        locs = np.array([[0.0, 0.0], [1000.0, 0.0], [10000.0, 0.0]])
        res = solve_enumeration(build_p4_objective(locs, eta=1.0, num_bands=2))
        bands = res.assignment.bands
        assert bands[0] == bands[2] != bands[1]
        assert res.value == pytest.approx(1e-4)

    def test_large_eta_maximizes_closest_pair_separation(self):
        locs = np.array([[0.0, 0.0], [1200.0, 0.0], [2000.0, 0.0], [10000.0, 0.0]])
        for eta in (1.0, 4.0, 8.0):
            res = solve_enumeration(build_p4_objective(locs, eta=eta, num_bands=2))
            bands = res.assignment.bands
            closest = min(
                abs(locs[b, 0] - locs[k, 0])
                for b in range(4) for k in range(b + 1, 4) if bands[b] == bands[k]
            )
            best_possible = max(
                min(
                    abs(locs[b, 0] - locs[k, 0])
                    for b in range(4) for k in range(b + 1, 4) if g[b] == g[k]
                )
                for g in itertools.product((1, 2), repeat=4)
                if any(g[b] == g[k] for b in range(4) for k in range(b + 1, 4))
            )
            if eta == 8.0:
                assert closest == best_possible

    def test_translation_rotation_invariance(self):
        rng = np.random.default_rng(3)
        locs = rng.uniform(0, 1e4, (5, 2))
        theta = 0.7
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        moved = locs @ rot.T + np.array([123.0, -456.0])
        a = build_p4_objective(locs, eta=1.0, num_bands=3)
        b = build_p4_objective(moved, eta=1.0, num_bands=3)
        grid = np.array(list(itertools.product((1, 2, 3), repeat=5)))
        np.testing.assert_allclose(a.values_of(grid), b.values_of(grid), rtol=1e-10)

    def test_coincident_stations_clamped(self):
        obj = build_p4_objective(np.zeros((2, 2)), eta=2.0, num_bands=2)
        assert obj.quadratic[0, 0, 1] == 1.0

    def test_bad_eta(self):
        with pytest.raises(ValueError):
            build_p4_objective(np.zeros((2, 2)), eta=0.0, num_bands=2)


class TestLocalSearch:
    def test_single_band_forced(self):
        obj = random_objective(np.random.default_rng(4), 5, 1)
        res = solve_local_search(obj, restarts=3, rng=np.random.default_rng(0))
        assert list(res.assignment.bands) == [1] * 5

    def test_matches_enumeration_on_200_instances(self):
        rng = np.random.default_rng(5)
        matches = 0
        for _ in range(200):
            B, M = int(rng.integers(2, 7)), int(rng.integers(2, 4))
            obj = random_objective(rng, B, M)
            exact = solve_enumeration(obj)
            local = solve_local_search(obj, restarts=20, rng=rng)
            matches += abs(local.value - exact.value) < 1e-9
        assert matches >= 195

    def test_result_is_first_order_optimal(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            obj = random_objective(rng, 5, 3, "minimize" if rng.random() < 0.5 else "maximize")
            res = solve_local_search(obj, restarts=5, rng=rng)
            bands = res.assignment.bands
            for b in range(5):
                for m in range(1, 4):
                    cand = bands.copy()
                    cand[b] = m
                    moved = obj.values_of(cand[None, :])[0]
                    assert not obj.better(moved, res.value + 0)

    def test_deterministic_given_stream(self):
        obj = random_objective(np.random.default_rng(7), 6, 3)
        a = solve_local_search(obj, restarts=10, rng=np.random.default_rng(42))
        b = solve_local_search(obj, restarts=10, rng=np.random.default_rng(42))
        assert a.value == b.value
        np.testing.assert_array_equal(a.assignment.bands, b.assignment.bands)

    def test_restart_count_validated(self):
        with pytest.raises(ValueError):
            solve_local_search(random_objective(np.random.default_rng(8), 2, 2), restarts=0)


class TestRandomAssignment:
    def test_single_band(self):
        x = random_assignment(4, 1, np.random.default_rng(0))
        assert list(x.bands) == [1] * 4

    def test_uniform_marginals(self):
        rng = np.random.default_rng(9)
        draws = np.array([random_assignment(2, 3, rng).bands for _ in range(30_000)])
        for m in (1, 2, 3):
            assert (draws == m).mean() == pytest.approx(1 / 3, abs=0.01)

    def test_rows_independent(self):
        rng = np.random.default_rng(10)
        draws = np.array([random_assignment(2, 3, rng).bands for _ in range(30_000)])
        joint = np.zeros((3, 3))
        for a, b in draws:
            joint[a - 1, b - 1] += 1
        assert chi2_contingency(joint).pvalue > 0.01


def random_table(rng, B=3, M=3, P=10, R=3):
    return DecodeTable(
        d=rng.integers(0, 2, (B, P * R)).astype(np.uint8),
        event_band=rng.integers(1, M + 1, P * R),
        event_packet=np.repeat(np.arange(P), R),
        num_bands=M,
    )


class TestOracle:
    def test_all_ones_table_lex_tie(self):
        tab = DecodeTable(
            d=np.ones((3, 6), dtype=np.uint8),
            event_band=np.array([1, 2, 3, 1, 2, 3]),
            event_packet=np.repeat([0, 1], 3),
            num_bands=3,
        )
        # every packet has a band-1 repetition, so [1,1,1] already decodes all
        # packets; covering every transmission needs all three bands
        for metric, expect in (("packet", [1, 1, 1]), ("transmission", [1, 2, 3])):
            res = oracle_best_assignment(tab, metric)
            assert res.rate == 1.0
            assert list(res.assignment.bands) == expect

    def test_single_witness_station(self):
        d = np.zeros((3, 5), dtype=np.uint8)
        d[0, :] = 1
        tab = DecodeTable(d, np.full(5, 2), np.arange(5), num_bands=3)
        res = oracle_best_assignment(tab, "transmission")
        assert res.rate == 1.0
        assert list(res.assignment.bands) == [2, 1, 1]

    def test_matches_naive_argmax(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            tab = random_table(rng)
            grid = list(itertools.product((1, 2, 3), repeat=3))
            for metric, pos in (("packet", 0), ("transmission", 1)):
                res = oracle_best_assignment(tab, metric)
                vals = [metrics(tab, Assignment.from_bands(g, 3))[pos] for g in grid]
                assert res.rate == pytest.approx(max(vals), abs=1e-12)
                first = next(g for g, v in zip(grid, vals) if abs(v - max(vals)) < 1e-12)
                assert tuple(res.assignment.bands) == first

    def test_dominance_over_any_assignment(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            tab = random_table(rng, B=4, M=3, P=12)
            best_pkt = oracle_best_assignment(tab, "packet")
            best_trn = oracle_best_assignment(tab, "transmission")
            assert best_pkt.rate >= metrics(tab, best_trn.assignment)[0] - 1e-12
            for _ in range(5):
                x = random_assignment(4, 3, rng)
                pdp, rate = metrics(tab, x)
                assert best_pkt.rate >= pdp - 1e-12
                assert best_trn.rate >= rate - 1e-12

    def test_cap_and_empty_checks(self):
        rng = np.random.default_rng(13)
        tab = random_table(rng, B=8, M=3)
        with pytest.raises(ValueError):
            oracle_best_assignment(tab, "packet", cap=100)
        empty = DecodeTable(np.zeros((2, 0), dtype=np.uint8), np.zeros(0, int), np.zeros(0, int), 3)
        with pytest.raises(ValueError):
            oracle_best_assignment(empty)
        with pytest.raises(ValueError):
            oracle_best_assignment(tab, "pdp")


class TestAveragingBound:
    def test_scaled_objective_bounds_transmission_rate(self):
        # the quadratic objective over uniform-band-weighted table statistics,
        # divided by the band count, can never exceed the realized rate
        rng = np.random.default_rng(14)
        for _ in range(30):
            B, M = int(rng.integers(1, 5)), int(rng.integers(1, 4))
            tab = random_table(rng, B=B, M=M, P=int(rng.integers(2, 15)))
            s, r = empirical_table_stats(tab)
            quad = np.ascontiguousarray(np.moveaxis(r, 2, 0)).copy()
            quad[:, np.arange(B), np.arange(B)] = 0.0
            obj = QuadraticAssignmentObjective(s, quad, "maximize")
            for _ in range(20):
                x = random_assignment(B, M, rng)
                bound = obj.value(x) / M
                rate = metrics(tab, x)[1]
                assert bound <= rate + 1e-9

    def test_bound_tight_when_no_station_overlaps(self):
        # single station: the union equals the sum, so the bound is exact
        rng = np.random.default_rng(15)
        tab = random_table(rng, B=1, M=2, P=8)
        s, r = empirical_table_stats(tab)
        obj = QuadraticAssignmentObjective(s, np.zeros((2, 1, 1)), "maximize")
        for g in ((1,), (2,)):
            x = Assignment.from_bands(g, 2)
            assert obj.value(x) / 2 == pytest.approx(metrics(tab, x)[1], abs=1e-12)
