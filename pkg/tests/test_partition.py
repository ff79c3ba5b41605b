import itertools
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freshcrawl.partition import (
    SCALE,
    FrequencySequence,
    PartitionAssignment,
    PartitionError,
    PtasParams,
    arithmetic_step,
    predict_rr_difference,
    random_split,
    recursive_halving,
    rr_split,
    set_division,
    split,
    subset_sum_select,
    workload_difference,
)


def all_subset_sums(values):
    """Sum of every subset, enumerated through the bits of 0..2^n-1."""
    n = len(values)
    masks = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    return masks @ np.asarray(values, dtype=np.int64)


def best_subset_sum(values, c):
    sums = all_subset_sums(values)
    return int(sums[sums <= c].max())


def optimal_max_min(values, k):
    """Best max-min part difference over all k^n labellings."""
    best = float("inf")
    for labels in itertools.product(range(k), repeat=len(values)):
        sums = [0] * k
        for v, lab in zip(values, labels):
            sums[lab] += v
        best = min(best, max(sums) - min(sums))
    return best


def seq(values):
    return FrequencySequence.from_values(values)


def ids_cover(assignment, sequence):
    ids = [u for part in assignment.ids() for u in part]
    return sorted(ids) == sorted(u for u, _ in sequence.entries) and len(ids) == len(set(ids))


class TestRoundRobin:
    def test_two_parts_alternate(self):
        s = seq(range(6))
        assert rr_split(s, 2).ids() == [["u0", "u2", "u4"], ["u1", "u3", "u5"]]

    def test_one_part(self):
        s = seq([3, 1, 2])
        assert rr_split(s, 1).ids() == [["u0", "u1", "u2"]]

    def test_one_entry_per_part(self):
        s = seq([3, 1, 2, 7])
        assert rr_split(s, 4).ids() == [["u0"], ["u1"], ["u2"], ["u3"]]

    def test_bad_part_count(self):
        with pytest.raises(ValueError):
            rr_split(seq([1]), 0)

    def test_eight_arithmetic(self):
        a = rr_split(seq([1 + i for i in range(8)]).organ_pipe(), 2)
        assert a.ids() == [["u0", "u4", "u7", "u3"], ["u2", "u6", "u5", "u1"]]
        assert a.part_sums == (18.0, 18.0)
        assert predict_rr_difference(1, 1, 8) == 0

    @pytest.mark.parametrize("n,f0,d,expected", [(9, 1, 1, 1), (10, 2, 0.5, -0.5), (11, 3, 2, 1)])
    def test_prediction_cases(self, n, f0, d, expected):
        assert predict_rr_difference(f0, d, n) == expected

    @settings(max_examples=200)
    @given(st.integers(4, 200), st.floats(0, 100), st.floats(0, 10))
    def test_prediction_matches_measurement(self, n, f0, d):
        vals = [f0 + i * d for i in range(n)]
        a = rr_split(seq(vals).organ_pipe(), 2)
        measured = a.part_sums[0] - a.part_sums[1]
        assert measured == pytest.approx(predict_rr_difference(f0, d, n), abs=1e-9 * max(1, sum(vals)))
        assert abs(measured) <= max(f0, d) + 1e-9 * max(1, sum(vals))

    def test_halving_by_parity_equals_four_way_rr(self):
        s = seq(np.random.default_rng(1).uniform(0, 10, 37)).organ_pipe()
        halves = rr_split(s, 2)
        quarters = [rr_split(FrequencySequence(p), 2).ids() for p in halves.parts]
        four = rr_split(s, 4).ids()
        assert [quarters[0][0], quarters[1][0], quarters[0][1], quarters[1][1]] == four


class TestSubsetSum:
    def test_small_example(self):
        idx, total = subset_sum_select([3, 5, 8, 9], 12)
        assert total == 12
        assert sum([3, 5, 8, 9][i] for i in idx) == 12

    def test_zero_capacity(self):
        assert subset_sum_select([1, 2, 3], 0) == ([], 0)

    def test_capacity_above_total(self):
        assert subset_sum_select([4, 5, 6], 100) == ([0, 1, 2], 15)

    def test_prefers_lower_indices(self):
        assert subset_sum_select([5, 5, 5], 5) == ([0], 5)

    @settings(max_examples=300)
    @given(st.lists(st.integers(0, 100), max_size=14), st.integers(0, 700))
    def test_matches_enumeration(self, values, c):
        idx, total = subset_sum_select(values, c)
        assert total == best_subset_sum(values, c)
        assert sum(values[i] for i in idx) == total
        assert len(set(idx)) == len(idx)

    def test_negative(self):
        with pytest.raises(ValueError):
            subset_sum_select([-1, 2], 3)


class TestPtas:
    def test_params(self):
        p = PtasParams(0.21, 4)
        assert p.ratio_per_round == pytest.approx(1.1)
        assert p.epsilon_prime == pytest.approx(0.1 / 2.1)

    @pytest.mark.parametrize("k", [3, 5, 6, 12])
    def test_power_of_two_only(self, k):
        with pytest.raises(PartitionError, match="part count must be a power of 2"):
            PtasParams(0.2, k)

    @given(st.floats(0.01, 2), st.sampled_from([2, 4, 8, 16, 32]))
    def test_epsilon_prime_range(self, eps, k):
        p = PtasParams(eps, k)
        r = 2 ** (np.log2(1 + eps) / p.rounds)
        assert 0 < p.epsilon_prime < 1
        assert p.epsilon_prime == pytest.approx((r - 1) / (r + 1))

    @pytest.mark.parametrize("k", [2, 4, 8])
    def test_equal_frequencies(self, k):
        a = recursive_halving(seq([2.5] * 16), PtasParams(0.1, k))
        assert len(set(a.part_sums)) == 1

    def test_ratio_bound(self):
        rng = np.random.default_rng(5)
        vals = rng.uniform(0, 10, 200)
        a = recursive_halving(seq(vals), PtasParams(0.2, 8))
        assert max(a.part_sums) / min(a.part_sums) <= 1.2
        assert ids_cover(a, seq(vals))

    def test_approx_mode_respects_bound(self):
        vals = np.random.default_rng(6).uniform(0, 10, 120)
        a = recursive_halving(seq(vals), PtasParams(0.5, 4), mode="approx")
        assert max(a.part_sums) / min(a.part_sums) <= 1.5

    def test_more_parts_than_entries(self):
        with pytest.raises(PartitionError):
            recursive_halving(seq([1, 2]), PtasParams(0.2, 4))

    def test_polynomial_growth(self):
        rng = np.random.default_rng(0)
        sizes, times = [200, 400, 800], []
        for n in sizes:
            vals = seq(rng.uniform(0, 10, n))
            best = float("inf")
            for _ in range(3):
                t = time.perf_counter()
                recursive_halving(vals, PtasParams(0.2, 4))
                best = min(best, time.perf_counter() - t)
            times.append(best)
        exponent = np.polyfit(np.log(sizes), np.log(times), 1)[0]
        assert exponent < 2.5


class TestSetDivision:
    def test_symmetric(self):
        a = set_division(seq([4, 4, 4, 4]), 2)
        assert a.part_sums == (8.0, 8.0) and a.max_min_diff == 0

    def test_one_to_seven(self):
        a = set_division(seq(range(1, 8)), 2)
        assert sorted(a.part_sums) == [14.0, 14.0]
        assert optimal_max_min(list(range(1, 8)), 2) == 0

    def test_one_big(self):
        a = set_division(seq([10, 1, 1, 1]), 2)
        assert sorted(a.part_sums) == [3.0, 10.0]
        assert optimal_max_min([10, 1, 1, 1], 2) == 7

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 30), min_size=3, max_size=9), st.integers(2, 3))
    def test_greedy_envelope(self, values, k):
        a = set_division(seq(values), k)
        assert a.max_min_diff <= optimal_max_min(values, k) + max(values) + 1e-9
        assert ids_cover(a, seq(values))

    def test_scaled_note(self):
        assert set_division(seq([0.1234, 2.0, 1.1]), 2).notes["scale"] == SCALE


class TestWorkloadDifference:
    def build(self, sums):
        return PartitionAssignment.build([[(f"p{i}", s)] for i, s in enumerate(sums)])

    def test_equal(self):
        assert workload_difference(self.build([10, 10, 10])) == (0, 0)

    def test_two(self):
        assert workload_difference(self.build([15, 14])) == (1, 1)

    def test_three(self):
        assert workload_difference(self.build([5, 7, 10])) == (5, 10)

    def test_corruption_detected(self):
        a = self.build([5, 7])
        broken = PartitionAssignment(a.parts, (5.0, 8.0), 3.0, 3.0)
        with pytest.raises(PartitionError):
            workload_difference(broken)

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=12))
    def test_pairwise_matches_direct(self, sums):
        a = self.build(sums)
        direct = sum(abs(x - y) for x, y in itertools.combinations(sums, 2))
        assert a.max_pairwise_diff == pytest.approx(direct, rel=1e-9, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 50), min_size=4, max_size=40),
    st.sampled_from(["rr", "halving", "setdiv", "random"]),
    st.sampled_from([2, 4]),
)
def test_every_strategy_partitions(values, strategy, k):
    s = seq(values)
    a = split(s, k, strategy, seed=1)
    assert a.k == k
    assert ids_cover(a, s)
    workload_difference(a)


def test_random_split_seeded():
    s = seq(range(50))
    assert random_split(s, 3, 4).ids() == random_split(s, 3, 4).ids()
    assert random_split(s, 3, 4).ids() != random_split(s, 3, 5).ids()


def test_arithmetic_step():
    assert arithmetic_step([3, 1, 2, 4]) == (1.0, 1.0)
    assert arithmetic_step([1, 2, 4]) is None


def test_organ_pipe_tag():
    assert seq([3, 1]).organ_pipe().ordering == "organ_pipe"
    with pytest.raises(ValueError):
        seq([-1.0])
