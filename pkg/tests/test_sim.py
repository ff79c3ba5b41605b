import io
from collections import Counter, deque
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freshcrawl.behavior import MINUTES_PER_DAY, MessageHistory, UserClass, make_population
from freshcrawl.sim import (
    Corpus,
    EventLog,
    MachineState,
    QuotaExhausted,
    QuotaPolicy,
    SimConfig,
    SimState,
    assign_task_centralized,
    compute_metrics,
    crawl_user,
    rebalance,
    run,
    run_centralized,
    run_distributed,
    simulate,
)
from freshcrawl.sim.metrics import CRAWL, DEFERRAL, MIGRATION

DAY = MINUTES_PER_DAY


def corpus_of(*timestamp_lists, days=2):
    hs = [MessageHistory(f"u{i}", np.asarray(ts, dtype=np.int64), 0, days * DAY) for i, ts in enumerate(timestamp_lists)]
    return Corpus.from_histories(hs, days)


def state_for(corpus, c=100, machines=1, calls=350, retention=2000):
    return SimState(corpus, machines, QuotaPolicy(calls, 60, c), 0, retention)


class TestCrawlUser:
    def test_nothing_new_still_costs_a_call(self):
        st_ = state_for(corpus_of([]))
        assert crawl_user(st_, 0, 0, 100) == 0
        assert st_.machines[0].quota_remaining == 349
        assert st_.machines[0].calls_made == 1

    def test_cap_takes_newest(self):
        st_ = state_for(corpus_of(np.arange(250)), c=100)
        assert crawl_user(st_, 0, 0, 300) == 100
        assert st_.leftover[0] == 150
        assert st_.log.lag[0] == sum(300 - t for t in range(150, 250))

    def test_two_calls_drain(self):
        st_ = state_for(corpus_of(np.arange(250)), c=200)
        assert crawl_user(st_, 0, 0, 300) == 200
        assert crawl_user(st_, 0, 0, 301) == 50
        assert crawl_user(st_, 0, 0, 302) == 0

    def test_only_posts_up_to_now(self):
        st_ = state_for(corpus_of([10, 20, 30, 40]))
        assert crawl_user(st_, 0, 0, 25) == 2
        assert crawl_user(st_, 0, 0, 50) == 2

    def test_newest_first_across_crawls(self):
        # second crawl: the 30 new posts, then the 50 older ones left behind
        st_ = state_for(corpus_of(list(range(150)) + list(range(500, 530))), c=100)
        assert crawl_user(st_, 0, 0, 200) == 100
        assert crawl_user(st_, 0, 0, 600) == 80
        assert st_.leftover[0] == 0

    def test_quota_exhausted(self):
        st_ = state_for(corpus_of([1]), calls=1)
        crawl_user(st_, 0, 0, 5)
        with pytest.raises(QuotaExhausted):
            crawl_user(st_, 0, 0, 6)

    def test_retention_drops_oldest(self):
        st_ = state_for(corpus_of(np.arange(3000) // 3), c=100, retention=2000)
        crawl_user(st_, 0, 0, 1500)
        assert st_.lost == 1000
        acc = st_.accounting(1500)
        assert acc["posted"] == acc["collected"] + acc["waiting"] + acc["lost"] + acc["unseen"]


class TestAssign:
    def machines(self, lengths):
        return [MachineState(i, 10, deque(range(n))) for i, n in enumerate(lengths)]

    def test_unique_minimum(self):
        assert assign_task_centralized(self.machines([3, 1, 2]), np.random.default_rng(0)) == 1

    def test_single(self):
        assert assign_task_centralized(self.machines([4]), np.random.default_rng(0)) == 0

    def test_uniform_ties(self):
        ms = self.machines([2, 2, 2])
        rng = np.random.default_rng(42)
        counts = Counter(assign_task_centralized(ms, rng) for _ in range(100_000))
        for i in range(3):
            assert abs(counts[i] / 100_000 - 1 / 3) <= 0.02

    def test_call_in_progress_counts(self):
        ms = self.machines([0, 0])
        ms[0].busy_until = 12.0
        assert assign_task_centralized(ms, np.random.default_rng(0), now=10) == 1
        assert assign_task_centralized(ms, np.random.default_rng(0), now=12) in (0, 1)

    def test_empty(self):
        with pytest.raises(ValueError):
            assign_task_centralized([], np.random.default_rng(0))


class TestRebalance:
    def test_nothing_exhausted(self):
        ms = [MachineState(0, 5, deque([1, 2])), MachineState(1, 5)]
        assert rebalance(ms, 0).migrations == []

    def test_moves_pending_tasks(self):
        ms = [MachineState(0, 0, deque([7, 8, 9])), MachineState(1, 4), MachineState(2, 2)]
        res = rebalance(ms, 0)
        assert [(m.user, m.source, m.target) for m in res.migrations] == [(7, 0, 1), (8, 0, 1), (9, 0, 1)]
        assert list(ms[1].todo_list) == [7, 8, 9] and not ms[0].todo_list

    def test_all_exhausted(self):
        ms = [MachineState(0, 0, deque([7, 8])), MachineState(1, 0)]
        res = rebalance(ms, 0)
        assert res.migrations == [] and res.deferred == [7, 8]


class TestMetrics:
    def test_empty(self):
        r = compute_metrics([], 1)
        assert (r.total_messages, r.workload_diff, r.avg_msgs_per_call, r.freshness, r.total_calls) == (0, 0, 0, 0, 0)

    def test_single_machine(self):
        r = compute_metrics([(0, CRAWL, 0, 0, 22474, 0.0)], 1)
        assert r.total_messages == 22474 and r.workload_diff == 0

    def test_average_per_call(self):
        events = [(0, CRAWL, 0, 0, 0, 0.0)] * 50420 + [(1, CRAWL, 0, 0, 1451435, 0.0)]
        assert round(compute_metrics(events, 1).avg_msgs_per_call, 2) == 28.79

    def test_counts_and_diff(self):
        events = [
            (0, CRAWL, 0, 0, 10, 50.0), (1, CRAWL, 1, 1, 4, 8.0),
            (2, DEFERRAL, 1, 1, 1, 0.0), (3, MIGRATION, 0, 1, 1, 0.0),
        ]
        r = compute_metrics(events, 3)
        assert r.per_machine == ((10, 1), (4, 1), (0, 0))
        assert r.workload_diff == 10
        assert r.freshness == pytest.approx(58 / 14)
        assert (r.deferrals, r.migrations) == (1, 1)

    def test_trace_format(self):
        log = EventLog()
        log.record(5, CRAWL, 0, 1, 3)
        out = io.StringIO()
        log.write_trace(out, ["a", "b"])
        assert out.getvalue() == "t,event_kind,machine,user,count\n5,crawl,0,b,3\n"


@pytest.fixture(scope="module")
def small_corpus():
    return Corpus.generate(make_population(300, 7), 12)


def cfg(corpus, **kw):
    base = dict(quota=QuotaPolicy(6, 60, 100), duration=5, rng_seed=3)
    base.update(kw)
    return SimConfig(corpus, **base)


class TestRuns:
    def test_one_machine_has_no_diff(self, small_corpus):
        assert run(cfg(small_corpus)).workload_diff == 0

    @pytest.mark.parametrize("model", ["poisson", "hash", "rr"])
    @pytest.mark.parametrize("arch", ["centralized", "distributed"])
    def test_deterministic(self, small_corpus, model, arch):
        c = cfg(small_corpus, schedule_model=model, architecture=arch, machines=3)
        assert run(c).csv_line() == run(c).csv_line()
        assert run(c) == run(c)

    @pytest.mark.parametrize("model", ["poisson", "hash", "rr"])
    def test_single_machine_architectures_agree(self, small_corpus, model):
        c = run(cfg(small_corpus, schedule_model=model))
        d = run(cfg(small_corpus, schedule_model=model, architecture="distributed"))
        assert c == d

    @pytest.mark.parametrize("model", ["poisson", "hash", "rr"])
    @pytest.mark.parametrize("arch", ["centralized", "distributed"])
    def test_conservation_and_quota(self, small_corpus, model, arch):
        c = cfg(small_corpus, schedule_model=model, architecture=arch, machines=3)
        report, sim = simulate(c, small_corpus)
        acc = sim.state.accounting(sim.end)
        assert acc["posted"] == acc["collected"] + acc["waiting"] + acc["lost"] + acc["unseen"]
        generated = small_corpus.total_between_days(c.warmup_days, c.warmup_days + c.duration)
        assert report.total_messages == acc["collected"] <= generated
        assert report.total_messages == sum(col for col, _ in report.per_machine)

        log = sim.state.log
        kind = np.frombuffer(log.kind, dtype=np.int8)
        t = np.frombuffer(log.t, dtype=np.int64)[kind == CRAWL]
        mach = np.frombuffer(log.machine, dtype=np.int32)[kind == CRAWL]
        window = (t - sim.start) // c.quota.window
        per = Counter(zip(window.tolist(), mach.tolist()))
        assert max(per.values()) <= c.quota.calls_per_window

    def test_ample_quota_collects_everything_but_the_last_hour(self):
        ts = np.arange(0, 3 * DAY - 10, 7)
        corpus = corpus_of(ts, ts + 3, days=3)
        report, sim = simulate(SimConfig(corpus, warmup_days=1, duration=2, quota=QuotaPolicy(60, 60, 100)), corpus)
        acc = sim.state.accounting(sim.end)
        assert report.total_messages == acc["collected"]
        posted = [t for t in np.concatenate([ts, ts + 3]) if t >= DAY]
        assert len(posted) - 2 * 60 // 7 - 2 <= report.total_messages <= len(posted)

    def test_rr_budget_is_spent_exactly(self, small_corpus):
        r = run(cfg(small_corpus, schedule_model="rr", rr_budget=123, machines=2))
        assert r.total_calls == 123

    def test_arch_entry_points_check_config(self, small_corpus):
        with pytest.raises(ValueError):
            run_centralized(cfg(small_corpus, architecture="distributed"))
        with pytest.raises(ValueError):
            run_distributed(cfg(small_corpus))

    def test_config_validation(self, small_corpus):
        with pytest.raises(ValueError):
            cfg(small_corpus, machines=0)
        with pytest.raises(ValueError):
            cfg(small_corpus, duration=0)
        with pytest.raises(ValueError, match="shorter"):
            run(cfg(small_corpus, duration=30))

    def test_tight_quota_defers_and_migrates(self):
        # hash profiles start empty, so heavy posters need a few days to trigger
        corpus = Corpus.generate(make_population(2000, 2, only=[UserClass.AUTHORITY]), 13)
        base = SimConfig(corpus, schedule_model="hash", quota=QuotaPolicy(2, 60, 100), duration=6, machines=2)
        d = run(replace(base, architecture="distributed"))
        assert d.deferrals > 0 and d.migrations > 0
        c = run(base)
        assert c.deferrals > 0 and c.migrations == 0

    def test_warm_start_crawls_sooner(self):
        corpus = Corpus.generate(make_population(2000, 2, only=[UserClass.AUTHORITY]), 10)
        base = SimConfig(corpus, schedule_model="hash", quota=QuotaPolicy(20, 60, 100), duration=3)
        assert run(base).total_calls == 0
        assert run(replace(base, hash_warm_start=True)).total_calls > 0

    def test_setdiv_split(self, small_corpus):
        r = run(cfg(small_corpus, architecture="distributed", machines=2, split="setdiv"))
        assert r.total_messages > 0


@settings(max_examples=15, deadline=None)
@given(
    st.integers(0, 10_000),
    st.sampled_from(["poisson", "hash", "rr"]),
    st.sampled_from(["centralized", "distributed"]),
    st.integers(1, 4),
    st.integers(1, 12),
)
def test_invariants_hold_for_random_configs(seed, model, arch, machines, calls):
    corpus = Corpus.generate(make_population(60, seed), 9)
    c = SimConfig(corpus, architecture=arch, machines=machines, schedule_model=model,
                  quota=QuotaPolicy(calls, 60, 50), duration=2, rng_seed=seed)
    report, sim = simulate(c, corpus)
    acc = sim.state.accounting(sim.end)
    assert acc["posted"] == acc["collected"] + acc["waiting"] + acc["lost"] + acc["unseen"]
    assert report.workload_diff >= 0
    for m in sim.state.machines:
        assert 0 <= m.quota_remaining <= calls
