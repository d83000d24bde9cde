import numpy as np
import pytest

from gcond.accumulator import AccumMode, Accumulator, task_for_microstep
from gcond.problems import make_conflicting_quadratics, micro_batch_gradient


def test_stochastic_blocks_enumerated():
    # floor(k*N/K) by hand for K=12, N=2
    tasks = [task_for_microstep(k, 12, 2, AccumMode.STOCHASTIC) for k in range(12)]
    assert tasks == [(0,)] * 6 + [(1,)] * 6


def test_sequential_is_all_tasks():
    assert task_for_microstep(5, 12, 2, "sequential") == (0, 1)


def test_indivisible_stochastic_rejected():
    with pytest.raises(ValueError):
        task_for_microstep(0, 10, 3, AccumMode.STOCHASTIC)
    with pytest.raises(ValueError):
        Accumulator(3, 2, 10, "stochastic")


def test_microstep_out_of_range():
    with pytest.raises(ValueError):
        task_for_microstep(12, 12, 2, AccumMode.SEQUENTIAL)


def test_block_order_permutes_owner():
    tasks = [task_for_microstep(k, 6, 3, "stochastic", block_order=[2, 0, 1]) for k in range(6)]
    assert tasks == [(2,), (2,), (0,), (0,), (1,), (1,)]


def test_running_sum_and_mean():
    acc = Accumulator(1, 2, K=2)
    acc.accumulate(0, [1.0, 2.0])
    acc.accumulate(0, [3.0, 4.0])
    np.testing.assert_array_equal(acc.buffers[0], [4.0, 6.0])
    assert acc.counts == [2]
    np.testing.assert_array_equal(acc.finalize()[0], [2.0, 3.0])
    assert acc.counts == [0]
    np.testing.assert_array_equal(acc.buffers[0], [0.0, 0.0])


def test_single_contribution_identity():
    acc = Accumulator(1, 2, K=1)
    acc.accumulate(0, [7.0, -1.0])
    np.testing.assert_array_equal(acc.finalize()[0], [7.0, -1.0])


def test_stochastic_mean_of_own_block():
    acc = Accumulator(2, 2, K=4, mode="stochastic")
    assert acc.schedule() == [(0,), (0,), (1,), (1,)]
    acc.accumulate(0, [1.0, 0.0])
    acc.accumulate(0, [3.0, 0.0])
    acc.accumulate(1, [5.0, 5.0])
    acc.accumulate(1, [5.0, 5.0])
    g = acc.finalize()
    np.testing.assert_array_equal(g[0], [2.0, 0.0])
    np.testing.assert_array_equal(g[1], [5.0, 5.0])


def test_errors():
    acc = Accumulator(1, 2, K=1)
    with pytest.raises(ValueError):
        acc.accumulate(0, [1.0, 2.0, 3.0])
    acc.accumulate(0, [1.0, 2.0])
    with pytest.raises(RuntimeError):
        acc.accumulate(0, [1.0, 2.0])
    with pytest.raises(IndexError):
        acc.accumulate(1, [1.0, 2.0])
    early = Accumulator(2, 2, K=2)
    early.accumulate(0, [1.0, 1.0])
    with pytest.raises(RuntimeError):
        early.finalize()


def test_exact_mean_any_order(rng):
    contribs = rng.standard_normal((24, 5)) * 10.0
    acc = Accumulator(1, 5, K=24)
    total = np.zeros(5)
    for g in contribs:
        acc.accumulate(0, g)
        total = total + g
    np.testing.assert_array_equal(acc.finalize()[0], total / 24)


def test_modes_agree_without_noise():
    prob = make_conflicting_quadratics(2.0, 1.5, 3)
    theta = np.array([0.3, -0.2, 0.1])
    out = {}
    for mode in ("sequential", "stochastic"):
        acc = Accumulator(2, 3, 6, mode)
        for k, tasks in enumerate(acc.schedule()):
            for i in tasks:
                acc.accumulate(i, micro_batch_gradient(prob, i, theta, k, seed=0))
        out[mode] = acc.finalize()
    # K vs K/N summands: equal up to last-bit rounding of the running sum
    for a, b in zip(out["sequential"], out["stochastic"]):
        np.testing.assert_allclose(a, b, rtol=1e-14, atol=0)


def test_counts_at_finalize():
    seq = Accumulator(2, 1, 6, "sequential")
    sto = Accumulator(2, 1, 6, "stochastic")
    for acc in (seq, sto):
        for tasks in acc.schedule():
            for i in tasks:
                acc.accumulate(i, [1.0])
    assert seq.counts == [6, 6]
    assert sto.counts == [3, 3]


def test_shuffled_blocks_cover_each_task_once():
    acc = Accumulator(3, 1, 9, "stochastic", shuffle_seed=5)
    seen = set()
    for _ in range(4):
        sched = acc.schedule()
        assert sorted(t for (t,) in sched) == [0] * 3 + [1] * 3 + [2] * 3
        seen.add(tuple(sched))
        for (i,) in sched:
            acc.accumulate(i, [0.0])
        acc.finalize()
    assert len(seen) > 1
