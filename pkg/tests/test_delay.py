import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pushsum_sgp.delay import (
    DelaySampler, InTransitMessage, MessageBuffer, augment, flush, run_pushsum_with_delays, step_with_delays,
)
from pushsum_sgp.errors import DelayBoundError, ProtocolError, ShapeError
from pushsum_sgp.pushsum import NetworkState, gossip_step, run_pushsum
from pushsum_sgp.topology import MixingSchedule, validate_column_stochastic

from oracles import augmented, run_augmented

# rows/cols: real nodes 0..3, then 0_1 and 0_2 (node 0's chain at depths 1, 2)
EXAMPLE_6X6 = np.array([
    [1 / 2, 0, 0, 0, 1, 0],
    [1 / 2, 1 / 2, 0, 1 / 3, 0, 0],
    [0, 1 / 2, 1 / 2, 0, 0, 0],
    [0, 0, 1 / 2, 1 / 3, 0, 0],
    [0, 0, 0, 0, 0, 1],
    [0, 0, 0, 1 / 3, 0, 0],
])
SUB = [0, 1, 2, 3, 4, 8]


def example_delays():
    D = np.zeros((4, 4), dtype=np.int64)
    D[0, 3] = 2
    return D


def random_case(seed, n, tau):
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < 0.5
    np.fill_diagonal(mask, True)
    P = mask * rng.uniform(0.1, 1.0, (n, n))
    P /= P.sum(axis=0)
    D = np.where(mask, rng.integers(0, tau + 1, (n, n)), 0)
    np.fill_diagonal(D, 0)
    return P, D


def test_example_6x6(example_p):
    A = augment(example_p, example_delays(), 2)
    assert A.shape == (12, 12)
    assert np.array_equal(A[np.ix_(SUB, SUB)], EXAMPLE_6X6)
    assert A[0, 3] == 0 and A[8, 3] == 1 / 3
    assert validate_column_stochastic(EXAMPLE_6X6)
    assert np.array_equal(A, augmented(example_p, example_delays(), 2))


def test_zero_delays_embed(example_p):
    A = augment(example_p, np.zeros((4, 4), dtype=int), 2)
    assert np.array_equal(A[:4, :4], example_p)
    assert not A[4:, :4].any()
    assert np.array_equal(A[:8, 4:], np.eye(8))
    assert np.array_equal(augment(example_p, np.zeros((4, 4), dtype=int), 0), example_p)


def test_delay_bound(example_p):
    D = example_delays()
    with pytest.raises(DelayBoundError):
        augment(example_p, D, 1)
    D = np.eye(4, dtype=int)
    with pytest.raises(DelayBoundError):
        augment(example_p, D, 2)
    with pytest.raises(ShapeError):
        augment(example_p, np.zeros((3, 3), dtype=int), 2)


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(0, 3))
def test_augment_column_stochastic_and_block_structure(seed, n, tau):
    P, D = random_case(seed, n, tau)
    A = augment(P, D, tau)
    assert validate_column_stochastic(A)
    assert np.array_equal(A, augmented(P, D, tau))
    for r in range(tau):
        assert np.array_equal(A[r * n:(r + 1) * n, (r + 1) * n:(r + 2) * n], np.eye(n))
    other = A.copy()
    other[:, :n] = 0
    for r in range(tau):
        other[r * n:(r + 1) * n, (r + 1) * n:(r + 2) * n] = 0
    assert not other.any()


def _buffer_run(P_list, D_list, tau, x0):
    net = NetworkState(x0, np.ones(len(x0)))
    buf = MessageBuffer(tau)
    xs, ws = [], []
    for P, D in zip(P_list, D_list):
        net, buf = step_with_delays(net, buf, P, D)
        xs.append(net.x)
        ws.append(net.w)
    return xs, ws, net, buf


def test_example_runtime_matches_6x6(example_p):
    x0 = np.random.default_rng(0).standard_normal((4, 2))
    X = np.zeros((6, 2))
    W = np.zeros(6)
    X[:4], W[:4] = x0, 1.0
    Dz = np.zeros((4, 4), dtype=int)
    # delayed edge at k = 0 only, then plain rounds
    P_list = [example_p] * 6
    D_list = [example_delays()] + [Dz] * 5
    xs, ws, _, _ = _buffer_run(P_list, D_list, 2, x0)
    plain = EXAMPLE_6X6.copy()
    plain[0, 3], plain[5, 3] = 1 / 3, 0
    for k in range(6):
        M = EXAMPLE_6X6 if k == 0 else plain
        X, W = M @ X, M @ W
        assert np.max(np.abs(xs[k] - X[:4])) < 1e-12 and np.max(np.abs(ws[k] - W[:4])) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(0, 3), st.integers(1, 4))
def test_buffer_equals_augmented_oracle(seed, n, tau, d):
    rng = np.random.default_rng(seed)
    cases = [random_case(int(s), n, tau) for s in rng.integers(0, 2**32, 50)]
    P_list, D_list = [c[0] for c in cases], [c[1] for c in cases]
    x0 = rng.standard_normal((n, d))
    xs, ws, net, buf = _buffer_run(P_list, D_list, tau, x0)
    oxs, ows, X, W = run_augmented(P_list, D_list, tau, x0)
    for k in range(50):
        assert np.max(np.abs(xs[k] - oxs[k])) <= 1e-10
        assert np.max(np.abs(ws[k] - ows[k])) <= 1e-10
    # in-flight mass equals the oracle's virtual-node mass
    mx, mw = buf.mass(d)
    assert np.allclose(mx, X[n:].sum(0), atol=1e-10) and abs(mw - W[n:].sum()) < 1e-10


def test_zero_delay_equals_gossip(example_p, backend):
    x0 = np.random.default_rng(3).standard_normal((4, 3))
    net = NetworkState(x0, np.ones(4))
    out, buf = step_with_delays(net, MessageBuffer(2), example_p, np.zeros((4, 4), dtype=int))
    ref = gossip_step(net, example_p)
    assert np.array_equal(out.x, ref.x) and np.array_equal(out.w, ref.w) and len(buf) == 0


@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(0, 3))
def test_constant_vectors_survive_delays(seed, n, tau):
    s = MixingSchedule("one_peer_exponential", n)
    v = np.random.default_rng(seed).standard_normal(3)
    net = NetworkState(np.tile(v, (n, 1)), np.ones(n))
    buf = MessageBuffer(tau)
    sampler = DelaySampler("uniform", tau, seed)
    for k in range(12):
        P = s.matrix(k)
        net, buf = step_with_delays(net, buf, P, sampler.sample(P, k))
        assert np.allclose(net.z, v, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("mode", ["fixed", "uniform"])
@pytest.mark.parametrize("tau", [1, 2, 3])
def test_flush_recovers_mean(mode, tau):
    s = MixingSchedule("one_peer_exponential", 8)
    y0 = np.random.default_rng(tau).standard_normal((8, 2))
    z = run_pushsum_with_delays(y0, s, 300, DelaySampler(mode, tau, 5))
    assert np.max(np.abs(z - run_pushsum(y0, s, 300))) < 1e-9
    assert np.max(np.abs(z - y0.mean(0))) < 1e-9


def test_missed_delivery_and_bounds():
    buf = MessageBuffer(1)
    with pytest.raises(DelayBoundError):
        buf.push(InTransitMessage(np.zeros(1), 0.0, 0, 1, 0, 2))
    buf.push(InTransitMessage(np.ones(1), 0.5, 0, 1, 0, 1))
    with pytest.raises(ProtocolError):
        buf.pop_due(2)


def test_delivery_order_sorted_by_sender_then_sent_at():
    buf = MessageBuffer(3)
    for s, t in [(2, 1), (0, 3), (1, 2), (0, 1)]:
        buf.push(InTransitMessage(np.zeros(1), 0.0, s, 0, t, 4))
    assert [(m.sender, m.sent_at) for m in buf.pop_due(4)] == [(0, 1), (0, 3), (1, 2), (2, 1)]


def test_sampler_modes_and_determinism():
    P = MixingSchedule("two_peer_exponential", 8).matrix(0)
    assert not DelaySampler("none", 3).sample(P, 0).any()
    D = DelaySampler("fixed", 2).sample(P, 0)
    assert np.all(D[(P > 0) & ~np.eye(8, dtype=bool)] == 2) and not np.diag(D).any()
    a = [DelaySampler("uniform", 3, 11).sample(P, k) for k in range(5)]
    b = [DelaySampler("uniform", 3, 11).sample(P, k) for k in range(5)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(x.max() <= 3 and x.min() >= 0 for x in a)
    with pytest.raises(ValueError):
        DelaySampler("poisson", 1)


def test_flush_empties_buffer(example_p):
    net = NetworkState(np.ones((4, 1)), np.ones(4))
    net, buf = step_with_delays(net, MessageBuffer(2), example_p, example_delays())
    assert len(buf) == 1
    net = flush(net, buf)
    assert len(buf) == 0 and np.isclose(net.w.sum(), 4.0)
