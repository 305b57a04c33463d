import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pushsum_sgp.errors import FitWindowError
from pushsum_sgp.spectral import (
    analytic_contraction, analyze_product, averaging_error, estimate_contraction, expected_lambda2_random,
    lambda2_of_product, ordered_product, random_offsets, topology_report,
)
from pushsum_sgp.topology import KINDS, MixingSchedule

from oracles import exp_hops, push_matrix

CONNECTED = [("one_peer_exponential", n) for n in (4, 6, 8, 16)] + \
    [("two_peer_exponential", n) for n in (4, 8, 12)] + \
    [("undirected_bipartite_exponential", n) for n in (4, 8, 12)] + \
    [("dense_uniform", 8), ("complete_cycling", 8), ("complete_cycling", 5)]


def test_ordering_newest_on_left():
    s = MixingSchedule("two_peer_exponential", 8)
    want = s.matrix(3) @ s.matrix(2) @ s.matrix(1)
    assert np.allclose(ordered_product(s, 1, 3), want, atol=0)


def test_one_peer_window_of_one_period_averages_exactly():
    assert lambda2_of_product(MixingSchedule("one_peer_exponential", 32), 0, 5) <= 1e-10
    assert lambda2_of_product(MixingSchedule("one_peer_exponential", 2), 0, 1) <= 1e-10


def test_complete_cycling_comparator():
    pa = analyze_product(MixingSchedule("complete_cycling", 32), 0, 5)
    assert abs(pa.lambda2 - 0.6) <= 0.05
    # the unsquared singular value is far from the quoted figure
    assert pa.sigma2 > 0.7


def test_window_validation_and_dense():
    with pytest.raises(ValueError):
        lambda2_of_product(MixingSchedule("dense_uniform", 4), 0, 0)
    assert lambda2_of_product(MixingSchedule("dense_uniform", 6), 0, 1) <= 1e-28


def test_random_neighbour_monte_carlo():
    mean_e, se_e = expected_lambda2_random("random_exponential_neighbor", 32, 5, 500, seed=0)
    mean_u, se_u = expected_lambda2_random("random_uniform_neighbor", 32, 5, 500, seed=0)
    assert abs(mean_e - 0.4) <= 0.05 and abs(mean_u - 0.2) <= 0.05
    assert 0 < se_e < 0.01 and 0 < se_u < 0.01


def test_monte_carlo_reproducible_and_oracle_products():
    a = expected_lambda2_random("random_uniform_neighbor", 8, 3, 1, seed=4)
    assert a == expected_lambda2_random("random_uniform_neighbor", 8, 3, 1, seed=4)
    offsets = random_offsets("random_exponential_neighbor", 8, 3, 1, np.random.default_rng(4))
    M = np.eye(8)
    for step in offsets[0]:
        P = np.zeros((8, 8))
        for i, h in enumerate(step):
            P[i, i] += 0.5
            P[(i + h) % 8, i] += 0.5
        M = P @ M
    lam = np.linalg.svd(M, compute_uv=False)[1] ** 2
    assert expected_lambda2_random("random_exponential_neighbor", 8, 3, 1, seed=4)[0] == pytest.approx(lam, abs=1e-14)
    with pytest.raises(ValueError):
        expected_lambda2_random("random_ring", 8, 3, 10)
    with pytest.raises(ValueError):
        expected_lambda2_random("random_uniform_neighbor", 8, 3, 0)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["one_peer_exponential", "two_peer_exponential", "complete_cycling"]),
       st.integers(3, 24), st.integers(0, 10), st.integers(1, 6), st.integers(0, 2**31))
def test_averaging_bound(kind, n, start, window, seed):
    s = MixingSchedule(kind, n)
    y0 = np.random.default_rng(seed).standard_normal((n, 2))
    after, before = averaging_error(s, y0, start, window)
    pa = analyze_product(s, start, window)
    assert after <= pa.lambda2 * before * (1 + 1e-9) + 1e-24
    assert np.all(np.diff(pa.singular_values) <= 0) and np.all(pa.singular_values >= 0)
    assert pa.sigma2 <= pa.singular_values[0]


def test_single_matrix_second_below_first():
    P = push_matrix(7, exp_hops(7)[:2])
    s = MixingSchedule.from_matrix(P)
    pa = analyze_product(s, 0, 1)
    assert pa.sigma2 <= pa.singular_values[0] and 0 <= pa.lambda2 <= 1


@pytest.mark.parametrize("kind,n", CONNECTED)
def test_contraction_within_analytic_bound(kind, n):
    est = estimate_contraction(MixingSchedule(kind, n), d=3, seed=1)
    assert est.q_hat < 1 and est.contracting
    assert est.q_hat <= est.q_analytic


def test_contraction_static_asymmetric(example_p):
    est = estimate_contraction(MixingSchedule.from_matrix(example_p), d=2)
    assert 0 < est.q_hat < 1 and est.q_hat <= est.q_analytic and not est.finite_time


def test_dense_uniform_is_one_step():
    est = estimate_contraction(MixingSchedule("dense_uniform", 8))
    assert est.q_hat == 0.0 and est.finite_time
    assert est.deviations[1] <= 1e-12 * est.deviations[0]


def test_disconnected_control():
    blocks = np.zeros((6, 6))
    blocks[:3, :3] = 1 / 3
    blocks[3:, 3:] = 1 / 3
    est = estimate_contraction(MixingSchedule.from_matrix(blocks), iters=40, seed=2)
    assert est.q_hat == pytest.approx(1.0, abs=1e-6) and not est.contracting
    assert est.q_analytic == 1.0 and est.Delta == np.inf


def test_fit_window_error():
    with pytest.raises(FitWindowError):
        estimate_contraction(MixingSchedule("one_peer_exponential", 16), iters=5)


def test_analytic_formula():
    lam, q, C = analytic_contraction(8, 2, 3, 3, tau=0)
    assert lam == pytest.approx(1 - 8 * 2.0 ** -9)
    assert q == pytest.approx(lam ** (1 / 10))
    lam1, q1, _ = analytic_contraction(8, 2, 3, 3, tau=1)
    assert lam1 > lam and q1 > q


@pytest.mark.parametrize("kind", [k for k in KINDS if k != "static_custom"] +
                         ["random_exponential_neighbor", "random_uniform_neighbor"])
def test_report_is_json_ready(kind):
    import json
    rep = topology_report(kind, 8, 3, trials=20, seed=0)
    json.dumps(rep, allow_nan=False)
