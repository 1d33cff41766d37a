import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipac.contrastive import PairBatch, brute_force_info_nce, brute_force_ipac, info_nce, ipac_loss
from ipac.errors import EmptyBatch, NonPositiveTemperature
from ipac.gradsuite import ipac_embedding_error

IDENTITY = np.eye(2)


def unit_rows(rng, n, d):
    z = rng.normal(size=(n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def test_single_pair_is_zero(rng):
    z = unit_rows(rng, 1, 5)
    b = PairBatch(z, unit_rows(rng, 1, 5), 0.3)
    assert info_nce(b).item() == 0.0
    assert brute_force_info_nce(b) == 0.0


def test_identity_batch_tau_one():
    b = PairBatch(IDENTITY, IDENTITY, 1.0)
    expected = math.log(1 + math.exp(-1))
    assert expected == pytest.approx(0.313262, abs=1e-6)
    assert brute_force_info_nce(b) == pytest.approx(expected, abs=1e-15)
    assert info_nce(b).item() == pytest.approx(expected, abs=1e-15)


def test_identity_batch_tau_half():
    b = PairBatch(IDENTITY, IDENTITY, 0.5)
    expected = math.log(1 + math.exp(-2))
    assert expected == pytest.approx(0.126928, abs=1e-6)
    assert info_nce(b).item() == pytest.approx(expected, abs=1e-15)


def test_ipac_symmetric_batch_directions_equal():
    b = PairBatch(IDENTITY, IDENTITY, 1.0)
    assert info_nce(b, "e2t").item() == info_nce(b, "t2e").item()
    assert ipac_loss(b).item() == pytest.approx(0.313262, abs=1e-6)


def test_ipac_swap_and_permutation_invariance(rng):
    ze, zt = unit_rows(rng, 6, 4), unit_rows(rng, 6, 4)
    base = ipac_loss(PairBatch(ze, zt, 0.1)).item()
    assert ipac_loss(PairBatch(zt, ze, 0.1)).item() == pytest.approx(base, abs=1e-14)
    perm = rng.permutation(6)
    assert ipac_loss(PairBatch(ze[perm], zt[perm], 0.1)).item() == pytest.approx(base, abs=1e-14)


def test_brute_force_agreement_many_batches():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 9))
        tau = float(rng.choice([0.05, 0.1, 1.0]))
        b = PairBatch(unit_rows(rng, n, 5), unit_rows(rng, n, 5), tau)
        for d in ("e2t", "t2e"):
            assert abs(info_nce(b, d).item() - brute_force_info_nce(b, d)) < 1e-12
        assert abs(ipac_loss(b).item() - brute_force_ipac(b)) < 1e-12


def test_large_temperature_limit_is_log_n(rng):
    for n in (2, 5, 8):
        b = PairBatch(unit_rows(rng, n, 3), unit_rows(rng, n, 3), 1e6)
        assert brute_force_info_nce(b) == pytest.approx(math.log(n), abs=1e-6)
        assert info_nce(b).item() == pytest.approx(math.log(n), abs=1e-6)


@pytest.mark.parametrize("tau", [0.0, -0.1])
def test_rejects_non_positive_temperature(tau):
    with pytest.raises(NonPositiveTemperature):
        PairBatch(IDENTITY, IDENTITY, tau)


def test_rejects_empty_batch():
    with pytest.raises(EmptyBatch):
        PairBatch(np.zeros((0, 3)), np.zeros((0, 3)), 0.1)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.sampled_from([0.05, 0.1, 0.5, 1.0]), st.integers(0, 10_000))
def test_loss_non_negative(n, tau, seed):
    rng = np.random.default_rng(seed)
    b = PairBatch(unit_rows(rng, n, 4), unit_rows(rng, n, 4), tau)
    assert info_nce(b).item() >= 0.0
    assert ipac_loss(b).item() >= 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000), st.floats(0.01, 1.0))
def test_strictly_decreasing_in_positive_similarity(n, seed, bump):
    # raising one positive logit, all other entries fixed, lowers the loss.
    # Unit rows keep logits in the cosine range, as in training; raw Gaussian
    # rows can saturate the loss below float64 resolution.
    rng = np.random.default_rng(seed)
    ze, zt = unit_rows(rng, n, 3), unit_rows(rng, n, 3)
    logits = ze @ zt.T
    i = int(rng.integers(0, n))
    raised = logits.copy()
    raised[i, i] += bump

    def loss(L):
        from ipac.numerics import Tensor, cross_entropy
        return cross_entropy(Tensor(L / 0.1), np.arange(n)).item()

    assert loss(raised) < loss(logits)


def test_gradient_matches_finite_differences():
    for seed in range(3):
        assert ipac_embedding_error(seed) < 1e-5
