import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from castnet.errors import ConfigError, ContractError
from castnet.synthetic import (GroundTruth, SynthSpec, contribution_map, generate, ground_truth,
                               planted_signal, score_recovery)


def test_default_shape():
    spec = SynthSpec().resolved()
    assert (spec.L, spec.T, spec.n, spec.K) == (12, 200, 6, 3)
    assert len(spec.informative) == 2 and len(spec.irrelevant) == 4
    assert spec.lags < 10  # shorter than the default window


def test_same_seed_same_panel():
    a, _ = generate(SynthSpec(seed=4))
    b, _ = generate(SynthSpec(seed=4))
    assert a.fingerprint() == b.fingerprint()
    c, _ = generate(SynthSpec(seed=5))
    assert c.fingerprint() != a.fingerprint()


def test_noise_free_single_lag_is_exact():
    # two single-location communities, each driven by the other one's feature 0 at lag 1
    spec = SynthSpec(L=2, T=30, n=2, n_static=1, K=2, informative=[0], kernel=[[[1.0]], [[1.0]]], lags=1,
                     self_weight=0.0, source_share=1.0, noise=0.0, seed=3)
    panel, _ = generate(spec)
    np.testing.assert_array_equal(panel.y[1:, 0], panel.x_dyn[:-1, 1, 0])
    np.testing.assert_array_equal(panel.y[1:, 1], panel.x_dyn[:-1, 0, 0])


def test_generated_panel_is_valid():
    panel, gt = generate(SynthSpec(seed=1))
    panel.validate()
    assert panel.n == 6 and panel.L == 12
    np.testing.assert_allclose(gt.membership.sum(axis=1), 1.0)
    np.testing.assert_allclose(gt.contribution.sum(axis=1), 1.0)
    assert gt.informative_mask.tolist() == [True, True, False, False, False, False]


def test_informative_features_lead_targets():
    # exhaustive scan: best lagged correlation of each feature's city-wide count with the city-wide target
    for seed in range(3):
        panel, gt = generate(SynthSpec(seed=seed))
        y = panel.y.sum(axis=1)
        best = np.zeros(panel.n)
        for j in range(panel.n):
            x = panel.x_dyn[:, :, j].sum(axis=1)
            best[j] = max(abs(np.corrcoef(x[:-lag], y[lag:])[0, 1]) for lag in range(1, 7))
        assert best[gt.informative_mask].min() > best[~gt.informative_mask].max()


def test_planted_signal_matches_direct_sum():
    spec = SynthSpec(L=4, T=20, n=3, n_static=1, K=2, lags=2, seed=0).resolved()
    panel, _ = generate(spec)
    s = planted_signal(panel.x_dyn, spec)
    k = np.asarray(spec.kernel)
    members = np.asarray(spec.assignment)
    C = contribution_map(spec)
    t, d = 10, 3
    inf = panel.x_dyn[:, :, spec.informative]
    expected_own = sum(inf[t - lag, d] @ k[members[d], :, lag - 1] for lag in (1, 2)) * np.sum(members == members[d])
    drive = [sum(inf[t - lag, members == c].sum(axis=0) @ k[c, :, lag - 1] for lag in (1, 2)) for c in range(2)]
    expected = spec.self_weight * expected_own + (1 - spec.self_weight) * (C[d] @ drive)
    assert s[t, d] == pytest.approx(expected, rel=1e-12)
    assert np.isnan(s[:2]).all()


def test_spec_validation():
    with pytest.raises(ConfigError):
        SynthSpec(L=2, K=3).resolved()
    with pytest.raises(ConfigError):
        SynthSpec(assignment=[0] * 12).resolved()
    with pytest.raises(ConfigError):
        SynthSpec(informative=[9]).resolved()
    with pytest.raises(ConfigError):
        SynthSpec(noise=1.5).resolved()


def test_ground_truth_round_trip():
    gt = ground_truth(SynthSpec())
    back = GroundTruth.from_dict(gt.to_dict())
    np.testing.assert_array_equal(back.membership, gt.membership)


# -- recovery score ---------------------------------------------------------------

def test_recovery_of_truth_is_one():
    gt = ground_truth(SynthSpec())
    assert score_recovery(gt.membership, gt) == pytest.approx(1.0, abs=1e-12)


def test_recovery_uniform_vs_indicator():
    truth = np.eye(4)[:2] * 1.0  # one-hot rows, L=4
    uniform = np.full((2, 4), 0.25)
    assert score_recovery(uniform, truth) == pytest.approx(0.5, abs=1e-12)


def test_recovery_shape_mismatch():
    with pytest.raises(ContractError):
        score_recovery(np.ones((2, 12)), ground_truth(SynthSpec()))


def _oracle(a, b):
    cos = (a / np.linalg.norm(a, axis=1, keepdims=True)) @ (b / np.linalg.norm(b, axis=1, keepdims=True)).T
    r, c = linear_sum_assignment(-cos)
    return cos[r, c].mean()


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 5))
def test_recovery_matches_assignment_oracle(seed, K):
    rng = np.random.default_rng(seed)
    a, b = rng.dirichlet(np.ones(7), size=K), rng.dirichlet(np.ones(7), size=K)
    assert score_recovery(a, b) == pytest.approx(_oracle(a, b), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000), st.permutations(range(4)))
def test_recovery_is_row_permutation_invariant(seed, perm):
    rng = np.random.default_rng(seed)
    a, b = rng.dirichlet(np.ones(6), size=4), rng.dirichlet(np.ones(6), size=4)
    assert score_recovery(a[list(perm)], b) == pytest.approx(score_recovery(a, b), abs=1e-12)


def test_recovery_enumerates_every_permutation():
    a = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    for perm in itertools.permutations(range(3)):
        assert score_recovery(a[list(perm)], a) == pytest.approx(1.0)
