import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from castnet import tensor as T
from castnet.data import make_samples
from castnet.errors import ConfigError, ContractError, NumericError, ShapeError
from castnet.model import forward
from castnet.optim import Adam, AdamState, adam_step
from castnet.synthetic import SynthSpec, generate
from castnet.training import (ETA_GRID, LAMBDA_GRID, TrainConfig, expand_space, grid_search, group_lasso,
                              k_sweep_rows, membership, model_group_lasso, mse_loss, ortho_loss,
                              total_loss, train)

from helpers import random_batch, random_params, tiny_config


# -- loss terms ------------------------------------------------------------------

def test_ortho_of_duplicate_rows():
    assert ortho_loss(T.Tensor([[1.0, 0.0], [1.0, 0.0]])).item() == 2.0


def test_ortho_of_identity_is_zero():
    assert ortho_loss(T.Tensor(np.eye(3))).item() == 0.0


def test_group_lasso_two_groups():
    # columns [3,4] and [0,0]: sqrt(2) * 5 + sqrt(2) * 0
    assert group_lasso([T.Tensor([[3.0, 0.0], [4.0, 0.0]])]).item() == pytest.approx(5 * np.sqrt(2), abs=1e-12)


def test_group_lasso_sums_matrices():
    Z = T.Tensor([[3.0, 0.0], [4.0, 0.0]])
    assert group_lasso([Z, Z]).item() == pytest.approx(10 * np.sqrt(2), abs=1e-12)
    assert group_lasso([]).item() == 0.0


def test_mse_value():
    assert mse_loss(T.Tensor([0.0, 0.0]), np.array([1.0, 3.0])).item() == 5.0


def test_mse_contracts():
    with pytest.raises(ContractError):
        mse_loss(T.Tensor([0.0]), np.array([1.0, 2.0]))
    with pytest.raises(ContractError):
        mse_loss(T.Tensor(np.zeros(0)), np.zeros(0))


def test_membership_averages_window():
    alpha = np.array([[[1.0, 0.0], [0.0, 1.0]]])  # [K=1, w=2, L=2]
    np.testing.assert_array_equal(membership(alpha).data, [[0.5, 0.5]])


def test_model_group_lasso_groups_by_input_row():
    c = tiny_config(K=1)
    params = random_params(c, 0)
    expected = 0.0
    for name in ("global.community1.lstm.W_input", "local.lstm.W_input", "static.fc.W"):
        W = params[name].data  # [inputs x outputs]
        expected += np.sqrt(W.shape[1]) * np.linalg.norm(W, axis=1).sum()
    assert model_group_lasso(params, c).item() == pytest.approx(expected, rel=1e-12)


def test_total_loss_decomposes():
    c = tiny_config()
    params = random_params(c, 1)
    batch = random_batch(c, 1)
    out = forward(params, c, batch)
    parts = total_loss(out, batch, params, c, lam=0.3, eta=0.02)
    assert parts.total.item() == pytest.approx(parts.mse + 0.3 * parts.ortho + 0.02 * parts.gl, abs=1e-9)
    plain = total_loss(out, batch, params, c, lam=0.0, eta=0.0)
    assert plain.total.item() == pytest.approx(np.mean((out.yhat.data - batch.y) ** 2), abs=1e-12)


def test_total_loss_ortho_weights_windows_by_samples():
    c = tiny_config()
    params = random_params(c, 2)
    batch = random_batch(c, 2, B=5, U=2)
    out = forward(params, c, batch)
    D = out.alpha.data.mean(axis=2)  # [U, K, L]
    per = [np.sum((d @ d.T - np.eye(c.K)) ** 2) for d in D]
    expected = np.mean([per[u] for u in batch.window_index])
    assert total_loss(out, batch, params, c, 1.0, 0.0).ortho == pytest.approx(expected, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(0, 1000))
def test_ortho_of_orthonormal_rows_vanishes(K, seed):
    Q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(K + 2, K)))
    assert ortho_loss(T.Tensor(Q.T)).item() < 1e-12


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-10, 10)), st.floats(0.0, 5.0))
def test_group_lasso_is_homogeneous(Z, c):
    base = group_lasso([T.Tensor(Z)]).item()
    assert group_lasso([T.Tensor(Z * c)]).item() == pytest.approx(c * base, rel=1e-9, abs=1e-9)
    assert base >= 0


@settings(max_examples=100, deadline=None)
# magnitudes below 1e-100 are snapped to zero: their squares underflow, which no float norm survives
@given(arrays(np.float64, (4, 3), elements=st.floats(-10, 10).map(lambda v: v if abs(v) > 1e-100 else 0.0)),
       st.integers(0, 1000))
def test_group_lasso_ignores_sign_flips_and_rotations_within_groups(Z, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    signs = rng.choice([-1.0, 1.0], size=(4, 1))
    base = group_lasso([T.Tensor(Z)]).item()
    assert group_lasso([T.Tensor(Q @ Z)]).item() == pytest.approx(base, rel=1e-9, abs=1e-9)
    assert group_lasso([T.Tensor(signs * Z)]).item() == pytest.approx(base, rel=1e-12, abs=1e-12)
    assert (base == 0) == (not Z.any())


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 5)), elements=st.floats(-3, 3)))
def test_ortho_is_non_negative(D):
    assert ortho_loss(T.Tensor(D)).item() >= 0.0


def test_group_lasso_shrinks_with_eta(small_splits):
    gl = []
    for eta in ETA_GRID[::6]:
        r = train(small_splits.train, small_splits.val, _quick(eta=eta, epochs=30, patience=100, lr=0.01))
        gl.append(model_group_lasso(r.params, r.model_config).item())
    for a, b in zip(gl, gl[1:]):
        assert b <= a * 1.05


# -- Adam ------------------------------------------------------------------------

def test_adam_first_step_moves_by_lr():
    p = {"w": np.array([0.5])}
    adam_step(p, {"w": np.array([1.0])}, AdamState(lr=0.001))
    assert p["w"][0] == pytest.approx(0.5 - 0.001, abs=1e-10)


def test_adam_zero_gradient_leaves_parameter():
    p = {"w": np.array([0.5, -1.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    np.testing.assert_array_equal(p["w"], [0.5, -1.0])


def test_adam_two_steps_match_reference():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    g1, g2 = np.array([0.3, -2.0]), np.array([-0.1, 0.5])
    p = {"w": np.array([1.0, 2.0])}
    st_ = AdamState(lr=lr)
    adam_step(p, {"w": g1}, st_)
    adam_step(p, {"w": g2}, st_)
    m1, v1 = (1 - b1) * g1, (1 - b2) * g1 ** 2
    w1 = np.array([1.0, 2.0]) - lr * (m1 / (1 - b1)) / (np.sqrt(v1 / (1 - b2)) + eps)
    m2, v2 = b1 * m1 + (1 - b1) * g2, b2 * v1 + (1 - b2) * g2 ** 2
    w2 = w1 - lr * (m2 / (1 - b1 ** 2)) / (np.sqrt(v2 / (1 - b2 ** 2)) + eps)
    np.testing.assert_allclose(p["w"], w2, rtol=1e-14)


def test_adam_nan_gradient_names_parameter_and_touches_nothing():
    p = {"a": np.array([1.0]), "bad": np.array([2.0])}
    with pytest.raises(NumericError, match="bad"):
        adam_step(p, {"a": np.array([1.0]), "bad": np.array([np.nan])}, AdamState())
    assert p["a"][0] == 1.0


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step({"a": np.zeros(2)}, {"a": np.zeros(3)}, AdamState())


def test_adam_reads_tensor_grads():
    x = T.parameter(np.array([3.0]))
    opt = Adam({"x": x}, lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        T.sum(x * x).backward()
        opt.step()
    assert abs(x.data[0]) < 0.1


# -- training loop -----------------------------------------------------------------

@pytest.fixture(scope="module")
def small_splits():
    panel, _ = generate(SynthSpec(L=4, T=40, n=3, n_static=2, K=2, seed=1).resolved())
    return make_samples(panel, w=3, tau=1)


def _quick(**kw):
    base = dict(w=3, K=2, hidden=4, local_hidden=4, static_latent=2, epochs=3, batch_size=16, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_training_is_deterministic(small_splits):
    a = train(small_splits.train, small_splits.val, _quick())
    b = train(small_splits.train, small_splits.val, _quick())
    assert a.report.to_json() == b.report.to_json()
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].data, b.params[k].data)


def test_training_keeps_best_validation_epoch(small_splits):
    r = train(small_splits.train, small_splits.val, _quick(epochs=6))
    vals = [e.val_mse for e in r.report.epochs]
    assert r.report.best_epoch == int(np.argmin(vals))
    assert r.report.best_val_mse == min(vals)


def test_early_stopping(small_splits):
    r = train(small_splits.train, small_splits.val, _quick(epochs=200, patience=2, lr=0.05))
    assert len(r.report.epochs) - 1 - r.report.best_epoch <= 2


def test_constant_target_is_learned():
    panel, _ = generate(SynthSpec(L=3, T=40, n=2, n_static=1, K=1, seed=2).resolved())
    panel.y[:] = 7
    sp = make_samples(panel, w=2)
    r = train(sp.train, sp.val, TrainConfig(w=2, K=1, hidden=4, local_hidden=4, static_latent=2,
                                            epochs=40, patience=100, lr=0.01, seed=0, dropout=0.0))
    assert r.report.best_val_mae < 0.05


def test_empty_split_rejected(small_splits):
    empty = small_splits.val.__class__(small_splits.val.z_dyn, small_splits.val.z_stat, small_splits.val.y_panel,
                                        small_splits.val.proximity, np.zeros(0, dtype=int), 3, 1)
    with pytest.raises(ContractError):
        train(small_splits.train, empty, _quick())


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"lambda_": 0.1})
    assert TrainConfig.from_dict(TrainConfig(K=5).to_dict()) == TrainConfig(K=5)


def test_ablation_switches_zero_the_weights():
    cfg = TrainConfig(lam=0.05, eta=0.01, no_gl=True, no_ortho=True)
    assert cfg.effective_lam == 0.0 and cfg.effective_eta == 0.0


def test_grids():
    assert LAMBDA_GRID == (0.001, 0.005, 0.01, 0.05)
    assert ETA_GRID[0] == 0.001 and ETA_GRID[-1] == 0.01 and len(ETA_GRID) == 19


def test_expand_space():
    cfgs = expand_space(TrainConfig(), {"K": [1, 2], "lam": [0.01, 0.05]})
    assert len(cfgs) == 4 and {(c.K, c.lam) for c in cfgs} == {(1, 0.01), (1, 0.05), (2, 0.01), (2, 0.05)}
    with pytest.raises(ConfigError):
        expand_space(TrainConfig(), {"bogus": [1]})


def test_grid_search_ranks_and_sweeps(small_splits):
    entries = grid_search(small_splits, _quick(epochs=2), {"K": [0, 1, 2]})
    maes = [e.val_mae for e in entries]
    assert maes == sorted(maes)
    rows = k_sweep_rows(entries)
    assert [r["K"] for r in rows] == [0, 1, 2]


def test_grid_search_flags_window_mismatch(small_splits):
    entries = grid_search(small_splits, _quick(epochs=1), {"w": [3, 5]})
    bad = [e for e in entries if e.config.w == 5]
    assert bad[0].result is None and "w=3" in bad[0].error
