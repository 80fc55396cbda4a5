"""Shared fixtures: tiny random panels, batches and an independent numpy forward pass."""

import numpy as np

from castnet import tensor as T
from castnet.data.samples import Batch
from castnet.model import ModelConfig, community_prefix, init_params


def tiny_config(**kw) -> ModelConfig:
    base = dict(L=3, n=2, n_static=2, w=2, K=2, hidden=2, local_hidden=2, static_latent=2, dropout=0.0)
    base.update(kw)
    return ModelConfig(**base)


def random_params(config: ModelConfig, seed: int, scale: float = 1.0) -> dict:
    """Glorot init with every bias randomized too, so no term is trivially zero."""
    rng = np.random.default_rng(seed)
    params = init_params(config, rng)
    for p in params.values():
        p.data[...] = rng.normal(scale=scale, size=p.shape)
    return params


def random_batch(config: ModelConfig, seed: int, B: int = 4, U: int = 2) -> Batch:
    rng = np.random.default_rng(seed + 1000)
    c = config
    windows = rng.normal(size=(U, c.w, c.L, c.n))
    window_index = rng.integers(0, U, size=B)
    d = rng.integers(0, c.L, size=B)
    onehot = np.zeros((B, c.L))
    onehot[np.arange(B), d] = 1.0
    prox = rng.uniform(0.1, 1.0, size=(B, c.L))
    return Batch(windows=windows, window_index=window_index, local=windows[window_index, :, d, :],
                 static=rng.normal(size=(B, c.n_static)), location_onehot=onehot, proximity=prox,
                 y=rng.normal(size=B), t=window_index, d=d)


# -- reference implementation, one sample at a time, plain numpy loops ------------

def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def np_lstm(xs, Wx, Wh, b):
    m = Wh.shape[0]
    h, c = np.zeros(m), np.zeros(m)
    out = []
    for x in xs:
        z = x @ Wx + h @ Wh + b
        i, f, o, g = _sig(z[:m]), _sig(z[m:2 * m]), _sig(z[2 * m:3 * m]), np.tanh(z[3 * m:])
        c = f * c + i * g
        h = o * np.tanh(c)
        out.append(h)
    return np.array(out)


def np_forward(params: dict, c: ModelConfig, window, local, static, d, prox):
    P = {k: v.data for k, v in params.items()}
    emb = P["static.embedding"][d]
    nus, alphas = [], []
    for k in range(c.K):
        pre = community_prefix(k)
        if c.no_sa:
            ctx = window.reshape(c.w, c.L * c.n)
            alpha = np.full((c.w, c.L), 1.0 / c.L)
        else:
            alpha = np.array([_softmax(np.array([P[f"{pre}.spatial.v"] @ np.tanh(x @ P[f"{pre}.spatial.W"]
                                                                               + P[f"{pre}.spatial.b"])
                                                 for x in window[t]])) for t in range(c.w)])
            ctx = np.array([alpha[t] @ window[t] for t in range(c.w)])
        h = np_lstm(ctx, P[f"{pre}.lstm.W_input"], P[f"{pre}.lstm.W_hidden"], P[f"{pre}.lstm.bias"])
        if c.no_ta:
            nus.append(h[-1])
        else:
            beta = _softmax(alpha @ prox)
            nus.append(beta @ h)
        alphas.append(alpha)
    parts = []
    gamma = np.zeros(0)
    if c.K:
        nus = np.array(nus)
        if c.no_ca:
            parts.append(nus.reshape(-1))
            gamma = np.full(c.K, 1.0 / c.K)
        else:
            u = np.array([P["global.attention.r"] @ np.tanh(nu @ P["global.attention.V"] + emb) for nu in nus])
            gamma = _softmax(u)
            parts.append(gamma @ nus)
    s = np_lstm(local, P["local.lstm.W_input"], P["local.lstm.W_hidden"], P["local.lstm.bias"])
    if c.no_ta:
        parts.append(s[-1])
    else:
        delta = _softmax(np.array([P["local.attention.v"] @ np.tanh(x @ P["local.attention.W"]
                                                                    + P["local.attention.b"]) for x in s]))
        parts.append(delta @ s)
    parts.append(emb)
    if not c.no_sc:
        parts.append(np.tanh(static @ P["static.fc.W"] + P["static.fc.b"]))
    feats = np.concatenate(parts)
    return float(feats @ P["head.W"] + P["head.b"][0]), gamma


def to_tensors(arrays: dict) -> dict:
    return {k: T.parameter(np.array(v, dtype=np.float64)) for k, v in arrays.items()}
