"""The community-attentive forward pass.

Three paths feed a linear output head:

* global: K community blocks, each a spatial attention over locations, an
  LSTM over the window and a temporal attention queried by the target's
  proximity-weighted memberships; a community attention keyed by the
  target's location embedding mixes the K block summaries;
* local: an LSTM over the target's own dynamics with additive self-attention;
* static: the location embedding plus a tanh layer over static features.

Community blocks are evaluated together by stacking their weights along a K
axis. Parameters stay separate per block so checkpoints, regularizers and
feature-importance exports address each block by name.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .data.samples import Batch, Sample, check_onehot
from .errors import ContractError
from .tensor import Tensor

HIDDEN_GRID = (8, 16, 32, 64)


@dataclass(frozen=True)
class ModelConfig:
    L: int
    n: int
    n_static: int
    w: int
    K: int = 3
    hidden: int = 16
    local_hidden: int = 16
    static_latent: int = 8
    dropout: float = 0.1
    no_sa: bool = False
    no_ta: bool = False
    no_ca: bool = False
    no_sc: bool = False

    def __post_init__(self):
        if self.K < 0:
            raise ContractError(f"K must be >= 0, got {self.K}")
        for name in ("L", "n", "w", "hidden", "local_hidden"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")

    @property
    def head_inputs(self) -> int:
        size = self.local_hidden + self.hidden
        if self.K:
            size += self.K * self.hidden if self.no_ca else self.hidden
        if not self.no_sc:
            size += self.static_latent
        return size

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AttentionTrace:
    """Attention distributions for one sample (or a batch, with a leading axis)."""

    alpha: np.ndarray  # [K, w, L] spatial
    beta: np.ndarray  # [K, w] global temporal
    delta: np.ndarray  # [w] local temporal
    gamma: np.ndarray  # [K] community

    def __getitem__(self, i: int) -> "AttentionTrace":
        return AttentionTrace(self.alpha[i], self.beta[i], self.delta[i], self.gamma[i])


@dataclass
class Forward:
    yhat: Tensor  # [B]
    alpha: Tensor | None  # [U, K, w, L], one row per distinct window
    beta: Tensor | None  # [B, K, w]
    gamma: Tensor | None  # [B, K]
    delta: Tensor  # [B, w]
    window_index: np.ndarray  # [B]

    def trace(self) -> AttentionTrace:
        B = len(self.window_index)
        w = self.delta.shape[-1]
        if self.alpha is None:
            empty = np.zeros((B, 0, w))
            return AttentionTrace(np.zeros((B, 0, w, 0)), empty, self.delta.data, np.zeros((B, 0)))
        return AttentionTrace(self.alpha.data[self.window_index], self.beta.data,
                              self.delta.data, self.gamma.data)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape if shape is not None else (fan_in, fan_out))


def _lstm_params(rng, prefix: str, n_in: int, m: int) -> dict[str, Tensor]:
    bias = np.zeros(4 * m)
    bias[m:2 * m] = 1.0  # forget gate
    return {
        f"{prefix}.W_input": T.parameter(glorot(rng, n_in, 4 * m)),
        f"{prefix}.W_hidden": T.parameter(glorot(rng, m, 4 * m)),
        f"{prefix}.bias": T.parameter(bias),
    }


def _additive_params(rng, prefix: str, d: int) -> dict[str, Tensor]:
    return {
        f"{prefix}.W": T.parameter(glorot(rng, d, d)),
        f"{prefix}.b": T.parameter(np.zeros(d)),
        f"{prefix}.v": T.parameter(glorot(rng, d, 1, shape=(d,))),
    }


def community_prefix(k: int) -> str:
    """Dotted prefix of community block ``k`` (0-based index, 1-based name)."""
    return f"global.community{k + 1}"


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Glorot-uniform weights, zero biases (forget-gate bias 1)."""
    c = config
    p: dict[str, Tensor] = {}
    for k in range(c.K):
        pre = community_prefix(k)
        if not c.no_sa:
            p.update(_additive_params(rng, f"{pre}.spatial", c.n))
        n_in = c.L * c.n if c.no_sa else c.n
        p.update(_lstm_params(rng, f"{pre}.lstm", n_in, c.hidden))
    if c.K and not c.no_ca:
        p["global.attention.V"] = T.parameter(glorot(rng, c.hidden, c.hidden))
        p["global.attention.r"] = T.parameter(glorot(rng, c.hidden, 1, shape=(c.hidden,)))
    p.update(_lstm_params(rng, "local.lstm", c.n, c.local_hidden))
    if not c.no_ta:
        p.update(_additive_params(rng, "local.attention", c.local_hidden))
    p["static.embedding"] = T.parameter(glorot(rng, c.L, c.hidden))
    if not c.no_sc:
        p["static.fc.W"] = T.parameter(glorot(rng, c.n_static, c.static_latent))
        p["static.fc.b"] = T.parameter(np.zeros(c.static_latent))
    p["head.W"] = T.parameter(glorot(rng, c.head_inputs, 1, shape=(c.head_inputs,)))
    p["head.b"] = T.parameter(np.zeros(1))
    return p


def group_matrices(params: dict[str, Tensor], config: ModelConfig) -> dict[str, Tensor]:
    """Input-weight matrices under Group Lasso, stored [inputs x outputs]."""
    out = {f"{community_prefix(k)}.lstm.W_input": params[f"{community_prefix(k)}.lstm.W_input"]
           for k in range(config.K)}
    out["local.lstm.W_input"] = params["local.lstm.W_input"]
    if not config.no_sc and config.n_static:
        out["static.fc.W"] = params["static.fc.W"]
    return out


# -- building blocks -------------------------------------------------------------
# All of these accept arbitrary leading batch axes.

def additive_scores(x: Tensor, W: Tensor, b: Tensor, v: Tensor) -> Tensor:
    """v . tanh(x W + b) for each row of x; v may be [d] or stacked as [..., d, 1]."""
    s = T.matmul(T.tanh(T.matmul(x, W) + b), v)
    if v.ndim > 1:
        s = T.reshape(s, s.shape[:-1])
    return s


def weighted_sum(weights: Tensor, rows: Tensor) -> Tensor:
    """sum_i weights[..., i] * rows[..., i, :]."""
    lead = weights.shape[:-1]
    out = T.matmul(T.reshape(weights, lead + (1, weights.shape[-1])), rows)
    return T.reshape(out, out.shape[:-2] + (rows.shape[-1],))


def spatial_attention(x_t: Tensor, W: Tensor, b: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """Attention over locations of one week's dynamics ``x_t`` [..., L, n].

    Returns the weights alpha [..., L] and the context sum_l alpha_l x_l [..., n].
    """
    x_t = T.as_tensor(x_t)
    alpha = T.softmax(additive_scores(x_t, W, b, v), axis=-1)
    return alpha, weighted_sum(alpha, x_t)


def lstm_step(h: Tensor, c: Tensor, x_proj: Tensor, W_hidden: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step given the already projected input x W_input + bias.

    Gate layout along the last axis is [input, forget, output, candidate].
    """
    m = h.shape[-1]
    z = x_proj + T.matmul(h, W_hidden)
    gates = T.sigmoid(z[..., : 3 * m])
    cand = T.tanh(z[..., 3 * m:])
    i, f, o = gates[..., :m], gates[..., m:2 * m], gates[..., 2 * m:]
    c = f * c + i * cand
    h = o * T.tanh(c)
    return h, c


def lstm_sequence(xs: Tensor, W_input: Tensor, W_hidden: Tensor, bias: Tensor) -> Tensor:
    """Run an LSTM from a zero state over xs [..., w, n_in]; returns hidden states [..., w, m].

    The hidden state is carried as a [..., 1, m] row so stacked per-block
    weights [K, m, 4m] broadcast against it.
    """
    xs = T.as_tensor(xs)
    m = W_hidden.shape[-2]
    proj = T.matmul(xs, W_input) + T.reshape(bias, bias.shape[:-1] + (1, bias.shape[-1]))
    lead = proj.shape[:-2]
    h = T.Tensor(np.zeros(lead + (1, m)))
    c = h
    states = []
    for t in range(xs.shape[-2]):
        h, c = lstm_step(h, c, proj[..., t:t + 1, :], W_hidden)
        states.append(h)
    return T.concat(states, axis=-2)


def global_temporal_attention(h: Tensor, alpha: Tensor, proximity: Tensor) -> tuple[Tensor, Tensor]:
    """Weights over the window from the proximity-weighted memberships.

    h [..., w, m], alpha [..., w, L]; ``proximity`` is the target's row, either
    [L] or shaped [..., L, 1] to broadcast. Returns (nu [..., m], beta [..., w]).
    """
    proximity = T.as_tensor(proximity)
    q = T.matmul(alpha, proximity)
    if proximity.ndim > 1:
        q = T.reshape(q, q.shape[:-1])
    beta = T.softmax(q, axis=-1)
    return weighted_sum(beta, h), beta


def community_attention(nu_k: Tensor, emb: Tensor, V: Tensor, r: Tensor) -> tuple[Tensor, Tensor]:
    """Mix community summaries nu_k [..., K, m] with the target embedding emb [..., m] as query."""
    emb = T.reshape(emb, emb.shape[:-1] + (1, emb.shape[-1]))
    u = T.matmul(T.tanh(T.matmul(nu_k, V) + emb), r)
    gamma = T.softmax(u, axis=-1)
    return gamma, weighted_sum(gamma, nu_k)


def _one_hot_last(lead: tuple[int, ...], w: int) -> Tensor:
    out = np.zeros(lead + (w,))
    out[..., -1] = 1.0
    return T.Tensor(out)


def local_forward(params: dict[str, Tensor], config: ModelConfig, local: Tensor,
                  train: bool = False, rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Target-only path: LSTM over [..., w, n] then self-attention. Returns (xi, delta)."""
    s = lstm_sequence(local, params["local.lstm.W_input"], params["local.lstm.W_hidden"],
                      params["local.lstm.bias"])
    s = T.dropout(s, config.dropout, rng, train)
    if config.no_ta:
        return s[..., -1, :], _one_hot_last(s.shape[:-2], s.shape[-2])
    delta = T.softmax(additive_scores(s, params["local.attention.W"], params["local.attention.b"],
                                      params["local.attention.v"]), axis=-1)
    return weighted_sum(delta, s), delta


def static_forward(params: dict[str, Tensor], config: ModelConfig, x_stat, location_onehot) -> tuple[Tensor, Tensor]:
    """Returns (psi, emb): psi = [emb, tanh(x_stat W + b)], or just emb under no_sc."""
    onehot = np.asarray(location_onehot, dtype=np.float64)
    check_onehot(onehot)
    emb = params["static.embedding"][onehot.argmax(axis=-1)]
    if config.no_sc:
        return emb, emb
    latent = T.tanh(T.matmul(T.as_tensor(x_stat), params["static.fc.W"]) + params["static.fc.b"])
    return T.concat([emb, latent], axis=-1), emb


def _stack(params, config, suffix) -> Tensor:
    return T.stack([params[f"{community_prefix(k)}.{suffix}"] for k in range(config.K)])


def global_blocks(params: dict[str, Tensor], config: ModelConfig, windows: np.ndarray,
                  train: bool = False, rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Spatial attention + LSTM for every block over distinct windows [U, w, L, n].

    Returns hidden states [U, K, w, m] and spatial weights [U, K, w, L].
    """
    c = config
    U, w, L, n = windows.shape
    K = c.K
    if c.no_sa:
        # locations concatenated instead of attended; memberships reported as uniform
        ctx = T.Tensor(windows.reshape(U, 1, w, L * n))
        alpha = T.Tensor(np.full((U, K, w, L), 1.0 / L))
    else:
        x = T.Tensor(windows.reshape(U, 1, w, L, n))
        W = T.reshape(_stack(params, c, "spatial.W"), (K, 1, n, n))
        b = T.reshape(_stack(params, c, "spatial.b"), (K, 1, 1, n))
        v = T.reshape(_stack(params, c, "spatial.v"), (K, 1, n, 1))
        alpha, ctx = spatial_attention(x, W, b, v)
    h = lstm_sequence(ctx, _stack(params, c, "lstm.W_input"), _stack(params, c, "lstm.W_hidden"),
                      _stack(params, c, "lstm.bias"))
    h = T.dropout(h, c.dropout, rng, train)
    return h, alpha


def forward(params: dict[str, Tensor], config: ModelConfig, batch: Batch,
            train: bool = False, rng: np.random.Generator | None = None) -> Forward:
    c = config
    B = len(batch)
    if batch.windows.shape[1:] != (c.w, c.L, c.n) or batch.static.shape[-1] != c.n_static:
        raise ContractError(
            f"batch windows {batch.windows.shape[1:]} / static width {batch.static.shape[-1]} "
            f"do not match config (w={c.w}, L={c.L}, n={c.n}, n_static={c.n_static})")
    if train and c.dropout > 0 and rng is None:
        raise ContractError("train-mode forward with dropout needs an rng")

    psi, emb = static_forward(params, c, batch.static, batch.location_onehot)
    xi, delta = local_forward(params, c, T.Tensor(batch.local), train, rng)
    parts = []
    alpha = beta = gamma = None
    if c.K:
        h_u, alpha = global_blocks(params, c, batch.windows, train, rng)
        idx = batch.window_index
        h = h_u[idx]
        if c.no_ta:
            nu_k = h[:, :, -1, :]
            beta = _one_hot_last((B, c.K), c.w)
        else:
            prox = T.Tensor(batch.proximity.reshape(B, 1, c.L, 1))
            nu_k, beta = global_temporal_attention(h, alpha[idx], prox)
        if c.no_ca:
            nu = T.reshape(nu_k, (B, c.K * c.hidden))
            gamma = T.Tensor(np.full((B, c.K), 1.0 / c.K))
        else:
            gamma, nu = community_attention(nu_k, emb, params["global.attention.V"],
                                            params["global.attention.r"])
        parts.append(nu)
    parts += [xi, psi]
    features = T.concat(parts, axis=-1)
    yhat = T.matmul(features, params["head.W"]) + params["head.b"]
    return Forward(yhat, alpha, beta, gamma, delta, batch.window_index)


def predict(sample: Sample | Batch, params: dict[str, Tensor], config: ModelConfig,
            train: bool = False, rng: np.random.Generator | None = None) -> tuple[float, AttentionTrace]:
    """Forecast for a single sample together with its attention trace."""
    batch = sample if isinstance(sample, Batch) else Batch.from_samples([sample])
    if len(batch) != 1:
        raise ContractError("predict takes one sample; use forward() for batches")
    with T.no_grad():
        out = forward(params, config, batch, train, rng)
    return float(out.yhat.data[0]), out.trace()[0]
