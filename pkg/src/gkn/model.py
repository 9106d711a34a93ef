"""Graph kernel network: lift, T shared kernel-integral layers, project.

    v0(x)    = P z(x) + p,                z(x) = (x, a(x), a_eps(x), grad a_eps(x))
    v_t+1(x) = act(W v_t(x) + mean_{y in N(x)} kappa(e(x, y)) v_t(y))
    u(x)     = Q v_T(x) + q

``kappa`` is an MLP from edge features to n x n matrices (row-major
reshape of its n^2 outputs); W and kappa are the same arrays at every step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .graph import SpatialGraph


@dataclass(frozen=True)
class ModelConfig:
    n: int = 64
    T: int = 6
    kappa_hidden: tuple[int, ...] = (512, 1024)
    d: int = 2
    activation: str = "relu"
    node_in: int | None = None    # defaults to 2(d+1)

    def __post_init__(self):
        if self.n < 1 or self.T < 1:
            raise ValueError("n and T must be >= 1")
        if self.activation not in ad.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "kappa_hidden", tuple(int(w) for w in self.kappa_hidden))

    @property
    def edge_in(self) -> int:
        return 2 * (self.d + 1)

    @property
    def input_width(self) -> int:
        return self.edge_in if self.node_in is None else self.node_in

    @property
    def kappa_widths(self) -> tuple[int, ...]:
        return (self.edge_in, *self.kappa_hidden, self.n * self.n)


PAPER_CONFIG = ModelConfig(n=64, T=6, kappa_hidden=(512, 1024))
DESK_CONFIG = ModelConfig(n=32, T=6, kappa_hidden=(64, 128))


@dataclass
class GknParams:
    """Named float64 arrays; weights are stored (out, in)."""

    config: ModelConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def kappa_layers(self) -> list[tuple[str, str]]:
        return [(f"kappa.{i}.weight", f"kappa.{i}.bias")
                for i in range(len(self.config.kappa_widths) - 1)]

    def copy(self) -> GknParams:
        return GknParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def count(self, prefix: str = "") -> int:
        return sum(v.size for k, v in self.arrays.items() if k.startswith(prefix))


def init_params(config: ModelConfig, seed: int) -> GknParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n = config.n

    def uniform(out_dim, in_dim):
        bound = 1.0 / np.sqrt(in_dim)
        return rng.uniform(-bound, bound, size=(out_dim, in_dim))

    arrays = {
        "P": uniform(n, config.input_width),
        "p": np.zeros(n),
        "W": uniform(n, n),
        "Q": uniform(1, n),
        "q": np.zeros(1),
    }
    widths = config.kappa_widths
    for i in range(len(widths) - 1):
        arrays[f"kappa.{i}.weight"] = uniform(widths[i + 1], widths[i])
        arrays[f"kappa.{i}.bias"] = np.zeros(widths[i + 1])
    return GknParams(config, arrays)


def _as_tensors(params: GknParams, tape: ad.Tape | None, trainable=None) -> dict[str, ad.Tensor]:
    out = {}
    for name, value in params.arrays.items():
        if tape is not None and (trainable is None or name in trainable):
            out[name] = tape.leaf(value)
        else:
            out[name] = ad.constant(value)
    return out


def kappa_hidden_forward(t: dict[str, ad.Tensor], config: ModelConfig, feats: ad.Tensor) -> ad.Tensor:
    """All kappa layers except the last, each followed by ReLU."""
    h = feats
    for i in range(len(config.kappa_widths) - 2):
        h = ad.relu(ad.linear(h, t[f"kappa.{i}.weight"], t[f"kappa.{i}.bias"]))
    return h


def kappa_forward_tensors(t: dict[str, ad.Tensor], config: ModelConfig, feats: ad.Tensor) -> ad.Tensor:
    if feats.shape[1] != config.edge_in:
        raise ValueError(f"edge features have width {feats.shape[1]}, expected {config.edge_in}")
    h = kappa_hidden_forward(t, config, feats)
    last = len(config.kappa_widths) - 2
    k = ad.linear(h, t[f"kappa.{last}.weight"], t[f"kappa.{last}.bias"])
    return ad.reshape(k, (feats.shape[0], config.n, config.n))


def kappa_forward(params: GknParams, edge_features: np.ndarray) -> np.ndarray:
    """(E, n, n) kernel matrices for a batch of edge feature rows."""
    t = _as_tensors(params, None)
    return kappa_forward_tensors(t, params.config, ad.constant(edge_features)).value


def forward_tensors(t: dict[str, ad.Tensor], config: ModelConfig, graph: SpatialGraph) -> ad.Tensor:
    """Taped forward pass; returns (K, 1) predictions."""
    if graph.node_inputs.shape[1] != config.input_width:
        raise ValueError(f"node inputs have width {graph.node_inputs.shape[1]}, "
                         f"expected {config.input_width}")
    act = ad.ACTIVATIONS[config.activation]
    K = graph.num_nodes
    v = ad.linear(ad.constant(graph.node_inputs), t["P"], t["p"])
    kmat = kappa_forward_tensors(t, config, ad.constant(graph.edge_features))
    agg = graph.aggregator()
    scatter = graph.scatter()
    for _ in range(config.T):
        msg = ad.edge_matvec(kmat, ad.gather(v, graph.sources, scatter))
        v = act(ad.add(ad.linear(v, t["W"]), ad.scatter_mean(msg, graph.targets, K, agg)))
    return ad.linear(v, t["Q"], t["q"])


def gkn_forward(params: GknParams, graph: SpatialGraph) -> np.ndarray:
    """Predictions at the graph's nodes, shape (K,)."""
    t = _as_tensors(params, None)
    return forward_tensors(t, params.config, graph).value[:, 0]


def loss_and_grads(params: GknParams, graph: SpatialGraph, targets: np.ndarray | None = None,
                   trainable=None) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error at the graph's nodes and its gradient per parameter array."""
    tape = ad.Tape()
    t = _as_tensors(params, tape, trainable)
    pred = forward_tensors(t, params.config, graph)
    y = graph.node_targets if targets is None else targets
    loss = ad.mse_loss(pred, ad.constant(np.asarray(y).reshape(-1, 1)))
    ad.backward(loss)
    grads = {}
    for name, tensor in t.items():
        if tensor.requires_grad:
            g = tape.grad(tensor)
            grads[name] = np.zeros_like(tensor.value) if g is None else g
    return float(loss.value), grads


def predict(params: GknParams, graph: SpatialGraph, chunk: int = 4096) -> np.ndarray:
    """Gradient-free forward pass for large graphs, shape (K,).

    Avoids materialising the (E, n, n) kernels: with the last kappa layer
    k(e) = B + sum_k h_k(e) M_k, the message is B v(y) + sum_k h_k(e) (M_k v(y)).
    Edges are grouped by source node (padded to the largest out-degree) so the
    sum over k is one dense (degree, w) x (w, n) product per source.
    """
    cfg = params.config
    if graph.node_inputs.shape[1] != cfg.input_width:
        raise ValueError("node input width does not match the model")
    E, K, n = graph.num_edges, graph.num_nodes, cfg.n
    act = (lambda z: np.maximum(z, 0.0)) if cfg.activation == "relu" else (lambda z: z)
    A = params.arrays
    last = len(cfg.kappa_widths) - 2
    W3 = A[f"kappa.{last}.weight"]                       # (n*n, w)
    w = W3.shape[1]
    B = A[f"kappa.{last}.bias"].reshape(n, n)
    # M[j, k*n + i] = W3[i*n + j, k]
    M = W3.reshape(n, n, w).transpose(1, 2, 0).reshape(n, w * n)

    direct = E * w * n * n <= cfg.T * (K * w * n * n + E * w * n)
    if direct:
        kernels = []
    else:
        # slot of each edge within its source's padded block
        order = np.argsort(graph.sources, kind="stable")
        src_sorted = graph.sources[order]
        first = np.searchsorted(src_sorted, np.arange(K))
        slot = np.empty(E, dtype=np.int64)
        slot[order] = np.arange(E) - first[src_sorted]
        depth = int(slot.max()) + 1 if E else 1
        H = np.zeros((K, depth, w))
    for start in range(0, E, chunk):
        h = graph.edge_features[start:start + chunk]
        for i in range(last):
            h = np.maximum(h @ A[f"kappa.{i}.weight"].T + A[f"kappa.{i}.bias"], 0.0)
        if direct:
            kernels.append((h @ W3.T + A[f"kappa.{last}.bias"]).reshape(-1, n, n))
        else:
            H[graph.sources[start:start + chunk], slot[start:start + chunk]] = h

    agg = graph.aggregator()
    v = graph.node_inputs @ A["P"].T + A["p"]
    for _ in range(cfg.T):
        if direct:
            msg = np.empty((E, n))
            for c, start in enumerate(range(0, E, chunk)):
                src = graph.sources[start:start + chunk]
                msg[start:start + chunk] = np.matmul(kernels[c], v[src][:, :, None])[:, :, 0]
        else:
            Z = (v @ M).reshape(K, w, n)
            msg = np.matmul(H, Z)[graph.sources, slot] + (v @ B.T)[graph.sources]
        v = act(v @ A["W"].T + np.asarray(agg @ msg))
    return (v @ A["Q"].T + A["q"])[:, 0]
