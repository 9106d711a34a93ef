"""Reference methods: pointwise MLP, PCA + MLP, and the reduced basis method."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import pde
from .random_fields import GridField, grid_coords
from .training import AdamState, adam_step, relative_l2

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# small MLP on the autodiff core

def init_mlp(widths, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {}
    for i in range(len(widths) - 1):
        bound = 1.0 / np.sqrt(widths[i])
        params[f"{i}.weight"] = rng.uniform(-bound, bound, size=(widths[i + 1], widths[i]))
        params[f"{i}.bias"] = np.zeros(widths[i + 1])
    return params


def mlp_forward(t: dict[str, ad.Tensor], x: ad.Tensor) -> ad.Tensor:
    depth = len(t) // 2
    h = x
    for i in range(depth):
        h = ad.linear(h, t[f"{i}.weight"], t[f"{i}.bias"])
        if i < depth - 1:
            h = ad.relu(h)
    return h


def mlp_predict(params: dict[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    return mlp_forward({k: ad.constant(v) for k, v in params.items()}, ad.constant(x)).value


def fit_mlp(params: dict[str, np.ndarray], batches, epochs: int, lr: float, seed: int) -> list[float]:
    """Adam on mean squared error; ``batches`` is a list of (inputs, targets) arrays."""
    state = AdamState()
    rng = np.random.Generator(np.random.PCG64(seed))
    history = []
    for epoch in range(epochs):
        total = 0.0
        for i in rng.permutation(len(batches)):
            x, y = batches[i]
            tape = ad.Tape()
            t = {k: tape.leaf(v) for k, v in params.items()}
            loss = ad.mse_loss(mlp_forward(t, ad.constant(x)), ad.constant(y))
            if not np.isfinite(loss.value):
                raise FloatingPointError(f"MLP training diverged in epoch {epoch}")
            ad.backward(loss)
            adam_step(params, {k: tape.grad(v) for k, v in t.items()}, state, lr)
            total += float(loss.value)
        history.append(total / max(len(batches), 1))
    return history


# ---------------------------------------------------------------------------
# pointwise network

@dataclass
class PointwiseNN:
    params: dict
    a_mean: float
    a_std: float
    u_mean: float
    u_std: float

    def predict(self, a: np.ndarray) -> np.ndarray:
        """u at every grid node of the (s, s) coefficient ``a``; depends only on (x, a(x))."""
        s = a.shape[-1]
        x = np.column_stack([grid_coords(s, 2), (a.reshape(-1) - self.a_mean) / self.a_std])
        return (mlp_predict(self.params, x)[:, 0] * self.u_std + self.u_mean).reshape(s, s)


def train_pointwise_nn(train_a: np.ndarray, train_u: np.ndarray, hidden=(64, 64),
                       epochs: int = 100, lr: float = 1e-3, seed: int = 0) -> PointwiseNN:
    a_mean, a_std = float(train_a.mean()), max(float(train_a.std()), 1e-8)
    u_mean, u_std = float(train_u.mean()), max(float(train_u.std()), 1e-8)
    s = train_a.shape[-1]
    coords = grid_coords(s, 2)
    batches = [(np.column_stack([coords, (a.reshape(-1) - a_mean) / a_std]),
                ((u.reshape(-1) - u_mean) / u_std)[:, None]) for a, u in zip(train_a, train_u)]
    params = init_mlp((3, *hidden, 1), seed)
    fit_mlp(params, batches, epochs, lr, seed)
    return PointwiseNN(params, a_mean, a_std, u_mean, u_std)


def run_pointwise_nn(train_a, train_u, test_a, test_u, hidden=(64, 64), epochs: int = 100,
                     lr: float = 1e-3, seed: int = 0) -> float:
    model = train_pointwise_nn(train_a, train_u, hidden, epochs, lr, seed)
    return float(np.mean([relative_l2(model.predict(a), u) for a, u in zip(test_a, test_u)]))


# ---------------------------------------------------------------------------
# PCA

@dataclass
class PcaBasis:
    mean: np.ndarray          # (K,)
    components: np.ndarray    # (R, K), orthonormal rows
    singular_values: np.ndarray

    @property
    def rank(self) -> int:
        return self.components.shape[0]

    def encode(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X).reshape(-1, self.mean.size)
        return (X - self.mean) @ self.components.T

    def decode(self, c: np.ndarray) -> np.ndarray:
        return self.mean + np.asarray(c) @ self.components


def compute_pca(fields: np.ndarray, R: int, center: bool = True) -> PcaBasis:
    """Top-R principal directions from the N x N Gram matrix of the (centred) fields.

    Directions whose eigenvalue is negligible (below 1e-12 of the largest) are
    dropped, so the returned rank can be smaller than ``R`` for degenerate data.
    """
    X = np.asarray(fields, dtype=np.float64).reshape(len(fields), -1)
    N = X.shape[0]
    if R > N:
        raise ValueError(f"rank R={R} exceeds the number of fields N={N}")
    mean = X.mean(axis=0) if center else np.zeros(X.shape[1])
    Xc = X - mean
    lam, V = np.linalg.eigh(Xc @ Xc.T)
    order = np.argsort(lam)[::-1][:R]
    lam, V = lam[order], V[:, order]
    keep = lam > 1e-12 * max(lam[0], 1e-300)
    lam, V = lam[keep], V[:, keep]
    if keep.sum() < R:
        warnings.warn(f"PCA: only {keep.sum()} of {R} directions are numerically nonzero")
    sv = np.sqrt(lam)
    comps = (Xc.T @ V / sv).T
    return PcaBasis(mean, comps, sv)


@dataclass
class PcaNN:
    basis_in: PcaBasis
    basis_out: PcaBasis
    params: dict
    scale_in: np.ndarray
    scale_out: np.ndarray
    s: int

    def predict(self, a: np.ndarray) -> np.ndarray:
        if a.shape[-1] != self.s:
            raise ValueError(f"PCA+NN is bound to s={self.s}; got s={a.shape[-1]}")
        z = self.basis_in.encode(a.reshape(1, -1)) / self.scale_in
        c = mlp_predict(self.params, z) * self.scale_out
        return self.basis_out.decode(c).reshape(self.s, self.s)


def train_pca_nn(train_a, train_u, R_in: int, R_out: int, hidden=(128, 128), epochs: int = 500,
                 lr: float = 1e-3, seed: int = 0, batch: int = 16) -> PcaNN:
    s = train_a.shape[-1]
    bin_ = compute_pca(train_a, R_in)
    bout = compute_pca(train_u, R_out)
    zin = bin_.encode(train_a)
    zout = bout.encode(train_u)
    scale_in = np.maximum(zin.std(axis=0), 1e-12)
    scale_out = np.maximum(zout.std(axis=0), 1e-12)
    xin, yout = zin / scale_in, zout / scale_out
    batches = [(xin[i:i + batch], yout[i:i + batch]) for i in range(0, len(xin), batch)]
    params = init_mlp((bin_.rank, *hidden, bout.rank), seed)
    fit_mlp(params, batches, epochs, lr, seed)
    return PcaNN(bin_, bout, params, scale_in, scale_out, s)


def run_pca_nn(train_a, train_u, test_a, test_u, R_in: int = 30, R_out: int = 30,
               hidden=(128, 128), epochs: int = 500, lr: float = 1e-3, seed: int = 0) -> float:
    if train_a.shape[-1] != test_a.shape[-1]:
        raise ValueError("PCA+NN must be evaluated on the training mesh")
    model = train_pca_nn(train_a, train_u, R_in, R_out, hidden, epochs, lr, seed)
    return float(np.mean([relative_l2(model.predict(a), u) for a, u in zip(test_a, test_u)]))


# ---------------------------------------------------------------------------
# reduced basis method

def rbm_basis(train_u: np.ndarray, R: int) -> np.ndarray:
    """(K_interior, R) orthonormal POD basis of the training solutions' interior values."""
    interior = np.asarray(train_u)[:, 1:-1, 1:-1].reshape(len(train_u), -1)
    return compute_pca(interior, R, center=False).components.T


def rbm_solve(a: np.ndarray, f: np.ndarray, U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Galerkin solve in span(U); returns the (s, s) field and the reduced coefficients."""
    s = a.shape[-1]
    system = pde.assemble_darcy(GridField(a, s), GridField(f, s))
    AU = system.matrix @ U
    Ar = U.T @ AU
    fr = U.T @ system.rhs
    try:
        c = np.linalg.solve(Ar, fr)
        if not np.all(np.isfinite(c)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        warnings.warn("reduced system is singular; adding 1e-12 to the diagonal")
        c = np.linalg.solve(Ar + 1e-12 * np.eye(Ar.shape[0]), fr)
    return pde.embed_interior(U @ c, s), c


def run_rbm(train_u, test_a, test_u, R: int, forcing: np.ndarray | None = None) -> float:
    s = test_a.shape[-1]
    f = np.ones((s, s)) if forcing is None else forcing
    U = rbm_basis(train_u, R)
    errs = [relative_l2(rbm_solve(a, f, U)[0], u) for a, u in zip(test_a, test_u)]
    return float(np.mean(errs))
