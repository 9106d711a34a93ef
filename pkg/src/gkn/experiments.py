"""Experiment harnesses: resolution transfer, parameter sweeps, Green's-function checks."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import pde
from .baselines import init_mlp, mlp_forward, mlp_predict
from .data import Dataset
from .graph import SamplingPlan
from .model import ModelConfig
from .random_fields import POISSON_FORCING, GrfSpec, child_rng, sample_forcing_1d
from .training import (AdamState, TrainConfig, TrainResult, adam_step, default_test_indices,
                       evaluate, train, training_graphs)

log = logging.getLogger(__name__)

SWEEP_AXES = ("N", "l", "m", "r", "kappa")


# ---------------------------------------------------------------------------
# resolution transfer

def resolution_transfer_experiment(dataset: Dataset, config: TrainConfig, model_config: ModelConfig,
                                   test_resolutions, result: TrainResult | None = None,
                                   test_indices=None) -> tuple[TrainResult, list[dict]]:
    """Train once at ``config.s`` and evaluate the same parameters at every test resolution."""
    if result is None:
        result = train(config, model_config, dataset)
        log.info("trained at s=%d in %.1f s", config.s, result.seconds)
    idx = default_test_indices(dataset, config.n_test) if test_indices is None else test_indices
    rows = []
    for s_test in test_resolutions:
        err = evaluate(result, dataset, s_test, idx, config.r, config.plan, config.seed)
        log.info("s=%d -> s'=%d  relative L2 %.5f", config.s, s_test, err)
        rows.append({"train_s": config.s, "test_s": s_test, "relative_l2": err})
    return result, rows


# ---------------------------------------------------------------------------
# sweeps

def _apply(axis: str, value, config: TrainConfig, model_config: ModelConfig):
    plan = config.plan or SamplingPlan(r=config.r, r_test=config.r)
    if axis == "N":
        return replace(config, n_train=int(value)), model_config
    if axis == "l":
        return replace(config, plan=replace(plan, l=int(value))), model_config
    if axis == "m":
        m, m_test = value
        return replace(config, plan=replace(plan, m=int(m), m_test=int(m_test))), model_config
    if axis == "r":
        r, m = value
        plan = replace(plan, r=float(r), r_test=float(r), m=int(m), m_test=int(m))
        return replace(config, r=float(r), plan=plan), model_config
    if axis == "kappa":
        return config, replace(model_config, kappa_hidden=tuple(int(w) for w in value))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def _describe(value) -> str:
    if isinstance(value, (tuple, list)):
        return "x".join(str(v) for v in value)
    return str(value)


def sweep_experiment(axis: str, values, dataset: Dataset, config: TrainConfig,
                     model_config: ModelConfig, epochs=None, test_indices=None) -> list[dict]:
    """One train/evaluate per value along ``axis``; a failing cell is recorded and skipped.

    ``epochs`` optionally gives a per-cell epoch count (same length as ``values``).
    Training pairs are always the first N pairs, test pairs the last ``n_test``.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    values = list(values)
    if epochs is not None and len(epochs) != len(values):
        raise ValueError("need one epoch count per sweep value")
    idx = default_test_indices(dataset, config.n_test) if test_indices is None else test_indices
    rows = []
    for i, value in enumerate(values):
        row = {"axis": axis, "value": _describe(value)}
        try:
            cfg, mcfg = _apply(axis, value, config, model_config)
            if epochs is not None:
                cfg = replace(cfg, epochs=int(epochs[i]))
            if cfg.n_train + len(idx) > dataset.N:
                raise ValueError(f"N={cfg.n_train} training pairs overlap the test pairs")
            row["epochs"] = cfg.epochs
            start = time.perf_counter()
            result = train(cfg, mcfg, dataset)
            row["train_loss"] = result.history[-1]
            row["relative_l2"] = evaluate(result, dataset, cfg.s_test, idx, cfg.r, cfg.plan, cfg.seed)
            row["mean_edges"] = _mean_edges(dataset, cfg)
            row["status"] = "ok"
            log.info("sweep %s=%s  error %.5f  (%.1f s)", axis, row["value"], row["relative_l2"],
                     time.perf_counter() - start)
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            row.setdefault("epochs", "")
            row.update(train_loss="", relative_l2="", mean_edges="",
                       status=f"failed: {type(exc).__name__}: {exc}")
            log.warning("sweep %s=%s failed: %s", axis, row["value"], exc)
        rows.append(row)
    return rows


def _mean_edges(dataset: Dataset, cfg: TrainConfig) -> float:
    """Mean edge count of the training graphs of the first training pair."""
    from .data import compute_normalization, grid_samples
    channels = dataset.at_resolution(cfg.s, np.arange(1))
    samples = grid_samples(channels, compute_normalization(channels))
    graphs = training_graphs(samples, cfg)
    return float(np.mean([g.num_edges for g in graphs]))


# ---------------------------------------------------------------------------
# 1D Green's function

@dataclass
class Green1dResult:
    params: dict
    history: list[float]
    kernel_error: float
    test_error: float
    s: int


def green_edge_features(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Rows (x_i, y_j, a(x_i), a(y_j)) with a = 1, ordered j-major so a reshape gives K[j, i]."""
    X, Y = np.meshgrid(x, y)
    ones = np.ones(X.size)
    return np.column_stack([X.reshape(-1), Y.reshape(-1), ones, ones])


def learned_kernel(params: dict, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """kappa(x_i, y_j) as an array indexed [i, j]."""
    out = mlp_predict(params, green_edge_features(x, y))[:, 0]
    return out.reshape(len(y), len(x)).T


def trapezoid_weights(s: int) -> np.ndarray:
    w = np.full(s, 1.0 / (s - 1))
    w[0] = w[-1] = 0.5 / (s - 1)
    return w


def green1d_experiment(N: int = 2048, s: int = 33, hidden=(64, 64), epochs: int = 300,
                       lr: float = 1e-3, batch: int = 128, seed: int = 0, n_test: int = 128,
                       eval_points: int = 64, forcing: GrfSpec = POISSON_FORCING) -> Green1dResult:
    """Learn G from (f, u) pairs with T=1, n=1, identity activation, W=0 and v0 = f.

    With a = 1 the layer is u(x) = int kappa(x, y, 1, 1) f(y) dy; the integral
    over the Lebesgue measure is the trapezoidal sum on the grid, the same rule
    that produced the targets.
    """
    x = np.linspace(0.0, 1.0, s)
    w = trapezoid_weights(s)
    G = pde.green_1d_matrix(x, x)

    def pairs(count, stream):
        F = np.stack([sample_forcing_1d(forcing, s, child_rng(seed + stream, j)).values
                      for j in range(count)])
        return F, F @ (G * w).T

    F, U = pairs(N, 0)
    F_test, U_test = pairs(n_test, 1)
    feats = ad.constant(green_edge_features(x, x))
    params = init_mlp((4, *hidden, 1), seed)
    state = AdamState()
    rng = np.random.Generator(np.random.PCG64(seed))
    history = []
    for epoch in range(epochs):
        order = rng.permutation(N)
        total = 0.0
        for start in range(0, N, batch):
            b = order[start:start + batch]
            tape = ad.Tape()
            t = {k: tape.leaf(v) for k, v in params.items()}
            K_t = ad.reshape(mlp_forward(t, feats), (s, s))        # [j, i]
            pred = ad.matmul(ad.constant(F[b] * w), K_t)            # sum_j f(y_j) w_j kappa(x_i, y_j)
            loss = ad.mse_loss(pred, ad.constant(U[b]))
            if not math.isfinite(float(loss.value)):
                raise FloatingPointError(f"Green's-function training diverged in epoch {epoch}")
            ad.backward(loss)
            adam_step(params, {k: tape.grad(v) for k, v in t.items()}, state, lr)
            total += float(loss.value) * len(b)
        history.append(total / N)
        if epoch % 50 == 0 or epoch == epochs - 1:
            log.info("green1d epoch %d  loss %.3e", epoch, history[-1])

    xe = np.linspace(0.0, 1.0, eval_points)
    truth = pde.green_1d_matrix(xe, xe)
    kernel_error = float(np.linalg.norm(learned_kernel(params, xe, xe) - truth) / np.linalg.norm(truth))
    pred_test = F_test @ (learned_kernel(params, x, x) * w).T
    test_error = float(np.mean(np.linalg.norm(pred_test - U_test, axis=1)
                               / np.linalg.norm(U_test, axis=1)))
    return Green1dResult(params, history, kernel_error, test_error, s)


# ---------------------------------------------------------------------------
# disk Green's function identities

def green_disk_check(pairs: int = 10_000, seed: int = 0) -> dict[str, float]:
    """Max deviations of the boundary-zero and source/field symmetry identities."""
    rng = np.random.Generator(np.random.PCG64(seed))
    rho, rho_t = rng.uniform(0.0, 1.0, (2, pairs))
    theta, theta_t = rng.uniform(0.0, 2.0 * np.pi, (2, pairs))
    boundary = 0.0
    symmetry = 0.0
    for i in range(pairs):
        boundary = max(boundary, abs(pde.green_disk(1.0, theta[i], rho_t[i], theta_t[i])),
                       abs(pde.green_disk(rho[i], theta[i], 1.0, theta_t[i])))
        g1 = pde.green_disk(rho[i], theta[i], rho_t[i], theta_t[i])
        g2 = pde.green_disk(rho_t[i], theta_t[i], rho[i], theta[i])
        symmetry = max(symmetry, abs(g1 - g2))
    centre = pde.green_disk(0.0, 0.0, 0.5, float(theta_t[0]))
    return {"pairs": pairs, "boundary_max": boundary, "symmetry_max": symmetry,
            "centre_value": centre, "centre_expected": math.log(0.25) / (4.0 * math.pi)}
