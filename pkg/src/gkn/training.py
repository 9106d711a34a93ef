"""Adam, the per-subgraph training loop and relative L2 evaluation."""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, NormStats, compute_normalization, grid_samples
from .graph import GridSample, SamplingPlan, SpatialGraph, nystrom_subsample, partition_for_evaluation
from .model import GknParams, ModelConfig, init_params, loss_and_grads, predict
from .random_fields import child_rng

log = logging.getLogger(__name__)

FULL_GRID_MAX_S = 61


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became NaN/Inf in epoch {epoch}")
        self.epoch = epoch


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float) -> None:
    """One bias-corrected Adam update, in place; parameters without a gradient are untouched."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass(frozen=True)
class TrainConfig:
    n_train: int = 100
    n_test: int = 40
    s: int = 16
    s_test: int = 16
    r: float = 0.10
    epochs: int = 200
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    plan: SamplingPlan | None = None   # None: train on full grids

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")


@dataclass
class TrainResult:
    params: GknParams
    stats: NormStats
    history: list[float]
    seconds: float = 0.0


def training_graphs(samples: list[GridSample], config: TrainConfig) -> list[SpatialGraph]:
    """Full-grid graphs, or l Nystrom subgraphs per pair when a plan is given."""
    if config.plan is None:
        return [smp.full_graph(config.r) for smp in samples]
    plan = config.plan
    graphs = []
    for j, smp in enumerate(samples):
        if plan.m >= smp.num_nodes:
            graphs.extend([smp.full_graph(plan.r)] * plan.l)
        else:
            graphs.extend(nystrom_subsample(smp, plan.m, plan.l, plan.r, child_rng(plan.seed, j)))
    return graphs


def fit(params: GknParams, graphs: list[SpatialGraph], epochs: int, lr: float, seed: int,
        state: AdamState | None = None, trainable=None) -> list[float]:
    """Batch-size-one Adam over ``graphs`` in a seeded shuffled order each epoch."""
    state = state or AdamState()
    rng = np.random.Generator(np.random.PCG64(seed))
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(graphs))
        total = 0.0
        for i in order:
            loss, grads = loss_and_grads(params, graphs[i], trainable=trainable)
            if not math.isfinite(loss):
                raise DivergenceError(epoch)
            adam_step(params.arrays, grads, state, lr)
            total += loss
        history.append(total / len(graphs))
        if epoch % 10 == 0 or epoch == epochs - 1:
            log.info("epoch %d  loss %.6f", epoch, history[-1])
    return history


def train(config: TrainConfig, model_config: ModelConfig, dataset: Dataset,
          train_indices=None) -> TrainResult:
    """Normalise on the training pairs at resolution ``config.s`` and fit a fresh model."""
    start = time.perf_counter()
    idx = np.arange(config.n_train) if train_indices is None else np.asarray(train_indices)
    channels = dataset.at_resolution(config.s, idx)
    stats = compute_normalization(channels)
    samples = grid_samples(channels, stats)
    graphs = training_graphs(samples, config)
    params = init_params(model_config, config.seed)
    history = fit(params, graphs, config.epochs, config.lr, config.seed,
                  AdamState(config.beta1, config.beta2, config.eps))
    return TrainResult(params, stats, history, time.perf_counter() - start)


def relative_l2(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.linalg.norm(pred - truth) / np.linalg.norm(truth))


def evaluation_graphs(sample: GridSample, r: float, plan: SamplingPlan | None, seed: int,
                index: int, s: int) -> list[SpatialGraph]:
    if plan is not None:
        rng = child_rng(seed, index)
        if plan.m_test >= sample.num_nodes:
            return [sample.full_graph(plan.r_test)] * plan.l_test
        return nystrom_subsample(sample, plan.m_test, plan.l_test, plan.r_test, rng)
    if s <= FULL_GRID_MAX_S:
        return [sample.full_graph(r)]
    return partition_for_evaluation(sample, 200, r, child_rng(seed, index))


def evaluate_relative_l2(params: GknParams, graphs_by_pair: list[list[SpatialGraph]],
                         stats: NormStats, truths: list[np.ndarray] | None = None) -> float:
    """Mean over pairs of ||u_hat - u|| / ||u|| on the original scale.

    Each pair's graphs carry raw (unnormalised) targets unless ``truths`` is given;
    a pair whose target norm is zero is skipped with a warning.
    """
    errors = []
    for j, graphs in enumerate(graphs_by_pair):
        pred = np.concatenate([stats.denormalize("u", predict(params, g)) for g in graphs])
        truth = (np.concatenate([g.node_targets for g in graphs]) if truths is None
                 else np.asarray(truths[j]).reshape(-1))
        if np.linalg.norm(truth) == 0:
            warnings.warn(f"test pair {j} has a zero target; excluded")
            continue
        errors.append(relative_l2(pred, truth))
    return float(np.mean(errors))


def evaluate(result: TrainResult, dataset: Dataset, s_test: int, test_indices, r: float,
             plan: SamplingPlan | None = None, seed: int = 0) -> float:
    channels = dataset.at_resolution(s_test, test_indices)
    samples = grid_samples(channels, result.stats, normalize_targets=False)
    graphs = [evaluation_graphs(smp, r, plan, seed, j, s_test) for j, smp in enumerate(samples)]
    return evaluate_relative_l2(result.params, graphs, result.stats)


def default_test_indices(dataset: Dataset, n_test: int) -> np.ndarray:
    """Test pairs are the last ``n_test`` pairs of a dataset."""
    if n_test > dataset.N:
        raise ValueError(f"dataset has {dataset.N} pairs, {n_test} requested for testing")
    return np.arange(dataset.N - n_test, dataset.N)
