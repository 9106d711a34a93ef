"""Darcy datasets: coefficient/solution pairs plus derived node features."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import pde
from .graph import GridSample
from .random_fields import (DARCY_GRF, GridField, GrfSpec, child_rng, gaussian_smooth,
                            gradient_field, grid_coords, sample_coefficient)

log = logging.getLogger(__name__)

CHANNELS = ("a", "a_eps", "grad_x", "grad_y", "u")


@dataclass
class Dataset:
    """N pairs (a_j, u_j) on an s x s grid, sample-major."""

    a: np.ndarray
    u: np.ndarray
    s: int
    d: int = 2
    forcing: str = "constant:1"
    grf: GrfSpec = DARCY_GRF
    seed: int = 0
    _features: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64).reshape(-1, self.s, self.s)
        self.u = np.asarray(self.u, dtype=np.float64).reshape(-1, self.s, self.s)
        if self.a.shape != self.u.shape:
            raise ValueError("a and u must have the same shape")

    @property
    def N(self) -> int:
        return self.a.shape[0]

    def features(self) -> dict[str, np.ndarray]:
        """All channels on the native grid; smoothing is done here, before any downsampling."""
        if not self._features:
            a_eps = np.empty_like(self.a)
            gx = np.empty_like(self.a)
            gy = np.empty_like(self.a)
            for j in range(self.N):
                sm = gaussian_smooth(GridField(self.a[j], self.s))
                g1, g2 = gradient_field(sm)
                a_eps[j], gx[j], gy[j] = sm.values, g1.values, g2.values
            self._features.update(a=self.a, a_eps=a_eps, grad_x=gx, grad_y=gy, u=self.u)
        return self._features

    def at_resolution(self, s: int, indices=None) -> dict[str, np.ndarray]:
        feats = self.features()
        idx = slice(None) if indices is None else np.asarray(indices)
        return {k: pde.downsample_array(v[idx], s) for k, v in feats.items()}

    def subset(self, indices) -> Dataset:
        idx = np.asarray(indices)
        return Dataset(self.a[idx], self.u[idx], self.s, self.d, self.forcing, self.grf, self.seed)


def forcing_field(descriptor: str, s: int) -> GridField:
    kind, _, value = descriptor.partition(":")
    if kind != "constant":
        raise ValueError(f"unsupported forcing {descriptor!r}")
    return GridField(np.full((s, s), float(value)), s, 2)


def generate_darcy(N: int, s: int, seed: int, grf: GrfSpec = DARCY_GRF,
                   forcing: str = "constant:1", tol: float = 1e-10) -> Dataset:
    """Sample ``a_j = psi(GRF)`` from child stream j of ``seed`` and solve for ``u_j``."""
    f = forcing_field(forcing, s)
    a = np.empty((N, s, s))
    u = np.empty((N, s, s))
    for j in range(N):
        coef = sample_coefficient(grf, s, child_rng(seed, j))
        a[j] = coef.values
        u[j] = pde.solve_darcy(coef, f, tol=tol).values
        if (j + 1) % 20 == 0:
            log.info("generated %d/%d pairs at s=%d", j + 1, N, s)
    return Dataset(a, u, s, 2, forcing, grf, seed)


@dataclass(frozen=True)
class NormStats:
    """Global scalar mean/std per channel, std clamped below at ``eps``."""

    mean: dict
    std: dict
    eps: float = 1e-8

    def normalize(self, channel: str, x):
        return (np.asarray(x) - self.mean[channel]) / self.std[channel]

    def denormalize(self, channel: str, x):
        return np.asarray(x) * self.std[channel] + self.mean[channel]

    def as_array(self) -> np.ndarray:
        return np.array([[self.mean[c], self.std[c]] for c in CHANNELS])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> NormStats:
        arr = np.asarray(arr).reshape(len(CHANNELS), 2)
        return cls({c: float(arr[i, 0]) for i, c in enumerate(CHANNELS)},
                   {c: float(arr[i, 1]) for i, c in enumerate(CHANNELS)})


def compute_normalization(channels: dict[str, np.ndarray], eps: float = 1e-8) -> NormStats:
    if not channels or any(np.asarray(v).size == 0 for v in channels.values()):
        raise ValueError("need at least one training pair")
    mean, std = {}, {}
    for c, v in channels.items():
        v = np.asarray(v, dtype=np.float64)
        mean[c] = float(v.mean())
        std[c] = max(float(v.std()), eps)
    return NormStats(mean, std, eps)


def grid_samples(channels: dict[str, np.ndarray], stats: NormStats,
                 normalize_targets: bool = True) -> list[GridSample]:
    """Node inputs (x, a, a_eps, grad a_eps), normalised, one GridSample per pair."""
    N, s = channels["a"].shape[0], channels["a"].shape[-1]
    coords = grid_coords(s, 2)
    out = []
    for j in range(N):
        a_n = stats.normalize("a", channels["a"][j].reshape(-1))
        inputs = np.column_stack([
            coords,
            a_n,
            stats.normalize("a_eps", channels["a_eps"][j].reshape(-1)),
            stats.normalize("grad_x", channels["grad_x"][j].reshape(-1)),
            stats.normalize("grad_y", channels["grad_y"][j].reshape(-1)),
        ])
        u = channels["u"][j].reshape(-1)
        target = stats.normalize("u", u) if normalize_targets else u
        out.append(GridSample(coords, a_n, inputs, target))
    return out
