"""Gaussian random field samplers and coefficient preprocessing.

Coefficients are ``psi(a0)`` with ``a0`` a Karhunen-Loeve sample of
N(0, (-Lap + shift I)^(-exponent)) under Neumann conditions on [0,1]^2;
forcings for the 1D Poisson study use periodic conditions.

Randomness: every sampler takes a ``numpy.random.Generator``.  Datasets draw
sample ``i`` from ``child_rng(seed, i)``, i.e. a PCG64 stream seeded by
``SeedSequence(seed, spawn_key=(i,))``, which is the ``i``-th child of
``SeedSequence(seed).spawn``.  Sample ``i`` is therefore reproducible on its
own, independent of how many samples are drawn.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

HIGH = 12.0
LOW = 3.0
SMOOTH_VARIANCE = 5.0


def child_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass(frozen=True)
class GridField:
    """Values of a scalar field on the uniform grid of [0,1]^d, h = 1/(s-1)."""

    values: np.ndarray
    s: int
    d: int = 2

    def __post_init__(self):
        if self.s < 2:
            raise ValueError("resolution must be at least 2")
        v = np.asarray(self.values, dtype=np.float64)
        if v.size != self.s ** self.d:
            raise ValueError(f"{v.size} values for s={self.s}, d={self.d}")
        object.__setattr__(self, "values", v.reshape((self.s,) * self.d))

    @property
    def h(self) -> float:
        return 1.0 / (self.s - 1)

    def coords(self) -> np.ndarray:
        """(s^d, d) node coordinates in row-major order."""
        return grid_coords(self.s, self.d)


def grid_coords(s: int, d: int = 2) -> np.ndarray:
    x = np.linspace(0.0, 1.0, s)
    if d == 1:
        return x[:, None]
    mesh = np.meshgrid(*([x] * d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


@dataclass(frozen=True)
class GrfSpec:
    shift: float = 9.0
    exponent: float = 2.0
    boundary: str = "neumann"
    kmax: int | None = None  # default s - 1
    seed: int = 0

    def __post_init__(self):
        if self.shift <= 0 or self.exponent <= 0:
            raise ValueError("shift and exponent must be positive")
        if self.boundary not in ("neumann", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.kmax is not None and self.kmax < 1:
            raise ValueError("kmax must be >= 1")


DARCY_GRF = GrfSpec(shift=9.0, exponent=2.0, boundary="neumann")
POISSON_FORCING = GrfSpec(shift=1.0, exponent=1.0, boundary="periodic")


def _kmax(spec: GrfSpec, s: int) -> int:
    kmax = s - 1 if spec.kmax is None else spec.kmax
    if kmax > s:
        raise ValueError(f"kmax={kmax} exceeds resolution s={s} (aliasing)")
    return kmax


def neumann_modes(s: int, kmax: int) -> np.ndarray:
    """(s, kmax+1) table of L2-normalised cosines c_k cos(pi k x)."""
    x = np.linspace(0.0, 1.0, s)
    k = np.arange(kmax + 1)
    phi = np.sqrt(2.0) * np.cos(np.pi * np.outer(x, k))
    phi[:, 0] = 1.0
    return phi


def neumann_eigenvalues(spec: GrfSpec, kmax: int, d: int) -> np.ndarray:
    k2 = np.zeros((kmax + 1,) * d)
    for axis in range(d):
        shape = [1] * d
        shape[axis] = kmax + 1
        k2 = k2 + (np.arange(kmax + 1) ** 2).reshape(shape)
    return (np.pi ** 2 * k2 + spec.shift) ** (-spec.exponent)


def periodic_modes(s: int, kmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Cosine (k = 0..kmax) and sine (k = 1..kmax) tables on [0,1], unit L2 norm."""
    x = np.linspace(0.0, 1.0, s)
    k = np.arange(kmax + 1)
    cos = np.sqrt(2.0) * np.cos(2 * np.pi * np.outer(x, k))
    cos[:, 0] = 1.0
    sin = np.sqrt(2.0) * np.sin(2 * np.pi * np.outer(x, k[1:]))
    return cos, sin


def periodic_eigenvalues(spec: GrfSpec, kmax: int) -> np.ndarray:
    k = np.arange(kmax + 1)
    return ((2 * np.pi * k) ** 2 + spec.shift) ** (-spec.exponent)


def kl_variance(spec: GrfSpec, s: int, d: int = 2) -> np.ndarray:
    """Pointwise variance sum_k lambda_k phi_k(x)^2 of the truncated expansion."""
    kmax = _kmax(spec, s)
    if spec.boundary == "periodic":
        lam = periodic_eigenvalues(spec, kmax)
        cos, sin = periodic_modes(s, kmax)
        if d != 1:
            raise ValueError("periodic variance only implemented for d = 1")
        return cos ** 2 @ lam + sin ** 2 @ lam[1:]
    phi2 = neumann_modes(s, kmax) ** 2
    lam = neumann_eigenvalues(spec, kmax, d)
    if d == 1:
        return phi2 @ lam
    return phi2 @ lam @ phi2.T


def sample_grf(spec: GrfSpec, s: int, d: int, rng: np.random.Generator,
               xi: np.ndarray | None = None) -> GridField:
    """Truncated Karhunen-Loeve sample on the s^d grid.

    ``xi`` overrides the standard normal coefficients (shape of the mode table).
    """
    kmax = _kmax(spec, s)
    if spec.boundary == "periodic":
        if d != 1:
            raise ValueError("periodic sampler is one-dimensional")
        return sample_forcing_1d(spec, s, rng, xi=xi)
    lam = neumann_eigenvalues(spec, kmax, d)
    if xi is None:
        xi = rng.standard_normal(lam.shape)
    coef = np.sqrt(lam) * xi
    phi = neumann_modes(s, kmax)
    if d == 1:
        values = phi @ coef
    elif d == 2:
        values = phi @ coef @ phi.T
    else:
        raise ValueError("only d = 1, 2 are supported")
    return GridField(values, s, d)


def sample_forcing_1d(spec: GrfSpec, s: int, rng: np.random.Generator,
                      xi: np.ndarray | None = None) -> GridField:
    """Periodic 1D sample with cosine and sine modes; ``xi`` has length 2*kmax+1."""
    if spec.boundary != "periodic":
        raise ValueError("forcing sampler expects a periodic spec")
    kmax = _kmax(spec, s)
    lam = periodic_eigenvalues(spec, kmax)
    cos, sin = periodic_modes(s, kmax)
    if xi is None:
        xi = rng.standard_normal(2 * kmax + 1)
    root = np.sqrt(lam)
    values = cos @ (root * xi[: kmax + 1]) + sin @ (root[1:] * xi[kmax + 1:])
    return GridField(values, s, 1)


def threshold_psi(field: GridField) -> GridField:
    """12 where the field is >= 0, 3 where it is negative."""
    return GridField(np.where(field.values >= 0, HIGH, LOW), field.s, field.d)


def sample_coefficient(spec: GrfSpec, s: int, rng: np.random.Generator) -> GridField:
    return threshold_psi(sample_grf(spec, s, 2, rng))


def gaussian_smooth(field: GridField, variance: float = SMOOTH_VARIANCE) -> GridField:
    """Isotropic Gaussian blur, variance in grid-index units, cut at 3 std, reflected edges."""
    if field.d != 2:
        raise ValueError("gaussian_smooth expects a 2D field")
    out = ndimage.gaussian_filter(field.values, sigma=np.sqrt(variance), mode="reflect",
                                  truncate=3.0)
    return GridField(out, field.s, 2)


def gradient_field(field: GridField) -> tuple[GridField, GridField]:
    """Central differences inside, one-sided on the boundary."""
    if field.d != 2:
        raise ValueError("gradient_field expects a 2D field")
    if field.s < 3:
        raise ValueError("gradient_field needs s >= 3")
    g1, g2 = np.gradient(field.values, field.h, edge_order=1)
    return GridField(g1, field.s, 2), GridField(g2, field.s, 2)
