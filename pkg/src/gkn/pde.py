"""Finite-difference Darcy solver and analytic Green's functions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .random_fields import GridField


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"CG did not converge in {iterations} iterations "
                         f"(relative residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass
class SparseSystem:
    """SPD system on the interior unknowns of an s x s grid."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    s: int

    @property
    def dimension(self) -> int:
        return self.rhs.size


def assemble_darcy(a: GridField, f: GridField, mean: str = "arithmetic") -> SparseSystem:
    """Five-point stencil for -div(a grad u) = f with u = 0 on the boundary.

    Interface coefficients are ``(a_P + a_N) / 2`` (or the harmonic mean).
    Unknowns are the (s-2)^2 interior nodes in row-major order.
    """
    if a.d != 2 or f.d != 2 or a.s != f.s:
        raise ValueError("a and f must be 2D fields at the same resolution")
    av = a.values
    if np.any(av <= 0):
        raise ValueError("coefficient must be strictly positive")
    s = a.s
    n = s - 2
    if n < 1:
        raise ValueError("grid has no interior nodes")
    h2 = a.h ** 2
    if mean == "arithmetic":
        ax = 0.5 * (av[1:, :] + av[:-1, :])   # between (i, j) and (i+1, j)
        ay = 0.5 * (av[:, 1:] + av[:, :-1])   # between (i, j) and (i, j+1)
    elif mean == "harmonic":
        ax = 2.0 * av[1:, :] * av[:-1, :] / (av[1:, :] + av[:-1, :])
        ay = 2.0 * av[:, 1:] * av[:, :-1] / (av[:, 1:] + av[:, :-1])
    else:
        raise ValueError(f"unknown interface mean {mean!r}")

    # interior node (i, j), i, j in 1..s-2, has unknown index (i-1)*n + (j-1)
    west = ax[:-1, 1:-1]   # face (i-1/2, j)
    east = ax[1:, 1:-1]    # face (i+1/2, j)
    south = ay[1:-1, :-1]
    north = ay[1:-1, 1:]
    diag = (west + east + south + north).reshape(-1) / h2

    idx = np.arange(n * n).reshape(n, n)
    rows = [idx.reshape(-1)]
    cols = [idx.reshape(-1)]
    vals = [diag]
    # couplings to interior neighbours only; boundary values are zero
    couplings = (
        (idx[1:, :], idx[:-1, :], west[1:, :]),
        (idx[:-1, :], idx[1:, :], east[:-1, :]),
        (idx[:, 1:], idx[:, :-1], south[:, 1:]),
        (idx[:, :-1], idx[:, 1:], north[:, :-1]),
    )
    for src, dst, c in couplings:
        rows.append(src.reshape(-1))
        cols.append(dst.reshape(-1))
        vals.append(-c.reshape(-1) / h2)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n * n, n * n))
    A.sum_duplicates()
    A.sort_indices()
    return SparseSystem(A, f.values[1:-1, 1:-1].reshape(-1).copy(), s)


def solve_cg(system: SparseSystem, tol: float = 1e-10, max_iter: int | None = None,
             x0: np.ndarray | None = None) -> tuple[np.ndarray, float, int]:
    """Jacobi-preconditioned conjugate gradients.

    Returns ``(x, relative_residual, iterations)``; the residual is
    ``||b - A x|| / ||b||`` recomputed from the final iterate.
    """
    A, b = system.matrix, system.rhs
    if max_iter is None:
        max_iter = 10 * b.size
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0
    dinv = 1.0 / A.diagonal()
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            # guard against drift of the recursive residual
            true_res = np.linalg.norm(b - A @ x) / bnorm
            if true_res <= tol:
                return x, true_res, it
            r = b - A @ x
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(max_iter, float(np.linalg.norm(b - A @ x) / bnorm))


def solve_dense(system: SparseSystem) -> np.ndarray:
    """Direct solve, meant for oracle checks on tiny grids."""
    if system.dimension > 15 ** 2:
        raise ValueError("dense solve is reserved for grids with at most 15^2 unknowns")
    return np.linalg.solve(system.matrix.toarray(), system.rhs)


def embed_interior(x: np.ndarray, s: int) -> np.ndarray:
    u = np.zeros((s, s))
    u[1:-1, 1:-1] = x.reshape(s - 2, s - 2)
    return u


def solve_darcy(a: GridField, f: GridField, tol: float = 1e-10, mean: str = "arithmetic") -> GridField:
    system = assemble_darcy(a, f, mean=mean)
    x, _, _ = solve_cg(system, tol=tol)
    return GridField(embed_interior(x, a.s), a.s, 2)


def downsample(field: GridField, s_target: int) -> GridField:
    return GridField(downsample_array(field.values, s_target), s_target, field.d)


def downsample_array(values: np.ndarray, s_target: int) -> np.ndarray:
    """Strided subsampling over the trailing grid axes (leading axes are batch)."""
    s = values.shape[-1]
    if s_target < 2 or (s - 1) % (s_target - 1):
        raise ValueError(f"cannot downsample s={s} to s={s_target}: (s-1) not divisible")
    stride = (s - 1) // (s_target - 1)
    d = 2 if values.ndim >= 2 and values.shape[-2] == s else 1
    if d == 1:
        return values[..., ::stride].copy()
    return values[..., ::stride, ::stride].copy()


# ---------------------------------------------------------------------------
# Green's functions

def green_1d(x: float, y: float) -> float:
    """Green's function of -u'' = f on [0,1] with u(0) = u(1) = 0."""
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError("green_1d is defined on [0,1] x [0,1]")
    return 0.5 * (x + y - abs(y - x)) - x * y


def green_1d_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorised G(x_i, y_j)."""
    x = np.asarray(x, dtype=np.float64)[:, None]
    y = np.asarray(y, dtype=np.float64)[None, :]
    if x.min() < 0 or x.max() > 1 or y.min() < 0 or y.max() > 1:
        raise ValueError("green_1d is defined on [0,1] x [0,1]")
    return 0.5 * (x + y - np.abs(y - x)) - x * y


def solve_poisson_1d_green(f: GridField) -> GridField:
    """u(x) = int_0^1 G(x, y) f(y) dy by the trapezoidal rule on f's grid."""
    if f.d != 1:
        raise ValueError("expects a 1D field")
    x = np.linspace(0.0, 1.0, f.s)
    w = np.full(f.s, f.h)
    w[0] = w[-1] = 0.5 * f.h
    u = green_1d_matrix(x, x) @ (w * f.values)
    u[0] = u[-1] = 0.0
    return GridField(u, f.s, 1)


def green_disk(rho: float, theta: float, rho_t: float, theta_t: float) -> float:
    """Green's function of the Poisson problem on the unit disk, polar coordinates.

    The angular coupling enters as cos(theta_t - theta).
    """
    if not (0.0 <= rho <= 1.0 and 0.0 <= rho_t <= 1.0):
        raise ValueError("radii must lie in [0, 1]")
    c = math.cos(theta_t - theta)
    num = rho_t ** 2 + rho ** 2 - 2.0 * rho * rho_t * c
    if num <= 0.0:
        raise ValueError("source and field points coincide")
    den = rho_t ** 2 * rho ** 2 + 1.0 - 2.0 * rho * rho_t * c
    return math.log(num / den) / (4.0 * math.pi)
