"""Bitmask vertex arithmetic and the matrix-free hypercube Laplacian / Hamiltonian.

Vertices of the n-dimensional hypercube {-1,+1}^n are encoded as bitmask
integers in [0, 2^n): bit i set means spin +1 at site i.  Two vertices are
neighbours when they differ in exactly one bit, so the neighbour set of x is
{x ^ (1 << i) : 0 <= i < n}.

Functions on the hypercube ("state vectors") are numpy float64 arrays of
length 2^n indexed by vertex.  The Laplacian acts as

    (L f)(x) = (1/n) * sum over neighbours z of (f(z) - f(x)),

and the Hamiltonian is kappa * L + diag(xi), optionally restricted by zero
boundary conditions on a vertex set (mask in, apply, mask out).  The operator
is never materialized above n = 10; the dense form exists for oracles only.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "neighbors",
    "hamming",
    "laplacian_apply",
    "hamiltonian_apply",
    "dense_hamiltonian",
    "HamiltonianOperator",
]

MAX_DIM = 24  # 2^24 float64 state vectors are the practical memory ceiling
DENSE_MAX_DIM = 10


def _check_vertex(x: int, n: int) -> None:
    if not 0 <= x < (1 << n):
        raise ValueError(f"vertex {x} out of range for n={n}")


def neighbors(x: int, n: int) -> list[int]:
    """All n vertices at Hamming distance 1 from x (single-bit flips)."""
    _check_vertex(x, n)
    return [x ^ (1 << i) for i in range(n)]


def hamming(x: int, y: int) -> int:
    """Number of differing bits between two vertices."""
    return (x ^ y).bit_count()


def _neighbor_sum(f: np.ndarray, n: int) -> np.ndarray:
    """Sum of f over the n neighbours of every vertex, as one array.

    Flipping bit i is a reversal along one axis of the (2,)*n reshaped view,
    so the sum needs no index tables: n strided adds on views.
    """
    grid = f.reshape((2,) * n)
    acc = np.zeros_like(grid)
    for axis in range(n):
        acc += np.flip(grid, axis)
    return acc.reshape(-1)


def laplacian_apply(f: np.ndarray, n: int) -> np.ndarray:
    """Apply the hypercube Laplacian (1/n) * sum_{z~x} (f(z) - f(x))."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (1 << n,):
        raise ValueError(f"state vector must have length 2^{n}, got {f.shape}")
    return _neighbor_sum(f, n) / n - f


def hamiltonian_apply(
    f: np.ndarray,
    kappa: float,
    xi: np.ndarray,
    n: int,
    boundary: np.ndarray | list[int] | tuple[int, ...] = (),
) -> np.ndarray:
    """Apply kappa * Laplacian + diag(xi) with zero boundary conditions.

    The input is forced to 0 on `boundary` before application and the result
    is zeroed there afterwards; this is exactly the symmetric restriction of
    the operator to the complement because the Laplacian couples only nearest
    neighbours.
    """
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    f = np.asarray(f, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if f.shape != (1 << n,) or xi.shape != (1 << n,):
        raise ValueError(f"state vector and potential must have length 2^{n}")
    bidx = np.asarray(boundary, dtype=np.intp)
    if bidx.size:
        f = f.copy()
        f[bidx] = 0.0
    out = kappa * (_neighbor_sum(f, n) / n - f) + xi * f
    if bidx.size:
        out[bidx] = 0.0
    return out


def dense_hamiltonian(
    kappa: float,
    xi: np.ndarray,
    n: int,
    boundary: np.ndarray | list[int] | tuple[int, ...] = (),
) -> np.ndarray:
    """Materialize the (masked) Hamiltonian as a dense 2^n x 2^n matrix.

    Oracle/small-n helper only; refuses n > DENSE_MAX_DIM.  Rows and columns
    of boundary vertices are zeroed, matching hamiltonian_apply.
    """
    if n > DENSE_MAX_DIM:
        raise ValueError(f"dense materialization limited to n <= {DENSE_MAX_DIM}")
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    dim = 1 << n
    xi = np.asarray(xi, dtype=np.float64)
    h = np.zeros((dim, dim))
    idx = np.arange(dim)
    for i in range(n):
        h[idx, idx ^ (1 << i)] = kappa / n
    h[idx, idx] = xi - kappa
    bidx = np.asarray(boundary, dtype=np.intp)
    if bidx.size:
        h[bidx, :] = 0.0
        h[:, bidx] = 0.0
    return h


class HamiltonianOperator:
    """Matrix-free kappa * Laplacian + diag(xi) with zero boundary conditions.

    Pure function of its inputs; the boundary is stored as an index array and
    applied as mask-in / mask-out around each product.  `scale` is a cheap
    upper estimate of the operator norm used for relative tolerances.
    """

    def __init__(
        self,
        kappa: float,
        xi: np.ndarray,
        n: int,
        boundary: np.ndarray | list[int] | tuple[int, ...] = (),
    ):
        if kappa <= 0:
            raise ValueError(f"kappa must be positive, got {kappa}")
        if n > MAX_DIM:
            raise ValueError(f"n={n} exceeds the supported maximum {MAX_DIM}")
        xi = np.asarray(xi, dtype=np.float64)
        if xi.shape != (1 << n,):
            raise ValueError(f"potential must have length 2^{n}")
        if not np.all(np.isfinite(xi)):
            raise ValueError("potential contains non-finite entries")
        self.kappa = float(kappa)
        self.xi = xi
        self.n = int(n)
        self.dim = 1 << n
        self.boundary = np.unique(np.asarray(boundary, dtype=np.intp))
        self.scale = float(np.max(np.abs(xi)) + 2.0 * kappa)

    def matvec(self, f: np.ndarray) -> np.ndarray:
        if self.boundary.size:
            f = f.copy()
            f[self.boundary] = 0.0
        out = self.kappa * (_neighbor_sum(f, self.n) / self.n - f) + self.xi * f
        if self.boundary.size:
            out[self.boundary] = 0.0
        return out

    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.dim, dtype=bool)
        mask[self.boundary] = False
        return mask

    def dense(self) -> np.ndarray:
        return dense_hamiltonian(self.kappa, self.xi, self.n, self.boundary)
