"""Principal eigenpairs and spectral gaps of the hypercube Hamiltonian.

The workhorse is a restarted Lanczos iteration with full reorthogonalization
on the matrix-free operator kappa * Laplacian + diag(xi), restricted by zero
boundary conditions on a set of extremal vertices.  The top of the spectrum
is separated from the bulk by a gap of order the potential gap, so plain
Lanczos started from a delta at the peak vertex converges in O(100) steps.
The second eigenvalue is obtained by a deflated run (every Krylov vector is
orthogonalized against the converged principal eigenvector).

Residuals are reported relative to a cheap operator-norm estimate
(max |xi| + 2 kappa).  Eigenvector entries below 100x that relative residual
are below the solver's resolution and must not be trusted; profile helpers
flag them instead of returning noise.

A dense eigendecomposition of the explicitly materialized operator is kept
as an independent oracle for n <= 10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .hypercube import HamiltonianOperator, dense_hamiltonian
from .potential import PotentialField
from .rng import philox_stream

__all__ = [
    "SpectralResult",
    "NonConvergenceError",
    "PerronViolationError",
    "principal_eig",
    "principal_eig_raw",
    "spectral_gap",
    "spectral_gap_raw",
    "eigen_bound_check",
    "EigenBoundReport",
    "eigenfunction_profile",
    "EigenfunctionProfile",
    "dense_oracle",
]

DEFAULT_TOL = 1e-12
RESOLUTION_FACTOR = 100.0  # eigenvector entries below this x residual are noise


class NonConvergenceError(RuntimeError):
    """Lanczos hit its iteration cap; carries the best residual reached."""

    def __init__(self, best_residual: float, steps: int):
        super().__init__(
            f"eigensolver did not converge in {steps} steps "
            f"(best relative residual {best_residual:.3e})"
        )
        self.best_residual = best_residual
        self.steps = steps


class PerronViolationError(RuntimeError):
    """The computed principal eigenvector has negative entries beyond noise."""


@dataclass
class SpectralResult:
    """Principal eigenpair of the restricted operator.

    `nu` is normalized so nu[peak] == 1 and is zero on the boundary set;
    `residual` is ||H nu - lam nu||_2 / ||nu||_2 relative to the operator
    norm estimate; `gap` is lam minus the second eigenvalue when computed.
    """

    lam: float
    nu: np.ndarray
    residual: float
    peak: int
    boundary: np.ndarray
    gap: float | None = None

    def to_json_dict(self, with_vector: bool = False) -> dict:
        import base64

        doc = {
            "eigenvalue": self.lam,
            "residual": self.residual,
            "gap": self.gap,
            "peak": int(self.peak),
            "boundary": [int(b) for b in self.boundary],
        }
        if with_vector:
            doc["nu_base64"] = base64.b64encode(
                np.ascontiguousarray(self.nu, dtype=np.float64).tobytes()
            ).decode("ascii")
        return doc


def _orthogonalize(w: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    for b in basis:
        w -= np.dot(b, w) * b
    return w


def _lanczos_top(
    op: HamiltonianOperator,
    v0: np.ndarray,
    tol: float,
    max_steps: int,
    deflate: list[np.ndarray] | tuple = (),
    basis_cap: int = 180,
):
    """Largest eigenpair of op restricted orthogonal to `deflate`.

    Restarted Lanczos with full reorthogonalization inside each cycle and the
    best Ritz vector as the next start.  Returns (lam, unit eigenvector,
    relative residual, steps).  Raises NonConvergenceError at the step cap.
    """
    scale = op.scale if op.scale > 0 else 1.0
    target = tol * scale
    dim = op.dim
    cap = min(basis_cap, dim)
    deflate = [d / np.linalg.norm(d) for d in deflate]

    v = v0.astype(np.float64).copy()
    v = _orthogonalize(v, deflate)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise ValueError("start vector vanishes after deflation")
    v /= nrm

    best_lam, best_vec, best_resid = 0.0, v, np.inf
    steps = 0
    while steps < max_steps:
        basis = np.empty((cap, dim))
        basis[0] = v
        alphas: list[float] = []
        betas: list[float] = []
        j = 0
        while j < cap and steps < max_steps:
            w = op.matvec(basis[j])
            steps += 1
            alphas.append(float(np.dot(basis[j], w)))
            w -= alphas[j] * basis[j]
            if j > 0:
                w -= betas[j - 1] * basis[j - 1]
            # Full reorthogonalization, twice, plus deflation: keeps the basis
            # orthogonal to working precision at these basis sizes.
            for _ in range(2):
                w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
                w = _orthogonalize(w, deflate)
            beta = float(np.linalg.norm(w))
            theta, s = eigh_tridiagonal(
                np.asarray(alphas), np.asarray(betas), select="i", select_range=(j, j)
            )
            est = beta * abs(s[j, 0])
            breakdown = beta <= 1e-14 * scale
            if est <= 0.5 * target or breakdown or j == cap - 1:
                y = basis[: j + 1].T @ s[:, 0]
                y /= np.linalg.norm(y)
                hy = op.matvec(y)
                steps += 1
                lam = float(np.dot(y, hy))
                resid = float(np.linalg.norm(hy - lam * y))
                if resid < best_resid:
                    best_lam, best_vec, best_resid = lam, y, resid
                if resid <= target:
                    return lam, y, resid / scale, steps
                if breakdown:
                    # Exhausted an invariant subspace without meeting the
                    # target: restart from a reproducible perturbation.
                    rng = philox_stream(0, steps)
                    y = y + 1e-8 * rng.standard_normal(dim)
                    v = _orthogonalize(y, deflate)
                    v /= np.linalg.norm(v)
                    break
                if j == cap - 1:
                    v = _orthogonalize(y.copy(), deflate)
                    v /= np.linalg.norm(v)
                    break
            betas.append(beta)
            basis[j + 1] = w / beta
            j += 1
    raise NonConvergenceError(best_resid / scale, steps)


def _perron_normalize(vec: np.ndarray, peak: int, rel_residual: float) -> np.ndarray:
    peak_val = vec[peak]
    if peak_val == 0.0:
        raise PerronViolationError("principal eigenvector vanishes at the peak vertex")
    nu = vec / peak_val
    floor = -RESOLUTION_FACTOR * rel_residual * max(1.0, float(np.max(np.abs(nu))))
    if float(np.min(nu)) < floor:
        raise PerronViolationError(
            f"eigenvector entry {np.min(nu):.3e} below the Perron noise floor {floor:.3e}"
        )
    return nu


def principal_eig_raw(
    kappa: float,
    values: np.ndarray,
    n: int,
    boundary=(),
    peak: int | None = None,
    tol: float = DEFAULT_TOL,
    max_steps: int | None = None,
) -> SpectralResult:
    """Principal eigenpair for a raw potential array (no order statistics)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = HamiltonianOperator(kappa, values, n, boundary)
    if peak is None:
        masked = np.array(values, dtype=np.float64, copy=True)
        if op.boundary.size:
            masked[op.boundary] = -np.inf
        peak = int(np.argmax(masked))
    if op.boundary.size and peak in set(int(b) for b in op.boundary):
        raise ValueError("peak vertex lies in the boundary set")
    v0 = np.zeros(op.dim)
    v0[peak] = 1.0
    cap = max_steps if max_steps is not None else 50 * n
    lam, vec, rel, _ = _lanczos_top(op, v0, tol, cap)
    nu = _perron_normalize(vec, peak, rel)
    return SpectralResult(lam=lam, nu=nu, residual=rel, peak=peak, boundary=op.boundary)


def principal_eig(
    kappa: float,
    field: PotentialField,
    i: int = 1,
    l: int = 1,
    tol: float = DEFAULT_TOL,
) -> SpectralResult:
    """Principal eigenpair with zero boundary on the top-l set minus x_i.

    i and l are 1-based potential ranks with 1 <= i <= l; the eigenfunction
    is normalized to 1 at the peak x_i.
    """
    if not 1 <= i <= l:
        raise ValueError(f"need 1 <= i <= l, got i={i}, l={l}")
    top = field.top(l)
    peak = int(top[i - 1])
    boundary = np.delete(top, i - 1)
    return principal_eig_raw(
        kappa, field.values, field.n, boundary=boundary, peak=peak, tol=tol
    )


def spectral_gap_raw(
    kappa: float,
    values: np.ndarray,
    n: int,
    boundary=(),
    peak: int | None = None,
    tol: float = DEFAULT_TOL,
    second_start: int | None = None,
) -> float:
    """lam_1 - lam_2 of the restricted operator via a deflated second run."""
    res = principal_eig_raw(kappa, values, n, boundary, peak, tol)
    op = HamiltonianOperator(kappa, values, n, boundary)
    unit = res.nu / np.linalg.norm(res.nu)
    if second_start is None:
        masked = np.array(values, dtype=np.float64, copy=True)
        masked[res.peak] = -np.inf
        if op.boundary.size:
            masked[op.boundary] = -np.inf
        second_start = int(np.argmax(masked))
    v0 = np.zeros(op.dim)
    v0[second_start] = 1.0
    lam2, _, _, _ = _lanczos_top(op, v0, tol, 50 * n, deflate=[unit])
    return res.lam - lam2


def spectral_gap(
    kappa: float,
    field: PotentialField,
    i: int = 1,
    l: int = 1,
    tol: float = DEFAULT_TOL,
) -> float:
    """Spectral gap of the top-l restricted operator with peak at rank i.

    The deflated second run starts from the highest unblocked vertex below
    the peak (rank l + 1), which carries most of the second eigenvector.
    """
    if not 1 <= i <= l:
        raise ValueError(f"need 1 <= i <= l, got i={i}, l={l}")
    top = field.top(l)
    peak = int(top[i - 1])
    boundary = np.delete(top, i - 1)
    second_start = field.vertex(l + 1) if l + 1 <= field.dim else None
    return spectral_gap_raw(
        kappa,
        field.values,
        field.n,
        boundary=boundary,
        peak=peak,
        tol=tol,
        second_start=second_start,
    )


@dataclass(frozen=True)
class EigenBoundReport:
    """Numeric evaluation of the resolvent eigenvalue bound N - kappa <= lam_1 < gamma."""

    n: int
    big_n: float
    big_m: float
    d_min: int
    gamma: float
    lambda1: float
    hypotheses_met: bool
    admissible: bool
    bound_holds: bool
    violation: bool


def eigen_bound_check(
    kappa: float,
    field: PotentialField | np.ndarray,
    A,
    gamma: float,
    n: int | None = None,
    tol: float = DEFAULT_TOL,
) -> EigenBoundReport:
    """Check the two-sided eigenvalue bound for a well-separated peak set A.

    Hypotheses: pairwise Hamming distances in A exceed 2 and the off-A
    maximum M satisfies M <= N - kappa where N is the on-A maximum.  For an
    admissible gamma (gamma > N - kappa and kappa / (gamma - (N - kappa)) <
    n (gamma - M) / kappa) the principal eigenvalue of the unrestricted
    operator must satisfy N - kappa <= lam_1 < gamma; a violation with
    hypotheses met and gamma admissible is reported as a hard failure.
    """
    if isinstance(field, PotentialField):
        values, n = field.values, field.n
    else:
        values = np.asarray(field, dtype=np.float64)
        if n is None:
            raise ValueError("n is required when passing a raw potential array")
    a_idx = np.asarray(sorted(set(int(a) for a in np.asarray(A).ravel())), dtype=np.intp)
    if a_idx.size == 0:
        raise ValueError("A must be non-empty")
    mask = np.zeros(values.size, dtype=bool)
    mask[a_idx] = True
    big_n = float(values[mask].max())
    big_m = float(values[~mask].max()) if np.any(~mask) else -np.inf
    if a_idx.size < 2:
        d_min = n + 1
    else:
        xors = a_idx[:, None] ^ a_idx[None, :]
        dists = np.bitwise_count(xors.astype(np.uint64))
        d_min = int(dists[np.triu_indices(a_idx.size, k=1)].min())
    hypotheses_met = d_min > 2 and big_m <= big_n - kappa
    admissible = gamma > big_n - kappa and (
        kappa / (gamma - (big_n - kappa)) < n * (gamma - big_m) / kappa
    )
    res = principal_eig_raw(kappa, values, n, tol=tol)
    slack = 10.0 * tol * (float(np.max(np.abs(values))) + 2.0 * kappa)
    bound_holds = (big_n - kappa <= res.lam + slack) and (res.lam < gamma)
    return EigenBoundReport(
        n=n,
        big_n=big_n,
        big_m=big_m,
        d_min=d_min,
        gamma=gamma,
        lambda1=res.lam,
        hypotheses_met=hypotheses_met,
        admissible=admissible,
        bound_holds=bound_holds,
        violation=hypotheses_met and admissible and not bound_holds,
    )


@dataclass(frozen=True)
class EigenfunctionProfile:
    """Localization profile of a principal eigenfunction."""

    mass_off_peak: float
    log_nu_at_xk: float
    norm_sq: float
    below_resolution: bool


def eigenfunction_profile(
    result: SpectralResult, field: PotentialField, k: int
) -> EigenfunctionProfile:
    """Off-peak mass and the log eigenfunction value at the rank-k vertex.

    Values of nu below 100x the solver residual are flagged below resolution
    and must be excluded from decay statistics.
    """
    xk = field.vertex(k)
    if xk == result.peak:
        raise ValueError(f"rank {k} is the peak vertex itself")
    if xk in set(int(b) for b in result.boundary):
        raise ValueError(f"rank {k} vertex lies in the boundary set")
    nu = result.nu
    mass_off_peak = float(nu.sum() - nu[result.peak])
    norm_sq = float(np.dot(nu, nu))
    upper = 1.0 + max(0.0, mass_off_peak) * float(np.max(nu)) + 1e-9
    if not (1.0 - 1e-12 <= norm_sq <= upper):
        raise ArithmeticError(f"eigenvector norm {norm_sq} outside [1, {upper}]")
    floor = RESOLUTION_FACTOR * result.residual
    val = float(nu[xk])
    below = val < floor
    log_val = float(np.log(val)) if val > 0 else -np.inf
    return EigenfunctionProfile(
        mass_off_peak=mass_off_peak,
        log_nu_at_xk=log_val,
        norm_sq=norm_sq,
        below_resolution=below,
    )


def dense_oracle(
    kappa: float,
    field: PotentialField | np.ndarray,
    boundary=(),
    n: int | None = None,
):
    """Full spectrum of the restricted operator by dense diagonalization.

    Returns (eigenvalues descending, eigenvectors) with eigenvectors embedded
    as full-length columns that vanish on the boundary.  Oracle only: n <= 10.
    """
    if isinstance(field, PotentialField):
        values, n = field.values, field.n
    else:
        values = np.asarray(field, dtype=np.float64)
        if n is None:
            raise ValueError("n is required when passing a raw potential array")
    if n > 10:
        raise ValueError("dense oracle limited to n <= 10")
    h = dense_hamiltonian(kappa, values, n, boundary)
    bidx = np.unique(np.asarray(boundary, dtype=np.intp))
    keep = np.setdiff1d(np.arange(1 << n), bidx)
    sub = h[np.ix_(keep, keep)]
    vals, vecs = np.linalg.eigh(sub)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    full = np.zeros((1 << n, keep.size))
    full[keep, :] = vecs
    return vals.copy(), full
