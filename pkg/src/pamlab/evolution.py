"""Overflow-safe time evolution of the hypercube heat equation with potential.

The solution of dv/dt = kappa * Laplacian v + xi v grows like exp(max xi * t),
which overflows float64 at modest times, so states are carried in rescaled
form: v(t, x) = w(x) * exp(L) with w renormalized to unit max-norm after each
step and the factor folded into the scalar L.  All reported quantities are
logs or ratios.

Two propagation paths share this representation:

* dense: exact spectral decomposition of the materialized operator (n <= 10),
* krylov: a Lanczos subspace exponential of the shifted operator H - rho I
  (rho = max xi) with adaptive substeps, for any n.

The normalized field u = v / sum(v) is the mutation-selection frequency
vector; its mean fitness is sum(u * xi).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .hypercube import HamiltonianOperator, dense_hamiltonian
from .potential import PotentialField

__all__ = [
    "EvolutionState",
    "GrowthRecord",
    "StiffnessError",
    "NegativityError",
    "propagate",
    "solve_from_delta",
    "solve_flat",
    "mutation_selection",
    "growth_exponent",
    "dense_factorization",
]

KRYLOV_DIM = 30
NEGATIVITY_TOL = 1e-6  # relative floor below which negative entries are an error


class StiffnessError(RuntimeError):
    """Adaptive substepping underflowed; the step could not be completed."""


class NegativityError(RuntimeError):
    """The evolved state developed negative entries beyond integrator noise."""


@dataclass
class EvolutionState:
    """Rescaled solution state: v(t, x) = w(x) * exp(logfac)."""

    w: np.ndarray
    logfac: float
    t: float

    @classmethod
    def from_delta(cls, y: int, n: int) -> "EvolutionState":
        w = np.zeros(1 << n)
        w[y] = 1.0
        return cls(w=w, logfac=0.0, t=0.0)

    @classmethod
    def from_flat(cls, n: int) -> "EvolutionState":
        return cls(w=np.ones(1 << n), logfac=0.0, t=0.0)

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "EvolutionState":
        v = np.asarray(v, dtype=np.float64)
        m = float(np.max(np.abs(v)))
        if m == 0.0:
            return cls(w=v.copy(), logfac=0.0, t=0.0)
        return cls(w=v / m, logfac=float(np.log(m)), t=0.0)

    def copy(self) -> "EvolutionState":
        return EvolutionState(w=self.w.copy(), logfac=self.logfac, t=self.t)

    def log_value(self, x: int) -> float:
        """log v(t, x); -inf where the component is zero or negative."""
        wx = self.w[x]
        return float(np.log(wx) + self.logfac) if wx > 0 else -np.inf

    def log_total_mass(self) -> float:
        s = float(self.w.sum())
        return float(np.log(s) + self.logfac) if s > 0 else -np.inf


@dataclass
class GrowthRecord:
    """Snapshot of tracked observables at one output time."""

    t: float
    log_v_at: dict[int, float]
    log_total_mass: float
    u_at: dict[int, float]
    mean_fitness: float
    tracked: tuple[int, ...] = dc_field(default=())


def _resolve_values(field, n: int | None = None) -> tuple[np.ndarray, int]:
    if isinstance(field, PotentialField):
        return field.values, field.n
    values = np.asarray(field, dtype=np.float64)
    if n is None:
        n = int(values.size).bit_length() - 1
    if values.shape != (1 << n,):
        raise ValueError("potential length is not a power of two matching n")
    return values, n


def dense_factorization(kappa: float, field, n: int | None = None):
    """Eigendecomposition of the dense operator, reusable across output times."""
    values, n = _resolve_values(field, n)
    h = dense_hamiltonian(kappa, values, n)
    lam, q = np.linalg.eigh(h)
    return lam, q


def _check_positivity(w: np.ndarray) -> None:
    floor = -NEGATIVITY_TOL * max(1.0, float(np.max(np.abs(w))))
    if float(w.min()) < floor:
        raise NegativityError(
            f"state entry {w.min():.3e} below the negativity floor {floor:.3e}"
        )


def _renormalize(state: EvolutionState, w_new: np.ndarray, log_gain: float, dt: float):
    m = float(np.max(np.abs(w_new)))
    if m == 0.0:
        state.w = w_new
    else:
        state.w = w_new / m
        state.logfac += float(np.log(m)) + log_gain
    state.t += dt


def _propagate_dense(state: EvolutionState, lam: np.ndarray, q: np.ndarray, t_end: float):
    dt = t_end - state.t
    coeff = q.T @ state.w
    lmax = float(lam[-1])
    coeff *= np.exp((lam - lmax) * dt)
    _renormalize(state, q @ coeff, lmax * dt, dt)


def _lanczos_basis(matvec, w: np.ndarray, m: int):
    """Lanczos tridiagonalization from w; stops early on happy breakdown."""
    dim = w.size
    m = min(m, dim)
    beta0 = float(np.linalg.norm(w))
    basis = np.empty((m, dim))
    basis[0] = w / beta0
    alphas: list[float] = []
    betas: list[float] = []
    breakdown = False
    for j in range(m):
        hv = matvec(basis[j])
        alphas.append(float(np.dot(basis[j], hv)))
        hv -= alphas[j] * basis[j]
        if j > 0:
            hv -= betas[j - 1] * basis[j - 1]
        hv -= basis[: j + 1].T @ (basis[: j + 1] @ hv)
        beta = float(np.linalg.norm(hv))
        if j == m - 1:
            betas.append(beta)
            break
        if beta <= 1e-14 * max(1.0, abs(alphas[j])):
            betas.append(beta)
            breakdown = True
            break
        betas.append(beta)
        basis[j + 1] = hv / beta
    k = len(alphas)
    return beta0, basis[:k], np.asarray(alphas), np.asarray(betas), breakdown


def _phi1(x: np.ndarray) -> np.ndarray:
    out = np.ones_like(x)
    big = np.abs(x) > 1e-8
    out[big] = np.expm1(x[big]) / x[big]
    out[~big] = 1.0 + x[~big] / 2.0
    return out


def _propagate_krylov(
    state: EvolutionState,
    op: HamiltonianOperator,
    rho: float,
    t_end: float,
    tol: float,
    dt_target: float | None,
):
    spread = float(np.max(op.xi) - np.min(op.xi)) + 2.0 * op.kappa
    dt = dt_target if dt_target is not None else 10.0 / max(spread, 1e-3)
    min_dt = 1e-12 * max(1.0, t_end)
    shifted = lambda v: op.matvec(v) - rho * v

    while state.t < t_end - 1e-12 * max(1.0, t_end):
        remaining = t_end - state.t
        beta0 = float(np.linalg.norm(state.w))
        if beta0 == 0.0:
            break
        b0, basis, alphas, betas, breakdown = _lanczos_basis(shifted, state.w, KRYLOV_DIM)
        mu, s = eigh_tridiagonal(alphas, betas[: len(alphas) - 1])
        mu0 = float(mu[-1])  # top Ritz value; the shifted spectrum is <= 0
        if breakdown:
            dt = remaining  # invariant subspace: the small exponential is exact
        else:
            dt = min(dt, remaining)
        while True:
            # Work relative to exp(dt * mu0), folded into the log factor below,
            # so arbitrarily long substeps cannot underflow the state.
            y_small = s @ (np.exp(dt * (mu - mu0)) * s[0, :])
            if breakdown:
                accept, tiny = True, True
            else:
                phi = s @ (_phi1(dt * mu) * s[0, :])
                # defect estimate vs. the final norm, compared in log domain
                log_est = np.log(max(betas[-1] * dt * abs(phi[-1]), 1e-300))
                log_budget = (
                    np.log(tol * dt * max(float(np.linalg.norm(y_small)), 1e-300))
                    + dt * mu0
                )
                accept = log_est <= log_budget
                tiny = log_est <= log_budget + np.log(0.01)
            if accept:
                break
            dt *= 0.5
            if dt < min_dt:
                raise StiffnessError(
                    f"substep underflow at t={state.t:.6g} (dt={dt:.3e})"
                )
        w_new = b0 * (basis.T @ y_small)
        entered_nonneg = float(state.w.min()) >= 0.0
        _renormalize(state, w_new, (rho + mu0) * dt, dt)
        if entered_nonneg:
            _check_positivity(state.w)
        if not breakdown and tiny:
            grow = dt * 2.0
            dt = min(grow, dt_target) if dt_target is not None else grow
    state.t = t_end  # remove accumulated substep rounding drift


def propagate(
    state: EvolutionState,
    kappa: float,
    field,
    t_end: float,
    *,
    tol: float = 1e-10,
    dt_target: float | None = None,
    method: str = "auto",
    dense_cache=None,
    n: int | None = None,
) -> EvolutionState:
    """Advance the state to t_end; returns a new state, input untouched.

    method "auto" uses the exact dense path for n <= 10 and the Krylov
    propagator above; "dense" / "krylov" force a path.  dense_cache may carry
    a precomputed dense_factorization to amortize repeated calls.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t_end < state.t:
        raise ValueError(f"t_end={t_end} precedes current time {state.t}")
    values, n = _resolve_values(field, n)
    out = state.copy()
    if t_end == state.t:
        return out
    if method == "auto":
        method = "dense" if n <= 10 else "krylov"
    if method == "dense":
        if dense_cache is None:
            dense_cache = dense_factorization(kappa, values, n)
        lam, q = dense_cache
        entered_nonneg = float(out.w.min()) >= 0.0
        _propagate_dense(out, lam, q, t_end)
        if entered_nonneg:
            _check_positivity(out.w)
    elif method == "krylov":
        op = HamiltonianOperator(kappa, values, n)
        rho = float(np.max(values))
        _propagate_krylov(out, op, rho, t_end, tol, dt_target)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out


def _default_tracked(field, values: np.ndarray, extra: tuple[int, ...] = ()) -> tuple[int, ...]:
    if isinstance(field, PotentialField):
        ranked = [field.vertex(k) for k in range(1, min(5, field.dim) + 1)]
    else:
        top = np.argsort(-values)[: min(5, values.size)]
        ranked = [int(v) for v in top]
    seen: dict[int, None] = {}
    for v in list(extra) + ranked:
        seen.setdefault(int(v), None)
    return tuple(seen)


def _record(state: EvolutionState, values: np.ndarray, tracked: tuple[int, ...]) -> GrowthRecord:
    s = float(state.w.sum())
    if not np.isfinite(s) or s <= 0:
        raise NegativityError(f"total mass {s} is not positive")
    return GrowthRecord(
        t=state.t,
        log_v_at={x: state.log_value(x) for x in tracked},
        log_total_mass=float(np.log(s) + state.logfac),
        u_at={x: float(state.w[x] / s) for x in tracked},
        mean_fitness=float(np.dot(state.w, values) / s),
        tracked=tracked,
    )


def _solve(
    state: EvolutionState,
    kappa: float,
    field,
    times,
    tol: float,
    tracked,
    method: str,
    n: int | None,
) -> list[GrowthRecord]:
    values, n = _resolve_values(field, n)
    times = [float(t) for t in times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing")
    if times and times[0] < 0:
        raise ValueError("times must be non-negative")
    resolved = method if method != "auto" else ("dense" if n <= 10 else "krylov")
    cache = dense_factorization(kappa, values, n) if resolved == "dense" else None
    records = []
    for t in times:
        state = propagate(
            state, kappa, values, t, tol=tol, method=resolved, dense_cache=cache, n=n
        )
        records.append(_record(state, values, tracked))
    return records


def solve_from_delta(
    y: int,
    kappa: float,
    field,
    times,
    *,
    tol: float = 1e-10,
    tracked=None,
    method: str = "auto",
    n: int | None = None,
) -> list[GrowthRecord]:
    """Evolve the point mass at y, recording tracked observables at each time.

    Default tracked vertices: the five highest-potential vertices plus y.
    """
    values, n = _resolve_values(field, n)
    tracked = tuple(tracked) if tracked is not None else _default_tracked(field, values, (y,))
    return _solve(EvolutionState.from_delta(y, n), kappa, field, times, tol, tracked, method, n)


def solve_flat(
    kappa: float,
    field,
    times,
    *,
    tol: float = 1e-10,
    tracked=None,
    method: str = "auto",
    n: int | None = None,
) -> list[GrowthRecord]:
    """Evolve the all-ones initial condition, recording tracked observables."""
    values, n = _resolve_values(field, n)
    tracked = tuple(tracked) if tracked is not None else _default_tracked(field, values)
    return _solve(EvolutionState.from_flat(n), kappa, field, times, tol, tracked, method, n)


def mutation_selection(state: EvolutionState, field, n: int | None = None):
    """Frequency vector u = v / total mass and its mean fitness.

    The exponential prefactor cancels in the normalization, so u is computed
    directly from the rescaled state.
    """
    values, _ = _resolve_values(field, n)
    s = float(state.w.sum())
    if not np.isfinite(s) or s <= 0:
        raise NegativityError(f"total mass {s} is not positive")
    u = state.w / s
    return u, float(np.dot(u, values))


def growth_exponent(records: list[GrowthRecord], vertex: int) -> float:
    """log v(t, vertex) / t at the latest recorded time."""
    final = max(records, key=lambda r: r.t)
    if final.t <= 0:
        raise ValueError("growth exponent needs a record with t > 0")
    return final.log_v_at[int(vertex)] / final.t
