"""Feynman-Kac Monte Carlo estimators: a stochastic oracle for the solver.

The continuous-time walk jumps at total rate kappa and flips one uniformly
chosen coordinate per jump (equivalently, n independent per-site clocks of
rate kappa / n).  Plain Monte Carlo averages of the exponential functional
exp(integral of xi along the path) estimate

* the total mass started at y          (no endpoint condition),
* the two-point solution v(t, x, y)    (endpoint indicator, small n only),
* the principal eigenfunction          (stopped at the peak, killed on the
                                        boundary or at the horizon).

Averages are formed in a shifted domain so the exponentials cannot overflow.
Samples are split into fixed-size chunks, one Philox stream per chunk keyed
by (seed, chunk index), so every estimate is reproducible bit-for-bit no
matter how chunks would be scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .potential import PotentialField
from .rng import philox_stream

__all__ = [
    "WalkPath",
    "MCEstimate",
    "simulate_walk",
    "estimate_total_mass",
    "estimate_endpoint",
    "estimate_eigenfunction",
]

STREAM_CHUNK = 4096


@dataclass
class WalkPath:
    """One realized walk: jump times, visited vertices, and the xi integral."""

    start: int
    jump_times: np.ndarray
    visited: np.ndarray
    integral_xi: float


@dataclass
class MCEstimate:
    """Monte Carlo mean with its standard error.

    std_error is the sample standard deviation over sqrt(n_samples);
    censored_fraction is populated only by the eigenfunction estimator.
    """

    target: str
    mean: float
    std_error: float
    n_samples: int
    censored_fraction: float | None = None
    flag: str | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "target": self.target,
            "mean": self.mean,
            "std_error": self.std_error,
            "n_samples": self.n_samples,
        }
        if self.censored_fraction is not None:
            doc["censored_fraction"] = self.censored_fraction
        if self.flag is not None:
            doc["flag"] = self.flag
        return doc


def _resolve_values(field, n: int | None):
    if field is None:
        if n is None:
            raise ValueError("n is required when no potential is given")
        return None, n
    if isinstance(field, PotentialField):
        return field.values, field.n
    values = np.asarray(field, dtype=np.float64)
    if n is None:
        n = int(values.size).bit_length() - 1
    return values, n


def simulate_walk(
    y: int,
    t: float,
    kappa: float,
    rng: np.random.Generator,
    field=None,
    n: int | None = None,
) -> WalkPath:
    """Simulate one walk on [0, t] and accumulate the xi integral exactly.

    Holding times are Exp(kappa); each jump flips a uniform coordinate.  If
    no potential is given the integral is 0.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    values, n = _resolve_values(field, n)
    jump_times: list[float] = []
    visited = [y]
    x = y
    t_cur = 0.0
    integral = 0.0
    while True:
        hold = rng.exponential(1.0 / kappa)
        if t_cur + hold >= t:
            if values is not None:
                integral += (t - t_cur) * values[x]
            break
        if values is not None:
            integral += hold * values[x]
        t_cur += hold
        x ^= 1 << int(rng.integers(n))
        jump_times.append(t_cur)
        visited.append(x)
    return WalkPath(
        start=y,
        jump_times=np.asarray(jump_times),
        visited=np.asarray(visited, dtype=np.intp),
        integral_xi=integral,
    )


def _walk_integral(y, t, kappa, values, n, rng):
    """Fast inner loop: (integral of xi, endpoint), same draw order as simulate_walk."""
    x = y
    t_cur = 0.0
    integral = 0.0
    while True:
        hold = rng.exponential(1.0 / kappa)
        if t_cur + hold >= t:
            integral += (t - t_cur) * values[x]
            return integral, x
        integral += hold * values[x]
        t_cur += hold
        x ^= 1 << int(rng.integers(n))


def _shifted_mean(log_weights: np.ndarray):
    """Mean and standard error of exp(log_weights), formed without overflow.

    Entries of -inf stand for exact zero weights.
    """
    n_samples = log_weights.size
    finite = log_weights[np.isfinite(log_weights)]
    if finite.size == 0:
        return 0.0, 0.0
    shift = float(finite.max())
    w = np.zeros(n_samples)
    mask = np.isfinite(log_weights)
    w[mask] = np.exp(log_weights[mask] - shift)
    mean_s = float(w.mean())
    var_s = float(w.var(ddof=1)) if n_samples > 1 else 0.0
    scale = np.exp(shift)
    return scale * mean_s, scale * np.sqrt(var_s / n_samples)


def _chunked_streams(seed: int, n_samples: int):
    for chunk_idx, lo in enumerate(range(0, n_samples, STREAM_CHUNK)):
        size = min(STREAM_CHUNK, n_samples - lo)
        yield philox_stream(seed, chunk_idx), size


def estimate_total_mass(
    y: int,
    t: float,
    kappa: float,
    field,
    n_samples: int,
    seed: int,
    n: int | None = None,
) -> MCEstimate:
    """MC estimate of the total mass sum_x v(t, x, y) = E_y exp(int xi)."""
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    values, n = _resolve_values(field, n)
    logs = np.empty(n_samples)
    pos = 0
    for rng, size in _chunked_streams(seed, n_samples):
        for j in range(size):
            logs[pos + j] = _walk_integral(y, t, kappa, values, n, rng)[0]
        pos += size
    mean, se = _shifted_mean(logs)
    return MCEstimate(
        target=f"total mass at vertex {y}, t={t}", mean=mean, std_error=se, n_samples=n_samples
    )


def estimate_endpoint(
    x: int,
    y: int,
    t: float,
    kappa: float,
    field,
    n_samples: int,
    seed: int,
    n: int | None = None,
) -> MCEstimate:
    """MC estimate of v(t, x, y) = E_x[exp(int xi); X_t = y].

    The endpoint indicator thins the sample by a factor ~2^n, so this is a
    small-n oracle only (n <= 10 unless x == y).
    """
    values, n = _resolve_values(field, n)
    if n > 10 and x != y:
        raise ValueError("endpoint estimation is limited to n <= 10 for x != y")
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10^4")
    logs = np.full(n_samples, -np.inf)
    pos = 0
    hits = 0
    for rng, size in _chunked_streams(seed, n_samples):
        for j in range(size):
            integral, endpoint = _walk_integral(x, t, kappa, values, n, rng)
            if endpoint == y:
                logs[pos + j] = integral
                hits += 1
        pos += size
    mean, se = _shifted_mean(logs)
    return MCEstimate(
        target=f"endpoint pair ({x}, {y}), t={t}",
        mean=mean,
        std_error=se,
        n_samples=n_samples,
        flag="no endpoint hits" if hits == 0 else None,
    )


def estimate_eigenfunction(
    x: int,
    peak: int,
    lam: float,
    boundary,
    kappa: float,
    field,
    n_samples: int,
    seed: int,
    horizon: float | None = None,
    n: int | None = None,
) -> MCEstimate:
    """MC estimate of the stopped functional representing the eigenfunction.

    Each walk from x accumulates exp(int (xi - lam)) until it hits the peak
    (success), the boundary (weight 0), or the horizon (weight 0, counted as
    censored).  Censoring biases the estimate down; estimates with more than
    half the walks censored are flagged unreliable.
    """
    values, n = _resolve_values(field, n)
    boundary_set = frozenset(int(b) for b in np.asarray(boundary, dtype=np.intp).ravel())
    if horizon is None:
        horizon = 50.0 / kappa
    target = f"eigenfunction at vertex {x} (peak {peak})"
    if x == peak:
        return MCEstimate(target=target, mean=1.0, std_error=0.0, n_samples=n_samples)
    if x in boundary_set:
        return MCEstimate(target=target, mean=0.0, std_error=0.0, n_samples=n_samples)
    logs = np.full(n_samples, -np.inf)
    censored = 0
    pos = 0
    for rng, size in _chunked_streams(seed, n_samples):
        for j in range(size):
            cur = x
            t_cur = 0.0
            acc = 0.0
            while True:
                hold = rng.exponential(1.0 / kappa)
                if t_cur + hold > horizon:
                    censored += 1
                    break
                acc += hold * (values[cur] - lam)
                t_cur += hold
                cur ^= 1 << int(rng.integers(n))
                if cur == peak:
                    logs[pos + j] = acc
                    break
                if cur in boundary_set:
                    break
        pos += size
    mean, se = _shifted_mean(logs)
    frac = censored / n_samples
    return MCEstimate(
        target=target,
        mean=mean,
        std_error=se,
        n_samples=n_samples,
        censored_fraction=frac,
        flag="unreliable: censored fraction exceeds 0.5" if frac > 0.5 else None,
    )
