"""Random potential fields on the hypercube and their tail models.

Two samplers produce the i.i.d. potential:

* ``sample_rem`` draws the Gaussian field directly, N(0, n) per vertex.
* ``sample_coupled`` builds the field through its order statistics: with
  sigma_i ~ Exp(rate i) independent, the partial sums
  eta_i = sigma_i + ... + sigma_{2^n} are the order statistics of 2^n
  standard exponentials, and composing with the inverse tail function psi_n
  yields the ordered potential values, assigned to a uniformly random
  permutation of vertices.  The sigma sequence is retained because the gaps
  between extremal values converge to n-independent limits g(sigma_k + ...),
  which downstream consumers use as the transition-point predictor.

A ``TailModel`` packages the tail machinery of a distribution family:
phi_n(r) = log 1/(1 - G_n(r)), its inverse psi_n, the extreme growth
function f (psi_n(a n) ~ f(a) n), the gap limit g, theta = f(log 2), and a
left-tail control sequence l_n.

For the Gaussian family, f(a) = sqrt(2a), theta = sqrt(2 log 2), and the gap
limit is g(c) = c / sqrt(2 log 2): the extreme order statistics of eta sit at
scale n log 2, where psi_n(s + c) - psi_n(s) -> c / sqrt(2 log 2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.special import log_ndtr, ndtri_exp, xlogy

from .rng import philox_stream

__all__ = [
    "TieError",
    "TailModel",
    "PotentialField",
    "sample_rem",
    "sample_coupled",
    "psi_rem",
    "gap_limit",
    "check_assumption_L",
    "AssumptionLReport",
    "level_set_geometry",
    "LevelSetGeometry",
    "omega_delta",
    "cramer_rate",
]

LOG2 = float(np.log(2.0))
THETA_REM = float(np.sqrt(2.0 * LOG2))


class TieError(ValueError):
    """Two sampled potential values collided after rounding.

    Ties have probability zero in exact arithmetic; everything downstream
    relies on strict order statistics, so a tie aborts instead of being
    broken arbitrarily.
    """


# ---------------------------------------------------------------------------
# tail models


def psi_rem(s, n: int):
    """Inverse of phi_n for the N(0, n) law: the exact Gaussian quantile.

    phi_n(r) = -log P(N(0,n) > r), so psi_rem(s) = -sqrt(n) * ndtri(exp(-s)),
    evaluated through ndtri_exp to stay accurate for large s.  Monotone
    increasing in s; rejects s <= 0.
    """
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr <= 0):
        raise ValueError("psi_rem requires s > 0")
    out = -np.sqrt(n) * ndtri_exp(-s_arr)
    return float(out) if np.isscalar(s) else out


def _phi_rem(r, n: int):
    """phi_n(r) = log 1/(1 - G_n(r)) for the N(0, n) law."""
    r_arr = np.asarray(r, dtype=np.float64)
    out = -log_ndtr(-r_arr / np.sqrt(n))
    return float(out) if np.isscalar(r) else out


@dataclass(frozen=True)
class TailModel:
    """Tail machinery of a potential distribution family.

    phi(r, n) and psi(s, n) are mutually inverse on the support; f is the
    extreme-growth function, g the gap limit, theta = f(log 2), and l_n the
    left-tail control sequence.
    """

    name: str
    phi: Callable[[float, int], float]
    psi: Callable[[float, int], float]
    f: Callable[[float], float]
    g: Callable[[float], float]
    theta: float
    l_n: Callable[[int], float] = dc_field(default=lambda n: float(n) ** 0.75)

    @staticmethod
    def rem() -> "TailModel":
        """Gaussian N(0, n) tail: f(a) = sqrt(2a), g(c) = c / sqrt(2 log 2)."""
        return TailModel(
            name="rem",
            phi=_phi_rem,
            psi=psi_rem,
            f=lambda a: np.sqrt(2.0 * a),
            g=lambda c: c / THETA_REM,
            theta=THETA_REM,
        )

    @staticmethod
    def exponential() -> "TailModel":
        """Standard exponential tail: psi is the identity, gaps are exact."""
        return TailModel(
            name="exponential",
            phi=lambda r, n: np.maximum(np.asarray(r, dtype=np.float64), 0.0),
            psi=lambda s, n: np.asarray(s, dtype=np.float64),
            f=lambda a: a,
            g=lambda c: c,
            theta=LOG2,
        )


def tail_cdf(tail: TailModel, r, n: int):
    """G_n(r) recovered from phi: G = 1 - exp(-phi), stable in the left tail."""
    return -np.expm1(-np.asarray(tail.phi(r, n), dtype=np.float64))


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True)
class PotentialField:
    """An i.i.d. potential field with its order statistics.

    values[x] is the potential at vertex x; order[k-1] is the vertex carrying
    the k-th largest value (strictly sorted, ties rejected); sigma is the
    Exp(rate i) sequence of the coupled construction when available.
    """

    n: int
    seed: int
    kind: str
    values: np.ndarray
    order: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        sorted_vals = self.values[self.order]
        if not np.all(np.diff(sorted_vals) < 0):
            raise TieError("potential values are not strictly ordered")

    @property
    def dim(self) -> int:
        return 1 << self.n

    def vertex(self, k: int) -> int:
        """Vertex carrying the k-th largest potential (1-based rank)."""
        if not 1 <= k <= self.dim:
            raise ValueError(f"rank {k} out of range")
        return int(self.order[k - 1])

    def xi(self, k: int) -> float:
        """The k-th largest potential value (1-based rank)."""
        return float(self.values[self.vertex(k)])

    def top(self, l: int) -> np.ndarray:
        """Vertices of the l largest potentials, decreasing order."""
        return self.order[:l].copy()

    def eta_values(self, tail: TailModel | None = None) -> np.ndarray:
        """The exponential-scale field eta with psi_n(eta) = values.

        From the coupled construction eta is exact (suffix sums of sigma);
        otherwise it is recovered through phi_n of the given tail model
        (default: the REM tail for fields of kind "rem").
        """
        if self.sigma is not None:
            eta_sorted = np.cumsum(self.sigma[::-1])[::-1]
            eta = np.empty(self.dim)
            eta[self.order] = eta_sorted
            return eta
        if tail is None:
            if self.kind != "rem":
                raise ValueError("eta recovery needs a tail model for this field")
            tail = TailModel.rem()
        return np.asarray(tail.phi(self.values, self.n), dtype=np.float64)

    # -- serialization: values stored as hex floats for bit-exact round-trips

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "seed": self.seed,
            "kind": self.kind,
            "values": [v.hex() for v in self.values.tolist()],
            "order": self.order.tolist(),
        }
        if self.sigma is not None:
            doc["sigma"] = [s.hex() for s in self.sigma.tolist()]
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "PotentialField":
        doc = json.loads(text)
        sigma = doc.get("sigma")
        return cls(
            n=int(doc["n"]),
            seed=int(doc["seed"]),
            kind=str(doc["kind"]),
            values=np.array([float.fromhex(v) for v in doc["values"]]),
            order=np.array(doc["order"], dtype=np.intp),
            sigma=None if sigma is None else np.array([float.fromhex(s) for s in sigma]),
        )


def _check_n(n: int) -> None:
    if not 1 <= n <= 24:
        raise ValueError(f"dimension n must be in [1, 24], got {n}")


def sample_rem(n: int, seed: int) -> PotentialField:
    """2^n independent N(0, n) potential values with order statistics."""
    _check_n(n)
    rng = philox_stream(seed)
    values = rng.normal(0.0, np.sqrt(n), size=1 << n)
    order = np.argsort(-values, kind="stable").astype(np.intp)
    return PotentialField(n=n, seed=seed, kind="rem", values=values, order=order)


def sample_coupled(n: int, seed: int, tail: TailModel) -> PotentialField:
    """Field built from coupled exponential spacings composed with psi_n.

    sigma_i ~ Exp(rate i); eta_i = sigma_i + ... + sigma_{2^n} gives the
    ordered exponential field; the ordered potential values psi_n(eta_i) land
    on a uniformly random (Fisher-Yates) vertex permutation from the same
    stream.  values[order[k-1]] equals psi_n(eta_k) bit-exactly.
    """
    _check_n(n)
    rng = philox_stream(seed)
    dim = 1 << n
    sigma = rng.standard_exponential(dim) / np.arange(1, dim + 1)
    eta_sorted = np.cumsum(sigma[::-1])[::-1]
    ordered_values = np.asarray(tail.psi(eta_sorted, n), dtype=np.float64)
    order = rng.permutation(dim).astype(np.intp)
    values = np.empty(dim)
    values[order] = ordered_values
    return PotentialField(
        n=n, seed=seed, kind=f"coupled-{tail.name}", values=values, order=order, sigma=sigma
    )


def gap_limit(k: int, l: int, field: PotentialField, tail: TailModel) -> float:
    """n-independent limit of the gap xi_{k,2^n} - xi_{l,2^n}.

    Equals g(sigma_k + ... + sigma_{l-1}); zero when k >= l.  Requires the
    coupled construction (sigma present).
    """
    if k < 1 or l < 1:
        raise ValueError("ranks must be >= 1")
    if k >= l:
        return 0.0
    if field.sigma is None:
        raise ValueError("gap_limit requires a field from the coupled construction")
    return float(tail.g(float(np.sum(field.sigma[k - 1 : l - 1]))))


# ---------------------------------------------------------------------------
# assumption checks


@dataclass(frozen=True)
class AssumptionLReport:
    """Partial sums of n * G_n(-l_n) and a divergence-trend flag."""

    n_max: int
    terms: np.ndarray
    partial_sums: np.ndarray
    tail_ratios: np.ndarray
    divergent: bool


def check_assumption_L(tail: TailModel, n_max: int) -> AssumptionLReport:
    """Evaluate the left-tail summability condition sum_n n * G_n(-l_n).

    Reports the partial sums and flags a divergence trend when the terms stop
    decaying (median of the trailing term ratios >= 1).
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    ns = np.arange(1, n_max + 1)
    terms = np.array([n * float(tail_cdf(tail, -tail.l_n(n), n)) for n in ns])
    partial = np.cumsum(terms)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = terms[1:] / terms[:-1]
    ratios = np.where(np.isfinite(ratios), ratios, 0.0)
    window = ratios[-min(5, len(ratios)):]
    divergent = bool(np.median(window) >= 1.0)
    return AssumptionLReport(
        n_max=n_max, terms=terms, partial_sums=partial, tail_ratios=ratios, divergent=divergent
    )


@dataclass(frozen=True)
class LevelSetGeometry:
    """Geometry of the high-potential level set A = {eta >= n delta log 2}."""

    size: int
    d_min: int
    top_pair_distance_ratio: float


def level_set_geometry(
    field: PotentialField, delta: float, tail: TailModel | None = None
) -> LevelSetGeometry:
    """Minimum pairwise Hamming distance over the level set, and d(x_1,x_2)/n.

    For level sets with fewer than two vertices, d_min is the sentinel n + 1.
    """
    if not 0.5 < delta < 1.0:
        raise ValueError(f"delta must be in (1/2, 1), got {delta}")
    eta = field.eta_values(tail)
    members = np.flatnonzero(eta >= field.n * delta * LOG2)
    if members.size < 2:
        d_min = field.n + 1
    else:
        xors = members[:, None] ^ members[None, :]
        dists = np.bitwise_count(xors.astype(np.uint64))
        d_min = int(dists[np.triu_indices(members.size, k=1)].min())
    x1, x2 = field.vertex(1), field.vertex(2)
    ratio = (x1 ^ x2).bit_count() / field.n
    return LevelSetGeometry(size=int(members.size), d_min=d_min, top_pair_distance_ratio=ratio)


def cramer_rate(x) -> np.ndarray:
    """Binary Cramer rate function I(x) = x log x + (1-x) log(1-x) + log 2."""
    x = np.asarray(x, dtype=np.float64)
    return xlogy(x, x) + xlogy(1.0 - x, 1.0 - x) + LOG2


def omega_delta(delta: float) -> float:
    """Solve I(omega) = 2 (1 - delta) log 2 on (1/2, 1] by bisection.

    I is strictly increasing on [1/2, 1] from 0 to log 2, so a root exists
    and is unique for delta in (1/2, 1); resolved to 1e-10.
    """
    if not 0.5 < delta < 1.0:
        raise ValueError(f"delta must be in (1/2, 1), got {delta}")
    rhs = 2.0 * (1.0 - delta) * LOG2
    lo, hi = 0.5, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cramer_rate(mid) < rhs:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    root = 0.5 * (lo + hi)
    if abs(float(cramer_rate(root)) - rhs) > 1e-10:
        raise ArithmeticError("bisection failed to reach the 1e-10 residual target")
    return root
