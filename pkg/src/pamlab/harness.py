"""Experiment orchestration: sweeps over the time-scale parameter and
numerical checks of the spectral statements, emitting CSV/JSON.

Times are parameterized as t = alpha * c_n with c_n = (1/2) n log n, the
scale on which the growth rate and the population localization switch
branches.  The transition point alpha* = 1 / xi_{1,k} depends only on the
gap between the largest and the k-th largest potential value: it is taken
from the n-independent gap limit when the coupled sampler is used and from
the finite-n gap for directly sampled fields (both agree up to o(1)).

Every sweep cell is recomputable from (seed, n, k, alpha) alone; failures
abort single cells with error rows, never the sweep.  Cells are independent
and may be dispatched to a process pool (config.workers); rows are always
emitted in config order so identical configs give identical files.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field, asdict

import numpy as np

from . import evolution as ev
from . import fkmc
from . import potential as pot
from . import spectral as sp
from .hypercube import dense_hamiltonian

__all__ = [
    "ExperimentConfig",
    "SweepRow",
    "LocalizationRow",
    "make_field",
    "run_phase_sweep",
    "run_localization_sweep",
    "run_lemma_checks",
    "write_sweep_csv",
]

SCHEMA_VERSION = "v1"


def _default_alpha_grid() -> list[float]:
    # geometric grid straddling typical transition points
    return [round(float(a), 6) for a in np.geomspace(0.05, 20.0, 15)]


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment run."""

    n: int = 14
    kappa: float = 1.0
    potential: str = "rem"  # rem | coupled-rem | coupled-exponential | zero
    seeds: list[int] = dc_field(default_factory=lambda: list(range(20)))
    ranks: list[int] = dc_field(default_factory=lambda: [2])
    alpha_grid: list[float] = dc_field(default_factory=_default_alpha_grid)
    eig_tol: float = 1e-12
    ode_tol: float = 1e-10
    delta: float = 0.75
    lemma_ns: list[int] = dc_field(default_factory=lambda: [12, 14, 16])
    workers: int = 1
    out: str | None = None
    timestamp: bool = True

    def __post_init__(self):
        if any(a <= 0 for a in self.alpha_grid):
            raise ValueError("alpha_grid entries must be positive")
        if sorted(self.alpha_grid) != list(self.alpha_grid):
            raise ValueError("alpha_grid must be sorted increasing")
        if any(k < 1 for k in self.ranks):
            raise ValueError("ranks must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def c_n(self) -> float:
        return 0.5 * self.n * math.log(self.n)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)


def make_field(config: ExperimentConfig, seed: int, n: int | None = None):
    """Sample the configured potential; returns (field, tail or None)."""
    n = n if n is not None else config.n
    kind = config.potential
    if kind == "rem":
        return pot.sample_rem(n, seed), pot.TailModel.rem()
    if kind == "coupled-rem":
        tail = pot.TailModel.rem()
        return pot.sample_coupled(n, seed, tail), tail
    if kind == "coupled-exponential":
        tail = pot.TailModel.exponential()
        return pot.sample_coupled(n, seed, tail), tail
    raise ValueError(f"unknown potential kind {kind!r}")


def _alpha_star(field: pot.PotentialField, tail, k: int) -> float:
    """1 / xi_{1,k}: gap-limit based for coupled fields, finite-n otherwise."""
    if k == 1:
        return math.inf
    if field.sigma is not None:
        gap = pot.gap_limit(1, k, field, tail)
    else:
        gap = field.xi(1) - field.xi(k)
    return 1.0 / gap if gap > 0 else math.inf


# ---------------------------------------------------------------------------
# growth sweep


@dataclass
class SweepRow:
    """One cell of the growth-rate sweep."""

    seed: int
    n: int
    k: int
    alpha: float
    t: float
    log_v_flat_at_xk: float
    growth_exponent: float
    predicted_short: float
    predicted_long: float
    alpha_star: float
    u_at_x1: float
    u_at_xk: float
    mean_fitness: float
    error: str = ""


def _phase_cells_for_seed(config: ExperimentConfig, seed: int) -> list[SweepRow]:
    nan = float("nan")
    try:
        field, tail = make_field(config, seed)
        lam1 = sp.principal_eig(config.kappa, field, 1, 1, tol=config.eig_tol).lam
        tracked = tuple({field.vertex(k): None for k in [1] + list(config.ranks)})
        times = [a * config.c_n for a in config.alpha_grid]
        records = ev.solve_flat(
            config.kappa, field, times, tol=config.ode_tol, tracked=tracked
        )
    except Exception as exc:  # noqa: BLE001 - error rows must carry any cause
        msg = f"{type(exc).__name__}: {exc}"
        return [
            SweepRow(seed, config.n, k, a, a * config.c_n, nan, nan, nan, nan, nan,
                     nan, nan, nan, error=msg)
            for k in config.ranks
            for a in config.alpha_grid
        ]
    rows = []
    x1 = field.vertex(1)
    for k in config.ranks:
        xk = field.vertex(k)
        astar = _alpha_star(field, tail, k)
        for alpha, rec in zip(config.alpha_grid, records):
            log_v = rec.log_v_at[xk]
            rows.append(
                SweepRow(
                    seed=seed,
                    n=config.n,
                    k=k,
                    alpha=alpha,
                    t=rec.t,
                    log_v_flat_at_xk=log_v,
                    growth_exponent=log_v / rec.t,
                    predicted_short=field.xi(k) - config.kappa,
                    predicted_long=lam1 - config.c_n / rec.t,
                    alpha_star=astar,
                    u_at_x1=rec.u_at[x1],
                    u_at_xk=rec.u_at[xk],
                    mean_fitness=rec.mean_fitness,
                )
            )
    return rows


def run_phase_sweep(config: ExperimentConfig) -> list[SweepRow]:
    """Growth-rate sweep: flat initial data observed at the rank-k vertices.

    Each row carries the measured exponent log v(t, x_k) / t next to the two
    theorem branches: xi_k - kappa (short times) and lam_1 - c_n / t (long
    times).  Writes CSV when config.out is set.
    """
    rows = _run_per_seed(config, _phase_cells_for_seed)
    if config.out:
        write_sweep_csv(config.out, rows, "growth-sweep", config.timestamp)
    return rows


# ---------------------------------------------------------------------------
# localization sweep


@dataclass
class LocalizationRow:
    """One cell of the localization sweep (delta start at x_k)."""

    seed: int
    n: int
    k: int
    alpha: float
    t: float
    u_at_x1: float
    u_at_xk: float
    alpha_star: float
    alpha_hat: float
    mean_fitness: float
    error: str = ""


def _localization_cells_for_seed(config: ExperimentConfig, seed: int) -> list[LocalizationRow]:
    nan = float("nan")
    rows: list[LocalizationRow] = []
    try:
        field, tail = make_field(config, seed)
    except Exception as exc:  # noqa: BLE001
        msg = f"{type(exc).__name__}: {exc}"
        return [
            LocalizationRow(seed, config.n, k, a, a * config.c_n, nan, nan, nan, nan,
                            nan, error=msg)
            for k in config.ranks
            for a in config.alpha_grid
        ]
    x1 = field.vertex(1)
    times = [a * config.c_n for a in config.alpha_grid]
    for k in config.ranks:
        xk = field.vertex(k)
        astar = _alpha_star(field, tail, k)
        try:
            records = ev.solve_from_delta(
                xk, config.kappa, field, times, tol=config.ode_tol, tracked=(x1, xk)
            )
        except Exception as exc:  # noqa: BLE001
            msg = f"{type(exc).__name__}: {exc}"
            rows.extend(
                LocalizationRow(seed, config.n, k, a, a * config.c_n, nan, nan, astar,
                                nan, nan, error=msg)
                for a in config.alpha_grid
            )
            continue
        alpha_hat = next(
            (a for a, r in zip(config.alpha_grid, records) if r.u_at[x1] > r.u_at[xk]),
            math.inf,
        )
        rows.extend(
            LocalizationRow(
                seed=seed,
                n=config.n,
                k=k,
                alpha=alpha,
                t=rec.t,
                u_at_x1=rec.u_at[x1],
                u_at_xk=rec.u_at[xk],
                alpha_star=astar,
                alpha_hat=alpha_hat,
                mean_fitness=rec.mean_fitness,
            )
            for alpha, rec in zip(config.alpha_grid, records)
        )
    return rows


def run_localization_sweep(config: ExperimentConfig) -> list[LocalizationRow]:
    """Localization sweep: point mass started at x_k, frequencies tracked at
    x_1 and x_k, with the empirical crossover alpha (first grid point where
    the x_1 frequency overtakes) next to the predicted alpha*."""
    rows = _run_per_seed(config, _localization_cells_for_seed)
    if config.out:
        write_sweep_csv(config.out, rows, "localization-sweep", config.timestamp)
    return rows


def _run_per_seed(config: ExperimentConfig, cell_fn) -> list:
    if config.workers == 1 or len(config.seeds) <= 1:
        results = [cell_fn(config, seed) for seed in config.seeds]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(cell_fn, config, seed) for seed in config.seeds]
            results = [f.result() for f in futures]  # config order, not completion
    return [row for chunk in results for row in chunk]


# ---------------------------------------------------------------------------
# CSV output


def write_sweep_csv(path: str, rows: list, name: str, timestamp: bool = True) -> None:
    """Write sweep rows with a schema header comment; field order is fixed."""
    if not rows:
        raise ValueError("no rows to write")
    fields = list(rows[0].__dataclass_fields__)
    header = f"# pamlab {name} schema {SCHEMA_VERSION}"
    if timestamp:
        import datetime

        header += f" generated={datetime.datetime.now().isoformat(timespec='seconds')}"
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in (getattr(row, f) for f in fields)])


# ---------------------------------------------------------------------------
# lemma checks


def _check(name: str, n: int, passed: bool | None, hypotheses_met: bool, **details) -> dict:
    return {
        "name": name,
        "n": n,
        "passed": passed,
        "hypotheses_met": hypotheses_met,
        "details": details,
    }


def _not_met_report(config: ExperimentConfig) -> dict:
    names = [
        "eigenvalue_asymptotics",
        "spectral_gap_bound",
        "eigenfunction_decay",
        "extremal_geometry",
        "resolvent_bound",
        "spectral_bound_inequality",
    ]
    checks = [
        _check(name, config.n, None, False, reason="degenerate potential: no extremal structure")
        for name in names
    ]
    return {"config": config.to_dict(), "checks": checks, "n_failed": 0}


def check_eigenvalue_asymptotics(config: ExperimentConfig, tail: pot.TailModel) -> list[dict]:
    """Median of n^2 (lam_1 - xi_1 + kappa) against the [k^2/5theta, 5k^2/theta] band."""
    kappa, theta = config.kappa, tail.theta
    lo, hi = kappa**2 / (5.0 * theta), 5.0 * kappa**2 / theta
    checks = []
    for n in config.lemma_ns:
        stats = []
        for seed in config.seeds:
            field, _ = make_field(config, seed, n=n)
            res = sp.principal_eig(kappa, field, 1, 1, tol=config.eig_tol)
            stats.append(n * n * (res.lam - field.xi(1) + kappa))
        med = float(np.median(stats))
        checks.append(
            _check("eigenvalue_asymptotics", n, lo <= med <= hi, True,
                   median=med, band=[lo, hi], values=stats)
        )
    return checks


def check_gap_bound(config: ExperimentConfig) -> dict:
    """Fraction of (seed, i <= l <= 3) cells where the spectral gap dominates
    the potential gap xi_i - xi_{l+1} up to kappa/n + 10 tol slack."""
    kappa = config.kappa
    ok, total = 0, 0
    failures = []
    for seed in config.seeds:
        field, _ = make_field(config, seed)
        slack = kappa / config.n + 10.0 * config.eig_tol * (
            float(np.max(np.abs(field.values))) + 2.0 * kappa
        )
        for l in range(1, 4):
            for i in range(1, l + 1):
                gap = sp.spectral_gap(kappa, field, i, l, tol=config.eig_tol)
                bound = field.xi(i) - field.xi(l + 1)
                total += 1
                if gap >= bound - slack:
                    ok += 1
                else:
                    failures.append({"seed": seed, "i": i, "l": l, "gap": gap, "bound": bound})
    frac = ok / total if total else 0.0
    return _check("spectral_gap_bound", config.n, frac >= 0.95, True,
                  fraction=frac, cells=total, failures=failures)


def check_decay(config: ExperimentConfig) -> list[dict]:
    """Median of log nu_1(x_2) / (-c_n) over seeds with resolvable values."""
    checks = []
    for n in config.lemma_ns:
        ratios = []
        skipped = 0
        for seed in config.seeds:
            field, _ = make_field(config, seed, n=n)
            res = sp.principal_eig(config.kappa, field, 1, 1, tol=config.eig_tol)
            prof = sp.eigenfunction_profile(res, field, k=2)
            if prof.below_resolution:
                skipped += 1
                continue
            c_n = 0.5 * n * math.log(n)
            ratios.append(prof.log_nu_at_xk / (-c_n))
        if ratios:
            med = float(np.median(ratios))
            passed = 0.5 <= med <= 1.6
        else:
            med, passed = float("nan"), None
        checks.append(
            _check("eigenfunction_decay", n, passed, bool(ratios),
                   median=med, band=[0.5, 1.6], retained=len(ratios), skipped=skipped)
        )
    return checks


def check_geometry(config: ExperimentConfig, tail: pot.TailModel) -> dict:
    """Distance between the two top vertices (expect ~n/2) and the level-set
    minimum distance for the configured delta."""
    ratios, d_mins = [], []
    for seed in config.seeds:
        field, _ = make_field(config, seed)
        geo = pot.level_set_geometry(field, config.delta, tail)
        ratios.append(geo.top_pair_distance_ratio)
        d_mins.append(geo.d_min)
    med = float(np.median(ratios))
    return _check("extremal_geometry", config.n, 0.3 <= med <= 0.7, True,
                  median_top_pair_ratio=med, median_level_set_dmin=float(np.median(d_mins)))


def check_resolvent_bound(config: ExperimentConfig, tail: pot.TailModel) -> dict:
    """Two-sided eigenvalue bound with A the high-potential level set."""
    kappa = config.kappa
    results, n_viol, n_met = [], 0, 0
    for seed in config.seeds:
        field, _ = make_field(config, seed)
        eta = field.eta_values(tail)
        members = np.flatnonzero(eta >= config.n * config.delta * pot.LOG2)
        if members.size == 0:
            results.append({"seed": seed, "hypotheses_met": False})
            continue
        mask = np.zeros(field.dim, dtype=bool)
        mask[members] = True
        big_n = float(field.values[mask].max())
        off = field.values[~mask]
        big_m = float(off.max()) if off.size else -math.inf
        denom = big_n - kappa - big_m
        if denom <= 0:
            results.append({"seed": seed, "hypotheses_met": False})
            continue
        gamma = big_n - kappa + 2.0 * kappa**2 / (config.n * denom)
        rep = sp.eigen_bound_check(kappa, field, members, gamma, tol=config.eig_tol)
        if rep.hypotheses_met and rep.admissible:
            n_met += 1
            if rep.violation:
                n_viol += 1
        results.append(
            {"seed": seed, "hypotheses_met": rep.hypotheses_met,
             "admissible": rep.admissible, "bound_holds": rep.bound_holds,
             "lambda1": rep.lambda1, "gamma": rep.gamma, "d_min": rep.d_min}
        )
    passed = (n_viol == 0) if n_met > 0 else None
    return _check("resolvent_bound", config.n, passed, n_met > 0,
                  evaluated=n_met, violations=n_viol, per_seed=results)


def spectral_bound_gap_matrix(kappa: float, field: pot.PotentialField, t: float):
    """Pointwise slack of the path-splitting inequality at n <= 8, dense.

    With the peak-hitting decomposition omega(t, x, y) = v - v_restricted
    (restriction kills paths through x_1), the inequality

        omega(t, x, y) <= omega(t, x_1, y) * nu(x) * ||nu||^2

    must hold for every x; returns (lhs, rhs) arrays for y = x_2.
    """
    n = field.n
    if n > 8:
        raise ValueError("dense spectral-bound check limited to n <= 8")
    x1, y = field.vertex(1), field.vertex(2)
    h_full = dense_hamiltonian(kappa, field.values, n)
    h_rest = dense_hamiltonian(kappa, field.values, n, boundary=[x1])
    lam_f, q_f = np.linalg.eigh(h_full)
    lam_r, q_r = np.linalg.eigh(h_rest)
    v_full = q_f @ (np.exp(t * lam_f) * q_f[y, :])
    v_rest = q_r @ (np.exp(t * lam_r) * q_r[y, :])
    omega = v_full - v_rest
    nu = q_f[:, -1] / q_f[x1, -1]
    rhs = omega[x1] * nu * float(np.dot(nu, nu))
    return omega, rhs


def check_spectral_bound(config: ExperimentConfig) -> dict:
    """Pointwise verification of the path-splitting spectral bound at n = 8."""
    worst = -math.inf
    kappa = config.kappa
    for seed in config.seeds[: min(len(config.seeds), 10)]:
        field, _ = make_field(config, seed, n=8)
        for t in (1.0, 5.0):
            lhs, rhs = spectral_bound_gap_matrix(kappa, field, t)
            rel = (lhs - rhs) / np.maximum(1.0, np.abs(rhs))
            worst = max(worst, float(rel.max()))
    return _check("spectral_bound_inequality", 8, worst <= 1e-9, True,
                  worst_relative_excess=worst)


def run_lemma_checks(config: ExperimentConfig) -> dict:
    """Run all spectral/geometric checks and aggregate pass/fail counts.

    A degenerate potential (kind "zero") has no extremal structure: every
    check reports hypotheses-not-met and nothing is counted as failed.
    """
    if config.potential == "zero":
        report = _not_met_report(config)
    else:
        _, tail = make_field(config, config.seeds[0] if config.seeds else 0)
        checks = []
        checks += check_eigenvalue_asymptotics(config, tail)
        checks.append(check_gap_bound(config))
        checks += check_decay(config)
        checks.append(check_geometry(config, tail))
        checks.append(check_resolvent_bound(config, tail))
        checks.append(check_spectral_bound(config))
        n_failed = sum(1 for c in checks if c["passed"] is False)
        report = {"config": config.to_dict(), "checks": checks, "n_failed": n_failed}
    if config.out:
        os.makedirs(os.path.dirname(os.path.abspath(config.out)), exist_ok=True)
        with open(config.out, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return report
