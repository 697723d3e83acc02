"""Command-line interface.

Subcommands map onto the library operations:

    sample              draw a potential field, write it as JSON
    eig                 principal eigenpair of the restricted operator
    evolve              propagate flat/delta initial data, write records CSV
    fk                  Feynman-Kac Monte Carlo estimate, write JSON
    sweep-growth        growth-rate sweep over the alpha grid, write CSV
    sweep-localization  localization sweep, write CSV
    check-lemmas        spectral/geometric checks, write JSON report

Configuration comes from an optional JSON file (--config) with every field
overridable by flags; the PAM_SEED environment variable overrides the seed
list with a single seed.  Exit codes: 0 success, 1 check failure, 2 usage.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import evolution as ev
from . import fkmc
from . import harness
from . import potential as pot
from . import spectral as sp


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--n", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--potential", choices=["rem", "coupled-rem", "coupled-exponential", "zero"])
    p.add_argument("--seed", type=int, help="replace the seed list with one seed")
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--ranks", help="comma-separated rank list")
    p.add_argument("--alpha-grid", help="comma-separated alpha grid")
    p.add_argument("--eig-tol", type=float)
    p.add_argument("--ode-tol", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--lemma-ns", help="comma-separated dimension list for lemma checks")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output path")
    p.add_argument("--no-timestamp", action="store_true",
                   help="suppress the timestamp in CSV headers")


def _build_config(args: argparse.Namespace) -> harness.ExperimentConfig:
    doc: dict = {}
    if args.config:
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            doc = json.load(fh)
    def _intlist(text):
        return [int(v) for v in text.split(",") if v]
    def _floatlist(text):
        return [float(v) for v in text.split(",") if v]
    overrides = {
        "n": args.n,
        "kappa": args.kappa,
        "potential": args.potential,
        "seeds": _intlist(args.seeds) if args.seeds else None,
        "ranks": _intlist(args.ranks) if args.ranks else None,
        "alpha_grid": _floatlist(args.alpha_grid) if args.alpha_grid else None,
        "eig_tol": args.eig_tol,
        "ode_tol": args.ode_tol,
        "delta": args.delta,
        "lemma_ns": _intlist(args.lemma_ns) if args.lemma_ns else None,
        "workers": args.workers,
        "out": args.out,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.seed is not None:
        doc["seeds"] = [args.seed]
    env_seed = os.environ.get("PAM_SEED")
    if env_seed is not None:
        doc["seeds"] = [int(env_seed)]
    if args.no_timestamp:
        doc["timestamp"] = False
    return harness.ExperimentConfig.from_dict(doc)


def _cmd_sample(args) -> int:
    config = _build_config(args)
    field, _ = harness.make_field(config, config.seeds[0])
    text = field.to_json()
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    print(f"sampled {config.potential} field: n={config.n} seed={config.seeds[0]} "
          f"xi_1={field.xi(1):.4f}", file=sys.stderr)
    return 0


def _cmd_eig(args) -> int:
    config = _build_config(args)
    field, _ = harness.make_field(config, config.seeds[0])
    res = sp.principal_eig(config.kappa, field, args.i, args.l, tol=config.eig_tol)
    if args.with_gap:
        res.gap = sp.spectral_gap(config.kappa, field, args.i, args.l, tol=config.eig_tol)
    doc = res.to_json_dict(with_vector=args.with_vector)
    text = json.dumps(doc, indent=2)
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    print(f"lambda_{args.i},{args.l} = {res.lam:.12g} (residual {res.residual:.2e})",
          file=sys.stderr)
    return 0


def _cmd_evolve(args) -> int:
    config = _build_config(args)
    field, _ = harness.make_field(config, config.seeds[0])
    times = sorted(float(v) for v in args.times.split(",") if v)
    if args.init == "flat":
        records = ev.solve_flat(config.kappa, field, times, tol=config.ode_tol)
    else:
        y = args.y if args.y is not None else field.vertex(args.k)
        records = ev.solve_from_delta(y, config.kappa, field, times, tol=config.ode_tol)
    out = config.out or "evolve.csv"
    _write_records_csv(out, records, field, timestamp=config.timestamp)
    print(f"wrote {len(records)} records to {out}", file=sys.stderr)
    return 0


def _write_records_csv(path, records, field, timestamp=True) -> None:
    import csv

    header = f"# pamlab evolve schema {harness.SCHEMA_VERSION}"
    if timestamp:
        import datetime

        header += f" generated={datetime.datetime.now().isoformat(timespec='seconds')}"
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "vertex", "rank", "log_v", "log_total_mass", "u", "mean_fitness"])
        rank_of = {field.vertex(k): k for k in range(1, min(field.dim, 64) + 1)}
        for rec in records:
            for x in rec.tracked:
                writer.writerow([
                    repr(rec.t), x, rank_of.get(x, ""), repr(rec.log_v_at[x]),
                    repr(rec.log_total_mass), repr(rec.u_at[x]), repr(rec.mean_fitness),
                ])


def _cmd_fk(args) -> int:
    config = _build_config(args)
    field, _ = harness.make_field(config, config.seeds[0])
    mc_seed = config.seeds[0] + 1_000_003  # decouple walk stream from the field stream
    if args.target == "mass":
        y = args.y if args.y is not None else field.vertex(args.k)
        est = fkmc.estimate_total_mass(y, args.t, config.kappa, field, args.samples, mc_seed)
    elif args.target == "endpoint":
        y = args.y if args.y is not None else field.vertex(args.k)
        x = args.x if args.x is not None else field.vertex(1)
        est = fkmc.estimate_endpoint(x, y, args.t, config.kappa, field, args.samples, mc_seed)
    else:
        res = sp.principal_eig(config.kappa, field, args.i, args.l, tol=config.eig_tol)
        x = args.x if args.x is not None else res.peak ^ 1
        est = fkmc.estimate_eigenfunction(
            x, res.peak, res.lam, res.boundary, config.kappa, field, args.samples, mc_seed
        )
    text = json.dumps(est.to_json_dict(), indent=2)
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    print(f"{est.target}: {est.mean:.6g} +- {est.std_error:.2g}", file=sys.stderr)
    return 0


def _cmd_sweep_growth(args) -> int:
    config = _build_config(args)
    rows = harness.run_phase_sweep(config)
    n_err = sum(1 for r in rows if r.error)
    print(f"growth sweep: {len(rows)} rows ({n_err} errors)"
          + (f" -> {config.out}" if config.out else ""), file=sys.stderr)
    return 0


def _cmd_sweep_localization(args) -> int:
    config = _build_config(args)
    rows = harness.run_localization_sweep(config)
    n_err = sum(1 for r in rows if r.error)
    print(f"localization sweep: {len(rows)} rows ({n_err} errors)"
          + (f" -> {config.out}" if config.out else ""), file=sys.stderr)
    return 0


def _cmd_check_lemmas(args) -> int:
    config = _build_config(args)
    report = harness.run_lemma_checks(config)
    failed = [c["name"] for c in report["checks"] if c["passed"] is False]
    status = "FAIL: " + ",".join(failed) if failed else "ok"
    print(f"lemma checks: {len(report['checks'])} checks, {status}"
          + (f" -> {config.out}" if config.out else ""), file=sys.stderr)
    if not config.out:
        print(json.dumps(report, indent=2))
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pamlab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a potential field to JSON")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("eig", help="principal eigenpair of the restricted operator")
    _add_config_flags(p)
    p.add_argument("--i", type=int, default=1, help="peak rank")
    p.add_argument("--l", type=int, default=1, help="boundary set size")
    p.add_argument("--with-gap", action="store_true")
    p.add_argument("--with-vector", action="store_true")
    p.set_defaults(fn=_cmd_eig)

    p = sub.add_parser("evolve", help="propagate an initial condition")
    _add_config_flags(p)
    p.add_argument("--init", choices=["flat", "delta"], default="flat")
    p.add_argument("--y", type=int, help="start vertex for delta initial data")
    p.add_argument("--k", type=int, default=2, help="start rank when --y is absent")
    p.add_argument("--times", required=True, help="comma-separated output times")
    p.set_defaults(fn=_cmd_evolve)

    p = sub.add_parser("fk", help="Feynman-Kac Monte Carlo estimate")
    _add_config_flags(p)
    p.add_argument("--target", choices=["mass", "endpoint", "eigenfunction"], default="mass")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--x", type=int)
    p.add_argument("--y", type=int)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--i", type=int, default=1)
    p.add_argument("--l", type=int, default=1)
    p.set_defaults(fn=_cmd_fk)

    p = sub.add_parser("sweep-growth", help="growth-rate sweep to CSV")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_sweep_growth)

    p = sub.add_parser("sweep-localization", help="localization sweep to CSV")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_sweep_localization)

    p = sub.add_parser("check-lemmas", help="numeric checks of the spectral statements")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_check_lemmas)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (sp.NonConvergenceError, ev.StiffnessError, ev.NegativityError,
            pot.TieError, ArithmeticError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
