"""Command-line front end.

Three subcommands: ``synthetic`` runs one event-stream experiment,
``finance`` runs the returns-panel pipeline (single cell or a rank x refresh
grid), ``verify`` executes the acceptance suite. Every data-producing run
writes a comma-separated metrics/snapshot file plus a JSON manifest holding
the exact argv, the resolved configuration, seeds, and library versions —
re-running the manifest's argv reproduces every non-timing column
bit-exactly. Timing columns are flagged in the file header as
nondeterministic.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .backend import active_backend
from .finance import (
    PortfolioSpec,
    build_panel,
    dirichlet_portfolios,
    equal_weights,
    gen_synthetic_panel,
    load_prices,
    run_finance_stream,
)
from .policies import AdaptiveRankConfig, PolicyConfig
from .stream import StreamSpec, run_simulation

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

TIMING_COLUMNS = ("update_time", "opt_time")

SYNTHETIC_COLUMNS = (
    "step", "frob_error", "frob_opt", "frob_gap", "frob_ratio", "evr",
    "angle_ref", "angle_opt", "rank", "refreshed", "update_time", "opt_time",
)


# ------------------------------------------------------------- serialization


def _fmt(value) -> str:
    if value is None:
        return "NaN"
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, float):
        return "NaN" if math.isnan(value) else repr(value)
    return str(value)


def _atomic_write_text(path: Path, text: str) -> None:
    """Write-then-rename so a crashed run never leaves a partial file."""
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_table(path: Path, manifest_name: str, header: list[str], rows) -> None:
    lines = [
        f"# manifest: {manifest_name}",
        f"# nondeterministic columns: {','.join(TIMING_COLUMNS)}",
        ",".join(header),
    ]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def write_records_csv(path: Path, records, manifest_name: str) -> None:
    """Serialize synthetic-stream metrics records."""
    header = list(SYNTHETIC_COLUMNS)
    rows = ([getattr(r, col) for col in header] for r in records)
    _write_table(path, manifest_name, header, rows)


def write_snapshots_csv(path: Path, snapshots, labels: list[str], manifest_name: str) -> None:
    """Serialize finance risk snapshots, one risk column per portfolio."""
    header = (
        ["step", "date", "cov_rel_error"]
        + [f"risk_rel_error_{label}" for label in labels]
        + ["angle_factor", "refreshed", "rank", "update_time", "opt_time"]
    )
    rows = (
        [s.step, s.date, s.cov_rel_error]
        + [s.risk_rel_error[label] for label in labels]
        + [s.angle_factor, s.refreshed, s.rank, s.update_time, s.opt_time]
        for s in snapshots
    )
    _write_table(path, manifest_name, header, rows)


def _write_manifest(path: Path, subcommand: str, argv: list[str], config: dict,
                    seed: int, outputs: list[str], started: str) -> None:
    manifest = {
        "tool": "svdstream",
        "version": __version__,
        "subcommand": subcommand,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "backend": active_backend(),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
        "started": started,
        "finished": _now(),
        "outputs": outputs,
    }
    _atomic_write_text(path, json.dumps(manifest, indent=2) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ------------------------------------------------------------------- parsing


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _policy_from_args(args) -> PolicyConfig:
    """Resolve the policy flags; --refresh-every alone implies periodic."""
    kind = args.policy
    if kind is None:
        kind = "periodic" if args.refresh_every is not None else "none"
    if kind == "periodic" and args.refresh_every is None:
        raise ValueError("--policy periodic needs --refresh-every")
    adaptive = None
    if getattr(args, "adapt_rank", False):
        adaptive = AdaptiveRankConfig(
            tau=args.tau, k_min=args.k_min, k_max=args.k_max, eta=args.eta
        )
    return PolicyConfig(
        kind=kind,
        period=args.refresh_every if args.refresh_every is not None else 1000,
        gamma=args.gamma,
        min_spacing=args.min_spacing,
        theta_max=args.theta_max,
        adaptive=adaptive,
    )


def _parse_portfolios(text: str, n: int, concentration: float, seed: int) -> list[PortfolioSpec]:
    """Tokens: ``equal``, ``dirichlet`` or ``dirichlet:<count>``, comma-separated."""
    portfolios: list[PortfolioSpec] = []
    want_dirichlet = 0
    for token in text.split(","):
        token = token.strip()
        if token == "equal":
            portfolios.append(equal_weights(n))
        elif token == "dirichlet":
            want_dirichlet += 1
        elif token.startswith("dirichlet:"):
            want_dirichlet += int(token.split(":", 1)[1])
        elif token:
            raise ValueError(f"unknown portfolio token {token!r}")
    if want_dirichlet:
        portfolios.extend(dirichlet_portfolios(n, want_dirichlet, concentration, seed))
    if not portfolios:
        raise ValueError(f"no portfolios parsed from {text!r}")
    return portfolios


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ValueError(f"{flag}: {exc}") from exc


def _add_policy_flags(sub) -> None:
    sub.add_argument("--policy", choices=["none", "periodic", "error", "angle"],
                     default=None, help="refresh policy (default: none, or "
                     "periodic when --refresh-every is given)")
    sub.add_argument("--refresh-every", type=int, default=None, metavar="N",
                     help="periodic refresh interval in events")
    sub.add_argument("--gamma", type=float, default=1.1,
                     help="error-policy ratio threshold (default 1.1)")
    sub.add_argument("--min-spacing", type=int, default=0,
                     help="error-policy minimum events between refreshes")
    sub.add_argument("--theta-max", type=float, default=0.5,
                     help="angle-policy drift threshold in radians (default 0.5)")


def _add_common_flags(sub, seed_required: bool) -> None:
    sub.add_argument("--seed", type=_nonneg_int, required=seed_required,
                     help="master seed; all randomness derives from it")
    sub.add_argument("--out", default="runs", metavar="DIR",
                     help="output directory (default: runs)")
    sub.add_argument("--log-every", type=int, default=None, metavar="N",
                     help="oracle/logging cadence (default: 50 synthetic, 5 finance)")
    sub.add_argument("--tol", type=float, default=1e-10,
                     help="residual tolerance for appends (default 1e-10)")
    sub.add_argument("--reortho-guard", action="store_true",
                     help="re-orthonormalize factors when drift exceeds the guard")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svdstream",
        description="Incremental truncated SVD: stream experiments, "
                    "finance pipeline, acceptance checks.",
    )
    parser.add_argument("--version", action="version", version=f"svdstream {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    syn = subs.add_parser("synthetic", help="run one synthetic event stream")
    _add_common_flags(syn, seed_required=True)
    syn.add_argument("--scenario", choices=["rank1", "rows", "cols", "mixed"],
                     default="rank1")
    syn.add_argument("--m", type=int, default=50)
    syn.add_argument("--n", type=int, default=40)
    syn.add_argument("--true-rank", type=int, default=5)
    syn.add_argument("--k", type=int, default=5, help="maintained rank")
    syn.add_argument("--events", type=int, default=10_000)
    syn.add_argument("--delta-sd", type=float, default=0.05,
                     help="rank-1 perturbation scale")
    syn.add_argument("--noise-scale", type=float, default=0.05,
                     help="off-subspace noise in generated data")
    syn.add_argument("--mix-weights", default="0.05,0.05,0.90", metavar="R,C,U",
                     help="row/col/rank-1 proportions for the mixed scenario")
    _add_policy_flags(syn)
    syn.add_argument("--adapt-rank", action="store_true",
                     help="enable energy-target rank adaptation")
    syn.add_argument("--tau", type=float, default=0.95)
    syn.add_argument("--k-min", type=int, default=1)
    syn.add_argument("--k-max", type=int, default=64)
    syn.add_argument("--eta", type=float, default=0.5)
    syn.set_defaults(func=cmd_synthetic)

    fin = subs.add_parser("finance", help="run the returns-panel pipeline")
    _add_common_flags(fin, seed_required=True)
    src = fin.add_mutually_exclusive_group(required=True)
    src.add_argument("--prices", metavar="CSV", help="wide price file "
                     "(header: date,<ticker>,...)")
    src.add_argument("--synthetic-panel", action="store_true",
                     help="generate a factor-model panel instead of reading prices")
    fin.add_argument("--assets", type=int, default=60)
    fin.add_argument("--days", type=int, default=1640)
    fin.add_argument("--factors", type=int, default=3)
    fin.add_argument("--regime-shift", type=int, default=None, metavar="DAY",
                     help="triple volatility from this return row on")
    fin.add_argument("--centering", choices=["expanding", "ew"], default="expanding")
    fin.add_argument("--alpha", type=float, default=0.06,
                     help="EW centering weight (default 0.06)")
    fin.add_argument("--t0", type=int, default=250, help="initial window length")
    fin.add_argument("--k", type=int, default=None, help="maintained rank (default 5)")
    _add_policy_flags(fin)
    fin.add_argument("--portfolios", default="equal",
                     help="comma list of equal / dirichlet / dirichlet:<count>")
    fin.add_argument("--concentration", type=float, default=1.0,
                     help="Dirichlet concentration (default 1.0)")
    fin.add_argument("--grid-k", default=None, metavar="K1,K2,...",
                     help="grid mode: ranks to sweep")
    fin.add_argument("--grid-refresh", default=None, metavar="R1,R2,...",
                     help="grid mode: refresh periods (or 'none') to sweep")
    fin.set_defaults(func=cmd_finance)

    ver = subs.add_parser("verify", help="run the acceptance suite")
    ver.add_argument("--fast", action="store_true",
                     help="skip the long-running checks (subset finishes well "
                          "under 30 s)")
    ver.set_defaults(func=cmd_verify)
    return parser


# ---------------------------------------------------------------- synthetic


def cmd_synthetic(args, argv: list[str]) -> int:
    started = _now()
    try:
        weights = tuple(float(w) for w in args.mix_weights.split(","))
        spec = StreamSpec(
            m=args.m,
            n=args.n,
            true_rank=args.true_rank,
            noise_scale=args.noise_scale,
            k=args.k,
            seed=args.seed,
            scenario=args.scenario,
            events=args.events,
            delta_sd=args.delta_sd,
            mix_weights=weights,
            policy=_policy_from_args(args),
            log_every=args.log_every if args.log_every is not None else 50,
            tol=args.tol,
            reortho_guard=args.reortho_guard,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    records = run_simulation(spec)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"synthetic_{args.scenario}.csv"
    man_path = out / f"synthetic_{args.scenario}_manifest.json"
    write_records_csv(csv_path, records, man_path.name)
    _write_manifest(man_path, "synthetic", argv, asdict(spec), args.seed,
                    [csv_path.name, man_path.name], started)
    print(f"wrote {csv_path} ({len(records)} steps)")
    return EXIT_OK


# ------------------------------------------------------------------ finance


def _finance_cell(panel, t0, k, policy, portfolios, log_every, tol, guard,
                  out: Path, stem: str, argv, config, seed, started) -> None:
    snapshots = run_finance_stream(
        panel, t0=t0, k=k, policy=policy, portfolios=portfolios,
        log_every=log_every, tol=tol, reortho_guard=guard,
    )
    labels = [p.label for p in portfolios]
    csv_path = out / f"{stem}.csv"
    man_path = out / f"{stem}_manifest.json"
    write_snapshots_csv(csv_path, snapshots, labels, man_path.name)
    _write_manifest(man_path, "finance", argv, config, seed,
                    [csv_path.name, man_path.name], started)
    print(f"wrote {csv_path} ({len(snapshots)} snapshots)")


def cmd_finance(args, argv: list[str]) -> int:
    started = _now()
    grid_mode = args.grid_k is not None or args.grid_refresh is not None
    try:
        if grid_mode:
            if args.grid_k is None or args.grid_refresh is None:
                raise ValueError("grid mode needs both --grid-k and --grid-refresh")
            if args.k is not None or args.refresh_every is not None or args.policy:
                raise ValueError("grid mode replaces --k/--refresh-every/--policy")

        if args.prices is not None:
            table = load_prices(args.prices)
        else:
            table = gen_synthetic_panel(
                assets=args.assets, days=args.days, factors=args.factors,
                seed=args.seed, regime_shift=args.regime_shift,
            )
        panel = build_panel(table, centering=args.centering, alpha=args.alpha)
        n = panel.shape[1]
        portfolios = _parse_portfolios(args.portfolios, n, args.concentration,
                                       args.seed)
        log_every = args.log_every if args.log_every is not None else 5

        base_config = {
            "prices": args.prices,
            "synthetic_panel": args.synthetic_panel,
            "assets": args.assets, "days": args.days, "factors": args.factors,
            "regime_shift": args.regime_shift,
            "centering": args.centering, "alpha": args.alpha,
            "t0": args.t0, "log_every": log_every, "tol": args.tol,
            "reortho_guard": args.reortho_guard,
            "portfolios": [p.label for p in portfolios],
            "concentration": args.concentration,
            "n_assets": n, "n_days": panel.shape[0],
        }
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)

        if grid_mode:
            ks = _parse_int_list(args.grid_k, "--grid-k")
            cells = 0
            for token in (t.strip() for t in args.grid_refresh.split(",")):
                if not token:
                    continue
                if token == "none":
                    policy, tag = PolicyConfig(kind="none"), "none"
                else:
                    period = int(token)
                    policy, tag = PolicyConfig(kind="periodic", period=period), str(period)
                for k in ks:
                    config = dict(base_config, k=k, refresh=tag,
                                  policy=asdict(policy))
                    _finance_cell(panel, args.t0, k, policy, portfolios,
                                  log_every, args.tol, args.reortho_guard,
                                  out, f"finance_k{k}_refresh{tag}", argv,
                                  config, args.seed, started)
                    cells += 1
            print(f"grid complete: {cells} cells")
        else:
            k = args.k if args.k is not None else 5
            policy = _policy_from_args(args)
            config = dict(base_config, k=k, policy=asdict(policy))
            _finance_cell(panel, args.t0, k, policy, portfolios, log_every,
                          args.tol, args.reortho_guard, out, "finance", argv,
                          config, args.seed, started)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


# ------------------------------------------------------------------- verify


def cmd_verify(args, argv: list[str]) -> int:
    from .acceptance import run_acceptance

    results = run_acceptance(fast=args.fast)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.number:2d} {r.name:<{width}}  {r.detail} [{r.elapsed:.1f}s]")
    failed = [r for r in results if not r.passed]
    print(f"acceptance: {len(results) - len(failed)}/{len(results)} passed"
          + (" (fast subset)" if args.fast else ""))
    if failed:
        print("failed: " + ", ".join(r.name for r in failed), file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


# --------------------------------------------------------------------- main


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, list(argv))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
