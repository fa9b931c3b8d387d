"""Command-line front end.

Subcommands::

    fermiwait wtd    --from 1+ --to L-   waiting-time density curve -> CSV
    fermiwait natd                       net activity time density  -> CSV
    fermiwait stats                      probabilities and moments  -> JSON
    fermiwait verify                     brute-force verification   -> report
    fermiwait bench                      scaling benchmark          -> CSV

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 audit/verification failure.  Every output file embeds the fully
resolved configuration; with a fixed config, outputs are byte-identical
across runs (verification draws are seeded).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import stats as statsmod
from . import wtd as wtdmod
from .config import ConfigError, RunConfig
from .fock import FockOracle, VerificationEntry, VerificationReport, verify_tracedet
from .linalg import LinalgError
from .model import (
    CHANNEL_ORDER,
    build_tight_binding,
    ChainSpec,
    channels,
    derive_single_particle,
    steady_state,
    vacuum_state,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_AUDIT = 3

AUDIT_TOL = 1e-6


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig().validate()
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def _config_comment_lines(cfg: RunConfig) -> list[str]:
    return [f"# {k} = {v}" for k, v in cfg.resolved_items()]


def _write_csv(path: Path, cfg: RunConfig, header: str, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in _config_comment_lines(cfg):
            fh.write(line + "\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        return None if math.isnan(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_channel(label: str, spec: ChainSpec):
    ch = channels(spec)
    if label not in ch:
        raise ConfigError(
            f"unknown channel {label!r}; expected one of {', '.join(CHANNEL_ORDER)}"
        )
    return ch[label]


# ----------------------------------------------------------------------


def cmd_wtd(args) -> int:
    cfg = _load_config(args)
    spec = cfg.chain_spec()
    k = _parse_channel(args.to, spec)
    q = _parse_channel(getattr(args, "from"), spec)
    sp = derive_single_particle(spec)
    state = cfg.initial(spec)
    grid = wtdmod.default_time_grid(spec, points=cfg.points, t_max=cfg.t_max)
    curve = wtdmod.wtd_curve(k, q, state, sp, grid)
    out = Path(cfg.out_dir) / f"wtd_{k.label}_given_{q.label}.csv"
    _write_csv(
        out,
        cfg,
        "t,density,flag",
        ((p.t, p.value, p.flag) for p in curve.points),
    )
    print(f"wrote {out}")
    return EXIT_OK


def cmd_natd(args) -> int:
    cfg = _load_config(args)
    if cfg.initial_state != "steady":
        raise ConfigError("state.initial: net activity distribution needs 'steady'")
    spec = cfg.chain_spec()
    sp = derive_single_particle(spec)
    state = cfg.initial(spec)
    grid = wtdmod.default_time_grid(spec, points=cfg.points, t_max=cfg.t_max)
    rows = [(t, statsmod.natd(float(t), state, sp)) for t in grid]
    out = Path(cfg.out_dir) / "natd.csv"
    _write_csv(out, cfg, "t,density", rows)
    print(f"wrote {out}")
    return EXIT_OK


def _stats_payload(cfg: RunConfig, spec: ChainSpec) -> tuple[dict, bool]:
    sp = derive_single_particle(spec)
    state = cfg.initial(spec)
    tol = cfg.tol_quadrature
    table = statsmod.channel_stats(state, sp, tol)

    audits = {}
    audits_ok = True
    for b, ql in enumerate(CHANNEL_ORDER):
        col = table.p_kq[:, b]
        if np.all(np.isnan(col)):
            audits[ql] = None
            continue
        audits[ql] = float(np.nansum(col))
        if abs(audits[ql] - 1.0) > AUDIT_TOL:
            audits_ok = False

    if state.kind == "steady":
        natd_mean, natd_var = statsmod.natd_moments(state, sp, tol)
    else:
        natd_mean = natd_var = None

    payload = {
        "config": cfg.to_dict(),
        "order": list(CHANNEL_ORDER),
        "p_kq": table.p_kq,
        "p_q": table.p_q,
        "mean": table.mean,
        "variance": table.variance,
        "natd_mean": natd_mean,
        "natd_variance": natd_var,
        "normalization_audit": audits,
    }
    return payload, audits_ok


def cmd_stats(args) -> int:
    cfg = _load_config(args)
    failures = []
    sweep = (
        [int(s) for s in args.sweep_L.split(",")] if args.sweep_L else [None]
    )
    for L in sweep:
        run_cfg = cfg
        suffix = ""
        if L is not None:
            if L < 2:
                raise ConfigError(f"--sweep-L: chain needs at least 2 sites, got {L}")
            run_cfg = RunConfig(**{**cfg.to_dict(), "L": L}).validate()
            suffix = f"_L{L}"
        spec = run_cfg.chain_spec()
        payload, audits_ok = _stats_payload(run_cfg, spec)
        out = Path(cfg.out_dir) / f"stats{suffix}.json"
        _write_json(out, payload)
        print(f"wrote {out}")
        if not audits_ok:
            failures.append(out.name)
    if failures:
        msg = f"normalization audit outside 1 +/- {AUDIT_TOL:g} in: {', '.join(failures)}"
        if args.audit_warn_only:
            print("warning:", msg)
            return EXIT_OK
        print("error:", msg, file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


# ----------------------------------------------------------------------


def run_verification(cfg: RunConfig, seed: int, allow_large: bool) -> VerificationReport:
    """Closed-form-vs-brute-force verification for the configured chain.

    Combines the trace-determinant identity suite with a direct
    waiting-time equivalence sweep, the steady-state covariance
    cross-check and normalization audits.
    """
    report = verify_tracedet(seed=seed, draws=20, sizes=(2, 3))

    spec = cfg.chain_spec()
    oracle = FockOracle(spec, allow_large=allow_large)
    sp = derive_single_particle(spec)
    ch = channels(spec)
    rng = np.random.default_rng(seed)
    gamma_min = min(g for g in (spec.gamma1, spec.gammaL) if g > 0)
    times = rng.uniform(0.0, 20.0 / gamma_min, size=10)
    tol = cfg.tol_oracle
    floor = 1e-12 / tol  # |a-b| <= tol*max(|a|,|b|, floor) == rel tol or 1e-12 abs

    st = steady_state(spec)
    rho_ss = oracle.steady_state()
    cov_dev = float(np.max(np.abs(st.C - oracle.covariance(rho_ss))))
    report.entries.append(
        VerificationEntry("steady_covariance", 1, cov_dev, 1e-8)
    )

    states = [("steady", st, rho_ss), ("vacuum", vacuum_state(spec.L), oracle.vacuum_density())]
    for name, state, rho in states:
        dev = 0.0
        count = 0
        for ql in CHANNEL_ORDER:
            q = ch[ql]
            occ = float(np.real(state.C[q.site_index, q.site_index]))
            weight = occ if q.sign == "-" else 1.0 - occ
            if state.kind == "vacuum" and q.sign == "-":
                for kl in CHANNEL_ORDER:
                    dev = max(dev, abs(wtdmod.wtd_density(1.0, ch[kl], q, state, sp)))
                continue
            if q.rate * weight <= 1e-14:
                continue
            for kl in CHANNEL_ORDER:
                for t in times:
                    a = wtdmod.wtd_density(float(t), ch[kl], q, state, sp)
                    b = oracle.wtd(float(t), ch[kl], q, rho)
                    dev = max(dev, abs(a - b) / max(abs(a), abs(b), floor))
                    count += 1
        report.entries.append(
            VerificationEntry(f"wtd_equivalence_{name}", count, dev, tol)
        )

    for name, state in (("steady", st), ("vacuum", vacuum_state(spec.L))):
        dev = 0.0
        count = 0
        for ql in CHANNEL_ORDER:
            q = ch[ql]
            occ = float(np.real(state.C[q.site_index, q.site_index]))
            weight = occ if q.sign == "-" else 1.0 - occ
            if q.rate * weight <= 1e-14 or (state.kind == "vacuum" and q.sign == "-"):
                continue
            audit = statsmod.normalization_audit(q, state, sp, cfg.tol_quadrature)
            dev = max(dev, abs(audit - 1.0))
            count += 1
        report.entries.append(
            VerificationEntry(f"normalization_{name}", count, dev, AUDIT_TOL)
        )
    return report


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    if cfg.L > 5 or (cfg.L == 5 and not args.allow_large_oracle):
        print(
            f"error: the brute-force oracle is capped at L = 4 "
            f"(L = 5 with --allow-large-oracle); got L = {cfg.L}",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    report = run_verification(cfg, seed=args.seed, allow_large=args.allow_large_oracle)
    print(report.to_text())
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "verify.json", {"config": cfg.to_dict(), **report.to_dict()})
    with open(out / "verify.txt", "w", encoding="utf-8", newline="\n") as fh:
        for line in _config_comment_lines(cfg):
            fh.write(line + "\n")
        fh.write(report.to_text() + "\n")
    return EXIT_OK if report.passed else EXIT_AUDIT


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    sizes = [int(s) for s in args.sizes.split(",")]
    if any(s < 2 for s in sizes):
        raise ConfigError("--sizes: all chain sizes must be >= 2")
    rows = []
    for L in sizes:
        spec = ChainSpec(
            h=build_tight_binding(L, cfg.V, cfg.J),
            gamma1=cfg.gamma1,
            gammaL=cfg.gammaL,
            f1=cfg.f1,
            fL=cfg.fL,
        )
        sp = derive_single_particle(spec)
        try:
            state = steady_state(spec)
        except ValueError as exc:
            raise ConfigError(f"baths: {exc}") from exc
        ch = channels(spec)
        k, q = ch["L-"], ch["1+"]
        t_probe = L / 2.0
        wtdmod.wtd_density(t_probe, k, q, state, sp)  # warm up caches/BLAS
        best = math.inf
        for _ in range(args.repeats):
            tic = time.perf_counter()
            wtdmod.wtd_density(t_probe, k, q, state, sp)
            best = min(best, time.perf_counter() - tic)
        rows.append((L, best))
        print(f"L = {L:4d}: {best * 1e3:9.3f} ms per density point")
    logs = np.log(np.array([r[0] for r in rows], dtype=float))
    logt = np.log(np.array([r[1] for r in rows], dtype=float))
    slope = float(np.polyfit(logs, logt, 1)[0])
    print(f"log-log scaling slope: {slope:.3f} (cubic-with-overhead budget 3.5)")
    out = Path(cfg.out_dir) / "bench.csv"
    _write_csv(out, cfg, "L,seconds_per_point", rows)
    print(f"wrote {out}")
    if slope > 3.5:
        print("error: scaling slope exceeds 3.5", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fermiwait",
        description="Waiting-time statistics for boundary-driven free-fermion chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="INI config file (defaults built in)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides config)")

    p = sub.add_parser("wtd", help="waiting-time density curve for one channel pair")
    common(p)
    p.add_argument("--from", required=True, metavar="CH", help="conditioning channel (1-,1+,L-,L+)")
    p.add_argument("--to", required=True, metavar="CH", help="observed channel (1-,1+,L-,L+)")
    p.set_defaults(func=cmd_wtd)

    p = sub.add_parser("natd", help="net activity time density curve (steady state)")
    common(p)
    p.set_defaults(func=cmd_natd)

    p = sub.add_parser("stats", help="channel probabilities, moments, audits")
    common(p)
    p.add_argument("--sweep-L", metavar="LIST", help="comma-separated chain sizes, one JSON each")
    p.add_argument(
        "--audit-warn-only",
        action="store_true",
        help="downgrade normalization audit failures to warnings",
    )
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("verify", help="verify closed forms against the brute-force oracle")
    common(p)
    p.add_argument("--seed", type=int, default=0, help="seed for random draws")
    p.add_argument(
        "--allow-large-oracle",
        action="store_true",
        help="permit the L = 5 oracle (superoperator dimension 1024)",
    )
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="per-point timing across chain sizes")
    common(p)
    p.add_argument("--sizes", default="10,50,100,200", metavar="LIST")
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (LinalgError, statsmod.QuadratureError, wtdmod.WtdNumericsError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
