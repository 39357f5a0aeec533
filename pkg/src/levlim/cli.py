"""Command-line front end.

    levlim solve     --mu 0.08 --sigma 0.16 --eps 0.01 --gamma 1
    levlim frontier  --mu 0.08 --sigma 0.16 --eps 0.001,0.005,0.01 --output out/frontier.csv
    levlim table1    --output out/table1.csv
    levlim simulate  --mu 0.08 --sigma 0.16 --eps 0.01 --gamma 1 --paths 100 --steps 100000
    levlim verify    --mu 0.08 --sigma 0.16 --eps 0.01 --gamma 1
    levlim converge  --mu 0.08 --sigma 0.16 --eps 0.01

Exit codes: 0 success, 1 a verification or check came out negative, 2 non-convergence,
3 domain error, 4 I/O error.  Failures print a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import __version__, ergodic, fbp, frontier, hjb, plotting, simulate, tables
from .errors import DomainError, LevlimError
from .model import MarketParams, Preference

COMMANDS = ("solve", "frontier", "table1", "simulate", "verify", "converge")
FORMATS = ("csv", "json", "svg")
EXIT_CHECK_FAILED = 1
EXIT_IO = 4

DEFAULTS = {
    "mu": 0.08,
    "sigma": 0.16,
    "r": 0.0,
    "eps": "0.01",
    "gamma": 1.0,
    "format": None,
    "output": None,
    "force": False,
    "seed": 0,
    "paths": 100,
    "steps": 100_000,
    "dt": None,
    "burn_in": None,
    "band": None,
    "antithetic": False,
    "boundary": "bridge",
    "gammas": None,
    "n_gammas": 60,
    "sharpe": None,
    "sigmas": None,
    "no_plot": False,
    "tol": hjb.DEFAULT_TOL,
}


@dataclass
class RunConfig:
    command: str
    params: MarketParams
    pref: Preference
    epsilons: list
    sim: Optional[simulate.SimConfig]
    output_path: Optional[Path]
    format: str
    options: dict


def _float_list(text) -> list:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levlim", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"levlim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file of option values; flags override it")
        sp.add_argument("--mu", type=float)
        sp.add_argument("--sigma", type=float)
        sp.add_argument("--r", type=float)
        sp.add_argument("--eps", help="spread, or a comma list for frontier")
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--format", choices=FORMATS)
        sp.add_argument("--output", help="output file; data format follows --format")
        sp.add_argument("--force", action="store_true", default=None, help="allow eps > 0.1")
        sp.add_argument("--no-plot", dest="no_plot", action="store_true", default=None,
                        help="skip the SVG figures written next to the data file")
        if name in ("frontier",):
            sp.add_argument("--gammas", help="comma list of gammas (default: geometric grid plus 0)")
            sp.add_argument("--n-gammas", dest="n_gammas", type=int)
            sp.add_argument("--sharpe", type=float, help="constant-Sharpe mode: mu = sharpe * sigma")
            sp.add_argument("--sigmas", help="comma list of volatilities for constant-Sharpe mode")
        if name == "table1":
            sp.add_argument("--sharpe", type=float)
            sp.add_argument("--sigmas")
        if name == "converge":
            sp.add_argument("--gammas")
        if name == "verify":
            sp.add_argument("--tol", type=float)
        if name == "simulate":
            sp.add_argument("--seed", type=int)
            sp.add_argument("--paths", type=int)
            sp.add_argument("--steps", type=int)
            sp.add_argument("--dt", type=float, help="years per step (default scales with the band)")
            sp.add_argument("--burn-in", dest="burn_in", type=int)
            sp.add_argument("--band", help="pi_minus,pi_plus instead of the optimal band")
            sp.add_argument("--antithetic", action="store_true", default=None)
            sp.add_argument("--boundary", choices=simulate.BOUNDARY_MODES,
                            help="reflection step: exact bridge (default), projection with overshoot shift, plain projection")
    return p


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the --config file and explicit flags, in that order."""
    values = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise DomainError(f"config file {args.config} is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise DomainError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        values[k] = v
    command = args.command
    epsilons = _float_list(values["eps"])
    if not epsilons:
        raise DomainError("--eps needs at least one value")
    if len(epsilons) > 1 and command not in ("frontier", "table1"):
        raise DomainError(f"{command} takes a single --eps")
    params = MarketParams(float(values["mu"]), float(values["sigma"]), float(values["r"]), epsilons[0])
    pref = Preference(float(values["gamma"]))
    out_suffix = Path(values["output"]).suffix.lstrip(".").lower() if values["output"] else ""
    fmt = values["format"] or (out_suffix if out_suffix in FORMATS else None) or (
        "csv" if command in ("frontier", "table1", "converge") else "json")
    if fmt == "svg" and command not in ("frontier", "simulate"):
        raise DomainError("--format svg is available for frontier and simulate only")
    out = Path(values["output"]) if values["output"] else None
    if fmt == "svg" and out is None:
        raise DomainError("--format svg needs --output")
    return RunConfig(command, params, pref, epsilons, None, out, fmt, values)


def _provenance(cfg: RunConfig, **extra) -> dict:
    p = cfg.params
    meta = {
        "tool": f"levlim {__version__}",
        "command": cfg.command,
        "mu": p.mu,
        "sigma": p.sigma,
        "r": p.r,
        "epsilon": cfg.epsilons if len(cfg.epsilons) > 1 else p.epsilon,
    }
    if cfg.command in ("solve", "simulate", "verify"):
        meta["gamma"] = cfg.pref.gamma
    meta.update(extra)
    return meta


def _emit(table: tables.Table, cfg: RunConfig):
    if cfg.output_path is not None and cfg.format != "svg":
        tables.write(table, cfg.output_path, cfg.format)
    elif cfg.output_path is None:
        text = tables.to_csv(table) if cfg.format == "csv" else tables.to_json(table)
        sys.stdout.write(text)


def _figure_path(cfg: RunConfig, suffix: str, primary: bool = False) -> Optional[Path]:
    """Where a figure goes: the --output path itself for the primary svg, else next to it."""
    if cfg.output_path is None or (cfg.options.get("no_plot") and cfg.format != "svg"):
        return None
    base = cfg.output_path
    if cfg.format == "svg" and primary:
        return base
    return base.with_name(f"{base.stem}_{suffix}.svg")


def _summary(lines):
    print("\n".join(lines))


def _solve_row(rep: fbp.SolveReport) -> dict:
    p, b = rep.params, rep.band
    res = fbp.boundary_residuals(rep)
    row = {
        "gamma": rep.pref.gamma,
        "regime": b.regime.value,
        "zeta_minus": b.zeta_minus,
        "zeta_plus": b.zeta_plus,
        "pi_minus": b.pi_minus,
        "pi_plus": b.pi_plus,
        "lambda": rep.lam,
        "esr": rep.esr,
    }
    if b.is_degenerate:
        row.update(m_hat=p.r + p.mu, s_hat=p.sigma, atc=0.0)
    else:
        st = ergodic.long_run_stats(b, p, rep.pref)
        row.update(m_hat=st.m_hat, s_hat=st.s_hat, atc=st.atc)
    row.update(residual_norm=rep.residual_norm, iterations=rep.iterations, method=rep.method.value, **res)
    return row


def cmd_solve(cfg: RunConfig) -> int:
    rep = fbp.solve(cfg.params, cfg.pref, force=cfg.options["force"])
    row = _solve_row(rep)
    table = tables.Table(list(row), [list(row.values())],
                         _provenance(cfg, residual_norm=rep.residual_norm, warnings=rep.warnings))
    _emit(table, cfg)
    if cfg.output_path is not None:
        _summary([
            f"band      pi in [{row['pi_minus']:.6g}, {row['pi_plus']:.6g}]  ({row['regime']})",
            f"lambda    {row['lambda']:.10g}",
            f"ESR       {row['esr']:.10g}",
            f"residuals |psi| {rep.residual_norm:.3g}  boundary max "
            f"{max(fbp.boundary_residuals(rep).values()):.3g}",
        ])
    return 0


FRONTIER_COLUMNS = ["gamma", "pi_minus", "pi_plus", "s_hat", "m_hat_excess", "esr", "atc",
                    "m_multiple", "s_multiple"]


def _frontier_rows(points, lead):
    rows = []
    for pt in points:
        rows.append(lead + [pt.gamma, pt.pi_minus, pt.pi_plus, pt.s_hat, pt.m_hat_excess, pt.esr, pt.atc,
                            pt.m_multiple, pt.s_multiple, pt.residual_norm, pt.error or ""])
    return rows


def cmd_frontier(cfg: RunConfig) -> int:
    opts = cfg.options
    p = cfg.params
    if opts.get("sharpe") is not None or opts.get("sigmas") is not None:
        return _constant_sharpe(cfg)
    sweeps = {}
    rows = []
    for eps in cfg.epsilons:
        params = p.with_epsilon(eps)
        gammas = _float_list(opts["gammas"]) if opts.get("gammas") else frontier.default_gammas(
            params, n=int(opts["n_gammas"]))
        pts = frontier.sweep(params, gammas, force=opts["force"])
        sweeps[eps] = pts
        rows += _frontier_rows(pts, [eps])
    failed = sum(1 for pts in sweeps.values() for q in pts if not q.ok)
    worst = max((q.residual_norm for pts in sweeps.values() for q in pts if q.ok), default=0.0)
    table = tables.Table(["epsilon"] + FRONTIER_COLUMNS + ["residual_norm", "error"], rows,
                         _provenance(cfg, max_residual_norm=worst, failed_points=failed))
    _emit(table, cfg)
    fig = _figure_path(cfg, "frontier", primary=True)
    if fig is not None:
        plotting.frontier_multiples(sweeps, fig)
        plotting.trading_boundaries(sweeps[max(sweeps)], p.mu, p.sigma, _figure_path(cfg, "boundaries"))
    lines = []
    for eps, pts in sweeps.items():
        best = max((q for q in pts if q.ok), key=lambda q: q.m_multiple)
        lines.append(f"spread {eps:g}: {len(pts)} points, max return multiple {best.m_multiple:.6g} "
                     f"(pi in [{best.pi_minus:.4g}, {best.pi_plus:.4g}])")
    lines.append(f"max residual {worst:.3g}, failed points {failed}")
    if cfg.output_path is not None:
        _summary(lines)
    return 0


def _constant_sharpe(cfg: RunConfig) -> int:
    opts = cfg.options
    sharpe = float(opts["sharpe"] if opts.get("sharpe") is not None else 0.5)
    sigmas = _float_list(opts["sigmas"] or "0.1,0.2,0.5")
    eps = cfg.epsilons[0]
    fr = frontier.fixed_sharpe_frontiers(sharpe, sigmas, eps, gammas_per=int(opts["n_gammas"]))
    rows = []
    for s, pts in fr.items():
        rows += _frontier_rows(pts, [s, sharpe * s])
    checks = {}
    ordered = sorted(fr)
    for lo, hi in zip(ordered, ordered[1:]):
        checks[f"{hi:g}>{lo:g}"] = frontier.dominates(fr[hi], fr[lo])
    table = tables.Table(["sigma", "mu"] + FRONTIER_COLUMNS + ["residual_norm", "error"], rows,
                         _provenance(cfg, sharpe=sharpe, dominance=checks))
    _emit(table, cfg)
    fig = _figure_path(cfg, "sharpe", primary=True)
    if fig is not None:
        plotting.constant_sharpe(fr, sharpe, fig)
    if cfg.output_path is not None:
        for k, v in checks.items():
            _summary([f"{k}: dominates={v['dominates']} min gap {v['min_gap']:.3g} "
                      f"violations on s in {v['violation_range']}"])
    return 0


def cmd_table1(cfg: RunConfig) -> int:
    opts = cfg.options
    sharpe = float(opts.get("sharpe") or 0.5)
    sigmas = _float_list(opts["sigmas"]) if opts.get("sigmas") else list(frontier.TABLE_SIGMAS)
    eps_list = list(frontier.TABLE_EPSILONS) if cfg.options["eps"] == DEFAULTS["eps"] else cfg.epsilons
    cfg.epsilons = eps_list
    grid = frontier.multiplier_table(sharpe, sigmas, eps_list, force=opts["force"])
    cols = ["sigma"]
    for e in eps_list:
        cols += [f"exact_eps={e:g}", f"approx_eps={e:g}", f"leading_eps={e:g}"]
    rows = []
    for s, row in zip(sigmas, grid):
        line = [s]
        for cell in row:
            line += [cell.exact, cell.approx, cell.leading]
        rows.append(line)
    audit = frontier.multiplier_constant_audit()
    meta = {
        "tool": f"levlim {__version__}",
        "command": "table1",
        "sharpe": sharpe,
        "approx_convention": "(1-kappa) sqrt(kappa) sqrt(mu/sigma^2/eps) + 1",
        "leading_convention": "(1-kappa) sqrt(kappa) sqrt(mu/sigma^2/eps)",
        "kappa": audit["kappa"],
        "derived_constant": audit["derived_constant"],
        "printed_constant": audit["printed_constant"],
        "bracket_max_rel_dev": audit["max_rel_dev"],
        "bracket_matching_conventions": audit["matching_conventions"],
    }
    _emit(tables.Table(cols, rows, meta), cfg)
    if cfg.output_path is not None:
        for s, row in zip(sigmas, grid):
            _summary([f"sigma {s:4.0%}: " + "  ".join(f"{c.exact:7.2f} ({c.leading:6.2f})" for c in row)])
        _summary(["bracketed: leading term without the order-one correction",
                  f"kappa {audit['kappa']:.16f}; (1-kappa)sqrt(kappa) = {audit['derived_constant']:.6f}, "
                  f"printed {audit['printed_constant']}; brackets match: {audit['matching_conventions']}"])
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    opts = cfg.options
    p, pref = cfg.params, cfg.pref
    if opts.get("band"):
        lo, hi = _float_list(opts["band"])
        band = fbp.Band.from_pi(lo, hi, p)
        exact = ergodic.policy_stats(band, p, pref)
        source = "given"
    else:
        rep = fbp.solve(p, pref, force=opts["force"])
        band = rep.band
        if band.is_degenerate:
            raise DomainError("the optimal band is degenerate; nothing to simulate")
        exact = ergodic.long_run_stats(band, p, pref)
        source = "optimal"
    dt = float(opts["dt"]) if opts.get("dt") else simulate.default_dt(band, p, opts["boundary"])
    sim = simulate.SimConfig(dt=dt, n_steps=int(opts["steps"]), n_paths=int(opts["paths"]),
                             seed=int(opts["seed"]), burn_in=opts.get("burn_in"),
                             boundary=opts["boundary"],
                             antithetic=bool(opts.get("antithetic")))
    est = simulate.simulate_band(band, p, sim, pref)
    rows = []
    for name, e, ref in [("m_hat", est.m_hat, exact.m_hat), ("m_hat_drift", est.m_hat_drift, exact.m_hat),
                         ("s_hat", est.s_hat, exact.s_hat), ("atc", est.atc, exact.atc),
                         ("esr", est.esr, exact.esr)]:
        rows.append([name, e.value, e.se, ref, e.z_score(ref)])
    hist_err = est.histogram_sup_relative_error(band, p)
    meta = _provenance(cfg, band_source=source, pi_minus=band.pi_minus, pi_plus=band.pi_plus,
                       seed=sim.seed, generator=est.generator, dt=dt, n_steps=sim.n_steps,
                       n_paths=sim.n_paths, burn_in=sim.burn_in_steps, antithetic=sim.antithetic,
                       boundary=sim.boundary, histogram_sup_rel_error=hist_err)
    _emit(tables.Table(["quantity", "mc", "se", "exact", "z"], rows, meta), cfg)
    fig = _figure_path(cfg, "occupancy", primary=True)
    if fig is not None:
        plotting.occupancy(est.bin_edges, est.occupancy_histogram,
                           simulate.bin_probabilities(band, p, est.bin_edges), fig)
    if cfg.output_path is not None:
        _summary([f"{r[0]:12s} mc {r[1]:.6g} +- {r[2]:.2g}  exact {r[3]:.6g}  z {r[4]:+.2f}" for r in rows]
                 + [f"histogram sup relative error {hist_err:.3%}"])
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    rep = fbp.solve(cfg.params, cfg.pref, force=cfg.options["force"])
    v = hjb.verify_hjb(rep, tol=float(cfg.options["tol"]))
    row = {
        "passed": v.passed,
        "min_operator_residual": v.min_operator_residual,
        "min_gradient_slack_lower": v.min_gradient_slack_lower,
        "min_gradient_slack_upper": v.min_gradient_slack_upper,
        "inside_residual_max": v.inside_residual_max,
        "worst_region": v.worst_region,
        "worst_pi": v.worst_pi,
        "tol": v.tol,
    }
    _emit(tables.Table(list(row), [list(row.values())],
                       _provenance(cfg, residual_norm=rep.residual_norm, pi_minus=rep.band.pi_minus,
                                   pi_plus=rep.band.pi_plus)), cfg)
    if cfg.output_path is not None:
        _summary([f"HJB check {'passed' if v.passed else 'FAILED'} (tol {v.tol:g}); "
                  f"worst slack {min(v.min_operator_residual, v.min_gradient_slack_lower, v.min_gradient_slack_upper):.3g} "
                  f"in {v.worst_region or '-'}"])
    return 0 if v.passed else EXIT_CHECK_FAILED


def cmd_converge(cfg: RunConfig) -> int:
    gammas = _float_list(cfg.options["gammas"]) if cfg.options.get("gammas") else [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
    res = frontier.convergence_check(cfg.params, gammas, force=cfg.options["force"])
    lim = res.limit.band
    rows = [[r.gamma, r.zeta_minus, r.zeta_plus, r.esr, r.gap_minus, r.gap_plus, r.buy_hold_bound]
            for r in res.rows]
    rows.append([0.0, lim.zeta_minus, lim.zeta_plus, res.limit.esr, 0.0, 0.0, math.nan])
    meta = _provenance(cfg, extrapolated=list(res.extrapolated), monotone_gaps=res.monotone_gaps,
                       esr_monotone=res.esr_monotone, esr_bounded=res.esr_bounded,
                       above_buy_hold=res.above_buy_hold)
    _emit(tables.Table(["gamma", "zeta_minus", "zeta_plus", "esr", "gap_minus", "gap_plus", "buy_hold_bound"],
                       rows, meta), cfg)
    ok = res.monotone_gaps and res.esr_monotone and res.esr_bounded and res.above_buy_hold
    if cfg.output_path is not None:
        _summary([f"gamma {r[0]:g}: relative gaps {r[4]:.3g}, {r[5]:.3g}" for r in rows[:-1]]
                 + [f"monotone {res.monotone_gaps}, ESR increasing {res.esr_monotone}, "
                    f"bounded {res.esr_bounded}, above buy-and-hold {res.above_buy_hold}"])
    return 0 if ok else EXIT_CHECK_FAILED


HANDLERS = {
    "solve": cmd_solve,
    "frontier": cmd_frontier,
    "table1": cmd_table1,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "converge": cmd_converge,
}


def _fail(code: int, kind: str, message: str, **extra) -> int:
    doc = {"error": kind, "message": message, "exit_code": code}
    doc.update(extra)
    print(json.dumps(tables._jsonable(doc)), file=sys.stderr)
    return code


def run(cfg: RunConfig) -> int:
    return HANDLERS[cfg.command](cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return run(cfg)
    except LevlimError as exc:
        extra = {}
        if getattr(exc, "residual_norm", None) is not None:
            extra["residual_norm"] = exc.residual_norm
        if getattr(exc, "last_iterate", None) is not None:
            extra["last_iterate"] = list(map(float, exc.last_iterate))
        return _fail(exc.exit_code, type(exc).__name__, str(exc), **extra)
    except OSError as exc:
        return _fail(EXIT_IO, "IOError", str(exc))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
