"""Command-line front end.

Exit codes: 0 success, 1 invalid input, 2 runtime failure. Errors are written
to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys

from .analytic import (
    SystemConfig,
    asymptotic_sinr,
    average_se,
    collision_free_prob,
    p1_stationary_point,
    spectral_efficiency,
)
from .experiments import (
    DEFAULT_FIG4_SNRS,
    DEFAULT_FIG6_SNRS,
    DEFAULT_M_GRID,
    DEFAULT_POLICIES,
    DEFAULT_SNR_GRID,
    SweepSpec,
    fig4_table,
    run_fig4,
    run_fig5,
    run_fig6,
    write_table,
)
from .montecarlo import SUMMARY_COLUMNS, run_campaign
from .optimizer import REPORT_COLUMNS, optimize_grant_free

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
TABLE1 = {"m_antennas": 100, "n_ues": 10, "packet_len": 200, "snr_db": 0.0}


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _number_list(text: str, kind=float) -> list:
    """Parse ``"a,b,c"`` or an inclusive range ``"start:stop:step"``."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(t) for t in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int((stop - start) / step + 1e-9)
            return [kind(start + i * step) for i in range(n + 1)]
        return [kind(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad list {text!r}") from None


_NEGATIVE_LIST = re.compile(r"^-\d[\d.,:eE+-]*$")


def _glue_negative_values(argv):
    """Join ``--series -10,0`` into ``--series=-10,0`` so argparse keeps the value."""
    out = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE_LIST.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def _add_system_flags(p):
    g = p.add_argument_group("system")
    g.add_argument("--m", type=int, help="BS antennas M (default 100)")
    g.add_argument("--n", type=int, help="simultaneous RA UEs N (default 10)")
    g.add_argument("--l", type=int, help="packet length L in symbols (default 200)")
    g.add_argument("--snr-db", type=float, dest="snr_db",
                   help="uplink receive SNR per UE in dB (default 0 dB)")
    g.add_argument("--config", help="JSON file mirroring a sweep spec; flags override it")


def _add_run_flags(p, trials_default):
    p.add_argument("--trials", type=int,
                   help=f"Monte Carlo slots per point (default {trials_default}; 0 = analytic only)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--parallelism", type=int, default=1, help="worker threads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="grantfree",
                     description="Preamble length vs spectral efficiency of grant-free "
                                 "random access with massive MIMO.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analytic", help="evaluate the closed-form model at one P")
    _add_system_flags(p)
    p.add_argument("--p", type=float, help="preamble length P in symbols (required)")

    p = sub.add_parser("simulate", help="Monte Carlo campaign at one integer P")
    _add_system_flags(p)
    p.add_argument("--p", type=int, help="preamble length P in symbols (required)")
    _add_run_flags(p, 10000)
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="stdout format (default json)")

    p = sub.add_parser("optimize", help="optimal preamble lengths for one configuration")
    _add_system_flags(p)
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="stdout format (default json)")

    for name, helptext, grid_help, series_help in (
        ("fig4", "ASE against P (analytic and simulated)",
         "preamble lengths in symbols, 'a,b,c' or 'start:stop:step' (default 5:195:10)",
         "SNR values in dB, one curve each (default -10,0)"),
        ("fig5", "optimal P against SNR for several M",
         "SNR values in dB (default -20:10:5)",
         "antenna counts M (default 100,200,300,400,500)"),
        ("fig6", "ASE against M under preamble-length policies",
         "antenna counts M (default 100,200,300,400,500)",
         "SNR values in dB, one panel each (default -20,-10)"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_system_flags(p)
        p.add_argument("--grid", help=grid_help)
        p.add_argument("--series", help=series_help)
        if name == "fig4":
            _add_run_flags(p, 0)
        else:
            p.add_argument("--seed", type=int, help="master seed recorded in the sidecar (default 0)")
            p.add_argument("--parallelism", type=int, default=1, help="worker threads (default 1)")
        if name == "fig6":
            p.add_argument("--policies",
                           help="comma list of p_star, p1, p_hat_star, half_L, fixed:<P symbols> "
                                "(default p_star,p1,p_hat_star,half_L)")
        p.add_argument("--out", default=f"{name}.csv", help=f"output CSV path (default {name}.csv)")
        p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script stub")
    return parser


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    return doc


def _system(args, doc) -> SystemConfig:
    fields = dict(TABLE1)
    fields.update(doc.get("base", {}) or {})
    for flag, key in (("m", "m_antennas"), ("n", "n_ues"), ("l", "packet_len"),
                      ("snr_db", "snr_db")):
        value = getattr(args, flag)
        if value is not None:
            fields[key] = value
    try:
        return SystemConfig(**fields)
    except TypeError as exc:
        raise ValidationError(f"bad config field: {exc}") from None


def _pick(args, doc, flag, key, default):
    value = getattr(args, flag, None)
    if value is not None:
        return value
    return doc.get(key, default)


def _parse_list(value, kind):
    if value is None or isinstance(value, list):
        return value
    try:
        return _number_list(value, kind)
    except argparse.ArgumentTypeError as exc:
        raise ValidationError(str(exc)) from None


def _emit_row(columns, row, fmt, out):
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        w.writerow([row[c] for c in columns])
        out.write(buf.getvalue())
    else:
        out.write(json.dumps(row, sort_keys=False) + "\n")


def _cmd_analytic(args, doc, out):
    cfg = _system(args, doc)
    p = _pick(args, doc, "p", "p", None)
    if p is None:
        raise ValidationError("--p is required")
    result = {
        **cfg.to_dict(), "p": p,
        "collision_free_prob": collision_free_prob(cfg, p),
        "sinr": asymptotic_sinr(cfg, p),
        "se": spectral_efficiency(cfg, p),
        "ase": average_se(cfg, p),
        "p1": p1_stationary_point(cfg),
    }
    out.write(json.dumps(result) + "\n")


def _cmd_simulate(args, doc, out):
    cfg = _system(args, doc)
    p = _pick(args, doc, "p", "p", None)
    if p is None:
        raise ValidationError("--p is required")
    if not 1 <= p <= cfg.packet_len:
        raise ValidationError(f"P must lie in [1, {cfg.packet_len}], got {p}")
    trials = _pick(args, doc, "trials", "trials", 10000)
    if trials < 1:
        raise ValidationError("--trials must be >= 1")
    seed = _pick(args, doc, "seed", "master_seed", 0)
    summary = run_campaign(cfg, p, trials, seed, parallelism=_parallelism(args))
    _emit_row(SUMMARY_COLUMNS, summary.row(), args.format, out)


def _cmd_optimize(args, doc, out):
    cfg = _system(args, doc)
    report = optimize_grant_free(cfg)
    _emit_row(REPORT_COLUMNS, report.row(), args.format, out)


def _parallelism(args):
    if args.parallelism < 1:
        raise ValidationError("--parallelism must be >= 1")
    return args.parallelism


def _cmd_figure(args, doc, out):
    base = _system(args, doc)
    name = args.command
    vary = {"fig4": "preamble_len", "fig5": "snr_db", "fig6": "m_antennas"}[name]
    if doc.get("vary", vary) != vary:
        raise ValidationError(f"config vary={doc['vary']!r} does not match {name}")
    grid_kind = int if name == "fig6" else float
    series_kind = int if name == "fig5" else float
    grid = _parse_list(_pick(args, doc, "grid", "grid", None), grid_kind)
    series = _parse_list(_pick(args, doc, "series", "series", None), series_kind)
    if grid is None:
        grid = {"fig4": list(range(5, base.packet_len, 10)),
                "fig5": list(DEFAULT_SNR_GRID),
                "fig6": list(DEFAULT_M_GRID)}[name]
    if series is None:
        series = {"fig4": list(DEFAULT_FIG4_SNRS), "fig5": list(DEFAULT_M_GRID),
                  "fig6": list(DEFAULT_FIG6_SNRS)}[name]
    policies = ()
    if name == "fig6":
        raw = _pick(args, doc, "policies", "policies", list(DEFAULT_POLICIES))
        policies = tuple(raw.split(",") if isinstance(raw, str) else raw)
    trials = _pick(args, doc, "trials", "trials", 0) if name == "fig4" else 0
    seed = _pick(args, doc, "seed", "master_seed", 0)
    spec = SweepSpec(base=base, vary=vary, grid=tuple(grid), policies=policies,
                     trials=trials, master_seed=seed, series=tuple(series))
    par = _parallelism(args)
    if name == "fig4":
        table = fig4_table(spec, run_fig4(spec, par))
    elif name == "fig5":
        table = run_fig5(spec, par)
    else:
        table = run_fig6(spec, par)
    path = write_table(table, args.out, gnuplot=args.gnuplot)
    out.write(json.dumps({"figure": name, "csv": str(path), "rows": len(table.rows)}) + "\n")


COMMANDS = {"analytic": _cmd_analytic, "simulate": _cmd_simulate,
            "optimize": _cmd_optimize, "fig4": _cmd_figure, "fig5": _cmd_figure,
            "fig6": _cmd_figure}


def _fail(kind, message, code, err):
    err.write(json.dumps({"error": kind, "message": str(message)}) + "\n")
    return code


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        argv = sys.argv[1:] if argv is None else list(argv)
        args = parser.parse_args(_glue_negative_values(argv))
        doc = _load_config(args.config)
        COMMANDS[args.command](args, doc, out)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (ValidationError, ValueError) as exc:
        # DomainError and SweepError are ValueErrors
        return _fail("validation", exc, EXIT_VALIDATION, err)
    except Exception as exc:  # noqa: BLE001
        return _fail("runtime", f"{type(exc).__name__}: {exc}", EXIT_RUNTIME, err)
    return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
