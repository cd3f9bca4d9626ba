"""Command-line interface: synth, simulate, and verify subcommands.

Exit codes: 0 success, 1 domain failure (infeasible synthesis, failed
verification, aborted simulation), 2 usage or file-format error.
"""

import argparse
import json
import sys as _sys

import numpy as np

from .errors import (DccmError, FileFormatError, SimulationAborted,
                     SynthesisInfeasible)
from .sim import load_schedule, simulate, verify_contraction
from .synth import (CertificateTemplate, SynthesisOptions, load_certificate,
                    save_certificate, synthesize)
from .sysmodel import Box, load_system


class _UsageError(Exception):
    pass


def _parse_vector(text, what):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise _UsageError(f"{what}: expected comma-separated numbers, got '{text}'")


def _parse_box(text, what):
    lo, hi = [], []
    for axis in text.split(","):
        parts = axis.split(":")
        if len(parts) != 2:
            raise _UsageError(f"{what}: expected lo:hi per axis, got '{axis}'")
        try:
            a, b = float(parts[0]), float(parts[1])
        except ValueError:
            raise _UsageError(f"{what}: expected numbers in '{axis}'")
        if not a < b:
            raise _UsageError(f"{what}: need lo < hi, got '{axis}'")
        lo.append(a)
        hi.append(b)
    return Box(np.array(lo), np.array(hi))


def _build_parser():
    p = argparse.ArgumentParser(
        prog="dccmkit",
        description="Contraction-metric synthesis, geodesic tracking "
                    "control, and certificate verification.")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="synthesize a certificate")
    ps.add_argument("--system", required=True, help="system JSON file")
    ps.add_argument("--degree", type=int, required=True,
                    help="polynomial degree of the metric (and gain unless overridden)")
    ps.add_argument("--gain-degree", type=int, default=None,
                    help="gain polynomial degree (default: same as --degree)")
    ps.add_argument("--beta", type=float, required=True,
                    help="contraction rate in (0, 1]")
    ps.add_argument("--out", required=True, help="certificate JSON output path")
    ps.add_argument("--no-rate-search", action="store_true",
                    help="maximize the margin at --beta instead of searching "
                         "for the strongest feasible rate first")

    pm = sub.add_parser("simulate", help="run the closed-loop tracker")
    pm.add_argument("--system", required=True)
    pm.add_argument("--cert", required=True)
    pm.add_argument("--schedule", required=True, help="reference schedule JSON")
    pm.add_argument("--x0", default=None, help="initial state, comma-separated")
    pm.add_argument("--steps", type=int, default=None,
                    help="override the schedule's total step count")
    pm.add_argument("--out", required=True, help="trajectory CSV output path")
    pm.add_argument("--plot", default=None,
                    help="figure output path (default: CSV path with .svg)")
    pm.add_argument("--no-plot", action="store_true", help="skip the figure")
    pm.add_argument("--n-geo", type=int, default=30,
                    help="geodesic segments per control step")
    pm.add_argument("--endpoint-gain", action="store_true",
                    help="evaluate the gain once at the plant state instead "
                         "of along the geodesic")

    pv = sub.add_parser("verify", help="grid-scan the contraction conditions")
    pv.add_argument("--system", required=True)
    pv.add_argument("--cert", required=True)
    pv.add_argument("--box", required=True,
                    help="state box, lo:hi per axis, comma-separated")
    pv.add_argument("--ubox", required=True, help="input box, same format")
    pv.add_argument("--res", type=int, default=21, help="grid points per axis")
    pv.add_argument("--out", default=None,
                    help="report JSON path (default: stdout)")
    return p


def _cmd_synth(args):
    sys_model = load_system(args.system)
    gain_degree = args.degree if args.gain_degree is None else args.gain_degree
    template = CertificateTemplate(sys_model.n, sys_model.m,
                                   args.degree, gain_degree, args.beta)
    options = SynthesisOptions(search_strongest_rate=not args.no_rate_search)
    try:
        cert = synthesize(sys_model, template, options)
    except SynthesisInfeasible as exc:
        print(f"infeasible: {exc}", file=_sys.stderr)
        return 1
    save_certificate(cert, args.out)
    print(f"margin: {cert.margin:.6g}")
    return 0


def _cmd_simulate(args):
    sys_model = load_system(args.system)
    cert = load_certificate(args.cert)
    schedule = load_schedule(args.schedule, sys_model)
    if args.steps is not None:
        from .sim import ReferenceSchedule
        schedule = ReferenceSchedule(
            [(s.start_step, s.x_star, s.u_star) for s in schedule.segments],
            args.steps)
    x0 = None if args.x0 is None else _parse_vector(args.x0, "--x0")
    try:
        log = simulate(sys_model, cert, schedule, x0=x0, n_geo=args.n_geo,
                       gain_at_state=args.endpoint_gain)
    except SimulationAborted as exc:
        print(f"aborted: {exc}", file=_sys.stderr)
        return 1
    log.save_csv(args.out)
    if not args.no_plot:
        from .plotting import render_trajectory
        plot_path = args.plot
        if plot_path is None:
            base = args.out[:-4] if args.out.endswith(".csv") else args.out
            plot_path = base + ".svg"
        render_trajectory(log, plot_path)
    final_err = float(np.abs(log.x[-1] - log.x_star[-1]).max())
    print(f"steps: {log.num_steps}  final tracking error: {final_err:.3e}")
    return 0


def _cmd_verify(args):
    sys_model = load_system(args.system)
    cert = load_certificate(args.cert)
    box = _parse_box(args.box, "--box")
    ubox = _parse_box(args.ubox, "--ubox")
    if box.dim != sys_model.n:
        raise _UsageError(f"--box must have {sys_model.n} axes")
    if ubox.dim != sys_model.m:
        raise _UsageError(f"--ubox must have {sys_model.m} axes")
    report = verify_contraction(sys_model, cert, box, ubox, args.res)
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    if args.out is None:
        _sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"pass: {report.passed}")
    return 0 if report.passed else 1


_DASH_VALUE_FLAGS = {"--box", "--ubox", "--x0"}


def _join_dash_values(argv):
    """Fold '--box -0.5:1.5' into '--box=-0.5:1.5' so argparse does not
    mistake a leading-minus value for an option name."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _DASH_VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None):
    parser = _build_parser()
    if argv is None:
        argv = _sys.argv[1:]
    args = parser.parse_args(_join_dash_values(list(argv)))
    handler = {"synth": _cmd_synth, "simulate": _cmd_simulate,
               "verify": _cmd_verify}[args.command]
    try:
        return handler(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=_sys.stderr)
        return 2
    except FileFormatError as exc:
        print(str(exc), file=_sys.stderr)
        return 2
    except DccmError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    _sys.exit(main())
