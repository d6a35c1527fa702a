"""Command line entry point: ``loopchannel <subcommand> ...``.

Subcommands
-----------
peaks          peak-time table ``k,t_max_s`` for a channel JSON
simulate       forward-model trace for a ForwardModel JSON
pbs            particle simulation: frame CSV and receiver traces
fit-injection  raised-cosine injection from a mean-intensity CSV
fit-channel    channel parameters from an ROI intensity CSV

Exit codes: 0 success, 1 usage/parameter error, 2 fit did not converge,
3 unusable data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import channel, estimation, injection, pbs, response
from .errors import ConvergenceError, DataError, FitQualityError, LoopChannelError
from .traces import Trace, format_float, read_trace_csv, uniform_grid, write_trace_csv

log = logging.getLogger("loopchannel")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONVERGENCE = 2
EXIT_DATA = 3


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _dump_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def cmd_peaks(args):
    ch = channel.ChannelParams.from_dict(_load_json(args.channel))
    out, close = _open_out(args.out)
    try:
        out.write("k,t_max_s\n")
        for k, t in channel.peak_times(ch, args.k_max):
            out.write(f"{k},{format_float(t)}\n")
    finally:
        if close:
            out.close()
    return EXIT_OK


def cmd_simulate(args):
    model = response.ForwardModel.from_dict(_load_json(args.model))
    grid = uniform_grid(args.t_end, args.dt, args.t_start)
    fn = response.predict_derivative if args.derivative else response.predict
    write_trace_csv(fn(model, grid), args.out)
    return EXIT_OK


def cmd_pbs(args):
    cfg_all = _load_json(args.config)
    sim = pbs.SimConfig.from_dict(cfg_all.get("sim", {}))
    ch = channel.ChannelParams.from_dict(cfg_all["channel"])
    release_x = float(cfg_all.get("release_x", 0.0))
    frames = pbs.simulate(sim, ch, release_x, leap=not args.no_leap, workers=args.workers)

    out, close = _open_out(args.frames)
    try:
        out.write("t_s,bin_center_m,density_per_m\n")
        centers = [format_float(c) for c in frames.centers]
        for t, dens in frames:
            ts = format_float(t)
            for c, d in zip(centers, dens):
                out.write(f"{ts},{c},{format_float(d)}\n")
    finally:
        if close:
            out.close()

    receivers = cfg_all.get("receivers", [])
    if receivers and not args.receiver_prefix:
        log.warning("config lists receivers but --receiver-prefix was not given; skipping traces")
    elif receivers:
        for i, rx in enumerate(receivers):
            window = rx.get("window", frames.bin_width)
            trace = pbs.receiver_trace(frames, float(rx["x_rx"]), float(window))
            write_trace_csv(trace, f"{args.receiver_prefix}{i}.csv")
    return EXIT_OK


def cmd_fit_injection(args):
    meas = read_trace_csv(args.trace)
    prof = injection.extract_injection(meas, args.smooth_window)
    _dump_json(prof.to_dict(), args.out)
    return EXIT_OK


def _fit_problem(meas: Trace, inj: injection.InjectionProfile, cfg: dict) -> estimation.FitProblem:
    known = {"bounds", "init", "n_starts", "seed", "smooth_window", "max_iter", "fixed"}
    unknown = set(cfg) - known
    if unknown:
        raise LoopChannelError(f"unknown fit config keys: {sorted(unknown)}")
    init = cfg.get("init")
    if isinstance(init, dict):
        init = [init[name] for name in estimation.PARAM_NAMES]
    return estimation.FitProblem(
        measured=meas,
        injection=inj,
        bounds=estimation.FitBounds.from_dict(cfg.get("bounds", {})),
        init=init,
        n_starts=int(cfg.get("n_starts", 16)),
        seed=int(cfg.get("seed", 0)),
        smooth_window=int(cfg.get("smooth_window", 5)),
        max_iter=int(cfg.get("max_iter", 200)),
        fixed=cfg.get("fixed"),
    )


def cmd_fit_channel(args):
    meas = read_trace_csv(args.trace)
    if args.injection:
        inj = injection.InjectionProfile.from_dict(_load_json(args.injection))
    elif args.mean_trace:
        inj = injection.extract_injection(read_trace_csv(args.mean_trace), args.smooth_window)
    else:
        raise LoopChannelError("fit-channel needs --injection or --mean-trace")
    cfg = _load_json(args.config) if args.config else {}
    prob = _fit_problem(meas, inj, cfg)
    res = estimation.fit_channel(prob)
    d_res, _, summary = estimation.residual_report(res, prob)
    out = res.to_dict()
    out["injection"] = inj.to_dict()
    out["residual_summary"] = summary
    _dump_json(out, args.out)
    if args.residuals:
        write_trace_csv(d_res, args.residuals)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loopchannel", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("peaks", help="peak-time table for a channel")
    p.add_argument("--channel", required=True, help="ChannelParams JSON")
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_peaks)

    p = sub.add_parser("simulate", help="forward-model intensity trace")
    p.add_argument("--model", required=True, help="ForwardModel JSON")
    p.add_argument("--t-end", type=float, default=60.0)
    p.add_argument("--t-start", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--derivative", action="store_true", help="write dI/dt instead of I")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pbs", help="particle-based simulation")
    p.add_argument("--config", required=True, help="JSON with 'sim', 'channel', 'release_x', 'receivers'")
    p.add_argument("--frames", default="-", help="frame CSV output")
    p.add_argument("--receiver-prefix", help="receiver i is written to <prefix><i>.csv")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-leap", action="store_true", help="step every dt instead of per frame")
    p.set_defaults(func=cmd_pbs)

    p = sub.add_parser("fit-injection", help="extract raised-cosine injection")
    p.add_argument("--trace", required=True, help="mean-intensity CSV (t_s,value)")
    p.add_argument("--smooth-window", type=int, default=5)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_fit_injection)

    p = sub.add_parser("fit-channel", help="estimate channel parameters")
    p.add_argument("--trace", required=True, help="ROI intensity CSV (t_s,value)")
    p.add_argument("--injection", help="InjectionProfile JSON")
    p.add_argument("--mean-trace", help="mean-intensity CSV to extract the injection from")
    p.add_argument("--smooth-window", type=int, default=5, help="window for injection extraction")
    p.add_argument("--config", help="fit config JSON")
    p.add_argument("--out", default="-", help="FitResult JSON")
    p.add_argument("--residuals", help="derivative residual CSV")
    p.set_defaults(func=cmd_fit_channel)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage; keep 2 reserved for convergence failures.
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for diag in exc.diagnostics:
            print(f"  {diag}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (DataError, FitQualityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (LoopChannelError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
