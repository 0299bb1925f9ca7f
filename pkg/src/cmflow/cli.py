"""Command-line interface: ``cmflow estimate | metrics | synth``.

Results go to standard output as tab-separated rows; logs go to standard
error as ``key=value`` records. Settings can also come from a flat
``key=value`` file (``--config``); explicit flags take precedence.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .events import dot_pattern, generate_linear_motion_events, load_events_text, slice_by_count, write_events_text
from .exceptions import CMFlowError
from .flowrep import DenseFlow
from .io import read_flo, render_flow_color, write_flo, write_iwe_image, write_ppm
from .metrics import aee_and_outliers, eval_mask, fwl, gt_valid_mask, to_displacement
from .objective import multi_ref_focus
from .pde import SCHEMES, build_volume
from .solver import FailedSolve, SolveConfig, solve_multiscale, solve_sequence
from .warp import accumulate_iwe, warp_events, warp_events_time_aware

logger = logging.getLogger("cmflow")


@dataclass
class RunConfig:
    events: Path | None = None
    out_dir: Path | None = None
    gt: Path | None = None
    width: int = 0
    height: int = 0
    num_events: int = 30000
    keep_remainder: bool = False
    emit_iwe: bool = False
    emit_color: bool = False
    threads: int = 1
    solve: SolveConfig = field(default_factory=SolveConfig)

    def __post_init__(self):
        if (self.emit_iwe or self.emit_color) and self.out_dir is None:
            raise ValueError("--emit-iwe/--emit-color need --out-dir")


# --------------------------------------------------------------------------- config file


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _apply_config(parser, sub, argv, args):
    """Re-parse with file values installed as defaults, so flags still win."""
    values = read_config_file(args.config)
    known = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--") and action.dest not in ("help", "config"):
                known[opt[2:].replace("-", "_")] = action
    defaults = {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None:
            raise ValueError(f"unknown config key {key!r}")
        key = action.dest
        if action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*") or isinstance(action.nargs, int):
            defaults[key] = [action.type(v) if action.type else v for v in raw.split()]
        else:
            defaults[key] = action.type(raw) if action.type else raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise ValueError(f"config key {key!r}: {raw!r} not in {list(action.choices)}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------- parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _non_negative_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _add_sensor(p, required=True):
    p.add_argument("--width", type=_positive_int, required=required, help="sensor width in pixels")
    p.add_argument("--height", type=_positive_int, required=required, help="sensor height in pixels")


def _add_common(p):
    p.add_argument("--config", type=Path, help="key=value settings file (flags override it)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _add_solver(p):
    d = SolveConfig()
    p.add_argument("--scales", type=_positive_int, default=d.n_scales, help="pyramid scales")
    p.add_argument("--lambda", dest="lam", type=_non_negative_float, default=d.lam, help="TV weight")
    p.add_argument("--time-aware", dest="time_aware", choices=SCHEMES, default=d.warp_mode)
    p.add_argument("--bins", type=_positive_int, default=d.n_bins, help="time bins for transport")
    p.add_argument("--max-iters", dest="max_iters", type=_positive_int, default=d.max_iters_per_scale)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmflow", description="Dense optical flow from event slices.")
    subs = parser.add_subparsers(dest="command", required=True)

    est = subs.add_parser("estimate", help="estimate flow for each event slice")
    _add_common(est)
    est.add_argument("--events", type=Path, required=True)
    _add_sensor(est)
    est.add_argument("--num-events", type=_positive_int, default=30000, help="events per slice")
    est.add_argument("--keep-remainder", action="store_true", help="also solve a final short slice")
    _add_solver(est)
    est.add_argument("--out-dir", type=Path, required=True)
    est.add_argument("--emit-iwe", action="store_true", help="write the compensated IWE as PGM")
    est.add_argument("--emit-color", action="store_true", help="write a color-wheel PPM of the flow")
    est.add_argument("--gt", type=Path, help="ground-truth .flo (px per slice, or per --gt-dt seconds)")
    est.add_argument("--gt-dt", type=float, help="interval the ground-truth displacement spans, seconds")
    est.add_argument("--threads", type=_positive_int, default=1, help="solve slices in parallel (cold starts)")

    met = subs.add_parser("metrics", help="score predicted flow against ground truth")
    _add_common(met)
    met.add_argument("--events", type=Path, required=True)
    _add_sensor(met)
    met.add_argument("--num-events", type=_positive_int, default=30000)
    met.add_argument("--keep-remainder", action="store_true")
    met.add_argument("--pred", type=Path, nargs="+", required=True, help=".flo per slice, in order")
    met.add_argument("--gt", type=Path, required=True)
    met.add_argument("--gt-dt", type=float)
    met.add_argument("--time-aware", dest="time_aware", choices=SCHEMES, default="none")
    met.add_argument("--bins", type=_positive_int, default=5)

    syn = subs.add_parser("synth", help="write a synthetic translating scene and its ground truth")
    _add_common(syn)
    _add_sensor(syn, required=False)
    syn.set_defaults(width=64, height=64)
    syn.add_argument("--num-events", type=_positive_int, default=5000)
    syn.add_argument("--rate", type=_positive_int, default=20, help="events per active pattern pixel")
    syn.add_argument("--velocity", type=float, nargs=2, default=(8.0, 0.0), metavar=("U", "V"), help="px/s")
    syn.add_argument("--duration", type=float, default=1.0, help="seconds")
    syn.add_argument("--out-dir", type=Path, required=True)
    parser.set_defaults(_subparsers={"estimate": est, "metrics": met, "synth": syn})
    return parser


# --------------------------------------------------------------------------- helpers


def _solve_config(args) -> SolveConfig:
    return SolveConfig(
        n_scales=args.scales,
        lam=args.lam,
        max_iters_per_scale=args.max_iters,
        warp_mode=args.time_aware,
        n_bins=args.bins,
    )


def _slices(args):
    stream = load_events_text(args.events, args.width, args.height)
    slices = slice_by_count(stream, args.num_events, keep_remainder=args.keep_remainder)
    if not slices:
        raise CMFlowError(
            f"{len(stream)} events is fewer than one slice of {args.num_events}; use --keep-remainder"
        )
    return slices


def _gt_for(gt: DenseFlow, events, gt_dt):
    """Ground truth as displacement over the slice's span."""
    if gt_dt is None:
        return gt
    if not gt_dt > 0:
        raise ValueError("--gt-dt must be positive")
    return gt.scaled(events.duration / gt_dt)


def _velocity(displacement: DenseFlow, events) -> DenseFlow:
    if events.duration <= 0:
        raise CMFlowError("slice has zero duration; velocity undefined")
    return DenseFlow(displacement.uv / events.duration, events.t_mid)


def _solve_cold(events, config):
    return solve_multiscale(events, config)


def _solve_all(slices, config, threads):
    if threads == 1:
        return solve_sequence(slices, config)
    results = [None] * len(slices)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_solve_cold, ev, config) for ev in slices]
        for i, fut in enumerate(futures):
            try:
                results[i] = fut.result()
            except Exception as exc:  # noqa: BLE001 - reported per slice
                logger.warning("event=slice_failed index=%d error=%s", i, exc)
                results[i] = FailedSolve(i, exc)
    return results


def _compensated_iwe(events, flow, config):
    if config.warp_mode == "none":
        warped = warp_events(events, flow, events.t_mid)
    else:
        volume = build_volume(flow, events, config.n_bins, config.warp_mode)
        warped = warp_events_time_aware(events, volume, events.t_mid)
    return accumulate_iwe(warped, events.width, events.height, config.sigma)


def _row(values):
    return "\t".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in values)


# --------------------------------------------------------------------------- subcommands


def cmd_estimate(args) -> int:
    run = RunConfig(
        events=args.events,
        out_dir=args.out_dir,
        gt=args.gt,
        width=args.width,
        height=args.height,
        num_events=args.num_events,
        keep_remainder=args.keep_remainder,
        emit_iwe=args.emit_iwe,
        emit_color=args.emit_color,
        threads=args.threads,
        solve=_solve_config(args),
    )
    slices = _slices(args)
    run.out_dir.mkdir(parents=True, exist_ok=True)
    gt = read_flo(run.gt) if run.gt else None
    logger.info("event=start slices=%d n=%d threads=%d", len(slices), run.num_events, run.threads)

    header = ["slice", "n_events", "t_first", "t_last", "f", "fwl", "iterations"]
    if gt is not None:
        header += ["aee", "pct_out"]
    print("\t".join(header))
    ok = True
    t0 = time.perf_counter()
    for i, (events, res) in enumerate(zip(slices, _solve_all(slices, run.solve, run.threads))):
        if isinstance(res, FailedSolve):
            ok = False
            continue
        flow = res.dense
        row = [i, len(events), events.t_first, events.t_last, res.report.f]
        try:
            row.append(fwl(events, flow, run.solve.warp_mode, run.solve.n_bins, run.solve.sigma))
        except CMFlowError as exc:
            logger.warning("event=fwl_undefined index=%d error=%s", i, exc)
            row.append(float("nan"))
        row.append(res.total_iterations)
        disp = to_displacement(flow, events.duration)
        try:
            write_flo(disp, run.out_dir / f"flow_{i:05d}.flo")
            if run.emit_iwe:
                write_iwe_image(_compensated_iwe(events, flow, run.solve), run.out_dir / f"iwe_{i:05d}.pgm")
            if run.emit_color:
                write_ppm(render_flow_color(disp), run.out_dir / f"color_{i:05d}.ppm")
        except OSError as exc:
            logger.error("event=write_failed index=%d error=%s", i, exc)
            ok = False
        if gt is not None:
            g = _gt_for(gt, events, args.gt_dt)
            aee, out = aee_and_outliers(disp, g, eval_mask(events, gt_valid_mask(g)))
            row += [aee, out]
        print(_row(row), flush=True)
    logger.info("event=done seconds=%.3f ok=%s", time.perf_counter() - t0, ok)
    return 0 if ok else 1


def cmd_metrics(args) -> int:
    slices = _slices(args)
    if len(args.pred) != len(slices):
        raise CMFlowError(f"{len(args.pred)} prediction files for {len(slices)} slices")
    gt = read_flo(args.gt)
    print("\t".join(["slice", "aee", "pct_out", "fwl"]))
    for i, (events, path) in enumerate(zip(slices, args.pred)):
        pred = read_flo(path)
        g = _gt_for(gt, events, args.gt_dt)
        aee, out = aee_and_outliers(pred, g, eval_mask(events, gt_valid_mask(g)))
        score = fwl(events, _velocity(pred, events), args.time_aware, args.bins)
        print(_row([i, aee, out, score]))
    return 0


def cmd_synth(args) -> int:
    u, v = args.velocity
    mx = int(np.ceil(abs(u) * args.duration)) + 1
    my = int(np.ceil(abs(v) * args.duration)) + 1
    margin = (mx if u < 0 else 1, mx if u > 0 else 1, my if v < 0 else 1, my if v > 0 else 1)
    n_dots = max(1, args.num_events // args.rate)
    pattern = dot_pattern(args.width, args.height, n_dots, margin=margin, seed=args.seed)
    events, gt = generate_linear_motion_events(pattern, (u, v), args.duration, args.rate, seed=args.seed + 1)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_events_text(events, args.out_dir / "events.txt")
    write_flo(to_displacement(gt, args.duration), args.out_dir / "gt.flo")
    f_true = multi_ref_focus(events, gt).f
    print("\t".join(["n_events", "t_first", "t_last", "f_true"]))
    print(_row([len(events), events.t_first, events.t_last, f_true]))
    return 0


COMMANDS = {"estimate": cmd_estimate, "metrics": cmd_metrics, "synth": cmd_synth}


def _configure_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("level=%(levelname)s logger=%(name)s %(message)s"))
    root = logging.getLogger("cmflow")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        sub = args._subparsers[args.command]
        try:
            args = _apply_config(parser, sub, argv, args)
        except (OSError, ValueError) as exc:
            parser.error(f"--config: {exc}")
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (CMFlowError, ValueError, OSError) as exc:
        logger.error("event=failed command=%s error=%s", args.command, str(exc).replace("\n", " "))
        return 1


if __name__ == "__main__":
    sys.exit(main())
