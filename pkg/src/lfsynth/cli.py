"""``lfsynth`` command line: gen, train, synth, eval, gradcheck.

Exit codes: 0 success, 1 check or run failure, 2 usage error.
"""
import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gradcheck as gc
from .evaluation import METHODS, evaluate
from .lfio import LFIOError, load_lightfield, save_image
from .nets import DEFAULT_WIDTHS, init_model, load_model, save_model
from .parallel import Workers, default_threads
from .pipeline import synthesize
from .sweep import SweepConfig
from .synthgen import load_dataset, make_dataset
from .train import DESK_ITERATIONS, STAGES, TrainConfig, TrainingData, TrainingDiverged, train

log = logging.getLogger("lfsynth")


class UsageError(Exception):
    """Bad arguments or missing inputs; reported with exit code 2."""


@dataclass
class RunConfig:
    command: str
    paths: dict = field(default_factory=dict)
    sweep: SweepConfig = None
    train: TrainConfig = None
    seed: int = 0
    deterministic: bool = False
    threads: int = 1

    def workers(self) -> Workers:
        return Workers(self.threads, self.deterministic)


# ---------------------------------------------------------------------------
# argument types

def _non_negative(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _float_pair(text):
    try:
        a, b = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return a, b


def _int_list(text):
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _rates(text):
    try:
        parts = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if len(parts) not in (1, len(STAGES)):
        raise argparse.ArgumentTypeError(
            f"--lr takes one rate or {len(STAGES)} comma-separated rates, got {text!r}")
    return parts


def _iters(text):
    parts = _int_list(text)
    if any(p < 0 for p in parts) or len(parts) not in (1, len(STAGES)):
        raise argparse.ArgumentTypeError(
            f"--iters takes one count or {len(STAGES)} comma-separated counts, got {text!r}")
    return parts


def _check_sweep(args) -> SweepConfig:
    try:
        return SweepConfig(args.levels, args.dmin, args.dmax)
    except ValueError as exc:
        raise UsageError(str(exc))


# ---------------------------------------------------------------------------
# commands

def cmd_gen(cfg: RunConfig, args) -> int:
    out = make_dataset(args.out, args.count, size=args.size, seed=cfg.seed, grid_size=args.grid,
                       noise_sigma=args.noise, disparity_range=args.disparity_range)
    print(f"wrote {args.count} light fields to {out}")
    return 0


def _load_data(path):
    path = Path(path)
    if not (path / "manifest.json").exists():
        raise UsageError(f"no dataset manifest in {path}")
    return load_dataset(path)


def _iteration_budgets(args) -> dict:
    if args.iters is None:
        return dict(DESK_ITERATIONS)
    if len(args.iters) == 1:
        return {s: args.iters[0] for s in STAGES}
    return dict(zip(STAGES, args.iters))


def cmd_train(cfg: RunConfig, args) -> int:
    lightfields = _load_data(args.data)
    if args.init:
        model = _load_model(args.init)
        if model.sweep != cfg.sweep:
            log.info("using the sweep stored in %s", args.init)
    else:
        if not lightfields:
            raise UsageError("dataset is empty")
        model = init_model(cfg.sweep, lightfields[0].grid_size, args.widths, seed=cfg.seed,
                           color_widths=args.color_widths)
    tcfg = cfg.train
    tcfg.sweep = model.sweep
    out = Path(args.out)
    rng = np.random.default_rng(cfg.seed)
    metrics_path = Path(args.metrics) if args.metrics else out.with_suffix(".metrics.txt")

    def snapshot(stage, m):
        if args.save_stages:
            save_model(m, out.with_suffix(f".{stage}.lfnn"))

    with cfg.workers() as workers, open(metrics_path, "w", buffering=1) as metrics:
        try:
            data = TrainingData(lightfields, model.sweep, rng, tcfg.positions_per_lf, tcfg.patch,
                                tcfg.stride, model.margin, workers)
        except ValueError as exc:
            raise UsageError(str(exc))
        try:
            train(model, data, tcfg, rng, workers, metrics, snapshot)
        except TrainingDiverged as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    save_model(model, out)
    print(f"wrote {out} and {metrics_path}")
    return 0


def _load_model(path):
    try:
        return load_model(path)
    except FileNotFoundError:
        raise UsageError(f"model file {path} not found")
    except ValueError as exc:
        raise UsageError(f"cannot read model {path}: {exc}")


def cmd_synth(cfg: RunConfig, args) -> int:
    model = _load_model(args.model)
    try:
        lf = load_lightfield(args.lf, with_disparity=False)
    except LFIOError as exc:
        raise UsageError(str(exc))
    try:
        img, disp = synthesize(model, lf, args.view)
    except ValueError as exc:
        raise UsageError(str(exc))
    out = Path(args.out)
    if out.suffix != ".lfv":
        out = out.with_suffix(".lfv")
    save_image(img, out)
    save_image(img, out.with_suffix(".ppm"))
    if args.disparity_out:
        save_image(disp, args.disparity_out)
    print(f"wrote {out} and {out.with_suffix('.ppm')} ({img.shape[1]}x{img.shape[0]}, "
          f"{model.margin}px border trimmed)")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    methods = ["ours"] if args.model else []
    if args.baselines:
        methods += [m for m in METHODS if m != "ours"]
    if not methods:
        raise UsageError("nothing to evaluate: pass --model and/or --baselines")
    model = _load_model(args.model) if args.model else None
    lightfields = _load_data(args.data)
    with cfg.workers() as workers:
        report = evaluate(model, lightfields, args.views, methods, sweep=cfg.sweep,
                          border=args.border, workers=workers)
    report.write_json(args.report)
    if args.csv:
        report.write_csv(args.csv)
    for method, agg in report.aggregates.items():
        band = "n/a" if agg["psnr_band"] is None else f"{agg['psnr_band']:.2f}"
        print(f"{method:<10} psnr {agg['psnr']:.2f} dB  ssim {agg['ssim']:.4f}  "
              f"band psnr {band}  ({agg['views']} views)")
    if not all(np.isfinite(a["psnr"]) for a in report.aggregates.values()):
        return 1
    return 0


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    results = gc.run_all(cfg.seed, args.precision, args.perturb_backward)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if failed:
        worst = max(failed, key=lambda r: r.error / r.tol)
        print(f"gradcheck failed: worst offender {worst.name} ({worst.error:.3e})")
        return 1
    print("gradcheck passed")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "synth": cmd_synth, "eval": cmd_eval,
            "gradcheck": cmd_gradcheck}


# ---------------------------------------------------------------------------
# parser

def _views(text):
    try:
        return [tuple(int(c) for c in v.split(",")) for v in text.split(";") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'u,v;u,v;...', got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive, default=default_threads(),
                        help="worker threads (default: $LFSYNTH_THREADS or 1)")
    common.add_argument("--deterministic", action="store_true",
                        help="fixed reduction order and single-threaded BLAS")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    sweep = argparse.ArgumentParser(add_help=False)
    defaults = SweepConfig()
    sweep.add_argument("--levels", type=int, default=defaults.levels, help="disparity levels L")
    sweep.add_argument("--dmin", type=float, default=defaults.d_min)
    sweep.add_argument("--dmax", type=float, default=defaults.d_max)

    parser = argparse.ArgumentParser(prog="lfsynth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate synthetic light fields")
    p.add_argument("--count", type=_non_negative, default=20)
    p.add_argument("--size", type=_positive, default=128)
    p.add_argument("--grid", type=_positive, default=8)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--disparity-range", type=_float_pair, default=(-1.5, 1.5),
                   help="scene layer disparities lo,hi (pixels per view step)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common, sweep], help="train the two networks")
    p.add_argument("--data", required=True)
    p.add_argument("--stage", choices=("all",) + STAGES, default="all")
    p.add_argument("--iters", type=_iters, default=None,
                   help="iterations per stage: one count, or disparity,color,joint "
                        f"(default {','.join(str(DESK_ITERATIONS[s]) for s in STAGES)})")
    p.add_argument("--batch", type=_positive, default=20)
    p.add_argument("--lr", type=_rates, default=(1e-4,),
                   help="ADAM learning rate: one value, or disparity,color,joint")
    p.add_argument("--widths", type=_int_list, default=DEFAULT_WIDTHS,
                   help="hidden channel widths of a freshly initialised model")
    p.add_argument("--color-widths", type=_int_list, default=None,
                   help="hidden widths of the colour network (default: same as --widths)")
    p.add_argument("--patch", type=_positive, default=60)
    p.add_argument("--stride", type=_positive, default=16)
    p.add_argument("--positions", type=_positive, default=4,
                   help="novel views sampled per light field")
    p.add_argument("--jacobian-step", type=float, default=0.01)
    p.add_argument("--init", help="start from this model instead of a fresh one")
    p.add_argument("--out", default="model.lfnn")
    p.add_argument("--metrics", help="loss log path (default: <out>.metrics.txt)")
    p.add_argument("--save-stages", action="store_true",
                   help="also write <out>.<stage>.lfnn after every stage")

    p = sub.add_parser("synth", parents=[common], help="synthesize one novel view")
    p.add_argument("--model", required=True)
    p.add_argument("--lf", required=True)
    p.add_argument("--view", type=_float_pair, required=True, help="u,v (fractional allowed)")
    p.add_argument("--out", required=True, help="output .lfv; a .ppm preview is written beside it")
    p.add_argument("--disparity-out")

    p = sub.add_parser("eval", parents=[common, sweep], help="score held-out views")
    p.add_argument("--model")
    p.add_argument("--data", required=True)
    p.add_argument("--report", default="report.json")
    p.add_argument("--csv")
    p.add_argument("--baselines", action="store_true", help="also score wta-blend and nearest")
    p.add_argument("--views", type=_views, default=None,
                   help="'u,v;u,v;...' (default: every non-corner view)")
    p.add_argument("--border", type=_non_negative, default=12)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    p.add_argument("--precision", choices=("double", "single"), default="double")
    p.add_argument("--perturb-backward", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def make_run_config(args) -> RunConfig:
    cfg = RunConfig(args.command, seed=args.seed, deterministic=args.deterministic,
                    threads=args.threads)
    if hasattr(args, "levels"):
        cfg.sweep = _check_sweep(args)
    if args.command == "train":
        stages = STAGES if args.stage == "all" else (args.stage,)
        lr = args.lr[0] if len(args.lr) == 1 else dict(zip(STAGES, args.lr))
        try:
            cfg.train = TrainConfig(batch_size=args.batch, iterations=_iteration_budgets(args),
                                    lr=lr, seed=args.seed, sweep=cfg.sweep,
                                    jacobian_step=args.jacobian_step, stages=stages,
                                    patch=args.patch, stride=args.stride,
                                    positions_per_lf=args.positions)
        except ValueError as exc:
            raise UsageError(str(exc))
    cfg.paths = {k: getattr(args, k) for k in ("data", "out", "model", "lf", "report")
                 if getattr(args, k, None)}
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_run_config(args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lfsynth {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
