"""smpconv command line - fit, rasterize, bench, sequence and visualize subcommands.

Every subcommand accepts `--config FILE` (JSON) and explicit flags; flags win over file values and
unknown keys abort before any compute. Exit codes: 0 success, 2 usage/config error, 1 runtime failure.
"""

import argparse
import functools
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Type, TypeVar

from pydantic import BaseModel, ValidationError

from .artifacts import load_checkpoint, save_checkpoint, write_csv
from .bench import PRESETS, cpu_microbench, write_bench_csv
from .config import DEFAULT_OUT_DIR, LOG_LEVEL
from .errors import ConfigError, SmpError
from .experiments import export_kernel_image, fit_function, make_target, run_seeds, write_fit_report
from .models.cli_models import BenchRunConfig, FitRunConfig, RasterizeRunConfig, SequenceRunConfig, VisualizeRunConfig
from .models.conv_models import BenchConfig
from .models.experiment_models import TARGET_DIMS, FitMode
from .models.smp_models import GridSpec
from .optim import init_smp, radius_for_kernel
from .sequence import pin_reference, synth_sequence_task
from .smp import rasterize

logger = logging.getLogger("smpconv")

C = TypeVar("C", bound=BaseModel)

# argparse dest -> key path in the run config
FIT_FLAGS = {
    "mode": ("mode",),
    "points": ("points",),
    "grid": ("grid",),
    "dim": ("dim",),
    "target": ("target",),
    "seeds": ("seeds",),
    "jobs": ("jobs",),
    "sigma": ("sigma",),
    "r_init": ("r_init",),
    "init": ("init",),
    "image": ("image",),
    "steps": ("train", "steps"),
    "lr": ("train", "base_lr"),
    "optimizer": ("train", "optimizer_kind"),
    "radius_lr_scale": ("train", "radius_lr_scale"),
    "weight_decay": ("train", "weight_decay"),
}
RASTERIZE_FLAGS = {"checkpoint": ("checkpoint",), "grid": ("grid",), "domain": ("domain",)}
BENCH_FLAGS = {"configs": ("configs",), "input_shape": ("input_shape",), "repetitions": ("repetitions",)}
SEQUENCE_FLAGS = {
    "seeds": ("seeds",),
    "reference": ("reference",),
    "length": ("task", "length"),
    "points": ("task", "n_points"),
    "hidden": ("task", "hidden_channels"),
    "sigma": ("task", "sigma"),
    "r_init": ("task", "r_init"),
    "steps": ("task", "train", "steps"),
    "lr": ("task", "train", "base_lr"),
    "shuffle_labels": ("task", "shuffle_labels"),
    "no_baseline": ("task", "include_baseline"),
}
VISUALIZE_FLAGS = {"checkpoint": ("checkpoint",), "grid": ("grid",), "points": ("points",), "sigma": ("sigma",), "channel": ("channel",)}


def _set_path(target: Dict[str, Any], path: Tuple[str, ...], value: Any) -> None:
    for key in path[:-1]:
        node = target.get(key)
        if not isinstance(node, dict):
            node = {}
            target[key] = node
        target = node
    target[path[-1]] = value


def load_run_config(model: Type[C], args: argparse.Namespace, flags: Dict[str, Tuple[str, ...]]) -> C:
    """Config file first, then every flag the user actually passed."""
    raw: Dict[str, Any] = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config file {args.config}: {e.strerror or e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {args.config} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")
    for dest, path in flags.items():
        value = getattr(args, dest, None)
        if value is not None:
            _set_path(raw, path, value)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out_dir is not None:
        raw["out_dir"] = args.out_dir
    raw.setdefault("out_dir", DEFAULT_OUT_DIR)
    try:
        config = model.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid {args.command} config:\n{e}") from e
    logger.info(f"Resolved {args.command} config: {config.model_dump_json()}")
    return config


def _fit_seed(cfg: FitRunConfig, seed: int) -> Tuple[int, float]:
    out_dir = Path(cfg.out_dir)
    if cfg.seeds is not None and len(cfg.seeds) > 1:
        out_dir = out_dir / f"seed_{seed}"
    train = cfg.train.model_copy(update={"seed": seed})
    if cfg.mode == FitMode.FIXED and not train.train_radii:
        logger.info("fixed mode with frozen radii: positions and radii both frozen")
    target = make_target(cfg.target, cfg.grid, dim=cfg.dim)
    report, smp = fit_function(target, cfg.mode, cfg.points, train, sigma=cfg.sigma, r_init=cfg.r_init, distribution=cfg.init)
    write_fit_report(report, out_dir)
    save_checkpoint(smp, out_dir / "checkpoint.json")
    if cfg.image:
        export_kernel_image(smp, target.grid, out_dir / "kernel.pgm")
    return seed, report.final_mse


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = load_run_config(FitRunConfig, args, FIT_FLAGS)
    if args.freeze_radii:
        cfg = cfg.model_copy(update={"train": cfg.train.model_copy(update={"train_radii": False})})
    seeds = cfg.seeds if cfg.seeds is not None else [cfg.seed]
    results = run_seeds(functools.partial(_fit_seed, cfg), seeds, cfg.jobs)
    for seed, final in results:
        logger.info(f"fit seed={seed} mode={cfg.mode.value} final_mse={final:.6g}")
    return 0


def cmd_rasterize(args: argparse.Namespace) -> int:
    cfg = load_run_config(RasterizeRunConfig, args, RASTERIZE_FLAGS)
    smp = load_checkpoint(cfg.checkpoint)
    grid = GridSpec(dim=smp.dim, extent=(cfg.grid,) * smp.dim, domain=(cfg.domain,) * smp.dim)
    values = rasterize(smp, grid).reshape(smp.channels, -1).T
    header = [f"x{i}" for i in range(smp.dim)] + [f"c{j}" for j in range(smp.channels)]
    rows = ([*coord, *vals] for coord, vals in zip(grid.coordinates, values))
    path = write_csv(Path(cfg.out_dir) / "kernel.csv", header, rows)
    logger.info(f"Rasterized {cfg.checkpoint} at extent {grid.extent} to {path}")
    return 0


def _bench_configs(names: str) -> List[BenchConfig]:
    configs: List[BenchConfig] = []
    for name in names.split(","):
        name = name.strip()
        if name in PRESETS:
            configs.extend(PRESETS[name])
            continue
        path = Path(name)
        try:
            entries = json.loads(path.read_text())
            configs.extend(BenchConfig.model_validate(e) for e in entries)
        except (OSError, json.JSONDecodeError, TypeError, ValidationError) as e:
            raise ConfigError(f"'{name}' is neither a preset ({', '.join(PRESETS)}) nor a readable list of bench configs: {e}") from e
    return configs


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = load_run_config(BenchRunConfig, args, BENCH_FLAGS)
    configs = _bench_configs(cfg.configs)
    report = cpu_microbench(configs, cfg.input_shape, cfg.repetitions, seed=cfg.seed)
    path = write_bench_csv(report, Path(cfg.out_dir) / "bench.csv")
    logger.info(f"Wrote {len(report.rows)} timing rows to {path}")
    return 0


def cmd_sequence(args: argparse.Namespace) -> int:
    cfg = load_run_config(SequenceRunConfig, args, SEQUENCE_FLAGS)
    seeds = cfg.seeds if cfg.seeds is not None else [cfg.seed]
    report = synth_sequence_task(cfg.task, seeds, model_dir=Path(cfg.out_dir) / "models")
    rows = [[r.model, r.seed, r.train_accuracy, r.test_accuracy] for r in report.results]
    path = write_csv(Path(cfg.out_dir) / "sequence_report.csv", ["model", "seed", "train_accuracy", "test_accuracy"], rows)
    logger.info(f"Sequence task finished in {report.wall_clock_s:.1f}s, report at {path}")
    if cfg.reference:
        pinned = pin_reference(report, cfg.reference)
        logger.info(f"Reference {cfg.reference}: {len(report.results) - len(pinned)} results match, {len(pinned)} newly pinned")
    return 0


def cmd_visualize(args: argparse.Namespace) -> int:
    cfg = load_run_config(VisualizeRunConfig, args, VISUALIZE_FLAGS)
    if cfg.checkpoint:
        smp = load_checkpoint(cfg.checkpoint)
    else:
        smp = init_smp(cfg.points, dim=2, channels=1, sigma=cfg.sigma, r_init=min(radius_for_kernel(cfg.grid, 2), 1.0), seed=cfg.seed)
    grid = GridSpec.square(cfg.grid, dim=2)
    image, points = export_kernel_image(smp, grid, Path(cfg.out_dir) / "kernel.pgm", channel=cfg.channel)
    logger.info(f"Wrote {image} and {points}")
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "fit": cmd_fit,
    "rasterize": cmd_rasterize,
    "bench": cmd_bench,
    "sequence": cmd_sequence,
    "visualize": cmd_visualize,
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with run parameters; flags override it")
    p.add_argument("--out-dir", dest="out_dir", help=f"directory for every output file (default: {DEFAULT_OUT_DIR})")
    p.add_argument("--seed", type=int)


def _flag(p: argparse.ArgumentParser, name: str, **kwargs) -> None:
    """Optional flag whose absence leaves the config value alone."""
    if kwargs.get("action") == "store_true":
        kwargs.update(action="store_const", const=True)
    p.add_argument(name, default=None, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smpconv", description="Self-moving point kernels: fitting, rasterization, benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a 1D or 2D target function with a moving or fixed point set")
    _common(fit)
    _flag(fit, "--mode", choices=[m.value for m in FitMode])
    _flag(fit, "--points", type=int)
    _flag(fit, "--grid", type=int, help="samples per axis of the target grid")
    _flag(fit, "--dim", type=int, choices=[1, 2])
    _flag(fit, "--target", choices=sorted(TARGET_DIMS))
    _flag(fit, "--seeds", type=int, nargs="+")
    _flag(fit, "--jobs", type=int, help="parallel worker processes for multi-seed runs")
    _flag(fit, "--sigma", type=float)
    _flag(fit, "--r-init", dest="r_init", type=float)
    _flag(fit, "--init", choices=["uniform", "gaussian"])
    _flag(fit, "--image", action="store_true", help="also export the fitted kernel as a graymap")
    _flag(fit, "--steps", type=int)
    _flag(fit, "--lr", type=float)
    _flag(fit, "--optimizer", choices=["sgd", "adam", "adamw"])
    _flag(fit, "--radius-lr-scale", dest="radius_lr_scale", type=float)
    _flag(fit, "--weight-decay", dest="weight_decay", type=float)
    fit.add_argument("--freeze-radii", dest="freeze_radii", action="store_true", help="freeze radii as well (with --mode fixed: both frozen)")

    ras = sub.add_parser("rasterize", help="sample a checkpoint at any resolution")
    _common(ras)
    _flag(ras, "--checkpoint")
    _flag(ras, "--grid", type=int)
    _flag(ras, "--domain", type=float, nargs=2, metavar=("LO", "HI"))

    bench = sub.add_parser("bench", help="CPU timing of SMP and dense convolution variants")
    _common(bench)
    _flag(bench, "--configs", help=f"comma-separated presets ({', '.join(PRESETS)}) or JSON files")
    _flag(bench, "--input-shape", dest="input_shape", type=int, nargs=2, metavar=("H", "W"))
    _flag(bench, "--repetitions", type=int)

    seq = sub.add_parser("sequence", help="synthetic first-element classification with causal kernels")
    _common(seq)
    _flag(seq, "--seeds", type=int, nargs="+")
    _flag(seq, "--reference", help="JSON file of pinned test accuracies; written on first use, checked afterwards")
    _flag(seq, "--length", type=int)
    _flag(seq, "--points", type=int)
    _flag(seq, "--hidden", type=int)
    _flag(seq, "--sigma", type=float)
    _flag(seq, "--r-init", dest="r_init", type=float)
    _flag(seq, "--steps", type=int)
    _flag(seq, "--lr", type=float)
    _flag(seq, "--shuffle-labels", dest="shuffle_labels", action="store_true")
    seq.add_argument("--no-baseline", dest="no_baseline", action="store_const", const=False, default=None)

    vis = sub.add_parser("visualize", help="export a kernel graymap and point overlay")
    _common(vis)
    _flag(vis, "--checkpoint")
    _flag(vis, "--grid", type=int)
    _flag(vis, "--points", type=int)
    _flag(vis, "--sigma", type=float)
    _flag(vis, "--channel", type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(str(e))
        print(f"smpconv {args.command}: {e}", file=sys.stderr)
        return 2
    except (SmpError, OSError) as e:
        logger.error(f"Error running {args.command}: {e}", exc_info=True)
        print(f"smpconv {args.command}: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.error(f"Unexpected error running {args.command}: {e}", exc_info=True)
        print(f"smpconv {args.command}: unexpected error: {e}", file=sys.stderr)
        return 1


def cli_main() -> None:
    """CLI entry point."""
    logging.basicConfig(level=LOG_LEVEL)
    sys.exit(main())


if __name__ == "__main__":
    cli_main()
