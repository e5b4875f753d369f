"""``layoutdiff`` command line: synth, train, sample, inpaint, eval, bench."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ENGINES, SCENARIOS, BenchConfig, ConfigError, load_config, write_resolved
from .layout import DimSpec, categorical_to_stack, component_names
from .metrics import evaluate
from .pgm import read_field, read_stack
from .synth import generate_dataset, load_dataset, save_dataset
from .training import TrainingDiverged, train

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--engine", choices=ENGINES)
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--guidance-w", type=float)
    p.add_argument("--paper-scale", action="store_true", help="use the full-size sample counts")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layoutdiff", description="Diffusion models for cross-section layouts.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic layout dataset")
    _common(p)
    p.add_argument("--n-samples", type=int)

    p = sub.add_parser("train", help="train a denoiser on a dataset")
    _common(p)
    p.add_argument("--data", help="dataset directory (generated from the config if omitted)")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("sample", help="unconditional or dimension-guided sampling")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-n", type=int, default=16)
    p.add_argument("--width", type=int, help="target width in pixels")
    p.add_argument("--height", type=int, help="target height in pixels")

    p = sub.add_parser("inpaint", help="complete a layout from one observed component")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--source", type=int, default=0, help="position within the test split")
    p.add_argument("--component", default="carcass")
    p.add_argument("-n", type=int, default=16)

    p = sub.add_parser("eval", help="score a sample directory against a dataset's test split")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--samples", required=True, help="directory written by 'sample'")

    p = sub.add_parser("bench", help="dataset, training and one scenario end to end")
    _common(p)
    p.add_argument("--data", help="reuse a dataset directory")
    p.add_argument("--checkpoint", help="reuse a checkpoint")
    return parser


def resolve_config(args) -> BenchConfig:
    cfg = load_config(args.config) if args.config else BenchConfig()
    for flag, attr in (("seed", "seed"), ("engine", "engine"), ("scenario", "scenario"),
                       ("guidance_w", "guidance_w"), ("workers", "workers")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, value)
    if args.paper_scale:
        cfg.paper_scale = True
    if getattr(args, "data", None):
        cfg.data_dir = args.data
    if getattr(args, "checkpoint", None):
        cfg.checkpoint = args.checkpoint
    if args.seed is not None:
        cfg.data.seed = args.seed
        cfg.train.seed = args.seed
    if getattr(args, "n_samples", None) is not None:
        cfg.data.n_samples = args.n_samples
    if getattr(args, "epochs", None) is not None:
        cfg.train.epochs = args.epochs
    cfg.validate()
    return cfg


def cmd_synth(cfg, args, out: Path) -> None:
    ds = generate_dataset(cfg.data)
    save_dataset(ds, out)
    print(f"wrote {len(ds)} samples to {out}")


def cmd_train(cfg, args, out: Path) -> None:
    ds = bench.prepare_dataset(cfg, out)
    ckpt = train(ds, cfg.engine, cfg.train)
    path = save_checkpoint(ckpt, out / "checkpoint.bin")
    print(f"wrote {path} (final loss {ckpt.loss_trace[-1]:.6g})")


def cmd_sample(cfg, args, out: Path) -> None:
    ckpt = load_checkpoint(cfg.checkpoint)
    targets, w = None, None
    if (args.width is None) != (args.height is None):
        raise ConfigError("--width and --height go together")
    if args.width is not None:
        targets = [DimSpec(args.width, args.height)] * args.n
        w = cfg.guidance_w
    gen = bench.generate(ckpt, args.n, seed=cfg.seed, workers=cfg.workers, chunk_size=cfg.chunk_size,
                         condition=targets, guidance_w=w)
    bench.write_samples(out, gen, ckpt.engine, bench.sidecar(ckpt, cfg.seed, args.n, guidance_w=w, targets=targets))
    print(f"wrote {args.n} samples to {out}")


def cmd_inpaint(cfg, args, out: Path) -> None:
    ckpt = load_checkpoint(cfg.checkpoint)
    ds = load_dataset(cfg.data_dir)
    names = component_names(ds.config.M)
    if args.component not in names:
        raise ConfigError(f"unknown component {args.component!r}; choose from {', '.join(names)}")
    if not 0 <= args.source < len(ds.test_idx):
        raise ConfigError(f"--source must index the test split (0..{len(ds.test_idx) - 1})")
    ci = names.index(args.component)
    field = ds.fields[ds.test_idx[args.source]]
    if ckpt.engine == "mdm":
        gen = bench.generate(ckpt, args.n, seed=cfg.seed, workers=cfg.workers, chunk_size=cfg.chunk_size,
                             observed=field, mask=field == ci + 1)
    else:
        gen = bench.generate(ckpt, args.n, seed=cfg.seed, workers=cfg.workers, chunk_size=cfg.chunk_size,
                             observed=categorical_to_stack(field, ds.config.M),
                             channel_mask=np.arange(ds.config.M) == ci)
    spec = {"component": args.component, "source": int(ds.test_idx[args.source])}
    bench.write_samples(out, gen, ckpt.engine, bench.sidecar(ckpt, cfg.seed, args.n, mask_spec=spec))
    print(f"wrote {args.n} completions to {out}")


def read_samples(directory):
    directory = Path(directory)
    meta = json.loads((directory / "sidecar.json").read_text())
    if meta["engine"] == "mdm":
        samples = [read_field(directory / f"{i:06d}.pgm") for i in range(meta["n"])]
    else:
        samples = [read_stack(directory / f"{i:06d}", meta["M"]) for i in range(meta["n"])]
    return meta, samples


def cmd_eval(cfg, args, out: Path) -> None:
    ds = load_dataset(cfg.data_dir)
    meta, gen = read_samples(args.samples)
    targets = None if meta.get("targets") is None else [DimSpec(*d) for d in meta["targets"]]
    real = bench._real_set(ds, meta["engine"])
    scenario = cfg.scenario if targets is None or cfg.scenario.startswith("dimension") else "dimension_constrained_id"
    report = evaluate(scenario, real, gen, ds.config.M, cfg.seed, with_iou=meta["engine"] == "ddpm",
                      with_frechet=scenario != "dimension_constrained_ood", targets=targets)
    write_resolved(cfg, out / "config.resolved.toml")
    bench.write_report(report.to_dict(), out)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))


def cmd_bench(cfg, args, out: Path) -> None:
    bench.run_bench(cfg, out)
    print(f"wrote {out / 'report.json'}")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "sample": cmd_sample, "inpaint": cmd_inpaint,
            "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
