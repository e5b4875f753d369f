"""The three generation scenarios: sampling, metric evaluation, report files."""

import json
import logging
from pathlib import Path

import numpy as np

from . import ddpm, mdm
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import SHOWCASE_TARGETS, BenchConfig, ConfigError, write_resolved
from .hull import build_hull, classify_dim, sample_ood_targets
from .layout import DimSpec, categorical_to_stack, component_names
from .metrics import dim_err, evaluate
from .pgm import write_field, write_stack
from .synth import Dataset, generate_dataset, load_dataset, save_dataset
from .training import train

log = logging.getLogger(__name__)


def derive_seed(seed: int, *keys: int) -> int:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# -- sampling ---------------------------------------------------------------------

def generate(ckpt: Checkpoint, n: int, *, seed: int, workers: int = 1, chunk_size: int = 16,
             condition=None, guidance_w=None, observed=None, mask=None, channel_mask=None, denoiser=None):
    """Sample ``n`` layouts with either engine: fields for MDM, stacks for DDPM."""
    net = denoiser if denoiser is not None else ckpt.denoiser()
    a = ckpt.arch
    if ckpt.engine == "mdm":
        return mdm.sample(net, ckpt.schedule, n, K=a.in_channels, H=a.H, W=a.W, condition=condition,
                          guidance_w=guidance_w, mask=mask, observed=observed, seed=seed,
                          chunk_size=chunk_size, workers=workers)
    return ddpm.sample(net, ckpt.schedule, n, M=a.in_channels, H=a.H, W=a.W, condition=condition,
                       guidance_w=guidance_w, observed=observed, channel_mask=channel_mask, seed=seed,
                       chunk_size=chunk_size, workers=workers)


def write_samples(directory, samples, engine: str, sidecar: dict) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, x in enumerate(samples):
        if engine == "mdm":
            write_field(directory / f"{i:06d}.pgm", x)
        else:
            write_stack(directory / f"{i:06d}", x)
    (directory / "sidecar.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def sidecar(ckpt: Checkpoint, seed: int, n: int, guidance_w=None, targets=None, mask_spec=None) -> dict:
    return {
        "engine": ckpt.engine,
        "seed": seed,
        "n": n,
        "M": ckpt.arch.in_channels - (1 if ckpt.engine == "mdm" else 0),
        "H": ckpt.arch.H,
        "W": ckpt.arch.W,
        "t_schedule": {"kind": ckpt.schedule.kind, "T": ckpt.schedule.T},
        "guidance_w": guidance_w,
        "targets": None if targets is None else [list(d.as_tuple()) for d in targets],
        "mask": mask_spec,
    }


def _real_set(ds: Dataset, engine: str):
    fields, _ = ds.subset(ds.test_idx)
    if engine == "mdm":
        return fields
    return [categorical_to_stack(f, ds.config.M) for f in fields]


# -- scenarios --------------------------------------------------------------------

def run_unconditional(cfg: BenchConfig, ckpt: Checkpoint, ds: Dataset, out) -> dict:
    n = cfg.counts()["n_unconditional"]
    gen = generate(ckpt, n, seed=cfg.seed, workers=cfg.workers, chunk_size=cfg.chunk_size)
    write_samples(Path(out) / "samples", gen, ckpt.engine, sidecar(ckpt, cfg.seed, n))
    report = evaluate("unconditional", _real_set(ds, ckpt.engine), list(gen), ds.config.M, cfg.seed,
                      with_iou=ckpt.engine == "ddpm", with_frechet=True)
    return report.to_dict()


def run_component_conditioned(cfg: BenchConfig, ckpt: Checkpoint, ds: Dataset, out) -> dict:
    """Inpaint every other component from one observed component, per conditioning choice."""
    M = ds.config.M
    names = component_names(M)
    per_cond = cfg.counts()["n_per_condition"]
    sources = list(ds.test_idx)
    if cfg.max_condition_sources is not None:
        sources = sources[: cfg.max_condition_sources]
    real = _real_set(ds, ckpt.engine)
    net = ckpt.denoiser()
    per_component, skipped = {}, []
    for cname in cfg.condition_components:
        if cname not in names:
            skipped.append(cname)
            continue
        ci = names.index(cname)
        gen, violations = [], 0
        for s_num, src in enumerate(sources):
            field = ds.fields[src]
            seed = derive_seed(cfg.seed, ci, s_num)
            if ckpt.engine == "mdm":
                mask = field == ci + 1
                out_s = generate(ckpt, per_cond, seed=seed, workers=cfg.workers, chunk_size=cfg.chunk_size,
                                 observed=field, mask=mask, denoiser=net)
                violations += int(np.sum(out_s[:, mask] != field[mask]))
            else:
                stack = categorical_to_stack(field, M)
                channel_mask = np.arange(M) == ci
                out_s = generate(ckpt, per_cond, seed=seed, workers=cfg.workers, chunk_size=cfg.chunk_size,
                                 observed=stack, channel_mask=channel_mask, denoiser=net)
                violations += int(np.sum(out_s[:, ci] != stack[ci]))
            write_samples(Path(out) / "samples" / cname / f"source_{int(src):06d}", out_s, ckpt.engine,
                          sidecar(ckpt, seed, per_cond, mask_spec={"component": cname, "source": int(src)}))
            gen.extend(out_s)
        report = evaluate("component_conditioned", real, gen, M, cfg.seed,
                          with_iou=ckpt.engine == "ddpm", with_frechet=True)
        report.extra["observed_freeze_violations"] = violations
        report.extra["conditioning_component"] = cname
        per_component[cname] = report.to_dict()
    return {
        "scenario": "component_conditioned",
        "seed": cfg.seed,
        "n_sources": len(sources),
        "n_per_condition": per_cond,
        "skipped_components": skipped,
        "per_component": per_component,
    }


def run_dimension_constrained(cfg: BenchConfig, ckpt: Checkpoint, ds: Dataset, out, ood: bool) -> dict:
    counts = cfg.counts()
    train_dims = [ds.dims[i] for i in ds.train_idx]
    hull = build_hull(train_dims)
    if ood:
        from .rng import substream

        n = counts["n_ood"]
        targets = sample_ood_targets(hull, n, DimSpec(ds.config.W, ds.config.H), substream(cfg.seed, "ood-targets"))
    else:
        n = counts["n_id"]
        test_dims = [ds.dims[i] for i in ds.test_idx]
        targets = [test_dims[i % len(test_dims)] for i in range(n)]
    gen = generate(ckpt, n, seed=cfg.seed, workers=cfg.workers, chunk_size=cfg.chunk_size,
                   condition=targets, guidance_w=cfg.guidance_w)
    scenario = "dimension_constrained_ood" if ood else "dimension_constrained_id"
    write_samples(Path(out) / "samples", gen, ckpt.engine,
                  sidecar(ckpt, cfg.seed, n, guidance_w=cfg.guidance_w, targets=targets))
    report = evaluate(scenario, _real_set(ds, ckpt.engine), list(gen), ds.config.M, cfg.seed,
                      with_iou=False, with_frechet=not ood, targets=targets)
    report.extra["guidance_w"] = cfg.guidance_w
    if not ood and cfg.n_showcase:
        report.extra["showcase"] = run_showcase(cfg, ckpt, ds)
    report.extra["hull_vertices"] = [list(v) for v in hull.vertices]
    report.extra["targets_outside_hull"] = sum(classify_dim(hull, d) == "OOD" for d in targets)
    return report.to_dict()


def run_showcase(cfg: BenchConfig, ckpt: Checkpoint, ds: Dataset) -> list:
    """Fixed reference targets, scored one by one; skipped when they exceed the grid."""
    H, W = ds.config.H, ds.config.W
    rows = []
    for k, (w, h) in enumerate(SHOWCASE_TARGETS):
        if w > W or h > H:
            continue
        target = DimSpec(w, h)
        gen = generate(ckpt, cfg.n_showcase, seed=derive_seed(cfg.seed, 1000 + k), workers=cfg.workers,
                       chunk_size=cfg.chunk_size, condition=[target] * cfg.n_showcase, guidance_w=cfg.guidance_w)
        errs = [dim_err(target, g) for g in gen]
        rows.append({"target": [w, h], "n": cfg.n_showcase, "dim_err_mean": float(np.mean(errs))})
    return rows


def run_scenario(cfg: BenchConfig, ckpt: Checkpoint, ds: Dataset, out) -> dict:
    if ckpt.engine != cfg.engine:
        raise ConfigError(f"checkpoint engine {ckpt.engine!r} does not match configured engine {cfg.engine!r}")
    if cfg.scenario == "unconditional":
        return run_unconditional(cfg, ckpt, ds, out)
    if cfg.scenario == "component_conditioned":
        return run_component_conditioned(cfg, ckpt, ds, out)
    return run_dimension_constrained(cfg, ckpt, ds, out, ood=cfg.scenario.endswith("ood"))


# -- composition ------------------------------------------------------------------

def prepare_dataset(cfg: BenchConfig, out) -> Dataset:
    if cfg.data_dir is not None:
        return load_dataset(cfg.data_dir)
    ds = generate_dataset(cfg.data)
    save_dataset(ds, Path(out) / "dataset")
    return ds


def prepare_checkpoint(cfg: BenchConfig, ds: Dataset, out) -> Checkpoint:
    if cfg.checkpoint is not None:
        return load_checkpoint(cfg.checkpoint)
    ckpt = train(ds, cfg.engine, cfg.train)
    save_checkpoint(ckpt, Path(out) / "checkpoint.bin")
    return ckpt


def write_report(report: dict, out) -> Path:
    path = Path(out) / "report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path


def run_bench(cfg: BenchConfig, out) -> dict:
    """Dataset -> checkpoint -> scenario -> ``report.json`` + ``config.resolved.toml``."""
    cfg.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out / "config.resolved.toml")
    ds = prepare_dataset(cfg, out)
    log.info("dataset: %d samples (%d train / %d test)", len(ds), len(ds.train_idx), len(ds.test_idx))
    ckpt = prepare_checkpoint(cfg, ds, out)
    log.info("checkpoint: %s engine, %d parameters", ckpt.engine, ckpt.header()["n_parameters"])
    report = run_scenario(cfg, ckpt, ds, out)
    log.info("scenario %s done", cfg.scenario)
    write_report(report, out)
    return report
