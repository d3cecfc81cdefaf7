"""Command-line entry point: ``mcoco {synth,train,eval,project}``.

Exit codes: 0 success, 1 usage/config/input error, 2 runtime failure (divergence).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ABLATIONS, ConfigError, RunConfig, load_config
from .data import DatasetError, SynthSpec, generate_synthetic, load_dataset, normalize_views, save_dataset
from .metrics import MetricsReport, evaluate
from .trainer import TrainingDiverged, fit, initialize, predict, train

log = logging.getLogger("mcoco")

CHECKPOINT_NAME = "checkpoint.mcoco"


class UsageError(Exception):
    pass


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _metrics_json(report: MetricsReport, ds, k, seed):
    return report.as_dict(n=ds.n_samples, k=k, m=ds.n_views, seed=seed)


def _prepare(ds, normalize: bool):
    return normalize_views(ds) if normalize else ds


def _check_compatible(state, ds):
    arch = state.net.arch
    if ds.n_views != len(arch.view_dims):
        raise UsageError(f"dataset has {ds.n_views} views, checkpoint expects {len(arch.view_dims)}")
    for i, (got, want) in enumerate(zip(ds.view_dims, arch.view_dims)):
        if got != want:
            raise UsageError(f"view {i}: dataset dimension D_{i}={got}, checkpoint expects {want}")


# --- subcommands ----------------------------------------------------------

def cmd_synth(args):
    if args.out is None:
        raise UsageError("synth needs --out DIR")
    m = args.views
    dims = _ints(args.view_dims) if args.view_dims else [20 + 10 * i for i in range(max(m, 0))]
    noise = _floats(args.noise)
    if len(noise) == 1:
        noise = noise * max(m, 1)
    spec = SynthSpec(n_samples=args.n, n_clusters=args.k, n_views=m, latent_dim=args.latent_dim,
                     view_dims=dims, noise_sigmas=noise, cluster_separation=args.separation,
                     seed=args.seed if args.seed is not None else 0)
    try:
        ds = generate_synthetic(spec)
    except DatasetError as e:
        raise UsageError(str(e)) from None
    save_dataset(ds, args.out)
    print(f"wrote {args.out}: N={ds.n_samples} m={ds.n_views} view_dims={ds.view_dims} k={ds.k_hint} seed={spec.seed}")


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.dataset:
        cfg.dataset = args.dataset
    if args.out:
        cfg.out = args.out
    if args.seed is not None:
        cfg.training.seed = args.seed
    if args.ablation:
        cfg.apply_ablation(args.ablation)
    if cfg.dataset is None:
        raise UsageError("no dataset given (config key 'dataset' or --dataset)")
    if cfg.out is None:
        raise UsageError("no output directory given (config key 'out' or --out)")
    try:
        cfg.training.validate()
    except ValueError as e:
        raise UsageError(str(e)) from None
    return cfg


def cmd_train(args):
    cfg = _run_config(args)
    ds = _prepare(load_dataset(cfg.dataset), cfg.normalize)
    if cfg.training.k > ds.n_samples:
        raise UsageError(f"k={cfg.training.k} exceeds N={ds.n_samples}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.dumps(), encoding="utf-8")

    trace_path = out / "trace.jsonl"
    if args.resume:
        state = load_checkpoint(args.resume)
        _check_compatible(state, ds)
        state.config.train_epochs = cfg.training.train_epochs
    else:
        state = initialize(ds, cfg.training)
        with open(out / "pretrain_trace.jsonl", "w", encoding="utf-8") as fh:
            for rec in state.trace.pretrain_records:
                fh.write(json.dumps(rec) + "\n")
    state.extra = {"normalize": cfg.normalize}

    with open(trace_path, "w", encoding="utf-8") as fh:
        for rec in state.trace.records:
            fh.write(json.dumps(rec) + "\n")

        def on_epoch(rec):
            fh.write(json.dumps(rec) + "\n")
            fh.flush()

        train(state, ds, on_epoch=on_epoch)

    save_checkpoint(state, out / CHECKPOINT_NAME)
    if ds.labels is not None:
        result = predict(state.net, ds)
        report = evaluate(result.fused_labels, ds.labels)
        _write_json(out / "metrics.json", _metrics_json(report, ds, state.config.k, state.config.seed))
        print(f"acc={report.acc:.4f} nmi={report.nmi:.4f} ri={report.rand_index:.4f} f={report.fscore:.4f}")
    print(f"wrote {out / CHECKPOINT_NAME} and {trace_path} ({state.epoch} epochs)")


def _load_for_inference(args):
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    state = load_checkpoint(args.checkpoint)
    dataset = args.dataset
    if dataset is None and args.config:
        dataset = load_config(args.config).dataset
    if dataset is None:
        raise UsageError("no dataset given (--dataset or config key 'dataset')")
    ds = load_dataset(dataset)
    _check_compatible(state, ds)
    return state, _prepare(ds, state.extra.get("normalize", True))


def cmd_eval(args):
    state, ds = _load_for_inference(args)
    if args.out is None:
        raise UsageError("eval needs --out DIR")
    result = predict(state.net, ds)
    if ds.labels is not None:
        report = evaluate(result.fused_labels, ds.labels)
    else:
        report = MetricsReport(None, None, None, None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else state.config.seed
    _write_json(out / "metrics.json", _metrics_json(report, ds, state.config.k, seed))
    np.savetxt(out / "labels.txt", result.fused_labels, fmt="%d")
    print(json.dumps(report.as_dict()))


def pca_2d(z: np.ndarray) -> np.ndarray:
    """Project onto the top two principal axes; each axis signed so its largest loading is positive."""
    centered = z - z.mean(0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:2]
    signs = np.sign(axes[np.arange(len(axes)), np.abs(axes).argmax(1)])
    axes = axes * signs[:, None]
    proj = centered @ axes.T
    if proj.shape[1] < 2:
        proj = np.pad(proj, ((0, 0), (0, 2 - proj.shape[1])))
    return proj


def tsne_2d(z: np.ndarray, seed: int) -> np.ndarray:
    from sklearn.manifold import TSNE

    perplexity = min(30.0, max(1.0, (len(z) - 1) / 3))
    return TSNE(n_components=2, perplexity=perplexity, init="pca", random_state=seed).fit_transform(z)


def cmd_project(args):
    state, ds = _load_for_inference(args)
    if not 0 <= args.view < ds.n_views:
        raise UsageError(f"view index {args.view} out of range [0, {ds.n_views})")
    if args.out is None:
        raise UsageError("project needs --out PATH")
    z = state.net.embed(ds.views)[args.view].astype(np.float64)
    if args.method == "pca":
        xy = pca_2d(z)
    else:
        xy = tsne_2d(z, args.seed if args.seed is not None else state.config.seed)
    fused = predict(state.net, ds).fused_labels
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"projection_view{args.view}_{args.method}.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["x", "y", "fused_label"] + (["true_label"] if ds.labels is not None else [])
        writer.writerow(header)
        for i in range(ds.n_samples):
            row = [repr(float(xy[i, 0])), repr(float(xy[i, 1])), int(fused[i])]
            if ds.labels is not None:
                row.append(int(ds.labels[i]))
            writer.writerow(row)
    print(f"wrote {out}")


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value run configuration")
    common.add_argument("--seed", type=int, help="RNG seed (unsigned)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mcoco", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic multi-view dataset")
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--views", type=int, default=2)
    p.add_argument("--latent-dim", type=int, default=4)
    p.add_argument("--view-dims", help="comma-separated feature count per view")
    p.add_argument("--noise", default="0.05", help="noise sigma, one value or one per view")
    p.add_argument("--separation", type=float, default=6.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="pretrain + joint training")
    p.add_argument("--dataset")
    p.add_argument("--ablation", choices=sorted(ABLATIONS))
    p.add_argument("--resume", help="continue from this checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="fused labels and metrics for a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("project", parents=[common], help="2-D embedding of one view's latent space")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")
    p.add_argument("--view", type=int, default=0)
    p.add_argument("--method", choices=["pca", "tsne"], default="pca")
    p.set_defaults(func=cmd_project)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(1)
    try:
        args.func(args)
    except (UsageError, ConfigError, DatasetError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
