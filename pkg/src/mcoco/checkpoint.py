"""Checkpoint archive: a zip holding ``meta.json``, every tensor as a binary
matrix (uint32 rows, uint32 cols, then little-endian float32, row-major),
the joint optimizer's moments and the training traces.

Vectors are stored as 1 x n matrices; true shapes live in ``meta.json``.
"""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .data import DatasetError, read_matrix, write_matrix
from .model import Architecture, MCoCoNet
from .trainer import TrainingConfig, TrainingTrace, TrainState, _adam

CHECKPOINT_VERSION = "1"


class CheckpointError(ValueError):
    pass


def _matrix_bytes(t: torch.Tensor) -> bytes:
    a = t.detach().cpu().numpy().astype(np.float32)
    a = a.reshape(1, -1) if a.ndim < 2 else a.reshape(a.shape[0], -1)
    buf = io.BytesIO()
    write_matrix(buf, a)
    return buf.getvalue()


def _tensor(buf: bytes, name: str, shape) -> torch.Tensor:
    try:
        mat = read_matrix(buf, name)
    except DatasetError as e:
        raise CheckpointError(str(e)) from None
    if mat.size != int(np.prod(shape)):
        raise CheckpointError(f"{name}: holds {mat.size} values, expected shape {shape}")
    return torch.from_numpy(mat.reshape(shape).copy())


def _jsonl(records):
    return "".join(json.dumps(r) + "\n" for r in records)


def save_checkpoint(state: TrainState, path) -> None:
    net = state.net
    params = dict(net.state_dict())
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "architecture": net.arch.to_dict(),
        "config": state.config.to_dict(),
        "epoch": state.epoch,
        "rng_state": None if state.rng is None else state.rng.bit_generator.state,
        "tensors": {name: list(t.shape) for name, t in params.items()},
        "optimizer_steps": None,
        "extra": state.extra,
    }
    files = {f"params/{name}.bin": _matrix_bytes(t) for name, t in params.items()}

    if state.optimizer is not None:
        steps = {}
        opt_state = state.optimizer.state
        for i, p in enumerate(net.parameters()):
            st = opt_state.get(p)
            if not st:
                continue
            steps[str(i)] = float(st["step"])
            files[f"optim/{i}.exp_avg.bin"] = _matrix_bytes(st["exp_avg"])
            files[f"optim/{i}.exp_avg_sq.bin"] = _matrix_bytes(st["exp_avg_sq"])
        meta["optimizer_steps"] = steps

    trace = state.trace
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("meta.json", json.dumps(meta, indent=2))
        zf.writestr("architecture.json", json.dumps(net.arch.to_dict(), indent=2))
        for name, data in files.items():
            zf.writestr(name, data)
        if trace is not None:
            zf.writestr("trace.jsonl", _jsonl(trace.records))
            zf.writestr("pretrain_trace.jsonl", _jsonl(trace.pretrain_records))
    tmp.replace(path)


def load_checkpoint(path) -> TrainState:
    """Rebuild network, centroids, config, optimizer moments, RNG and trace."""
    path = Path(path)
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, FileNotFoundError, IsADirectoryError) as e:
        raise CheckpointError(f"{path}: not a readable checkpoint archive ({e})") from None
    with zf:
        names = set(zf.namelist())
        if "meta.json" not in names:
            raise CheckpointError(f"{path}: missing meta.json")
        try:
            meta = json.loads(zf.read("meta.json"))
        except json.JSONDecodeError as e:
            raise CheckpointError(f"{path}: corrupt meta.json at offset {e.pos}") from None
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: checkpoint format_version {meta.get('format_version')!r}, "
                f"this build reads {CHECKPOINT_VERSION!r}"
            )
        arch = Architecture(**meta["architecture"])
        cfg = TrainingConfig.from_dict(meta["config"])
        net = MCoCoNet(arch)
        state_dict = {}
        for name, shape in meta["tensors"].items():
            fname = f"params/{name}.bin"
            if fname not in names:
                raise CheckpointError(f"{path}: missing tensor {fname}")
            state_dict[name] = _tensor(zf.read(fname), fname, shape)
        try:
            net.load_state_dict(state_dict)
        except RuntimeError as e:
            raise CheckpointError(f"{path}: tensors do not fit architecture: {e}") from None

        optimizer = _adam(net.parameters(), cfg)
        steps = meta.get("optimizer_steps") or {}
        for i, p in enumerate(net.parameters()):
            if str(i) not in steps:
                continue
            optimizer.state[p] = {
                "step": torch.tensor(steps[str(i)]),
                "exp_avg": _tensor(zf.read(f"optim/{i}.exp_avg.bin"), f"optim/{i}", list(p.shape)),
                "exp_avg_sq": _tensor(zf.read(f"optim/{i}.exp_avg_sq.bin"), f"optim/{i}", list(p.shape)),
            }

        rng = None
        if meta.get("rng_state") is not None:
            rng = np.random.default_rng()
            rng.bit_generator.state = meta["rng_state"]

        def records(name):
            if name not in names:
                return []
            return [json.loads(line) for line in zf.read(name).decode().splitlines() if line]

        trace = TrainingTrace(seed=cfg.seed, config=cfg.to_dict(),
                              records=records("trace.jsonl"),
                              pretrain_records=records("pretrain_trace.jsonl"))
    return TrainState(net=net, config=cfg, optimizer=optimizer, rng=rng,
                      epoch=int(meta["epoch"]), trace=trace, extra=meta.get("extra") or {})
