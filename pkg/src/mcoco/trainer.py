"""Two-phase optimization: autoencoder pretraining, k-means centroid init, joint training."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np
import torch

from . import losses
from .data import MultiViewDataset
from .metrics import evaluate, final_assignment
from .model import Architecture, MCoCoNet, init_centroids, set_centroids

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, phase, epoch, batch, last_breakdown):
        self.phase, self.epoch, self.batch = phase, epoch, batch
        self.last_breakdown = last_breakdown
        super().__init__(
            f"non-finite loss during {phase} at epoch {epoch}, batch {batch}; "
            f"last finite breakdown: {last_breakdown}"
        )


@dataclass
class TrainingConfig:
    k: int = 3
    latent_dim: int = 10
    hidden_dims: List[int] = field(default_factory=lambda: [500, 500, 2000])
    view_hidden_dims: Optional[List[List[int]]] = None
    generator_hidden: int = 256
    tau: float = 0.5
    lambda1: float = 1.0
    lambda2: float = 1.0
    learning_rate: float = 1e-3
    batch_size: int = 256
    pretrain_epochs: int = 50
    train_epochs: int = 100
    seed: int = 0
    use_se: bool = True
    use_ml_semantic: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    full_dataset_targets: bool = False
    kmeans_restarts: int = 10

    def validate(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.pretrain_epochs < 0 or self.train_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.latent_dim < 1 or self.generator_hidden < 1:
            raise ValueError("latent_dim and generator_hidden must be positive")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")
        if self.kmeans_restarts < 1:
            raise ValueError("kmeans_restarts must be >= 1")
        return self

    def architecture(self, view_dims) -> Architecture:
        hidden = self.view_hidden_dims or [list(self.hidden_dims) for _ in view_dims]
        return Architecture(
            view_dims=list(view_dims), latent_dim=self.latent_dim, n_clusters=self.k,
            hidden_dims=[list(h) for h in hidden], generator_hidden=self.generator_hidden,
        )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainingTrace:
    seed: int
    config: dict
    records: List[dict] = field(default_factory=list)
    pretrain_records: List[dict] = field(default_factory=list)


@dataclass
class TrainState:
    """Everything needed to continue training exactly where it stopped."""
    net: MCoCoNet
    config: TrainingConfig
    optimizer: Optional[torch.optim.Optimizer] = None
    rng: Optional[np.random.Generator] = None
    epoch: int = 0
    trace: Optional[TrainingTrace] = None
    extra: dict = field(default_factory=dict)

    @property
    def centroids(self) -> List[np.ndarray]:
        return [c.detach().numpy().copy() for c in self.net.centroids]


def _streams(seed):
    init, shuffle, km = np.random.SeedSequence(seed).spawn(3)
    return (int(init.generate_state(1)[0]), np.random.default_rng(shuffle),
            int(km.generate_state(1)[0]))


def _tensors(ds: MultiViewDataset, dtype):
    return [torch.as_tensor(v, dtype=dtype) for v in ds.views]


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    return [torch.as_tensor(perm[i:i + batch_size]) for i in range(0, n, batch_size)]


def _adam(params, cfg: TrainingConfig):
    return torch.optim.Adam(params, lr=cfg.learning_rate,
                            betas=(cfg.adam_beta1, cfg.adam_beta2), eps=cfg.adam_eps)


def build_model(ds: MultiViewDataset, cfg: TrainingConfig) -> MCoCoNet:
    init_seed, _, _ = _streams(cfg.seed)
    return MCoCoNet(cfg.architecture(ds.view_dims), seed=init_seed)


def pretrain(ds: MultiViewDataset, cfg: TrainingConfig, net: Optional[MCoCoNet] = None,
             rng: Optional[np.random.Generator] = None):
    """Fit encoders/decoders on the reconstruction loss alone.

    Returns (net, per-epoch records). The semantic generator and centroids
    are untouched.
    """
    cfg.validate()
    if net is None:
        net = build_model(ds, cfg)
    if rng is None:
        rng = _streams(cfg.seed)[1]
    dtype = next(net.parameters()).dtype
    xs = _tensors(ds, dtype)
    opt = _adam(list(net.encoders.parameters()) + list(net.decoders.parameters()), cfg)
    records = []
    for epoch in range(1, cfg.pretrain_epochs + 1):
        start = time.perf_counter()
        epoch_loss = 0.0
        for b, idx in enumerate(_batches(ds.n_samples, cfg.batch_size, rng)):
            batch = [x[idx] for x in xs]
            x_hats = [net.decode(i, net.encode(i, x)) for i, x in enumerate(batch)]
            loss = losses.reconstruction_loss(batch, x_hats)
            if not torch.isfinite(loss):
                raise TrainingDiverged("pretrain", epoch, b, {"reconstruction": epoch_loss})
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += loss.item()
        records.append({"phase": "pretrain", "epoch": epoch, "reconstruction": epoch_loss,
                        "wall_clock_s": time.perf_counter() - start, "seed": cfg.seed})
        log.debug("pretrain epoch %d  L_Re=%.4f", epoch, epoch_loss)
    return net, records


def targets(net: MCoCoNet, batch):
    """Sharpened assignment targets P and semantic targets S', as constants."""
    with torch.no_grad():
        _, _, ss, qs = net(batch)
    return [losses.sharpen(q) for q in qs], [losses.sharpen(s) for s in ss]


def compute_losses(net: MCoCoNet, batch, cfg: TrainingConfig, fixed_targets=None):
    """Forward pass plus every loss term on one batch; returns (total, breakdown).

    Targets are recomputed from this batch unless ``fixed_targets`` (P, S') is given.
    """
    zs, x_hats, ss, qs = net(batch)
    if fixed_targets is None:
        ps = [losses.sharpen(q.detach()) for q in qs]
        s_targets = [losses.sharpen(s.detach()) for s in ss]
    else:
        ps, s_targets = fixed_targets
    l_re = losses.reconstruction_loss(batch, x_hats)
    if cfg.use_se:
        l_se = losses.semantic_consistency_loss(ss, cfg.tau)
    else:
        l_se = l_re.new_zeros(())
    l_ml = losses.multilevel_loss(qs, ps, s_targets, use_semantic=cfg.use_ml_semantic)
    return losses.total_loss(l_re, l_se, l_ml, cfg.lambda1, cfg.lambda2, cfg.tau)


def predict(net: MCoCoNet, ds: MultiViewDataset):
    return final_assignment(net.assignments(ds.views))


def epoch_metrics(net: MCoCoNet, ds: MultiViewDataset):
    if ds.labels is None:
        return {"acc": None, "nmi": None, "rand_index": None, "fscore": None}
    result = predict(net, ds)
    report = evaluate(result.fused_labels, ds.labels).as_dict()
    report["view_acc"] = [evaluate(v, ds.labels).acc for v in result.view_labels]
    report["view_agreement"] = float(np.mean(result.view_labels[0] == result.view_labels[1]))
    return report


def initialize(ds: MultiViewDataset, cfg: TrainingConfig) -> TrainState:
    """Pretraining and k-means centroid initialization."""
    cfg.validate()
    if cfg.k > ds.n_samples:
        raise ValueError(f"k={cfg.k} exceeds N={ds.n_samples}")
    init_seed, rng, km_seed = _streams(cfg.seed)
    net = MCoCoNet(cfg.architecture(ds.view_dims), seed=init_seed)
    net, pre_records = pretrain(ds, cfg, net, rng)
    centroids = init_centroids(net.embed(ds.views), cfg.k, n_restarts=cfg.kmeans_restarts, seed=km_seed)
    set_centroids(net, centroids)
    trace = TrainingTrace(seed=cfg.seed, config=cfg.to_dict(), pretrain_records=pre_records)
    return TrainState(net=net, config=cfg, optimizer=_adam(net.parameters(), cfg), rng=rng, trace=trace)


def train(state: TrainState, ds: MultiViewDataset, epochs: Optional[int] = None, on_epoch=None) -> TrainState:
    """Joint optimization of all parameters and centroids for ``epochs`` more epochs."""
    cfg, net = state.config, state.net
    epochs = cfg.train_epochs if epochs is None else epochs
    if state.optimizer is None:
        state.optimizer = _adam(net.parameters(), cfg)
    if state.rng is None:
        state.rng = _streams(cfg.seed)[1]
    if state.trace is None:
        state.trace = TrainingTrace(seed=cfg.seed, config=cfg.to_dict())
    dtype = next(net.parameters()).dtype
    xs = _tensors(ds, dtype)
    n = ds.n_samples
    batch_size = n if cfg.full_dataset_targets and n <= 2048 else cfg.batch_size
    opt = state.optimizer
    last = None
    for _ in range(epochs):
        epoch = state.epoch + 1
        start = time.perf_counter()
        sums = dict(total=0.0, reconstruction=0.0, semantic=0.0, multilevel=0.0)
        for b, idx in enumerate(_batches(n, batch_size, state.rng)):
            batch = [x[idx] for x in xs]
            loss, bd = compute_losses(net, batch, cfg)
            if not np.isfinite(bd.total):
                raise TrainingDiverged("train", epoch, b, last)
            opt.zero_grad()
            loss.backward()
            opt.step()
            last = bd.as_dict()
            for key in sums:
                sums[key] += getattr(bd, key)
        sums["total"] = sums["reconstruction"] + cfg.lambda1 * sums["semantic"] + cfg.lambda2 * sums["multilevel"]
        record = {"phase": "train", "epoch": epoch, **sums,
                  "lambda1": cfg.lambda1, "lambda2": cfg.lambda2, "tau": cfg.tau}
        record.update(epoch_metrics(net, ds))
        record["wall_clock_s"] = time.perf_counter() - start
        record["seed"] = cfg.seed
        state.trace.records.append(record)
        state.epoch = epoch
        log.info("epoch %d  L=%.4f  acc=%s", epoch, record["total"], record["acc"])
        if on_epoch is not None:
            on_epoch(record)
    return state


def fit(ds: MultiViewDataset, cfg: TrainingConfig, on_epoch=None) -> TrainState:
    """Pretrain, initialize centroids by k-means, then train jointly."""
    state = initialize(ds, cfg)
    return train(state, ds, on_epoch=on_epoch)
