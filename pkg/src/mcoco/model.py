"""Per-view autoencoders, the shared semantic generator, and per-view centroids."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch
from torch import nn

from .kmeans import kmeans


@dataclass
class Architecture:
    view_dims: List[int]
    latent_dim: int = 10
    n_clusters: int = 3
    hidden_dims: List[List[int]] = field(default_factory=list)
    generator_hidden: int = 256

    def __post_init__(self):
        if not self.hidden_dims:
            self.hidden_dims = [[500, 500, 2000] for _ in self.view_dims]
        if len(self.hidden_dims) != len(self.view_dims):
            raise ValueError("need one hidden-width list per view")
        if self.n_clusters < 2:
            raise ValueError(f"n_clusters must be >= 2, got {self.n_clusters}")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be positive")

    def to_dict(self):
        return asdict(self)


def _fan_in_uniform(layer: nn.Linear, rng: np.random.Generator):
    fan_in = layer.in_features
    limit = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-limit, limit, size=(layer.out_features, fan_in))
    with torch.no_grad():
        layer.weight.copy_(torch.from_numpy(w))
        layer.bias.zero_()


def mlp(widths: Sequence[int]) -> nn.Sequential:
    """ReLU MLP; no activation after the last layer."""
    layers = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append(nn.Linear(a, b))
        if i < len(widths) - 2:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


def soft_assign(z: torch.Tensor, centers: torch.Tensor) -> torch.Tensor:
    """Student's t kernel (one degree of freedom), normalized over clusters."""
    if z.shape[-1] != centers.shape[-1]:
        raise ValueError(f"latent width {z.shape[-1]} != centroid width {centers.shape[-1]}")
    if not (torch.isfinite(z).all() and torch.isfinite(centers).all()):
        raise ValueError("soft_assign received non-finite latents or centroids")
    sq = ((z.unsqueeze(1) - centers.unsqueeze(0)) ** 2).sum(-1)
    kernel = 1.0 / (1.0 + sq)
    return kernel / kernel.sum(1, keepdim=True)


class MCoCoNet(nn.Module):
    def __init__(self, arch: Architecture, seed: int = 0, dtype=torch.float32):
        super().__init__()
        self.arch = arch
        self.encoders = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for d, hidden in zip(arch.view_dims, arch.hidden_dims):
            widths = [d, *hidden, arch.latent_dim]
            self.encoders.append(mlp(widths))
            self.decoders.append(mlp(widths[::-1]))
        self.generator = nn.Sequential(
            nn.Linear(arch.latent_dim, arch.generator_hidden),
            nn.ReLU(),
            nn.Linear(arch.generator_hidden, arch.n_clusters),
            nn.Softmax(dim=1),
        )
        self.centroids = nn.ParameterList(
            [nn.Parameter(torch.zeros(arch.n_clusters, arch.latent_dim)) for _ in arch.view_dims]
        )
        rng = np.random.default_rng(seed)
        for mod in self.modules():
            if isinstance(mod, nn.Linear):
                _fan_in_uniform(mod, rng)
        self.to(dtype)

    @property
    def n_views(self) -> int:
        return len(self.encoders)

    def _check(self, x, width, what):
        if x.ndim != 2 or x.shape[1] != width:
            raise ValueError(f"{what}: expected [B x {width}] input, got {list(x.shape)}")

    def encode(self, view: int, x: torch.Tensor) -> torch.Tensor:
        self._check(x, self.arch.view_dims[view], f"encode(view={view})")
        return self.encoders[view](x)

    def decode(self, view: int, z: torch.Tensor) -> torch.Tensor:
        self._check(z, self.arch.latent_dim, f"decode(view={view})")
        return self.decoders[view](z)

    def semantic_labels(self, z: torch.Tensor) -> torch.Tensor:
        self._check(z, self.arch.latent_dim, "semantic_labels")
        return self.generator(z)

    def soft_assign(self, view: int, z: torch.Tensor) -> torch.Tensor:
        return soft_assign(z, self.centroids[view])

    def forward(self, xs: Sequence[torch.Tensor]):
        """Returns per-view (z, x_hat, s, q)."""
        if len(xs) != self.n_views:
            raise ValueError(f"expected {self.n_views} views, got {len(xs)}")
        zs = [self.encode(i, x) for i, x in enumerate(xs)]
        x_hats = [self.decode(i, z) for i, z in enumerate(zs)]
        ss = [self.semantic_labels(z) for z in zs]
        qs = [self.soft_assign(i, z) for i, z in enumerate(zs)]
        return zs, x_hats, ss, qs

    def parameter_groups(self):
        """Parameters grouped by role: encoders, decoders, generator, centroids."""
        return {
            "encoders": list(self.encoders.parameters()),
            "decoders": list(self.decoders.parameters()),
            "generator": list(self.generator.parameters()),
            "centroids": list(self.centroids.parameters()),
        }

    @torch.no_grad()
    def embed(self, views: Sequence[np.ndarray]) -> List[np.ndarray]:
        dtype = next(self.parameters()).dtype
        return [self.encode(i, torch.as_tensor(v, dtype=dtype)).numpy() for i, v in enumerate(views)]

    @torch.no_grad()
    def assignments(self, views: Sequence[np.ndarray]) -> List[np.ndarray]:
        dtype = next(self.parameters()).dtype
        out = []
        for i, v in enumerate(views):
            z = self.encode(i, torch.as_tensor(v, dtype=dtype))
            out.append(self.soft_assign(i, z).numpy())
        return out


def init_centroids(latents: Sequence[np.ndarray], k: int, n_restarts: int = 10,
                   max_iter: int = 300, tol: float = 1e-4, seed: int = 0) -> List[np.ndarray]:
    """Independent k-means on each view's latent matrix."""
    centroids = []
    for i, z in enumerate(latents):
        if k > len(z):
            raise ValueError(f"view {i}: k={k} exceeds N={len(z)}")
        centers, _, _ = kmeans(z, k, n_restarts=n_restarts, max_iter=max_iter, tol=tol, seed=seed + i)
        centroids.append(centers)
    return centroids


def set_centroids(net: MCoCoNet, centroids: Sequence[np.ndarray], views: Optional[Sequence[int]] = None):
    views = range(net.n_views) if views is None else views
    with torch.no_grad():
        for i, c in zip(views, centroids):
            net.centroids[i].copy_(torch.as_tensor(np.asarray(c), dtype=net.centroids[i].dtype))
