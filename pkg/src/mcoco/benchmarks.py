"""Desk-scale synthetic benchmarks used by the acceptance suite.

``standard``: 3 well-separated clusters, 2 low-noise views, N=600.
``noisy``: closer clusters and a second view drowned in Gaussian noise
(sigma 1.0 on tanh features in [-1, 1]), for ablation comparisons.

Networks are narrower than the library default (128-128-256 instead of
500-500-2000) so ten seeds train in a couple of minutes on one CPU core.
"""
from .data import MultiViewDataset, SynthSpec, generate_synthetic, normalize_views
from .trainer import TrainingConfig


def standard_spec(seed: int) -> SynthSpec:
    return SynthSpec(n_samples=600, n_clusters=3, n_views=2, latent_dim=4, view_dims=[20, 30],
                     noise_sigmas=[0.05, 0.05], cluster_separation=6.0, seed=seed)


def noisy_spec(seed: int) -> SynthSpec:
    return SynthSpec(n_samples=600, n_clusters=3, n_views=2, latent_dim=4, view_dims=[20, 30],
                     noise_sigmas=[0.05, 1.0], cluster_separation=4.0, seed=seed)


def load(name: str, seed: int) -> MultiViewDataset:
    spec = {"standard": standard_spec, "noisy": noisy_spec}[name](seed)
    return normalize_views(generate_synthetic(spec))


def benchmark_config(seed: int, **overrides) -> TrainingConfig:
    cfg = TrainingConfig(k=3, latent_dim=10, hidden_dims=[128, 128, 256], generator_hidden=64,
                         batch_size=128, pretrain_epochs=50, train_epochs=100, seed=seed)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg.validate()
