"""Multi-view datasets: container, on-disk format, normalization, synthetic generation.

Synthetic data uses numpy's ``PCG64`` bit generator (``numpy.random.default_rng``),
so a given seed yields the same dataset on every platform numpy supports.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

FORMAT_VERSION = "1"


class DatasetError(ValueError):
    """Raised for invalid datasets or malformed dataset directories."""


@dataclass
class MultiViewDataset:
    views: List[np.ndarray]
    labels: Optional[np.ndarray] = None
    k_hint: Optional[int] = None

    def __post_init__(self):
        self.views = [np.ascontiguousarray(v, dtype=np.float32) for v in self.views]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        self.validate()

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def n_samples(self) -> int:
        return self.views[0].shape[0]

    @property
    def view_dims(self) -> List[int]:
        return [v.shape[1] for v in self.views]

    def validate(self):
        if len(self.views) < 2:
            raise DatasetError(f"need at least 2 views, got {len(self.views)}")
        n = self.views[0].shape[0] if self.views[0].ndim == 2 else -1
        if n < 1:
            raise DatasetError("views must be 2-D with at least one sample")
        for i, v in enumerate(self.views):
            if v.ndim != 2:
                raise DatasetError(f"view {i} is not a matrix (ndim={v.ndim})")
            if v.shape[0] != n:
                raise DatasetError(f"view {i} has {v.shape[0]} samples, view 0 has {n}")
            if v.shape[1] < 1:
                raise DatasetError(f"view {i} has no features")
            if not np.all(np.isfinite(v)):
                raise DatasetError(f"view {i} contains non-finite values")
        if self.k_hint is not None and self.k_hint < 1:
            raise DatasetError(f"k_hint must be positive, got {self.k_hint}")
        if self.labels is not None:
            y = self.labels
            if y.shape != (n,):
                raise DatasetError(f"labels shape {y.shape} does not match N={n}")
            if self.k_hint is None:
                self.k_hint = int(y.max()) + 1
            if y.min() < 0 or y.max() >= self.k_hint:
                raise DatasetError(f"labels must lie in [0, {self.k_hint})")
            missing = set(range(self.k_hint)) - set(np.unique(y).tolist())
            if missing:
                raise DatasetError(f"classes {sorted(missing)} never occur in labels")

    def equals(self, other: "MultiViewDataset") -> bool:
        """Bit-exact comparison of every field."""
        if self.n_views != other.n_views or self.k_hint != other.k_hint:
            return False
        for a, b in zip(self.views, other.views):
            if a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)


@dataclass
class SynthSpec:
    n_samples: int = 600
    n_clusters: int = 3
    n_views: int = 2
    latent_dim: int = 4
    view_dims: List[int] = field(default_factory=lambda: [20, 30])
    noise_sigmas: List[float] = field(default_factory=lambda: [0.05, 0.05])
    cluster_separation: float = 6.0
    seed: int = 0

    def validate(self):
        if self.n_samples < 1 or self.latent_dim < 1:
            raise DatasetError("n_samples and latent_dim must be positive")
        if self.n_clusters < 2:
            raise DatasetError(f"n_clusters must be >= 2, got {self.n_clusters}")
        if self.n_views < 2:
            raise DatasetError(f"n_views must be >= 2, got {self.n_views}")
        if len(self.view_dims) != self.n_views or len(self.noise_sigmas) != self.n_views:
            raise DatasetError("view_dims and noise_sigmas need one entry per view")
        if any(d < 1 for d in self.view_dims):
            raise DatasetError("view dimensions must be positive")
        if any(s < 0 for s in self.noise_sigmas):
            raise DatasetError("noise sigmas must be non-negative")
        if self.cluster_separation <= 0:
            raise DatasetError("cluster_separation must be positive")
        if self.n_samples < self.n_clusters:
            raise DatasetError("n_samples must be >= n_clusters")
        if self.seed < 0:
            raise DatasetError("seed must be unsigned")


def generate_synthetic(spec: SynthSpec) -> MultiViewDataset:
    """Shared-latent clusters seen through m noisy nonlinear views.

    Cluster means are rescaled so the closest pair sits exactly
    ``cluster_separation`` apart; each view is ``tanh(latent @ W_i + b_i)``
    plus Gaussian noise of scale ``noise_sigmas[i]``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    k, d = spec.n_clusters, spec.latent_dim

    means = rng.standard_normal((k, d))
    dists = np.sqrt(((means[:, None] - means[None]) ** 2).sum(-1))
    min_dist = dists[np.triu_indices(k, 1)].min()
    means *= spec.cluster_separation / max(min_dist, 1e-12)

    labels = rng.permutation(np.arange(spec.n_samples) % k)
    latent = means[labels] + rng.standard_normal((spec.n_samples, d))

    views = []
    for dim, sigma in zip(spec.view_dims, spec.noise_sigmas):
        w = rng.standard_normal((d, dim)) / np.sqrt(d * spec.cluster_separation)
        b = rng.standard_normal(dim) * 0.1
        x = np.tanh(latent @ w + b)
        x = x + sigma * rng.standard_normal(x.shape)
        views.append(x.astype(np.float32))
    return MultiViewDataset(views, labels=labels, k_hint=k)


def normalize_views(ds: MultiViewDataset) -> MultiViewDataset:
    """Per-column min-max scaling to [0, 1]; constant columns become 0."""
    out = []
    for v in ds.views:
        v64 = v.astype(np.float64)
        lo = v64.min(axis=0)
        span = v64.max(axis=0) - lo
        safe = np.where(span > 0, span, 1.0)
        scaled = np.where(span > 0, (v64 - lo) / safe, 0.0)
        out.append(np.clip(scaled, 0.0, 1.0).astype(np.float32))
    labels = None if ds.labels is None else ds.labels.copy()
    return MultiViewDataset(out, labels=labels, k_hint=ds.k_hint)


# --- on-disk format -------------------------------------------------------

def write_matrix(fh, mat: np.ndarray):
    mat = np.ascontiguousarray(mat, dtype="<f4")
    fh.write(struct.pack("<II", *mat.shape))
    fh.write(mat.tobytes())


def read_matrix(buf: bytes, name: str) -> np.ndarray:
    if len(buf) < 8:
        raise DatasetError(f"{name}: truncated header at offset 0 ({len(buf)} bytes)")
    rows, cols = struct.unpack_from("<II", buf, 0)
    expected = 8 + 4 * rows * cols
    if len(buf) != expected:
        raise DatasetError(
            f"{name}: header declares {rows}x{cols} ({expected} bytes) "
            f"but file has {len(buf)} bytes; data ends at offset {len(buf)}"
        )
    mat = np.frombuffer(buf, dtype="<f4", offset=8).reshape(rows, cols).astype(np.float32)
    bad = np.flatnonzero(~np.isfinite(mat.ravel()))
    if bad.size:
        raise DatasetError(f"{name}: non-finite value at byte offset {8 + 4 * int(bad[0])}")
    return mat


def save_dataset(ds: MultiViewDataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "n_samples": ds.n_samples,
        "n_views": ds.n_views,
        "view_dims": ds.view_dims,
        "has_labels": ds.labels is not None,
        "k": ds.k_hint,
        "format_version": FORMAT_VERSION,
    }
    for i, v in enumerate(ds.views):
        with open(path / f"view_{i}.bin", "wb") as fh:
            write_matrix(fh, v)
    if ds.labels is not None:
        with open(path / "labels.bin", "wb") as fh:
            fh.write(struct.pack("<I", ds.n_samples))
            fh.write(ds.labels.astype("<u4").tobytes())
    elif (path / "labels.bin").exists():
        os.remove(path / "labels.bin")
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def load_dataset(path) -> MultiViewDataset:
    path = Path(path)
    mpath = path / "manifest.json"
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetError(f"{mpath}: missing manifest") from None
    except json.JSONDecodeError as e:
        raise DatasetError(f"{mpath}: malformed JSON at offset {e.pos}") from None
    for key in ("n_samples", "n_views", "view_dims", "has_labels", "k", "format_version"):
        if key not in manifest:
            raise DatasetError(f"{mpath}: missing field '{key}'")
    if str(manifest["format_version"]) != FORMAT_VERSION:
        raise DatasetError(f"{mpath}: unsupported format_version {manifest['format_version']!r}")
    n, m = manifest["n_samples"], manifest["n_views"]
    if len(manifest["view_dims"]) != m:
        raise DatasetError(f"{mpath}: view_dims has {len(manifest['view_dims'])} entries, n_views={m}")

    views = []
    for i in range(m):
        vpath = path / f"view_{i}.bin"
        if not vpath.exists():
            raise DatasetError(f"{vpath}: missing view file")
        mat = read_matrix(vpath.read_bytes(), str(vpath))
        if mat.shape != (n, manifest["view_dims"][i]):
            raise DatasetError(
                f"{vpath}: shape {mat.shape[0]}x{mat.shape[1]} at offset 0 does not match "
                f"manifest {n}x{manifest['view_dims'][i]}"
            )
        views.append(mat)

    labels = None
    if manifest["has_labels"]:
        lpath = path / "labels.bin"
        if not lpath.exists():
            raise DatasetError(f"{lpath}: manifest has_labels=true but file is missing")
        buf = lpath.read_bytes()
        if len(buf) < 4:
            raise DatasetError(f"{lpath}: truncated header at offset 0")
        (count,) = struct.unpack_from("<I", buf, 0)
        if count != n:
            raise DatasetError(f"{lpath}: header at offset 0 declares {count} labels, manifest N={n}")
        if len(buf) != 4 + 4 * n:
            raise DatasetError(f"{lpath}: expected {4 + 4 * n} bytes, found {len(buf)}")
        labels = np.frombuffer(buf, dtype="<u4", offset=4).astype(np.int64)
    try:
        return MultiViewDataset(views, labels=labels, k_hint=manifest["k"])
    except DatasetError as e:
        raise DatasetError(f"{path}: {e}") from None


def concat_views(ds: MultiViewDataset) -> np.ndarray:
    return np.concatenate(ds.views, axis=1)

