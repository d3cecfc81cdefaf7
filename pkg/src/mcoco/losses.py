"""Loss terms for multi-level consistency collaborative clustering.

Every function works on torch tensors and is differentiable where it makes
sense. Targets (sharpened assignments) are the caller's responsibility to
detach.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch

EPS = 1e-12


class Diagnostics:
    """Counters for degenerate inputs met during loss evaluation."""

    def __init__(self):
        self.zero_norm_columns = 0

    def reset(self):
        self.zero_norm_columns = 0


diagnostics = Diagnostics()


@dataclass
class LossBreakdown:
    total: float
    reconstruction: float
    semantic: float
    multilevel: float
    lambda1: float = 1.0
    lambda2: float = 1.0
    tau: float = 0.5

    def as_dict(self):
        return {
            "total": self.total,
            "reconstruction": self.reconstruction,
            "semantic": self.semantic,
            "multilevel": self.multilevel,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "tau": self.tau,
        }


def reconstruction_loss(xs: Sequence[torch.Tensor], x_hats: Sequence[torch.Tensor]) -> torch.Tensor:
    """Summed squared error over views, samples and coordinates."""
    if len(xs) != len(x_hats):
        raise ValueError("need one reconstruction per view")
    n = xs[0].shape[0]
    for i, (x, xh) in enumerate(zip(xs, x_hats)):
        if x.shape[0] != n:
            raise ValueError(f"view {i} batch has {x.shape[0]} rows, view 0 has {n}")
        if x.shape != xh.shape:
            raise ValueError(f"view {i}: reconstruction shape {tuple(xh.shape)} != input {tuple(x.shape)}")
    return sum(((x - xh) ** 2).sum() for x, xh in zip(xs, x_hats))


def column_cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Cosine similarity between the columns of ``a`` and ``b``.

    Accepts vectors (returns a scalar) or matrices [N x k] (returns [k x k]).
    Zero-norm columns yield similarity 0 and bump ``diagnostics``.
    """
    vec = a.ndim == 1
    if vec:
        a, b = a[:, None], b[:, None]
    na = a.norm(dim=0)
    nb = b.norm(dim=0)
    zero_a, zero_b = na == 0, nb == 0
    if zero_a.any() or zero_b.any():
        diagnostics.zero_norm_columns += int(zero_a.sum() + zero_b.sum())
    denom = torch.outer(na, nb)
    bad = denom == 0
    sim = (a.T @ b) / torch.where(bad, torch.ones_like(denom), denom)
    sim = torch.where(bad, torch.zeros_like(sim), sim)
    return sim[0, 0] if vec else sim


def pairwise_semantic_loss(s_i: torch.Tensor, s_j: torch.Tensor, tau: float = 0.5) -> torch.Tensor:
    """Column-level contrastive loss between two views' semantic label matrices.

    Positive pair: column c of both views. Negatives: every other column of
    either view; the self-pair is removed by subtracting exp(1/tau).
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if s_i.shape != s_j.shape:
        raise ValueError(f"shape mismatch {tuple(s_i.shape)} vs {tuple(s_j.shape)}")
    k = s_i.shape[1]
    within = torch.exp(column_cosine(s_i, s_i) / tau)
    cross = torch.exp(column_cosine(s_i, s_j) / tau)
    denom = within.sum(1) + cross.sum(1) - math.exp(1.0 / tau)
    positive = torch.diagonal(cross)
    return -torch.log(positive / denom).sum() / k


def cluster_balance(s: torch.Tensor) -> torch.Tensor:
    """Sum over clusters of p log p with p the mean column mass (0 log 0 = 0)."""
    p = s.mean(0)
    return torch.where(p > 0, p * torch.log(p.clamp_min(EPS)), torch.zeros_like(p)).sum()


def semantic_consistency_loss(ss: Sequence[torch.Tensor], tau: float = 0.5) -> torch.Tensor:
    if len(ss) < 2:
        raise ValueError(f"semantic consistency needs at least 2 views, got {len(ss)}")
    m = len(ss)
    contrast = sum(pairwise_semantic_loss(ss[i], ss[j], tau)
                   for i in range(m) for j in range(m) if j != i)
    return 0.5 * contrast + sum(cluster_balance(s) for s in ss)


def sharpen(a: torch.Tensor) -> torch.Tensor:
    """Square-and-normalize target: (a^2 / column mass), renormalized per row."""
    # reduce each column as a contiguous row so equal columns get bit-equal sums
    f = a.T.contiguous().sum(1)[None, :]
    num = a ** 2
    weight = torch.where(f > 0, num / torch.where(f > 0, f, torch.ones_like(f)), torch.zeros_like(num))
    peak = weight.max(1, keepdim=True).values
    if (peak <= 0).any():
        bad = int(torch.nonzero(peak[:, 0] <= 0)[0, 0])
        raise ValueError(f"sharpen: row {bad} has no mass in any non-empty column")
    # scaling by the row peak first keeps uniform and one-hot rows exact
    weight = weight / peak
    return weight / weight.sum(1, keepdim=True)


def kl_divergence(p: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    """KL(p || q) summed over all entries, with 0 log 0 = 0 and floors at EPS."""
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {tuple(p.shape)} vs {tuple(q.shape)}")
    terms = p * (torch.log(p.clamp_min(EPS)) - torch.log(q.clamp_min(EPS)))
    return torch.where(p > 0, terms, torch.zeros_like(terms)).sum()


def multilevel_loss(qs: Sequence[torch.Tensor], ps: Sequence[torch.Tensor],
                    s_targets: Sequence[torch.Tensor], use_semantic: bool = True) -> torch.Tensor:
    """Sum over views k of [sum_c KL(P_c || Q_k) + KL(S'_k || Q_k)].

    ``use_semantic=False`` drops the KL(S'_k || Q_k) part.
    """
    if not (len(qs) == len(ps) == len(s_targets)):
        raise ValueError("need the same number of Q, P and S' matrices")
    total = qs[0].new_zeros(())
    for k, q in enumerate(qs):
        for p in ps:
            total = total + kl_divergence(p, q)
        if use_semantic:
            total = total + kl_divergence(s_targets[k], q)
    return total


def total_loss(l_re: torch.Tensor, l_se: torch.Tensor, l_ml: torch.Tensor,
               lambda1: float = 1.0, lambda2: float = 1.0, tau: float = 0.5):
    """Returns (differentiable total, LossBreakdown)."""
    total = l_re + lambda1 * l_se + lambda2 * l_ml
    re, se, ml = (float(t.detach()) for t in (l_re, l_se, l_ml))
    breakdown = LossBreakdown(
        total=re + lambda1 * se + lambda2 * ml,
        reconstruction=re, semantic=se, multilevel=ml,
        lambda1=lambda1, lambda2=lambda2, tau=tau,
    )
    return total, breakdown
