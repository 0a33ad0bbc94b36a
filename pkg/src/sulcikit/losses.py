"""Contrastive and segmentation losses with analytic gradients.

The contrastive part follows the paired-view convention: a batch holds 2N
embedding rows where rows (2k, 2k+1) (0-indexed) are the two views of input
k. The pairwise term is the normalized temperature-scaled cross entropy over
cosine similarities; the total loss averages the two ordered terms of every
pair. Segmentation losses (soft Dice and Tversky) share one
true-positive/false-negative/false-positive reduction, which makes
Tversky(alpha=beta=0.5) bitwise equal to Dice at smooth=0. Everything is a
pure function; repeated calls give bitwise-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    IndexOutOfRangeError,
    NonFiniteError,
    ZeroVectorError,
)
from .volume import VoxelGrid, require_same_grid

__all__ = [
    "EmbeddingBatch",
    "ContrastiveConfig",
    "ProbabilityVolume",
    "DescentRecord",
    "cosine_similarity",
    "nt_xent_pair",
    "contrastive_loss",
    "contrastive_loss_grad",
    "soft_dice_loss",
    "tversky_loss",
    "seg_loss_grad",
    "multitask_loss",
    "finite_difference_check",
    "optimize_embeddings_demo",
    "DEFAULT_TEMPERATURE",
    "DEFAULT_SMOOTH",
]

DEFAULT_TEMPERATURE = 0.5
DEFAULT_SMOOTH = 1e-5


@dataclass(frozen=True, eq=False)
class EmbeddingBatch:
    """2N x D matrix of paired view embeddings; rows (2k, 2k+1) are positives."""

    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 2 or rows.shape[0] % 2:
            raise ValueError(f"batch must be 2N x D with N >= 1, got shape {rows.shape}")
        if not (np.linalg.norm(rows, axis=1) > 0).all():
            raise ZeroVectorError("every embedding row must have nonzero norm")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    @property
    def n_pairs(self) -> int:
        return self.rows.shape[0] // 2


@dataclass(frozen=True)
class ContrastiveConfig:
    """Temperature of the contrastive softmax."""

    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")


@dataclass(frozen=True, eq=False)
class ProbabilityVolume:
    """Per-voxel foreground probabilities in [0, 1] on a voxel grid."""

    grid: VoxelGrid
    voxels: np.ndarray = field(repr=False)

    def __post_init__(self):
        voxels = np.asarray(self.voxels, dtype=np.float64).reshape(self.grid.shape)
        if not np.isfinite(voxels).all():
            raise ValueError("probability volume contains NaN or Inf")
        if voxels.min() < 0.0 or voxels.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        voxels.flags.writeable = False
        object.__setattr__(self, "voxels", voxels)


def _rows(batch) -> np.ndarray:
    rows = batch.rows if isinstance(batch, EmbeddingBatch) else np.asarray(batch, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2 or rows.shape[0] % 2:
        raise ValueError(f"batch must be 2N x D with N >= 1, got shape {rows.shape}")
    return rows


def _unit_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(rows, axis=1)
    if not (norms > 0).all():
        raise ZeroVectorError("every embedding row must have nonzero norm")
    return rows / norms[:, None], norms


def cosine_similarity(z_i, z_j) -> float:
    """Cosine of the angle between two embeddings, in [-1, 1]."""
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    ni = np.linalg.norm(z_i)
    nj = np.linalg.norm(z_j)
    if ni == 0 or nj == 0:
        raise ZeroVectorError("cosine similarity undefined for zero vectors")
    return float(np.clip(np.dot(z_i, z_j) / (ni * nj), -1.0, 1.0))


def _logits(rows: np.ndarray, temperature: float) -> np.ndarray:
    """Similarity matrix over temperature with the diagonal masked out."""
    unit, _ = _unit_rows(rows)
    logits = (unit @ unit.T) / temperature
    np.fill_diagonal(logits, -np.inf)
    return logits


def nt_xent_pair(batch, i: int, j: int, temperature: float = DEFAULT_TEMPERATURE) -> float:
    """Pairwise contrastive term for anchor row i and positive row j.

    -log of the softmax (with max subtraction) that row i assigns to row j
    over all rows except i itself. Indices are 0-based.
    """
    rows = _rows(batch)
    n = rows.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexOutOfRangeError(f"indices ({i}, {j}) outside batch of {n} rows")
    if i == j:
        raise IndexOutOfRangeError("anchor and positive must differ")
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    logits = _logits(rows, temperature)[i]
    m = logits.max()
    return float(np.log(np.exp(logits - m).sum()) + m - logits[j])


def _partners(n_rows: int) -> np.ndarray:
    return np.arange(n_rows) ^ 1


def contrastive_loss(batch, temperature: float = DEFAULT_TEMPERATURE) -> float:
    """Total contrastive loss: mean pairwise term over all 2N anchors."""
    rows = _rows(batch)
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    logits = _logits(rows, temperature)
    m = logits.max(axis=1)
    log_denom = np.log(np.exp(logits - m[:, None]).sum(axis=1)) + m
    pos = logits[np.arange(rows.shape[0]), _partners(rows.shape[0])]
    return float(np.mean(log_denom - pos))


def contrastive_loss_grad(batch, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """Exact gradient of contrastive_loss with respect to every embedding entry.

    Because cosine similarity ignores row scale, each gradient row is
    orthogonal to its embedding row.
    """
    rows = _rows(batch)
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    n = rows.shape[0]
    unit, norms = _unit_rows(rows)
    logits = (unit @ unit.T) / temperature
    np.fill_diagonal(logits, -np.inf)
    m = logits.max(axis=1)
    p = np.exp(logits - m[:, None])
    p /= p.sum(axis=1, keepdims=True)

    onehot = np.zeros((n, n))
    onehot[np.arange(n), _partners(n)] = 1.0
    sim_grad = (p - onehot) / (n * temperature)
    g_unit = (sim_grad + sim_grad.T) @ unit
    radial = np.einsum("ij,ij->i", g_unit, unit)
    return (g_unit - radial[:, None] * unit) / norms[:, None]


def _pred_target(pred, target) -> tuple[np.ndarray, np.ndarray]:
    """Accept wrapped volumes or plain arrays; return float64 arrays."""
    if hasattr(pred, "grid") and hasattr(target, "grid"):
        require_same_grid(pred, target)
    p = np.asarray(pred.voxels if hasattr(pred, "voxels") else pred, dtype=np.float64)
    g = np.asarray(target.voxels if hasattr(target, "voxels") else target, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"prediction shape {p.shape} != target shape {g.shape}")
    return p, g


def _overlap_terms(p: np.ndarray, g: np.ndarray) -> tuple[float, float, float]:
    tp = float((p * g).sum())
    fn = float(((1.0 - p) * g).sum())
    fp = float((p * (1.0 - g)).sum())
    return tp, fn, fp


def soft_dice_loss(pred, target, smooth: float = DEFAULT_SMOOTH) -> float:
    """1 - (2*overlap + smooth) / (total mass + smooth)."""
    if smooth < 0:
        raise ValueError(f"smooth must be >= 0, got {smooth}")
    p, g = _pred_target(pred, target)
    tp, fn, fp = _overlap_terms(p, g)
    return 1.0 - (2.0 * tp + smooth) / (((2.0 * tp + fn) + fp) + smooth)


def tversky_loss(
    pred, target, alpha: float = 0.5, beta: float = 0.5, smooth: float = DEFAULT_SMOOTH
) -> float:
    """Tversky loss: alpha weights false negatives, beta false positives.

    At alpha = beta = 0.5 and smooth = 0 this reduces to soft_dice_loss,
    bitwise. Raising alpha penalizes misses, useful when the foreground is a
    tiny fraction of the volume.
    """
    if alpha < 0 or beta < 0:
        raise ValueError(f"alpha and beta must be >= 0, got {alpha}, {beta}")
    if smooth < 0:
        raise ValueError(f"smooth must be >= 0, got {smooth}")
    p, g = _pred_target(pred, target)
    tp, fn, fp = _overlap_terms(p, g)
    return 1.0 - (tp + smooth) / (((tp + alpha * fn) + beta * fp) + smooth)


def seg_loss_grad(
    loss: str,
    pred,
    target,
    alpha: float = 0.5,
    beta: float = 0.5,
    smooth: float = DEFAULT_SMOOTH,
) -> np.ndarray:
    """Exact gradient of a segmentation loss w.r.t. each predicted probability.

    ``loss`` is "dice" or "tversky"; alpha/beta apply to tversky only.
    Returns an array of the prediction's shape.
    """
    p, g = _pred_target(pred, target)
    tp, fn, fp = _overlap_terms(p, g)
    if loss == "dice":
        num = 2.0 * tp + smooth
        den = ((2.0 * tp + fn) + fp) + smooth
        dden = np.ones_like(p)
        dnum = 2.0 * g
    elif loss == "tversky":
        num = tp + smooth
        den = ((tp + alpha * fn) + beta * fp) + smooth
        dden = g - alpha * g + beta * (1.0 - g)
        dnum = g
    else:
        raise ValueError(f"loss must be 'dice' or 'tversky', got {loss!r}")
    return -(dnum * den - num * dden) / (den * den)


def multitask_loss(seg: float, contrastive: float) -> float:
    """Unweighted sum of the segmentation and contrastive losses."""
    if not (np.isfinite(seg) and np.isfinite(contrastive)):
        raise NonFiniteError(f"losses must be finite, got {seg}, {contrastive}")
    return float(seg) + float(contrastive)


def _central_difference(func, x: np.ndarray, eps: float) -> np.ndarray:
    grad = np.zeros_like(x, dtype=np.float64)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for k in range(xf.size):
        orig = xf[k]
        xf[k] = orig + eps
        f_plus = func(x)
        xf[k] = orig - eps
        f_minus = func(x)
        xf[k] = orig
        flat[k] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def finite_difference_check(loss_id: str, point: dict, eps: float = 1e-4) -> float:
    """Max relative error between an analytic gradient and central differences.

    ``loss_id`` selects the loss; ``point`` carries its inputs:
      contrastive -- {"batch": 2N x D array, "temperature": tau}
      dice        -- {"pred": array, "target": array, "smooth": s}
      tversky     -- dice keys plus "alpha" and "beta"
    The relative error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if loss_id == "contrastive":
        x = np.array(point["batch"], dtype=np.float64)
        tau = float(point.get("temperature", DEFAULT_TEMPERATURE))
        analytic = contrastive_loss_grad(x, tau)
        numeric = _central_difference(lambda a: contrastive_loss(a, tau), x, eps)
    elif loss_id in ("dice", "tversky"):
        x = np.array(point["pred"], dtype=np.float64)
        target = np.asarray(point["target"], dtype=np.float64)
        smooth = float(point.get("smooth", DEFAULT_SMOOTH))
        alpha = float(point.get("alpha", 0.5))
        beta = float(point.get("beta", 0.5))
        analytic = seg_loss_grad(loss_id, x, target, alpha, beta, smooth)
        if loss_id == "dice":
            func = lambda a: soft_dice_loss(a, target, smooth)
        else:
            func = lambda a: tversky_loss(a, target, alpha, beta, smooth)
        numeric = _central_difference(func, x, eps)
    else:
        raise ValueError(f"unknown loss_id {loss_id!r}")
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())


class DescentRecord(NamedTuple):
    """Per-step metrics of the embedding descent demo."""

    loss: float
    positive_similarity: float
    negative_similarity: float


def _pair_similarities(rows: np.ndarray) -> tuple[float, float]:
    unit, _ = _unit_rows(rows)
    sims = unit @ unit.T
    n = rows.shape[0]
    pos = sims[np.arange(0, n, 2), np.arange(1, n, 2)]
    iu, ju = np.triu_indices(n, k=1)
    negative = (ju - iu > 1) | (iu % 2 == 1)
    neg_vals = sims[iu[negative], ju[negative]]
    # a single pair has no negatives; report 0 rather than NaN
    return float(pos.mean()), float(neg_vals.mean()) if neg_vals.size else 0.0


def optimize_embeddings_demo(
    batch_init,
    temperature: float = DEFAULT_TEMPERATURE,
    steps: int = 200,
    step_size: float = 0.5,
) -> list[DescentRecord]:
    """Plain gradient descent on free embedding vectors.

    Runs ``steps`` updates of x <- x - step_size * grad and records loss,
    mean positive-pair cosine and mean negative-pair cosine before each step
    and after the last, so the trajectory has steps + 1 records. Pure
    function of its arguments.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if step_size <= 0:
        raise ValueError(f"step_size must be > 0, got {step_size}")
    x = np.array(_rows(batch_init), dtype=np.float64)
    trajectory = []
    for _ in range(steps):
        pos, neg = _pair_similarities(x)
        trajectory.append(DescentRecord(contrastive_loss(x, temperature), pos, neg))
        x -= step_size * contrastive_loss_grad(x, temperature)
    pos, neg = _pair_similarities(x)
    trajectory.append(DescentRecord(contrastive_loss(x, temperature), pos, neg))
    return trajectory
