"""Perception loss, recall, and their aggregation over frames and seeds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FrameMetrics:
    loss: float
    recall: float
    n_ground_truth: int
    n_detected: int


@dataclass(frozen=True)
class Summary:
    frames: int
    mean_loss: float
    mean_recall: float
    loss_std: float = 0.0
    recall_std: float = 0.0
    n_seeds: int = 1


def perception_loss(ground_truth: dict, fused) -> float:
    """Sum of the weights of ground-truth objects missing from ``fused``."""
    return float(sum(w for o, w in ground_truth.items() if o not in fused))


def recall(ground_truth, fused) -> float:
    gt = set(ground_truth)
    if not gt:
        return 1.0
    return len(gt & set(fused)) / len(gt)


def frame_metrics(ground_truth: dict, fused) -> FrameMetrics:
    gt = set(ground_truth)
    hit = len(gt & set(fused))
    return FrameMetrics(
        loss=perception_loss(ground_truth, fused),
        recall=hit / len(gt) if gt else 1.0,
        n_ground_truth=len(gt),
        n_detected=hit,
    )


def aggregate(stream) -> Summary:
    """Frame-averaged loss and recall.

    ``stream`` is either an iterable of ``FrameMetrics`` (one run) or an
    iterable of such iterables (one per seed); in the latter case the means
    are over seeds and the standard deviations are across seeds.
    """
    items = list(stream)
    if not items:
        raise ValueError("cannot aggregate an empty stream")
    if isinstance(items[0], FrameMetrics):
        loss = np.array([m.loss for m in items])
        rec = np.array([m.recall for m in items])
        return Summary(len(items), float(loss.mean()), float(rec.mean()),
                       float(loss.std()), float(rec.std()))
    per_seed = [aggregate(s) for s in items]
    losses = np.array([s.mean_loss for s in per_seed])
    recalls = np.array([s.mean_recall for s in per_seed])
    return Summary(
        frames=sum(s.frames for s in per_seed),
        mean_loss=float(losses.mean()),
        mean_recall=float(recalls.mean()),
        loss_std=float(losses.std(ddof=1)) if len(per_seed) > 1 else 0.0,
        recall_std=float(recalls.std(ddof=1)) if len(per_seed) > 1 else 0.0,
        n_seeds=len(per_seed),
    )
