"""Depth benchmark metrics: RMSE, REL, log10 error and delta-threshold accuracies."""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from depthguard.constants import CSV_COLUMNS, DELTA_BASE, DEPTH_FLOOR, LOSS_COLUMNS
from depthguard.exceptions import DatasetError, DomainError, check_shape
from depthguard.tensor import Tensor
from depthguard.workers import map_ordered

ArrayLike = Union[Tensor, np.ndarray, Sequence[float]]
METRIC_NAMES = ["rmse", "rel", "log10", "d1", "d2", "d3"]


def _pair(y: ArrayLike, y_true: ArrayLike, caller: str) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=np.float64)
    y_true = np.asarray(y_true.data if isinstance(y_true, Tensor) else y_true, dtype=np.float64)
    check_shape(caller, y.shape, y_true.shape, "depth maps")
    if y.size == 0:
        raise DatasetError(f"[{caller}] empty depth map")
    return y, y_true


def _floored(y: np.ndarray, y_true: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return np.maximum(y, DEPTH_FLOOR), np.maximum(y_true, DEPTH_FLOOR)


def rmse(y: ArrayLike, y_true: ArrayLike) -> float:
    """Root mean squared error of one depth map."""
    y, y_true = _pair(y, y_true, "rmse")
    return float(np.sqrt(np.mean((y_true - y) ** 2)))


def rel(y: ArrayLike, y_true: ArrayLike) -> float:
    """Mean absolute relative error ``|y_true - y| / y_true``."""
    y, y_true = _floored(*_pair(y, y_true, "rel"))
    return float(np.mean(np.abs(y_true - y) / y_true))


def log10err(y: ArrayLike, y_true: ArrayLike) -> float:
    """Mean absolute difference of base-10 logarithms."""
    y, y_true = _floored(*_pair(y, y_true, "log10err"))
    return float(np.mean(np.abs(np.log10(y_true) - np.log10(y))))


def delta(y: ArrayLike, y_true: ArrayLike, k: int = 1) -> float:
    """Fraction of pixels with ``max(y / y_true, y_true / y) < 1.25 ** k``."""
    if k not in (1, 2, 3):
        raise DomainError(f"[delta] threshold exponent must be 1, 2 or 3, got {k}")
    y, y_true = _floored(*_pair(y, y_true, "delta"))
    ratio = np.maximum(y / y_true, y_true / y)
    return float(np.mean(ratio < DELTA_BASE**k))


def image_metrics(y: ArrayLike, y_true: ArrayLike) -> Dict[str, float]:
    """All six metrics of one prediction."""
    return {
        "rmse": rmse(y, y_true),
        "rel": rel(y, y_true),
        "log10": log10err(y, y_true),
        "d1": delta(y, y_true, 1),
        "d2": delta(y, y_true, 2),
        "d3": delta(y, y_true, 3),
    }


@dataclass
class EvalReport:
    """Dataset-mean metrics of one configuration under one attack."""

    rmse: float
    rel: float
    log10: float
    delta1: float
    delta2: float
    delta3: float
    n_samples: int
    config: str = "-"
    attack: str = "none"
    eps: float = 0.0
    iters: int = 0
    losses: Optional[Dict[str, float]] = None

    def as_row(self) -> Dict[str, object]:
        """Row in CSV column order."""
        return {
            "config": self.config,
            "attack": self.attack,
            "eps": self.eps,
            "iters": self.iters,
            "rmse": self.rmse,
            "rel": self.rel,
            "log10": self.log10,
            "d1": self.delta1,
            "d2": self.delta2,
            "d3": self.delta3,
            "n": self.n_samples,
        }


def aggregate(per_image: List[Dict[str, float]], losses: Optional[List[Dict[str, float]]] = None, **descriptor):
    """Average per-image metrics (and optional per-image loss breakdowns) in sample order.

    :raises DatasetError: no samples
    """
    if not per_image:
        raise DatasetError("cannot evaluate an empty split")
    n = len(per_image)
    means = {name: math.fsum(m[name] for m in per_image) / n for name in METRIC_NAMES}
    loss_means = None
    if losses:
        loss_means = {key: math.fsum(row[key] for row in losses) / len(losses) for key in losses[0]}
    return EvalReport(
        rmse=means["rmse"],
        rel=means["rel"],
        log10=means["log10"],
        delta1=means["d1"],
        delta2=means["d2"],
        delta3=means["d3"],
        n_samples=n,
        losses=loss_means,
        **descriptor,
    )


def evaluate_dataset(predict: Callable[[int], tuple], count: int, desc: str = "evaluating", **descriptor) -> EvalReport:
    """Evaluate ``count`` samples and return the dataset-mean report.

    :param predict: maps a sample index to ``(prediction, ground truth)`` or
        ``(prediction, ground truth, loss breakdown dict)``
    :param count: number of samples
    :param descriptor: config/attack/eps/iters fields copied into the report
    :raises DatasetError: ``count`` is zero
    """
    if count <= 0:
        raise DatasetError("cannot evaluate an empty split")

    def run(index):
        y, y_true, *extra = predict(index)
        return image_metrics(y, y_true), (extra[0] if extra else None)

    results = map_ordered(run, range(count), desc=desc)
    losses = [loss for _, loss in results if loss is not None]
    report = aggregate([m for m, _ in results], losses=losses or None, **descriptor)
    logger.debug(f"{report.config}/{report.attack} eps={report.eps} T={report.iters}: rmse={report.rmse:.4f}")
    return report


def reports_to_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """Stack reports into a DataFrame with the CSV column layout."""
    return pd.DataFrame([r.as_row() for r in reports], columns=CSV_COLUMNS)


def losses_to_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """Stack the loss breakdowns of reports that carry one."""
    rows = []
    for r in reports:
        if r.losses is None:
            continue
        row = {"config": r.config, "attack": r.attack, "eps": r.eps, "iters": r.iters}
        row.update({key: r.losses.get(key, float("nan")) for key in LOSS_COLUMNS[4:]})
        rows.append(row)
    return pd.DataFrame(rows, columns=LOSS_COLUMNS)


def _write_frame(path, frame: pd.DataFrame, append: bool):
    path = Path(path)
    exists = append and path.exists() and path.stat().st_size > 0
    frame.to_csv(path, mode="a" if exists else "w", header=not exists, index=False, float_format="%.6f")
    logger.info(f"Wrote {len(frame)} row(s) to {path}")


def write_reports(path, reports: Sequence[EvalReport], append: bool = True):
    """Write reports as CSV with six decimal places; appends below an existing header when ``append``."""
    _write_frame(path, reports_to_frame(reports), append)


def write_losses(path, reports: Sequence[EvalReport], append: bool = True):
    """Write the loss breakdown columns of ``reports`` as CSV."""
    _write_frame(path, losses_to_frame(reports), append)
