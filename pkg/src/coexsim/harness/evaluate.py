"""Model evaluation against generated datasets, with CSV table export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import csv

import numpy as np

from ..detect import ClassifierModel, KpmWindow, infer
from ..errors import MissingDataError
from ..localize import RADAR, LocalizerConfig, evaluate_localizer, localize
from .datasets import load_kpm_windows, load_spectrogram_items


@dataclass(frozen=True)
class DetectorEvalRow:
    sinr_db: float
    accuracy: float
    n_windows: int


def eval_detector(model: ClassifierModel, dataset_dir, n_stack: int
                  ) -> list[DetectorEvalRow]:
    """Accuracy per sweep SINR point (radar and clean windows pooled)."""
    windows, labels, sinrs = load_kpm_windows(dataset_dir, n_stack)
    if not windows:
        raise MissingDataError("dataset produced no windows")
    preds = np.array([int(infer(model, w).radar_present) for w in windows])
    labels = np.asarray(labels)
    rows = []
    for sinr in sorted(set(sinrs.tolist())):
        sel = sinrs == sinr
        rows.append(DetectorEvalRow(float(sinr),
                                    float(np.mean(preds[sel] == labels[sel])),
                                    int(sel.sum())))
    return rows


def detector_accuracy(model: ClassifierModel, windows: list[KpmWindow],
                      labels) -> float:
    labels = np.asarray(labels)
    preds = np.array([int(infer(model, w).radar_present) for w in windows])
    return float(np.mean(preds == labels))


@dataclass(frozen=True)
class LocalizerEvalRow:
    sinr_db: float
    recall: float
    precision: float
    mean_iou: float
    n_truth: int


def eval_localizer(dataset_dir, config: LocalizerConfig = LocalizerConfig()
                   ) -> list[LocalizerEvalRow]:
    """Recall/precision/mean-IoU per sweep SINR point, radar class only."""
    by_sinr: dict[float, tuple[list, list]] = {}
    found_any = False
    for _, sinr, _, sgram, truths in load_spectrogram_items(dataset_dir):
        found_any = True
        preds = [b for b in localize(sgram, config) if b.label == RADAR]
        bucket = by_sinr.setdefault(sinr, ([], []))
        bucket[0].append(preds)
        bucket[1].append(truths)
    if not found_any:
        raise MissingDataError(f"no spectrogram items in {dataset_dir}")
    rows = []
    for sinr in sorted(by_sinr):
        preds, truths = by_sinr[sinr]
        m = evaluate_localizer(preds, truths)
        rows.append(LocalizerEvalRow(sinr, m.recall, m.precision, m.mean_iou,
                                     m.n_truth))
    return rows


def pooled_localizer_metrics(dataset_dir, config: LocalizerConfig = LocalizerConfig(),
                             min_sinr_db: float = float("-inf")):
    """Metrics over all items at or above min_sinr_db."""
    preds, truths = [], []
    for _, sinr, has_radar, sgram, truth in load_spectrogram_items(dataset_dir):
        if sinr < min_sinr_db or not has_radar:
            continue
        preds.append([b for b in localize(sgram, config) if b.label == RADAR])
        truths.append(truth)
    if not preds:
        raise MissingDataError("no items in requested SINR slice")
    return evaluate_localizer(preds, truths)


def write_detector_report(path, rows: list[DetectorEvalRow]) -> None:
    with open(str(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sinr_db", "accuracy", "n_windows"])
        for r in rows:
            writer.writerow([r.sinr_db, f"{r.accuracy:.6f}", r.n_windows])


def write_localizer_report(path, rows: list[LocalizerEvalRow]) -> None:
    with open(str(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sinr_db", "recall", "precision", "mean_iou", "n_truth"])
        for r in rows:
            writer.writerow([r.sinr_db, f"{r.recall:.6f}", f"{r.precision:.6f}",
                             f"{r.mean_iou:.6f}", r.n_truth])
