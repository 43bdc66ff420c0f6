"""Energy-threshold localization of signals in spectrograms.

The reference localizer is deliberately simple and deterministic so its
outputs can be reasoned about; it sits behind a plain function interface so
a learned detector can be dropped in instead.  Detection runs on two paths:

* transient path: bins exceeding a per-row noise floor (20th-percentile
  quantile estimate scaled to mean-equivalent for exponential periodogram
  statistics) by ``threshold_db_above_floor``; 8-connected components are
  merged across small gaps and kept if large enough.  This finds pulsed
  emitters even inside an occupied band, since the row floor tracks the
  local background.
* persistent path: rows whose mean power exceeds the quietest-row floor by
  the same threshold; contiguous runs become full-duration boxes.  This
  finds always-on wideband occupants that the per-row floor would otherwise
  absorb.

Box extents are then refined with floor-subtracted energy profiles trimmed
contiguously from the peak (time_trim_db for columns, freq_trim_db for
rows), which makes the reported extent depend on the signal's shape rather
than on how far above the detection threshold it happens to sit.

Classification is heuristic: a box is ``cellular`` when its time duty is
high and it is wide (persistent wideband occupancy), otherwise ``radar``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import csv
import math

import numpy as np
from scipy import ndimage

from .errors import InvalidParamsError
from .spectro import Spectrogram

RADAR = "radar"
CELLULAR = "cellular"

_PAD_ROWS = 8   # refinement window margin beyond detected bins
_PAD_COLS = 3


@dataclass(frozen=True)
class FreqTimeBox:
    """Axis-aligned box in the (frequency, time) plane."""

    f_low_hz: float
    f_high_hz: float
    t_start_s: float
    t_end_s: float
    label: str = RADAR
    confidence: float = 1.0

    def __post_init__(self):
        if not self.f_low_hz < self.f_high_hz:
            raise InvalidParamsError("f_low_hz must be < f_high_hz")
        if self.t_start_s > self.t_end_s:
            raise InvalidParamsError("t_start_s must be <= t_end_s")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidParamsError("confidence must be in [0, 1]")

    @property
    def bandwidth_hz(self) -> float:
        return self.f_high_hz - self.f_low_hz

    @property
    def duration_s(self) -> float:
        return self.t_end_s - self.t_start_s


@dataclass(frozen=True)
class LocalizerConfig:
    noise_floor_percentile: float = 20.0
    threshold_db_above_floor: float = 10.0
    min_box_bins: int = 4
    min_box_rows: int = 2  # rejects single-bin noise spikes smeared across overlapped columns
    merge_gap_bins: int = 3
    cellular_duty_threshold: float = 0.8
    cellular_min_bandwidth_hz: float = 1.8e6  # 10 PRB equivalents
    time_trim_db: float = 6.0
    freq_trim_db: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.noise_floor_percentile < 100.0:
            raise InvalidParamsError("noise_floor_percentile must be in (0, 100)")
        if self.threshold_db_above_floor <= 0:
            raise InvalidParamsError("threshold_db_above_floor must be > 0")


@dataclass
class _Component:
    """Internal detection with its supporting bins (rows, cols) kept for tests."""

    box: FreqTimeBox
    support_rows: np.ndarray
    support_cols: np.ndarray


def _contiguous_span(profile: np.ndarray, trim_db: float) -> tuple[int, int]:
    """Run of indices around the argmax staying within trim_db of the peak."""
    peak = int(np.argmax(profile))
    cut = profile[peak] * 10.0 ** (-trim_db / 10.0)
    lo = peak
    while lo > 0 and profile[lo - 1] >= cut:
        lo -= 1
    hi = peak
    while hi < len(profile) - 1 and profile[hi + 1] >= cut:
        hi += 1
    return lo, hi


def _refine_extent(lin: np.ndarray, floor_lin: np.ndarray, rows_idx: np.ndarray,
                   cols_idx: np.ndarray, config: LocalizerConfig) -> tuple[int, int, int, int]:
    """Floor-subtracted, peak-contiguous extent trim around a component."""
    n_rows, n_cols = lin.shape
    r0 = max(0, int(rows_idx.min()) - _PAD_ROWS)
    r1 = min(n_rows, int(rows_idx.max()) + 1 + _PAD_ROWS)
    c0 = max(0, int(cols_idx.min()) - _PAD_COLS)
    c1 = min(n_cols, int(cols_idx.max()) + 1 + _PAD_COLS)
    win = np.maximum(lin[r0:r1, c0:c1] - floor_lin[r0:r1, None], 0.0)
    col_energy = win.sum(axis=0)
    clo, chi = _contiguous_span(col_energy, config.time_trim_db)
    row_energy = win[:, clo:chi + 1].sum(axis=1)
    rlo, rhi = _contiguous_span(row_energy, config.freq_trim_db)
    return r0 + rlo, r0 + rhi, c0 + clo, c0 + chi


def _bins_to_box(spec: Spectrogram, rmin: int, rmax: int, cmin: int, cmax: int,
                 label: str, confidence: float) -> FreqTimeBox:
    return FreqTimeBox(
        f_low_hz=spec.f_start_hz + rmin * spec.freq_resolution_hz,
        f_high_hz=spec.f_start_hz + (rmax + 1) * spec.freq_resolution_hz,
        t_start_s=spec.t_start_s + cmin * spec.time_resolution_s,
        t_end_s=spec.t_start_s + (cmax + 1) * spec.time_resolution_s,
        label=label,
        confidence=confidence,
    )


def _squash_confidence(mean_excess_db: float) -> float:
    return float(np.clip(1.0 - math.exp(-max(mean_excess_db, 0.0) / 10.0), 0.0, 1.0))


def _extract_components(spec: Spectrogram, config: LocalizerConfig) -> list[_Component]:
    lin = 10.0 ** (spec.power_db / 10.0)
    n_rows, n_cols = lin.shape
    pct = config.noise_floor_percentile

    # Per-row floor: quantile scaled to mean-equivalent for exponential bins.
    row_q = np.percentile(lin, pct, axis=1)
    row_floor = row_q / (-np.log(1.0 - pct / 100.0))
    thr_lin = 10.0 ** (config.threshold_db_above_floor / 10.0)

    components: list[_Component] = []

    # min_box_bins counts distinct resolution cells: with overlapped columns
    # (hop < fft) one noise event smears across fft/hop columns, so those
    # correlated looks collapse onto the true time-frequency grid.
    overlap = max(1, round(1.0 / (spec.freq_resolution_hz * spec.time_resolution_s)))

    # Transient path: per-bin exceedances over the local row floor.
    active = lin > row_floor[:, None] * thr_lin
    if active.any():
        radius = max(1, int(np.ceil(config.merge_gap_bins / 2)))
        struct = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
        dilated = ndimage.binary_dilation(active, structure=struct)
        labels, n_comp = ndimage.label(dilated, structure=np.ones((3, 3), dtype=bool))
        for comp, sl in enumerate(ndimage.find_objects(labels), start=1):
            if sl is None:
                continue
            mask_sub = (labels[sl] == comp) & active[sl]
            rows_rel, cols_rel = np.nonzero(mask_sub)
            rows_idx = rows_rel + sl[0].start
            cols_idx = cols_rel + sl[1].start
            cells = set(zip(rows_idx.tolist(), (cols_idx // overlap).tolist()))
            if len(cells) < config.min_box_bins:
                continue
            if len(np.unique(rows_idx)) < config.min_box_rows:
                continue
            rmin, rmax = int(rows_idx.min()), int(rows_idx.max())
            cmin, cmax = int(cols_idx.min()), int(cols_idx.max())
            duty = len(np.unique(cols_idx)) / (cmax - cmin + 1)
            bw_hz = (rmax - rmin + 1) * spec.freq_resolution_hz
            label = (CELLULAR if duty >= config.cellular_duty_threshold
                     and bw_hz >= config.cellular_min_bandwidth_hz else RADAR)
            excess = np.mean(spec.power_db[sl][mask_sub]
                             - 10.0 * np.log10(row_floor[rows_idx] * thr_lin))
            rmin, rmax, cmin, cmax = _refine_extent(lin, row_floor, rows_idx,
                                                    cols_idx, config)
            box = _bins_to_box(spec, rmin, rmax, cmin, cmax, label,
                               _squash_confidence(float(excess)))
            components.append(_Component(box, rows_idx, cols_idx))

    # Persistent path: rows whose median power clears the quietest-row floor.
    # Medians ignore pulsed outliers, so pulsed emitters never register here.
    row_med = np.median(lin, axis=1)
    global_floor = np.percentile(row_med, pct)
    persistent = row_med > global_floor * thr_lin
    if persistent.any():
        gaps = np.nonzero(np.diff(np.nonzero(persistent)[0]) > config.merge_gap_bins)[0]
        runs = np.split(np.nonzero(persistent)[0], gaps + 1)
        for run in runs:
            if run.size == 0:
                continue
            rmin, rmax = int(run[0]), int(run[-1])
            bw_hz = (rmax - rmin + 1) * spec.freq_resolution_hz
            duty = 1.0  # persistent by construction
            label = (CELLULAR if duty >= config.cellular_duty_threshold
                     and bw_hz >= config.cellular_min_bandwidth_hz else RADAR)
            excess = np.mean(10.0 * np.log10(row_med[run] / (global_floor * thr_lin)))
            box = _bins_to_box(spec, rmin, rmax, 0, n_cols - 1, label,
                               _squash_confidence(float(excess)))
            rows_idx = np.repeat(run, n_cols)
            cols_idx = np.tile(np.arange(n_cols), run.size)
            components.append(_Component(box, rows_idx, cols_idx))

    return components


def localize(spec: Spectrogram, config: LocalizerConfig = LocalizerConfig()) -> list[FreqTimeBox]:
    """Detect and box signal occupancy; returns boxes sorted by confidence."""
    boxes = [c.box for c in _extract_components(spec, config)]
    return sorted(boxes, key=lambda b: -b.confidence)


def radar_truth_boxes(clean_radar_spec: Spectrogram,
                      config: LocalizerConfig = LocalizerConfig(),
                      pulse_gap_cols: int = 8,
                      dynamic_range_db: float = 40.0) -> list[FreqTimeBox]:
    """Ground-truth boxes from a noise-free radar spectrogram.

    Each pulse is segmented by gaps in the column-energy profile, then its
    extent is refined with the same trim levels the localizer applies, so
    the truth describes the pulse's support at the analysis resolution.
    """
    if clean_radar_spec.power_db.max() - clean_radar_spec.power_db.min() < 1.0:
        return []  # flat spectrogram, no signal
    lin = 10.0 ** (clean_radar_spec.power_db / 10.0)
    col_energy = lin.sum(axis=0)
    peak = col_energy.max()
    active_cols = np.nonzero(col_energy > peak * 10.0 ** (-dynamic_range_db / 10.0))[0]
    if active_cols.size == 0:
        return []
    segments = np.split(active_cols,
                        np.nonzero(np.diff(active_cols) > pulse_gap_cols)[0] + 1)
    zero_floor = np.zeros(lin.shape[0])
    out = []
    for seg in segments:
        sub = lin[:, seg[0]:seg[-1] + 1]
        rows_idx, cols_rel = np.nonzero(sub > sub.max() * 1e-3)
        cols_idx = cols_rel + seg[0]
        rmin, rmax, cmin, cmax = _refine_extent(lin, zero_floor, rows_idx,
                                                cols_idx, config)
        out.append(_bins_to_box(clean_radar_spec, rmin, rmax, cmin, cmax, RADAR, 1.0))
    return out


def iou(a: FreqTimeBox, b: FreqTimeBox) -> float:
    """Intersection over union in the (frequency x time) plane."""
    f_overlap = max(0.0, min(a.f_high_hz, b.f_high_hz) - max(a.f_low_hz, b.f_low_hz))
    t_overlap = max(0.0, min(a.t_end_s, b.t_end_s) - max(a.t_start_s, b.t_start_s))
    inter = f_overlap * t_overlap
    union = (a.bandwidth_hz * a.duration_s + b.bandwidth_hz * b.duration_s - inter)
    if union <= 0.0:
        return 1.0 if (a.f_low_hz, a.f_high_hz, a.t_start_s, a.t_end_s) == \
                      (b.f_low_hz, b.f_high_hz, b.t_start_s, b.t_end_s) else 0.0
    return inter / union


@dataclass(frozen=True)
class LocalizerMetrics:
    recall: float
    precision: float
    mean_iou: float
    n_truth: int = 0
    n_pred: int = 0


def evaluate_localizer(predictions: list[list[FreqTimeBox]],
                       ground_truth: list[list[FreqTimeBox]],
                       iou_threshold: float = 0.5) -> LocalizerMetrics:
    """Greedy one-to-one matching by descending IoU, class-aware.

    A truth box counts as recalled when its matched prediction reaches the
    IoU threshold; mean_iou is over matched pairs.
    """
    if len(predictions) != len(ground_truth):
        raise InvalidParamsError("predictions and ground_truth must pair per spectrogram")
    n_truth = n_pred = n_matched = 0
    matched_ious: list[float] = []
    for preds, truths in zip(predictions, ground_truth):
        n_truth += len(truths)
        n_pred += len(preds)
        pairs = []
        for ti, t in enumerate(truths):
            for pi, p in enumerate(preds):
                if t.label != p.label:
                    continue
                v = iou(t, p)
                if v > 0.0:
                    pairs.append((v, ti, pi))
        pairs.sort(key=lambda x: -x[0])
        used_t: set[int] = set()
        used_p: set[int] = set()
        for v, ti, pi in pairs:
            if ti in used_t or pi in used_p:
                continue
            used_t.add(ti)
            used_p.add(pi)
            if v >= iou_threshold:
                n_matched += 1
                matched_ious.append(v)
    recall = n_matched / n_truth if n_truth else 1.0
    precision = n_matched / n_pred if n_pred else (1.0 if n_truth == 0 else 0.0)
    mean_iou = float(np.mean(matched_ious)) if matched_ious else 0.0
    return LocalizerMetrics(recall, precision, mean_iou, n_truth, n_pred)


def radar_freq_extent(boxes: list[FreqTimeBox]) -> tuple[float, float] | None:
    """Union frequency extent of radar-class boxes; None when there are none."""
    radar_boxes = [b for b in boxes if b.label == RADAR]
    if not radar_boxes:
        return None
    return (min(b.f_low_hz for b in radar_boxes),
            max(b.f_high_hz for b in radar_boxes))


BOX_RECORD_FIELDS = ["file_id", "class", "f_low_hz", "f_high_hz",
                     "t_start_s", "t_end_s", "confidence"]


def write_box_records(path, records: list[tuple[str, FreqTimeBox]]) -> None:
    """Line-delimited box records: (file_id, box) pairs."""
    with open(str(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BOX_RECORD_FIELDS)
        for file_id, box in records:
            writer.writerow([file_id, box.label, repr(box.f_low_hz), repr(box.f_high_hz),
                             repr(box.t_start_s), repr(box.t_end_s), repr(box.confidence)])


def read_box_records(path) -> list[tuple[str, FreqTimeBox]]:
    out = []
    with open(str(path), newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append((row["file_id"], FreqTimeBox(
                f_low_hz=float(row["f_low_hz"]),
                f_high_hz=float(row["f_high_hz"]),
                t_start_s=float(row["t_start_s"]),
                t_end_s=float(row["t_end_s"]),
                label=row["class"],
                confidence=float(row["confidence"]),
            )))
    return out
