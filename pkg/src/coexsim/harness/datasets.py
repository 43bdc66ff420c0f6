"""Labeled dataset generation for the detector and the localizer.

Datasets follow the regulatory power convention: the combined cellular plus
noise density is pinned (default -109 dBm/MHz, split equally between the
two) and the radar density is swept to hit each target SINR.  The radar
seen by the uplink is the same emitter scaled by a fixed coupling gain,
which ties the sensing-path SINR to the link-path interference so KPM
labels and spectrogram labels describe one physical condition.

Every item derives its RNG from (seed, item index), so regeneration with
the same seed is byte-identical regardless of chunking.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import csv

import numpy as np

from ..errors import InvalidParamsError, MissingDataError
from ..localize import LocalizerConfig, radar_truth_boxes, write_box_records, read_box_records
from ..ranlink import (
    KpmRecord,
    LinkConfig,
    RadarInterferenceProfile,
    UplinkSimulator,
    radar_psd_per_prb,
    read_kpm_csv,
    write_kpm_csv,
)
from ..detect import KpmWindow, window_kpms
from ..fileio import write_sidecar
from ..signals import (
    CellularParams,
    IqBuffer,
    RadarParams,
    SinrSpec,
    dbm_to_linear,
    gen_cellular_baseband,
    gen_radar_pulse_train,
    mix_at_sinr,
)
from ..spectro import StftConfig, save_spectrogram, load_spectrogram, stft_spectrogram

COMBINED_DBM_MHZ = -109.0  # regulatory cap on cellular + noise density
DEFAULT_SINR_SWEEP = (-4.0, 0.0, 4.0, 8.0, 12.0)
CENTER_OFFSETS_HZ = (-2.5e6, 0.0, 2.5e6)
DEFAULT_COUPLING_DB = 52.0   # sensing-reference to base-station interference gain
OBSERVATION_WINDOW_S = 10e-3

# Mode-2 analysis settings: 75% overlap so a 13..52 us pulse always lands
# well inside some window, avoiding taper loss at column edges.
MODE2_STFT = StftConfig(fft_size=1024, hop=256, window="hann")

KPM_DATA_FILE = "kpm_dataset.csv"
ITEMS_FILE = "items.csv"
TRUTH_FILE = "truth_boxes.csv"


def draw_radar_params(rng: np.random.Generator,
                      window_s: float = OBSERVATION_WINDOW_S) -> RadarParams:
    """Random in-range pulse train phase-jittered inside the window."""
    pw = float(rng.uniform(13e-6, 52e-6))
    prr = float(rng.uniform(500.0, 1100.0))
    max_pulses = int((window_s - pw) * prr) + 1
    n_pulses = min(max_pulses, max(1, int(window_s * prr)))
    slack = window_s - ((n_pulses - 1) / prr + pw)
    start = float(rng.uniform(0.0, max(slack - 1e-5, 0.0)))
    offset = float(rng.choice(CENTER_OFFSETS_HZ))
    return RadarParams(pw, prr, n_pulses, window_s, center_offset_hz=offset,
                       burst_start_s=start)


def interference_units(sinr_db: float, link: LinkConfig,
                       combined_dbm_mhz: float = COMBINED_DBM_MHZ,
                       coupling_db: float = DEFAULT_COUPLING_DB) -> float:
    """Radar pulse-on power at the base station, in per-PRB-noise units."""
    spec = SinrSpec.from_target(sinr_db, combined_dbm_mhz)
    d_radar = dbm_to_linear(spec.p_radar_dbm_mhz)          # mW/MHz peak
    noise_per_prb = (dbm_to_linear(spec.p_noise_dbm_mhz)
                     * link.prb_bandwidth_hz / 1e6)        # mW
    return dbm_to_linear(coupling_db) * d_radar / noise_per_prb


@dataclass(frozen=True)
class KpmDatasetConfig:
    sinr_sweep_db: tuple = DEFAULT_SINR_SWEEP
    items_per_class_per_sinr: int = 100
    records_per_item: int = 8
    coupling_db: float = DEFAULT_COUPLING_DB
    combined_dbm_mhz: float = COMBINED_DBM_MHZ
    seed: int = 0


def gen_kpm_dataset(out_dir, config: KpmDatasetConfig = KpmDatasetConfig()) -> Path:
    """Labeled KPM records under varied link conditions, radar on/off.

    Each item is a fresh short uplink run under one steady condition, so
    sliding windows never straddle a label change.  Link operating point
    (base SINR, MCS, offered load) is drawn per item to cover realistic
    spread; the radar parameters are drawn per radar item.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records: list[KpmRecord] = []
    labels: list[int] = []
    items: list[dict] = []
    item_idx = 0
    for sinr in config.sinr_sweep_db:
        for label in (0, 1):
            for _ in range(config.items_per_class_per_sinr):
                rng = np.random.default_rng([config.seed, item_idx])
                # Operating point mimics a link-adapted system: the serving
                # MCS sits 6..14 dB below the clean channel quality, so
                # radar-free BLER stays under ~5%.
                mcs = int(rng.integers(4, 29))
                margin_db = float(rng.uniform(6.0, 14.0))
                base_sinr = -6.0 + mcs + margin_db
                link = LinkConfig(base_sinr_db=base_sinr)
                offered = float(rng.uniform(1.0, 5.0))
                if label:
                    params = draw_radar_params(rng)
                    units = interference_units(sinr, link, config.combined_dbm_mhz,
                                               config.coupling_db)
                    profile = radar_psd_per_prb(params, units, link)
                else:
                    profile = RadarInterferenceProfile.silent(link.n_prbs)
                sim = UplinkSimulator(link)
                mask = np.ones(link.n_prbs, dtype=bool)
                row_start = len(records)
                for _ in range(config.records_per_item):
                    seed = int(rng.integers(2 ** 63))
                    records.append(sim.step(mcs, mask, profile, offered, seed))
                    labels.append(label)
                items.append({
                    "item_id": item_idx,
                    "row_start": row_start,
                    "n_records": config.records_per_item,
                    "sinr_db": sinr,
                    "label": label,
                })
                item_idx += 1

    write_kpm_csv(out_dir / KPM_DATA_FILE, records, labels)
    with open(out_dir / ITEMS_FILE, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["item_id", "row_start",
                                                "n_records", "sinr_db", "label"])
        writer.writeheader()
        writer.writerows(items)
    write_sidecar(out_dir / "dataset.meta", {
        "kind": "kpm",
        "seed": config.seed,
        "sinr_sweep_db": " ".join(str(s) for s in config.sinr_sweep_db),
        "items_per_class_per_sinr": config.items_per_class_per_sinr,
        "records_per_item": config.records_per_item,
        "coupling_db": config.coupling_db,
        "combined_dbm_mhz": config.combined_dbm_mhz,
    })
    return out_dir


def load_kpm_windows(dataset_dir, n_stack: int
                     ) -> tuple[list[KpmWindow], np.ndarray, np.ndarray]:
    """(windows, labels, per-window sweep SINR); windows stay inside items."""
    dataset_dir = Path(dataset_dir)
    data_path = dataset_dir / KPM_DATA_FILE
    items_path = dataset_dir / ITEMS_FILE
    if not data_path.exists() or not items_path.exists():
        raise MissingDataError(f"no KPM dataset in {dataset_dir}")
    records, labels = read_kpm_csv(data_path)
    windows: list[KpmWindow] = []
    out_labels: list[int] = []
    out_sinr: list[float] = []
    with open(items_path, newline="") as fh:
        for row in csv.DictReader(fh):
            start = int(row["row_start"])
            n = int(row["n_records"])
            item_records = records[start:start + n]
            for w in window_kpms(item_records, n_stack):
                windows.append(w)
                out_labels.append(int(row["label"]))
                out_sinr.append(float(row["sinr_db"]))
    return windows, np.asarray(out_labels), np.asarray(out_sinr)


@dataclass(frozen=True)
class SpectrogramDatasetConfig:
    sinr_sweep_db: tuple = DEFAULT_SINR_SWEEP
    items_per_sinr: int = 100
    absent_fraction: float = 0.2   # extra cellular-only items per SINR point
    combined_dbm_mhz: float = COMBINED_DBM_MHZ
    stft: StftConfig = MODE2_STFT
    localizer: LocalizerConfig = LocalizerConfig()
    seed: int = 0


def gen_spectrogram_dataset(out_dir,
                            config: SpectrogramDatasetConfig = SpectrogramDatasetConfig()
                            ) -> Path:
    """Composite spectrograms plus analysis-resolution ground-truth boxes.

    Truth boxes are extracted from the noise-free radar component with the
    same trim levels the reference localizer uses, so they describe what
    the pulse occupies at the configured STFT resolution.
    """
    out_dir = Path(out_dir)
    (out_dir / "specs").mkdir(parents=True, exist_ok=True)
    truth_records = []
    items = []
    item_idx = 0
    for sinr in config.sinr_sweep_db:
        n_absent = int(round(config.items_per_sinr * config.absent_fraction))
        for has_radar in [True] * config.items_per_sinr + [False] * n_absent:
            rng = np.random.default_rng([config.seed, item_idx])
            file_id = f"item_{item_idx:05d}"
            cell = gen_cellular_baseband(CellularParams(), OBSERVATION_WINDOW_S,
                                         seed=int(rng.integers(2 ** 63)))
            if has_radar:
                params = draw_radar_params(rng)
                radar = gen_radar_pulse_train(params, OBSERVATION_WINDOW_S)
                spec_powers = SinrSpec.from_target(sinr, config.combined_dbm_mhz)
            else:
                radar = IqBuffer(np.zeros(cell.n_samples), cell.sample_rate_hz)
                base = SinrSpec.from_target(0.0, config.combined_dbm_mhz)
                spec_powers = SinrSpec(float("-inf"), base.p_cellular_dbm_mhz,
                                       base.p_noise_dbm_mhz)
            composite, achieved = mix_at_sinr(radar, cell, spec_powers,
                                              seed=int(rng.integers(2 ** 63)))
            sgram = stft_spectrogram(composite, config.stft)
            save_spectrogram(out_dir / "specs" / f"{file_id}.bin", sgram, {
                "file_id": file_id,
                "sinr_db": sinr,
                "achieved_sinr_db": repr(achieved),
                "has_radar": int(has_radar),
            })
            if has_radar:
                clean = stft_spectrogram(radar, config.stft)
                for box in radar_truth_boxes(clean, config.localizer):
                    truth_records.append((file_id, box))
            items.append({"file_id": file_id, "sinr_db": sinr,
                          "has_radar": int(has_radar)})
            item_idx += 1

    write_box_records(out_dir / TRUTH_FILE, truth_records)
    with open(out_dir / ITEMS_FILE, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["file_id", "sinr_db", "has_radar"])
        writer.writeheader()
        writer.writerows(items)
    write_sidecar(out_dir / "dataset.meta", {
        "kind": "spectrogram",
        "seed": config.seed,
        "sinr_sweep_db": " ".join(str(s) for s in config.sinr_sweep_db),
        "items_per_sinr": config.items_per_sinr,
        "absent_fraction": config.absent_fraction,
        "combined_dbm_mhz": config.combined_dbm_mhz,
        "fft_size": config.stft.fft_size,
        "hop": config.stft.hop_size,
        "window": config.stft.window,
    })
    return out_dir


def load_spectrogram_items(dataset_dir):
    """Yields (file_id, sinr_db, has_radar, Spectrogram, truth boxes)."""
    dataset_dir = Path(dataset_dir)
    items_path = dataset_dir / ITEMS_FILE
    if not items_path.exists():
        raise MissingDataError(f"no spectrogram dataset in {dataset_dir}")
    truth_by_id: dict[str, list] = {}
    truth_path = dataset_dir / TRUTH_FILE
    if truth_path.exists():
        for file_id, box in read_box_records(truth_path):
            truth_by_id.setdefault(file_id, []).append(box)
    with open(items_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        file_id = row["file_id"]
        sgram, _ = load_spectrogram(dataset_dir / "specs" / f"{file_id}.bin")
        yield (file_id, float(row["sinr_db"]), bool(int(row["has_radar"])),
               sgram, truth_by_id.get(file_id, []))
