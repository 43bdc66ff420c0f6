"""Abstract cellular uplink at PRB granularity under pulsed radar interference.

The link model is intentionally simple: per active PRB an effective SINR is
the configured base SINR degraded by duty-cycle-weighted radar interference
(linear-domain), BLER follows a logistic waterfall in the gap between the
MCS's required SINR and the effective SINR, and throughput is the offered
load capped by the surviving capacity.  Interference profile entries are
expressed in units of the link's per-PRB noise floor.

Telemetry comes out as KpmRecord rows (one per reporting period) and can be
logged to CSV with an optional trailing label column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv

import numpy as np
from scipy import special

from .errors import InvalidParamsError
from .signals import RadarParams

MCS_MIN = 0
MCS_MAX = 28


@dataclass(frozen=True)
class McsTable:
    """Spectral efficiency and required SINR per MCS index 0..28.

    LTE-shaped constants: efficiency climbs 0.15 to 5.55 bits/symbol
    equivalent, required SINR is linear in the index from -6 to +22 dB.
    """

    spectral_efficiency: np.ndarray
    sinr_required_db: np.ndarray

    @classmethod
    def default(cls) -> "McsTable":
        idx = np.arange(MCS_MAX + 1)
        return cls(
            spectral_efficiency=0.15 + idx * (5.55 - 0.15) / MCS_MAX,
            sinr_required_db=-6.0 + idx * 1.0,
        )

    def __post_init__(self):
        eff = np.asarray(self.spectral_efficiency, dtype=float)
        req = np.asarray(self.sinr_required_db, dtype=float)
        if eff.size != MCS_MAX + 1 or req.size != MCS_MAX + 1:
            raise InvalidParamsError("MCS table must have 29 entries")
        if not np.all(np.diff(eff) > 0):
            raise InvalidParamsError("spectral efficiency must be strictly increasing")
        if not np.all(np.diff(req) >= 0):
            raise InvalidParamsError("required SINR must be non-decreasing")
        object.__setattr__(self, "spectral_efficiency", eff)
        object.__setattr__(self, "sinr_required_db", req)

    def efficiency(self, mcs: int) -> float:
        return float(self.spectral_efficiency[self._check(mcs)])

    def required_sinr_db(self, mcs: int) -> float:
        return float(self.sinr_required_db[self._check(mcs)])

    @staticmethod
    def _check(mcs: int) -> int:
        if not MCS_MIN <= mcs <= MCS_MAX:
            raise InvalidParamsError(f"mcs {mcs} outside {MCS_MIN}..{MCS_MAX}")
        return int(mcs)


@dataclass(frozen=True)
class LinkConfig:
    n_prbs: int = 50
    prb_bandwidth_hz: float = 180e3
    symbol_overhead: float = 0.75
    base_sinr_db: float = 30.0
    bler_slope: float = 0.5          # per dB of SINR shortfall
    kpm_period_s: float = 0.01
    sinr_jitter_db: float = 0.5      # per-period wideband fading jitter

    def __post_init__(self):
        if self.n_prbs <= 0:
            raise InvalidParamsError("n_prbs must be > 0")
        if not 0.0 < self.symbol_overhead <= 1.0:
            raise InvalidParamsError("symbol_overhead must be in (0, 1]")
        if self.kpm_period_s <= 0:
            raise InvalidParamsError("kpm_period_s must be > 0")

    @property
    def band_low_hz(self) -> float:
        return -self.n_prbs * self.prb_bandwidth_hz / 2.0

    def prb_edges_hz(self) -> np.ndarray:
        return self.band_low_hz + np.arange(self.n_prbs + 1) * self.prb_bandwidth_hz


@dataclass(frozen=True)
class KpmRecord:
    t_s: float
    throughput_mbps: float
    bler_pct: float
    mcs: int
    bsr_bytes: int
    sinr_db: float

    def __post_init__(self):
        if self.throughput_mbps < 0 or not 0 <= self.bler_pct <= 100:
            raise InvalidParamsError("KPM fields out of range")
        if not MCS_MIN <= self.mcs <= MCS_MAX or self.bsr_bytes < 0:
            raise InvalidParamsError("KPM fields out of range")


@dataclass(frozen=True)
class RadarInterferenceProfile:
    """Per-PRB radar interference (units of the per-PRB noise floor) and duty."""

    per_prb_interference: np.ndarray
    duty_cycle: float

    def __post_init__(self):
        arr = np.asarray(self.per_prb_interference, dtype=float)
        if np.any(arr < 0):
            raise InvalidParamsError("interference entries must be >= 0")
        if not 0.0 <= self.duty_cycle <= 1.0:
            raise InvalidParamsError("duty_cycle must be in [0, 1]")
        object.__setattr__(self, "per_prb_interference", arr)

    @classmethod
    def silent(cls, n_prbs: int) -> "RadarInterferenceProfile":
        return cls(np.zeros(n_prbs), 0.0)


def _sinc_sq_integral(a: float, b: float) -> float:
    """Integral of sinc^2(x) = (sin(pi x)/(pi x))^2 over [a, b]; total mass 1."""
    def antideriv(x: float) -> float:
        if x == 0.0:
            return 0.0
        si, _ = special.sici(2.0 * np.pi * x)
        return (si - np.sin(np.pi * x) ** 2 / (np.pi * x)) / np.pi
    return antideriv(b) - antideriv(a)


def radar_psd_per_prb(radar: RadarParams, p_radar_linear: float,
                      link: LinkConfig) -> RadarInterferenceProfile:
    """Integrate the analytic pulse PSD, sinc^2((f - fc) * pw), over each PRB.

    ``p_radar_linear`` is the pulse-on (peak) radar power at the receiver in
    whatever linear unit the caller works in; the profile entries come out
    in the same unit.  Total mass over all frequencies equals
    ``p_radar_linear``.
    """
    if p_radar_linear < 0:
        raise InvalidParamsError("p_radar_linear must be >= 0")
    edges = link.prb_edges_hz()
    out = np.zeros(link.n_prbs)
    if p_radar_linear > 0.0:
        pw = radar.pulse_width_s
        fc = radar.carrier_hz
        for i in range(link.n_prbs):
            a = (edges[i] - fc) * pw
            b = (edges[i + 1] - fc) * pw
            out[i] = p_radar_linear * _sinc_sq_integral(a, b)
    return RadarInterferenceProfile(out, radar.duty_cycle())


def apply_prb_mask(link: LinkConfig, prbs_to_blank) -> np.ndarray:
    """All-active mask with exactly the listed PRBs blanked; idempotent."""
    mask = np.ones(link.n_prbs, dtype=bool)
    for prb in prbs_to_blank:
        if not 0 <= prb < link.n_prbs:
            raise InvalidParamsError(f"PRB index {prb} out of range 0..{link.n_prbs - 1}")
        mask[prb] = False
    return mask


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


class UplinkSimulator:
    """Single-writer state machine; each step emits one KPM record.

    State is the elapsed time and the uplink buffer backlog; everything
    else is a pure function of the step inputs and the seed.
    """

    def __init__(self, link: LinkConfig = LinkConfig(),
                 mcs_table: McsTable | None = None):
        self.link = link
        self.mcs_table = mcs_table or McsTable.default()
        self.t_s = 0.0
        self.backlog_bits = 0.0

    def reset(self) -> None:
        self.t_s = 0.0
        self.backlog_bits = 0.0

    def step(self, mcs: int, prb_mask: np.ndarray,
             profile: RadarInterferenceProfile,
             offered_load_mbps: float, seed=None) -> KpmRecord:
        link = self.link
        mcs = McsTable._check(mcs)
        prb_mask = np.asarray(prb_mask, dtype=bool)
        if prb_mask.size != link.n_prbs:
            raise InvalidParamsError("prb_mask length != n_prbs")
        if profile.per_prb_interference.size != link.n_prbs:
            raise InvalidParamsError("profile length != n_prbs")

        rng = np.random.default_rng(seed)
        base_db = link.base_sinr_db + rng.normal(0.0, link.sinr_jitter_db)

        # duty-weighted interference, linear-domain, noise floor = 1 per PRB
        i_over_n = profile.per_prb_interference * profile.duty_cycle
        sinr_eff_db = base_db - 10.0 * np.log10(1.0 + i_over_n)

        active = prb_mask
        n_active = int(active.sum())
        if n_active == 0:
            self.backlog_bits += offered_load_mbps * 1e6 * link.kpm_period_s
            self.t_s += link.kpm_period_s
            return KpmRecord(self.t_s, 0.0, 0.0, mcs,
                             int(self.backlog_bits / 8), base_db)

        required = self.mcs_table.required_sinr_db(mcs)
        per_prb_bler = _logistic(link.bler_slope * (required - sinr_eff_db[active]))
        bler = float(np.mean(per_prb_bler))

        capacity_mbps = (self.mcs_table.efficiency(mcs) * n_active
                         * link.prb_bandwidth_hz * link.symbol_overhead
                         * (1.0 - bler)) / 1e6
        throughput = min(offered_load_mbps, capacity_mbps)
        self.backlog_bits += max(0.0, (offered_load_mbps - throughput)
                                 * 1e6 * link.kpm_period_s)
        self.t_s += link.kpm_period_s
        return KpmRecord(
            t_s=self.t_s,
            throughput_mbps=throughput,
            bler_pct=100.0 * bler,
            mcs=mcs,
            bsr_bytes=int(self.backlog_bits / 8),
            sinr_db=float(np.mean(sinr_eff_db[active])),
        )


KPM_CSV_FIELDS = ["t_s", "throughput_mbps", "bler_pct", "mcs", "bsr_bytes", "sinr_db"]


def write_kpm_csv(path, records: list[KpmRecord], labels: list[int] | None = None) -> None:
    """KPM log; with labels a trailing 0/1 radar-present column is added."""
    if labels is not None and len(labels) != len(records):
        raise InvalidParamsError("labels length != records length")
    with open(str(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(KPM_CSV_FIELDS + (["label"] if labels is not None else []))
        for i, r in enumerate(records):
            row = [repr(r.t_s), repr(r.throughput_mbps), repr(r.bler_pct),
                   r.mcs, r.bsr_bytes, repr(r.sinr_db)]
            if labels is not None:
                row.append(labels[i])
            writer.writerow(row)


def read_kpm_csv(path) -> tuple[list[KpmRecord], list[int] | None]:
    records: list[KpmRecord] = []
    labels: list[int] = []
    has_labels = False
    with open(str(path), newline="") as fh:
        reader = csv.DictReader(fh)
        has_labels = reader.fieldnames is not None and "label" in reader.fieldnames
        for row in reader:
            records.append(KpmRecord(
                t_s=float(row["t_s"]),
                throughput_mbps=float(row["throughput_mbps"]),
                bler_pct=float(row["bler_pct"]),
                mcs=int(row["mcs"]),
                bsr_bytes=int(row["bsr_bytes"]),
                sinr_db=float(row["sinr_db"]),
            ))
            if has_labels:
                labels.append(int(row["label"]))
    return records, (labels if has_labels else None)
