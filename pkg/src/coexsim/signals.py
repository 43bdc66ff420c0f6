"""Baseband synthesis and SINR calibration for radar-cellular coexistence.

Everything here works on complex baseband I/Q at a common sample rate
(default 15.36 Msps carrying a 10 MHz cellular channel, DC-centered so the
usable band is -5..+5 MHz).  Power levels follow the regulatory convention
of spectral densities in dBm/MHz:

* cellular and noise densities are average power per MHz over the band they
  occupy,
* radar density is a peak (pulse-on) quantity referenced to a 1 MHz
  measurement bandwidth, which matches how detection thresholds are stated
  for pulsed emitters.

The SINR of a mix treats the radar as the desired signal and cellular+noise
as the interference, i.e. ``10*log10(P_radar / (P_cellular + P_noise))``
with all three terms in linear mW/MHz.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParamsError, SilentComponentError, EmptyBandError
from .fileio import write_sidecar, read_sidecar

DEFAULT_SAMPLE_RATE_HZ = 15.36e6
RADAR_REF_BANDWIDTH_HZ = 1e6  # reference bandwidth for peak radar density

PULSE_WIDTH_RANGE_S = (13e-6, 52e-6)
PRR_RANGE_HZ = (500.0, 1100.0)


def dbm_to_linear(dbm: float) -> float:
    """dBm/MHz -> mW/MHz (or any dB quantity to its linear ratio)."""
    return 10.0 ** (dbm / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * np.log10(x) if x > 0 else float("-inf")


@dataclass(frozen=True)
class IqBuffer:
    """Complex baseband sample stream.

    Treated as immutable after creation; do not write into ``samples``.
    """

    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.complex128))
        if self.sample_rate_hz <= 0:
            raise InvalidParamsError("sample_rate_hz must be > 0")

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def mean_power(self) -> float:
        if self.n_samples == 0:
            return 0.0
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass(frozen=True)
class RadarParams:
    """Pulsed CW radar burst description (unmodulated fixed-frequency pulses)."""

    pulse_width_s: float
    prr_hz: float
    pulses_per_burst: int
    burst_length_s: float
    center_offset_hz: float = 0.0
    doppler_shift_hz: float = 0.0
    amplitude: float = 1.0
    burst_start_s: float = 0.0  # pulse-train phase within the burst period

    def validate(self, sample_rate_hz: float) -> None:
        lo, hi = PULSE_WIDTH_RANGE_S
        if not lo <= self.pulse_width_s <= hi:
            raise InvalidParamsError(
                f"pulse_width_s {self.pulse_width_s} outside valid range {lo}..{hi}")
        lo, hi = PRR_RANGE_HZ
        if not lo <= self.prr_hz <= hi:
            raise InvalidParamsError(f"prr_hz {self.prr_hz} outside valid range {lo}..{hi}")
        if self.pulses_per_burst < 0:
            raise InvalidParamsError("pulses_per_burst must be >= 0")
        if self.burst_length_s <= 0:
            raise InvalidParamsError("burst_length_s must be > 0")
        if self.amplitude < 0:
            raise InvalidParamsError("amplitude must be >= 0")
        if self.burst_start_s < 0:
            raise InvalidParamsError("burst_start_s must be >= 0")
        if self.pulses_per_burst / self.prr_hz > self.burst_length_s:
            raise InvalidParamsError("pulses do not fit in the burst period")
        if self.pulses_per_burst > 0:
            last_end = (self.burst_start_s
                        + (self.pulses_per_burst - 1) / self.prr_hz
                        + self.pulse_width_s)
            if last_end > self.burst_length_s:
                raise InvalidParamsError("pulse train overruns the burst period")
        if abs(self.carrier_hz) >= sample_rate_hz / 2:
            raise InvalidParamsError("carrier aliases: |offset + doppler| >= fs/2")

    @property
    def carrier_hz(self) -> float:
        return self.center_offset_hz + self.doppler_shift_hz

    @property
    def main_lobe_half_width_hz(self) -> float:
        """First spectral null of the rectangular pulse, 1/pulse_width."""
        return 1.0 / self.pulse_width_s

    def duty_cycle(self) -> float:
        """On-air time fraction within one burst period."""
        return min(1.0, self.pulses_per_burst * self.pulse_width_s / self.burst_length_s)


@dataclass(frozen=True)
class CellularParams:
    """Spectral occupancy of the cellular uplink stand-in."""

    n_prbs: int = 50
    prb_bandwidth_hz: float = 180e3
    active_prb_mask: np.ndarray | None = None  # None means all PRBs active
    per_prb_power: float = 1.0

    def __post_init__(self):
        if self.active_prb_mask is not None:
            object.__setattr__(
                self, "active_prb_mask", np.asarray(self.active_prb_mask, dtype=bool))

    def validate(self, sample_rate_hz: float) -> None:
        if self.n_prbs <= 0:
            raise InvalidParamsError("n_prbs must be > 0")
        if self.prb_bandwidth_hz <= 0:
            raise InvalidParamsError("prb_bandwidth_hz must be > 0")
        if self.n_prbs * self.prb_bandwidth_hz > sample_rate_hz:
            raise InvalidParamsError("occupied bandwidth exceeds the sample rate")
        if self.active_prb_mask is not None and self.active_prb_mask.size != self.n_prbs:
            raise InvalidParamsError("active_prb_mask length != n_prbs")
        if self.per_prb_power < 0:
            raise InvalidParamsError("per_prb_power must be >= 0")

    def mask(self) -> np.ndarray:
        if self.active_prb_mask is None:
            return np.ones(self.n_prbs, dtype=bool)
        return self.active_prb_mask

    @property
    def band_low_hz(self) -> float:
        return -self.n_prbs * self.prb_bandwidth_hz / 2.0

    def prb_span_hz(self, prb: int) -> tuple[float, float]:
        lo = self.band_low_hz + prb * self.prb_bandwidth_hz
        return lo, lo + self.prb_bandwidth_hz


@dataclass(frozen=True)
class SinrSpec:
    """Component power densities in dBm/MHz; -inf marks an absent component."""

    p_radar_dbm_mhz: float
    p_cellular_dbm_mhz: float
    p_noise_dbm_mhz: float

    def __post_init__(self):
        for name in ("p_radar_dbm_mhz", "p_cellular_dbm_mhz", "p_noise_dbm_mhz"):
            v = getattr(self, name)
            if np.isnan(v) or v == float("inf"):
                raise InvalidParamsError(f"{name} must be finite or -inf")

    @classmethod
    def from_target(cls, target_sinr_db: float, combined_dbm_mhz: float = -109.0,
                    cellular_to_noise_db: float = 0.0) -> "SinrSpec":
        """Build a spec for a target SINR against a fixed combined floor.

        The combined cellular+noise density is split so that
        ``p_cellular - p_noise == cellular_to_noise_db`` while their linear
        sum equals ``combined_dbm_mhz`` exactly.
        """
        chi = dbm_to_linear(cellular_to_noise_db)
        lin_combined = dbm_to_linear(combined_dbm_mhz)
        lin_noise = lin_combined / (1.0 + chi)
        return cls(
            p_radar_dbm_mhz=combined_dbm_mhz + target_sinr_db,
            p_cellular_dbm_mhz=linear_to_db(lin_combined - lin_noise),
            p_noise_dbm_mhz=linear_to_db(lin_noise),
        )


def compute_sinr(spec: SinrSpec) -> float:
    """Closed-form SINR in dB with the radar as the desired signal."""
    num = dbm_to_linear(spec.p_radar_dbm_mhz)
    den = dbm_to_linear(spec.p_cellular_dbm_mhz) + dbm_to_linear(spec.p_noise_dbm_mhz)
    if num == 0.0:
        return float("-inf")
    return 10.0 * float(np.log10(num / den))


def gen_radar_pulse_train(params: RadarParams, duration_s: float,
                          sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> IqBuffer:
    """Rectangular-envelope CW pulse train; zero outside pulses.

    Pulses within a burst are spaced exactly 1/prr_hz apart and the burst
    pattern repeats every burst_length_s.  The carrier phase is continuous
    across pulses (gated CW).
    """
    params.validate(sample_rate_hz)
    if duration_s < params.burst_length_s:
        raise InvalidParamsError("duration_s must cover at least one burst period")
    n = int(round(duration_s * sample_rate_hz))
    x = np.zeros(n, dtype=np.complex128)
    if params.pulses_per_burst == 0 or params.amplitude == 0.0:
        return IqBuffer(x, sample_rate_hz)

    pulse_n = int(round(params.pulse_width_s * sample_rate_hz))
    f = params.carrier_hz
    burst = 0
    while burst * params.burst_length_s < duration_s:
        for j in range(params.pulses_per_burst):
            start_s = (burst * params.burst_length_s + params.burst_start_s
                       + j / params.prr_hz)
            s0 = int(round(start_s * sample_rate_hz))
            if s0 >= n:
                break
            s1 = min(s0 + pulse_n, n)
            t = np.arange(s0, s1) / sample_rate_hz
            x[s0:s1] = params.amplitude * np.exp(2j * np.pi * f * t)
        burst += 1
    return IqBuffer(x, sample_rate_hz)


def gen_cellular_baseband(params: CellularParams, duration_s: float,
                          sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
                          seed=None) -> IqBuffer:
    """Noise-like multicarrier stand-in for the cellular uplink.

    Synthesized in the frequency domain as a random-phase multisine:
    constant magnitude on every FFT bin inside an active PRB, zero
    elsewhere.  This gives an exactly flat PSD per active PRB and an exact
    total power of ``sum(per_prb_power)`` while the time-domain samples are
    Gaussian-like by the CLT.
    """
    params.validate(sample_rate_hz)
    n = int(round(duration_s * sample_rate_hz))
    mask = params.mask()
    if not mask.any() or params.per_prb_power == 0.0:
        return IqBuffer(np.zeros(n, dtype=np.complex128), sample_rate_hz)

    rng = np.random.default_rng(seed)
    freqs = np.fft.fftfreq(n, d=1.0 / sample_rate_hz)
    band_low = params.band_low_hz
    band_high = band_low + params.n_prbs * params.prb_bandwidth_hz
    in_band = (freqs >= band_low) & (freqs < band_high)
    prb_idx = np.clip(np.floor((freqs[in_band] - band_low)
                               / params.prb_bandwidth_hz).astype(np.int64),
                      0, params.n_prbs - 1)
    counts = np.bincount(prb_idx, minlength=params.n_prbs)
    if np.any(counts[mask] == 0):
        raise InvalidParamsError(
            "duration too short to place FFT bins inside each active PRB")

    active_bin = mask[prb_idx]
    mags = np.sqrt(params.per_prb_power * n * n / counts[prb_idx[active_bin]])
    phases = rng.uniform(0.0, 2.0 * np.pi, int(active_bin.sum()))
    spectrum = np.zeros(n, dtype=np.complex128)
    bin_indices = np.nonzero(in_band)[0][active_bin]
    spectrum[bin_indices] = mags * np.exp(1j * phases)
    x = np.fft.ifft(spectrum)
    return IqBuffer(x, sample_rate_hz)


def gen_awgn(power_linear: float, duration_s: float,
             sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ, seed=None) -> IqBuffer:
    """Circularly symmetric complex Gaussian noise of the given mean power."""
    if power_linear < 0:
        raise InvalidParamsError("power_linear must be >= 0")
    n = int(round(duration_s * sample_rate_hz))
    if power_linear == 0.0:
        return IqBuffer(np.zeros(n, dtype=np.complex128), sample_rate_hz)
    rng = np.random.default_rng(seed)
    scale = np.sqrt(power_linear / 2.0)
    x = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return IqBuffer(x, sample_rate_hz)


def measure_band_power(iq: IqBuffer, f_low_hz: float, f_high_hz: float) -> float:
    """Average power density (linear per MHz) over [f_low, f_high).

    Integrates the full-length periodogram over the band and divides by the
    requested band width.  Frequency resolution is sample_rate / n_samples.
    """
    if f_low_hz >= f_high_hz:
        raise InvalidParamsError("f_low_hz must be < f_high_hz")
    fs = iq.sample_rate_hz
    if f_high_hz <= -fs / 2 or f_low_hz >= fs / 2:
        raise EmptyBandError("band lies outside the representable spectrum")
    n = iq.n_samples
    if n == 0:
        return 0.0
    spectrum = np.fft.fft(iq.samples)
    freqs = np.fft.fftfreq(n, d=1.0 / fs)
    sel = (freqs >= f_low_hz) & (freqs < f_high_hz)
    band_power = float(np.sum(np.abs(spectrum[sel]) ** 2)) / (n * n)
    width_mhz = (f_high_hz - f_low_hz) / 1e6
    return band_power / width_mhz


def _occupied_density(iq: IqBuffer, rel_floor_db: float = -20.0) -> tuple[float, float]:
    """(density per MHz, occupied bandwidth Hz) over bins within rel_floor_db of peak."""
    n = iq.n_samples
    p_bins = np.abs(np.fft.fft(iq.samples)) ** 2 / (n * n)
    peak = p_bins.max()
    if peak <= 0.0:
        return 0.0, 0.0
    occ = p_bins >= peak * 10.0 ** (rel_floor_db / 10.0)
    bw_hz = occ.sum() * iq.sample_rate_hz / n
    density = float(p_bins[occ].sum()) / (bw_hz / 1e6)
    return density, float(bw_hz)


def _radar_peak_density(iq: IqBuffer) -> tuple[float, np.ndarray]:
    """Pulse-on power density in the 1 MHz reference bandwidth, plus the on-mask."""
    on = np.abs(iq.samples) > 0.0
    if not on.any():
        return 0.0, on
    on_power = float(np.mean(np.abs(iq.samples[on]) ** 2))
    return on_power / (RADAR_REF_BANDWIDTH_HZ / 1e6), on


def mix_at_sinr(radar: IqBuffer, cellular: IqBuffer, spec: SinrSpec,
                seed=None, measure_achieved: bool = True) -> tuple[IqBuffer, float]:
    """Scale components to the requested densities, add noise; return (mix, measured SINR).

    Radar is scaled so its pulse-on density in a 1 MHz reference bandwidth
    equals p_radar; cellular so its occupied-band density equals p_cellular;
    fresh AWGN is generated at p_noise over the full sample bandwidth.  The
    returned SINR is re-measured from the scaled components, not the nominal
    target; ``measure_achieved=False`` skips that verification pass (several
    full-length FFTs) and returns NaN instead, for hot loops that only need
    the waveform.
    """
    if radar.sample_rate_hz != cellular.sample_rate_hz:
        raise InvalidParamsError("component sample rates differ")
    if radar.n_samples != cellular.n_samples:
        raise InvalidParamsError("component durations differ")
    fs = radar.sample_rate_hz
    fs_mhz = fs / 1e6
    duration_s = radar.duration_s

    noise_density = dbm_to_linear(spec.p_noise_dbm_mhz)
    noise = gen_awgn(noise_density * fs_mhz, duration_s, fs, seed)

    radar_target = dbm_to_linear(spec.p_radar_dbm_mhz)
    if radar_target > 0.0:
        d_now, on = _radar_peak_density(radar)
        if d_now == 0.0:
            raise SilentComponentError("radar component has zero power but p_radar is finite")
        radar_scaled = radar.samples * np.sqrt(radar_target / d_now)
    else:
        radar_scaled = np.zeros(radar.n_samples, dtype=np.complex128)
        on = np.zeros(radar.n_samples, dtype=bool)

    cell_target = dbm_to_linear(spec.p_cellular_dbm_mhz)
    if cell_target > 0.0:
        d_now, _ = _occupied_density(cellular)
        if d_now == 0.0:
            raise SilentComponentError("cellular component has zero power but p_cellular is finite")
        cell_scaled = cellular.samples * np.sqrt(cell_target / d_now)
    else:
        cell_scaled = np.zeros(cellular.n_samples, dtype=np.complex128)

    out = IqBuffer(radar_scaled + cell_scaled + noise.samples, fs)

    if not measure_achieved:
        return out, float("nan")

    # Measure what was actually achieved, per component.
    noise_meas = measure_band_power(noise, -fs / 2, fs / 2)
    if cell_target > 0.0:
        cell_meas, _ = _occupied_density(IqBuffer(cell_scaled, fs))
    else:
        cell_meas = 0.0
    if radar_target > 0.0:
        # Average density over the whole buffer relates to the peak density
        # through the on-time fraction, so no gated FFT is needed.
        carrier = _psd_argmax_hz(IqBuffer(radar_scaled, fs))
        lo = max(carrier - RADAR_REF_BANDWIDTH_HZ / 2, -fs / 2)
        hi = min(carrier + RADAR_REF_BANDWIDTH_HZ / 2, fs / 2)
        avg_density = measure_band_power(IqBuffer(radar_scaled, fs), lo, hi)
        duty = on.sum() / on.size
        radar_meas = avg_density / duty
        achieved = 10.0 * float(np.log10(radar_meas / (cell_meas + noise_meas)))
    else:
        achieved = float("-inf")
    return out, achieved


def _psd_argmax_hz(iq: IqBuffer) -> float:
    spectrum = np.abs(np.fft.fft(iq.samples)) ** 2
    freqs = np.fft.fftfreq(iq.n_samples, d=1.0 / iq.sample_rate_hz)
    return float(freqs[int(np.argmax(spectrum))])


def write_iq_file(path, iq: IqBuffer, extra_meta: dict | None = None) -> None:
    """Little-endian interleaved float32 I/Q pairs plus a key=value sidecar."""
    inter = np.empty(2 * iq.n_samples, dtype="<f4")
    inter[0::2] = iq.samples.real.astype(np.float32)
    inter[1::2] = iq.samples.imag.astype(np.float32)
    inter.tofile(str(path))
    meta = {
        "format": "iq_float32_interleaved_le",
        "sample_rate_hz": repr(iq.sample_rate_hz),
        "n_samples": iq.n_samples,
        "duration_s": repr(iq.duration_s),
    }
    if extra_meta:
        meta.update(extra_meta)
    write_sidecar(str(path) + ".meta", meta)


def read_iq_file(path) -> tuple[IqBuffer, dict]:
    meta = read_sidecar(str(path) + ".meta")
    raw = np.fromfile(str(path), dtype="<f4")
    samples = raw[0::2].astype(np.float64) + 1j * raw[1::2].astype(np.float64)
    return IqBuffer(samples, float(meta["sample_rate_hz"])), meta
