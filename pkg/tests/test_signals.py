import numpy as np
import pytest

from coexsim.errors import (
    EmptyBandError,
    InvalidParamsError,
    SilentComponentError,
)
from coexsim.signals import (
    CellularParams,
    IqBuffer,
    RadarParams,
    SinrSpec,
    compute_sinr,
    gen_awgn,
    gen_cellular_baseband,
    gen_radar_pulse_train,
    measure_band_power,
    mix_at_sinr,
    read_iq_file,
    write_iq_file,
)

FS = 15.36e6

FIG_PARAMS = RadarParams(pulse_width_s=13e-6, prr_hz=500.0, pulses_per_burst=5,
                         burst_length_s=10e-3)


def band_density_oracle(samples, fs, f_low, f_high):
    """Independent band-power density: direct periodogram sum, per MHz."""
    n = len(samples)
    spec = np.fft.fft(samples)
    freqs = np.fft.fftfreq(n, d=1.0 / fs)
    sel = (freqs >= f_low) & (freqs < f_high)
    return np.sum(np.abs(spec[sel]) ** 2) / (n * n) / ((f_high - f_low) / 1e6)


class TestRadarPulseTrain:
    def test_five_pulse_burst_positions(self):
        iq = gen_radar_pulse_train(FIG_PARAMS, 10e-3, FS)
        nz = np.abs(iq.samples) > 0
        starts = np.nonzero(nz & ~np.roll(nz, 1))[0]
        # roll wraps; first sample is a genuine start here
        assert list(starts) == [0, 30720, 61440, 92160, 122880]
        assert np.allclose(np.array(starts) / FS, [0, 2e-3, 4e-3, 6e-3, 8e-3])

    def test_nonzero_sample_count(self):
        iq = gen_radar_pulse_train(FIG_PARAMS, 10e-3, FS)
        assert int(np.count_nonzero(iq.samples)) == 5 * round(13e-6 * FS) == 1000

    def test_zero_pulses_gives_silence(self):
        p = RadarParams(13e-6, 500.0, 0, 10e-3)
        iq = gen_radar_pulse_train(p, 10e-3, FS)
        assert not np.any(iq.samples)

    def test_sparsity_fraction(self):
        for pw, prr, npulses in [(13e-6, 500.0, 5), (52e-6, 1100.0, 9), (26e-6, 900.0, 7)]:
            p = RadarParams(pw, prr, npulses, 10e-3)
            iq = gen_radar_pulse_train(p, 10e-3, FS)
            count = np.count_nonzero(iq.samples)
            expected = npulses * pw / 10e-3 * iq.n_samples
            assert abs(count - expected) <= npulses

    def test_bursts_repeat(self):
        iq = gen_radar_pulse_train(FIG_PARAMS, 20e-3, FS)
        half = iq.n_samples // 2
        assert np.count_nonzero(iq.samples[:half]) == np.count_nonzero(iq.samples[half:])

    def test_carrier_frequency(self):
        p = RadarParams(26e-6, 1000.0, 10, 10e-3, center_offset_hz=2.5e6)
        iq = gen_radar_pulse_train(p, 10e-3, FS)
        spec = np.abs(np.fft.fft(iq.samples)) ** 2
        freqs = np.fft.fftfreq(iq.n_samples, 1 / FS)
        assert abs(freqs[np.argmax(spec)] - 2.5e6) < 1e3

    def test_doppler_moves_psd_argmax(self):
        # averaged 1024-point periodogram, matching the analysis FFT size
        def argmax_hz(iq):
            n_cols = iq.n_samples // 1024
            frames = iq.samples[: n_cols * 1024].reshape(n_cols, 1024)
            psd = np.mean(np.abs(np.fft.fft(frames, axis=1)) ** 2, axis=0)
            freqs = np.fft.fftfreq(1024, 1 / FS)
            return freqs[np.argmax(psd)]

        base = RadarParams(26e-6, 1000.0, 10, 10e-3, center_offset_hz=0.0)
        shifted = RadarParams(26e-6, 1000.0, 10, 10e-3, center_offset_hz=0.0,
                              doppler_shift_hz=30e3)
        f0 = argmax_hz(gen_radar_pulse_train(base, 10e-3, FS))
        f1 = argmax_hz(gen_radar_pulse_train(shifted, 10e-3, FS))
        bin_width = FS / 1024
        assert abs((f1 - f0) - 30e3) <= bin_width

    def test_invalid_params_rejected(self):
        with pytest.raises(InvalidParamsError):
            RadarParams(13e-6, 500.0, 6, 10e-3).validate(FS)  # 6/500 Hz > 10 ms
        with pytest.raises(InvalidParamsError):
            RadarParams(13e-6, 500.0, 5, 10e-3, center_offset_hz=8e6).validate(FS)
        with pytest.raises(InvalidParamsError):
            RadarParams(5e-6, 500.0, 2, 10e-3).validate(FS)  # pulse width out of range
        with pytest.raises(InvalidParamsError):
            gen_radar_pulse_train(FIG_PARAMS, 5e-3, FS)  # duration < burst


class TestCellularBaseband:
    def test_all_inactive_silent(self):
        p = CellularParams(active_prb_mask=np.zeros(50, dtype=bool))
        iq = gen_cellular_baseband(p, 1e-3, FS, seed=0)
        assert not np.any(iq.samples)

    def test_total_power_matches_sum(self):
        p = CellularParams(per_prb_power=1.0)
        iq = gen_cellular_baseband(p, 10e-3, FS, seed=1)
        assert iq.mean_power() == pytest.approx(50.0, rel=0.02)

    def test_inactive_half_suppressed(self):
        mask = np.zeros(50, dtype=bool)
        mask[:25] = True
        p = CellularParams(active_prb_mask=mask)
        iq = gen_cellular_baseband(p, 10e-3, FS, seed=2)
        lower = band_density_oracle(iq.samples, FS, -4.5e6, 0.0)
        upper = band_density_oracle(iq.samples, FS, 0.0, 4.5e6)
        assert upper < lower * 1e-3  # >= 30 dB down

    def test_psd_flat_over_active_prbs(self):
        p = CellularParams(per_prb_power=1.0)
        iq = gen_cellular_baseband(p, 10e-3, FS, seed=3)
        d1 = measure_band_power(iq, -4.0e6, -2.0e6)
        d2 = measure_band_power(iq, 1.0e6, 3.0e6)
        assert d1 == pytest.approx(d2, rel=0.02)

    def test_deterministic(self):
        p = CellularParams()
        a = gen_cellular_baseband(p, 1e-3, FS, seed=7)
        b = gen_cellular_baseband(p, 1e-3, FS, seed=7)
        assert np.array_equal(a.samples, b.samples)

    def test_bandwidth_overflow_rejected(self):
        with pytest.raises(InvalidParamsError):
            gen_cellular_baseband(CellularParams(n_prbs=100), 1e-3, FS)


class TestAwgn:
    def test_zero_power_silent(self):
        assert not np.any(gen_awgn(0.0, 1e-3, FS, seed=0).samples)

    def test_mean_power_within_one_percent(self):
        iq = gen_awgn(1.0, 10e-3, FS, seed=11)  # 153,600 samples
        assert 0.99 <= iq.mean_power() <= 1.01

    def test_deterministic(self):
        a = gen_awgn(2.5, 1e-3, FS, seed=42)
        b = gen_awgn(2.5, 1e-3, FS, seed=42)
        assert np.array_equal(a.samples, b.samples)

    def test_circular_symmetry(self):
        iq = gen_awgn(1.0, 10e-3, FS, seed=5)
        assert np.mean(iq.samples.real ** 2) == pytest.approx(0.5, rel=0.03)
        assert np.mean(iq.samples.imag ** 2) == pytest.approx(0.5, rel=0.03)


class TestComputeSinr:
    def test_regulatory_anchor_20db(self):
        spec = SinrSpec.from_target(20.0, combined_dbm_mhz=-109.0)
        assert spec.p_radar_dbm_mhz == -89.0
        assert compute_sinr(spec) == pytest.approx(20.0, abs=1e-9)

    def test_equal_powers_zero_db(self):
        spec = SinrSpec(-100.0, -103.0103, -103.0103)
        assert compute_sinr(spec) == pytest.approx(0.0, abs=1e-4)

    def test_direct_linear_sum(self):
        spec = SinrSpec(-97.0, -112.0, -112.0)
        oracle = 10 * np.log10(10 ** -9.7 / (10 ** -11.2 + 10 ** -11.2))
        assert compute_sinr(spec) == pytest.approx(oracle, abs=1e-12)
        assert compute_sinr(spec) == pytest.approx(11.99, abs=0.005)

    def test_common_offset_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            r, c, n = rng.uniform(-120, -80, 3)
            k = rng.uniform(-40, 40)
            a = compute_sinr(SinrSpec(r, c, n))
            b = compute_sinr(SinrSpec(r + k, c + k, n + k))
            assert a == pytest.approx(b, abs=1e-9)

    def test_absent_radar(self):
        assert compute_sinr(SinrSpec(float("-inf"), -112.0, -112.0)) == float("-inf")


class TestMeasureBandPower:
    def test_tone_density(self):
        n = 16384
        t = np.arange(n) / FS
        tone = np.exp(2j * np.pi * 1.92e6 * t)
        iq = IqBuffer(tone, FS)
        # all tone power lands in a 1 MHz band around the tone
        d = measure_band_power(iq, 1.42e6, 2.42e6)
        assert d == pytest.approx(1.0 / 1.0, rel=0.01)

    def test_zero_buffer(self):
        iq = IqBuffer(np.zeros(1024), FS)
        assert measure_band_power(iq, -1e6, 1e6) == 0.0

    def test_awgn_full_band_density(self):
        iq = gen_awgn(1.0, 10e-3, FS, seed=9)
        d = measure_band_power(iq, -FS / 2, FS / 2)
        assert d == pytest.approx(1.0 / 15.36, rel=0.02)

    def test_band_outside_spectrum(self):
        iq = IqBuffer(np.zeros(1024), FS)
        with pytest.raises(EmptyBandError):
            measure_band_power(iq, 8e6, 9e6)
        with pytest.raises(InvalidParamsError):
            measure_band_power(iq, 1e6, -1e6)


class TestMixAtSinr:
    @staticmethod
    def composite_sinr_oracle(out, radar_input, carrier_hz):
        """Gated measurement on the composite only: pulse-on density minus the
        pulse-off (interference) density in the radar's 1 MHz band."""
        fs = out.sample_rate_hz
        on = np.abs(radar_input.samples) > 0
        lo, hi = carrier_hz - 0.5e6, carrier_hz + 0.5e6
        d_on = band_density_oracle(out.samples[on], fs, lo, hi)
        off = out.samples[~on][: on.sum() * 20]
        d_off = band_density_oracle(off, fs, lo, hi)
        return 10 * np.log10((d_on - d_off) / d_off)

    def test_single_target(self):
        radar = gen_radar_pulse_train(
            RadarParams(26e-6, 1000.0, 10, 10e-3, center_offset_hz=2.5e6), 10e-3, FS)
        cell = gen_cellular_baseband(CellularParams(), 10e-3, FS, seed=3)
        out, achieved = mix_at_sinr(radar, cell, SinrSpec.from_target(12.0), seed=4)
        assert 11.5 <= achieved <= 12.5
        oracle = self.composite_sinr_oracle(out, radar, 2.5e6)
        assert oracle == pytest.approx(12.0, abs=0.5)

    @pytest.mark.parametrize("target", [-4.0, 0.0, 4.0, 8.0, 12.0])
    def test_target_sweep(self, target):
        radar = gen_radar_pulse_train(
            RadarParams(13e-6, 500.0, 5, 10e-3, center_offset_hz=-2.5e6), 10e-3, FS)
        cell = gen_cellular_baseband(CellularParams(), 10e-3, FS, seed=5)
        _, achieved = mix_at_sinr(radar, cell, SinrSpec.from_target(target), seed=6)
        assert achieved == pytest.approx(target, abs=0.5)

    def test_absent_radar_passthrough(self):
        radar = IqBuffer(np.zeros(153600), FS)
        cell = gen_cellular_baseband(CellularParams(), 10e-3, FS, seed=8)
        spec = SinrSpec(float("-inf"), -112.0, -112.0)
        out, achieved = mix_at_sinr(radar, cell, spec, seed=9)
        assert achieved == float("-inf")
        # output contains cellular + noise only: pulse structure absent
        noise_only = SinrSpec(float("-inf"), float("-inf"), -112.0)
        base, _ = mix_at_sinr(radar, cell, noise_only, seed=9)
        assert out.mean_power() > base.mean_power()

    def test_silent_radar_rejected(self):
        radar = IqBuffer(np.zeros(15360), FS)
        cell = gen_cellular_baseband(CellularParams(), 1e-3, FS, seed=1)
        with pytest.raises(SilentComponentError):
            mix_at_sinr(radar, cell, SinrSpec.from_target(8.0), seed=0)

    def test_mismatched_buffers_rejected(self):
        radar = gen_radar_pulse_train(FIG_PARAMS, 10e-3, FS)
        cell = gen_cellular_baseband(CellularParams(), 5e-3, FS, seed=1)
        with pytest.raises(InvalidParamsError):
            mix_at_sinr(radar, cell, SinrSpec.from_target(8.0), seed=0)

    def test_deterministic(self):
        radar = gen_radar_pulse_train(FIG_PARAMS, 10e-3, FS)
        cell = gen_cellular_baseband(CellularParams(), 10e-3, FS, seed=2)
        spec = SinrSpec.from_target(8.0)
        a, sa = mix_at_sinr(radar, cell, spec, seed=3)
        b, sb = mix_at_sinr(radar, cell, spec, seed=3)
        assert np.array_equal(a.samples, b.samples) and sa == sb


class TestIqFileRoundTrip:
    def test_round_trip(self, tmp_path):
        iq = gen_awgn(1.0, 1e-4, FS, seed=0)
        path = tmp_path / "capture.iq"
        write_iq_file(path, iq, {"seed": 0})
        back, meta = read_iq_file(path)
        assert back.sample_rate_hz == FS
        assert back.n_samples == iq.n_samples
        assert np.allclose(back.samples, iq.samples, atol=1e-6)
        assert meta["seed"] == "0"
