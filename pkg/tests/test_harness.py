import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from coexsim.detect import ClassifierModel, TrainConfig, train_detector
from coexsim.errors import InvalidConfigError, MissingDataError, MissingModelError
from coexsim.harness.datasets import (
    KpmDatasetConfig,
    SpectrogramDatasetConfig,
    gen_kpm_dataset,
    gen_spectrogram_dataset,
    load_kpm_windows,
    load_spectrogram_items,
)
from coexsim.harness.evaluate import (
    eval_detector,
    eval_localizer,
    pooled_localizer_metrics,
)
from coexsim.harness.scenario import (
    POLICY_BASELINE,
    POLICY_FULL,
    RadarWindow,
    ScenarioConfig,
    run_scenario,
    scenario_from_yaml,
)
from coexsim.signals import RadarParams


@pytest.fixture(scope="module")
def kpm_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "kpm"
    gen_kpm_dataset(out, KpmDatasetConfig(items_per_class_per_sinr=25, seed=11))
    return out


@pytest.fixture(scope="module")
def small_model(kpm_dataset):
    windows, labels, _ = load_kpm_windows(kpm_dataset, n_stack=1)
    return train_detector(windows, labels, TrainConfig(epochs=20, seed=1)).model


@pytest.fixture(scope="module")
def spectro_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "specs"
    cfg = SpectrogramDatasetConfig(sinr_sweep_db=(12.0,), items_per_sinr=6,
                                   absent_fraction=0.5, seed=5)
    gen_spectrogram_dataset(out, cfg)
    return out


class TestKpmDataset:
    def test_structure_and_windowing(self, kpm_dataset):
        assert (kpm_dataset / "kpm_dataset.csv").exists()
        assert (kpm_dataset / "items.csv").exists()
        windows, labels, sinrs = load_kpm_windows(kpm_dataset, n_stack=4)
        # 5 sinr points x 2 classes x 25 items x (8 - 4 + 1) windows
        assert len(windows) == 5 * 2 * 25 * 5
        assert set(labels.tolist()) == {0, 1}
        assert sorted(set(sinrs.tolist())) == [-4.0, 0.0, 4.0, 8.0, 12.0]

    def test_windows_never_straddle_items(self, kpm_dataset):
        windows, labels, _ = load_kpm_windows(kpm_dataset, n_stack=8)
        # with n_stack == records_per_item each window is exactly one item
        assert len(windows) == 5 * 2 * 25

    def test_regeneration_is_byte_identical(self, tmp_path, kpm_dataset):
        cfg = KpmDatasetConfig(items_per_class_per_sinr=25, seed=11)
        other = tmp_path / "kpm2"
        gen_kpm_dataset(other, cfg)
        assert (other / "kpm_dataset.csv").read_bytes() == \
               (kpm_dataset / "kpm_dataset.csv").read_bytes()

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(MissingDataError):
            load_kpm_windows(tmp_path / "nope", 1)


class TestSpectrogramDataset:
    def test_items_and_truth(self, spectro_dataset):
        items = list(load_spectrogram_items(spectro_dataset))
        assert len(items) == 9  # 6 radar + 3 absent
        for file_id, sinr, has_radar, sgram, truths in items:
            assert sgram.power_db.shape[0] == 1024
            if has_radar:
                assert truths, f"{file_id} lacks truth boxes"
            else:
                assert truths == []

    def test_absent_labels_zero_truths(self, spectro_dataset):
        truth_path = spectro_dataset / "truth_boxes.csv"
        assert truth_path.exists()

    def test_regeneration_is_byte_identical(self, tmp_path):
        cfg = SpectrogramDatasetConfig(sinr_sweep_db=(8.0,), items_per_sinr=2,
                                       absent_fraction=0.0, seed=9)
        a = tmp_path / "a"
        b = tmp_path / "b"
        gen_spectrogram_dataset(a, cfg)
        gen_spectrogram_dataset(b, cfg)
        for rel in ("specs/item_00000.bin", "specs/item_00001.bin",
                    "truth_boxes.csv", "items.csv"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(MissingDataError):
            list(load_spectrogram_items(tmp_path / "nope"))


class TestEvaluate:
    def test_detector_table(self, small_model, kpm_dataset):
        rows = eval_detector(small_model, kpm_dataset, n_stack=1)
        assert [r.sinr_db for r in rows] == [-4.0, 0.0, 4.0, 8.0, 12.0]
        assert all(0.0 <= r.accuracy <= 1.0 for r in rows)
        assert all(r.n_windows == 2 * 25 * 8 for r in rows)

    def test_training_set_accuracy_is_optimistic_bound(self, kpm_dataset):
        windows, labels, _ = load_kpm_windows(kpm_dataset, n_stack=1)
        result = train_detector(windows, labels, TrainConfig(epochs=20, seed=2))
        # accuracy on data the model trained on bounds held-out accuracy
        assert result.train_accuracy >= result.val_accuracy

    def test_localizer_table(self, spectro_dataset):
        rows = eval_localizer(spectro_dataset)
        assert len(rows) == 1
        assert rows[0].sinr_db == 12.0
        assert rows[0].recall >= 0.9
        pooled = pooled_localizer_metrics(spectro_dataset, min_sinr_db=8.0)
        assert pooled.recall >= 0.9

    def test_pooled_empty_slice(self, spectro_dataset):
        with pytest.raises(MissingDataError):
            pooled_localizer_metrics(spectro_dataset, min_sinr_db=99.0)


SCENARIO_PARAMS = RadarParams(26e-6, 1000.0, 10, 10e-3, center_offset_hz=2.5e6)


class TestScenario:
    def test_interference_free_baseline(self, small_model):
        sc = ScenarioConfig(duration_s=0.5, policy=POLICY_BASELINE, seed=0)
        out = run_scenario(sc, None)
        assert out.summary["mean_bler_pct"] < 1.0
        assert not any(out.labels)

    def test_closed_loop_blanks_and_restores(self, small_model, tmp_path):
        sc = ScenarioConfig(duration_s=1.0, policy=POLICY_FULL,
                            radar_schedule=[RadarWindow(0.3, 0.7, SCENARIO_PARAMS)],
                            seed=4, output_dir=str(tmp_path / "run"))
        out = run_scenario(sc, small_model)
        assert out.summary["detection_delay_s"] <= 0.02
        assert out.summary["evacuation_delay_s"] <= 0.02
        assert out.summary["restore_delay_s"] <= 0.02
        assert (tmp_path / "run" / "kpm_log.csv").exists()
        assert (tmp_path / "run" / "command_log.csv").exists()
        assert (tmp_path / "run" / "latency_report.txt").exists()
        assert (tmp_path / "run" / "summary.txt").exists()

    def test_determinism_byte_for_byte(self, small_model, tmp_path):
        outs = []
        for name in ("a", "b"):
            sc = ScenarioConfig(duration_s=0.4, policy=POLICY_FULL,
                                radar_schedule=[RadarWindow(0.1, 0.3, SCENARIO_PARAMS)],
                                seed=7, output_dir=str(tmp_path / name))
            run_scenario(sc, small_model)
            outs.append(tmp_path / name)
        for fname in ("kpm_log.csv", "command_log.csv"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()

    def test_causality_one_window_delay(self, small_model):
        # the KPM of the radar-onset window is produced under a full mask:
        # commands derived from it can only affect later windows
        sc = ScenarioConfig(duration_s=0.4, policy=POLICY_FULL,
                            radar_schedule=[RadarWindow(0.1, 0.3, SCENARIO_PARAMS)],
                            seed=8)
        out = run_scenario(sc, small_model)
        onset_record = out.records[10]  # first radar window
        # throughput/BLER of that record computed with all PRBs active
        assert out.labels[10] == 1
        blank_times = [t for t, c in out.commands if c.kind == "BLANK"]
        assert blank_times and min(blank_times) >= onset_record.t_s

    def test_missing_model_rejected(self):
        sc = ScenarioConfig(duration_s=0.2, policy=POLICY_FULL)
        with pytest.raises(MissingModelError):
            run_scenario(sc, None)

    def test_invalid_config_rejected(self):
        sc = ScenarioConfig(duration_s=0.2, policy="warp")
        with pytest.raises(InvalidConfigError):
            sc.validate()
        sc = ScenarioConfig(duration_s=0.2,
                            radar_schedule=[RadarWindow(0.1, 0.5, SCENARIO_PARAMS)])
        with pytest.raises(InvalidConfigError):
            sc.validate()


class TestYamlConfig:
    def test_round_trip(self, tmp_path):
        text = """
duration_s: 1.5
policy: blanking
seed: 42
sinr_schedule:
  - {t_start_s: 0.0, sinr_db: 8.0}
radar_schedule:
  - {t_on_s: 0.5, t_off_s: 1.0, pulse_width_s: 26.0e-6, prr_hz: 1000,
     pulses_per_burst: 10, center_offset_hz: 2.5e+6}
link: {base_sinr_db: 35.0}
"""
        path = tmp_path / "scenario.yaml"
        path.write_text(text)
        cfg = scenario_from_yaml(path)
        assert cfg.policy == "blanking"
        assert cfg.seed == 42
        assert cfg.radar_schedule[0].params.center_offset_hz == 2.5e6

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("duration_s: 1.0\nradar_schedule:\n  - {t_on_s: 2.0, t_off_s: 0.5}\n")
        with pytest.raises(InvalidConfigError):
            scenario_from_yaml(path)


class TestCli:
    def run_cli(self, *args):
        return subprocess.run([sys.executable, "-m", "coexsim.harness.cli", *args],
                              capture_output=True, text=True)

    def test_gen_train_eval_pipeline(self, tmp_path):
        data = tmp_path / "kpm"
        r = self.run_cli("gen-dataset", "--kind", "kpm", "--out", str(data),
                         "--count", "20", "--seed", "3", "--sinrs", "0,8")
        assert r.returncode == 0, r.stderr
        model_path = tmp_path / "detector.npz"
        r = self.run_cli("train-detector", "--data", str(data), "--out",
                         str(model_path), "--epochs", "15")
        assert r.returncode == 0, r.stderr
        assert model_path.exists()
        report = tmp_path / "det.csv"
        r = self.run_cli("eval-detector", "--model", str(model_path),
                         "--data", str(data), "--report", str(report))
        assert r.returncode == 0, r.stderr
        assert report.read_text().startswith("sinr_db,accuracy,n_windows")

    def test_error_line_on_missing_data(self, tmp_path):
        r = self.run_cli("train-detector", "--data", str(tmp_path / "nope"),
                         "--out", str(tmp_path / "m.npz"))
        assert r.returncode == 2
        assert r.stderr.startswith("error: MissingDataError:")

    def test_scenario_and_latency_report(self, tmp_path):
        data = tmp_path / "kpm"
        self.run_cli("gen-dataset", "--kind", "kpm", "--out", str(data),
                     "--count", "20", "--seed", "3", "--sinrs", "0,8")
        model_path = tmp_path / "detector.npz"
        self.run_cli("train-detector", "--data", str(data), "--out", str(model_path))
        yaml_path = tmp_path / "scenario.yaml"
        yaml_path.write_text(
            "duration_s: 0.3\npolicy: full\n"
            "radar_schedule:\n"
            "  - {t_on_s: 0.1, t_off_s: 0.2, pulse_width_s: 26.0e-6, prr_hz: 1000,\n"
            "     pulses_per_burst: 10, center_offset_hz: 2.5e+6}\n")
        out_dir = tmp_path / "run"
        r = self.run_cli("run-scenario", "--config", str(yaml_path),
                         "--model", str(model_path), "--out", str(out_dir))
        assert r.returncode == 0, r.stderr
        assert "mean_bler_pct=" in r.stdout
        r = self.run_cli("report-latency", "--scenario-out", str(out_dir))
        assert r.returncode == 0
        assert "mode2 total" in r.stdout
