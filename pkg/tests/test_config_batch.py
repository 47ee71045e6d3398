"""Experiment files, batch runs and cluster aggregation."""

import csv
from pathlib import Path

import numpy as np
import pytest

from phasesynth.batch import CLUSTER_FIELDS, aggregate_rows, read_rows, run_batch, run_experiment, write_rows
from phasesynth.config import RunSpec, load_config, load_ir, load_source, parse_config
from phasesynth.errors import ConfigurationError
from phasesynth.signals import write_wav

BASIC = """
[experiment]
duration = 2
gains_db = 0, 6
sets = 1
[signals]
a = gen:speech_like:0
b = gen:speech_like:1
[impulse_responses]
room = gen:room:0
"""


def spec(**kw):
    base = dict(signal_id="a", signal_source="gen:speech_like:0", group="a", ir_id="r",
                ir_source="gen:room:0", gain_db=0.0, set_id=1, duration=2.0)
    base.update(kw)
    return RunSpec(**base)


class TestParse:
    def test_cartesian(self):
        cfg = parse_config(BASIC)
        runs = cfg.runs()
        assert len(runs) == 4
        assert len({r.run_id for r in runs}) == 4

    def test_defaults(self):
        cfg = parse_config(BASIC)
        assert cfg.filter == "kalman" and cfg.coupling_db == -10.0 and cfg.ramp_s is None

    def test_sections(self, tmp_path):
        write_wav(tmp_path / "m1.wav", np.zeros(100))
        np.savetxt(tmp_path / "h.txt", [1.0, 0.5])
        text = """
[experiment]
sets = 6, 9
filter = flms
[signals]
m1 = m1.wav
[groups]
m1 = male
[impulse_responses]
h = h.txt
[ir_options]
highpass_hz = 50
[schedule]
ramp_s = 4
[flms]
filter_length = 256
step_size = 0.2
"""
        cfg = parse_config(text, tmp_path)
        (r0, r1) = cfg.runs()
        assert r0.group == "male" and r0.highpass_hz == 50 and r0.ramp_s == 4
        assert Path(r0.signal_source) == tmp_path / "m1.wav"
        fc = r0.filter_config()
        assert fc.filter_length == 256 and fc.step_size == 0.2
        assert (r0.set_id, r1.set_id) == (6, 9)

    def test_phase_program_replaces_sets(self):
        cfg = parse_config(BASIC + "[phase_synth]\nshift_hz = 5\n")
        runs = cfg.runs()
        assert {r.set_id for r in runs} == {"custom"}
        assert runs[0].phase_config().shift is not None

    @pytest.mark.parametrize("text,match", [
        ("[experiment]\n", "no signals"),
        ("[signals]\na = gen:white_noise\n", "no impulse"),
        (BASIC.replace("sets = 1", "sets = 12"), "outside"),
        (BASIC.replace("duration = 2", "duration = -1"), "positive"),
        (BASIC + "[kalman]\nbogus = 1\n", "bad filter option"),
        (BASIC.replace("gen:room:0", "missing.wav"), "does not exist"),
        ("[experiment\n", "malformed"),
        (BASIC.replace("gains_db = 0, 6", "gains_db = loud"), "experiment"),
    ])
    def test_errors(self, text, match):
        with pytest.raises(ConfigurationError, match=match):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "nope.ini")

    def test_shipped_example(self):
        cfg = load_config(Path(__file__).parents[1] / "configs" / "experiment.ini")
        assert len(cfg.runs()) == 2 * 1 * 4 * 3


class TestSources:
    def test_generated(self):
        assert load_source("gen:white_noise:2", 1.0).shape == (16000,)
        assert load_ir("gen:room:1").shape == (1024,)

    def test_unknown_generator(self):
        with pytest.raises(ConfigurationError):
            load_source("gen:birdsong", 1.0)
        with pytest.raises(ConfigurationError):
            load_ir("gen:hall")


class TestBatch:
    def test_rows_and_clusters(self, tmp_path):
        report = run_batch(parse_config(BASIC).runs(), tmp_path)
        assert len(report.rows) == 4 and report.failures == 0
        assert all(r["verdict"] == "stable" for r in report.rows)
        # 2 speakers x 2 gains + 1 IR x 2 gains
        assert len(report.clusters) == 6
        assert len(list(tmp_path.glob("*_sd.csv"))) == 4

    def test_empty(self):
        with pytest.raises(ValueError):
            run_batch([])

    def test_error_row_does_not_stop(self):
        report = run_batch([spec(signal_source="gen:speech_like:0", duration=100.0, ir_source="gen:nothing"), spec()])
        assert [r["status"] for r in report.rows] == ["error", "ok"]
        assert report.failures == 1
        assert "ConfigurationError" in report.rows[0]["message"]

    def test_deterministic_rows(self):
        assert run_experiment(spec(set_id=6))[1] == run_experiment(spec(set_id=6))[1]

    def test_trace_footer_and_wav(self, tmp_path):
        result, row = run_experiment(spec(duration=21.0, gain_db=0.0), tmp_path)
        assert row["verdict"] == "stable"
        text = (tmp_path / f"{spec().run_id}_sd.csv").read_text()
        assert text.splitlines()[0] == "time_s,sd_linear,sd_db"
        assert "# status=stable" in text
        assert (tmp_path / f"{spec().run_id}_converged.wav").is_file()

    def test_unstable_row(self, tmp_path):
        _, row = run_experiment(spec(gain_db=30.0, ramp_s=0.5, duration=3.0), tmp_path)
        assert row["verdict"] == "unstable" and row["late_sd_db"] is None
        assert "# failure_time_s=" in (tmp_path / f"{spec(gain_db=30.0).run_id}_sd.csv").read_text()


class TestAggregate:
    def _rows(self):
        rows = []
        for sig, grp in (("m1", "male"), ("m2", "male"), ("f1", "female"), ("f2", "female")):
            rows.append(dict(run_id=sig, signal_id=sig, group=grp, ir_id="r", gain_db=0.0, set_id=1,
                             status="ok", verdict="stable", failure_time_s=None,
                             early_sd_db=-5.0, late_sd_db=-20.0 if grp == "male" else -10.0, message=""))
        return rows

    def test_speaker_clusters(self):
        clusters = aggregate_rows(self._rows())
        spk = [c for c in clusters if c["cluster_kind"] == "speaker"]
        assert {c["cluster"] for c in spk} == {"male", "female"}
        assert {c["cluster"]: c["mean_late_sd_db"] for c in spk} == {"male": -20.0, "female": -10.0}

    def test_csv_round_trip(self, tmp_path):
        write_rows(tmp_path / "runs.csv", self._rows())
        again = aggregate_rows(read_rows([tmp_path / "runs.csv"]))
        assert [c["mean_late_sd_db"] for c in again] == [c["mean_late_sd_db"] for c in aggregate_rows(self._rows())]
        write_rows(tmp_path / "c.csv", again, CLUSTER_FIELDS)
        with open(tmp_path / "c.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 3

    def test_rejects_foreign_csv(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_rows([tmp_path / "x.csv"])
