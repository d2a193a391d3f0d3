import json
import subprocess

import pytest

from tolrec.cli import main, parse_window
from tolrec.events import write_events
from tolrec.fixtures import generate_fixture_events


@pytest.fixture
def event_file(tmp_path):
    path = tmp_path / "events.jsonl"
    write_events(path, generate_fixture_events(n_events=800, n_users=30, seed=3))
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestWindows:
    def test_iso_dates_half_open(self):
        window = parse_window("2024-06-01..2024-06-08")
        assert window.end - window.start == 7 * 86_400

    def test_datetime_accepted(self):
        window = parse_window("2024-06-01T12:00:00..2024-06-02T12:00:00")
        assert window.end - window.start == 86_400

    def test_missing_separator_rejected(self):
        with pytest.raises(ValueError):
            parse_window("2024-06-01")


class TestLabelCommand:
    def test_writes_samples_profiles_manifest(self, tmp_path, event_file):
        out = tmp_path / "samples.jsonl"
        assert run("label", "--events", event_file, "--out", out) == 0
        assert out.exists()
        assert (tmp_path / "samples.jsonl.profiles").exists()
        manifest = json.loads((tmp_path / "samples.jsonl.manifest.json").read_text())
        assert manifest["command"] == "label"
        assert manifest["config"]["mode"] == "causal"
        assert str(event_file) in manifest["inputs"]

    def test_threaded_ingest_matches_serial(self, tmp_path, event_file):
        serial = tmp_path / "serial.jsonl"
        threaded = tmp_path / "threaded.jsonl"
        assert run("label", "--events", event_file, "--out", serial) == 0
        assert run(
            "label", "--events", event_file, "--out", threaded, "--threads", "4"
        ) == 0
        assert serial.read_bytes() == threaded.read_bytes()

    def test_flags_override_defaults(self, tmp_path, event_file):
        out = tmp_path / "samples.jsonl"
        assert run(
            "label", "--events", event_file, "--out", out, "--mode", "loo",
            "--rule", "ratio-only", "--min-history", "2",
        ) == 0
        manifest = json.loads((tmp_path / "samples.jsonl.manifest.json").read_text())
        assert manifest["config"]["mode"] == "loo"
        assert manifest["config"]["rule"] == "ratio-only"
        assert manifest["config"]["min_history"] == 2

    def test_config_file_under_flags(self, tmp_path, event_file):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"mode": "loo", "min_history": 3}))
        out = tmp_path / "samples.jsonl"
        assert run(
            "label", "--events", event_file, "--out", out,
            "--config", config, "--min-history", "4",
        ) == 0
        manifest = json.loads((tmp_path / "samples.jsonl.manifest.json").read_text())
        assert manifest["config"]["mode"] == "loo"  # from file
        assert manifest["config"]["min_history"] == 4  # flag wins

    def test_unknown_config_key_fails(self, tmp_path, event_file):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"no_such_flag": 1}))
        out = tmp_path / "samples.jsonl"
        assert run(
            "label", "--events", event_file, "--out", out, "--config", config
        ) == 1
        assert not out.exists()

    def test_missing_input_nonzero_exit(self, tmp_path):
        out = tmp_path / "samples.jsonl"
        assert run("label", "--events", tmp_path / "nope.jsonl", "--out", out) == 1
        assert not out.exists()


class TestTrainCommand:
    def test_accepts_label_output(self, tmp_path, event_file):
        samples = tmp_path / "samples.jsonl"
        model = tmp_path / "model.txt"
        assert run("label", "--events", event_file, "--out", samples) == 0
        assert run(
            "train", "--samples", samples, "--out", model,
            "--objective", "tol-weak", "--epochs", "3",
        ) == 0
        assert model.exists()
        history = (tmp_path / "model.txt.history.csv").read_text().splitlines()
        assert history[0] == "epoch,objective,loss"
        assert len(history) == 2 + 3  # header + init + 3 epochs

    def test_fixed_beta_spec(self, tmp_path, event_file):
        samples = tmp_path / "samples.jsonl"
        model = tmp_path / "model.txt"
        assert run("label", "--events", event_file, "--out", samples) == 0
        assert run(
            "train", "--samples", samples, "--out", model,
            "--objective", "tol-weak", "--beta", "fixed:0.4", "--epochs", "2",
        ) == 0

    def test_bad_beta_spec_fails_clean(self, tmp_path, event_file):
        samples = tmp_path / "samples.jsonl"
        model = tmp_path / "model.txt"
        assert run("label", "--events", event_file, "--out", samples) == 0
        assert run(
            "train", "--samples", samples, "--out", model, "--beta", "half"
        ) == 1
        assert not model.exists()
        assert not (tmp_path / "model.txt.history.csv").exists()


class TestAnalyzeCommand:
    def test_report_and_plot(self, tmp_path, event_file):
        out = tmp_path / "cohort.csv"
        assert run(
            "analyze", "--events", event_file, "--out", out,
            "--ref", "2024-06-01..2024-06-08", "--inv", "2024-06-08..2024-06-15",
            "--platform", "video",
        ) == 0
        lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == "bucket,users,decline_proportion"
        plot = (tmp_path / "cohort.csv.plot.csv").read_text().splitlines()
        assert plot[0] == "x,y"

    def test_bad_window_fails(self, tmp_path, event_file):
        out = tmp_path / "cohort.csv"
        assert run(
            "analyze", "--events", event_file, "--out", out,
            "--ref", "2024-06-08..2024-06-01", "--inv", "2024-06-08..2024-06-15",
        ) == 1
        assert not out.exists()


class TestSimulateCommand:
    def test_single_seed_schema(self, tmp_path):
        out = tmp_path / "daily.csv"
        assert run(
            "simulate", "--out", out, "--days", "2", "--population", "20",
            "--catalog", "40", "--pool", "12", "--slate", "4", "--epochs", "2",
        ) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "day,arm,active_users,retention_delta,tolerance_rate,dwell_delta"

    def test_multi_seed_adds_seed_column(self, tmp_path):
        out = tmp_path / "daily.csv"
        assert run(
            "simulate", "--out", out, "--seeds", "2", "--days", "2",
            "--population", "20", "--catalog", "40", "--pool", "12",
            "--slate", "4", "--epochs", "2",
        ) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("seed,day,arm")
        seeds = {line.split(",")[0] for line in lines[1:]}
        assert seeds == {"0", "1"}


class TestReportCommand:
    def test_merges_pipeline_outputs(self, tmp_path, event_file):
        samples = tmp_path / "samples.jsonl"
        model = tmp_path / "model.txt"
        cohort = tmp_path / "cohort.csv"
        daily = tmp_path / "daily.csv"
        summary = tmp_path / "summary.txt"
        assert run("label", "--events", event_file, "--out", samples) == 0
        assert run("train", "--samples", samples, "--out", model, "--epochs", "2") == 0
        assert run(
            "analyze", "--events", event_file, "--out", cohort,
            "--ref", "2024-06-01..2024-06-08", "--inv", "2024-06-08..2024-06-15",
        ) == 0
        assert run(
            "simulate", "--out", daily, "--days", "2", "--population", "20",
            "--catalog", "40", "--pool", "12", "--slate", "4", "--epochs", "2",
        ) == 0
        assert run(
            "report", "--out", summary, "--analyze", cohort,
            "--simulate", daily, "--train-history", tmp_path / "model.txt.history.csv",
        ) == 0
        text = summary.read_text()
        assert "[cohort]" in text and "[simulation]" in text and "[training]" in text

    def test_rejects_foreign_simulation_csv(self, tmp_path):
        bogus = tmp_path / "bogus.csv"
        bogus.write_text("a,b,c\n1,2,3\n")
        summary = tmp_path / "summary.txt"
        assert run("report", "--out", summary, "--simulate", bogus) == 1
        assert not summary.exists()

    def test_requires_at_least_one_input(self, tmp_path):
        assert run("report", "--out", tmp_path / "summary.txt") == 1


class TestEntryPoint:
    def test_installed_script(self):
        proc = subprocess.run(
            ["tolrec", "--version"], capture_output=True, text=True
        )
        assert proc.returncode == 0


class TestManifestDeterminism:
    def test_rerun_produces_identical_manifest_and_outputs(self, tmp_path, event_file):
        out_a = tmp_path / "a" / "samples.jsonl"
        out_b = tmp_path / "b" / "samples.jsonl"
        out_a.parent.mkdir()
        out_b.parent.mkdir()
        assert run("label", "--events", event_file, "--out", out_a) == 0
        assert run("label", "--events", event_file, "--out", out_b) == 0
        assert out_a.read_bytes() == out_b.read_bytes()
        manifest_a = json.loads((tmp_path / "a" / "samples.jsonl.manifest.json").read_text())
        manifest_b = json.loads((tmp_path / "b" / "samples.jsonl.manifest.json").read_text())
        manifest_a["config"]["out"] = manifest_b["config"]["out"] = ""
        manifest_a["config"]["profiles_out"] = manifest_b["config"]["profiles_out"] = ""
        assert manifest_a == manifest_b
