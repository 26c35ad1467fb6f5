"""Tests for the run manifest, report and run-directory layout."""

from rfr_modeler.paths import ensure_run_dirs, get_saddle_dir, model_path
from rfr_modeler.reporting import RunManifest, generate_run_report, load_manifest
from rfr_modeler.utils import file_sha1


class TestRunManifest:
    """Test stage bookkeeping and checksums."""

    def test_stage_created_once(self):
        manifest = RunManifest(config={}, tool_version="0.1.0")
        manifest.stage("fit").status = "ok"
        assert manifest.stage("fit").status == "ok"
        assert len(manifest.stages) == 1

    def test_files_relative_with_sha1(self, temp_dir):
        ensure_run_dirs(temp_dir)
        path = model_path(temp_dir)
        path.write_bytes(b"RFR1")
        manifest = RunManifest(config={}, tool_version="0.1.0")
        manifest.add_files("fit", [path], temp_dir)
        assert manifest.files == {"model/model.rfr": file_sha1(path)}

    def test_write_and_load(self, temp_dir):
        manifest = RunManifest(config={"system.name": "mg"}, tool_version="0.1.0")
        record = manifest.stage("simulate")
        record.status, record.time = "failed", 1.23456
        record.error = "NonFiniteState: blew up"
        manifest.write(temp_dir / "manifest.json")
        saved = load_manifest(temp_dir / "manifest.json")
        assert saved["config"] == {"system.name": "mg"}
        assert saved["stages"][0] == {"name": "simulate", "status": "failed", "time": 1.235,
                                      "files": {}, "error": "NonFiniteState: blew up"}


class TestRunReport:
    """Test the markdown run report."""

    def test_sections(self, temp_dir):
        manifest = RunManifest(config={"system.name": "ks"}, tool_version="0.1.0")
        manifest.stage("simulate").status = "ok"
        manifest.stage("saddle").status = "skipped"
        stats = {'simulate': {'n_samples': 100, 'time': 0.5},
                 'fit': {'J': 12, 'sigma2': 0.4, 'n': 80, 'residual_mse': 1e-3, 'time': 0.1},
                 'evaluate': {'median_E': 0.02, 'laminar_tail_slope_model': -0.1,
                              'laminar_tail_slope_actual': -0.12}}
        out = temp_dir / "run_report.md"
        generate_run_report(out, stats, manifest)
        text = out.read_text()
        assert text.startswith("# Run Report: ks")
        for heading in ("## Configuration", "## Regression", "## Evaluation", "## Stages"):
            assert heading in text
        assert "- **Centers J:** 12" in text
        assert "Laminar tail slope" in text
        assert "## Stagger-and-Step\n- skipped" in text
        assert "- **saddle:** skipped" in text

    def test_run_dirs(self, temp_dir):
        ensure_run_dirs(temp_dir / "run")
        assert get_saddle_dir(temp_dir / "run").is_dir()
