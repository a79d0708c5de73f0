import json

import pytest

from trackscan.components import get_test_case
from trackscan.inspection import PipelineConfig, Verdict, inspect
from trackscan.report_files import (
    NAME,
    VERSION,
    DocumentError,
    load_document,
    load_report,
    save_report,
)
from trackscan.report_models import Report
from trackscan.scene import SceneConfig, render_track, standard_geometry


@pytest.fixture(scope="module")
def report():
    scene = SceneConfig()
    geometry = standard_geometry(scene)
    control = render_track(geometry, get_test_case(1).defects, 1, scene).image
    variable = render_track(geometry, get_test_case(4).defects, 2, scene).image
    config = PipelineConfig(diff_threshold=12)
    return inspect(control, variable, geometry, config, "01_F_T1", "04_F_T1")


class TestReports:
    def test_save_and_load(self, tmp_path, report):
        path = tmp_path / "report.json"
        save_report(report, path)
        loaded = load_report(path)
        assert loaded.verdict is Verdict.NOT_SAFE
        assert loaded.defect_labels == report.defect_labels
        assert loaded.blobs == report.blobs
        assert loaded.offset == report.offset
        assert loaded.step_log == report.step_log
        assert loaded.config.diff_threshold == 12

    def test_document_header(self, tmp_path, report):
        path = tmp_path / "report.json"
        save_report(report, path)
        document = json.loads(path.read_text())
        assert document["application"] == NAME
        assert document["version"] == VERSION
        assert document["verdict"] == "NotSafe"
        assert document["defect_labels"] == ["1-7S"]


class TestDocuments:
    def write(self, path, **fields):
        path.write_text(json.dumps(fields))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DocumentError):
            load_document(tmp_path / "missing.json", Report)

    def test_not_json(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text("{not json")
        with pytest.raises(DocumentError):
            load_document(path, Report)

    def test_other_application(self, tmp_path):
        path = tmp_path / "report.json"
        self.write(path, application="other", version="1.0")
        with pytest.raises(DocumentError, match="not written by"):
            load_document(path, Report)

    def test_newer_major_version(self, tmp_path):
        path = tmp_path / "report.json"
        self.write(path, application=NAME, version="999.0")
        with pytest.raises(DocumentError, match="written by"):
            load_document(path, Report)

    def test_invalid_content(self, tmp_path):
        path = tmp_path / "report.json"
        self.write(path, application=NAME, version=VERSION, verdict="Safe")
        with pytest.raises(DocumentError, match="Invalid"):
            load_document(path, Report)
