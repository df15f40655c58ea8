"""Tests for run artifact persistence."""

import json

import numpy as np
import pytest

from outflux.exceptions import ArtifactNotFoundError, StorageError
from outflux.models import ArtifactRecord, RunManifest, StageRecord
from outflux.storage import MANIFEST_NAME, RunStore


@pytest.fixture
def store(tmp_path):
    """A store in a fresh run directory."""
    return RunStore(tmp_path / "run", config_hash="abc123")


@pytest.fixture
def manifest(tmp_path):
    """A manifest with one completed and one failed stage."""
    return RunManifest(
        config_hash="abc123",
        seed=7,
        version="0.1.0",
        out_dir=str(tmp_path / "run"),
        inputs={"config": "run.json"},
        threads=2,
        stages=[
            StageRecord("extend", "completed", seconds=0.5),
            StageRecord("solve", "failed", error="did not converge", exit_code=3),
        ],
        artifacts=[ArtifactRecord("ladder", "ladder.csv", "ff00", "extend")],
    )


class TestRunManifest:
    """Test the manifest records."""

    def test_round_trip(self, manifest):
        """Test that to_dict and from_dict agree."""
        loaded = RunManifest.from_dict(json.loads(json.dumps(manifest.to_dict())))
        assert loaded == manifest

    def test_failed_stage(self, manifest):
        """Test the first failing stage and completion."""
        assert manifest.failed_stage == "solve"
        assert not manifest.completed
        assert manifest.to_dict()["failed_stage"] == "solve"
        assert manifest.stage("solve").exit_code == 3
        assert manifest.stage("verify") is None

    def test_empty_not_completed(self):
        """Test that a manifest without stages is not complete."""
        assert not RunManifest("h", 0, "0.1.0", "out").completed

    def test_artifact_lookup(self, manifest):
        """Test artifact access by name and the hash map."""
        assert manifest.artifact("ladder").stage == "extend"
        assert manifest.artifact("missing") is None
        assert manifest.hashes() == {"ladder": "ff00"}


class TestRunStore:
    """Test reading and writing artifacts."""

    def test_csv_header(self, store):
        """Test the self-describing first line and the column row."""
        store.write_csv("ladder", "verify", ["k", "R_k"], [(0, 2.0), (1, 3.0)])
        lines = store.path("ladder.csv").read_text().splitlines()
        assert lines[0] == "# outflux ladder config_hash=abc123 columns=k,R_k"
        assert lines[1] == "k,R_k"
        assert lines[2] == "0,2"

    def test_csv_round_trip(self, store):
        """Test that floats written with 17 digits are read back exactly."""
        rows = np.array([[0.1, 1.0 / 3.0], [np.pi, 1e-300]])
        store.write_csv("table", "solve", ["a", "b"], rows)
        columns, data = store.read_csv("table")
        assert columns == ["a", "b"]
        assert np.array_equal(data, rows)

    def test_csv_empty(self, store):
        """Test a table without rows."""
        store.write_csv("empty", "solve", ["a", "b", "c"], [])
        columns, data = store.read_csv("empty")
        assert columns == ["a", "b", "c"]
        assert data.shape == (0, 3)

    def test_csv_row_length(self, store):
        """Test that rows must match the columns."""
        with pytest.raises(StorageError, match="expected 2 columns"):
            store.write_csv("bad", "solve", ["a", "b"], [(1.0,)])

    def test_json_header(self, store):
        """Test the outflux header object and the record hash."""
        record = store.write_json("verify", "verify", {"hardy": {"constant": 3.3}})
        data = store.read_json("verify")
        assert data["outflux"] == {"kind": "verify", "config_hash": "abc123"}
        assert data["hardy"]["constant"] == 3.3
        assert record.path == "verify.json"
        assert store.verify(record)

    def test_identical_bytes(self, tmp_path):
        """Test that identical content gives identical hashes."""
        first = RunStore(tmp_path / "a", "h").write_csv("t", "solve", ["x"], [(0.5,), (2,)])
        second = RunStore(tmp_path / "b", "h").write_csv("t", "solve", ["x"], [(0.5,), (2,)])
        assert first.sha256 == second.sha256

    def test_verify_detects_change(self, store):
        """Test that editing a file breaks its recorded hash."""
        record = store.write_json("report", "solve", {"value": 1})
        store.path("report.json").write_text("{}")
        assert not store.verify(record)
        store.path("report.json").unlink()
        assert not store.verify(record)

    def test_missing_artifacts(self, store):
        """Test that missing files raise ArtifactNotFoundError."""
        with pytest.raises(ArtifactNotFoundError):
            store.read_csv("nothing")
        with pytest.raises(ArtifactNotFoundError):
            store.read_json("nothing")

    def test_corrupted_json(self, store):
        """Test that invalid JSON raises StorageError."""
        store.write_json("report", "solve", {})
        store.path("report.json").write_text("{not json")
        with pytest.raises(StorageError, match="corrupted"):
            store.read_json("report")

    def test_path_is_file(self, tmp_path):
        """Test that the output path must not be a file."""
        target = tmp_path / "file"
        target.write_text("x")
        with pytest.raises(StorageError, match="not a directory"):
            RunStore(target)


class TestManifestFile:
    """Test manifest persistence."""

    def test_save_and_load(self, store, manifest):
        """Test that a saved manifest loads back unchanged."""
        path = store.save_manifest(manifest)
        assert path.name == MANIFEST_NAME
        assert RunStore.load_manifest(store.out_dir) == manifest

    def test_missing_manifest(self, tmp_path):
        """Test that a directory without manifest raises ArtifactNotFoundError."""
        with pytest.raises(ArtifactNotFoundError, match="No manifest"):
            RunStore.load_manifest(tmp_path)

    def test_invalid_manifest(self, tmp_path):
        """Test that a manifest with missing keys raises StorageError."""
        (tmp_path / MANIFEST_NAME).write_text(json.dumps({"seed": 1}))
        with pytest.raises(StorageError, match="invalid format"):
            RunStore.load_manifest(tmp_path)

    def test_exit_codes(self):
        """Test the process exit codes of storage errors."""
        assert StorageError("x").exit_code == 3
        assert ArtifactNotFoundError("x").exit_code == 3
