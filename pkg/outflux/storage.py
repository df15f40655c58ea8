"""Artifact persistence for pipeline runs.

Every run writes into one output directory:

- ``manifest.json``: the RunManifest (stages, artifact hashes, seed, config hash)
- ``<name>.json``: reports, with an ``outflux`` header object
- ``<name>.csv``: numeric tables whose first line is a comment of the form::

      # outflux <name> config_hash=<sha256> columns=<c1>,<c2>,...

  followed by a plain header row and the data rows.

Floats are written with 17 significant digits so the files round-trip exactly
and identical runs produce identical bytes.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np
import numpy.typing as npt

from outflux.exceptions import ArtifactNotFoundError, StorageError
from outflux.models import ArtifactRecord, RunManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _format(value: Any) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class RunStore:
    """Reads and writes the artifacts of one run directory.

    Example:
        >>> store = RunStore("runs/channel", config_hash)
        >>> record = store.write_csv("ladder", "verify", ["k", "R_k"], rows)
        >>> columns, data = store.read_csv("ladder")
    """

    def __init__(self, out_dir: Union[str, Path], config_hash: str = ""):
        """Initialize the store.

        Args:
            out_dir: Run directory; created when missing
            config_hash: Hash written into every file header

        Raises:
            StorageError: If the path exists and is not a directory
        """
        self.out_dir = Path(out_dir).expanduser().resolve()
        self.config_hash = config_hash
        if self.out_dir.exists() and not self.out_dir.is_dir():
            raise StorageError(f"Output path is not a directory: {self.out_dir}")

    def _ensure_dir(self) -> None:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise StorageError(f"Failed to create output directory {self.out_dir}: {e}") from e

    def path(self, filename: str) -> Path:
        return self.out_dir / filename

    def _write(self, filename: str, payload: bytes) -> str:
        self._ensure_dir()
        target = self.path(filename)
        try:
            target.write_bytes(payload)
        except OSError as e:
            raise StorageError(f"Failed to write {target}: {e}") from e
        digest = _sha256(payload)
        logger.debug(f"Wrote {target.name} ({len(payload)} bytes, sha256 {digest[:12]})")
        return digest

    def write_json(self, name: str, stage: str, payload: dict[str, Any]) -> ArtifactRecord:
        """Write a JSON report with an ``outflux`` header object.

        Raises:
            StorageError: If the file cannot be written
        """
        document = {"outflux": {"kind": name, "config_hash": self.config_hash}, **payload}
        text = json.dumps(document, sort_keys=True, indent=2, allow_nan=True) + "\n"
        filename = f"{name}.json"
        digest = self._write(filename, text.encode("utf-8"))
        return ArtifactRecord(name=name, path=filename, sha256=digest, stage=stage)

    def write_csv(
        self,
        name: str,
        stage: str,
        columns: Sequence[str],
        rows: Union[Sequence[Sequence[Any]], npt.NDArray[Any]],
    ) -> ArtifactRecord:
        """Write a CSV table with the self-describing header comment.

        Raises:
            StorageError: If the rows do not match the columns or the file cannot be written
        """
        header = ",".join(columns)
        lines = [f"# outflux {name} config_hash={self.config_hash} columns={header}", header]
        for row in rows:
            if len(row) != len(columns):
                raise StorageError(
                    f"Row of length {len(row)} in {name}.csv, expected {len(columns)} columns"
                )
            lines.append(",".join(_format(value) for value in row))
        filename = f"{name}.csv"
        digest = self._write(filename, ("\n".join(lines) + "\n").encode("utf-8"))
        return ArtifactRecord(name=name, path=filename, sha256=digest, stage=stage)

    def read_json(self, name: str) -> dict[str, Any]:
        """Load a JSON report written by ``write_json``.

        Raises:
            ArtifactNotFoundError: If the file does not exist
            StorageError: If it is not valid JSON
        """
        target = self.path(f"{name}.json")
        if not target.exists():
            raise ArtifactNotFoundError(f"Artifact {name}.json not found in {self.out_dir}")
        try:
            with open(target, "r", encoding="utf-8") as f:
                data: dict[str, Any] = json.load(f)
        except json.JSONDecodeError as e:
            raise StorageError(f"Artifact {target.name} is corrupted (invalid JSON): {e}") from e
        except OSError as e:
            raise StorageError(f"Failed to read {target}: {e}") from e
        return data

    def read_csv(self, name: str) -> tuple[list[str], npt.NDArray[np.float64]]:
        """Columns and data of a CSV table written by ``write_csv``.

        Raises:
            ArtifactNotFoundError: If the file does not exist
            StorageError: If the file cannot be parsed
        """
        target = self.path(f"{name}.csv")
        if not target.exists():
            raise ArtifactNotFoundError(f"Artifact {name}.csv not found in {self.out_dir}")
        try:
            lines = [ln for ln in target.read_text(encoding="utf-8").splitlines()
                     if ln and not ln.startswith("#")]
            columns = lines[0].split(",")
            data = np.loadtxt(lines[1:], delimiter=",", ndmin=2) if lines[1:] else np.zeros(
                (0, len(columns))
            )
        except (OSError, ValueError, IndexError) as e:
            raise StorageError(f"Failed to parse {target}: {e}") from e
        return columns, data

    def save_manifest(self, manifest: RunManifest) -> Path:
        """Write ``manifest.json``.

        Raises:
            StorageError: If the file cannot be written
        """
        text = json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n"
        self._write(MANIFEST_NAME, text.encode("utf-8"))
        return self.path(MANIFEST_NAME)

    @classmethod
    def load_manifest(cls, out_dir: Union[str, Path]) -> RunManifest:
        """Read the manifest of a run directory.

        Raises:
            ArtifactNotFoundError: If the directory has no manifest
            StorageError: If the manifest is corrupted
        """
        target = Path(out_dir).expanduser().resolve() / MANIFEST_NAME
        if not target.exists():
            raise ArtifactNotFoundError(f"No manifest found at {target}")
        try:
            with open(target, "r", encoding="utf-8") as f:
                data = json.load(f)
            manifest = RunManifest.from_dict(data)
        except json.JSONDecodeError as e:
            raise StorageError(f"Manifest is corrupted (invalid JSON): {e}") from e
        except (KeyError, TypeError, ValueError) as e:
            raise StorageError(f"Manifest has an invalid format: {e}") from e
        except OSError as e:
            raise StorageError(f"Failed to read manifest: {e}") from e
        logger.debug(f"Loaded manifest from {target} ({len(manifest.artifacts)} artifacts)")
        return manifest

    def verify(self, record: ArtifactRecord) -> bool:
        """True when the file on disk still has the recorded hash."""
        target = self.path(record.path)
        if not target.exists():
            return False
        return _sha256(target.read_bytes()) == record.sha256
