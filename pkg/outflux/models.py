"""Records describing a pipeline run."""

from dataclasses import dataclass, field
from typing import Any, Literal, Optional

StageName = Literal["extend", "solve", "verify"]
StageStatus = Literal["completed", "failed"]


@dataclass
class ArtifactRecord:
    """One file written by a stage, with its content hash."""

    name: str
    path: str
    sha256: str
    stage: str

    @classmethod
    def from_dict(cls, data: dict[str, str]) -> "ArtifactRecord":
        """Create ArtifactRecord from manifest dict."""
        return cls(name=data["name"], path=data["path"], sha256=data["sha256"], stage=data["stage"])

    def to_dict(self) -> dict[str, str]:
        return {"name": self.name, "path": self.path, "sha256": self.sha256, "stage": self.stage}


@dataclass
class StageRecord:
    """Outcome of one pipeline stage."""

    name: str
    status: StageStatus
    seconds: float = 0.0
    error: Optional[str] = None
    exit_code: int = 0

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StageRecord":
        """Create StageRecord from manifest dict."""
        return cls(
            name=data["name"],
            status=data["status"],
            seconds=float(data.get("seconds", 0.0)),
            error=data.get("error"),
            exit_code=int(data.get("exit_code", 0)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "status": self.status,
            "seconds": self.seconds,
            "error": self.error,
            "exit_code": self.exit_code,
        }


@dataclass
class RunManifest:
    """Inputs, outputs and stage outcomes of one run.

    Timing lives only in the stage records; artifact hashes cover file
    contents, so two runs with the same config, seed and thread count have
    equal hashes.
    """

    config_hash: str
    seed: int
    version: str
    out_dir: str
    inputs: dict[str, str] = field(default_factory=dict)
    threads: int = 1
    stages: list[StageRecord] = field(default_factory=list)
    artifacts: list[ArtifactRecord] = field(default_factory=list)

    @property
    def failed_stage(self) -> Optional[str]:
        for stage in self.stages:
            if not stage.completed:
                return stage.name
        return None

    @property
    def completed(self) -> bool:
        return bool(self.stages) and self.failed_stage is None

    def stage(self, name: str) -> Optional[StageRecord]:
        for record in self.stages:
            if record.name == name:
                return record
        return None

    def artifact(self, name: str) -> Optional[ArtifactRecord]:
        for record in self.artifacts:
            if record.name == name:
                return record
        return None

    def hashes(self) -> dict[str, str]:
        return {record.name: record.sha256 for record in self.artifacts}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunManifest":
        """Create RunManifest from the decoded manifest file."""
        return cls(
            config_hash=data["config_hash"],
            seed=int(data["seed"]),
            version=data["version"],
            out_dir=data["out_dir"],
            inputs=dict(data.get("inputs", {})),
            threads=int(data.get("threads", 1)),
            stages=[StageRecord.from_dict(s) for s in data.get("stages", [])],
            artifacts=[ArtifactRecord.from_dict(a) for a in data.get("artifacts", [])],
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": self.version,
            "out_dir": self.out_dir,
            "inputs": self.inputs,
            "threads": self.threads,
            "stages": [s.to_dict() for s in self.stages],
            "artifacts": [a.to_dict() for a in self.artifacts],
            "failed_stage": self.failed_stage,
        }
