"""Configuration models for outflux runs.

A run is described by one JSON document. The domain fields live at the top
level; boundary data, forcing and the numerical knobs of each stage live in
optional sections with defaults::

    {
        "profile": {"kind": "power", "alpha": 0.6667, "scale": 1.0},
        "R_star": 0.0,
        "R0": 2.0,
        "holes": [{"center": 1.0, "radius": 0.3}],
        "gamma": 1.0,
        "outlet": "in",
        "boundary": {"outer_flux": 0.0, "hole_fluxes": [1.0]},
        "solve": {"nu": 1.0, "mesh_size": 0.25, "levels": 3}
    }
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from outflux.exceptions import ConfigError

logger = logging.getLogger(__name__)

THREADS_ENV = "OUTFLUX_THREADS"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ProfileModel(_Section):
    """Outlet profile g."""

    kind: Literal["power", "constant"]
    alpha: float = 0.0
    scale: float = Field(default=1.0, gt=0)
    lipschitz: Optional[float] = Field(default=None, ge=0)


class HoleModel(_Section):
    """An axis-centered circle or ellipse."""

    center: float
    radius: Optional[float] = Field(default=None, gt=0)
    semi_axes: Optional[tuple[float, float]] = None

    @model_validator(mode="after")
    def _one_shape(self) -> "HoleModel":
        if (self.radius is None) == (self.semi_axes is None):
            raise ValueError("exactly one of 'radius' and 'semi_axes' is required")
        if self.semi_axes is not None and min(self.semi_axes) <= 0:
            raise ValueError("semi_axes must be positive")
        return self

    @property
    def axes(self) -> tuple[float, float]:
        if self.semi_axes is not None:
            return self.semi_axes
        assert self.radius is not None
        return (self.radius, self.radius)


class BoundaryModel(_Section):
    """Fluxes of the boundary datum per component."""

    outer_flux: float = 0.0
    hole_fluxes: list[float] = Field(default_factory=list)
    swirl: list[float] = Field(default_factory=list)
    outer_support: float = Field(default=0.5, gt=0, lt=1)


class ForceModel(_Section):
    """Body force."""

    kind: Literal["none", "bump"] = "none"
    amplitude: float = 0.0
    center: float = 0.0
    radius: float = Field(default=0.5, gt=0)


class SolveModel(_Section):
    """Numerical settings of the perturbation solver."""

    nu: float = Field(default=1.0, gt=0)
    epsilon: Optional[float] = Field(default=None, gt=0)
    mesh_size: float = Field(default=0.25, gt=0)
    levels: int = Field(default=3, ge=1)
    picard_tol: float = Field(default=1e-10, gt=0)
    picard_max_iter: int = Field(default=60, ge=1)
    homotopy: list[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    level_tol: float = Field(default=1e-4, gt=0)
    collar: float = Field(default=0.5, gt=0, lt=1)
    quadrature_order: int = Field(default=4, ge=3, le=8)

    @model_validator(mode="after")
    def _ladder_shape(self) -> "SolveModel":
        ladder = self.homotopy
        if not ladder or ladder[-1] != 1.0 or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("homotopy must be strictly increasing and end at 1.0")
        if ladder[0] < 0:
            raise ValueError("homotopy values must lie in [0, 1]")
        return self


class VerifyModel(_Section):
    """Settings of the inequality checks."""

    epsilons: list[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    trials: int = Field(default=24, ge=20)
    cells: int = Field(default=5, ge=1)
    bogovskii_resolution: int = Field(default=6, ge=2)


class LadderModel(_Section):
    """Length of the truncation ladder."""

    K: int = Field(default=8, ge=1)


class RunConfig(_Section):
    """Complete run configuration."""

    profile: ProfileModel
    r_star: float = Field(alias="R_star")
    r0: float = Field(alias="R0")
    x_left: float = 0.0
    holes: list[HoleModel] = Field(default_factory=list)
    gamma: float = Field(gt=0)
    outlet: Literal["in", "out"]
    boundary: BoundaryModel = Field(default_factory=BoundaryModel)
    force: ForceModel = Field(default_factory=ForceModel)
    solve: SolveModel = Field(default_factory=SolveModel)
    verify: VerifyModel = Field(default_factory=VerifyModel)
    ladder: LadderModel = Field(default_factory=LadderModel)

    @model_validator(mode="after")
    def _boundary_matches_holes(self) -> "RunConfig":
        count = len(self.holes)
        if self.boundary.hole_fluxes and len(self.boundary.hole_fluxes) != count:
            raise ValueError(f"boundary.hole_fluxes needs {count} entries")
        if self.boundary.swirl and len(self.boundary.swirl) != count:
            raise ValueError(f"boundary.swirl needs {count} entries")
        return self

    def canonical_json(self) -> str:
        """Canonical JSON dump used for hashing."""
        payload = self.model_dump(mode="json", by_alias=True)
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _pointer(loc: tuple[Union[int, str], ...]) -> str:
    return "/" + "/".join(str(part) for part in loc)


def parse_config(data: Any) -> RunConfig:
    """Validate a decoded JSON document.

    Args:
        data: Decoded JSON document

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: If validation fails; the pointer names the first offending field
    """
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        pointer = _pointer(tuple(first["loc"]))
        logger.error(f"Config validation failed at {pointer}: {first['msg']}")
        raise ConfigError(f"{first['msg']}: {pointer.lstrip('/')}", pointer=pointer) from e


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a JSON config file.

    Raises:
        ConfigError: If the file cannot be read, decoded or validated
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    config = parse_config(data)
    logger.info(f"Loaded config {path} (hash {config.config_hash[:12]})")
    return config


def thread_count() -> int:
    """Worker count for parallel trials, from OUTFLUX_THREADS (default 1).

    Raises:
        ConfigError: If the variable is not a positive integer
    """
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} must be an integer", pointer=f"env:{THREADS_ENV}") from e
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be positive", pointer=f"env:{THREADS_ENV}")
    return value
