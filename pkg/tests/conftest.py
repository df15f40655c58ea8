"""Pytest configuration for outflux tests."""

import json
import os

import hypothesis
import numpy as np
import pytest

from outflux.geometry import DomainSpec, Hole, OutletProfile, build_ladder

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))


@pytest.fixture
def log_capture(caplog):
    """Fixture to capture and configure logging."""
    caplog.set_level("DEBUG")
    return caplog


@pytest.fixture
def channel_profile():
    """g = 1, the straight channel."""
    return OutletProfile(kind="constant", scale=1.0)


@pytest.fixture
def paraboloid_profile():
    """g = (1 + t)^(2/3), a case (i) outlet."""
    return OutletProfile(kind="power", alpha=2.0 / 3.0, scale=1.0)


@pytest.fixture
def channel_spec(channel_profile):
    """Channel of half-width 1 with no holes, core (0, 2)."""
    return DomainSpec(profile=channel_profile, R0=2.0, gamma=1.0, outlet="out")


@pytest.fixture
def two_hole_spec():
    """Channel with two unit-spaced circular holes on the axis."""
    profile = OutletProfile(kind="constant", scale=1.0)
    holes = (Hole(center=1.0, semi_x=0.3, semi_y=0.3), Hole(center=2.0, semi_x=0.3, semi_y=0.3))
    return DomainSpec(profile=profile, R0=3.0, gamma=0.25, outlet="in", holes=holes)


@pytest.fixture
def channel_ladder(channel_profile):
    """Channel ladder from R0 = 2 with 6 cells."""
    return build_ladder(channel_profile, 2.0, 6)


@pytest.fixture
def paraboloid_ladder(paraboloid_profile):
    """Paraboloid ladder from R0 = 1 with 8 cells."""
    return build_ladder(paraboloid_profile, 1.0, 8)


@pytest.fixture
def channel_config_data():
    """Minimal channel run: one hole with flux 1, small ladder and coarse mesh."""
    return {
        "profile": {"kind": "constant", "scale": 1.0},
        "R_star": 0.0,
        "R0": 2.0,
        "holes": [{"center": 1.0, "radius": 0.4}],
        "gamma": 0.5,
        "outlet": "out",
        "boundary": {"outer_flux": 0.0, "hole_fluxes": [1.0]},
        "solve": {"nu": 1.0, "epsilon": 0.2, "mesh_size": 0.25, "levels": 2},
        "verify": {"trials": 20, "cells": 2, "bogovskii_resolution": 3},
        "ladder": {"K": 3},
    }


@pytest.fixture
def zero_config_data(channel_config_data):
    """Channel run with zero boundary data and no force."""
    data = json.loads(json.dumps(channel_config_data))
    data["boundary"] = {"outer_flux": 0.0, "hole_fluxes": [0.0]}
    return data


@pytest.fixture
def config_file(tmp_path, channel_config_data):
    """The channel config written to a temporary file."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps(channel_config_data))
    return path
