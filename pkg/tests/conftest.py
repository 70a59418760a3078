from __future__ import annotations

import numpy as np
import pytest

from regionsep.geometry import DEFAULT_REGIONS
from regionsep.roomsim import RoomSpec
from regionsep.scene import SceneSpec, SourceSpec, synthesize_scene

FULL_ROLES = ("target", "interf_a", "interf_b", "interf_c", "point_noise")
NO_TARGET_ROLES = ("interf_a", "interf_b", "interf_c", "point_noise")


def make_spec(roles=FULL_ROLES, seed=0, t60=0.4, dims=(6.0, 5.0, 3.0), duration=2.0, **kw) -> SceneSpec:
    return SceneSpec(
        room=RoomSpec(dims, t60),
        sources=[SourceSpec(r) for r in roles],
        regions=list(DEFAULT_REGIONS),
        duration=duration,
        seed=seed,
        **kw,
    )


@pytest.fixture(scope="session")
def desk_scene():
    return synthesize_scene(make_spec(seed=3))


@pytest.fixture(scope="session")
def empty_scene():
    return synthesize_scene(make_spec(NO_TARGET_ROLES, seed=4))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
