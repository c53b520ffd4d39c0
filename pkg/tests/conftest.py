import math

import numpy as np
import pytest

from fsslab.geometry import DomainSpec, PolarGrid

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def unit_disk():
    return DomainSpec.disk(1.0)


@pytest.fixture
def disk_grid(unit_disk):
    return PolarGrid(unit_disk, 32, 64)


@pytest.fixture
def annulus_grid():
    return PolarGrid(DomainSpec(0.5, 1.5), 32, 64)


@pytest.fixture
def acceptance_record():
    """Record ``(criterion, status, detail)`` for the end-of-run summary."""
    def record(number: int, ok: bool, detail: str):
        _ACCEPTANCE[number] = ("PASS" if ok else "FAIL", detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")


def smooth_field(grid, seed=0):
    """Random smooth nonnegative field vanishing on the Dirichlet boundary."""
    rng = np.random.default_rng(seed)
    out = np.zeros(grid.shape)
    for _ in range(4):
        cx, cy = rng.uniform(-0.5, 0.5, 2) * grid.domain.outer_radius
        w = rng.uniform(0.2, 0.5)
        out += rng.uniform(0.5, 1.5) * np.exp(-((grid.X - cx) ** 2 + (grid.Y - cy) ** 2) / w**2)
    a1, a2 = grid.domain.inner_radius, grid.domain.outer_radius
    out *= np.clip((grid.R - a1) * (a2 - grid.R), 0, None)
    out[grid.boundary_mask] = 0.0
    if grid.is_disk:
        out[0] = out[0, 0]
    return out


__all__ = ["smooth_field", "math"]
