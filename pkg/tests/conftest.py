"""Shared fixtures and the acceptance-criteria reporter.

Acceptance tests record one (name, ok, detail) triple each; the terminal
summary hook prints a single PASS/FAIL line per criterion at the end of
the run so the gate can be read off the pytest output directly.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from biovista.core import Grid
from biovista.dataset import Sample
from biovista.raster_io import Raster

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record a criterion outcome, then assert it."""

    def _record(name: str, ok: bool, detail: str = ""):
        ACCEPTANCE_RESULTS.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        line = f"{status}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


def make_grid(origin_e: float = 430000.0, origin_n: float = 6160000.0,
              pixel_size: float = 10.0, width: int = 60,
              height: int = 60) -> Grid:
    return Grid(origin_e=origin_e, origin_n=origin_n,
                pixel_size=pixel_size, width=width, height=height)


def make_raster(data: np.ndarray, pixel_size: float = 10.0,
                origin_e: float = 430000.0, origin_n: float = 6160000.0,
                nodata: float | None = None) -> Raster:
    h, w = data.shape[:2]
    grid = Grid(origin_e=origin_e, origin_n=origin_n,
                pixel_size=pixel_size, width=w, height=h)
    return Raster(data=data, grid=grid, nodata=nodata)


def make_samples(n_train: int, n_val: int, n_test: int = 0,
                 year: int = 2021) -> list[Sample]:
    """Balanced fake samples: even index -> low, odd -> high."""
    out = []
    counts = (("train", n_train), ("val", n_val), ("test", n_test))
    i = 0
    for split, n in counts:
        for _ in range(n):
            label = "high" if i % 2 else "low"
            out.append(Sample(
                sample_id=f"s{i:04d}", patch_id=f"p{i % 8}", label=label,
                year=year, split=split,
                easting=430000.0 + i, northing=6160000.0 - i))
            i += 1
    return out
