"""Shared test helpers: independent readers and structural checkers."""

from __future__ import annotations

from collections import deque

import numpy as np
import pytest

from hsiclean.datacube import grid_synth_spec, synth_cube
from hsiclean.segmentation import SuperpixelMap


def parse_ppm(blob: bytes) -> np.ndarray:
    """Minimal independent P6 reader: returns an (H, W, 3) uint8 array."""
    fields = []
    pos = 0
    while len(fields) < 4:
        while blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while blob[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    assert fields[0] == b"P6"
    width, height, maxval = (int(f) for f in fields[1:])
    assert maxval == 255
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(blob[pos:pos + width * height * 3], dtype=np.uint8)
    return pixels.reshape(height, width, 3)


def segments_are_connected(segmap: SuperpixelMap) -> bool:
    """4-connectivity of every segment, checked by flood fill."""
    seg = segmap.segments
    height, width = seg.shape
    seen = np.zeros_like(seg, dtype=bool)
    for sid in range(segmap.n_segments):
        ys, xs = np.nonzero(seg == sid)
        if ys.size == 0:
            return False
        queue = deque([(int(ys[0]), int(xs[0]))])
        seen[ys[0], xs[0]] = True
        reached = 1
        while queue:
            y, x = queue.popleft()
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if 0 <= ny < height and 0 <= nx < width \
                        and not seen[ny, nx] and seg[ny, nx] == sid:
                    seen[ny, nx] = True
                    reached += 1
                    queue.append((ny, nx))
        if reached != ys.size:
            return False
    return True


def boundary_edges(grid: np.ndarray) -> set[tuple[int, int, int, int]]:
    """Adjacent pixel pairs (4-neighborhood) whose values differ."""
    edges = set()
    height, width = grid.shape
    for y in range(height):
        for x in range(width):
            if x + 1 < width and grid[y, x] != grid[y, x + 1]:
                edges.add((y, x, y, x + 1))
            if y + 1 < height and grid[y, x] != grid[y + 1, x]:
                edges.add((y, x, y + 1, x))
    return edges


def random_segmap(rng: np.random.Generator, n: int, max_segments: int) -> SuperpixelMap:
    """A 1 x n strip with sorted ids: contiguous runs, hence 4-connected."""
    ids = np.sort(rng.integers(0, max_segments, size=n))
    _, compact = np.unique(ids, return_inverse=True)
    return SuperpixelMap(compact.reshape(1, n), int(compact.max()) + 1)


@pytest.fixture(scope="session")
def flat_scene():
    """Zero-noise 6-class scene with regions much larger than the seed grid."""
    spec = grid_synth_spec(60, 60, 8, 6, 3, 3, spacing=10.0, sigma=0.0)
    return synth_cube(spec, 7)


@pytest.fixture(scope="session")
def noisy_scene():
    """The desk-scale benchmark scene: 6 classes, 600 train pixels available."""
    spec = grid_synth_spec(60, 60, 8, 6, 3, 3, spacing=10.0, sigma=2.0)
    return synth_cube(spec, 7)
