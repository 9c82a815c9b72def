"""Small hand-built maps shared by the test modules."""
from __future__ import annotations

import numpy as np

from skyroute.radiomap import GnbSite, RadioMap


def grid_map(sinr: np.ndarray, cell_size_m: float = 50.0) -> RadioMap:
    """RadioMap straight from a (w, h, n_gnb) SINR array; gNB sites are placeholders."""
    sinr = np.asarray(sinr, dtype=np.float64)
    gnbs = tuple(GnbSite(i, 100.0 * i, 0.0) for i in range(sinr.shape[2]))
    return RadioMap(sinr.shape[0], sinr.shape[1], cell_size_m, 150.0, gnbs, sinr)


def uniform_map(w: int = 5, h: int = 5, value: float = 5.0) -> RadioMap:
    return grid_map(np.full((w, h, 1), value))


def two_region_map() -> RadioMap:
    """Strong signal along the west columns and the south row, weak elsewhere."""
    sinr = np.full((5, 5, 1), -5.0)
    sinr[:2, :, 0] = 10.0
    sinr[:, 0, 0] = 10.0
    return grid_map(sinr)


def split_map(w: int = 5, h: int = 5, boundary: int = 3) -> RadioMap:
    """gNB 0 serves columns ``< boundary``, gNB 1 the rest."""
    sinr = np.zeros((w, h, 2))
    sinr[:boundary, :, 0], sinr[boundary:, :, 0] = 10.0, -10.0
    sinr[:boundary, :, 1], sinr[boundary:, :, 1] = -10.0, 10.0
    return grid_map(sinr)


# name -> (map, start, goal); every instance is at most 5x5
SMALL_FIXTURES = {
    "uniform": (uniform_map(), (0, 4), (4, 0)),
    "two_region": (two_region_map(), (0, 4), (4, 0)),
    "boundary_handover": (split_map(), (0, 2), (4, 2)),
}
