"""Gridded mmWave radio environment: per-cell, per-gNB SINR and serving-cell logic.

Cell ``(cx, cy)`` has its centre at ``((cx + 0.5) * cell_size_m, (cy + 0.5) * cell_size_m)``
in the same ground frame as the gNB coordinates. ``cx`` grows eastward and ``cy``
northward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import substream

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0
# Disconnected/blocked cells are clamped here instead of -inf.
SINR_FLOOR_DB = -40.0

MAP_MAGIC = "# skyroute-map v1"
MAP_FIELDS = "width_cells,height_cells,cell_size_m,uav_altitude_m,num_gnbs"


class MapFormatError(ValueError):
    """Malformed map file; the message carries the offending line number."""


class MapValidationError(ValueError):
    """Map contents are inconsistent (missing cells, bad dimensions, ...)."""


@dataclass(frozen=True)
class GnbSite:
    id: int
    x: float
    y: float
    height: float = 25.0
    tx_power_dbm: float = 23.0

    def __post_init__(self):
        if not math.isfinite(self.tx_power_dbm):
            raise MapValidationError(f"gNB {self.id}: tx_power_dbm must be finite")


@dataclass(frozen=True)
class CellRadioInfo:
    serving_gnb: int
    best_sinr_db: float
    per_gnb_sinr_db: np.ndarray


@dataclass(frozen=True, eq=False)
class RadioMap:
    """Immutable SINR grid indexed ``sinr_db[cx, cy, k]`` with ``k`` the gNB position in ``gnbs``.

    gNBs are kept sorted by id so that ``argmax`` ties resolve to the lowest id.
    """

    width_cells: int
    height_cells: int
    cell_size_m: float
    uav_altitude_m: float
    gnbs: tuple[GnbSite, ...]
    sinr_db: np.ndarray

    def __post_init__(self):
        if self.width_cells <= 0 or self.height_cells <= 0:
            raise MapValidationError("grid dimensions must be positive")
        if self.width_cells * self.height_cells < 2:
            raise MapValidationError("grid must contain at least two cells")
        if not self.gnbs:
            raise MapValidationError("map needs at least one gNB")
        ids = [g.id for g in self.gnbs]
        if len(set(ids)) != len(ids):
            raise MapValidationError(f"duplicate gNB ids: {ids}")
        sinr = np.array(self.sinr_db, dtype=np.float64)
        expected = (self.width_cells, self.height_cells, len(self.gnbs))
        if sinr.shape != expected:
            raise MapValidationError(f"sinr_db shape {sinr.shape} != {expected}")
        if not np.all(np.isfinite(sinr)):
            raise MapValidationError("sinr_db contains non-finite values")
        order = np.argsort(ids, kind="stable")
        sinr = sinr[:, :, order]
        sinr.setflags(write=False)
        object.__setattr__(self, "gnbs", tuple(self.gnbs[i] for i in order))
        object.__setattr__(self, "sinr_db", sinr)

    def __eq__(self, other):
        if not isinstance(other, RadioMap):
            return NotImplemented
        return (
            self.width_cells == other.width_cells
            and self.height_cells == other.height_cells
            and self.cell_size_m == other.cell_size_m
            and self.uav_altitude_m == other.uav_altitude_m
            and self.gnbs == other.gnbs
            and np.array_equal(self.sinr_db, other.sinr_db)
        )

    __hash__ = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.width_cells, self.height_cells

    @property
    def gnb_ids(self) -> list[int]:
        return [g.id for g in self.gnbs]

    @cached_property
    def best_sinr_db(self) -> np.ndarray:
        """Per-cell maximum SINR over gNBs, shape ``(width, height)``."""
        best = self.sinr_db.max(axis=2)
        best.setflags(write=False)
        return best

    @cached_property
    def serving_gnb(self) -> np.ndarray:
        """Per-cell serving gNB id (highest SINR, ties to the lowest id)."""
        ids = np.array(self.gnb_ids)
        serving = ids[np.argmax(self.sinr_db, axis=2)]
        serving.setflags(write=False)
        return serving

    @cached_property
    def min_best_sinr_db(self) -> float:
        return float(self.best_sinr_db.min())

    def cell_center(self, cx: int, cy: int) -> tuple[float, float]:
        return (cx + 0.5) * self.cell_size_m, (cy + 0.5) * self.cell_size_m

    def in_range(self, cx: int, cy: int) -> bool:
        return 0 <= cx < self.width_cells and 0 <= cy < self.height_cells

    def _check(self, cx: int, cy: int):
        if not self.in_range(cx, cy):
            raise IndexError(f"cell ({cx}, {cy}) outside {self.width_cells}x{self.height_cells} grid")


def cell_info(radio_map: RadioMap, cx: int, cy: int) -> CellRadioInfo:
    radio_map._check(cx, cy)
    per_gnb = radio_map.sinr_db[cx, cy]
    k = int(np.argmax(per_gnb))
    return CellRadioInfo(
        serving_gnb=radio_map.gnbs[k].id,
        best_sinr_db=float(per_gnb[k]),
        per_gnb_sinr_db=per_gnb.copy(),
    )


def is_handover(radio_map: RadioMap, from_cell: tuple[int, int], to_cell: tuple[int, int]) -> bool:
    radio_map._check(*from_cell)
    radio_map._check(*to_cell)
    return bool(radio_map.serving_gnb[from_cell] != radio_map.serving_gnb[to_cell])


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=np.float64) / 10.0)


def compute_sinr_db(rx_power_dbm: float, interference_powers_dbm: Sequence[float], noise_power_dbm: float) -> float:
    """SINR in dB of a received power against the summed interferers plus noise.

    Powers are combined in the linear domain: ``10 log10(S / (N + sum(I)))``.
    """
    signal = 10.0 ** (rx_power_dbm / 10.0)
    noise = 10.0 ** (noise_power_dbm / 10.0)
    interference = math.fsum(10.0 ** (p / 10.0) for p in interference_powers_dbm)
    return 10.0 * math.log10(signal / (noise + interference))


def noise_power_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


def free_space_path_loss_db(distance_m, carrier_hz: float):
    # Friis: 20 log10(4 pi d f / c)
    return 20.0 * np.log10(4.0 * np.pi * np.asarray(distance_m, dtype=np.float64) * carrier_hz / SPEED_OF_LIGHT)


@dataclass(frozen=True)
class ShadowRegion:
    """Axis-aligned ground rectangle (meters) adding ``loss_db`` to links received inside it.

    ``gnb_ids=None`` applies the loss to every gNB's link.
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    loss_db: float
    gnb_ids: tuple[int, ...] | None = None

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def applies_to(self, gnb_id: int) -> bool:
        return self.gnb_ids is None or gnb_id in self.gnb_ids


@dataclass
class MapGenConfig:
    """Inputs to the synthetic map generator; defaults follow the 28 GHz urban setup."""

    width_cells: int = 20
    height_cells: int = 20
    cell_size_m: float = 50.0
    uav_altitude_m: float = 150.0
    gnbs: list[GnbSite] = field(default_factory=list)
    carrier_hz: float = 28e9
    bandwidth_hz: float = 400e6
    noise_figure_db: float = 3.0
    shadow_regions: list[ShadowRegion] = field(default_factory=list)
    fading_sigma_db: float = 0.0
    seed: int = 0

    def validate(self):
        if self.width_cells <= 0 or self.height_cells <= 0:
            raise MapValidationError("width_cells and height_cells must be positive")
        if self.width_cells * self.height_cells < 2:
            raise MapValidationError("grid must contain at least two cells")
        if not self.gnbs:
            raise MapValidationError("at least one gNB is required")
        if self.cell_size_m <= 0:
            raise MapValidationError("cell_size_m must be positive")
        if self.carrier_hz <= 0 or self.bandwidth_hz <= 0:
            raise MapValidationError("carrier_hz and bandwidth_hz must be positive")
        if self.fading_sigma_db < 0:
            raise MapValidationError("fading_sigma_db must be non-negative")

    def to_dict(self) -> dict:
        return {
            "width_cells": self.width_cells,
            "height_cells": self.height_cells,
            "cell_size_m": self.cell_size_m,
            "uav_altitude_m": self.uav_altitude_m,
            "gnbs": [vars(g).copy() for g in self.gnbs],
            "carrier_hz": self.carrier_hz,
            "bandwidth_hz": self.bandwidth_hz,
            "noise_figure_db": self.noise_figure_db,
            "shadow_regions": [
                {**vars(r), "gnb_ids": None if r.gnb_ids is None else list(r.gnb_ids)} for r in self.shadow_regions
            ],
            "fading_sigma_db": self.fading_sigma_db,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MapGenConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise MapValidationError(f"unknown map config keys: {sorted(unknown)}")
        gnbs = [GnbSite(**g) for g in data.pop("gnbs", [])]
        regions = []
        for r in data.pop("shadow_regions", []):
            r = dict(r)
            if r.get("gnb_ids") is not None:
                r["gnb_ids"] = tuple(r["gnb_ids"])
            regions.append(ShadowRegion(**r))
        return cls(gnbs=gnbs, shadow_regions=regions, **data)


def generate_synthetic_map(config: MapGenConfig) -> RadioMap:
    """Build a RadioMap from free-space path loss plus regional shadowing.

    Every gNB's per-cell SINR treats all other gNBs as interferers. Values below
    ``SINR_FLOOR_DB`` are clamped to it.
    """
    config.validate()
    w, h = config.width_cells, config.height_cells
    gnbs = sorted(config.gnbs, key=lambda g: g.id)
    noise_dbm = noise_power_dbm(config.bandwidth_hz, config.noise_figure_db)
    rng = substream(config.seed, "map")

    centers_x = (np.arange(w) + 0.5) * config.cell_size_m
    centers_y = (np.arange(h) + 0.5) * config.cell_size_m
    cx_m, cy_m = np.meshgrid(centers_x, centers_y, indexing="ij")

    rx_dbm = np.empty((w, h, len(gnbs)))
    for k, g in enumerate(gnbs):
        dist = np.sqrt((cx_m - g.x) ** 2 + (cy_m - g.y) ** 2 + (config.uav_altitude_m - g.height) ** 2)
        rx_dbm[:, :, k] = g.tx_power_dbm - free_space_path_loss_db(dist, config.carrier_hz)
    for region in config.shadow_regions:
        inside = (cx_m >= region.x_min) & (cx_m <= region.x_max) & (cy_m >= region.y_min) & (cy_m <= region.y_max)
        for k, g in enumerate(gnbs):
            if region.applies_to(g.id):
                rx_dbm[:, :, k][inside] -= region.loss_db
    if config.fading_sigma_db > 0:
        rx_dbm += rng.normal(0.0, config.fading_sigma_db, size=rx_dbm.shape)

    sinr = np.empty_like(rx_dbm)
    n = len(gnbs)
    for cx in range(w):
        for cy in range(h):
            powers = rx_dbm[cx, cy]
            for k in range(n):
                others = [powers[j] for j in range(n) if j != k]
                sinr[cx, cy, k] = compute_sinr_db(powers[k], others, noise_dbm)
    np.maximum(sinr, SINR_FLOOR_DB, out=sinr)
    return RadioMap(w, h, float(config.cell_size_m), float(config.uav_altitude_m), tuple(gnbs), sinr)


def reference_layout_config(seed: int = 0) -> MapGenConfig:
    """20x20 grid of 50 m cells at 150 m, five 25 m gNBs, and a shadowed city centre."""
    gnbs = [
        GnbSite(0, 150.0, 850.0),
        GnbSite(1, 850.0, 850.0),
        GnbSite(2, 500.0, 500.0),
        GnbSite(3, 150.0, 150.0),
        GnbSite(4, 850.0, 150.0),
    ]
    shadow = [ShadowRegion(250.0, 750.0, 250.0, 750.0, 20.0)]
    return MapGenConfig(gnbs=gnbs, shadow_regions=shadow, seed=seed)


def _fmt(value: float) -> str:
    # repr() is the shortest string that round-trips a float exactly
    return repr(float(value))


def save_map(radio_map: RadioMap, path) -> None:
    path = Path(path)
    lines = [MAP_MAGIC, MAP_FIELDS]
    lines.append(
        ",".join(
            [
                str(radio_map.width_cells),
                str(radio_map.height_cells),
                _fmt(radio_map.cell_size_m),
                _fmt(radio_map.uav_altitude_m),
                str(len(radio_map.gnbs)),
            ]
        )
    )
    for g in radio_map.gnbs:
        lines.append(f"gnb,{g.id},{_fmt(g.x)},{_fmt(g.y)},{_fmt(g.height)},{_fmt(g.tx_power_dbm)}")
    for cx in range(radio_map.width_cells):
        for cy in range(radio_map.height_cells):
            for k, g in enumerate(radio_map.gnbs):
                lines.append(f"cell,{cx},{cy},{g.id},{_fmt(radio_map.sinr_db[cx, cy, k])}")
    path.write_text("\n".join(lines) + "\n")


def _parse_float(token: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MapFormatError(f"line {lineno}: expected a number, got {token!r}") from None
    if not math.isfinite(value):
        raise MapFormatError(f"line {lineno}: non-finite value {token!r}")
    return value


def _parse_int(token: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise MapFormatError(f"line {lineno}: expected an integer, got {token!r}") from None


def load_map(path) -> RadioMap:
    """Read a map CSV written by :func:`save_map` (or exported in the same layout)."""
    path = Path(path)
    with path.open() as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0].strip() != MAP_MAGIC:
        raise MapFormatError(f"line 1: expected header {MAP_MAGIC!r}")
    idx = 1
    if idx < len(raw) and raw[idx].strip() == MAP_FIELDS:
        idx += 1
    if idx >= len(raw):
        raise MapFormatError(f"line {idx + 1}: missing grid dimensions row")
    lineno = idx + 1
    dims = raw[idx].strip().split(",")
    if len(dims) != 5:
        raise MapFormatError(f"line {lineno}: expected 5 fields ({MAP_FIELDS}), got {len(dims)}")
    width = _parse_int(dims[0], lineno)
    height = _parse_int(dims[1], lineno)
    cell_size = _parse_float(dims[2], lineno)
    altitude = _parse_float(dims[3], lineno)
    num_gnbs = _parse_int(dims[4], lineno)
    if width <= 0 or height <= 0 or num_gnbs <= 0:
        raise MapValidationError(f"line {lineno}: dimensions and gNB count must be positive")

    gnbs: list[GnbSite] = []
    index_of: dict[int, int] = {}
    sinr = np.full((width, height, num_gnbs), np.nan)
    seen = np.zeros((width, height, num_gnbs), dtype=bool)
    for i in range(idx + 1, len(raw)):
        lineno = i + 1
        line = raw[i].strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        kind = parts[0]
        if kind == "gnb":
            if len(parts) != 6:
                raise MapFormatError(f"line {lineno}: gnb row needs 6 fields, got {len(parts)}")
            gid = _parse_int(parts[1], lineno)
            if gid in index_of:
                raise MapFormatError(f"line {lineno}: duplicate gNB id {gid}")
            if len(gnbs) == num_gnbs:
                raise MapFormatError(f"line {lineno}: more gnb rows than num_gnbs={num_gnbs}")
            index_of[gid] = len(gnbs)
            gnbs.append(
                GnbSite(
                    gid,
                    _parse_float(parts[2], lineno),
                    _parse_float(parts[3], lineno),
                    _parse_float(parts[4], lineno),
                    _parse_float(parts[5], lineno),
                )
            )
        elif kind == "cell":
            if len(parts) != 5:
                raise MapFormatError(f"line {lineno}: cell row needs 5 fields, got {len(parts)}")
            cx, cy, gid = (_parse_int(p, lineno) for p in parts[1:4])
            if not (0 <= cx < width and 0 <= cy < height):
                raise MapFormatError(f"line {lineno}: cell ({cx}, {cy}) outside {width}x{height} grid")
            if gid not in index_of:
                raise MapFormatError(f"line {lineno}: unknown gNB id {gid}")
            k = index_of[gid]
            if seen[cx, cy, k]:
                raise MapFormatError(f"line {lineno}: duplicate row for cell ({cx}, {cy}) gNB {gid}")
            sinr[cx, cy, k] = _parse_float(parts[4], lineno)
            seen[cx, cy, k] = True
        else:
            raise MapFormatError(f"line {lineno}: unknown row type {kind!r}")

    if len(gnbs) != num_gnbs:
        raise MapValidationError(f"header declares {num_gnbs} gNBs but {len(gnbs)} gnb rows found")
    if not seen.all():
        cx, cy, k = (int(v) for v in np.argwhere(~seen)[0])
        raise MapValidationError(f"missing SINR for cell ({cx}, {cy}) gNB {gnbs[k].id}")
    return RadioMap(width, height, cell_size, altitude, tuple(gnbs), sinr)
