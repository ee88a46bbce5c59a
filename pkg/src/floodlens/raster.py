"""Single-band rasters and flood segmentation.

A raster is a regular lat/lon grid of float values; cell (0, 0) is the
south-west cell and (lat0, lon0) is its centre. Flood masks share their
source raster's geometry with binary values.

Segmentation pipeline: Gaussian-smooth the pre and post images, take
their difference, threshold a strict seed set and a looser mask set, and
grow the seeds inside the mask by morphological geodesic reconstruction
(iterated dilation to fixpoint, equivalently the union of mask connected
components holding at least one seed). Components smaller than min_area
are dropped last.

File format is ESRI-ASCII-grid style plain text: header lines ncols,
nrows, xllcenter, yllcenter, cellsize, then space-separated rows from
north to south.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridGeometry:
    nrows: int
    ncols: int
    lat0: float  # centre of the south-west cell
    lon0: float
    cell_deg: float

    def __post_init__(self) -> None:
        if self.nrows < 1 or self.ncols < 1:
            raise DataError(f"bad grid shape {self.nrows}x{self.ncols}")
        if not self.cell_deg > 0:
            raise DataError(f"cell size must be positive, got {self.cell_deg}")

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return self.lat0 + row * self.cell_deg, self.lon0 + col * self.cell_deg

    def cell_of(self, lat: float, lon: float) -> tuple[int, int] | None:
        """Cell containing the point, None if outside the grid extent."""
        row = math.floor((lat - self.lat0) / self.cell_deg + 0.5)
        col = math.floor((lon - self.lon0) / self.cell_deg + 0.5)
        if 0 <= row < self.nrows and 0 <= col < self.ncols:
            return row, col
        return None

    def nearest_cell(self, lat: float, lon: float) -> tuple[tuple[int, int], bool]:
        """Nearest cell and whether the point had to be clamped to the edge."""
        cell = self.cell_of(lat, lon)
        if cell is not None:
            return cell, False
        row = math.floor((lat - self.lat0) / self.cell_deg + 0.5)
        col = math.floor((lon - self.lon0) / self.cell_deg + 0.5)
        row = min(max(row, 0), self.nrows - 1)
        col = min(max(col, 0), self.ncols - 1)
        return (row, col), True


@dataclass(frozen=True)
class Raster:
    geometry: GridGeometry
    values: np.ndarray  # float64, shape (nrows, ncols); row 0 = south

    def __post_init__(self) -> None:
        if self.values.shape != (self.geometry.nrows, self.geometry.ncols):
            raise DataError(
                f"value grid {self.values.shape} does not match geometry "
                f"{(self.geometry.nrows, self.geometry.ncols)}"
            )


@dataclass(frozen=True)
class FloodMask:
    geometry: GridGeometry
    values: np.ndarray  # uint8 in {0, 1}, same layout as Raster

    def __post_init__(self) -> None:
        if self.values.shape != (self.geometry.nrows, self.geometry.ncols):
            raise DataError("mask grid does not match geometry")

    @property
    def area_cells(self) -> int:
        return int(self.values.sum())


def read_ascii_grid(path: str) -> Raster:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise DataError(f"cannot read grid {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header: dict[str, float] = {}
    data_start = 0
    for i, line in enumerate(lines):
        parts = line.split()
        if len(parts) == 2 and parts[0].lower() in (
            "ncols",
            "nrows",
            "xllcenter",
            "yllcenter",
            "cellsize",
        ):
            header[parts[0].lower()] = float(parts[1])
            data_start = i + 1
        else:
            break
    required = {"ncols", "nrows", "xllcenter", "yllcenter", "cellsize"}
    missing = required - set(header)
    if missing:
        raise DataError(f"{path}: missing header keys {sorted(missing)}")
    nrows, ncols = int(header["nrows"]), int(header["ncols"])
    rows = []
    for line in lines[data_start:]:
        rows.append([float(tok) for tok in line.split()])
    if len(rows) != nrows or any(len(r) != ncols for r in rows):
        raise DataError(f"{path}: data does not match {nrows}x{ncols} header")
    values = np.array(rows[::-1], dtype=np.float64)  # file is north-first
    geometry = GridGeometry(
        nrows, ncols, header["yllcenter"], header["xllcenter"], header["cellsize"]
    )
    return Raster(geometry, values)


def write_ascii_grid(raster: Raster, path: str) -> None:
    g = raster.geometry
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"ncols {g.ncols}\n")
        f.write(f"nrows {g.nrows}\n")
        f.write(f"xllcenter {g.lon0!r}\n")
        f.write(f"yllcenter {g.lat0!r}\n")
        f.write(f"cellsize {g.cell_deg!r}\n")
        for row in raster.values[::-1]:
            f.write(" ".join(repr(float(v)) for v in row))
            f.write("\n")


def read_mask(path: str) -> FloodMask:
    raster = read_ascii_grid(path)
    values = raster.values
    if not np.isin(values, (0.0, 1.0)).all():
        raise DataError(f"{path}: mask values must be 0 or 1")
    return FloodMask(raster.geometry, values.astype(np.uint8))


def write_mask(mask: FloodMask, path: str) -> None:
    g = mask.geometry
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"ncols {g.ncols}\n")
        f.write(f"nrows {g.nrows}\n")
        f.write(f"xllcenter {g.lon0!r}\n")
        f.write(f"yllcenter {g.lat0!r}\n")
        f.write(f"cellsize {g.cell_deg!r}\n")
        for row in mask.values[::-1]:
            f.write(" ".join(str(int(v)) for v in row))
            f.write("\n")


# ---------------------------------------------------------------------------
# Operations


def gaussian_smooth(raster: Raster, sigma_px: float) -> Raster:
    """Separable Gaussian blur; kernel truncated at ceil(3*sigma) and
    renormalised to sum 1; edges replicate (clamp-to-edge)."""
    if not sigma_px > 0:
        raise ValueError(f"sigma_px must be positive, got {sigma_px}")
    if not np.isfinite(raster.values).all():
        raise DataError("non-finite raster values")
    radius = math.ceil(3.0 * sigma_px)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma_px * sigma_px))
    kernel /= kernel.sum()
    out = raster.values
    for axis in (0, 1):
        padded = np.pad(out, [(radius, radius) if ax == axis else (0, 0) for ax in (0, 1)], mode="edge")
        windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * radius + 1, axis=axis)
        out = np.tensordot(windows, kernel, axes=([2], [0]))
    return Raster(raster.geometry, out)


def difference(post: Raster, pre: Raster) -> Raster:
    """Cellwise post - pre; grids must share geometry exactly."""
    if post.geometry != pre.geometry:
        raise DataError("difference: raster geometries differ")
    return Raster(post.geometry, post.values - pre.values)


_NEIGHBORS = {
    4: ((-1, 0), (1, 0), (0, -1), (0, 1)),
    8: ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)),
}


def geodesic_reconstruct(seeds: FloodMask, mask: FloodMask, connectivity: int = 8) -> FloodMask:
    """Grow the seed set inside the mask until fixpoint.

    Iterated dilation by the connectivity structuring element intersected
    with the mask; the result is the union of mask components containing
    at least one seed. Seeds outside the mask are dropped with a warning.
    """
    if seeds.geometry != mask.geometry:
        raise DataError("geodesic_reconstruct: seed/mask geometries differ")
    if connectivity not in _NEIGHBORS:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    seed = seeds.values.astype(bool)
    allowed = mask.values.astype(bool)
    stray = int((seed & ~allowed).sum())
    if stray:
        log.warning("geodesic_reconstruct: dropping %d seed cells outside the mask", stray)
    current = seed & allowed
    while True:
        grown = current.copy()
        for dr, dc in _NEIGHBORS[connectivity]:
            grown |= _shift(current, dr, dc)
        grown &= allowed
        if (grown == current).all():
            break
        current = grown
    return FloodMask(mask.geometry, current.astype(np.uint8))


def _shift(arr: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """Shift a 2-D boolean array by (dr, dc), zero-filling the edge."""
    out = np.zeros_like(arr)
    nrows, ncols = arr.shape
    src_r = slice(max(0, -dr), nrows - max(0, dr))
    src_c = slice(max(0, -dc), ncols - max(0, dc))
    dst_r = slice(max(0, dr), nrows - max(0, -dr))
    dst_c = slice(max(0, dc), ncols - max(0, -dc))
    out[dst_r, dst_c] = arr[src_r, src_c]
    return out


def label_components(mask: FloodMask, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """BFS connected-component labelling; labels from 1, background 0."""
    if connectivity not in _NEIGHBORS:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    values = mask.values
    labels = np.zeros(values.shape, dtype=np.int32)
    nbrs = _NEIGHBORS[connectivity]
    nrows, ncols = values.shape
    next_label = 0
    for r0 in range(nrows):
        for c0 in range(ncols):
            if values[r0, c0] and not labels[r0, c0]:
                next_label += 1
                labels[r0, c0] = next_label
                queue = deque([(r0, c0)])
                while queue:
                    r, c = queue.popleft()
                    for dr, dc in nbrs:
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < nrows and 0 <= cc < ncols:
                            if values[rr, cc] and not labels[rr, cc]:
                                labels[rr, cc] = next_label
                                queue.append((rr, cc))
    return labels, next_label


def remove_small_components(mask: FloodMask, min_area: int, connectivity: int = 8) -> FloodMask:
    if min_area <= 1:
        return mask
    labels, n = label_components(mask, connectivity)
    if n == 0:
        return mask
    areas = np.bincount(labels.ravel())
    keep = np.zeros(n + 1, dtype=bool)
    keep[1:] = areas[1:] >= min_area
    return FloodMask(mask.geometry, keep[labels].astype(np.uint8))


@dataclass(frozen=True)
class SegmentationParams:
    sigma_px: float = 1.0
    t_seed: float = 0.5
    t_mask: float = 0.2
    connectivity: int = 8
    min_area: int = 4

    def __post_init__(self) -> None:
        if not self.t_mask < self.t_seed:
            raise DataError(
                f"t_mask ({self.t_mask}) must be below t_seed ({self.t_seed})"
            )
        if self.min_area < 0:
            raise DataError("min_area must be >= 0")
        if self.connectivity not in _NEIGHBORS:
            raise DataError(f"connectivity must be 4 or 8, got {self.connectivity}")


def segment_flood(pre: Raster, post: Raster, params: SegmentationParams) -> FloodMask:
    """Changed-area segmentation from pre/post water-index rasters."""
    smooth_pre = gaussian_smooth(pre, params.sigma_px)
    smooth_post = gaussian_smooth(post, params.sigma_px)
    diff = difference(smooth_post, smooth_pre)
    seeds = FloodMask(diff.geometry, (diff.values >= params.t_seed).astype(np.uint8))
    mask = FloodMask(diff.geometry, (diff.values >= params.t_mask).astype(np.uint8))
    grown = geodesic_reconstruct(seeds, mask, params.connectivity)
    return remove_small_components(grown, params.min_area, params.connectivity)
