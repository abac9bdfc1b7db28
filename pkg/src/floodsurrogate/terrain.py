"""Raster terrain: elevation, Manning roughness and derived slope fields.

Grid convention used across the package: axis 0 (rows, index ``i``) runs
north to south, axis 1 (cols, index ``j``) runs west to east. ``slope_x``
is the elevation derivative along axis 1, ``slope_y`` along axis 0, and
``slope_xy`` along the (+row, +col) diagonal with spacing
``cell_size * sqrt(2)``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import container
from .errors import DimensionError
from .validation import as_float_array, check_grid, check_positive

#: Default Manning roughness classes: paved surface, short grass, dense
#: vegetation.
DEFAULT_MANNING_CLASSES = (0.015, 0.05, 0.12)


@dataclass(frozen=True)
class TerrainGrid:
    """Immutable raster terrain with precomputed slope fields."""

    rows: int
    cols: int
    cell_size: float
    elevation: np.ndarray
    manning_n: np.ndarray
    slope_x: np.ndarray = field(repr=False, default=None)
    slope_y: np.ndarray = field(repr=False, default=None)
    slope_xy: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DimensionError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        check_positive(self.cell_size, "cell_size")
        elev = check_grid(self.elevation, self.rows, self.cols, "elevation")
        manning = check_grid(self.manning_n, self.rows, self.cols, "manning_n")
        if not np.all(np.isfinite(elev)):
            raise ValueError("elevation must be finite everywhere")
        if not np.all(manning > 0):
            raise ValueError("manning_n must be > 0 everywhere")
        sx, sy, sxy = compute_slopes(elev, self.cell_size)
        object.__setattr__(self, "elevation", _frozen(elev))
        object.__setattr__(self, "manning_n", _frozen(manning))
        object.__setattr__(self, "slope_x", _frozen(sx))
        object.__setattr__(self, "slope_y", _frozen(sy))
        object.__setattr__(self, "slope_xy", _frozen(sxy))

    @property
    def n_cells(self):
        return self.rows * self.cols

    @property
    def cell_area(self):
        return self.cell_size * self.cell_size

    def cell_index(self, i, j):
        """Flat row-major index of cell (i, j)."""
        self._check_index(i, j)
        return i * self.cols + j

    def _check_index(self, i, j):
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(f"cell ({i}, {j}) outside {self.rows}x{self.cols} grid")


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def compute_slopes(elevation, cell_size):
    """Central-difference slope fields, one-sided at borders.

    Returns ``(slope_x, slope_y, slope_xy)``. Dimensions of size 1 get a
    zero slope along that axis (there is nothing to difference).
    """
    z = as_float_array(elevation, "elevation")
    if z.ndim != 2:
        raise DimensionError(f"elevation must be 2-D, got shape {z.shape}")
    check_positive(cell_size, "cell_size")
    sx = _gradient_1d(z, axis=1, spacing=cell_size)
    sy = _gradient_1d(z, axis=0, spacing=cell_size)
    sxy = _diagonal_gradient(z, spacing=cell_size * np.sqrt(2.0))
    return sx, sy, sxy


def _gradient_1d(z, axis, spacing):
    n = z.shape[axis]
    out = np.zeros_like(z)
    if n < 2:
        return out
    zm = np.moveaxis(z, axis, 0)
    om = np.moveaxis(out, axis, 0)
    om[1:-1] = (zm[2:] - zm[:-2]) / (2.0 * spacing)
    om[0] = (zm[1] - zm[0]) / spacing
    om[-1] = (zm[-1] - zm[-2]) / spacing
    return out


def _diagonal_gradient(z, spacing):
    """Derivative along the (+row, +col) diagonal.

    Central where both diagonal neighbours exist, one-sided on the border
    band, zero for grids too small to difference diagonally.
    """
    rows, cols = z.shape
    out = np.zeros_like(z)
    if rows < 2 or cols < 2:
        return out
    padded = np.pad(z, 1, mode="edge")
    fwd = padded[2:, 2:]
    bwd = padded[:-2, :-2]
    has_fwd = np.zeros_like(z, dtype=bool)
    has_bwd = np.zeros_like(z, dtype=bool)
    has_fwd[:-1, :-1] = True
    has_bwd[1:, 1:] = True
    central = has_fwd & has_bwd
    out[central] = (fwd[central] - bwd[central]) / (2.0 * spacing)
    only_fwd = has_fwd & ~has_bwd
    out[only_fwd] = (fwd[only_fwd] - z[only_fwd]) / spacing
    only_bwd = has_bwd & ~has_fwd
    out[only_bwd] = (z[only_bwd] - bwd[only_bwd]) / spacing
    return out


def generate_synthetic_terrain(rows, cols, cell_size, relief_amplitude, roughness_classes, seed):
    """Seeded low-relief surface with patchy Manning roughness.

    The surface is a sum of smooth Gaussian bumps rescaled so the elevation
    range equals ``relief_amplitude`` (flat when the amplitude is zero).
    Roughness classes are assigned over Voronoi patches around seeded
    centres, drawing values from :data:`DEFAULT_MANNING_CLASSES` (cycled if
    more classes are requested).
    """
    if rows < 3 or cols < 3:
        raise DimensionError(f"synthetic terrain needs at least 3x3 cells, got {rows}x{cols}")
    check_positive(relief_amplitude, "relief_amplitude", strict=False)
    if roughness_classes < 1:
        raise DimensionError(f"roughness_classes must be >= 1, got {roughness_classes}")
    rng = np.random.default_rng(seed)

    yy, xx = np.meshgrid(np.arange(rows, dtype=np.float64), np.arange(cols, dtype=np.float64), indexing="ij")
    z = np.zeros((rows, cols))
    n_bumps = 8
    for _ in range(n_bumps):
        cy = rng.uniform(0, rows - 1)
        cx = rng.uniform(0, cols - 1)
        sigma = rng.uniform(0.12, 0.35) * max(rows, cols)
        height = rng.uniform(-1.0, 1.0)
        z += height * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
    span = z.max() - z.min()
    if relief_amplitude > 0 and span > 0:
        z = (z - z.min()) * (relief_amplitude / span)
    else:
        z = np.zeros((rows, cols))

    class_values = [
        DEFAULT_MANNING_CLASSES[k % len(DEFAULT_MANNING_CLASSES)] for k in range(roughness_classes)
    ]
    n_centres = max(roughness_classes, 4 * roughness_classes)
    cy = rng.uniform(0, rows - 1, size=n_centres)
    cx = rng.uniform(0, cols - 1, size=n_centres)
    labels = np.array([k % roughness_classes for k in range(n_centres)])
    d2 = (yy[..., None] - cy) ** 2 + (xx[..., None] - cx) ** 2
    nearest = np.argmin(d2, axis=-1)
    manning = np.array(class_values, dtype=np.float64)[labels[nearest]]

    return TerrainGrid(rows=rows, cols=cols, cell_size=float(cell_size), elevation=z, manning_n=manning)


_PATCH_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)]


def neighborhood(grid, i, j):
    """3x3 patches (row-major, 9 values each) around cell (i, j).

    Edge cells replicate the nearest valid cell. Returns a dict with keys
    ``elevation``, ``manning_n``, ``slope_x``, ``slope_y``, ``slope_xy``.
    """
    grid._check_index(i, j)
    fields = {
        "elevation": grid.elevation,
        "manning_n": grid.manning_n,
        "slope_x": grid.slope_x,
        "slope_y": grid.slope_y,
        "slope_xy": grid.slope_xy,
    }
    out = {}
    for name, arr in fields.items():
        patch = np.empty(9)
        for k, (di, dj) in enumerate(_PATCH_OFFSETS):
            ii = min(max(i + di, 0), grid.rows - 1)
            jj = min(max(j + dj, 0), grid.cols - 1)
            patch[k] = arr[ii, jj]
        out[name] = patch
    return out


def neighborhood_planes(grid):
    """Vectorized 3x3 patches for every cell.

    Returns a dict of ``(n_cells, 9)`` arrays in the same field and
    patch-element order as :func:`neighborhood`, with cells flattened
    row-major.
    """
    fields = {
        "elevation": grid.elevation,
        "manning_n": grid.manning_n,
        "slope_x": grid.slope_x,
        "slope_y": grid.slope_y,
        "slope_xy": grid.slope_xy,
    }
    out = {}
    for name, arr in fields.items():
        padded = np.pad(arr, 1, mode="edge")
        cols = [padded[1 + di : 1 + di + grid.rows, 1 + dj : 1 + dj + grid.cols].reshape(-1) for di, dj in _PATCH_OFFSETS]
        out[name] = np.stack(cols, axis=1)
    return out


def save_terrain(path, grid):
    manifest = {
        "kind": "terrain",
        "rows": grid.rows,
        "cols": grid.cols,
        "cell_size": repr(grid.cell_size),
    }
    # Slopes are recomputed from the float32 elevation a reader will see, so
    # save -> load -> save round-trips byte-identically.
    z32 = grid.elevation.astype("<f4")
    sx, sy, sxy = compute_slopes(z32.astype(np.float64), grid.cell_size)
    arrays = {
        "elevation": z32,
        "manning_n": grid.manning_n.astype("<f4"),
        "slope_x": sx.astype("<f4"),
        "slope_y": sy.astype("<f4"),
        "slope_xy": sxy.astype("<f4"),
    }
    container.write_container(path, manifest, arrays)


def load_terrain(path):
    manifest, arrays = container.read_container(path)
    if manifest.get("kind") != "terrain":
        raise ValueError(f"{path} is not a terrain container (kind={manifest.get('kind')!r})")
    rows = int(manifest["rows"])
    cols = int(manifest["cols"])
    return TerrainGrid(
        rows=rows,
        cols=cols,
        cell_size=float(manifest["cell_size"]),
        elevation=arrays["elevation"].astype(np.float64),
        manning_n=arrays["manning_n"].astype(np.float64),
    )


def terrain_from_text(path_or_lines, cell_size=1.0, manning=0.05):
    """Plain-text elevation import: one row per line, space-separated.

    Manning roughness is constant (``manning``); slopes are derived.
    """
    if isinstance(path_or_lines, (str, bytes)) or hasattr(path_or_lines, "read"):
        if hasattr(path_or_lines, "read"):
            text = path_or_lines.read()
        else:
            with open(path_or_lines, "r", encoding="utf-8") as fh:
                text = fh.read()
        lines = [line for line in text.splitlines() if line.strip()]
    else:
        lines = [line for line in path_or_lines if line.strip()]
    rows = [np.array(line.split(), dtype=np.float64) for line in lines]
    if not rows:
        raise DimensionError("empty grid text")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DimensionError(f"ragged grid text, row widths {sorted(widths)}")
    z = np.stack(rows)
    n = np.full(z.shape, float(manning))
    return TerrainGrid(rows=z.shape[0], cols=z.shape[1], cell_size=float(cell_size), elevation=z, manning_n=n)
