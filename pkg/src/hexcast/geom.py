"""Planar projection, hexagonal/square tessellation and local hexagon indexing.

Hexagons are flat-top. Axial coordinates ``(q, r)`` follow the convention

    x = 1.5 * a * q
    y = sqrt(3) * a * (r + q / 2)

with ``y`` pointing north, so ``(0, +1)`` is the northern neighbour and
``(+1, 0)`` the north-eastern one. When a rectangular layout is needed the
grid uses odd-q offset coordinates: odd columns sit half a cell further north
than even columns with the same row index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEG_LAT = 2.0 * math.pi * EARTH_RADIUS_M / 360.0
SQRT3 = math.sqrt(3.0)

# order of hex_neighbors(); NE, SW, N, S, SE, NW
NEIGHBOR_OFFSETS: tuple[tuple[int, int], ...] = (
    (1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1),
)

# kernel tap order used by the hexagonal convolution
DIRECTIONS: tuple[str, ...] = ("C", "N", "S", "NE", "NW", "SE", "SW")
DIRECTION_OFFSETS: dict[str, tuple[int, int]] = {
    "C": (0, 0),
    "N": (0, 1),
    "S": (0, -1),
    "NE": (1, 0),
    "NW": (-1, 1),
    "SE": (1, -1),
    "SW": (-1, 0),
}


class GeometryError(ValueError):
    """Invalid geometric input (non-finite coordinates, bad sizes)."""


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise GeometryError(f"non-finite coordinate {self.lon}, {self.lat}")
        if not (-180.0 <= self.lon <= 180.0 and -90.0 <= self.lat <= 90.0):
            raise GeometryError(f"coordinate out of range: {self.lon}, {self.lat}")


@dataclass(frozen=True)
class BBox:
    """Longitude/latitude rectangle."""

    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self):
        if not (self.max_lon > self.min_lon and self.max_lat > self.min_lat):
            raise GeometryError(f"empty bounding box {self}")

    @property
    def center(self) -> GeoPoint:
        return GeoPoint(0.5 * (self.min_lon + self.max_lon), 0.5 * (self.min_lat + self.max_lat))

    def contains(self, lon, lat):
        lon = np.asarray(lon)
        lat = np.asarray(lat)
        return (lon >= self.min_lon) & (lon <= self.max_lon) & (lat >= self.min_lat) & (lat <= self.max_lat)


@dataclass(frozen=True)
class Projection:
    """Local equirectangular projection around a reference point."""

    ref_lon: float
    ref_lat: float

    @property
    def meters_per_deg_lat(self) -> float:
        return METERS_PER_DEG_LAT

    @property
    def meters_per_deg_lon(self) -> float:
        return METERS_PER_DEG_LAT * math.cos(math.radians(self.ref_lat))

    @classmethod
    def for_bbox(cls, bbox: BBox) -> "Projection":
        c = bbox.center
        return cls(ref_lon=c.lon, ref_lat=c.lat)

    def inverse(self, x, y):
        """Planar meters back to (lon, lat)."""
        return (
            np.asarray(x) / self.meters_per_deg_lon + self.ref_lon,
            np.asarray(y) / self.meters_per_deg_lat + self.ref_lat,
        )


def project(lon, lat, proj: Projection):
    """Project lon/lat (scalars or arrays) to planar meters.

    Raises GeometryError if any input is not finite.
    """
    lon_a = np.asarray(lon, dtype=float)
    lat_a = np.asarray(lat, dtype=float)
    if not (np.all(np.isfinite(lon_a)) and np.all(np.isfinite(lat_a))):
        raise GeometryError("non-finite coordinate passed to project()")
    x = (lon_a - proj.ref_lon) * proj.meters_per_deg_lon
    y = (lat_a - proj.ref_lat) * proj.meters_per_deg_lat
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def project_point(p: GeoPoint, proj: Projection) -> tuple[float, float]:
    return project(p.lon, p.lat, proj)


# ---------------------------------------------------------------- hex grid


@dataclass(frozen=True)
class AxialCoord:
    q: int
    r: int

    def __add__(self, other):
        return AxialCoord(self.q + other[0], self.r + other[1])

    def __iter__(self):
        yield self.q
        yield self.r

    def __getitem__(self, i):
        return (self.q, self.r)[i]


def hex_distance(a, b) -> int:
    dq = a[0] - b[0]
    dr = a[1] - b[1]
    return (abs(dq) + abs(dr) + abs(dq + dr)) // 2


def hex_neighbors(c) -> list[AxialCoord]:
    """The six neighbours of ``c`` in NEIGHBOR_OFFSETS order."""
    q, r = c[0], c[1]
    return [AxialCoord(q + dq, r + dr) for dq, dr in NEIGHBOR_OFFSETS]


def axial_to_offset(q, r):
    """Axial -> odd-q offset (col, row). Works on ints or int arrays."""
    col = q
    row = r + (q - (q & 1)) // 2
    return col, row


def offset_to_axial(col, row):
    q = col
    r = row - (col - (col & 1)) // 2
    return q, r


@dataclass(frozen=True)
class HexGridSpec:
    """Flat-top hexagonal grid; cell (col=0, row=0) is centred on ``origin``."""

    side_m: float
    origin: tuple[float, float] = (0.0, 0.0)
    n_cols: int = 1
    n_rows: int = 1

    def __post_init__(self):
        if not self.side_m > 0:
            raise GeometryError(f"hex side must be positive, got {self.side_m}")

    shape = "hex"

    @property
    def cell_area(self) -> float:
        return 1.5 * SQRT3 * self.side_m ** 2

    @property
    def n_cells(self) -> int:
        return self.n_cols * self.n_rows

    def center(self, c) -> tuple[float, float]:
        q, r = c[0], c[1]
        a = self.side_m
        return (self.origin[0] + 1.5 * a * q, self.origin[1] + SQRT3 * a * (r + q / 2.0))

    def polygon(self, c) -> list[tuple[float, float]]:
        cx, cy = self.center(c)
        a = self.side_m
        return [(cx + a * math.cos(math.radians(60 * k)), cy + a * math.sin(math.radians(60 * k)))
                for k in range(6)]

    def in_extent(self, q, r):
        col, row = axial_to_offset(np.asarray(q), np.asarray(r))
        return (col >= 0) & (col < self.n_cols) & (row >= 0) & (row < self.n_rows)

    def cell_index(self, q, r):
        """Linear cell id (col-major over offset coords); -1 outside the extent."""
        q = np.asarray(q)
        r = np.asarray(r)
        col, row = axial_to_offset(q, r)
        ok = (col >= 0) & (col < self.n_cols) & (row >= 0) & (row < self.n_rows)
        return np.where(ok, col * self.n_rows + row, -1)

    def cell_coords(self) -> np.ndarray:
        """Axial (q, r) of every cell, ordered by linear cell id."""
        ids = np.arange(self.n_cells)
        col, row = ids // self.n_rows, ids % self.n_rows
        q, r = offset_to_axial(col, row)
        return np.stack([q, r], axis=1)

    def extent_dict(self) -> dict:
        return {"n_cols": self.n_cols, "n_rows": self.n_rows}


def hex_of_many(x, y, spec: HexGridSpec):
    """Vectorised point -> axial cell lookup; returns integer arrays (q, r).

    The returned cell is the one with the nearest centre; exact ties go to the
    lexicographically smallest (q, r).
    """
    x = np.asarray(x, dtype=float) - spec.origin[0]
    y = np.asarray(y, dtype=float) - spec.origin[1]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise GeometryError("non-finite point passed to hex_of")
    a = spec.side_m
    qf = (2.0 / 3.0) * x / a
    rf = y / (SQRT3 * a) - x / (3.0 * a)
    # cube rounding
    sf = -qf - rf
    q = np.rint(qf)
    r = np.rint(rf)
    s = np.rint(sf)
    dq, dr, ds = np.abs(q - qf), np.abs(r - rf), np.abs(s - sf)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    q = np.where(fix_q, -r - s, q)
    r = np.where(fix_r, -q - s, r)
    q = q.astype(np.int64)
    r = r.astype(np.int64)

    # resolve boundary cases against the 6 neighbours with the (d2, q, r) rule
    best_q, best_r = q.copy(), r.copy()
    best_d = (x - 1.5 * a * q) ** 2 + (y - SQRT3 * a * (r + q / 2.0)) ** 2
    for oq, orr in NEIGHBOR_OFFSETS:
        cq, cr = q + oq, r + orr
        d = (x - 1.5 * a * cq) ** 2 + (y - SQRT3 * a * (cr + cq / 2.0)) ** 2
        better = (d < best_d) | ((d == best_d) & ((cq < best_q) | ((cq == best_q) & (cr < best_r))))
        best_q = np.where(better, cq, best_q)
        best_r = np.where(better, cr, best_r)
        best_d = np.where(better, d, best_d)
    return best_q, best_r


def hex_of(point, spec: HexGridSpec) -> AxialCoord:
    q, r = hex_of_many(np.array([point[0]]), np.array([point[1]]), spec)
    return AxialCoord(int(q[0]), int(r[0]))


def point_in_hexagon(point, spec: HexGridSpec, c, tol: float = 1e-9) -> bool:
    """Half-plane test against the flat-top hexagon of cell ``c`` (boundary counts)."""
    cx, cy = spec.center(c)
    px, py = abs(point[0] - cx), abs(point[1] - cy)
    a = spec.side_m
    h = SQRT3 * a / 2.0
    return py <= h + tol and SQRT3 * px + py <= SQRT3 * a + tol


def hex_grid_for_bbox(bbox: BBox, side_m: float, proj: Projection | None = None) -> HexGridSpec:
    """Smallest odd-q rectangle of hexagons covering the projected bbox."""
    proj = proj or Projection.for_bbox(bbox)
    x0, y0 = project(bbox.min_lon, bbox.min_lat, proj)
    x1, y1 = project(bbox.max_lon, bbox.max_lat, proj)
    a = side_m
    # origin one cell south-west of the corner so every bbox point has col, row >= 0
    origin = (x0 - a, y0 - SQRT3 * a)
    n_cols = int(math.floor((x1 - origin[0] + a) / (1.5 * a))) + 1
    n_rows = int(math.floor((y1 - origin[1]) / (SQRT3 * a))) + 2
    return HexGridSpec(side_m=a, origin=origin, n_cols=n_cols, n_rows=n_rows)


# ------------------------------------------------------------- square grid


@dataclass(frozen=True)
class SquareGridSpec:
    side_m: float
    origin: tuple[float, float] = (0.0, 0.0)
    n_cols: int = 1
    n_rows: int = 1

    shape = "square"

    def __post_init__(self):
        if not self.side_m > 0:
            raise GeometryError(f"square side must be positive, got {self.side_m}")

    @property
    def cell_area(self) -> float:
        return self.side_m ** 2

    @property
    def n_cells(self) -> int:
        return self.n_cols * self.n_rows

    def cell_index(self, row, col):
        row = np.asarray(row)
        col = np.asarray(col)
        ok = (col >= 0) & (col < self.n_cols) & (row >= 0) & (row < self.n_rows)
        return np.where(ok, col * self.n_rows + row, -1)

    def cell_coords(self) -> np.ndarray:
        """(col, row) of every cell, ordered by linear cell id."""
        ids = np.arange(self.n_cells)
        return np.stack([ids // self.n_rows, ids % self.n_rows], axis=1)

    def extent_dict(self) -> dict:
        return {"n_cols": self.n_cols, "n_rows": self.n_rows}


def square_of_many(x, y, spec: SquareGridSpec):
    """Floor binning; points on a boundary go to the higher-index cell."""
    x = np.asarray(x, dtype=float) - spec.origin[0]
    y = np.asarray(y, dtype=float) - spec.origin[1]
    row = np.floor(y / spec.side_m).astype(np.int64)
    col = np.floor(x / spec.side_m).astype(np.int64)
    return row, col


def square_of(point, spec: SquareGridSpec) -> tuple[int, int]:
    row, col = square_of_many(np.array([point[0]]), np.array([point[1]]), spec)
    return int(row[0]), int(col[0])


def square_grid_for_bbox(bbox: BBox, side_m: float, proj: Projection | None = None) -> SquareGridSpec:
    proj = proj or Projection.for_bbox(bbox)
    x0, y0 = project(bbox.min_lon, bbox.min_lat, proj)
    x1, y1 = project(bbox.max_lon, bbox.max_lat, proj)
    n_cols = int(math.floor((x1 - x0) / side_m)) + 1
    n_rows = int(math.floor((y1 - y0) / side_m)) + 1
    return SquareGridSpec(side_m=side_m, origin=(x0, y0), n_cols=n_cols, n_rows=n_rows)


def area_pairing(hex_side_m: float) -> float:
    """Side of the square whose area equals a hexagon with side ``hex_side_m``."""
    if not hex_side_m > 0:
        raise GeometryError(f"hex side must be positive, got {hex_side_m}")
    return hex_side_m * math.sqrt(1.5 * SQRT3)


# ------------------------------------------------------- local two-ring map


# Local index k (1-based) -> (row, col) in the 5x5 matrix, as printed in the
# two-ring layout: row0 = (0, 9, 10, 11, 0), row1 = (8, 2, 3, 4, 12),
# row2 = (19, 7, 1, 5, 13), row3 = (18, 17, 6, 15, 14), row4 = (0, 0, 16, 0, 0).
EMBED55_TABLE: tuple[tuple[int, ...], ...] = (
    (0, 9, 10, 11, 0),
    (8, 2, 3, 4, 12),
    (19, 7, 1, 5, 13),
    (18, 17, 6, 15, 14),
    (0, 0, 16, 0, 0),
)


def slot_to_axial_offset(row: int, col: int) -> tuple[int, int]:
    """Axial offset of a 5x5 embedding slot relative to the centre slot (2, 2)."""
    dq = col - 2
    if dq % 2 == 0:
        dr = 2 - row - dq // 2
    else:
        # odd columns: row = 1.5 - dr - dq/2
        dr = (3 - 2 * row - dq) // 2
    return dq, dr


def axial_offset_to_slot(dq: int, dr: int) -> tuple[int, int]:
    col = 2 + dq
    if dq % 2 == 0:
        row = 2 - dr - dq // 2
    else:
        row = (3 - 2 * dr - dq) // 2
    return row, col


@dataclass(frozen=True)
class LocalIndexTable:
    """Axial offsets for local indices 1..19 (stored 0-based in ``order``)."""

    order: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.order) != 19 or len(set(self.order)) != 19:
            raise GeometryError("local index table needs 19 distinct offsets")

    @classmethod
    def default(cls) -> "LocalIndexTable":
        offsets: list[tuple[int, int] | None] = [None] * 19
        for row, line in enumerate(EMBED55_TABLE):
            for col, k in enumerate(line):
                if k:
                    offsets[k - 1] = slot_to_axial_offset(row, col)
        return cls(order=tuple(offsets))  # type: ignore[arg-type]

    def __getitem__(self, k: int) -> tuple[int, int]:
        """1-based access."""
        return self.order[k - 1]


DEFAULT_LOCAL_INDEX = LocalIndexTable.default()


def two_ring_index(center, table: LocalIndexTable = DEFAULT_LOCAL_INDEX) -> list[AxialCoord]:
    q, r = center[0], center[1]
    return [AxialCoord(q + dq, r + dr) for dq, dr in table.order]


def square_local_offsets() -> list[tuple[int, int]]:
    """(d_row, d_col) for the 5x5 square neighbourhood, matrix row-major, north on top."""
    return [(2 - i, j - 2) for i in range(5) for j in range(5)]
