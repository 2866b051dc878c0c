"""Matrix embeddings of the 19-cell local map and the hexagonal convolution.

The 5x5 embedding places the two-ring patch column by column (flat-top
hexagons, columns of 3, 4, 5, 4, 3 cells). Even columns are aligned with the
centre column; odd columns sit half a cell lower for the same row index. In
that layout a cell at (r, c) has its hex neighbours at

    even c:  (r-1, c), (r+1, c), (r-1, c+-1), (r, c+-1)
    odd c:   (r-1, c), (r+1, c), (r, c+-1),   (r+1, c+-1)

so a size-1 hexagonal kernel splits into a 3x1 column sub-kernel plus a pair
of 2x1 side sub-kernels whose row alignment depends on column parity. The
convolution below evaluates the sub-kernels as shifted views of the padded
input, picks the parity-appropriate alignment per column, and re-zeroes the
slots that do not hold a real cell.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geom
from .ndtensor import Param, ShapeError, Tensor, _node

N_LOCAL = 19


class EmbeddingContractError(ValueError):
    """Input carries non-zero values in slots that hold no hexagon."""


@dataclass(frozen=True)
class Embedding:
    rows: int
    cols: int
    slot_of: tuple[tuple[int, int], ...]  # local index k-1 -> (row, col)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros((self.rows, self.cols))
        for rc in self.slot_of:
            m[rc] = 1.0
        return m

    @property
    def zero_slots(self) -> list[tuple[int, int]]:
        used = set(self.slot_of)
        return [(r, c) for r in range(self.rows) for c in range(self.cols) if (r, c) not in used]

    @property
    def flat_index(self) -> np.ndarray:
        return np.array([r * self.cols + c for r, c in self.slot_of])

    def embed(self, v) -> np.ndarray:
        """(..., 19) or (..., 19, C) -> (..., rows, cols) or (..., rows, cols, C)."""
        v = np.asarray(v, dtype=np.float64)
        if v.ndim >= 2 and v.shape[-2] == N_LOCAL and v.shape[-1] != N_LOCAL:
            lead, ch = v.shape[:-2], (v.shape[-1],)
            out = np.zeros(lead + (self.rows * self.cols,) + ch)
            out[..., self.flat_index, :] = v
            return out.reshape(lead + (self.rows, self.cols) + ch)
        if v.shape[-1] != N_LOCAL:
            raise ShapeError(f"local map needs {N_LOCAL} entries, got shape {v.shape}")
        lead = v.shape[:-1]
        out = np.zeros(lead + (self.rows * self.cols,))
        out[..., self.flat_index] = v
        return out.reshape(lead + (self.rows, self.cols))

    def extract(self, m) -> np.ndarray:
        """Inverse of :meth:`embed` for channel-last maps (..., rows, cols, C) -> (..., 19, C)."""
        m = np.asarray(m)
        lead = m.shape[:-3]
        flat = m.reshape(lead + (self.rows * self.cols, m.shape[-1]))
        return flat[..., self.flat_index, :]


def _embedding55_from_table(table) -> Embedding:
    slots: list[tuple[int, int] | None] = [None] * N_LOCAL
    for r, line in enumerate(table):
        for c, k in enumerate(line):
            if k:
                slots[k - 1] = (r, c)
    return Embedding(5, 5, tuple(slots))  # type: ignore[arg-type]


def adjacency_consistent(emb: Embedding, table: geom.LocalIndexTable = geom.DEFAULT_LOCAL_INDEX) -> bool:
    """Every axially adjacent pair of local cells is linked by the 5x5 stencil, and nothing else is."""
    for j in range(N_LOCAL):
        for k in range(N_LOCAL):
            if j == k:
                continue
            adjacent = geom.hex_distance(table.order[j], table.order[k]) == 1
            if adjacent != (emb.slot_of[k] in stencil_slots(*emb.slot_of[j]).values()):
                return False
    return True


def stencil_slots(row: int, col: int) -> dict[str, tuple[int, int]]:
    """(row, col) of each neighbour direction of slot (row, col) in the parity layout."""
    if col % 2 == 0:
        up, down = row - 1, row
    else:
        up, down = row, row + 1
    return {
        "C": (row, col),
        "N": (row - 1, col),
        "S": (row + 1, col),
        "NE": (up, col + 1),
        "NW": (up, col - 1),
        "SE": (down, col + 1),
        "SW": (down, col - 1),
    }


def _fallback_embedding55() -> Embedding:
    slots = tuple(geom.axial_offset_to_slot(*off) for off in geom.DEFAULT_LOCAL_INDEX.order)
    return Embedding(5, 5, slots)


PRINTED_EMBEDDING55 = _embedding55_from_table(geom.EMBED55_TABLE)
# The printed layout is used when it passes the adjacency check; otherwise the
# odd-q layout derived from the axial offsets takes over.
EMBEDDING55_IS_PRINTED = adjacency_consistent(PRINTED_EMBEDDING55)
EMBEDDING55 = PRINTED_EMBEDDING55 if EMBEDDING55_IS_PRINTED else _fallback_embedding55()
MASK55 = EMBEDDING55.mask


def _embedding59() -> Embedding:
    # doubled coordinates: row = 2 + dq, col = 4 - (2 dr + dq)
    slots = tuple((2 + dq, 4 - (2 * dr + dq)) for dq, dr in geom.DEFAULT_LOCAL_INDEX.order)
    return Embedding(5, 9, slots)


EMBEDDING59 = _embedding59()


def embed_5x5(v, use_printed: bool = True) -> np.ndarray:
    emb = PRINTED_EMBEDDING55 if use_printed else EMBEDDING55
    return emb.embed(v)


def embed_5x9(v) -> np.ndarray:
    return EMBEDDING59.embed(v)


# ------------------------------------------------------------------ kernel


@dataclass
class HexKernel:
    """Size-1 hexagonal kernel: weights (C_out, C_in, 7) in geom.DIRECTIONS order."""

    weight: Param
    bias: Param

    @classmethod
    def create(cls, c_in: int, c_out: int, rng: np.random.Generator | None = None, name: str = "hex") -> "HexKernel":
        if rng is None:
            w = np.zeros((c_out, c_in, 7))
        else:
            limit = np.sqrt(6.0 / (7 * c_in + 7 * c_out))
            w = rng.uniform(-limit, limit, size=(c_out, c_in, 7))
        return cls(Param(w, name=f"{name}.weight"), Param(np.zeros(c_out), name=f"{name}.bias"))

    @property
    def c_in(self) -> int:
        return self.weight.shape[1]

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]


# ------------------------------------------------------------- convolution

_DIR_INDEX = {d: i for i, d in enumerate(geom.DIRECTIONS)}


def _hex_columns(x: np.ndarray) -> np.ndarray:
    """(B, R, C, Cin) -> (B, R, C, 7, Cin) neighbour values via the sub-kernels."""
    b, rows, cols, cin = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.empty((b, rows, cols, 7, cin))
    # column sub-kernel: rows -1, 0, +1 of the same column
    out[:, :, :, _DIR_INDEX["C"]] = x
    out[:, :, :, _DIR_INDEX["N"]] = xp[:, 0:rows, 1:cols + 1]
    out[:, :, :, _DIR_INDEX["S"]] = xp[:, 2:rows + 2, 1:cols + 1]
    # side sub-kernels, both alignments, selected by column parity
    even = (np.arange(cols) % 2 == 0)[None, None, :, None]
    upper_even, lower_even = xp[:, 0:rows], xp[:, 1:rows + 1]
    upper_odd, lower_odd = xp[:, 1:rows + 1], xp[:, 2:rows + 2]
    out[:, :, :, _DIR_INDEX["NW"]] = np.where(even, upper_even[:, :, 0:cols], upper_odd[:, :, 0:cols])
    out[:, :, :, _DIR_INDEX["SW"]] = np.where(even, lower_even[:, :, 0:cols], lower_odd[:, :, 0:cols])
    out[:, :, :, _DIR_INDEX["NE"]] = np.where(even, upper_even[:, :, 2:cols + 2], upper_odd[:, :, 2:cols + 2])
    out[:, :, :, _DIR_INDEX["SE"]] = np.where(even, lower_even[:, :, 2:cols + 2], lower_odd[:, :, 2:cols + 2])
    return out


def _hex_columns_adjoint(dcols: np.ndarray) -> np.ndarray:
    """Transpose of :func:`_hex_columns`: scatter-add neighbour gradients back to the input."""
    b, rows, cols, _, cin = dcols.shape
    dxp = np.zeros((b, rows + 2, cols + 2, cin))
    dxp[:, 1:rows + 1, 1:cols + 1] += dcols[:, :, :, _DIR_INDEX["C"]]
    dxp[:, 0:rows, 1:cols + 1] += dcols[:, :, :, _DIR_INDEX["N"]]
    dxp[:, 2:rows + 2, 1:cols + 1] += dcols[:, :, :, _DIR_INDEX["S"]]
    even = (np.arange(cols) % 2 == 0)[None, None, :, None]
    for name, dc in (("NW", 0), ("SW", 0), ("NE", 2), ("SE", 2)):
        g = dcols[:, :, :, _DIR_INDEX[name]]
        g_even = np.where(even, g, 0.0)
        g_odd = g - g_even
        upper = name[0] == "N"
        r_even = 0 if upper else 1
        r_odd = 1 if upper else 2
        dxp[:, r_even:r_even + rows, dc:dc + cols] += g_even
        dxp[:, r_odd:r_odd + rows, dc:dc + cols] += g_odd
    return dxp[:, 1:rows + 1, 1:cols + 1]


def hex_conv(x: Tensor, weight: Tensor, bias: Tensor | None = None, mask: np.ndarray | None = None,
             check: bool = True) -> Tensor:
    """Size-1 hexagonal convolution on embedded maps.

    x: (B, R, C, Cin) or (R, C, Cin); weight: (Cout, Cin, 7); bias: (Cout,).
    ``mask`` marks real cells (defaults to the 5x5 two-ring embedding);
    outputs outside the mask are zero.
    """
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.shape[-1] != weight.shape[1] or weight.shape[2] != 7:
        raise ShapeError(f"hex_conv: input {x.shape} vs weight {weight.shape}")
    if mask is None:
        if xd.shape[1:3] != (5, 5):
            raise ShapeError("hex_conv needs an explicit mask for non 5x5 maps")
        mask = MASK55
    m = mask[None, :, :, None]
    if check and np.any(xd * (1.0 - m)):
        raise EmbeddingContractError("hex_conv input is non-zero outside the embedded cells")
    cout, cin = weight.shape[0], weight.shape[1]
    b, rows, cols = xd.shape[:3]
    neigh = _hex_columns(xd).reshape(b, rows, cols, 7 * cin)
    wmat = weight.data.transpose(2, 1, 0).reshape(7 * cin, cout)
    bd = np.zeros(cout) if bias is None else bias.data
    out = (neigh @ wmat + bd) * m

    def back(g):
        gm = g * m
        g2 = gm.reshape(-1, cout)
        dwmat = neigh.reshape(-1, 7 * cin).T @ g2
        dw = dwmat.reshape(7, cin, cout).transpose(2, 1, 0)
        dx = _hex_columns_adjoint((gm @ wmat.T).reshape(b, rows, cols, 7, cin))
        if single:
            dx = dx[0]
        grads = [dx, dw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(out[0] if single else out, parents, back, "hex_conv")


def hex_conv_kernel(x: Tensor, kernel: HexKernel, mask: np.ndarray | None = None) -> Tensor:
    return hex_conv(x, kernel.weight, kernel.bias, mask)


def hex_conv_reference(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                       emb: Embedding = EMBEDDING55,
                       table: geom.LocalIndexTable = geom.DEFAULT_LOCAL_INDEX) -> np.ndarray:
    """Direct axial-space neighbour sum over the 19-cell patch, for one (R, C, Cin) map."""
    cout = weight.shape[0]
    offsets = list(table.order)
    pos = {off: k for k, off in enumerate(offsets)}
    out = np.zeros(x.shape[:2] + (cout,))
    for k, (q, r) in enumerate(offsets):
        acc = bias.astype(float).copy()
        for d, name in enumerate(geom.DIRECTIONS):
            dq, dr = geom.DIRECTION_OFFSETS[name]
            j = pos.get((q + dq, r + dr))
            if j is None:
                continue
            acc += weight[:, :, d] @ x[emb.slot_of[j]]
        out[emb.slot_of[k]] = acc
    return out
