"""Relative homology of sublevel sets sampled on rectilinear grids.

A :class:`CubicalField` holds samples of a scalar function at the vertices of
a (possibly non-uniform) rectilinear grid.  The closed cubical complex
``{f <= b}`` consists of the cells all of whose vertices satisfy ``f <= b``.
The relative chain complex of ``({f <= b}, {f <= a})`` is reduced by exact
elementary collapses and coreductions (compiled with numba), and the small
remainder is finished by :class:`gfcalc.homalg.SparseComplex`.

Cells are addressed in the doubled-index grid: a cell is a multi-index ``c``
with ``0 <= c_k <= 2 (n_k - 1)``; axis ``k`` is spanned by the cell iff
``c_k`` is odd.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .errors import BoxNotCertified, InputError, ThresholdTooClose
from .homalg import GradedAbGroup, SparseComplex


@dataclass
class CubicalField:
    """Vertex samples ``values`` on the grid ``axes[0] x ... x axes[d-1]``.

    ``certified`` records that the caller checked the box is large enough for
    the sublevel pair on the box to compute the pair on the whole space.
    """

    axes: Sequence[np.ndarray]
    values: np.ndarray
    certified: bool = True

    def __post_init__(self):
        self.axes = [np.asarray(a, dtype=float) for a in self.axes]
        self.values = np.asarray(self.values, dtype=float)
        shape = tuple(len(a) for a in self.axes)
        if self.values.shape != shape:
            raise InputError(f"values shape {self.values.shape} does not match grid {shape}")
        for a in self.axes:
            if len(a) < 2 or np.any(np.diff(a) <= 0):
                raise InputError("grid axes need at least two strictly increasing points")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @classmethod
    def sample(cls, func, axes: Sequence[np.ndarray], certified: bool = True) -> "CubicalField":
        """Evaluate a vectorized ``func(*coords)`` on the grid."""
        mesh = np.meshgrid(*[np.asarray(a, float) for a in axes], indexing="ij")
        return cls(axes, np.asarray(func(*mesh), dtype=float), certified)

    def to_csv(self) -> str:
        """CSV with one row per vertex: coordinates then value."""
        names = [f"x{k}" for k in range(self.ndim)] + ["value"]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        cols = [m.reshape(-1) for m in mesh] + [self.values.reshape(-1)]
        lines = [",".join(names)]
        for row in zip(*cols):
            lines.append(",".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"


def cell_maxima(values: np.ndarray) -> np.ndarray:
    """Maximum vertex value of every cell, on the doubled-index grid."""
    shape = tuple(2 * s - 1 for s in values.shape)
    out = np.empty(shape, dtype=values.dtype)
    out[tuple(slice(0, None, 2) for _ in shape)] = values
    for k in range(values.ndim):
        lo = [slice(None)] * values.ndim
        hi = [slice(None)] * values.ndim
        mid = [slice(None)] * values.ndim
        lo[k] = slice(0, -1, 2)
        hi[k] = slice(2, None, 2)
        mid[k] = slice(1, None, 2)
        np.maximum(out[tuple(lo)], out[tuple(hi)], out=out[tuple(mid)])
    return out


@numba.njit(cache=True)
def _push_neighbors(c, status, inq, stack, top, shape, strides, coords):
    ndim = shape.shape[0]
    r = c
    for k in range(ndim):
        coords[k] = r // strides[k]
        r -= coords[k] * strides[k]
    for k in range(ndim):
        for s in (-1, 1):
            x = coords[k] + s
            if x < 0 or x >= shape[k]:
                continue
            nb = c + s * strides[k]
            if status[nb] and not inq[nb]:
                inq[nb] = 1
                stack[top] = nb
                top += 1
    return top


@numba.njit(cache=True)
def _reduce(status, shape, strides):
    """Cancel free-face and coreduction pairs in place; return the number removed."""
    ndim = shape.shape[0]
    n = status.shape[0]
    stack = np.empty(n, dtype=np.int64)
    inq = np.zeros(n, dtype=np.uint8)
    coords = np.empty(ndim, dtype=np.int64)
    scratch = np.empty(ndim, dtype=np.int64)
    top = 0
    for i in range(n - 1, -1, -1):
        if status[i]:
            stack[top] = i
            inq[i] = 1
            top += 1
    removed = 0
    while top > 0:
        top -= 1
        c = stack[top]
        inq[c] = 0
        if not status[c]:
            continue
        r = c
        for k in range(ndim):
            coords[k] = r // strides[k]
            r -= coords[k] * strides[k]
        nf = 0
        face = -1
        ncf = 0
        coface = -1
        for k in range(ndim):
            odd = coords[k] & 1
            for s in (-1, 1):
                x = coords[k] + s
                if x < 0 or x >= shape[k]:
                    continue
                nb = c + s * strides[k]
                if status[nb]:
                    if odd:
                        nf += 1
                        face = nb
                    else:
                        ncf += 1
                        coface = nb
        partner = -1
        if nf == 1:
            partner = face
        elif ncf == 1:
            partner = coface
        if partner < 0:
            continue
        status[c] = 0
        status[partner] = 0
        removed += 2
        top = _push_neighbors(c, status, inq, stack, top, shape, strides, scratch)
        top = _push_neighbors(partner, status, inq, stack, top, shape, strides, scratch)
    return removed


def _remaining_complex(status_nd: np.ndarray) -> SparseComplex:
    shape = status_nd.shape
    strides = np.array([int(np.prod(shape[k + 1:])) for k in range(len(shape))], dtype=np.int64)
    idx = np.flatnonzero(status_nd.reshape(-1))
    alive = set(int(i) for i in idx)
    cells: dict[int, list] = {}
    boundary: dict = {}
    for c in idx:
        c = int(c)
        coords = np.unravel_index(c, shape)
        odd_axes = [k for k in range(len(shape)) if coords[k] % 2]
        cells.setdefault(len(odd_axes), []).append(c)
        bd = {}
        for pos, k in enumerate(odd_axes):
            sign = -1 if pos % 2 else 1
            up, down = c + int(strides[k]), c - int(strides[k])
            if up in alive:
                bd[up] = bd.get(up, 0) + sign
            if down in alive:
                bd[down] = bd.get(down, 0) - sign
        boundary[c] = bd
    return SparseComplex(cells, boundary)


def check_thresholds(values: np.ndarray, thresholds: Sequence[float], tol: float) -> None:
    for t in thresholds:
        if np.isfinite(t) and np.min(np.abs(values - t)) <= tol:
            raise ThresholdTooClose(f"a grid sample lies within {tol:g} of threshold {t:g}")


def relative_cells(field: CubicalField, b: float, a: float) -> np.ndarray:
    """uint8 mask of cells in ``{f <= b}`` but not in ``{f <= a}``."""
    cm = cell_maxima(field.values)
    return ((cm <= b) & (cm > a)).astype(np.uint8)


def reduced_complex(field: CubicalField, pair: tuple[float, float],
                    grid_tolerance: float = 1e-9) -> tuple[SparseComplex, int]:
    """Collapse the relative complex and return the remainder plus the removed count."""
    b, a = pair
    if not field.certified:
        raise BoxNotCertified("box not certified for the sublevel pair")
    if not a < b:
        raise InputError("pair must be (upper threshold, lower threshold) with lower < upper")
    check_thresholds(field.values, (a, b), grid_tolerance)
    status = relative_cells(field, b, a)
    shape = np.array(status.shape, dtype=np.int64)
    strides = np.array([int(np.prod(status.shape[k + 1:])) for k in range(status.ndim)],
                       dtype=np.int64)
    flat = status.reshape(-1)
    removed = _reduce(flat, shape, strides)
    return _remaining_complex(status), int(removed)


def cubical_sublevel_homology(field: CubicalField, pair: tuple[float, float],
                              coefficients: int | str = "Z",
                              grid_tolerance: float = 1e-9) -> GradedAbGroup:
    """Relative homology ``H_*({f <= b}, {f <= a})`` of the sampled field.

    ``pair = (b, a)``.  With ``coefficients="Z"`` the result is the integral
    homology; with a prime ``p`` the free ranks of the result are the
    ``F_p``-dimensions.
    """
    rem, _ = reduced_complex(field, pair, grid_tolerance)
    if coefficients in ("Z", 0, None):
        return rem.homology()
    p = int(coefficients)
    return GradedAbGroup({k: (d, ()) for k, d in rem.homology_mod_p(p).items()})
