"""Z-buffered scan conversion of a screen-space triangle soup.

Screen coordinates put pixel ``i`` on ``[i, i + 1)``; coverage is sampled at
pixel centers ``i + 0.5``. Triangles are drawn in soup order with a strict
depth test, so on exact depth ties the earlier triangle keeps the pixel.
"""

from __future__ import annotations

import numpy as np


def _edge_owns_ties(ax, ay, bx, by) -> bool:
    # Top-left rule for a counter-clockwise-in-y-down edge a->b with the
    # interior on the side of (-dy, dx).
    dx, dy = bx - ax, by - ay
    return dy < 0 or (dy == 0 and dx > 0)


def _edge(ax, ay, bx, by, px, py):
    # Evaluate from the lexicographically smaller endpoint so the two
    # triangles sharing an edge see exactly negated values.
    if (ax, ay) > (bx, by):
        return -((ax - bx) * (py - by) - (ay - by) * (px - bx))
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def rasterize_soup(
    tri_xy: np.ndarray,
    tri_z: np.ndarray,
    width: int,
    height: int,
    z_min: float = 0.0,
    z_max: float = np.inf,
):
    """Rasterize triangles ``tri_xy`` (K, 3, 2) with camera depths ``tri_z`` (K, 3).

    Returns ``(tri_id, depth, bary)``: the winning triangle per pixel (-1 if
    empty), its perspective-correct depth (+inf if empty) and the
    perspective-correct barycentric weights of its three corners.
    """
    tri_id = np.full((height, width), -1, dtype=np.int64)
    depth = np.full((height, width), np.inf)
    bary = np.zeros((height, width, 3))

    for k in range(len(tri_xy)):
        (x0, y0), (x1, y1), (x2, y2) = tri_xy[k]
        z = tri_z[k]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0 or not np.isfinite(area):
            continue
        if area < 0:
            # Flip to a consistent winding; remember the corner permutation.
            order = (0, 2, 1)
            x1, y1, x2, y2 = x2, y2, x1, y1
            area = -area
        else:
            order = (0, 1, 2)

        col_lo = max(int(np.floor(min(x0, x1, x2) - 0.5)), 0)
        col_hi = min(int(np.ceil(max(x0, x1, x2) - 0.5)), width - 1)
        row_lo = max(int(np.floor(min(y0, y1, y2) - 0.5)), 0)
        row_hi = min(int(np.ceil(max(y0, y1, y2) - 0.5)), height - 1)
        if col_lo > col_hi or row_lo > row_hi:
            continue

        px = np.arange(col_lo, col_hi + 1) + 0.5
        py = (np.arange(row_lo, row_hi + 1) + 0.5)[:, None]
        # Edge functions, each opposite the named corner.
        e0 = _edge(x1, y1, x2, y2, px, py)
        e1 = _edge(x2, y2, x0, y0, px, py)
        e2 = _edge(x0, y0, x1, y1, px, py)
        inside = (
            ((e0 > 0) | ((e0 == 0) & _edge_owns_ties(x1, y1, x2, y2)))
            & ((e1 > 0) | ((e1 == 0) & _edge_owns_ties(x2, y2, x0, y0)))
            & ((e2 > 0) | ((e2 == 0) & _edge_owns_ties(x0, y0, x1, y1)))
        )
        if not inside.any():
            continue

        l0, l1, l2 = e0 / area, e1 / area, e2 / area
        zc = z[list(order)]
        w0, w1, w2 = l0 / zc[0], l1 / zc[1], l2 / zc[2]
        inv_z = w0 + w1 + w2
        pz = 1.0 / inv_z

        win = depth[row_lo : row_hi + 1, col_lo : col_hi + 1]
        hit = inside & (pz < win) & (pz >= z_min) & (pz <= z_max)
        if not hit.any():
            continue
        win[hit] = pz[hit]
        tri_id[row_lo : row_hi + 1, col_lo : col_hi + 1][hit] = k
        b = np.stack([w0 * pz, w1 * pz, w2 * pz], axis=-1)
        # Undo the winding flip so weights line up with the caller's corners.
        b = b[..., np.argsort(order)]
        bary[row_lo : row_hi + 1, col_lo : col_hi + 1][hit] = b[hit]

    return tri_id, depth, bary
