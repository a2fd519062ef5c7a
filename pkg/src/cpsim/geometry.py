"""2D segment / oriented-rectangle intersection kernels.

Rectangles are packed as float arrays ``(R, 6)``: ``cx, cy, hx, hy, cos, sin``
where ``hx``/``hy`` are half extents in the rectangle's own frame. Segments are
``(S, 4)``: ``ax, ay, bx, by``. Touching the boundary counts as a hit.
"""

import numpy as np
from numba import njit


def pack_rects(center, half_extent, heading) -> np.ndarray:
    center = np.asarray(center, dtype=float).reshape(-1, 2)
    half_extent = np.asarray(half_extent, dtype=float).reshape(-1, 2)
    heading = np.asarray(heading, dtype=float).reshape(-1)
    return np.column_stack([center, half_extent, np.cos(heading), np.sin(heading)])


@njit(cache=True)
def _hit(ax, ay, bx, by, r):
    cx, cy, hx, hy, c, s = r[0], r[1], r[2], r[3], r[4], r[5]
    # cheap axis-aligned reject first
    ex = abs(c) * hx + abs(s) * hy
    ey = abs(s) * hx + abs(c) * hy
    if max(ax, bx) < cx - ex or min(ax, bx) > cx + ex:
        return False
    if max(ay, by) < cy - ey or min(ay, by) > cy + ey:
        return False
    px = (ax - cx) * c + (ay - cy) * s
    py = -(ax - cx) * s + (ay - cy) * c
    qx = (bx - cx) * c + (by - cy) * s
    qy = -(bx - cx) * s + (by - cy) * c
    dx = qx - px
    dy = qy - py
    t0 = 0.0
    t1 = 1.0
    # Liang-Barsky clipping against [-hx, hx] x [-hy, hy]
    for k in range(4):
        if k == 0:
            p, q = -dx, px + hx
        elif k == 1:
            p, q = dx, hx - px
        elif k == 2:
            p, q = -dy, py + hy
        else:
            p, q = dy, hy - py
        if p == 0.0:
            if q < 0.0:
                return False
        else:
            t = q / p
            if p < 0.0:
                if t > t0:
                    t0 = t
            else:
                if t < t1:
                    t1 = t
            if t0 > t1:
                return False
    return True


@njit(cache=True)
def hit_matrix(segs, rects, exclude):
    """Boolean ``(S, R)`` hit table; ``exclude[s]`` lists rect indices (-1 = none) to skip."""
    S = segs.shape[0]
    R = rects.shape[0]
    out = np.zeros((S, R), dtype=np.bool_)
    for i in range(S):
        for j in range(R):
            skip = False
            for e in range(exclude.shape[1]):
                if exclude[i, e] == j:
                    skip = True
            if skip:
                continue
            out[i, j] = _hit(segs[i, 0], segs[i, 1], segs[i, 2], segs[i, 3], rects[j])
    return out


@njit(cache=True)
def any_hit(segs, rects, exclude):
    """Per-segment flag: does the segment touch any non-excluded rect."""
    S = segs.shape[0]
    R = rects.shape[0]
    out = np.zeros(S, dtype=np.bool_)
    for i in range(S):
        for j in range(R):
            skip = False
            for e in range(exclude.shape[1]):
                if exclude[i, e] == j:
                    skip = True
            if skip:
                continue
            if _hit(segs[i, 0], segs[i, 1], segs[i, 2], segs[i, 3], rects[j]):
                out[i] = True
                break
    return out


def segment_hits(a, b, rects, exclude=()) -> np.ndarray:
    """Indices of rects crossed by the single segment ``a``-``b``."""
    seg = np.array([[a[0], a[1], b[0], b[1]]], dtype=float)
    excl = np.full((1, max(1, len(exclude))), -1, dtype=np.int64)
    excl[0, :len(exclude)] = list(exclude)
    return np.flatnonzero(hit_matrix(seg, np.ascontiguousarray(rects, dtype=float), excl)[0])


def points_in_rects(points, rects) -> np.ndarray:
    """Boolean ``(P, R)``: point inside (or on the boundary of) each rect."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    d = points[:, None, :] - rects[None, :, 0:2]
    c, s = rects[None, :, 4], rects[None, :, 5]
    lx = d[..., 0] * c + d[..., 1] * s
    ly = -d[..., 0] * s + d[..., 1] * c
    return (np.abs(lx) <= rects[None, :, 2]) & (np.abs(ly) <= rects[None, :, 3])


@njit(cache=True)
def visible_from(src, src_rect, pts, pts_rect, rects, max_range):
    """Range-gated line of sight from each source point to each target point.

    ``src_rect``/``pts_rect`` name the rect owned by each endpoint (-1 = none);
    those are not counted as blockers. Rects are culled per source by distance
    before the exact test, which is what keeps dense cell grids cheap.
    """
    A = src.shape[0]
    P = pts.shape[0]
    R = rects.shape[0]
    out = np.zeros((A, P), dtype=np.bool_)
    near = np.empty(R, dtype=np.int64)
    for i in range(A):
        sx = src[i, 0]
        sy = src[i, 1]
        m = 0
        for j in range(R):
            if j == src_rect[i]:
                continue
            c = abs(rects[j, 4])
            s = abs(rects[j, 5])
            ex = c * rects[j, 2] + s * rects[j, 3]
            ey = s * rects[j, 2] + c * rects[j, 3]
            gx = max(0.0, abs(rects[j, 0] - sx) - ex)
            gy = max(0.0, abs(rects[j, 1] - sy) - ey)
            if gx * gx + gy * gy <= max_range * max_range:
                near[m] = j
                m += 1
        for p in range(P):
            dx = pts[p, 0] - sx
            dy = pts[p, 1] - sy
            if dx * dx + dy * dy > max_range * max_range:
                continue
            clear = True
            for q in range(m):
                j = near[q]
                if j == pts_rect[p]:
                    continue
                if _hit(sx, sy, pts[p, 0], pts[p, 1], rects[j]):
                    clear = False
                    break
            out[i, p] = clear
    return out
