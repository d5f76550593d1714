"""Planar polygon primitives: signed areas, convexity tests, convex clipping.

All polygons are (k, 2) float arrays with vertices in counterclockwise
order.  Clipping is exact up to floating point: both operands must be
convex, so the intersection is again a convex polygon.
"""

import numpy as np

__all__ = [
    "polygon_area",
    "polygon_centroid",
    "is_convex",
    "clip_convex",
    "point_in_polygon",
]


def polygon_area(pts):
    """Signed (shoelace) area; positive for counterclockwise order."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(pts):
    """Area centroid of a simple polygon."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * float(np.sum(cross))
    if area == 0.0:
        return pts.mean(axis=0)
    cx = float(np.sum((x + xn) * cross)) / (6.0 * area)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * area)
    return np.array([cx, cy])


def _edge_crosses(pts):
    d = np.roll(pts, -1, axis=0) - pts
    dn = np.roll(d, -1, axis=0)
    return d[:, 0] * dn[:, 1] - d[:, 1] * dn[:, 0]


def is_convex(pts, rel_tol=1e-12):
    """True if the ccw polygon is convex (near-collinear vertices allowed)."""
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 3:
        return False
    crosses = _edge_crosses(pts)
    scale = float(np.max(np.abs(np.roll(pts, -1, axis=0) - pts)) ** 2) or 1.0
    return bool(np.all(crosses >= -rel_tol * scale))


def clip_convex(subject, clip):
    """Intersection of two convex ccw polygons (Sutherland-Hodgman).

    The subject polygon is clipped against each half-plane of the clip
    polygon in turn.  Returns an (m, 2) array; m may be zero when the
    polygons do not overlap.
    """
    out = [tuple(p) for p in np.asarray(subject, dtype=float)]
    clip = np.asarray(clip, dtype=float)
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        inp = out
        out = []
        s = inp[-1]
        ss = side(s)
        for e in inp:
            es = side(e)
            if es >= 0.0:
                if ss < 0.0:
                    out.append(_intersect(s, e, ss, es))
                out.append(e)
            elif ss >= 0.0:
                out.append(_intersect(s, e, ss, es))
            s, ss = e, es
    return np.array(out, dtype=float).reshape(-1, 2)


def _intersect(p, q, sp, sq):
    # sp, sq are signed distances of p, q to the clip line (opposite signs)
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def point_in_polygon(pts, p, rel_tol=1e-12):
    """True if p lies inside or on the boundary of the convex ccw polygon."""
    pts = np.asarray(pts, dtype=float)
    d = np.roll(pts, -1, axis=0) - pts
    r = np.asarray(p, dtype=float) - pts
    cross = d[:, 0] * r[:, 1] - d[:, 1] * r[:, 0]
    scale = float(np.max(np.abs(d)) ** 2) or 1.0
    return bool(np.all(cross >= -rel_tol * scale))
