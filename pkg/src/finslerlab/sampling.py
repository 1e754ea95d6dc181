"""Seeded sampling of admissible points (x, y).

x is uniform in a box; y is uniform on the unit sphere scaled by a radius
uniform in [0.5, 2].  Candidates failing the predicate are rejected.  The
generator is numpy's PCG64 via ``default_rng(seed)``.
"""

import numpy as np

from .errors import SamplingError

COND_MAX = 1e4


def draw(rng, dim, x_box=(-1.0, 1.0), r_range=(0.5, 2.0)):
    x = rng.uniform(x_box[0], x_box[1], dim)
    d = rng.normal(size=dim)
    d /= np.linalg.norm(d)
    return x, d * rng.uniform(*r_range)


def sample_points(predicate, dim, count, seed=0, x_box=(-1.0, 1.0), r_range=(0.5, 2.0), max_tries=None):
    """Return ``(points, rejected)``; raises SamplingError when nothing is admissible."""
    rng = np.random.default_rng(seed)
    max_tries = max_tries or 50 * count + 100
    pts, rejected = [], 0
    for _ in range(max_tries):
        if len(pts) == count:
            break
        x, y = draw(rng, dim, x_box, r_range)
        if predicate(x, y):
            pts.append((x, y))
        else:
            rejected += 1
    if not pts:
        raise SamplingError(f"no admissible point in {max_tries} draws")
    return pts, rejected


def well_conditioned(metric, cond_max=COND_MAX):
    """Predicate: inside the domain and cond(g) <= cond_max."""
    from .errors import FinslerLabError
    from .finsler import fundamental

    def ok(x, y):
        try:
            return fundamental(metric, x, y).cond <= cond_max
        except (FinslerLabError, ArithmeticError, ValueError):
            return False

    return ok
