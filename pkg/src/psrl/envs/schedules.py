"""Change-point schedules: explicit lists or geometric segment lengths."""
from __future__ import annotations

import numpy as np


def sample_geometric_changepoints(T, xi, rng):
    """Change points from i.i.d. geometric segment lengths.

    Segment lengths are Geometric(p = T^-xi) with support {1, 2, ...};
    lengths accumulate from episode 1 and the last segment is truncated at
    the horizon. Returned points are strictly increasing within [2, T].
    """
    if T < 1:
        raise ValueError("T must be positive")
    p = float(T) ** (-float(xi))
    if not 0.0 < p <= 1.0:
        raise ValueError("xi must be nonnegative")
    points = []
    t = 1
    while True:
        t += int(rng.geometric(p))
        if t > T:
            break
        points.append(t)
    return np.asarray(points, dtype=np.int64)


def evenly_spaced_changepoints(T, n_changes):
    """n_changes change points splitting [1, T] into near-equal segments.

    The first T mod (n+1) segments get the ceiling length, the rest the
    floor, matching the usual even-separation convention.
    """
    n_seg = n_changes + 1
    base, extra = divmod(T, n_seg)
    points = []
    t = 1
    for k in range(n_changes):
        t += base + (1 if k < extra else 0)
        points.append(t)
    return np.asarray(points, dtype=np.int64)


def expected_change_count(T, xi):
    """Analytic expectation of the geometric sampler's change count."""
    return (T - 1) * float(T) ** (-float(xi))
