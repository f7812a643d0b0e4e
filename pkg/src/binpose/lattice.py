import math

import numpy as np

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def fibonacci_sphere(n: int) -> np.ndarray:
    """``(n, 3)`` near-uniform unit vectors on a Fibonacci spiral.

    The spiral winds around the y axis; point ``i`` has height
    ``y = 1 - (2 i + 1) / n``, so no point sits exactly on a pole.
    """
    if n < 1:
        raise ValueError("need at least one point")
    i = np.arange(n, dtype=float)
    y = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.clip(1.0 - y * y, 0.0, None))
    phi = i * GOLDEN_ANGLE
    return np.stack([r * np.cos(phi), y, r * np.sin(phi)], axis=1)
