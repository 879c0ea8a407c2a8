import math

import numpy as np


def unit_config(n, seed):
    """Centred normal configuration scaled to unit total dispersion."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    x -= x.mean(axis=0)
    return x / math.sqrt(float(np.sum(x * x)))


def equilateral_direction():
    ang = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    u = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return u / math.sqrt(float(np.sum(u * u)))
