"""Built-in synthetic datasets.

All generators return distributions stacked along a trailing sample mode,
shape ``grid + (N,)``, each sample summing to one.
"""

import numpy as np

from .errors import ParameterError
from .ot import grid_coordinates
from .wcpdl import planted_cp

__all__ = ["gaussians", "u_shapes", "translated_patterns", "digits", "planted_cp", "PRESETS"]


def _normalize(Y):
    Y = np.asarray(Y, dtype=np.float64)
    lead = Y.shape[:-1]
    M = Y.reshape(-1, Y.shape[-1])
    return (M / M.sum(axis=0)).reshape(lead + (Y.shape[-1],))


def gaussians(n_bins=100, means=(0.2, 0.5, 0.8), sigma=0.05):
    """Discretized 1-D Gaussians on ``n_bins`` points of [0, 1].

    Returns
    -------
    ndarray, shape (n_bins, len(means))
    """
    x = grid_coordinates((n_bins,))[:, 0]
    Y = np.exp(-0.5 * ((x[:, None] - np.asarray(means)[None, :]) / sigma) ** 2)
    return _normalize(Y)


def u_shapes(n_bins=100, intervals=((0.1, 0.45), (0.55, 0.9)), wall=0.05, floor=0.2):
    """Histograms shaped like a square ``U``: two tall walls joined by a low floor.

    Parameters
    ----------
    intervals : sequence of (left, right)
        Support of each shape in [0, 1].
    wall : float
        Width of each wall.
    floor : float
        Floor height relative to the walls.
    """
    x = grid_coordinates((n_bins,))[:, 0]
    cols = []
    for left, right in intervals:
        if not 0.0 <= left < right <= 1.0 or right - left <= 2 * wall:
            raise ParameterError(f"bad interval ({left}, {right}) for wall {wall}")
        y = np.where((x >= left) & (x <= right), floor, 0.0)
        y[((x >= left) & (x < left + wall)) | ((x > right - wall) & (x <= right))] = 1.0
        cols.append(y)
    return _normalize(np.stack(cols, axis=1))


# small periodic motifs in the spirit of game-of-life still lifes and oscillators
MOTIFS = {
    "glider": [[0, 1, 0], [0, 0, 1], [1, 1, 1]],
    "blinker": [[1, 1, 1]],
    "beehive": [[0, 1, 1, 0], [1, 0, 0, 1], [0, 1, 1, 0]],
    "boat": [[1, 1, 0], [1, 0, 1], [0, 1, 0]],
}


def translated_patterns(grid=(16, 16), N=40, motif="glider", seed=0, floor=1e-3):
    """Copies of one motif at random cyclic offsets on a torus grid.

    A small ``floor`` keeps every entry positive.
    """
    rng = np.random.default_rng(seed)
    base = np.zeros(grid)
    m = np.asarray(MOTIFS[motif], dtype=np.float64)
    base[: m.shape[0], : m.shape[1]] = m
    out = np.empty(tuple(grid) + (N,))
    for i in range(N):
        shift = (int(rng.integers(grid[0])), int(rng.integers(grid[1])))
        out[..., i] = np.roll(base, shift, axis=(0, 1)) + floor
    return _normalize(out)


# seven-segment strokes on an 8x8 canvas: (row slice, col slice)
_SEGMENTS = {
    "a": (slice(1, 2), slice(2, 6)),
    "b": (slice(1, 4), slice(5, 6)),
    "c": (slice(4, 7), slice(5, 6)),
    "d": (slice(6, 7), slice(2, 6)),
    "e": (slice(4, 7), slice(2, 3)),
    "f": (slice(1, 4), slice(2, 3)),
    "g": (slice(3, 5), slice(2, 6)),
}
_DIGIT_SEGMENTS = ["abcdef", "bc", "abged", "abgcd", "fgbc", "afgcd", "afgedc", "abc", "abcdefg", "abcdfg"]


def digits(N=30, seed=0, shift=1, floor=1e-3):
    """Procedural 8x8 digit images with random shifts of up to ``shift`` pixels.

    Returns
    -------
    X : ndarray, shape (8, 8, N)
    labels : ndarray of int, shape (N,)
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=N)
    out = np.empty((8, 8, N))
    for i, lab in enumerate(labels):
        img = np.zeros((8, 8))
        for s in _DIGIT_SEGMENTS[lab]:
            img[_SEGMENTS[s]] = 1.0
        dy, dx = rng.integers(-shift, shift + 1, size=2)
        out[..., i] = np.roll(img, (int(dy), int(dx)), axis=(0, 1)) + floor
    return _normalize(out), labels


PRESETS = {
    "gaussian": gaussians,
    "u-shape": u_shapes,
    "patterns": translated_patterns,
    "digits": digits,
    "planted": planted_cp,
}
