"""PGM images and flat ``key=value`` config files."""

import numpy as np

from .errors import DimensionError, ParameterError


def to_pgm_bytes(img):
    """Binary PGM (P5, 8-bit) with values rescaled linearly to [0, 255]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"PGM needs a 2-D array, got shape {img.shape}")
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
    pix = np.rint(scaled * 255.0).astype(np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def write_pgm(path, img):
    with open(path, "wb") as fh:
        fh.write(to_pgm_bytes(img))


def read_pgm(path):
    """Read an 8-bit P5 image as a uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError("only 8-bit P5 images are supported")
    w, h = int(tokens[1]), int(tokens[2])
    pos += 1
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w).copy()


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys use dashes or underscores."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out
