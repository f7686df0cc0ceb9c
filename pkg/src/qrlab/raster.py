"""Grayscale image operations on float arrays in [0, 1].

Images are plain 2-D ``numpy.ndarray`` of float64, indexed ``[row, col]``.
Edges are clamped everywhere.
"""

import math

import numpy as np
from scipy import ndimage


class DegenerateHistogram(ValueError):
    """The image has a single intensity bin, so no threshold separates it."""


def as_image(img):
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {a.shape}")
    return a


def gaussian_kernel(sigma):
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    with np.errstate(over="ignore"):
        k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def blur1d(a, sigma, axis):
    """Clamped-edge 1-D Gaussian along ``axis``."""
    a = np.asarray(a, dtype=np.float64)
    if sigma <= 0:
        return a.copy()
    return ndimage.correlate1d(a, gaussian_kernel(sigma), axis=axis, mode="nearest")


def gaussian_blur(img, sigma):
    """Separable Gaussian with kernel radius ceil(3 sigma); sigma 0 is identity."""
    img = as_image(img)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return img.copy()
    return blur1d(blur1d(img, sigma, 0), sigma, 1)


def bilinear_sample(img, ys, xs):
    """Sample ``img`` at fractional coordinates, clamping to the border."""
    h, w = img.shape
    xs = np.clip(xs, 0, w - 1)
    ys = np.clip(ys, 0, h - 1)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def warp(img, dx, dy):
    """out[y, x] = img sampled at (x + dx[y, x], y + dy[y, x])."""
    img = as_image(img)
    dx = np.broadcast_to(np.asarray(dx, dtype=np.float64), img.shape)
    dy = np.broadcast_to(np.asarray(dy, dtype=np.float64), img.shape)
    if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))):
        raise ValueError("displacement field must be finite")
    ys, xs = np.indices(img.shape, dtype=np.float64)
    return np.clip(bilinear_sample(img, ys + dy, xs + dx), 0.0, 1.0)


def resize(img, new_w, new_h):
    """Bilinear resize using pixel-centre alignment."""
    img = as_image(img)
    if new_w < 1 or new_h < 1:
        raise ValueError("target size must be >= 1")
    h, w = img.shape
    if (h, w) == (new_h, new_w):
        return img.copy()
    ys = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    xs = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.clip(bilinear_sample(img, yy, xx), 0.0, 1.0)


def resize_nearest(img, new_w, new_h):
    img = as_image(img)
    h, w = img.shape
    rows = np.minimum((np.arange(new_h) * h) // new_h, h - 1)
    cols = np.minimum((np.arange(new_w) * w) // new_w, w - 1)
    return img[np.ix_(rows, cols)].copy()


def histogram(img, bins=256):
    q = np.clip(np.rint(as_image(img) * (bins - 1)), 0, bins - 1).astype(np.intp)
    return np.bincount(q.ravel(), minlength=bins)


def otsu_bin(hist):
    """Bin index t maximising between-class variance of {<= t} vs {> t}.

    When several consecutive bins tie (an empty gap between the classes), the
    middle of the tied run is returned.
    """
    hist = np.asarray(hist, dtype=np.float64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogram("histogram has a single populated bin")
    levels = np.arange(len(hist), dtype=np.float64)
    w0 = np.cumsum(hist)
    total = w0[-1]
    w1 = total - w0
    s0 = np.cumsum(hist * levels)
    mu0 = np.divide(s0, w0, out=np.zeros_like(s0), where=w0 > 0)
    mu1 = np.divide(s0[-1] - s0, w1, out=np.zeros_like(s0), where=w1 > 0)
    between = w0 * w1 * (mu0 - mu1) ** 2
    # empty bins leave the variance flat; take the middle of the first maximal run
    start = int(np.argmax(between))
    end = start
    while end + 1 < len(between) and between[end + 1] == between[start]:
        end += 1
    return (start + end) // 2


def otsu_threshold(img):
    """Otsu threshold in [0, 1]: the boundary between the last dark bin and
    the next one, so values below it are dark."""
    return (otsu_bin(histogram(img)) + 0.5) / 255.0


def binarize(img, threshold=None):
    img = as_image(img)
    if threshold is None:
        threshold = otsu_threshold(img)
    # compare on the 8-bit grid the histogram was built on
    q = np.rint(np.clip(img, 0, 1) * 255)
    return np.where(q < threshold * 255, 0.0, 1.0)


def is_binary(img):
    img = np.asarray(img)
    return bool(np.all((img == 0.0) | (img == 1.0)))


def write_pgm(path, img):
    img = as_image(img)
    data = np.rint(np.clip(img, 0, 1) * 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(data.tobytes())


def _tokens(buf, count, pos):
    out = []
    while len(out) < count:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while buf[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        out.append(buf[start:pos])
    return out, pos + 1


def read_pgm(path):
    with open(path, "rb") as f:
        buf = f.read()
    (magic, w, h, maxval), pos = _tokens(buf, 4, 0)
    if magic != b"P5" or int(maxval) != 255:
        raise ValueError(f"{path}: only binary PGM with maxval 255 is supported")
    w, h = int(w), int(h)
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.float64) / 255.0
