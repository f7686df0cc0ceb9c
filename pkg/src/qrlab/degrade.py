"""Seeded degradation models for QR symbols.

Every model is a pure function of (input, parameters, seed). ``NoiseSpec``
is the serialisable description used by datasets and the CLI, e.g.
``inversion:p=12``, ``rdist:sigma=5,maxdelta=5``, ``ruled:mag=20``, ``fgbg``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import raster
from .encoder import ModuleMatrix

KINDS = ("inversion", "rdist", "ruled", "fgbg")
DEFAULT_MAXDELTA = 5.0
RULED_SMOOTHING = 20.0
FG_BAND = (0.05, 0.45)
BG_BAND = (0.55, 0.95)
FGBG_SCALES = (4, 16, 64)


class NonBinaryInput(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "inversion"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        defaults = {
            "inversion": {"p": 0.0},
            "rdist": {"sigma": 5.0, "maxdelta": DEFAULT_MAXDELTA},
            "ruled": {"mag": 20.0},
            "fgbg": {},
        }[self.kind]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = {k: float(self.params.get(k, v)) for k, v in defaults.items()}
        if any(v < 0 for v in merged.values()):
            raise ValueError("noise parameters must be >= 0")
        if self.kind == "inversion" and merged["p"] > 100:
            raise ValueError("inversion percent must be in [0, 100]")
        object.__setattr__(self, "params", merged)

    @classmethod
    def parse(cls, text):
        kind, _, rest = text.strip().partition(":")
        params = {}
        for item in filter(None, rest.split(",")):
            key, _, value = item.partition("=")
            params[key.strip()] = float(value)
        return cls(kind.strip(), params)

    def __str__(self):
        if not self.params:
            return self.kind
        parts = ",".join(f"{k}={_fmt(v)}" for k, v in self.params.items())
        return f"{self.kind}:{parts}"

    @property
    def on_matrix(self):
        """Inversion acts on module matrices; the rest on rendered images."""
        return self.kind == "inversion"


def _fmt(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def inversion_count(percent, cells):
    """round(percent% of cells), halves rounded up."""
    return int(math.floor(percent / 100.0 * cells + 0.5))


def invert_modules(matrix, percent, seed):
    """Complement exactly round(percent% of all cells) distinct modules.

    Accepts a ModuleMatrix, a boolean array, or a binary gray image (one pixel
    per module); the result has the same kind as the input.
    """
    if not 0 <= percent <= 100:
        raise ValueError("percent must be in [0, 100]")
    gray = False
    if isinstance(matrix, ModuleMatrix):
        cells = matrix.cells
    else:
        arr = np.asarray(matrix)
        if arr.dtype == bool:
            cells = arr
        else:
            arr = raster.as_image(arr)
            if not raster.is_binary(arr):
                raise NonBinaryInput("inversion needs a binary image with one pixel per module")
            cells = arr < 0.5
            gray = True
    k = inversion_count(percent, cells.size)
    rng = np.random.default_rng(seed)
    picks = rng.choice(cells.size, size=k, replace=False)
    out = cells.copy()
    flat = out.reshape(-1)
    flat[picks] = ~flat[picks]
    if isinstance(matrix, ModuleMatrix):
        return ModuleMatrix(matrix.version, out)
    return np.where(out, 0.0, 1.0) if gray else out


def _unit_max(a):
    m = np.max(np.abs(a))
    return a / m if m > 0 else a


def distortion_field(shape, sigma, maxdelta, seed):
    """Smooth random displacement (dx, dy), each with max |.| = maxdelta."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((2,) + tuple(shape))
    dx = _unit_max(raster.gaussian_blur(noise[0], sigma)) * maxdelta
    dy = _unit_max(raster.gaussian_blur(noise[1], sigma)) * maxdelta
    return dx, dy


def random_distortion(img, sigma, maxdelta=DEFAULT_MAXDELTA, seed=0):
    img = raster.as_image(img)
    if sigma <= 0 or maxdelta < 0:
        raise ValueError("need sigma > 0 and maxdelta >= 0")
    if maxdelta == 0:
        return img.copy()
    dx, dy = distortion_field(img.shape, sigma, maxdelta, seed)
    return raster.warp(img, dx, dy)


def ruled_field(width, mag, seed, smoothing=RULED_SMOOTHING):
    """Per-column vertical displacement with max |.| = mag."""
    rng = np.random.default_rng(seed)
    v = raster.blur1d(rng.standard_normal(width), smoothing, 0)
    return _unit_max(v) * mag


def ruled_surface(img, mag, seed=0):
    img = raster.as_image(img)
    if mag < 0:
        raise ValueError("mag must be >= 0")
    if mag == 0:
        return img.copy()
    dy = ruled_field(img.shape[1], mag, seed)[None, :]
    return raster.warp(img, 0.0, dy)


def multiscale_noise(shape, rng, scales=FGBG_SCALES):
    """Sum of blurred white-noise grids, one per scale, standardised to
    zero mean and unit variance."""
    total = np.zeros(shape)
    for s in scales:
        g = raster.gaussian_blur(rng.standard_normal(shape), s)
        sd = g.std()
        total += g / sd if sd > 0 else g
    sd = total.std()
    return (total - total.mean()) / sd if sd > 0 else total - total.mean()


def _into_band(z, band):
    """Squash a standard field into the open band, concentrated at its centre."""
    mid = (band[0] + band[1]) / 2.0
    half = (band[1] - band[0]) / 2.0
    return mid + half * np.tanh(z / 2.0)


def fgbg_selection(img, seed=0):
    """Replace dark/light pixels with separate low-frequency luminance fields."""
    img = raster.as_image(img)
    if not raster.is_binary(img):
        raise NonBinaryInput("fgbg_selection needs a binary {0, 1} image")
    rng = np.random.default_rng(seed)
    fg = _into_band(multiscale_noise(img.shape, rng), FG_BAND)
    bg = _into_band(multiscale_noise(img.shape, rng), BG_BAND)
    return np.where(img < 0.5, fg, bg)


def apply_noise(spec, target, seed):
    """Apply a NoiseSpec to a ModuleMatrix (inversion) or a GrayImage."""
    p = spec.params
    if spec.kind == "inversion":
        return invert_modules(target, p["p"], seed)
    if spec.kind == "rdist":
        return random_distortion(target, p["sigma"], p["maxdelta"], seed)
    if spec.kind == "ruled":
        return ruled_surface(target, p["mag"], seed)
    return fgbg_selection(target, seed)
