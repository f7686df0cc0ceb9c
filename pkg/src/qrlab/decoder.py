"""Deterministic QR decoder used as the classical baseline.

Pipeline: Otsu binarisation (grayscale input only), finder-pattern search,
axis-aligned grid sampling, format-information BCH decode, unmasking,
codeword extraction, de-interleaving, Reed-Solomon correction and byte-mode
parsing. Each stage fails with its own reason so benchmarks can tally them.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate

from . import raster, tables
from .encoder import data_positions, format_positions, function_template
from .rs import UncorrectableBlock, rs_decode

NO_FINDERS = "NoFindersFound"
FORMAT_UNDECODABLE = "FormatUndecodable"
UNCORRECTABLE = "UncorrectableBlock"
MALFORMED = "MalformedBitstream"
FAILURES = (NO_FINDERS, FORMAT_UNDECODABLE, UNCORRECTABLE, MALFORMED)


class DecodeError(Exception):
    reason = None


class NoFindersFound(DecodeError):
    reason = NO_FINDERS


class FormatUndecodable(DecodeError):
    reason = FORMAT_UNDECODABLE


class MalformedBitstream(DecodeError):
    reason = MALFORMED


@dataclass(frozen=True)
class DecodeResult:
    text: bytes | None = None
    failure: str | None = None
    corrections: int = 0

    @property
    def ok(self):
        return self.failure is None


@dataclass(frozen=True)
class Finder:
    x: float
    y: float
    module: float


# -- finder search -----------------------------------------------------------

def _row_runs(dark):
    """Runs of every row of a bool image.

    Returns (row, start, length, is_dark) arrays, with runs never crossing
    row boundaries.
    """
    h, w = dark.shape
    padded = np.full((h, w + 1), 2, dtype=np.int8)
    padded[:, :w] = dark
    flat = padded.ravel()
    starts = np.concatenate(([0], np.flatnonzero(flat[1:] != flat[:-1]) + 1))
    lengths = np.diff(np.append(starts, flat.size))
    values = flat[starts]
    keep = values != 2
    starts, lengths, values = starts[keep], lengths[keep], values[keep]
    rows, cols = np.divmod(starts, w + 1)
    return rows, cols, lengths, values.astype(bool)


def _ratio_ok_scalar(r0, r1, r2, r3, r4):
    m = (r0 + r1 + r2 + r3 + r4) / 7.0
    tol = m / 2.0
    return (abs(r0 - m) < tol and abs(r1 - m) < tol and abs(r2 - 3 * m) < 3 * tol
            and abs(r3 - m) < tol and abs(r4 - m) < tol)


def _ratio_ok(r0, r1, r2, r3, r4):
    total = r0 + r1 + r2 + r3 + r4
    m = total / 7.0
    tol = m / 2.0
    return ((np.abs(r0 - m) < tol) & (np.abs(r1 - m) < tol) & (np.abs(r2 - 3 * m) < 3 * tol)
            & (np.abs(r3 - m) < tol) & (np.abs(r4 - m) < tol))


class _Runs:
    """Run decomposition of every row of a bool image, with a pixel -> run map."""

    def __init__(self, dark):
        self.rows, self.starts, self.lengths, self.values = _row_runs(dark)
        h, w = dark.shape
        ids = np.zeros(h * (w + 1), dtype=np.intp)
        flat_start = self.rows * (w + 1) + self.starts
        ids[flat_start] = 1
        self.id = (np.cumsum(ids) - 1).reshape(h, w + 1)[:, :w]

    def check_many(self, lines, pos):
        """Vectorised ``check``: returns (ok, centre, module) arrays."""
        i = self.id[lines, pos]
        n = len(self.rows)
        if n < 5:
            z = np.zeros(len(i))
            return z.astype(bool), z, z
        ok = (i >= 2) & (i + 2 < n)
        i = np.where(ok, i, 2)
        ok &= self.values[i] & (self.rows[i - 2] == lines) & (self.rows[i + 2] == lines)
        r = [self.lengths[i + d].astype(np.float64) for d in range(-2, 3)]
        ok &= _ratio_ok(*r)
        return ok, self.starts[i] + r[2] / 2.0, sum(r) / 7.0

    def candidates(self):
        rows, cols, lengths, values = self.rows, self.starts, self.lengths, self.values
        if len(rows) < 5:
            return np.empty((0, 3))
        r = [lengths[i:len(lengths) - 4 + i].astype(np.float64) for i in range(5)]
        same_row = rows[:-4] == rows[4:]
        pattern = values[:-4] & ~values[1:-3] & values[2:-2] & ~values[3:-1] & values[4:]
        ok = same_row & pattern & _ratio_ok(*r)
        idx = np.flatnonzero(ok)
        centre_x = cols[idx + 2] + lengths[idx + 2] / 2.0
        module = sum(x[idx] for x in r) / 7.0
        return np.stack([centre_x, rows[idx] + 0.5, module], axis=1)


def _line_check(line, pos):
    """Check 1:1:3:1:1 around index ``pos`` of a 1-D bool line.

    Returns (centre, module) or None.
    """
    n = len(line)
    if not 0 <= pos < n or not line[pos]:
        return None
    a = pos
    while a > 0 and line[a - 1]:
        a -= 1
    b = pos
    while b < n - 1 and line[b + 1]:
        b += 1
    runs = []
    left = a
    for want in (False, True):
        j = left
        while j > 0 and line[j - 1] == want:
            j -= 1
        if j == left:
            return None
        runs.append(left - j)
        left = j
    right = b
    rruns = []
    for want in (False, True):
        j = right
        while j < n - 1 and line[j + 1] == want:
            j += 1
        if j == right:
            return None
        rruns.append(j - right)
        right = j
    r = (runs[1], runs[0], b - a + 1, rruns[0], rruns[1])
    if not _ratio_ok_scalar(*r):
        return None
    return (a + b + 1) / 2.0, sum(r) / 7.0


def _merge(clusters, x, y, m):
    """Fold a confirmed centre into clusters of [count, x, y, module]."""
    for c in clusters:
        if abs(c[1] - x) <= c[3] and abs(c[2] - y) <= c[3] and abs(c[3] - m) <= max(1.0, 0.5 * c[3]):
            n = c[0]
            c[1] = (c[1] * n + x) / (n + 1)
            c[2] = (c[2] * n + y) / (n + 1)
            c[3] = (c[3] * n + m) / (n + 1)
            c[0] = n + 1
            return
    clusters.append([1, x, y, m])


def _order(three):
    """Return (top_left, top_right, bottom_left) by geometry."""
    a, b, c = three

    def d2(p, q):
        return (p.x - q.x) ** 2 + (p.y - q.y) ** 2

    # top-left is opposite the longest side
    sides = [(d2(b, c), a, b, c), (d2(a, c), b, a, c), (d2(a, b), c, a, b)]
    _, tl, p, q = max(sides, key=lambda s: s[0])
    cross = (p.x - tl.x) * (q.y - tl.y) - (p.y - tl.y) * (q.x - tl.x)
    # image y grows downwards: top-right -> bottom-left turn is clockwise
    if cross < 0:
        p, q = q, p
    return tl, p, q


def locate_finders(binary):
    """Find the three finder patterns of a binary image.

    Returns (top_left, top_right, bottom_left) as ``Finder`` centres in pixel
    coordinates. Run-ratio scanning comes first; template correlation is the
    fallback for finders with a few damaged modules. Raises NoFindersFound.
    """
    try:
        return _scan_finders(binary)
    except NoFindersFound as first:
        try:
            return _match_finders(binary)
        except NoFindersFound:
            raise first from None


def _best_trio(clusters):
    best = None
    for i in range(len(clusters)):
        for j in range(i + 1, len(clusters)):
            for k in range(j + 1, len(clusters)):
                trio = (clusters[i], clusters[j], clusters[k])
                if not _plausible(trio):
                    continue
                ms = [t[3] for t in trio]
                score = (sum(t[0] for t in trio), -(max(ms) - min(ms)))
                if best is None or score > best[0]:
                    best = (score, trio)
    if best is None:
        raise NoFindersFound("no three finders in a square arrangement")
    return _order([Finder(c[1], c[2], c[3]) for c in best[1]])


_TEMPLATE = -np.ones((7, 7))
_TEMPLATE[1:6, 1:6] = 1
_TEMPLATE[2:5, 2:5] = -1
MATCH_THRESHOLD = 0.7  # fraction-agreement score, 1.0 = perfect finder
MAX_PEAKS = 6


def _module_sizes(dark):
    runs = np.diff(np.flatnonzero(np.diff(dark, axis=1).ravel()))
    runs = runs[(runs > 0) & (runs < dark.shape[1] // 7 + 1)]
    if not len(runs):
        return []
    m0 = int(np.bincount(runs).argmax())
    return [m for m in (m0, m0 + 1, m0 - 1) if m >= 1]


def _match_finders(binary):
    """Locate finders as peaks of the correlation with a +-1 finder template."""
    dark = np.asarray(binary) < 0.5
    signed = np.where(dark, -1.0, 1.0)
    clusters = []
    for m in _module_sizes(dark):
        size = 7 * m
        if size > min(dark.shape):
            continue
        kernel = np.kron(_TEMPLATE, np.ones((m, m)))
        score = correlate(signed, kernel, mode="valid", method="auto") / kernel.size
        for _ in range(MAX_PEAKS):
            i, j = np.unravel_index(int(np.argmax(score)), score.shape)
            best = score[i, j]
            if best < MATCH_THRESHOLD:
                break
            clusters.append([float(best), j + size / 2.0, i + size / 2.0, float(m)])
            score[max(0, i - size + 1):i + size, max(0, j - size + 1):j + size] = -np.inf
    if len(clusters) < 3:
        raise NoFindersFound(f"{len(clusters)} template matches")
    return _best_trio(clusters)


def _scan_finders(binary):
    dark = np.asarray(binary) < 0.5
    hruns = _Runs(dark)
    vruns = _Runs(np.ascontiguousarray(dark.T))
    cands = hruns.candidates()
    clusters = []
    if len(cands):
        h, w = dark.shape
        cx = cands[:, 0].astype(np.intp)
        cy = cands[:, 1].astype(np.intp)
        ok, vy, vmod = vruns.check_many(cx, cy)
        cx, vy, vmod = cx[ok], vy[ok], vmod[ok]
        row = vy.astype(np.intp)
        ok, hx, hmod = hruns.check_many(row, cx)
        for x, y, m in zip(hx[ok].tolist(), vy[ok].tolist(), ((hmod + vmod) / 2.0)[ok].tolist()):
            _merge(clusters, x, y, m)
    # diagonal confirmation, once per cluster
    kept = []
    for c in clusters:
        r, col = int(c[2]), int(c[1])
        if _line_check(np.diagonal(dark, offset=col - r), min(r, col)) is not None:
            kept.append(c)
    clusters = kept
    if len(clusters) < 3:
        raise NoFindersFound(f"{len(clusters)} finder clusters")
    clusters.sort(key=lambda c: -c[0])
    return _best_trio(clusters[:8])


def _plausible(trio):
    """Consistent module sizes and a right-angled, equal-legged layout."""
    ms = [t[3] for t in trio]
    if max(ms) > 1.5 * min(ms) + 0.5:
        return False
    pts = [(t[1], t[2]) for t in trio]
    d = [(pts[a][0] - pts[b][0]) ** 2 + (pts[a][1] - pts[b][1]) ** 2
         for a, b in ((1, 2), (0, 2), (0, 1))]
    corner = d.index(max(d))
    p, q = (pts[x] for x in range(3) if x != corner)
    o = pts[corner]
    u = (p[0] - o[0], p[1] - o[1])
    v = (q[0] - o[0], q[1] - o[1])
    lu, lv = math.hypot(*u), math.hypot(*v)
    if min(lu, lv) < 7 * min(ms) or max(lu, lv) > 1.3 * min(lu, lv):
        return False
    if abs(u[0] * v[0] + u[1] * v[1]) >= 0.25 * lu * lv:
        return False
    # upright symbols only: the corner finder sits top-left of the other two
    return u[0] + v[0] > 0 and u[1] + v[1] > 0


# -- sampling and bit extraction ----------------------------------------------

def sample_grid(binary, finders):
    """Sample module centres on an axis-aligned grid anchored at the finders."""
    tl, tr, bl = finders
    module = (tl.module + tr.module + bl.module) / 3.0
    width = tr.x - tl.x
    height = bl.y - tl.y
    if width <= 0 or height <= 0:
        raise NoFindersFound("finder geometry is not upright")
    est = ((width + height) / 2.0) / module + 7
    version = int(round((est - 17) / 4.0))
    if not 1 <= version <= tables.MAX_VERSION:
        raise NoFindersFound(f"estimated side {est:.1f} outside versions 1-{tables.MAX_VERSION}")
    side = tables.side_for(version)
    mx = width / (side - 7)
    my = height / (side - 7)
    idx = np.arange(side) - 3
    xs = np.rint(tl.x + idx * mx - 0.5).astype(np.intp)
    ys = np.rint(tl.y + idx * my - 0.5).astype(np.intp)
    img = np.asarray(binary)
    h, w = img.shape
    xs = np.clip(xs, 0, w - 1)
    ys = np.clip(ys, 0, h - 1)
    return img[np.ix_(ys, xs)] < 0.5


_FMT_WORDS = np.array(list(tables.FORMAT_WORDS), dtype=np.int64)
_FMT_KEYS = list(tables.FORMAT_WORDS.values())
_POPCOUNT = np.array([bin(i).count("1") for i in range(1 << 15)], dtype=np.int64)


def read_format(cells):
    """Best (ec, mask) from the two format copies; ties are undecodable."""
    side = cells.shape[0]
    copies = []
    for copy in format_positions(side):
        rc = np.array(copy)
        bits = cells[rc[:, 0], rc[:, 1]].astype(np.int64)
        copies.append(int(bits @ (1 << np.arange(15))))
    dist = np.minimum(*(_POPCOUNT[word ^ _FMT_WORDS] for word in copies))
    best = int(dist.min())
    winners = np.flatnonzero(dist == best)
    if best > 3 or len(winners) != 1:
        raise FormatUndecodable(f"format distance {best}, {len(winners)} candidates")
    return _FMT_KEYS[winners[0]]


def deinterleave(codewords, version, ec):
    layout = tables.block_layout(version, ec)
    data = [[] for _ in layout]
    parity = [[] for _ in layout]
    k = 0
    for i in range(max(d for d, _ in layout)):
        for b, (nd, _) in enumerate(layout):
            if i < nd:
                data[b].append(codewords[k])
                k += 1
    for i in range(layout[0][1]):
        for b in range(len(layout)):
            parity[b].append(codewords[k])
            k += 1
    return [(d + p, ne) for d, p, (_, ne) in zip(data, parity, layout)]


def parse_bytes(data, version):
    """Parse byte-mode segments from data codewords."""
    bits = np.unpackbits(np.array(data, dtype=np.uint8))
    pos = 0
    out = bytearray()
    cb = tables.count_bits(version)

    def take(n):
        nonlocal pos
        if pos + n > len(bits):
            raise MalformedBitstream("bitstream ends inside a segment")
        v = 0
        for b in bits[pos:pos + n]:
            v = (v << 1) | int(b)
        pos += n
        return v

    while len(bits) - pos >= 4:
        mode = take(4)
        if mode == 0:
            break
        if mode != 0b0100:
            raise MalformedBitstream(f"unsupported mode {mode:04b}")
        n = take(cb)
        if pos + 8 * n > len(bits):
            raise MalformedBitstream("byte count exceeds capacity")
        out += np.packbits(bits[pos:pos + 8 * n]).tobytes()
        pos += 8 * n
    return bytes(out)


def decode_matrix(cells):
    """Decode a sampled module grid (bool, True = dark)."""
    cells = np.asarray(cells, dtype=bool)
    version = tables.version_for_side(cells.shape[0])
    ec, mask = read_format(cells)
    rows, cols = data_positions(version)
    bits = cells[rows, cols] ^ tables.mask_pattern(mask, cells.shape[0])[rows, cols]
    total = tables.TOTAL_CODEWORDS[version]
    codewords = np.packbits(bits[:8 * total]).tolist()
    data = []
    fixed = 0
    for block, ne in deinterleave(codewords, version, ec):
        d, n = rs_decode(block, ne)
        data += d
        fixed += n
    return parse_bytes(data, version), fixed


_STAGE = {NO_FINDERS: 0, FORMAT_UNDECODABLE: 1, UNCORRECTABLE: 2, MALFORMED: 3}


def decode_image(img):
    """Decode a gray or binary image into a DecodeResult.

    Each finder locator is tried in turn; when all fail, the reported failure
    is the one from the attempt that got furthest through the pipeline.
    """
    img = raster.as_image(img)
    if not raster.is_binary(img):
        try:
            img = raster.binarize(img)
        except raster.DegenerateHistogram:
            return DecodeResult(failure=NO_FINDERS)
    worst = None
    for locate in (_scan_finders, _match_finders):
        try:
            cells = sample_grid(img, locate(img))
            text, fixed = decode_matrix(cells)
        except DecodeError as e:
            reason = e.reason
        except UncorrectableBlock:
            reason = UNCORRECTABLE
        else:
            return DecodeResult(text=text, corrections=fixed)
        if worst is None or _STAGE[reason] > _STAGE[worst]:
            worst = reason
    return DecodeResult(failure=worst)


def detect_constant(result, constants):
    """Class index of the single constant found in the decoded text, else None."""
    if not result.ok:
        return None
    hits = [i for i, c in enumerate(constants)
            if (c.encode("utf-8") if isinstance(c, str) else c) in result.text]
    return hits[0] if len(hits) == 1 else None
