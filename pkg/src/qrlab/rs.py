"""GF(256) arithmetic and Reed-Solomon coding with the QR field conventions.

The field is GF(2)[x] modulo x^8 + x^4 + x^3 + x^2 + 1 (0x11D), generator
alpha = 2, and code generator roots alpha^0 .. alpha^(n-1).
"""

import numpy as np

PRIM = 0x11D

EXP = [0] * 512
LOG = [0] * 256


def _build_tables():
    x = 1
    for i in range(255):
        EXP[i] = x
        LOG[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIM
    for i in range(255, 512):
        EXP[i] = EXP[i - 255]


_build_tables()
_EXP_NP = np.array(EXP, dtype=np.int64)
_LOG_NP = np.array(LOG, dtype=np.int64)


class UncorrectableBlock(ValueError):
    """Raised when a Reed-Solomon block holds more errors than it can fix."""


def gf_add(a, b):
    return a ^ b


def gf_mul(a, b):
    if a == 0 or b == 0:
        return 0
    return EXP[LOG[a] + LOG[b]]


def gf_inv(a):
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return EXP[255 - LOG[a]]


def gf_div(a, b):
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(256)")
    if a == 0:
        return 0
    return EXP[LOG[a] + 255 - LOG[b]]


def gf_pow(a, n):
    if a == 0:
        return 0 if n else 1
    return EXP[(LOG[a] * n) % 255]


# Polynomials are lists of coefficients, highest degree first.

def poly_mul(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for j, b in enumerate(q):
        if b == 0:
            continue
        lb = LOG[b]
        for i, a in enumerate(p):
            if a:
                out[i + j] ^= EXP[LOG[a] + lb]
    return out


def poly_eval(p, x):
    y = 0
    if x == 0:
        return p[-1] if p else 0
    lx = LOG[x]
    for c in p:
        y = (EXP[LOG[y] + lx] if y else 0) ^ c
    return y


_GEN_CACHE = {}


def generator_poly(n):
    """prod_{i<n} (x - alpha^i), highest degree first."""
    g = _GEN_CACHE.get(n)
    if g is None:
        g = [1]
        for i in range(n):
            g = poly_mul(g, [1, EXP[i]])
        _GEN_CACHE[n] = g
    return g


_REM_CACHE = {}


def _unit_remainders(k, ecc_len):
    """Row j holds the logs of (x^(ecc_len + k - 1 - j) mod g), -1 for zero."""
    key = (k, ecc_len)
    table = _REM_CACHE.get(key)
    if table is None:
        gen = generator_poly(ecc_len)
        rows = []
        r = gen[1:]  # x^ecc_len mod g, highest degree first
        for _ in range(k):
            rows.append(r)
            top = r[0]
            r = r[1:] + [0]
            if top:
                r = [a ^ gf_mul(top, g) for a, g in zip(r, gen[1:])]
        rows.reverse()
        table = np.array([[LOG[c] if c else -1 for c in row] for row in rows], dtype=np.int64)
        _REM_CACHE[key] = table
    return table


def rs_parity(data, ecc_len):
    """Remainder of data * x^ecc_len divided by the generator polynomial."""
    if ecc_len == 0:
        return []
    d = np.asarray(data, dtype=np.int64)
    table = _unit_remainders(len(d), ecc_len)
    nz = np.flatnonzero(d)
    if nz.size == 0:
        return [0] * ecc_len
    logs = table[nz]
    terms = np.where(logs >= 0, _EXP_NP[_LOG_NP[d[nz]][:, None] + np.maximum(logs, 0)], 0)
    return np.bitwise_xor.reduce(terms, axis=0).tolist()


def rs_encode(data, ecc_len):
    """Return the systematic codeword ``data + parity`` as a list."""
    data = list(data)
    if ecc_len < 0:
        raise ValueError("ecc_len must be >= 0")
    if ecc_len and not data:
        raise ValueError("data must be non-empty when ecc_len > 0")
    return data + rs_parity(data, ecc_len)


def syndromes(codeword, ecc_len):
    """Codeword evaluated at alpha^0 .. alpha^(ecc_len - 1)."""
    c = np.asarray(codeword, dtype=np.int64)
    nz = np.flatnonzero(c)
    if ecc_len == 0 or nz.size == 0:
        return [0] * ecc_len
    power = len(c) - 1 - nz
    i = np.arange(ecc_len)[:, None]
    terms = _EXP_NP[(_LOG_NP[c[nz]][None, :] + i * power[None, :]) % 255]
    return np.bitwise_xor.reduce(terms, axis=1).tolist()


def _berlekamp_massey(synd):
    # Error locator sigma(x), lowest degree first: sigma[0] = 1.
    sigma = [1]
    prev = [1]
    length = 0
    shift = 1
    prev_disc = 1
    for n, s in enumerate(synd):
        disc = s
        for i in range(1, length + 1):
            if i < len(sigma) and sigma[i] and synd[n - i]:
                disc ^= gf_mul(sigma[i], synd[n - i])
        if disc == 0:
            shift += 1
            continue
        coef = gf_div(disc, prev_disc)
        new = sigma + [0] * max(0, len(prev) + shift - len(sigma))
        for i, p in enumerate(prev):
            new[i + shift] ^= gf_mul(coef, p)
        if 2 * length <= n:
            prev = sigma
            length = n + 1 - length
            prev_disc = disc
            shift = 1
        else:
            shift += 1
        sigma = new
    while len(sigma) > 1 and sigma[-1] == 0:
        sigma.pop()
    return sigma, length


def rs_decode(codeword, ecc_len):
    """Correct up to ecc_len // 2 symbol errors.

    Returns ``(data, n_corrected)``. Raises UncorrectableBlock when the error
    locator is inconsistent with its roots or the corrected word still has
    nonzero syndromes.
    """
    msg = list(codeword)
    n = len(msg)
    if n > 255:
        raise ValueError("block longer than 255 symbols")
    if ecc_len == 0:
        return msg, 0
    synd = syndromes(msg, ecc_len)
    if not any(synd):
        return msg[: n - ecc_len], 0

    sigma, nerr = _berlekamp_massey(synd)
    if len(sigma) - 1 != nerr or 2 * nerr > ecc_len:
        raise UncorrectableBlock("error locator degree exceeds capacity")

    # Chien search: position j (from the end) is in error when
    # sigma(alpha^-j) == 0.
    positions = []
    for j in range(n):
        x_inv = EXP[(255 - j) % 255]
        acc = 0
        for i, c in enumerate(sigma):
            if c:
                acc ^= EXP[LOG[c] + (LOG[x_inv] * i) % 255]
        if acc == 0:
            positions.append(j)
    if len(positions) != nerr:
        raise UncorrectableBlock("locator roots disagree with error count")

    # Forney: omega(x) = S(x) sigma(x) mod x^ecc_len, lowest degree first.
    omega = [0] * ecc_len
    for i, s in enumerate(synd):
        if s:
            for k, c in enumerate(sigma):
                if i + k < ecc_len and c:
                    omega[i + k] ^= gf_mul(s, c)
    # formal derivative of sigma keeps odd-degree terms
    for j in positions:
        xj = EXP[j]
        xj_inv = gf_inv(xj)
        num = 0
        for i, c in enumerate(omega):
            if c:
                num ^= gf_mul(c, gf_pow(xj_inv, i))
        den = 0
        for i in range(1, len(sigma), 2):
            if sigma[i]:
                den ^= gf_mul(sigma[i], gf_pow(xj_inv, i - 1))
        if den == 0:
            raise UncorrectableBlock("zero derivative in Forney step")
        # fcr = 0 gives magnitude X_j * omega / sigma'
        mag = gf_mul(xj, gf_div(num, den))
        msg[n - 1 - j] ^= mag

    if any(syndromes(msg, ecc_len)):
        raise UncorrectableBlock("residual syndromes after correction")
    return msg[: n - ecc_len], len(positions)
