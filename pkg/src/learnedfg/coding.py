"""RS(255, 223) over GF(2^8) with a CRC-32 inside the data field.

Block layout (bit-exact)::

    payload (219 B) | CRC-32 of payload, big-endian (4 B) | RS parity (32 B)

The 255-byte codeword is sent MSB-first as 2040 binary channel symbols, bit
0 mapping to alphabet element 0.  The field uses the primitive polynomial
0x11D with generator alpha = 2, and the code generator polynomial has roots
alpha^0 .. alpha^31.
"""
from __future__ import annotations

import zlib
from typing import NamedTuple

import numpy as np

from .errors import DomainError

PRIM = 0x11D
N = 255
K = 223
NSYM = N - K
T_CORRECT = NSYM // 2
PAYLOAD = K - 4


def _build_tables():
    exp = np.zeros(512, dtype=np.int64)
    log = np.zeros(256, dtype=np.int64)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIM
    exp[255:510] = exp[:255]
    mul = np.zeros((256, 256), dtype=np.uint8)
    a = np.arange(1, 256)
    mul[1:, 1:] = exp[(log[a][:, None] + log[a][None, :]) % 255]
    return exp, log, mul


GF_EXP, GF_LOG, GF_MUL = _build_tables()


def gf_mul(a: int, b: int) -> int:
    return int(GF_MUL[a, b])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return int(GF_EXP[255 - GF_LOG[a]])


def gf_pow(a: int, n: int) -> int:
    if a == 0:
        return 0 if n else 1
    return int(GF_EXP[(GF_LOG[a] * n) % 255])


def _poly_mul(p, q):
    """Polynomial product, coefficients highest degree first."""
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] ^= gf_mul(a, b)
    return out


def generator_poly(nsym: int = NSYM) -> list[int]:
    g = [1]
    for k in range(nsym):
        g = _poly_mul(g, [1, int(GF_EXP[k])])
    return g


GENERATOR = generator_poly()


def _parity_basis() -> np.ndarray:
    """Row i: parity bytes of the data word with a single 1 at position i."""
    basis = np.zeros((K, NSYM), dtype=np.uint8)
    g = GENERATOR[1:]
    # parity of e_i equals x^(K-1-i) * x^NSYM mod g; build from the last position up
    reg = list(g)  # remainder of x^NSYM
    basis[K - 1] = reg
    for i in range(K - 2, -1, -1):
        fb = reg[0]
        reg = reg[1:] + [0]
        if fb:
            reg = [r ^ gf_mul(fb, c) for r, c in zip(reg, g)]
        basis[i] = reg
    return basis


_PARITY = _parity_basis()
# _SYN_POW[j, i] = alpha^(j * (N - 1 - i)): evaluates the codeword at alpha^j
_SYN_POW = GF_EXP[(np.arange(NSYM)[:, None] * (N - 1 - np.arange(N))[None, :]) % 255].astype(np.uint8)


def rs_encode(data) -> bytes:
    """Systematic encoding: data followed by 32 parity bytes."""
    d = np.frombuffer(bytes(data), dtype=np.uint8)
    if d.size != K:
        raise DomainError(f"RS data field must be {K} bytes, got {d.size}")
    parity = np.bitwise_xor.reduce(GF_MUL[d[:, None], _PARITY], axis=0)
    return bytes(d) + parity.tobytes()


def syndromes(codeword) -> np.ndarray:
    r = np.frombuffer(bytes(codeword), dtype=np.uint8)
    return np.bitwise_xor.reduce(GF_MUL[r[None, :], _SYN_POW], axis=1).astype(np.int64)


def _berlekamp_massey(synd) -> list[int]:
    """Error locator coefficients, lowest degree first."""
    c = [1] + [0] * NSYM
    b = [1] + [0] * NSYM
    length, shift, last = 0, 1, 1
    for n in range(NSYM):
        d = int(synd[n])
        for i in range(1, length + 1):
            d ^= gf_mul(c[i], int(synd[n - i]))
        if d == 0:
            shift += 1
            continue
        coef = gf_mul(d, gf_inv(last))
        prev = list(c)
        for i in range(NSYM + 1 - shift):
            c[i + shift] ^= gf_mul(coef, b[i])
        if 2 * length <= n:
            length, b, last, shift = n + 1 - length, prev, d, 1
        else:
            shift += 1
    return c[: length + 1]


class RsResult(NamedTuple):
    data: bytes
    n_errors: int  # corrected byte errors; -1 on failure
    ok: bool


def rs_decode(received) -> RsResult:
    """Correct up to 16 byte errors.

    Uses syndromes, Berlekamp-Massey, Chien search and Forney magnitudes.
    When the locator's degree and its root count disagree, or the repaired
    word is not a codeword, the received data bytes come back unchanged
    with ``ok=False``.
    """
    r = bytes(received)
    if len(r) != N:
        raise DomainError(f"RS codeword must be {N} bytes, got {len(r)}")
    synd = syndromes(r)
    if not synd.any():
        return RsResult(r[:K], 0, True)
    fail = RsResult(r[:K], -1, False)
    locator = _berlekamp_massey(synd)
    degree = len(locator) - 1
    if degree > T_CORRECT or locator[-1] == 0:
        return fail

    # Chien search: position i (power N-1-i) is in error when locator(alpha^-(N-1-i)) == 0
    lam = np.asarray(locator, dtype=np.int64)
    powers = (N - 1 - np.arange(N))
    inv_exp = (-(powers[:, None] * np.arange(degree + 1)[None, :])) % 255
    terms = GF_MUL[lam[None, :], GF_EXP[inv_exp]]
    positions = np.flatnonzero(np.bitwise_xor.reduce(terms, axis=1) == 0)
    if positions.size != degree:
        return fail

    # Forney with first consecutive root alpha^0: e = X * omega(X^-1) / lambda'(X^-1)
    omega = [0] * NSYM
    for i in range(NSYM):
        acc = 0
        for j in range(min(i, degree) + 1):
            acc ^= gf_mul(locator[j], int(synd[i - j]))
        omega[i] = acc
    fixed = bytearray(r)
    for pos in positions:
        x = int(GF_EXP[(N - 1 - pos) % 255])
        xinv = gf_inv(x)
        num = 0
        for i in reversed(omega):
            num = gf_mul(num, xinv) ^ i
        den = 0
        for k in range(1, degree + 1, 2):
            den ^= gf_mul(locator[k], gf_pow(xinv, k - 1))
        if den == 0:
            return fail
        fixed[pos] ^= gf_mul(gf_mul(x, num), gf_inv(den))
    if syndromes(fixed).any():
        return fail
    return RsResult(bytes(fixed[:K]), int(degree), True)


def crc32(data) -> bytes:
    """CRC-32 (IEEE 802.3, reflected) as 4 big-endian bytes."""
    return (zlib.crc32(bytes(data)) & 0xFFFFFFFF).to_bytes(4, "big")


def unpack_bits(data) -> np.ndarray:
    """Bytes to bits, MSB first within each byte."""
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8)).astype(np.int64)


def pack_bits(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.int64).reshape(-1)
    if bits.size % 8:
        raise DomainError(f"bit count {bits.size} is not a multiple of 8")
    if ((bits != 0) & (bits != 1)).any():
        raise DomainError("bits must be 0 or 1")
    return np.packbits(bits.astype(np.uint8)).tobytes()


def encode_block(payload) -> bytes:
    """Frame a 219-byte payload with its CRC and RS parity into 255 bytes."""
    payload = bytes(payload)
    if len(payload) != PAYLOAD:
        raise DomainError(f"payload must be {PAYLOAD} bytes, got {len(payload)}")
    return rs_encode(payload + crc32(payload))


class BlockResult(NamedTuple):
    data: bytes  # the 223-byte RS data field after decoding
    crc_ok: bool
    rs: RsResult

    @property
    def payload(self) -> bytes:
        return self.data[:PAYLOAD]


def decode_block(codeword) -> BlockResult:
    res = rs_decode(codeword)
    crc_ok = res.ok and crc32(res.data[:PAYLOAD]) == res.data[PAYLOAD:]
    return BlockResult(res.data, crc_ok, res)
