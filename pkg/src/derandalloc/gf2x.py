"""Binary extension field arithmetic GF(2^w).

Field elements are plain ints whose binary digits are the coefficients of a
polynomial over GF(2), little-endian (bit i = coefficient of x^i).  A
:class:`FieldCtx` carries the width and the irreducible modulus; all element
operations close over ``w`` bits.

Default moduli come from a fixed table of standard low-weight irreducible
polynomials (minimal weight, then minimal value), one per width 1..64, so
outputs are bit-exact reproducible.  User-supplied moduli are accepted for
w <= 16 and validated by exhaustive trial division; wider fields always use
the table entry.

Conventions: a ^ 0 = 1 for every a, including a = 0.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np

# Minimal-weight irreducible polynomial per width (x^w | mid bits | 1).
# Verified by Rabin's irreducibility test; see tests.
IRREDUCIBLE: Dict[int, int] = {
    1: 0x3, 2: 0x7, 3: 0xB, 4: 0x13, 5: 0x25, 6: 0x43, 7: 0x83, 8: 0x11B,
    9: 0x203, 10: 0x409, 11: 0x805, 12: 0x1009, 13: 0x201B, 14: 0x4021,
    15: 0x8003, 16: 0x1002B, 17: 0x20009, 18: 0x40009, 19: 0x80027,
    20: 0x100009, 21: 0x200005, 22: 0x400003, 23: 0x800021, 24: 0x100001B,
    25: 0x2000009, 26: 0x400001B, 27: 0x8000027, 28: 0x10000003,
    29: 0x20000005, 30: 0x40000003, 31: 0x80000009, 32: 0x10000008D,
    33: 0x200000401, 34: 0x400000081, 35: 0x800000005, 36: 0x1000000201,
    37: 0x2000000053, 38: 0x4000000063, 39: 0x8000000011, 40: 0x10000000039,
    41: 0x20000000009, 42: 0x40000000081, 43: 0x80000000059,
    44: 0x100000000021, 45: 0x20000000001B, 46: 0x400000000003,
    47: 0x800000000021, 48: 0x100000000002D, 49: 0x2000000000201,
    50: 0x400000000001D, 51: 0x800000000004B, 52: 0x10000000000009,
    53: 0x20000000000047, 54: 0x40000000000201, 55: 0x80000000000081,
    56: 0x100000000000095, 57: 0x200000000000011, 58: 0x400000000080001,
    59: 0x800000000000095, 60: 0x1000000000000003, 61: 0x2000000000000027,
    62: 0x4000000020000001, 63: 0x8000000000000003, 64: 0x1000000000000001B,
}

# Widths for which log/exp tables may be materialized (2^w * 4 bytes each).
_TABLE_WIDTH_LIMIT = 24


def _poly_mod(a: int, b: int) -> int:
    """Remainder of polynomial a modulo b over GF(2)."""
    db = b.bit_length() - 1
    while a.bit_length() - 1 >= db and a:
        a ^= b << (a.bit_length() - 1 - db)
    return a


def is_irreducible(poly: int) -> bool:
    """Exhaustive trial division; intended for degrees up to 16."""
    w = poly.bit_length() - 1
    if w < 1:
        return False
    if w == 1:
        return poly in (0b10, 0b11)
    if poly & 1 == 0:  # divisible by x
        return False
    for div in range(2, 1 << (w // 2 + 1)):
        if div.bit_length() - 1 >= 1 and _poly_mod(poly, div) == 0:
            return False
    return True


class FieldCtx:
    """Context for GF(2^w): width, modulus, and cached tables.

    Instances are immutable in practice; obtain shared ones via :func:`field`.
    """

    def __init__(self, width: int, modulus: Optional[int] = None) -> None:
        if not 1 <= width <= 64:
            raise ValueError(f"unsupported field width {width}; need 1 <= w <= 64")
        table_mod = IRREDUCIBLE[width]
        if modulus is None:
            modulus = table_mod
        if modulus.bit_length() - 1 != width:
            raise ValueError(f"modulus degree {modulus.bit_length() - 1} != width {width}")
        if width <= 16:
            if not is_irreducible(modulus):
                raise ValueError(f"modulus 0x{modulus:X} is reducible")
        elif modulus != table_mod:
            raise ValueError(f"width {width} > 16 requires the built-in modulus 0x{table_mod:X}")
        self.width = width
        self.modulus = modulus
        self.order = 1 << width
        self.mask = self.order - 1
        self._log: Optional[np.ndarray] = None
        self._exp2: Optional[np.ndarray] = None

    def __repr__(self) -> str:
        return f"FieldCtx(width={self.width}, modulus=0x{self.modulus:X})"

    def check(self, a: int) -> int:
        if not 0 <= a < self.order:
            raise ValueError(f"element {a} out of range for GF(2^{self.width})")
        return a

    # -- scalar arithmetic ------------------------------------------------

    def add(self, a: int, b: int) -> int:
        """a + b (bitwise XOR)."""
        return a ^ b

    def mul(self, a: int, b: int) -> int:
        """Carry-less product of a and b reduced modulo the field modulus."""
        p = 0
        top = self.order
        mod = self.modulus
        while b:
            if b & 1:
                p ^= a
            b >>= 1
            a <<= 1
            if a & top:
                a ^= mod
        return p

    def pow(self, a: int, e: int) -> int:
        """a^e by square-and-multiply; a^0 = 1 for every a."""
        if e < 0:
            raise ValueError("negative exponent")
        r = 1
        while e:
            if e & 1:
                r = self.mul(r, a)
            a = self.mul(a, a)
            e >>= 1
        return r

    def inv(self, a: int) -> int:
        """Multiplicative inverse; raises ValueError for zero."""
        if a == 0:
            raise ValueError("zero has no inverse")
        return self.pow(a, self.order - 2)

    def poly_eval(self, coeffs: List[int], x: int) -> int:
        """Evaluate sum(coeffs[i] * x^i) by Horner's rule."""
        if not coeffs:
            raise ValueError("empty coefficient list")
        acc = 0
        for c in reversed(coeffs):
            acc = self.mul(acc, x) ^ c
        return acc

    def elements(self) -> range:
        return range(self.order)

    # -- discrete-log tables ----------------------------------------------

    def _find_generator(self) -> int:
        n = self.order - 1
        factors = []
        m, d = n, 2
        while d * d <= m:
            if m % d == 0:
                factors.append(d)
                while m % d == 0:
                    m //= d
            d += 1
        if m > 1:
            factors.append(m)
        for g in range(2, self.order):
            if all(self.pow(g, n // p) != 1 for p in factors):
                return g
        raise AssertionError("no generator found")  # unreachable for a field

    def log_exp_tables(self) -> Tuple[np.ndarray, np.ndarray]:
        """(log, exp2) numpy tables for vectorized multiplication.

        log[v] = discrete log of v base g for v > 0 (log[0] is a garbage
        sentinel; callers must mask zeros).  exp2 has length 2*(2^w - 1) - 1
        so that exp2[i + j] works without reducing i + j mod 2^w - 1.
        """
        if self._log is not None:
            return self._log, self._exp2
        if self.width > _TABLE_WIDTH_LIMIT:
            raise ValueError(f"log/exp tables unsupported for width {self.width}")
        n = self.order - 1
        g = self._find_generator()
        # baby-step/giant-step fill: exp[a + b*B] = baby[a] * giant[b]
        B = 1 << (self.width // 2)
        baby = np.empty(B, dtype=np.uint64)
        v = 1
        for i in range(B):
            baby[i] = v
            v = self.mul(v, g)
        g_big = self.pow(g, B)
        n_giant = (n + B - 1) // B
        giant = np.empty(n_giant, dtype=np.uint64)
        v = 1
        for i in range(n_giant):
            giant[i] = v
            v = self.mul(v, g_big)
        exp = _clmul_outer(baby, giant, self)[:n]
        log = np.zeros(self.order, dtype=np.int64)
        log[exp] = np.arange(n, dtype=np.int64)
        exp2 = np.empty(2 * n - 1, dtype=np.uint32)
        exp2[:n] = exp
        exp2[n:] = exp[: n - 1]  # exp2[n + j] = g^(n + j) = g^j
        self._log = log
        self._exp2 = exp2
        return log, exp2


def _clmul_outer(baby: np.ndarray, giant: np.ndarray, ctx: FieldCtx) -> np.ndarray:
    """exp table body: field products giant[b] * baby[a] laid out b-major."""
    w = ctx.width
    a = np.tile(baby, len(giant))
    b = np.repeat(giant, len(baby))
    acc = np.zeros_like(a)
    for i in range(w):
        bit = (b >> np.uint64(i)) & np.uint64(1)
        acc ^= (a << np.uint64(i)) * bit
    # reduce the (2w-1)-bit product back to w bits, top bit first
    mod = np.uint64(ctx.modulus)
    for i in range(2 * w - 2, w - 1, -1):
        bit = (acc >> np.uint64(i)) & np.uint64(1)
        acc ^= (mod << np.uint64(i - w)) * bit
    return acc


_FIELD_CACHE: Dict[Tuple[int, int], FieldCtx] = {}


def field(width: int, modulus: Optional[int] = None) -> FieldCtx:
    """Shared FieldCtx instance for (width, modulus); tables are cached on it."""
    key = (width, modulus if modulus is not None else IRREDUCIBLE[width])
    ctx = _FIELD_CACHE.get(key)
    if ctx is None:
        ctx = FieldCtx(width, modulus)
        _FIELD_CACHE[key] = ctx
    return ctx


# -- free-function aliases matching the operation names used elsewhere ------

def gf_add(a: int, b: int) -> int:
    return a ^ b


def gf_mul(a: int, b: int, ctx: FieldCtx) -> int:
    return ctx.mul(a, b)


def gf_pow(a: int, e: int, ctx: FieldCtx) -> int:
    return ctx.pow(a, e)


def poly_eval(coeffs: List[int], x: int, ctx: FieldCtx) -> int:
    return ctx.poly_eval(coeffs, x)
