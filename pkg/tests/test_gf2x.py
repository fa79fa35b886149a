"""Field arithmetic: worked examples, exhaustive laws, and table validation."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derandalloc.gf2x import IRREDUCIBLE, FieldCtx, field, gf_add, gf_mul, gf_pow, is_irreducible, poly_eval


GF8 = field(3)   # x^3 + x + 1
GF16 = field(4)  # x^4 + x + 1


def _rabin_irreducible(f: int) -> bool:
    """Independent irreducibility check (Rabin's test) for table validation."""
    w = f.bit_length() - 1

    def pmod(a, b):
        db = b.bit_length() - 1
        while a and a.bit_length() - 1 >= db:
            a ^= b << (a.bit_length() - 1 - db)
        return a

    def pmulmod(a, b, m):
        r = 0
        while b:
            if b & 1:
                r ^= a
            b >>= 1
            a = pmod(a << 1, m)
        return r

    def x_to_2e(e, m):
        r = 0b10
        for _ in range(e):
            r = pmulmod(r, r, m)
        return r

    def pgcd(a, b):
        while b:
            a, b = b, pmod(a, b)
        return a

    if w == 1:
        return True
    if x_to_2e(w, f) != 0b10:
        return False
    primes, m, d = set(), w, 2
    while d * d <= m:
        while m % d == 0:
            primes.add(d)
            m //= d
        d += 1
    if m > 1:
        primes.add(m)
    return all(pgcd(x_to_2e(w // p, f) ^ 0b10, f) == 1 for p in primes)


def test_irreducible_table_is_irreducible():
    for w, f in IRREDUCIBLE.items():
        assert f.bit_length() - 1 == w
        assert _rabin_irreducible(f), f"width {w}"


def test_reducible_modulus_rejected():
    with pytest.raises(ValueError):
        FieldCtx(4, 0b10001)  # x^4+1 = (x+1)^4
    with pytest.raises(ValueError):
        FieldCtx(4, 0b10101)  # x^4+x^2+1 = (x^2+x+1)^2
    with pytest.raises(ValueError):
        FieldCtx(3, 0b10110)  # degree mismatch


def test_add_examples():
    for a in GF8.elements():
        assert gf_add(a, a) == 0
        assert gf_add(a, 0) == a
    assert gf_add(0b110, 0b011) == 0b101


def test_mul_examples():
    for a in GF8.elements():
        assert gf_mul(a, 1, GF8) == a
    assert gf_mul(0b010, 0b010, GF8) == 0b100
    assert gf_mul(0b110, 0b011, GF8) == 0b001


def test_mul_matches_log_antilog_oracle_gf8():
    # exhaustive log/antilog table for GF(2^3) built from repeated mul-by-x
    exp = [1]
    for _ in range(6):
        exp.append(GF8.mul(exp[-1], 0b010))
    log = {v: i for i, v in enumerate(exp)}
    assert len(log) == 7
    for a in range(1, 8):
        for b in range(1, 8):
            expected = exp[(log[a] + log[b]) % 7]
            assert GF8.mul(a, b) == expected


def test_pow_examples():
    for a in GF16.elements():
        assert gf_pow(a, 1, GF16) == a
        assert gf_pow(a, 0, GF16) == 1  # includes 0^0 = 1
    for w in (2, 3, 4, 5, 6, 7, 8):
        ctx = field(w)
        for a in range(1, ctx.order):
            assert ctx.pow(a, ctx.order - 1) == 1


def test_field_laws_exhaustive_small():
    for w in (1, 2, 3, 4):
        ctx = field(w)
        for a, b in itertools.product(ctx.elements(), repeat=2):
            assert ctx.mul(a, b) == ctx.mul(b, a)
        for a, b, c in itertools.product(ctx.elements(), repeat=3):
            assert ctx.mul(a, b ^ c) == ctx.mul(a, b) ^ ctx.mul(a, c)


def test_inverses_exhaustive():
    for w in (2, 3, 4, 5, 6, 7, 8):
        ctx = field(w)
        for a in range(1, ctx.order):
            assert ctx.mul(a, ctx.inv(a)) == 1


def test_poly_eval_examples():
    for x in GF8.elements():
        assert poly_eval([5], x, GF8) == 5
        assert poly_eval([0, 1], x, GF8) == x
    # 1 + x + x^2 at x = 0b010: 1 ^ 2 ^ 4 = 0b111
    assert poly_eval([1, 1, 1], 0b010, GF8) == 0b111
    with pytest.raises(ValueError):
        poly_eval([], 1, GF8)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_poly_eval_matches_naive_sum(data):
    w = data.draw(st.integers(2, 8))
    ctx = field(w)
    coeffs = data.draw(st.lists(st.integers(0, ctx.mask), min_size=1, max_size=6))
    x = data.draw(st.integers(0, ctx.mask))
    naive = 0
    for i, c in enumerate(coeffs):
        naive ^= ctx.mul(c, ctx.pow(x, i))
    assert ctx.poly_eval(coeffs, x) == naive


@pytest.mark.parametrize("w", [3, 8, 11, 16, 20])
def test_log_exp_tables_consistent(w):
    ctx = field(w)
    log, exp2 = ctx.log_exp_tables()
    n = ctx.order - 1
    assert len(exp2) == 2 * n - 1
    # spot products through the tables vs scalar mul
    rng = np.random.default_rng(w)
    for _ in range(200):
        a = int(rng.integers(1, ctx.order))
        b = int(rng.integers(1, ctx.order))
        assert int(exp2[log[a] + log[b]]) == ctx.mul(a, b)
    # exp is a bijection on nonzero elements
    assert len(np.unique(exp2[:n])) == n


def test_is_irreducible_trial_division():
    assert is_irreducible(0b1011)
    assert not is_irreducible(0b1001)  # x^3+1 = (x+1)(x^2+x+1)
    assert not is_irreducible(0b10101)
