"""Seeded randomness sources over the ball universe.

Four source kinds, all deterministic functions of (seed, ball):

* :class:`FullRandomSource` -- counter-mode PRNG baseline,
* :class:`KWiseSource` -- degree-(k-1) polynomial over GF(2^w), exactly
  k-wise independent,
* :class:`EpsBiasedSource` -- the AGHP "powering" construction: seed (x, y)
  in GF(2^m)^2, bit r = <x^r, y>, exact bias at most n_positions / 2^m,
* :class:`KWiseBiasedSource` -- a dual-BCH generator matrix applied to an
  EpsBiasedSource string; any k output coordinates are linearly independent
  forms of the inner string, so every ball subset of size <= k is k-wise
  delta-biased.

Balls are plain unsigned ints and must fit in the configured field width;
ids are never hashed down.  Sources are immutable after construction and
evaluation is pure, so concurrent use is safe.  Seeds round-trip through
hexadecimal strings; the bit width per source is documented on `seed_hex`.
"""

from __future__ import annotations

from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .gf2x import FieldCtx


class ConfigurationError(ValueError):
    """A source was configured outside its contract (ball range, widths)."""


class BudgetExceededError(RuntimeError):
    """An exact enumeration would exceed the configured budget."""


_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def mix64(z: int) -> int:
    """SplitMix64 finalizer; a high-quality 64-bit mixing permutation."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def seed_bits(master: int, tag: int, nbits: int) -> int:
    """Deterministic seed expansion: nbits pseudorandom bits for (master, tag).

    Fixed-offset SplitMix64 stream; used to derive independent sub-seeds
    from one 64-bit master seed.
    """
    state = mix64((master ^ mix64(tag)) & _MASK64)
    out = 0
    pos = 0
    counter = state
    while pos < nbits:
        counter = (counter + _GAMMA) & _MASK64
        out |= mix64(counter) << pos
        pos += 64
    return out & ((1 << nbits) - 1)


def _check_balls(balls: np.ndarray, limit: int) -> np.ndarray:
    balls = np.asarray(balls, dtype=np.int64)
    if balls.size and (int(balls.min()) < 0 or int(balls.max()) >= limit):
        raise ConfigurationError(f"ball id out of range [0, {limit})")
    return balls


class FullRandomSource:
    """Counter-mode PRNG baseline: out(ball) = mix64(seed-stream at ball).

    Output for a ball is independent of evaluation order, so parallel trials
    reproduce exactly.  Seed width: 64 bits.
    """

    def __init__(self, seed: int, out_bits: int) -> None:
        if not 1 <= out_bits <= 64:
            raise ConfigurationError("out_bits must be in 1..64")
        self.seed = seed & _MASK64
        self.out_bits = out_bits
        self._mask = (1 << out_bits) - 1

    @property
    def seed_hex(self) -> str:
        return f"{self.seed:016x}"

    def with_seed(self, seed: int) -> "FullRandomSource":
        return FullRandomSource(seed, self.out_bits)

    def eval(self, ball: int) -> int:
        return mix64(self.seed + (ball + 1) * _GAMMA) & self._mask

    def eval_block(self, balls: np.ndarray) -> np.ndarray:
        b = np.asarray(balls, dtype=np.uint64)
        z = np.uint64(self.seed) + (b + np.uint64(1)) * np.uint64(_GAMMA)
        return (_mix64_vec(z) & np.uint64(self._mask)).astype(np.int64)


class KWiseSource:
    """k-wise independent function via a random degree-(k-1) polynomial.

    The seed is the k coefficients, k*w bits packed little-endian.  The
    output is the low `out_bits` bits of the field evaluation, which keeps
    any k distinct balls jointly uniform.
    """

    def __init__(self, ctx: FieldCtx, k: int, out_bits: int, coeffs: Sequence[int]) -> None:
        if k < 1:
            raise ConfigurationError("k must be >= 1")
        if not 1 <= out_bits <= ctx.width:
            raise ConfigurationError(f"out_bits must be in 1..{ctx.width}")
        if len(coeffs) != k:
            raise ConfigurationError(f"need exactly k={k} coefficients")
        self.ctx = ctx
        self.k = k
        self.out_bits = out_bits
        self.coeffs = tuple(ctx.check(c) for c in coeffs)
        self._mask = (1 << out_bits) - 1

    @classmethod
    def from_seed(cls, ctx: FieldCtx, k: int, out_bits: int, seed: int) -> "KWiseSource":
        w = ctx.width
        coeffs = [(seed >> (i * w)) & ctx.mask for i in range(k)]
        return cls(ctx, k, out_bits, coeffs)

    @property
    def seed(self) -> int:
        w = self.ctx.width
        s = 0
        for i, c in enumerate(self.coeffs):
            s |= c << (i * w)
        return s

    @property
    def seed_bits(self) -> int:
        return self.k * self.ctx.width

    @property
    def seed_hex(self) -> str:
        return f"{self.seed:0{(self.seed_bits + 3) // 4}x}"

    def with_seed(self, seed: int) -> "KWiseSource":
        return KWiseSource.from_seed(self.ctx, self.k, self.out_bits, seed)

    def eval(self, ball: int) -> int:
        if not 0 <= ball < self.ctx.order:
            raise ConfigurationError(f"ball {ball} exceeds field capacity 2^{self.ctx.width}")
        return self.ctx.poly_eval(list(self.coeffs), ball) & self._mask

    def eval_block(self, balls: np.ndarray) -> np.ndarray:
        balls = _check_balls(balls, self.ctx.order)
        if self.ctx.width > 24 or balls.size < 64:
            return np.fromiter((self.eval(int(b)) for b in balls), dtype=np.int64, count=balls.size)
        log, exp2 = self.ctx.log_exp_tables()
        M = self.ctx.order - 1
        out = np.full(balls.size, self.coeffs[0], dtype=np.int64)
        if self.k > 1:
            lx = log[balls]
            acc = lx.copy()  # log(ball^i), garbage where ball == 0
            for i in range(1, self.k):
                c = self.coeffs[i]
                if c:
                    out ^= exp2[acc + log[c]].astype(np.int64)
                if i + 1 < self.k:
                    acc += lx
                    acc[acc >= M] -= M
            out[balls == 0] = self.coeffs[0]
        return out & self._mask


def kwise_eval(src: KWiseSource, ball: int) -> int:
    return src.eval(ball)


class EpsBiasedSource:
    """AGHP powering construction: bit(r) = <x^r, y> over GF(2).

    x and y live in GF(2^m); the exact bias over n_positions output bits is
    at most n_positions / 2^m.  Seed width: 2m bits (x in the low half).
    """

    def __init__(self, ctx: FieldCtx, x: int, y: int, n_positions: int) -> None:
        if n_positions < 1:
            raise ConfigurationError("n_positions must be >= 1")
        self.ctx = ctx
        self.x = ctx.check(x)
        self.y = ctx.check(y)
        self.n_positions = n_positions
        self._bits: Optional[np.ndarray] = None

    @classmethod
    def from_seed(cls, ctx: FieldCtx, n_positions: int, seed: int) -> "EpsBiasedSource":
        m = ctx.width
        return cls(ctx, seed & ctx.mask, (seed >> m) & ctx.mask, n_positions)

    @property
    def bias_bound(self) -> float:
        return self.n_positions / self.ctx.order

    @property
    def seed(self) -> int:
        return self.x | (self.y << self.ctx.width)

    @property
    def seed_bits(self) -> int:
        return 2 * self.ctx.width

    @property
    def seed_hex(self) -> str:
        return f"{self.seed:0{(self.seed_bits + 3) // 4}x}"

    def with_seed(self, seed: int) -> "EpsBiasedSource":
        return EpsBiasedSource.from_seed(self.ctx, self.n_positions, seed)

    def bits(self) -> np.ndarray:
        """All n_positions output bits as a uint8 array (cached)."""
        if self._bits is None:
            out = np.empty(self.n_positions, dtype=np.uint8)
            p = 1  # x^0
            x, y, mul = self.x, self.y, self.ctx.mul
            for r in range(self.n_positions):
                out[r] = (p & y).bit_count() & 1
                p = mul(p, x)
            self._bits = out
        return self._bits

    def bit(self, r: int) -> int:
        if not 0 <= r < self.n_positions:
            raise ConfigurationError(f"position {r} out of range [0, {self.n_positions})")
        return int(self.bits()[r])


def eps_bit(src: EpsBiasedSource, r: int) -> int:
    return src.bit(r)


def _linmap_table(bit_vals: Sequence[int], nbits: int, dtype) -> np.ndarray:
    """Table of a GF(2)-linear map on nbits-wide inputs, built by doubling."""
    t = np.zeros(1 << nbits, dtype=dtype)
    for b in range(nbits):
        t[1 << b: 2 << b] = t[: 1 << b] ^ dtype(bit_vals[b])
    return t


class KWiseBiasedSource:
    """k-wise delta-biased strings via a dual-BCH code over an inner source.

    Ball u indexes the matrix row (1, a_u, a_u^3, ..., a_u^(2t-1)) with
    t = ceil(k/2) and a_u = u as an element of `code_ctx`; any k rows are
    linearly independent.  Output bit j is the inner product of that row
    with block j of the inner epsilon-biased string -- blocks are disjoint,
    so the rank argument holds per output bit and any <= k balls form a
    k-wise delta-biased marginal with delta = the inner bias.
    """

    def __init__(self, k: int, inner: EpsBiasedSource, code_ctx: FieldCtx, out_bits: int) -> None:
        if k < 1:
            raise ConfigurationError("k must be >= 1")
        if out_bits < 1:
            raise ConfigurationError("out_bits must be >= 1")
        self.k = k
        self.t = (k + 1) // 2
        self.code_ctx = code_ctx
        self.out_bits = out_bits
        self.row_bits = 1 + self.t * code_ctx.width
        needed = out_bits * self.row_bits
        if inner.n_positions < needed:
            raise ConfigurationError(
                f"inner source has {inner.n_positions} positions; "
                f"k={k}, out_bits={out_bits} over GF(2^{code_ctx.width}) needs {needed}"
            )
        self.inner = inner
        self._tables: Optional[Tuple[int, List[np.ndarray], List[np.ndarray]]] = None

    @classmethod
    def positions_required(cls, k: int, code_width: int, out_bits: int) -> int:
        return out_bits * (1 + ((k + 1) // 2) * code_width)

    @property
    def bias_bound(self) -> float:
        return self.inner.bias_bound

    @property
    def seed_bits(self) -> int:
        return self.inner.seed_bits

    @property
    def seed_hex(self) -> str:
        return self.inner.seed_hex

    def with_seed(self, seed: int) -> "KWiseBiasedSource":
        return KWiseBiasedSource(self.k, self.inner.with_seed(seed), self.code_ctx, self.out_bits)

    def row(self, ball: int) -> int:
        """Generator-matrix row for a ball, packed into an int of row_bits."""
        ctx = self.code_ctx
        if not 0 <= ball < ctx.order:
            raise ConfigurationError(f"ball {ball} exceeds code field capacity 2^{ctx.width}")
        r = 1
        p = ball
        sq = ctx.mul(ball, ball)
        for j in range(self.t):
            r |= p << (1 + j * ctx.width)
            p = ctx.mul(p, sq)
        return r

    def eval(self, ball: int) -> int:
        row = self.row(ball)
        y = self.inner.bits()
        L = self.row_bits
        out = 0
        for j in range(self.out_bits):
            block = y[j * L: (j + 1) * L]
            acc = 0
            rr = row
            idx = 0
            while rr:
                if rr & 1:
                    acc ^= int(block[idx])
                rr >>= 1
                idx += 1
            out |= acc << j
        return out

    def _build_tables(self):
        """Per-power linear-map lookup tables over 16-bit input halves."""
        s = self.code_ctx.width
        L = self.row_bits
        y = self.inner.bits()
        base = 0
        for j in range(self.out_bits):
            base |= int(y[j * L]) << j
        dtype = np.uint16 if self.out_bits <= 16 else np.uint32
        lo_bits = min(s, 16)
        hi_bits = s - lo_bits
        lo_tabs, hi_tabs = [], []
        for tau in range(self.t):
            off = 1 + tau * s
            vals = [0] * s
            for b in range(s):
                v = 0
                for j in range(self.out_bits):
                    v |= int(y[j * L + off + b]) << j
                vals[b] = v
            lo_tabs.append(_linmap_table(vals[:lo_bits], lo_bits, dtype))
            hi_tabs.append(_linmap_table(vals[lo_bits:], hi_bits, dtype) if hi_bits else None)
        self._tables = (base, lo_tabs, hi_tabs)
        return self._tables

    def eval_block(self, balls: np.ndarray) -> np.ndarray:
        ctx = self.code_ctx
        balls = _check_balls(balls, ctx.order)
        if ctx.width > 24 or balls.size < 64:
            return np.fromiter((self.eval(int(b)) for b in balls), dtype=np.int64, count=balls.size)
        base, lo_tabs, hi_tabs = self._tables or self._build_tables()
        log, exp2 = ctx.log_exp_tables()
        M = ctx.order - 1
        la = log[balls]
        two = la + la
        two[two >= M] -= M
        elog = la.copy()
        out = np.full(balls.size, base, dtype=np.int64)
        for tau in range(self.t):
            p = exp2[elog].astype(np.int64)
            out ^= lo_tabs[tau][p & 0xFFFF]
            if hi_tabs[tau] is not None:
                out ^= hi_tabs[tau][p >> 16]
            if tau + 1 < self.t:
                elog += two
                elog[elog >= M] -= M
        out[balls == 0] = base
        return out


def kwise_biased_eval(src: KWiseBiasedSource, ball: int) -> int:
    return src.eval(ball)


DEFAULT_ENUMERATION_BUDGET = 200_000_000


def sd_to_uniform(source, balls: Iterable[int], budget: int = DEFAULT_ENUMERATION_BUDGET) -> float:
    """Exact L1 distance between the source's joint output on `balls` and uniform.

    Enumerates the full seed space; refuses (BudgetExceededError) when
    seed_space * |balls| exceeds the budget rather than sampling silently.
    A FullRandomSource is treated as exactly uniform.
    """
    balls = list(balls)
    if isinstance(source, FullRandomSource):
        return 0.0
    n_seeds = 1 << source.seed_bits
    if n_seeds * max(1, len(balls)) > budget:
        raise BudgetExceededError(
            f"enumeration cost {n_seeds} seeds x {len(balls)} balls exceeds budget {budget}"
        )
    p = 1 << source.out_bits
    n_outcomes = p ** len(balls)
    counts: dict = {}
    for seed in range(n_seeds):
        src = source.with_seed(seed)
        key = 0
        for b in balls:
            key = key * p + src.eval(b)
        counts[key] = counts.get(key, 0) + 1
    u = 1.0 / n_outcomes
    seen = 0.0
    total = 0.0
    for c in counts.values():
        total += abs(c / n_seeds - u)
        seen += u
    total += (1.0 - seen)  # outcomes never hit, each at distance u
    return total
