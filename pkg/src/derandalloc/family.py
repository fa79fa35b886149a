"""The composed hash family h(x) = (h_1(x) o ... o h_k(x) o h_{k+1}(x)) XOR g(x).

The prefix levels h_1..h_k are k-wise delta_1-biased sources, the suffix
h_{k+1} is a k-wise delta_2-biased source, and g is a k_g-wise independent
polynomial hash.  `derive_params` computes the per-mode parameters
(uniform-greedy, always-go-left, heavy-load); the heavy-load variant drops g
entirely.

The theory-faithful bias exponents and wise-ness values are recorded in
FamilyParams verbatim, but are astronomically expensive to realize (the
suffix wants ~10^8-wise independence at n = 2^20), so the constructed
sources clamp wise-ness to `wiseness_cap` and the inner seed field to
`inner_width_cap` bits.  Both the recorded targets and the realized values
appear in the JSON serialization so reports can show the gap.

Everything here is immutable after construction and evaluation is pure.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field as dc_field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dist import EpsBiasedSource, FullRandomSource, KWiseBiasedSource, KWiseSource, seed_bits
from .gf2x import field

UNIFORM_GREEDY = "uniform-greedy"
ALWAYS_GO_LEFT = "always-go-left"
HEAVY_LOAD = "heavy-load"
MODES = (UNIFORM_GREEDY, ALWAYS_GO_LEFT, HEAVY_LOAD)

DEFAULT_WISENESS_CAP = 32
DEFAULT_INNER_WIDTH_CAP = 64


class ParameterError(ValueError):
    """Requested (n, m, d, c, mode) combination is outside the contract."""


@dataclass(frozen=True)
class LevelSpec:
    """Realized configuration of one level source."""

    out_bits: int
    wiseness: int
    t: int
    row_bits: int
    n_positions: int
    inner_width: int
    bias_log2: float  # log2 of the realized bias bound n_positions / 2^inner_width


@dataclass(frozen=True)
class FamilyParams:
    """Derived parameters of the composed family for one (n, m, d, c, mode)."""

    n: int
    m: int
    d: int
    c: int
    mode: str
    a: Optional[float]
    ball_bits: int
    k: int
    k_g: int
    level_bits: Tuple[int, ...]
    out_bits: int
    group_size: Optional[int]
    reduced_range: bool
    # theory-faithful targets
    level_wiseness_paper: int
    suffix_wiseness_paper: int
    delta1_log2_paper: float
    delta2_log2_paper: float
    # realized clamps
    level_wiseness: int
    suffix_wiseness: int
    inner_width_cap: int
    delta1_log2_target: float
    delta2_log2_target: float

    @property
    def prefix_bits(self) -> int:
        return sum(self.level_bits[:-1])

    @property
    def suffix_bits(self) -> int:
        return self.level_bits[-1]

    @property
    def g_width(self) -> int:
        return max(self.ball_bits, self.out_bits)

    def level_specs(self) -> List[LevelSpec]:
        specs = []
        for i, b in enumerate(self.level_bits, start=1):
            wise = self.level_wiseness if i <= self.k else self.suffix_wiseness
            target = self.delta1_log2_target if i <= self.k else self.delta2_log2_target
            t = (wise + 1) // 2
            row = 1 + t * self.ball_bits
            npos = b * row
            width = math.ceil(math.log2(npos) - target)
            width = max(8, min(self.inner_width_cap, width))
            specs.append(
                LevelSpec(
                    out_bits=b,
                    wiseness=wise,
                    t=t,
                    row_bits=row,
                    n_positions=npos,
                    inner_width=width,
                    bias_log2=math.log2(npos) - width,
                )
            )
        return specs

    def seed_accounting(self) -> dict:
        """Realized random bits consumed per choice function and in total."""
        per_level = [2 * s.inner_width for s in self.level_specs()]
        g_bits = self.k_g * self.g_width if self.k_g else 0
        per_choice = sum(per_level) + g_bits
        total = self.d * per_choice
        ln = math.log2(self.n)
        kappa = total / (ln * math.log2(ln)) if ln > 1 else float("inf")
        return {
            "per_level_seed_bits": per_level,
            "g_seed_bits": g_bits,
            "per_choice_seed_bits": per_choice,
            "total_seed_bits": total,
            "kappa": kappa,
        }

    def to_json(self) -> dict:
        out = asdict(self)
        out["level_bits"] = list(self.level_bits)
        out["prefix_bits"] = self.prefix_bits
        out["suffix_domain"] = 1 << self.suffix_bits
        out["log3_n"] = math.log2(self.n) ** 3
        out["levels_realized"] = [asdict(s) for s in self.level_specs()]
        out["seed_accounting"] = self.seed_accounting()
        return out


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


def derive_params(
    n: int,
    m: int,
    d: int,
    c: int,
    mode: str,
    *,
    a: Optional[float] = None,
    ball_bits: Optional[int] = None,
    k_g_override: Optional[int] = None,
    wiseness_cap: int = DEFAULT_WISENESS_CAP,
    inner_width_cap: int = DEFAULT_INNER_WIDTH_CAP,
    delta1_log2: Optional[float] = None,
    delta2_log2: Optional[float] = None,
) -> FamilyParams:
    """Derive FamilyParams for one regime; raises ParameterError when invalid."""
    if mode not in MODES:
        raise ParameterError(f"unknown mode {mode!r}")
    if not _is_pow2(n) or n < 4:
        raise ParameterError(f"n must be a power of two >= 4, got {n}")
    ln = int(math.log2(n))
    lln = math.log2(ln)
    if mode == HEAVY_LOAD:
        if d != 1:
            raise ParameterError("heavy-load mode is a 1-choice scheme (d = 1)")
        if a is None or a < 1:
            raise ParameterError("heavy-load mode needs exponent a >= 1")
        if m > n * ln ** a:
            raise ParameterError(f"heavy-load accepts m <= n * log2(n)^a = {n * ln ** a:.0f}")
        k = max(1, math.floor(math.log2(ln / (2 * a * lln))))
    else:
        if d < 2:
            raise ParameterError(f"{mode} needs d >= 2")
        if m > 64 * n:
            raise ParameterError("m <= 64 * n in uniform-greedy / always-go-left modes")
        k = max(1, math.floor(math.log2(ln / (3 * lln))))

    group_size = None
    reduced = False
    if mode == ALWAYS_GO_LEFT:
        group_size = n // d
        if group_size < 2:
            raise ParameterError("always-go-left needs n/d >= 2")
        if _is_pow2(d):
            w_total = ln - int(math.log2(d))
        else:
            reduced = True
            w_total = group_size.bit_length() + 8  # raw bits before range reduction
    else:
        w_total = ln

    level_bits = [math.ceil(w_total / 2 ** i) for i in range(1, k + 1)]
    suffix = w_total - sum(level_bits)
    if suffix < 1 or min(level_bits) < 1:
        raise ParameterError(f"n = {n} too small to split {w_total} bits over k = {k} levels")
    level_bits.append(suffix)

    if mode == HEAVY_LOAD:
        k_g = 0
    else:
        k_g = math.ceil(10 * c * (math.log(math.log2(m), d) + math.log(2 + 2 * c, d) + 5 + 3 * c))
        if k_g_override is not None:
            if k_g_override < 1:
                raise ParameterError("k_g override must be >= 1")
            k_g = k_g_override

    # witness-height and leaf-threshold symbols of the max-load proofs,
    # used only to record the theory-faithful suffix wise-ness
    if mode == HEAVY_LOAD:
        suffix_wise_paper = 16 * (c + 2) ** 2 * ln
    else:
        l_sym = math.ceil(math.log(math.log2(m), d) + math.log(2 + 2 * c, d) + 5 + 3 * c)
        b_sym = 10 * d * (m / n) + 1
        suffix_wise_paper = math.ceil(5 * b_sym * d ** (l_sym + 2))
    level_wise_paper = math.ceil(4 * ln ** 2)

    beta_appendix = 40 * (c + 2)
    d1_paper = -(9 * beta_appendix + c + 2) * ln
    d2_paper = -6 * (c + 2) * ln * lln

    if ball_bits is None:
        ball_bits = max(1, (max(m - 1, 1)).bit_length())
    if wiseness_cap < 1:
        raise ParameterError("wiseness cap must be >= 1")

    return FamilyParams(
        n=n,
        m=m,
        d=d,
        c=c,
        mode=mode,
        a=a,
        ball_bits=ball_bits,
        k=k,
        k_g=k_g,
        level_bits=tuple(level_bits),
        out_bits=w_total,
        group_size=group_size,
        reduced_range=reduced,
        level_wiseness_paper=level_wise_paper,
        suffix_wiseness_paper=suffix_wise_paper,
        delta1_log2_paper=d1_paper,
        delta2_log2_paper=d2_paper,
        level_wiseness=min(level_wise_paper, wiseness_cap),
        suffix_wiseness=min(suffix_wise_paper, wiseness_cap),
        inner_width_cap=inner_width_cap,
        delta1_log2_target=delta1_log2 if delta1_log2 is not None else d1_paper,
        delta2_log2_target=delta2_log2 if delta2_log2 is not None else d2_paper,
    )


def _range_reduce(raw: np.ndarray, size: int, raw_bits: int) -> np.ndarray:
    # fixed-point map of a raw_bits-wide value into [size); perturbs the
    # distribution by at most size / 2^raw_bits
    if raw_bits + size.bit_length() > 62:
        raise ParameterError("range reduction would overflow int64")
    return (raw * size) >> raw_bits


class ComposedHash:
    """One evaluable choice function h^(j) of the composed family."""

    def __init__(
        self,
        params: FamilyParams,
        j: int,
        levels: Sequence[KWiseBiasedSource],
        g: Optional[KWiseSource],
    ) -> None:
        if len(levels) != params.k + 1:
            raise ParameterError(f"need {params.k + 1} level sources, got {len(levels)}")
        if (g is None) != (params.k_g == 0):
            raise ParameterError("g source must be present iff k_g > 0")
        self.params = params
        self.j = j
        self.levels = tuple(levels)
        self.g = g

    def level_outputs(self, balls: np.ndarray) -> List[np.ndarray]:
        """Raw per-level outputs (no g, no offset); for evenness checks."""
        return [src.eval_block(balls) for src in self.levels]

    def full_eval(self, balls: np.ndarray):
        """(bins, raw, level outputs) in one pass over the sources."""
        outs = self.level_outputs(balls)
        raw = np.zeros(len(balls), dtype=np.int64)
        for b, out in zip(self.params.level_bits, outs):
            raw = (raw << b) | out
        if self.g is not None:
            raw ^= self.g.eval_block(balls)
        p = self.params
        if p.mode != ALWAYS_GO_LEFT:
            return raw, raw, outs
        local = _range_reduce(raw, p.group_size, p.out_bits) if p.reduced_range else raw
        return self.j * p.group_size + local, raw, outs

    def raw_block(self, balls: np.ndarray) -> np.ndarray:
        """Concatenated level outputs XOR g, before any group mapping."""
        return self.full_eval(balls)[1]

    def eval_block(self, balls: np.ndarray) -> np.ndarray:
        """Global bin index for each ball (group offset applied in Go-Left mode)."""
        return self.full_eval(balls)[0]

    def prefix_block(self, balls: np.ndarray) -> np.ndarray:
        """First prefix_bits of the raw hash value (suffix bits dropped)."""
        return self.raw_block(balls) >> self.params.suffix_bits

    def eval(self, ball: int) -> int:
        return int(self.eval_block(np.array([ball], dtype=np.int64))[0])

    def prefix(self, ball: int) -> int:
        return int(self.prefix_block(np.array([ball], dtype=np.int64))[0])

    def seed_hexes(self) -> dict:
        out = {f"level{i}": s.seed_hex for i, s in enumerate(self.levels, start=1)}
        if self.g is not None:
            out["g"] = self.g.seed_hex
        return out


def hash_eval(ch: ComposedHash, ball: int) -> int:
    return ch.eval(ball)


def prefix_eval(ch: ComposedHash, ball: int) -> int:
    return ch.prefix(ball)


class ChoiceSet:
    """d independently seeded ComposedHash instances (instance j serves group j)."""

    kind = "paper"

    def __init__(self, params: FamilyParams, hashes: Sequence[ComposedHash]) -> None:
        if len(hashes) != params.d:
            raise ParameterError("need one hash per choice")
        self.params = params
        self.hashes = tuple(hashes)

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def d(self) -> int:
        return self.params.d

    def eval_choice(self, j: int, balls: np.ndarray) -> np.ndarray:
        return self.hashes[j].eval_block(balls)

    def eval_choice_scalar(self, j: int, ball: int) -> int:
        return self.hashes[j].eval(ball)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params.to_json(),
            "seeds": [h.seed_hexes() for h in self.hashes],
        }


_TAG_LEVEL = 0x4C00  # | level index, then | (choice << 16)
_TAG_G = 0x6700


def make_choice_set(params: FamilyParams, master_seed: int) -> ChoiceSet:
    """Instantiate the family deterministically from a 64-bit master seed."""
    hashes = []
    for j in range(params.d):
        levels = []
        for i, spec in enumerate(params.level_specs(), start=1):
            tag = (j << 16) | _TAG_LEVEL | i
            inner = EpsBiasedSource.from_seed(
                field(spec.inner_width),
                spec.n_positions,
                seed_bits(master_seed, tag, 2 * spec.inner_width),
            )
            levels.append(
                KWiseBiasedSource(spec.wiseness, inner, field(params.ball_bits), spec.out_bits)
            )
        g = None
        if params.k_g:
            w = params.g_width
            g = KWiseSource.from_seed(
                field(w),
                params.k_g,
                params.out_bits,
                seed_bits(master_seed, (j << 16) | _TAG_G, params.k_g * w),
            )
        hashes.append(ComposedHash(params, j, levels, g))
    return ChoiceSet(params, hashes)


class RandomChoiceSet:
    """Baseline: d counter-mode PRNG functions standing in for full randomness."""

    kind = "full-random"

    def __init__(self, n: int, d: int, master_seed: int, mode: str = UNIFORM_GREEDY) -> None:
        if not _is_pow2(n):
            raise ParameterError("n must be a power of two")
        self.n = n
        self.d = d
        self.mode = mode
        self.group_size = n // d if mode == ALWAYS_GO_LEFT else None
        if mode == ALWAYS_GO_LEFT and self.group_size < 2:
            raise ParameterError("always-go-left needs n/d >= 2")
        self._raw_bits = 62 - n.bit_length()  # headroom for fixed-point reduction
        self._sources = []
        for j in range(d):
            seed = seed_bits(master_seed, (j << 16) | 0xF2, 64)
            if mode == ALWAYS_GO_LEFT:
                self._sources.append(FullRandomSource(seed, self._raw_bits))
            else:
                self._sources.append(FullRandomSource(seed, int(math.log2(n))))

    def eval_choice(self, j: int, balls: np.ndarray) -> np.ndarray:
        vals = self._sources[j].eval_block(balls)
        if self.mode != ALWAYS_GO_LEFT:
            return vals
        local = _range_reduce(vals, self.group_size, self._raw_bits)
        return j * self.group_size + local

    def eval_choice_scalar(self, j: int, ball: int) -> int:
        return int(self.eval_choice(j, np.array([ball], dtype=np.int64))[0])

    def describe(self) -> dict:
        return {"kind": self.kind, "seeds": [s.seed_hex for s in self._sources]}


class KWiseChoiceSet:
    """Baseline: d plain k_g-wise independent polynomial hashes (no levels)."""

    kind = "kwise"

    def __init__(self, params: FamilyParams, master_seed: int) -> None:
        if params.k_g < 1:
            raise ParameterError("kwise family needs k_g >= 1")
        self.params = params
        self.n = params.n
        self.d = params.d
        w = params.g_width
        self._sources = []
        for j in range(params.d):
            seed = seed_bits(master_seed, (j << 16) | 0xA3, params.k_g * w)
            self._sources.append(KWiseSource.from_seed(field(w), params.k_g, params.out_bits, seed))

    def eval_choice(self, j: int, balls: np.ndarray) -> np.ndarray:
        vals = self._sources[j].eval_block(balls)
        p = self.params
        if p.mode != ALWAYS_GO_LEFT:
            return vals
        local = _range_reduce(vals, p.group_size, p.out_bits) if p.reduced_range else vals
        return j * p.group_size + local

    def eval_choice_scalar(self, j: int, ball: int) -> int:
        return int(self.eval_choice(j, np.array([ball], dtype=np.int64))[0])

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "k_g": self.params.k_g,
            "seeds": [s.seed_hex for s in self._sources],
        }
