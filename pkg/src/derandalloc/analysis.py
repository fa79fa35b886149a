"""Predicted-bound calculators, evenness checks, bias oracles, aggregation.

The max-load theorems are asymptotic, so every "with high probability"
claim is realized as a statistical check with an explicit slack factor and
trial count; reports always carry {claim, bound, observed, slack, pass} so
the desk-scale slack is visible next to the asymptotic constant it stands
in for.  All logarithms are base 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .dist import BudgetExceededError, EpsBiasedSource, FullRandomSource
from .family import ALWAYS_GO_LEFT, HEAVY_LOAD, UNIFORM_GREEDY, FamilyParams
from .schemes import AllocationTrace
from .witness import phi

FAMILIES = ("paper", "full-random", "kwise")
SCHEMES = ("one-choice", "uniform-greedy", "always-go-left")


@dataclass(frozen=True)
class ExperimentPlan:
    """One experiment: scheme + family + sizes; derived symbols recomputed on demand."""

    scheme: str
    family: str
    n: int
    m: int
    d: int
    c: int
    trials: int
    master_seed: int
    a: Optional[float] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @property
    def witness_height(self) -> float:
        """l, the witness-tree height the union bound fixes."""
        return math.ceil(
            math.log(math.log2(self.m), self.d) + math.log(2 + 2 * self.c, self.d)
            + 5 + 3 * self.c
        ) if self.d >= 2 else math.ceil(math.log2(self.m))

    @property
    def leaf_threshold(self) -> float:
        """b, the leaf-height threshold 10d(m/n) + 1."""
        return 10 * self.d * (self.m / self.n) + 1

    @property
    def beta(self) -> float:
        """Evenness slack: (log n)^-0.2, or the heavy-load variant."""
        ln = math.log2(self.n)
        if self.scheme == "one-choice" and self.m >= self.n * ln:
            return 4 * (self.c + 2) * math.sqrt(ln) * math.sqrt(self.n / self.m)
        return ln ** -0.2


def predicted_uniform(n: int, d: int) -> float:
    """log log n / log d; the O(1) term is reported as separate slack."""
    if n < 4 or d < 2:
        raise ValueError("need n >= 4 and d >= 2")
    return math.log2(math.log2(n)) / math.log2(d)


def predicted_goleft(n: int, d: int) -> float:
    """log log n / (d log phi_d)."""
    if n < 4 or d < 2:
        raise ValueError("need n >= 4 and d >= 2")
    return math.log2(math.log2(n)) / (d * math.log2(phi(d)))


def predicted_heavy(n: int, m: int, C: float) -> float:
    """(m/n) * (1 + C * sqrt(log n) * sqrt(n/m)); heavy regime m >= n log n."""
    if m < n * math.log2(n):
        raise ValueError("heavy-load prediction needs m >= n * log2(n)")
    return (m / n) * (1 + C * math.sqrt(math.log2(n)) * math.sqrt(n / m))


def chernoff_tail(mu: float, delta: float) -> float:
    """k-wise Chernoff tail e^(-delta^2 mu / 3) for variables in [0, 1]."""
    if not 0 < delta <= 1:
        raise ValueError("delta must be in (0, 1]")
    return math.exp(-delta * delta * mu / 3)


@dataclass
class Report:
    """One checked claim; serializes to {claim, bound, observed, slack, pass}."""

    claim: str
    bound: float
    observed: float
    slack: float
    passed: bool
    details: dict = dc_field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "claim": self.claim,
            "bound": self.bound,
            "observed": self.observed,
            "slack": self.slack,
            "pass": self.passed,
            "details": self.details,
        }


def check_prefix_evenness(
    trace: AllocationTrace,
    cs,
    slack: float,
    prefixes: Optional[Sequence[np.ndarray]] = None,
) -> Report:
    """Max prefix-bin occupancy per choice function vs slack * m / #prefix-bins.

    The achieved dyadic suffix domain 2^b_(k+1) replaces the asymptotic
    log^3 n; both appear in the details.  Pure function of trace + seeds;
    `prefixes` may carry precomputed per-choice prefix values to avoid
    re-evaluation.
    """
    params: FamilyParams = cs.params
    m = trace.m
    prefix_bins = 1 << params.prefix_bits
    expected = m / prefix_bins
    bound = slack * expected
    per_choice = []
    violations = []
    for j, h in enumerate(cs.hashes):
        pref = prefixes[j] if prefixes is not None else h.prefix_block(trace.balls)
        occ = int(np.bincount(pref, minlength=prefix_bins).max()) if m else 0
        per_choice.append(occ)
        if occ > bound:
            violations.append({"choice": j, "occupancy": occ})
    observed = max(per_choice) if per_choice else 0
    return Report(
        claim="prefix-evenness: max balls per prefix bin <= slack * 2^b_suffix * m/n",
        bound=bound,
        observed=float(observed),
        slack=slack,
        passed=not violations,
        details={
            "per_choice_max": per_choice,
            "violations": violations,
            "prefix_bins": prefix_bins,
            "suffix_domain": 1 << params.suffix_bits,
            "log3_n": math.log2(params.n) ** 3,
            "asymptotic_constant_replaced": 1.01,
        },
    )


def check_level_evenness(
    level_outputs: Sequence[np.ndarray],
    params: FamilyParams,
    beta: Optional[float] = None,
) -> Report:
    """Per-level occupancy of h_1 o ... o h_i for i <= k vs the evenness bound.

    Light regimes use (1 + beta)^i with beta = (log n)^-0.2; heavy-load uses
    the product of (1 + beta/(k+2-j)^2) factors with
    beta = 4(c+2) sqrt(log n) sqrt(n/m).
    """
    ln = math.log2(params.n)
    heavy = params.mode == HEAVY_LOAD
    if beta is None:
        beta = (4 * (params.c + 2) * math.sqrt(ln) * math.sqrt(params.n / params.m)
                if heavy else ln ** -0.2)
    m = len(level_outputs[0]) if level_outputs else params.m
    rows = [{"level": 0, "bound": float(m), "observed": float(m), "pass": True}]
    acc = None
    bits_so_far = 0
    ok = True
    for i in range(1, params.k + 1):
        out = np.asarray(level_outputs[i - 1])
        acc = out if acc is None else ((acc << params.level_bits[i - 1]) | out)
        bits_so_far += params.level_bits[i - 1]
        observed = int(np.bincount(acc, minlength=1 << bits_so_far).max()) if m else 0
        expected = m / (1 << bits_so_far)
        if heavy:
            factor = 1.0
            for j in range(1, i + 1):
                factor *= 1 + beta / (params.k + 2 - j) ** 2
        else:
            factor = (1 + beta) ** i
        bound = factor * expected
        row_ok = observed <= bound
        ok = ok and row_ok
        rows.append({"level": i, "bound": bound, "observed": float(observed), "pass": row_ok})
    worst = max((r["observed"] / r["bound"] if r["bound"] else 0.0) for r in rows)
    return Report(
        claim="level-evenness: occupancy of h_1..h_i within (1+beta)-style factor",
        bound=1.0,
        observed=worst,
        slack=beta,
        passed=ok,
        details={"rows": rows, "beta": beta, "heavy": heavy},
    )


def exact_bias(source, balls: Optional[Sequence[int]] = None, budget: int = 100_000_000) -> float:
    """Max over nonzero GF(2) characters of |E[(-1)^<a, output>]|, exact.

    Position-indexed sources use their whole bit string; ball-indexed
    sources need an explicit ball list.  Refuses when seed-space times
    character-space exceeds the budget.  A FullRandomSource is treated as
    exactly uniform.
    """
    if isinstance(source, FullRandomSource):
        return 0.0
    if isinstance(source, EpsBiasedSource):
        nbits = source.n_positions

        def pack(src) -> int:
            bits = src.bits()
            v = 0
            for i in range(nbits):
                v |= int(bits[i]) << i
            return v
    else:
        if balls is None:
            raise ValueError("ball-indexed sources need an explicit ball list")
        balls = list(balls)
        nbits = len(balls) * source.out_bits

        def pack(src) -> int:
            v = 0
            for i, b in enumerate(balls):
                v |= src.eval(b) << (i * source.out_bits)
            return v

    n_seeds = 1 << source.seed_bits
    n_chars = (1 << nbits) - 1
    if n_seeds * (n_chars + 1) > budget:
        raise BudgetExceededError(
            f"{n_seeds} seeds x {n_chars} characters exceeds budget {budget}"
        )
    outs = np.fromiter(
        (pack(source.with_seed(s)) for s in range(n_seeds)), dtype=np.int64, count=n_seeds
    )
    worst = 0.0
    for alpha in range(1, n_chars + 1):
        par = np.bitwise_count(outs & alpha) & 1
        worst = max(worst, abs(float(np.mean(1.0 - 2.0 * par.astype(np.float64)))))
    return worst


def _percentile(sorted_vals: List[float], q: float) -> float:
    idx = max(0, math.ceil(q / 100 * len(sorted_vals)) - 1)
    return sorted_vals[idx]


@dataclass
class TrialStats:
    """Aggregate over per-trial rows; always recomputable from the rows."""

    rows: tuple
    mean: float
    min: float
    max: float
    p50: float
    p99: float
    witness: dict

    def to_json(self) -> dict:
        return {
            "trials": len(self.rows),
            "mean_max_load": self.mean,
            "min_max_load": self.min,
            "max_max_load": self.max,
            "p50_max_load": self.p50,
            "p99_max_load": self.p99,
            "witness": self.witness,
        }


def aggregate(rows: Sequence[dict]) -> TrialStats:
    """mean/min/max/p50/p99 of per-trial max loads plus witness diagnostics."""
    if not rows:
        raise ValueError("need at least one trial row")
    loads = sorted(float(r["max_load"]) for r in rows)
    colls = [r.get("collisions_of_max_witness") for r in rows]
    colls = [c for c in colls if c is not None]
    ok_flags = [r.get("witness_ok") for r in rows if r.get("witness_ok") is not None]
    witness = {
        "trees_built": len(colls),
        "max_collisions": max(colls) if colls else None,
        "total_collisions": sum(colls) if colls else None,
        "all_verified": all(ok_flags) if ok_flags else None,
    }
    return TrialStats(
        rows=tuple(rows),
        mean=sum(loads) / len(loads),
        min=loads[0],
        max=loads[-1],
        p50=_percentile(loads, 50),
        p99=_percentile(loads, 99),
        witness=witness,
    )
