"""Sequential allocation processes: 1-choice, Uniform-Greedy, Always-Go-Left.

Each run produces a full :class:`AllocationTrace`: per ball the candidate
bins, the chosen bin, the 1-based height, and the witness pointers (the top
ball of every candidate bin immediately before insertion) plus the final
bin state.  Witness pointers are recorded at insertion time because the
bins churn afterwards; witness-tree extraction depends on them.

Tie-breaking is the first minimum in choice order, which is both the
lowest-choice-index rule for Uniform-Greedy and the smallest-group rule for
Always-Go-Left (choice j targets group j).  A single run is strictly
sequential; distinct runs may execute concurrently.

The inner loop is JIT-compiled with numba for large runs; a pure-Python
kernel with identical semantics serves small runs and test cross-checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Dict, IO, Iterable, Optional

import numpy as np


class SchemeError(ValueError):
    """Precondition or invariant violation in an allocation request."""


@dataclass(frozen=True)
class GroupLayout:
    """Equal-size partition of [n] into d ordered groups; group j = [j*gs, (j+1)*gs)."""

    n: int
    d: int

    def __post_init__(self):
        if self.d < 2:
            raise SchemeError("always-go-left needs d >= 2 groups")
        if self.n % self.d:
            raise SchemeError(f"{self.d} groups cannot evenly split {self.n} bins")

    @property
    def group_size(self) -> int:
        return self.n // self.d

    def group_of(self, bin_index: int) -> int:
        return bin_index // self.group_size


@dataclass
class AllocationTrace:
    """Complete record of one allocation run (treated as immutable)."""

    scheme: str
    n: int
    d: int
    balls: np.ndarray         # insertion order
    choices: np.ndarray       # (m, d) candidate bins
    chosen: np.ndarray        # (m,)
    heights: np.ndarray       # (m,) 1-based position in the chosen bin
    witness_ptrs: np.ndarray  # (m, d) ball ids, -1 where the bin was empty
    loads: np.ndarray         # (n,) final loads
    top_ball: np.ndarray      # (n,) final top ball per bin, -1 where empty
    _pos: Optional[Dict[int, int]] = dc_field(default=None, repr=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.balls)

    def position_of(self, ball: int) -> int:
        if self._pos is None:
            self._pos = {int(b): i for i, b in enumerate(self.balls)}
        return self._pos[ball]

    def to_jsonl(self, fp: IO[str]) -> None:
        header = {"scheme": self.scheme, "n": self.n, "m": self.m, "d": self.d}
        fp.write(json.dumps(header) + "\n")
        for i in range(self.m):
            rec = {
                "ball": int(self.balls[i]),
                "choices": [int(c) for c in self.choices[i]],
                "chosen": int(self.chosen[i]),
                "height": int(self.heights[i]),
                "witness_ptrs": [None if w < 0 else int(w) for w in self.witness_ptrs[i]],
            }
            fp.write(json.dumps(rec) + "\n")

    @classmethod
    def from_jsonl(cls, fp: IO[str]) -> "AllocationTrace":
        header = json.loads(fp.readline())
        n, d, m = header["n"], header["d"], header["m"]
        balls = np.empty(m, dtype=np.int64)
        choices = np.empty((m, d), dtype=np.int64)
        chosen = np.empty(m, dtype=np.int64)
        heights = np.empty(m, dtype=np.int64)
        wptr = np.empty((m, d), dtype=np.int64)
        loads = np.zeros(n, dtype=np.int64)
        top = np.full(n, -1, dtype=np.int64)
        for i in range(m):
            rec = json.loads(fp.readline())
            balls[i] = rec["ball"]
            choices[i] = rec["choices"]
            chosen[i] = rec["chosen"]
            heights[i] = rec["height"]
            wptr[i] = [-1 if w is None else w for w in rec["witness_ptrs"]]
            loads[rec["chosen"]] += 1
            top[rec["chosen"]] = rec["ball"]
        return cls(header["scheme"], n, d, balls, choices, chosen, heights, wptr, loads, top)


def _alloc_kernel_py(choices, loads, top, heights, wptr, chosen):
    """First minimum in choice order wins; tops recorded before insertion."""
    m, d = choices.shape
    for u in range(m):
        best = choices[u, 0]
        bl = loads[best]
        for j in range(1, d):
            b = choices[u, j]
            if loads[b] < bl:
                best = b
                bl = loads[b]
        for j in range(d):
            wptr[u, j] = top[choices[u, j]]
        chosen[u] = best
        heights[u] = bl + 1
        loads[best] = bl + 1
        top[best] = u


_jit_kernel = None


def _get_kernel():
    global _jit_kernel
    if _jit_kernel is None:
        try:
            from numba import njit

            _jit_kernel = njit(cache=True)(_alloc_kernel_py)
        except ImportError:  # pragma: no cover - numba is a declared dependency
            _jit_kernel = _alloc_kernel_py
    return _jit_kernel


def _run_alloc(scheme: str, balls: np.ndarray, choices: np.ndarray, n: int) -> AllocationTrace:
    m, d = choices.shape
    loads = np.zeros(n, dtype=np.int64)
    top = np.full(n, -1, dtype=np.int64)  # ball positions during the loop
    heights = np.empty(m, dtype=np.int64)
    wptr_pos = np.empty((m, d), dtype=np.int64)
    chosen = np.empty(m, dtype=np.int64)
    kernel = _get_kernel() if m >= 4096 else _alloc_kernel_py
    kernel(np.ascontiguousarray(choices), loads, top, heights, wptr_pos, chosen)
    if m:
        wptr = np.where(wptr_pos >= 0, balls[np.clip(wptr_pos, 0, None)], np.int64(-1))
        top_ball = np.where(top >= 0, balls[np.clip(top, 0, None)], np.int64(-1))
    else:
        wptr = wptr_pos
        top_ball = top
    return AllocationTrace(scheme, n, d, balls, choices, chosen, heights, wptr, loads, top_ball)


def _infer_n(h, n: Optional[int]) -> int:
    if n is not None:
        return n
    if hasattr(h, "n"):
        return h.n
    if hasattr(h, "params"):
        return h.params.n
    if hasattr(h, "out_bits"):
        return 1 << h.out_bits
    raise SchemeError("cannot infer bin count; pass n explicitly")


def allocate_one_choice(balls: Iterable[int], h, n: Optional[int] = None) -> AllocationTrace:
    """Place each ball into h(ball); trace computed vectorized."""
    balls = np.asarray(balls, dtype=np.int64)
    m = len(balls)
    n = _infer_n(h, n)
    if hasattr(h, "eval_choice"):
        bins = np.asarray(h.eval_choice(0, balls), dtype=np.int64)
    else:
        bins = np.asarray(h.eval_block(balls), dtype=np.int64)
    if m == 0:
        return AllocationTrace("one-choice", n, 1, balls, bins.reshape(0, 1), bins,
                               np.empty(0, np.int64), np.empty((0, 1), np.int64),
                               np.zeros(n, np.int64), np.full(n, -1, np.int64))
    order = np.argsort(bins, kind="stable")
    sb = bins[order]
    new_run = np.empty(m, dtype=bool)
    new_run[0] = True
    new_run[1:] = sb[1:] != sb[:-1]
    run_starts = np.flatnonzero(new_run)
    run_id = np.cumsum(new_run) - 1
    pos_in_run = np.arange(m) - run_starts[run_id]
    heights = np.empty(m, dtype=np.int64)
    heights[order] = pos_in_run + 1
    prev_pos = np.empty(m, dtype=np.int64)
    prev_pos[0] = -1
    prev_pos[1:] = order[:-1]
    wptr_pos = np.where(pos_in_run > 0, prev_pos, np.int64(-1))
    wptr = np.full(m, -1, dtype=np.int64)
    wptr[order] = np.where(wptr_pos >= 0, balls[np.clip(wptr_pos, 0, None)], np.int64(-1))
    loads = np.bincount(bins, minlength=n).astype(np.int64)
    is_end = np.empty(m, dtype=bool)
    is_end[:-1] = new_run[1:]
    is_end[-1] = True
    top_ball = np.full(n, -1, dtype=np.int64)
    top_ball[sb[is_end]] = balls[order[is_end]]
    return AllocationTrace("one-choice", n, 1, balls, bins.reshape(m, 1), bins,
                           heights, wptr.reshape(m, 1), loads, top_ball)


def _gather_choices(balls: np.ndarray, cs) -> np.ndarray:
    cols = [np.asarray(cs.eval_choice(j, balls), dtype=np.int64) for j in range(cs.d)]
    return np.column_stack(cols) if cols else np.empty((len(balls), 0), dtype=np.int64)


def allocate_uniform_greedy(balls: Iterable[int], cs, n: Optional[int] = None) -> AllocationTrace:
    """Least-loaded of d candidate bins; ties to the lowest choice index."""
    if cs.d < 2:
        raise SchemeError("uniform-greedy needs d >= 2")
    balls = np.asarray(balls, dtype=np.int64)
    n = _infer_n(cs, n)
    return _run_alloc("uniform-greedy", balls, _gather_choices(balls, cs), n)


def allocate_always_go_left(balls: Iterable[int], cs, layout: GroupLayout) -> AllocationTrace:
    """Least-loaded candidate; among ties, the smallest-numbered group."""
    balls = np.asarray(balls, dtype=np.int64)
    # cs may span fewer bins than a non-divisible n (range-reduced mode);
    # the layout must cover exactly d groups of n//d bins
    if layout.d != cs.d or layout.n != cs.d * (_infer_n(cs, None) // cs.d):
        raise SchemeError("layout does not match the choice set")
    choices = _gather_choices(balls, cs)
    gs = layout.group_size
    for j in range(cs.d):
        col = choices[:, j]
        if col.size and (int(col.min()) < j * gs or int(col.max()) >= (j + 1) * gs):
            raise SchemeError(f"choice {j} produced a bin outside group {j}")
    return _run_alloc("always-go-left", balls, choices, layout.n)


def max_load(trace: AllocationTrace) -> int:
    return int(trace.loads.max(initial=0))


def load_histogram(trace: AllocationTrace) -> Dict[int, int]:
    vals, counts = np.unique(trace.loads, return_counts=True)
    return {int(v): int(c) for v, c in zip(vals, counts)}
