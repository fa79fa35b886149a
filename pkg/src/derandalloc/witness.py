"""Witness trees: construction from traces, pruning, and edge verification.

A symmetric witness tree of height l for ball b is the complete d-ary tree
whose node u has as its i-th child the ball that was on top of u's i-th
candidate bin when u was inserted; child balls are strictly smaller than
their parents.  The asymmetric (Always-Go-Left) variant gives the j-th
child a subtree of height l - 1 when j >= i (the root's group) and height l
when j < i, yielding the f(l, i) size recurrence whose growth rate is the
root phi_d of phi^d = 1 + phi + ... + phi^(d-1).

Pruning merges duplicate balls: the deepest copy survives (ties to the
earliest BFS index), other copies lose their subtrees, and their parent
edges are redirected to the survivor as *collision* edges.  Trees are built
from trace-recorded witness pointers only, never by re-querying bins.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from .schemes import AllocationTrace


class WitnessError(ValueError):
    """Witness-tree precondition violation (missing pointer, bad height)."""


Edge = Tuple[int, int, int]  # (parent node, child slot, child node)


@dataclass
class WitnessTree:
    kind: str                 # "symmetric" | "asymmetric"
    d: int
    height: int               # the l parameter the tree was built with
    root_group: Optional[int]  # asymmetric only, 0-based
    balls: List[int]
    depth: List[int]
    parent: List[int]          # -1 at the root
    slot: List[int]            # child slot in the parent, -1 at the root
    children: List[List[Optional[int]]]

    @property
    def n_nodes(self) -> int:
        return len(self.balls)

    def edges(self) -> List[Edge]:
        out = []
        for p, kids in enumerate(self.children):
            for s, c in enumerate(kids):
                if c is not None:
                    out.append((p, s, c))
        return out

    def leaves(self) -> List[int]:
        return [i for i, kids in enumerate(self.children) if not kids]

    def structural_height(self) -> int:
        """Length of the shortest root-to-leaf path; equals `height` by construction."""
        return min(self.depth[i] for i in self.leaves())

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "d": self.d,
            "height": self.height,
            "root_group": self.root_group,
            "nodes": [{"ball": b, "depth": dp} for b, dp in zip(self.balls, self.depth)],
            "edges": [list(e) for e in self.edges()],
        }


@dataclass
class PrunedWitnessTree:
    kind: str
    d: int
    height: int                # inherited from the tree it was pruned from
    root_group: Optional[int]
    balls: List[int]           # distinct by construction
    depth: List[int]
    tree_edges: List[Edge]
    collision_edges: List[Edge]

    @property
    def collision_count(self) -> int:
        return len(self.collision_edges)

    @property
    def n_nodes(self) -> int:
        return len(self.balls)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "d": self.d,
            "height": self.height,
            "root_group": self.root_group,
            "nodes": [{"ball": b, "depth": dp} for b, dp in zip(self.balls, self.depth)],
            "tree_edges": [list(e) for e in self.tree_edges],
            "collision_edges": [list(e) for e in self.collision_edges],
            "collision_count": self.collision_count,
        }


def build_witness_tree(trace: AllocationTrace, ball: int, l: int) -> WitnessTree:
    """Witness tree of height l rooted at `ball`; needs height(ball) >= l + 1."""
    if l < 0:
        raise WitnessError("height parameter l must be >= 0")
    pos = trace.position_of(ball)
    h = int(trace.heights[pos])
    if h < l + 1:
        raise WitnessError(f"ball {ball} has height {h} < l + 1 = {l + 1}")
    asym = trace.scheme == "always-go-left"
    d = trace.d
    group_size = trace.n // d if asym else None
    root_group = int(trace.chosen[pos]) // group_size if asym else None

    balls: List[int] = []
    depth: List[int] = []
    parent: List[int] = []
    slot: List[int] = []
    children: List[List[Optional[int]]] = []
    # queue entries: (ball, depth, parent idx, slot, remaining height, group)
    queue = [(ball, 0, -1, -1, l, root_group)]
    while queue:
        b, dp, par, sl, rem, grp = queue.pop(0)
        idx = len(balls)
        balls.append(b)
        depth.append(dp)
        parent.append(par)
        slot.append(sl)
        if par >= 0:
            children[par][sl] = idx
        if rem == 0:
            children.append([])
            continue
        children.append([None] * d)
        bpos = trace.position_of(b)
        for j in range(d):
            w = int(trace.witness_ptrs[bpos, j])
            if w < 0:
                raise WitnessError(
                    f"missing witness pointer: ball {b} (depth {dp}, choice {j}) "
                    f"had an empty candidate bin"
                )
            if asym:
                child_rem = rem - 1 if j >= grp else rem
            else:
                child_rem = rem - 1
            queue.append((w, dp + 1, idx, j, child_rem, j if asym else None))
    return WitnessTree(
        kind="asymmetric" if asym else "symmetric",
        d=d,
        height=l,
        root_group=root_group,
        balls=balls,
        depth=depth,
        parent=parent,
        slot=slot,
        children=children,
    )


def prune(t: WitnessTree) -> PrunedWitnessTree:
    """Merge duplicate balls per the collision process (deterministic order).

    Duplicate groups are processed by the BFS position of their earliest
    live occurrence; the survivor is the deepest copy, ties to the earliest
    BFS index.  Removed copies lose their subtrees; their parent edges are
    redirected to the survivor as collision edges.  Collision edges whose
    endpoints die in later steps vanish with them.
    """
    n = t.n_nodes
    live = [True] * n
    collisions: List[Edge] = []

    def kill_subtree(root: int) -> None:
        stack = [root]
        while stack:
            v = stack.pop()
            live[v] = False
            stack.extend(c for c in t.children[v] if c is not None and live[c])

    while True:
        occurrences: Dict[int, List[int]] = {}
        dup_ball = None
        for idx in range(n):  # BFS order == construction order
            if not live[idx]:
                continue
            occurrences.setdefault(t.balls[idx], []).append(idx)
        for idx in range(n):
            if live[idx] and len(occurrences[t.balls[idx]]) > 1:
                dup_ball = t.balls[idx]
                break
        if dup_ball is None:
            break
        nodes = occurrences[dup_ball]
        survivor = sorted(nodes, key=lambda i: (-t.depth[i], i))[0]
        for r in nodes:
            if r == survivor:
                continue
            par = t.parent[r]
            kill_subtree(r)
            if par >= 0 and live[par]:
                collisions.append((par, t.slot[r], survivor))
        collisions = [(p, s, c) for p, s, c in collisions if live[p] and live[c]]

    index = {}
    balls, depth = [], []
    for i in range(n):
        if live[i]:
            index[i] = len(balls)
            balls.append(t.balls[i])
            depth.append(t.depth[i])
    tree_edges = [
        (index[p], s, index[c]) for p, s, c in t.edges() if live[p] and live[c]
    ]
    collision_edges = [(index[p], s, index[c]) for p, s, c in collisions]
    return PrunedWitnessTree(
        kind=t.kind,
        d=t.d,
        height=t.height,
        root_group=t.root_group,
        balls=balls,
        depth=depth,
        tree_edges=tree_edges,
        collision_edges=collision_edges,
    )


def verify_edges(t, cs) -> bool:
    """Check every edge's hash condition against the generating choice set.

    Symmetric trees: h^(i)(u) must land in {h^(1)(v), ..., h^(d)(v)};
    asymmetric trees: h^(i)(u) == h^(i)(v).  Collision edges are checked
    exactly like tree edges (the target carries the same ball as the
    removed copy).
    """
    if isinstance(t, PrunedWitnessTree):
        edges = list(t.tree_edges) + list(t.collision_edges)
    else:
        edges = t.edges()
    if not edges:
        return True
    d = t.d
    unique_balls = sorted({b for b in t.balls})
    arr = np.array(unique_balls, dtype=np.int64)
    vals = [cs.eval_choice(j, arr) for j in range(d)]
    table = {b: [int(vals[j][i]) for j in range(d)] for i, b in enumerate(unique_balls)}
    asym = t.kind == "asymmetric"
    for p, s, c in edges:
        hu = table[t.balls[p]][s]
        hv = table[t.balls[c]]
        if asym:
            if hu != hv[s]:
                return False
        elif hu not in hv:
            return False
    return True


@lru_cache(maxsize=None)
def asym_size(d: int, l: int, i: int) -> int:
    """f(l, i): node count of the full asymmetric witness tree (i is 1-based)."""
    if d < 2:
        raise WitnessError("asymmetric shapes need d >= 2")
    if l < 0 or not 1 <= i <= d:
        raise WitnessError(f"invalid (l={l}, i={i}) for d={d}")
    if l == 0:
        return 1
    return sum(asym_size(d, l, j) for j in range(1, i)) + \
        sum(asym_size(d, l - 1, j) for j in range(i, d + 1))


def phi(d: int, residual: float = 1e-12, max_iter: int = 200) -> float:
    """Root of phi^d = 1 + phi + ... + phi^(d-1) in (1, 2), by bisection."""
    if d < 2:
        raise WitnessError("phi is defined for d >= 2")

    def f(x: float) -> float:
        return x ** d - sum(x ** i for i in range(d))

    lo, hi = 1.0, 2.0
    mid = 1.5
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = f(mid)
        if abs(r) <= residual:
            break
        if r > 0:
            hi = mid
        else:
            lo = mid
    return mid


@dataclass(frozen=True)
class AsymShape:
    """f-table plus the empirical growth constants for one arity d."""

    d: int
    max_l: int
    phi_d: float
    c0: float  # fitted: min over tabulated sizes of g(n) / phi^n
    c1: float  # fitted: max

    @classmethod
    def build(cls, d: int, max_l: int = 20) -> "AsymShape":
        p = phi(d)
        c0, c1 = float("inf"), 0.0
        for l in range(1, max_l + 1):
            for i in range(1, d + 1):
                npos = (l - 1) * d + i
                ratio = asym_size(d, l, i) / p ** npos
                c0 = min(c0, ratio)
                c1 = max(c1, ratio)
        return cls(d=d, max_l=max_l, phi_d=p, c0=c0, c1=c1)

    def f(self, l: int, i: int) -> int:
        return asym_size(self.d, l, i)
