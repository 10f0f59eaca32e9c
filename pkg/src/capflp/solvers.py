"""Exact optimal solvers for both frameworks and an exhaustive oracle."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from capflp.errors import InfeasibleCapacities, InstanceTooLarge
from capflp.model import AgentProfile, EquiCap, Number, Placement, TwoAbundant, social_cost


class Objective(str, enum.Enum):
    SC = "sc"
    MC = "mc"

    @classmethod
    def parse(cls, value) -> "Objective":
        if isinstance(value, Objective):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class OptResult:
    placement: Placement
    cost: Number
    objective: Objective


def midpoint(a, b):
    """``(a + b) / 2`` that stays exact for ints and fractions."""
    s = a + b
    return Fraction(s, 2) if isinstance(s, int) else s / 2


def left_median(group: Sequence):
    """Lower median of a sorted group (index ``floor((len+1)/2)``, 1-based)."""
    return group[(len(group) + 1) // 2 - 1]


def _blocks(prof: AgentProfile, m: int, k: int):
    EquiCap(m, k).check(prof.n)
    return [prof.positions[j * k : (j + 1) * k] for j in range(m)]


def _block_matching(m: int, k: int) -> tuple:
    return tuple(j for j in range(m) for _ in range(k))


def _result(prof, y, pi, mu, objective) -> OptResult:
    placement = Placement(tuple(y), tuple(pi), tuple(mu))
    report = social_cost(prof, placement)
    return OptResult(placement, report.sc if objective is Objective.SC else report.mc, objective)


def optimal_sc_equicap(prof: AgentProfile, m: int, k: int) -> OptResult:
    """Each block of ``k`` consecutive agents shares a facility at its median."""
    y = [left_median(block) for block in _blocks(prof, m, k)]
    return _result(prof, y, range(m), _block_matching(m, k), Objective.SC)


def optimal_mc_equicap(prof: AgentProfile, m: int, k: int) -> OptResult:
    """Each block's facility sits halfway between its extreme agents."""
    y = [midpoint(block[0], block[-1]) for block in _blocks(prof, m, k)]
    return _result(prof, y, range(m), _block_matching(m, k), Objective.MC)


def _group_cost(group: Sequence, objective: Objective):
    if objective is Objective.SC:
        y = left_median(group)
        return y, sum((abs(x - y) for x in group), type(y)(0))
    y = midpoint(group[0], group[-1])
    return y, group[-1] - y


def _optimal_two(prof: AgentProfile, c1: int, c2: int, objective: Objective) -> OptResult:
    TwoAbundant(c1, c2).check(prof.n)
    xs, n, caps = prof.positions, prof.n, (c1, c2)
    best = None
    for s in range(n + 1):
        for a, b in ((0, 1), (1, 0)):
            if s > caps[a] or n - s > caps[b]:
                continue
            left, right = xs[:s], xs[s:]
            # an empty side keeps its facility on the boundary of the other group
            yl, cl = _group_cost(left, objective) if left else (xs[0], None)
            yr, cr = _group_cost(right, objective) if right else (xs[-1], None)
            parts = [c for c in (cl, cr) if c is not None]
            cost = sum(parts, type(parts[0])(0)) if objective is Objective.SC else max(parts)
            if best is None or cost < best[0]:
                best = (cost, (yl, yr), (a, b), s)
    cost, y, pi, s = best
    return _result(prof, y, pi, [0] * s + [1] * (n - s), objective)


def optimal_sc_two(prof: AgentProfile, c1: int, c2: int) -> OptResult:
    """Best contiguous split over both capacity orders, median per side."""
    return _optimal_two(prof, c1, c2, Objective.SC)


def optimal_mc_two(prof: AgentProfile, c1: int, c2: int) -> OptResult:
    """Best contiguous split over both capacity orders, midpoint per side."""
    return _optimal_two(prof, c1, c2, Objective.MC)


def optimal(prof: AgentProfile, cls, objective) -> OptResult:
    """Dispatch to the structured solver for ``cls`` and ``objective``."""
    objective = Objective.parse(objective)
    if isinstance(cls, EquiCap):
        solve = optimal_sc_equicap if objective is Objective.SC else optimal_mc_equicap
        return solve(prof, cls.m, cls.k)
    solve = optimal_sc_two if objective is Objective.SC else optimal_mc_two
    return solve(prof, cls.c1, cls.c2)


def brute_force_optimal(
    prof: AgentProfile, capacities: Sequence[int], objective, max_n: int = 8
) -> OptResult:
    """Exhaustive optimum over every capacity-feasible agent-to-facility assignment.

    No contiguity is assumed: all labelled partitions of the agents into
    groups of size at most ``capacities[j]`` are explored (via a memoised
    recursion over bitmasks).  For SC each group's facility is tried at every
    member position; for MC it sits at the group's midpoint.
    """
    objective = Objective.parse(objective)
    n, m = prof.n, len(capacities)
    if n > max_n:
        raise InstanceTooLarge(f"brute force is limited to {max_n} agents, got {n}")
    if sum(capacities) < n:
        raise InfeasibleCapacities("capacities cannot host every agent")
    xs = prof.positions
    full = (1 << n) - 1

    group_best = {}
    for mask in range(1, full + 1):
        members = [xs[i] for i in range(n) if mask >> i & 1]
        if objective is Objective.SC:
            group_best[mask] = min(
                ((sum(abs(x - y) for x in members), y) for y in members), key=lambda t: t[0]
            )
        else:
            lo, hi = min(members), max(members)
            y = midpoint(lo, hi)
            group_best[mask] = (hi - y, y)

    combine = (lambda a, b: a + b) if objective is Objective.SC else max

    @lru_cache(maxsize=None)
    def solve(j: int, remaining: int):
        if j == m:
            return (0, ()) if remaining == 0 else None
        best = None
        sub = remaining
        while True:
            if bin(sub).count("1") <= capacities[j]:
                rest = solve(j + 1, remaining & ~sub)
                if rest is not None:
                    cost = group_best[sub][0] if sub else 0
                    total = combine(cost, rest[0])
                    if best is None or total < best[0]:
                        best = (total, (sub,) + rest[1])
            if sub == 0:
                break
            sub = (sub - 1) & remaining
        return best

    found = solve(0, full)
    if found is None:
        raise InfeasibleCapacities("no feasible assignment")
    _, masks = found
    y, mu = [], [0] * n
    for j, mask in enumerate(masks):
        y.append(group_best[mask][1] if mask else xs[0])
        for i in range(n):
            if mask >> i & 1:
                mu[i] = j
    return _result(prof, y, range(m), mu, objective)
