"""Search-based audits of truthfulness, strong group strategyproofness and anonymity.

A failed audit is a proof: it carries a concrete manipulation that is
re-checked with the exact scalar mechanism before being reported.  A passed
audit only means that no violation exists among the candidate misreports,
which sample every interval between other agents' reports plus the
breakpoints themselves.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from capflp.errors import MechanismPreconditionViolated, SearchBudgetExceeded
from capflp.model import AgentProfile, format_number, to_number

PASS_NOTE = "no violation found over candidate set"

_INT64_SAFE = 2**58


@dataclass(frozen=True)
class AuditConfig:
    epsilon_offsets: tuple = (Fraction(1, 1000), Fraction(1))
    outer_margin: Fraction | None = None
    max_coalition: int = 1
    exhaustive_candidates: bool = True
    max_evaluations: int = 50_000_000

    def __post_init__(self):
        offsets = tuple(Fraction(d) for d in self.epsilon_offsets)
        if not offsets or any(d <= 0 for d in offsets):
            raise ValueError("epsilon offsets must be positive")
        if self.max_coalition < 1:
            raise ValueError("max_coalition must be at least 1")
        if self.outer_margin is not None and Fraction(self.outer_margin) <= 0:
            raise ValueError("outer margin must be positive")
        object.__setattr__(self, "epsilon_offsets", offsets)


@dataclass(frozen=True)
class Witness:
    """A coalition, its reports and every member's cost before and after.

    Members whose report equals their true position are beneficiaries that
    did not need to lie.
    """

    agents: tuple
    true_positions: tuple
    misreports: tuple
    cost_before: tuple
    cost_after: tuple

    @property
    def deltas(self) -> tuple:
        return tuple(b - a for b, a in zip(self.cost_before, self.cost_after))

    def to_json(self) -> dict:
        f = lambda seq: [format_number(v) for v in seq]  # noqa: E731
        return {
            "agents": list(self.agents),
            "true_positions": f(self.true_positions),
            "misreports": f(self.misreports),
            "cost_before": f(self.cost_before),
            "cost_after": f(self.cost_after),
        }


@dataclass(frozen=True)
class PermutationWitness:
    permutation: tuple
    before: tuple
    after: tuple

    def to_json(self) -> dict:
        row = lambda t: [format_number(v) for v in t]  # noqa: E731
        return {
            "permutation": list(self.permutation),
            "before": [row(t) for t in self.before],
            "after": [row(t) for t in self.after],
        }


@dataclass(frozen=True)
class AuditVerdict:
    kind: str
    passed: bool
    witness: Witness | PermutationWitness | None = None
    evaluations: int = 0
    note: str = ""
    witnesses: tuple = field(default=(), repr=False)

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "passed": self.passed,
            "evaluations": self.evaluations,
            "note": self.note,
            "witness": None if self.witness is None else self.witness.to_json(),
        }
        return out


def _raw(reports) -> tuple:
    if isinstance(reports, AgentProfile):
        return reports.raw()
    return tuple(to_number(v) for v in reports)


def candidate_misreports(reports, i: int, cfg: AuditConfig = AuditConfig()) -> tuple:
    """Misreports worth trying for agent ``i`` (0-based).

    Every position, every midpoint of consecutive sorted positions, each
    position shifted by each offset, and one point far outside on either
    side.  The outer margin defaults to ten times the spread (or ten when all
    agents coincide).
    """
    raw = _raw(reports)
    if not 0 <= i < len(raw):
        raise IndexError(f"agent {i} outside 0..{len(raw) - 1}")
    xs = sorted(raw)
    spread = xs[-1] - xs[0]
    margin = Fraction(cfg.outer_margin) if cfg.outer_margin is not None else 10 * (spread or 1)
    points = set(xs)
    points.update((a + b) / 2 for a, b in zip(xs, xs[1:]))
    for x in xs:
        for d in cfg.epsilon_offsets:
            points.update((x - d, x + d))
    points.update((xs[0] - margin, xs[-1] + margin))
    return tuple(sorted(points))


# -- evaluation engine ----------------------------------------------------------


class _Engine:
    """Evaluates many report vectors against fixed true positions.

    Uses the mechanism's integer batch path when it has one and the scaled
    values fit comfortably in ``int64``; otherwise falls back to calling the
    mechanism once per row with exact rationals.
    """

    def __init__(self, mech: Callable, raw: tuple, extra_points: Sequence):
        self.mech = mech
        self.raw = raw
        self.free_choice = bool(getattr(mech, "free_choice", False))
        dens = [Fraction(v).denominator for v in itertools.chain(raw, extra_points)]
        self.scale = math.lcm(*dens) if dens else 1
        biggest = max(abs(Fraction(v)) for v in itertools.chain(raw, extra_points))
        self.batched = hasattr(mech, "batch") and biggest * self.scale * 8 < _INT64_SAFE
        if not self.batched:
            # exact rationals throughout; arbitrary mechanisms may produce any denominator
            self.scale = 1
        self.dtype = np.int64 if self.batched else object
        self.true = np.array([self.to_int(v) for v in raw], dtype=self.dtype)
        self.evaluations = 0

    def to_int(self, v):
        """Scaled value: an ``int`` on the batch path, a ``Fraction`` otherwise."""
        q = Fraction(v) * self.scale
        if not self.batched:
            return q
        assert q.denominator == 1
        return q.numerator

    def costs(self, rows: np.ndarray) -> np.ndarray:
        """Scaled costs of every raw agent (columns) for each report row."""
        self.evaluations += rows.shape[0]
        if self.batched:
            y, a = self.mech.batch(rows)
            if self.free_choice:
                return np.min(np.abs(self.true[None, :, None] - y[:, None, :]), axis=2)
            return np.abs(self.true[None, :] - np.take_along_axis(y, a, axis=1))
        out = np.empty(rows.shape, dtype=object)
        for b, row in enumerate(rows):
            outcome = self.mech(list(row))
            for i, t in enumerate(self.true):
                out[b, i] = outcome.cost(i, t)
        return out

    def unscale(self, v) -> Fraction:
        return Fraction(v) / self.scale


def exact_costs(mech: Callable, reports: Sequence, truth: Sequence) -> tuple:
    """Cost of every agent (true position ``truth[i]``) when ``reports`` is submitted."""
    outcome = mech(list(reports))
    return tuple(outcome.cost(i, t) for i, t in enumerate(truth))


def _precheck(mech, raw) -> tuple:
    check = getattr(mech, "check", None)
    try:
        if check is not None:
            check(len(raw))
        return exact_costs(mech, raw, raw)
    except MechanismPreconditionViolated:
        raise
    except ValueError as exc:
        raise MechanismPreconditionViolated(str(exc)) from exc


def verify_deviation(mech: Callable, reports, agents: Sequence, misreports: Sequence):
    """Exact check of one manipulation.

    Returns the :class:`Witness` if the coalition ``agents`` reporting
    ``misreports`` leaves every member weakly better off and at least one
    strictly better off, otherwise ``None``.
    """
    raw = _raw(reports)
    before = exact_costs(mech, raw, raw)
    dev = list(raw)
    for i, x in zip(agents, misreports):
        dev[i] = to_number(x)
    after = exact_costs(mech, dev, raw)
    members = tuple(agents)
    if all(after[i] <= before[i] for i in members) and any(after[i] < before[i] for i in members):
        return Witness(
            members,
            tuple(raw[i] for i in members),
            tuple(dev[i] for i in members),
            tuple(before[i] for i in members),
            tuple(after[i] for i in members),
        )
    return None


def _certified(mech, raw, witness: Witness) -> Witness:
    again = verify_deviation(mech, raw, witness.agents, witness.misreports)
    if again != witness:
        raise RuntimeError(f"witness failed exact re-check: {witness}")
    return witness


def check_truthful(mech: Callable, reports, cfg: AuditConfig = AuditConfig()) -> AuditVerdict:
    """Search every agent's candidate misreports for a strict unilateral gain."""
    raw = _raw(reports)
    before = _precheck(mech, raw)
    n = len(raw)
    cands = candidate_misreports(raw, 0, cfg)
    engine = _Engine(mech, raw, cands)
    cand_int = [engine.to_int(c) for c in cands]
    raw_int = [engine.to_int(v) for v in raw]
    owners = [(i, j) for i in range(n) for j, c in enumerate(cand_int) if c != raw_int[i]]
    if len(owners) > cfg.max_evaluations:
        raise SearchBudgetExceeded(f"{len(owners)} evaluations exceed the budget {cfg.max_evaluations}")
    if not owners:
        return AuditVerdict("truthful", True, note=PASS_NOTE)
    dtype = engine.dtype
    idx = np.array([o[0] for o in owners])
    rows = np.tile(np.array(raw_int, dtype=dtype), (len(owners), 1))
    rows[np.arange(len(owners)), idx] = np.array([cand_int[o[1]] for o in owners], dtype=dtype)
    after = engine.costs(rows)
    base = np.array([engine.to_int(b) for b in before], dtype=after.dtype)
    own_after = after[np.arange(len(owners)), idx]
    gains = np.nonzero(own_after < base[idx])[0]
    if len(gains) == 0:
        return AuditVerdict("truthful", True, evaluations=engine.evaluations, note=PASS_NOTE)
    i, j = owners[int(gains[0])]
    c = cands[j]
    witness = Witness((i,), (raw[i],), (c,), (before[i],), (engine.unscale(own_after[gains[0]]),))
    return AuditVerdict("truthful", False, _certified(mech, raw, witness), engine.evaluations)


def _gsp_budget(n: int, sizes: Sequence[int], s_max: int) -> int:
    total = 0
    for s in range(1, s_max + 1):
        for group in itertools.combinations(range(n), s):
            total += math.prod(sizes[i] for i in group)
    return total


def check_gsp(
    mech: Callable, reports, cfg: AuditConfig = AuditConfig(max_coalition=2), collect_all: bool = False
) -> AuditVerdict:
    """Search coalitions of up to ``cfg.max_coalition`` agents for a group manipulation.

    Deviating sets are enumerated by size, then lexicographically, and their
    misreport tuples in increasing order; the first valid manipulation wins.
    A deviating set smaller than the size cap may recruit one truthful
    beneficiary (the lowest-indexed agent who strictly gains), which is how a
    coalition can succeed when no liar is strictly better off.

    With ``exhaustive_candidates`` off, deviators whose truthful cost is zero
    are only allowed to move to reports that keep some facility where it
    was; this prunes the search but is not guaranteed complete.
    """
    raw = _raw(reports)
    before = _precheck(mech, raw)
    n = len(raw)
    s_max = min(cfg.max_coalition, n)
    cands = candidate_misreports(raw, 0, cfg)
    per_agent = [[c for c in cands if c != raw[i]] for i in range(n)]
    if not cfg.exhaustive_candidates:
        facilities = set(mech(list(raw)).facilities)
        for i in range(n):
            if before[i] == 0:
                per_agent[i] = [c for c in per_agent[i] if c in facilities or c == raw[i]]
    budget = _gsp_budget(n, [len(c) for c in per_agent], s_max)
    if budget > cfg.max_evaluations:
        raise SearchBudgetExceeded(f"{budget} evaluations exceed the budget {cfg.max_evaluations}")

    engine = _Engine(mech, raw, cands)
    base = np.array([engine.to_int(b) for b in before], dtype=engine.dtype)
    raw_int = [engine.to_int(v) for v in raw]
    found = []
    for s in range(1, s_max + 1):
        for group in itertools.combinations(range(n), s):
            options = [np.array([engine.to_int(c) for c in per_agent[i]], dtype=engine.dtype) for i in group]
            if any(len(o) == 0 for o in options):
                continue
            # ij-indexed meshgrid enumerates tuples in lexicographic order
            combos = np.stack(np.meshgrid(*options, indexing="ij"), axis=-1).reshape(-1, s)
            rows = np.tile(np.array(raw_int, dtype=engine.dtype), (combos.shape[0], 1))
            rows[:, list(group)] = combos
            after = engine.costs(rows)
            g = list(group)
            weak = np.all(after[:, g] <= base[g], axis=1)
            strict_members = np.any(after[:, g] < base[g], axis=1)
            outsiders = [j for j in range(n) if j not in group]
            if s < s_max and outsiders:
                helped = after[:, outsiders] < base[outsiders]
                strict_out = np.any(helped, axis=1)
            else:
                helped = None
                strict_out = np.zeros(rows.shape[0], dtype=bool)
            valid = np.nonzero(weak & (strict_members | strict_out))[0]
            for b in valid:
                members = list(group)
                if not strict_members[b]:
                    members.append(outsiders[int(np.argmax(helped[b]))])
                members.sort()
                witness = Witness(
                    tuple(members),
                    tuple(raw[j] for j in members),
                    tuple(engine.unscale(rows[b, j]) for j in members),
                    tuple(before[j] for j in members),
                    tuple(engine.unscale(after[b, j]) for j in members),
                )
                found.append(_certified(mech, raw, witness))
                if not collect_all:
                    return AuditVerdict("gsp", False, found[0], engine.evaluations)
    if found:
        return AuditVerdict("gsp", False, found[0], engine.evaluations, witnesses=tuple(found))
    return AuditVerdict("gsp", True, evaluations=engine.evaluations, note=PASS_NOTE)


def _triples(mech, reports: Sequence) -> tuple:
    outcome = mech(list(reports))
    out = []
    for i, x in enumerate(reports):
        if outcome.free_choice:
            y = min(outcome.facilities, key=lambda f: (abs(x - f), f))
        else:
            y = outcome.facilities[outcome.assignment[i]]
        out.append((x, y, abs(x - y)))
    return tuple(sorted(out))


def check_anonymous(mech: Callable, reports, trials: int = 20, seed: int = 0) -> AuditVerdict:
    """Permute the reports and compare the multiset of (position, facility, cost)."""
    raw = _raw(reports)
    _precheck(mech, raw)
    rng = random.Random(seed)
    base = _triples(mech, raw)
    idx = list(range(len(raw)))
    for _ in range(trials):
        rng.shuffle(idx)
        perm = tuple(idx)
        got = _triples(mech, [raw[j] for j in perm])
        if got != base:
            return AuditVerdict("anonymous", False, PermutationWitness(perm, base, got), trials)
    return AuditVerdict("anonymous", True, evaluations=trials, note=PASS_NOTE)
