"""Instances, placements and the two cost objectives.

Positions are exact :class:`~fractions.Fraction` values by default.  Passing
``exact=False`` to :func:`normalize` keeps plain floats instead, which is only
meant for bulk random sweeps; comparisons in that mode go through
:func:`approx_le` with a ``1e-9`` tolerance.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence, Union

from capflp.errors import (
    EmptyInstance,
    IndexOutOfRange,
    InfeasibleCapacities,
    InstanceFormatError,
    InvalidPlacement,
    NonFiniteValue,
    NotDivisible,
)

Number = Union[int, Fraction, float]

FLOAT_TOL = 1e-9


def to_number(value, exact: bool = True) -> Number:
    """Coerce ``value`` to a position.

    Strings are parsed exactly (``"2.5"``, ``"1/3"``); floats are converted to
    the exact rational they encode when ``exact`` is set.
    """
    if isinstance(value, bool):
        raise InstanceFormatError(f"not a position: {value!r}")
    if isinstance(value, str):
        try:
            q = Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            if value.strip().lower() in {"nan", "inf", "+inf", "-inf", "infinity", "-infinity"}:
                raise NonFiniteValue(f"non-finite position {value!r}") from exc
            raise InstanceFormatError(f"cannot parse position {value!r}") from exc
        return q if exact else float(q)
    if isinstance(value, Rational):
        return Fraction(value) if exact else float(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise NonFiniteValue(f"non-finite position {value!r}")
        return Fraction(value) if exact else value
    try:
        f = float(value)
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"not a position: {value!r}") from exc
    if not math.isfinite(f):
        raise NonFiniteValue(f"non-finite position {value!r}")
    return Fraction(value) if exact else f


def approx_le(a: Number, b: Number) -> bool:
    """``a <= b``, exact for rationals and within ``FLOAT_TOL`` for floats."""
    if isinstance(a, float) or isinstance(b, float):
        return a <= b + FLOAT_TOL * max(1.0, abs(a), abs(b))
    return a <= b


@dataclass(frozen=True)
class AgentProfile:
    """Agent positions sorted left to right.

    ``ranks[i]`` is the sorted position of the agent that appeared at index
    ``i`` of the raw input, so audits can perturb one original agent and
    find it again after re-sorting.
    """

    positions: tuple
    ranks: tuple = ()

    def __post_init__(self):
        if not self.positions:
            raise EmptyInstance("an instance needs at least one agent")
        if not self.ranks:
            object.__setattr__(self, "ranks", tuple(range(len(self.positions))))
        if len(self.ranks) != len(self.positions):
            raise ValueError("rank map length differs from the number of agents")
        if any(a > b for a, b in zip(self.positions, self.positions[1:])):
            raise ValueError("positions must be sorted non-decreasingly")

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def order(self) -> tuple:
        """Raw index of the agent at each sorted rank (inverse of ``ranks``)."""
        inv = [0] * self.n
        for raw, rank in enumerate(self.ranks):
            inv[rank] = raw
        return tuple(inv)

    def __getitem__(self, i: int):
        return self.positions[i]

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return iter(self.positions)

    def x(self, i: int):
        """1-based access, matching the usual x_1 <= ... <= x_n notation."""
        if not 1 <= i <= self.n:
            raise IndexOutOfRange(f"x_{i} is outside 1..{self.n}")
        return self.positions[i - 1]

    def raw(self) -> tuple:
        """Positions in original input order."""
        return tuple(self.positions[r] for r in self.ranks)

    def map(self, a, b) -> "AgentProfile":
        """Image under ``x -> a*x + b`` (``a > 0`` keeps the order)."""
        if a <= 0:
            raise ValueError("affine map must be increasing")
        return AgentProfile(tuple(a * p + b for p in self.positions), self.ranks)


def normalize(raw_positions: Iterable, exact: bool = True) -> AgentProfile:
    """Sort raw positions, breaking ties by input index."""
    values = [to_number(v, exact) for v in raw_positions]
    if not values:
        raise EmptyInstance("an instance needs at least one agent")
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0] * len(values)
    for rank, raw in enumerate(order):
        ranks[raw] = rank
    return AgentProfile(tuple(values[i] for i in order), tuple(ranks))


def profile(*positions, exact: bool = True) -> AgentProfile:
    """Shorthand: ``profile(0, 0, "1/3", 1)``."""
    return normalize(positions, exact=exact)


@dataclass(frozen=True)
class EquiCap:
    """``m`` facilities of capacity ``k`` each, serving exactly ``m*k`` agents."""

    m: int
    k: int

    def __post_init__(self):
        if self.m < 2 or self.k < 1:
            raise InfeasibleCapacities(f"need m >= 2 and k >= 1, got m={self.m}, k={self.k}")

    @property
    def n(self) -> int:
        return self.m * self.k

    def capacities(self) -> tuple:
        return (self.k,) * self.m

    def check(self, n: int) -> None:
        if n != self.m * self.k:
            raise NotDivisible(f"{n} agents cannot fill {self.m} facilities of capacity {self.k}")

    def to_json(self) -> dict:
        return {"type": "equicap", "m": self.m, "k": self.k}


@dataclass(frozen=True)
class TwoAbundant:
    """Two facilities, each able to take at least half of the agents."""

    c1: int
    c2: int

    def __post_init__(self):
        if self.c1 < 1 or self.c2 < 1:
            raise InfeasibleCapacities(f"capacities must be positive, got ({self.c1}, {self.c2})")

    @property
    def m(self) -> int:
        return 2

    @property
    def c_bar(self) -> int:
        return max(self.c1, self.c2)

    def capacities(self) -> tuple:
        return (self.c1, self.c2)

    def check(self, n: int) -> None:
        lo, hi = n // 2, n - 1
        if n < 2 or not (lo <= self.c1 <= hi and lo <= self.c2 <= hi):
            raise InfeasibleCapacities(
                f"capacities ({self.c1}, {self.c2}) must lie in [{lo}, {hi}] for n={n}"
            )
        if self.c1 + self.c2 < n:
            raise InfeasibleCapacities(f"total capacity {self.c1 + self.c2} < {n} agents")

    def to_json(self) -> dict:
        return {"type": "two", "c1": self.c1, "c2": self.c2}


ProblemClass = Union[EquiCap, TwoAbundant]


@dataclass(frozen=True)
class Placement:
    """Facility positions ``y``, capacity permutation ``pi`` and matching ``mu``.

    ``pi[j]`` is the index (into the class capacities) of the capacity given
    to the facility at ``y[j]``.  ``mu[r]`` is the facility serving the agent
    of sorted rank ``r``.
    """

    y: tuple
    pi: tuple
    mu: tuple

    @property
    def m(self) -> int:
        return len(self.y)

    def loads(self) -> tuple:
        counts = [0] * len(self.y)
        for j in self.mu:
            counts[j] += 1
        return tuple(counts)

    def assigned(self, rank: int):
        """Position of the facility serving the agent of sorted rank ``rank``."""
        return self.y[self.mu[rank]]


@dataclass(frozen=True)
class CostReport:
    per_agent: tuple
    sc: Number
    mc: Number


def cluster(prof: AgentProfile, j: int, k: int) -> tuple:
    """The ``j``-th block of ``k`` consecutive sorted positions (``j`` is 1-based)."""
    if k < 1 or prof.n % k:
        raise NotDivisible(f"{prof.n} agents do not split into blocks of {k}")
    if not 1 <= j <= prof.n // k:
        raise IndexOutOfRange(f"block {j} is outside 1..{prof.n // k}")
    return prof.positions[(j - 1) * k : j * k]


def social_cost(prof: AgentProfile, placement: Placement) -> CostReport:
    """Per-agent distances plus their sum (SC) and maximum (MC)."""
    if len(placement.mu) != prof.n:
        raise InvalidPlacement(f"matching covers {len(placement.mu)} agents, expected {prof.n}")
    if any(not 0 <= j < placement.m for j in placement.mu):
        raise InvalidPlacement("matching refers to a facility that does not exist")
    costs = tuple(abs(x - placement.y[j]) for x, j in zip(prof.positions, placement.mu))
    return CostReport(costs, sum(costs, type(costs[0])(0)), max(costs))


def maximum_cost(prof: AgentProfile, placement: Placement) -> Number:
    return social_cost(prof, placement).mc


def validate_placement(cls: ProblemClass, prof: AgentProfile, placement: Placement) -> list:
    """Return a list of human-readable violations; empty means feasible."""
    problems = []
    caps = cls.capacities()
    if placement.m != len(caps):
        problems.append(f"expected {len(caps)} facilities, got {placement.m}")
    if sorted(placement.pi) != list(range(len(caps))):
        problems.append(f"pi={placement.pi} is not a permutation of the capacity indices")
    if len(placement.mu) != prof.n:
        problems.append(f"matching covers {len(placement.mu)} agents, expected {prof.n}")
    bad = [r for r, j in enumerate(placement.mu) if not 0 <= j < placement.m]
    if bad:
        problems.append(f"agents {bad} matched to a non-existent facility")
    if problems:
        return problems
    for j, load in enumerate(placement.loads()):
        cap = caps[placement.pi[j]]
        if load > cap:
            problems.append(f"facility {j}: load {load} > capacity {cap}")
    return problems


# -- instance files ---------------------------------------------------------


def format_number(q: Number) -> str:
    """Rationals as ``"p/q"`` (or ``"p"``), floats via ``repr``."""
    if isinstance(q, float):
        return repr(q)
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def class_from_json(obj: dict) -> ProblemClass:
    try:
        kind = obj["type"]
        if kind == "equicap":
            return EquiCap(int(obj["m"]), int(obj["k"]))
        if kind == "two":
            return TwoAbundant(int(obj["c1"]), int(obj["c2"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceFormatError(f"bad class description {obj!r}") from exc
    raise InstanceFormatError(f"unknown class type {obj.get('type')!r}")


def parse_instance(text: str) -> tuple:
    """Parse instance JSON into ``(raw positions, problem class or None)``.

    Numbers are read through :class:`Fraction` so that ``0.1`` stays one tenth.
    """
    try:
        obj = json.loads(text, parse_float=Fraction, parse_int=int)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict) or "positions" not in obj:
        raise InstanceFormatError('instance must be an object with a "positions" list')
    raw = obj["positions"]
    if not isinstance(raw, list):
        raise InstanceFormatError('"positions" must be a list')
    positions = [to_number(v) for v in raw]
    if not positions:
        raise EmptyInstance("an instance needs at least one agent")
    cls = class_from_json(obj["class"]) if obj.get("class") is not None else None
    return positions, cls


def dump_instance(positions: Sequence, cls: ProblemClass | None = None) -> str:
    obj = {"positions": [format_number(p) for p in positions]}
    if cls is not None:
        obj["class"] = cls.to_json()
    return json.dumps(obj, sort_keys=True)


def instance_hash(positions: Sequence, cls: ProblemClass | None = None) -> str:
    """Content hash of the canonical instance encoding."""
    return hashlib.sha256(dump_instance(positions, cls).encode()).hexdigest()[:16]
