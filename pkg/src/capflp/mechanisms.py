"""Truthful mechanisms for the two capacitated frameworks.

Every mechanism reads the sorted profile only and returns a
:class:`~capflp.model.Placement` whose matching is indexed by sorted rank.
:func:`bind` wraps a mechanism and its problem class into a callable on raw
report vectors, which is the form the audits consume.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from capflp import _batch
from capflp.errors import (
    InfeasibleCapacities,
    MechanismPreconditionViolated,
    NotDivisible,
    WrongParity,
)
from capflp.model import AgentProfile, EquiCap, Placement, ProblemClass, TwoAbundant, normalize

log = logging.getLogger(__name__)

NAMES = ("pmm", "pipm", "eig", "ic", "ig", "im", "percentile")


# -- equi-capacitated, no spare capacity -------------------------------------


def _check_equicap(prof: AgentProfile, m: int, k: int) -> None:
    if m < 2 or k < 1:
        raise NotDivisible(f"need m >= 2 and k >= 1, got m={m}, k={k}")
    if prof.n != m * k:
        raise NotDivisible(f"{prof.n} agents cannot fill {m} facilities of capacity {k}")


def _propagate(xs: Sequence, k: int, y: list, left_seed: int, right_seed: int) -> None:
    """Fill the facilities outside ``[left_seed, right_seed]`` (1-based, in place).

    Moving right, a facility is placed at the reflection of its predecessor
    across that block's rightmost agent, but never left of its own block's
    leftmost agent; moving left is the mirror image.
    """
    m = len(y)
    x = lambda i: xs[i - 1]  # noqa: E731
    for l in range(right_seed, m):
        d = abs(y[l - 1] - x(k * l))
        y[l] = max(x(k * l + 1), x(k * l) + d)
    for l in range(left_seed, 1, -1):
        d = abs(y[l - 1] - x(k * (l - 1) + 1))
        y[l - 2] = min(x(k * (l - 1)), x(k * (l - 1) + 1) - d)


def _blocks(m: int, k: int) -> tuple:
    return tuple(j for j in range(m) for _ in range(k))


def pmm(prof: AgentProfile, m: int, k: int) -> Placement:
    """Propagating median: seed the central block's median, then propagate."""
    _check_equicap(prof, m, k)
    xs = prof.positions
    r = (m + 1) // 2
    y = [None] * m
    y[r - 1] = xs[k * (r - 1) + (k + 1) // 2 - 1]
    _propagate(xs, k, y, r, r)
    return Placement(tuple(y), tuple(range(m)), _blocks(m, k))


def pipm(prof: AgentProfile, m: int, k: int) -> Placement:
    """Propagating inner point: seed the two innermost block endpoints."""
    _check_equicap(prof, m, k)
    xs = prof.positions
    r = m // 2
    y = [None] * m
    y[r - 1] = xs[r * k - 1]
    y[r] = xs[r * k]
    _propagate(xs, k, y, r, r + 1)
    return Placement(tuple(y), tuple(range(m)), _blocks(m, k))


# -- two facilities with abundant capacity ------------------------------------


def split_closest(xs: Sequence, y1, y2, cap_left: int, cap_right: int) -> tuple:
    """Match each agent to the nearer of ``y1 <= y2`` (ties go left).

    Agents left of the midpoint form a prefix of the sorted profile, so the
    matching is fully described by the size of that prefix.  When both
    facilities coincide the left one is filled to capacity by rank.  A prefix
    that breaks a capacity is clipped and logged as ``CapacityOverflow``.
    """
    n = len(xs)
    if y1 == y2:
        count = min(cap_left, n)
    else:
        count = sum(1 for x in xs if x + x <= y1 + y2)
    clipped = min(max(count, n - cap_right), cap_left)
    if clipped != count and y1 != y2:
        log.warning(
            "CapacityOverflow: %d agents closer to y1=%s (capacity %d), %d to y2=%s (capacity %d)",
            count, y1, cap_left, n - count, y2, cap_right,
        )
    return (0,) * clipped + (1,) * (n - clipped)


def _big_index(c1: int, c2: int) -> int:
    return 0 if c1 >= c2 else 1


def eig(prof: AgentProfile, c1: int, c2: int) -> Placement:
    """Extended InnerGap.

    Facilities go to the ``(n - cbar)``-th and ``(cbar + 1)``-th agents.  The
    larger capacity sits on the left facility iff the agents of rank
    ``n - cbar .. cbar + 1`` lying in ``[y1, z]`` are at least as many as
    those in ``(z, y2]``, ``z`` being the midpoint.
    """
    TwoAbundant(c1, c2).check(prof.n)
    xs, n = prof.positions, prof.n
    cbar = max(c1, c2)
    y1, y2 = xs[n - cbar - 1], xs[cbar]
    window = xs[n - cbar - 1 : cbar + 1]
    n1 = sum(1 for x in window if x + x <= y1 + y2)
    n2 = len(window) - n1
    big = _big_index(c1, c2)
    pi = (big, 1 - big) if n1 >= n2 else (1 - big, big)
    caps = (c1, c2)
    mu = split_closest(xs, y1, y2, caps[pi[0]], caps[pi[1]])
    return Placement((y1, y2), pi, mu)


def ic(prof: AgentProfile, k: int) -> Placement:
    """InnerChoice for ``n = 2k + 1`` agents and capacities ``(k + 1, k)``.

    The capacity ``k + 1`` goes to ``x_k`` when the gap ``x_{k+1} - x_k`` is
    no larger than ``x_{k+2} - x_{k+1}``, otherwise to ``x_{k+2}``.
    """
    if k < 1 or prof.n != 2 * k + 1:
        raise WrongParity(f"IC requires odd n = 2k+1; got n={prof.n}, k={k}")
    xs = prof.positions
    d1 = abs(xs[k] - xs[k - 1])
    d2 = abs(xs[k + 1] - xs[k])
    pi = (0, 1) if d1 <= d2 else (1, 0)
    caps = (k + 1, k)
    y1, y2 = xs[k - 1], xs[k + 1]
    return Placement((y1, y2), pi, split_closest(xs, y1, y2, caps[pi[0]], caps[pi[1]]))


def ig(prof: AgentProfile, k: int) -> Placement:
    """InnerGap: two facilities of equal capacity ``k >= n/2``."""
    return eig(prof, k, k)


def im(prof: AgentProfile, k: int) -> Placement:
    """InnerPoint for ``n = 2k`` agents: facilities at ``x_k`` and ``x_{k+1}``."""
    if k < 1 or prof.n != 2 * k:
        raise WrongParity(f"IM requires even n = 2k; got n={prof.n}, k={k}")
    xs = prof.positions
    y1, y2 = xs[k - 1], xs[k]
    return Placement((y1, y2), (0, 1), split_closest(xs, y1, y2, k, k))


# -- uncapacitated percentile mechanism ---------------------------------------


def percentile_indices(n: int, p: Sequence) -> tuple:
    """0-based ranks ``floor((n - 1) * p_t)`` selected by a percentile vector."""
    return tuple(math.floor(Fraction(q) * (n - 1)) for q in p)


def _check_percentiles(p: Sequence) -> tuple:
    p = tuple(Fraction(q) for q in p)
    if not p or any(not 0 <= q <= 1 for q in p) or any(a >= b for a, b in zip(p, p[1:])):
        raise MechanismPreconditionViolated(f"percentiles must increase strictly in [0, 1]: {p}")
    return p


def percentile(prof: AgentProfile, p: Sequence) -> Placement:
    """Facilities at fixed order statistics; agents go to the nearest one.

    There are no capacities: ``pi`` is the identity and the matching may load
    any facility arbitrarily.
    """
    p = _check_percentiles(p)
    xs = prof.positions
    y = tuple(xs[i] for i in percentile_indices(prof.n, p))
    mu = tuple(min(range(len(y)), key=lambda t: (abs(x - y[t]), t)) for x in xs)
    return Placement(y, tuple(range(len(y))), mu)


# -- identities and binding ---------------------------------------------------


@dataclass(frozen=True)
class MechanismId:
    name: str
    percentiles: tuple = ()

    def __post_init__(self):
        if self.name not in NAMES:
            raise MechanismPreconditionViolated(f"unknown mechanism {self.name!r}")
        if self.name == "percentile":
            object.__setattr__(self, "percentiles", _check_percentiles(self.percentiles))
        elif self.percentiles:
            raise MechanismPreconditionViolated(f"{self.name} takes no percentile vector")

    @classmethod
    def parse(cls, text) -> "MechanismId":
        """``"pmm"``, ``"eig"``, ``"percentile:0.25,0.75"``..."""
        if isinstance(text, MechanismId):
            return text
        name, _, rest = str(text).strip().lower().partition(":")
        if name == "percentile":
            try:
                p = tuple(Fraction(v) for v in rest.split(",") if v.strip())
            except ValueError as exc:
                raise MechanismPreconditionViolated(f"bad percentile vector {rest!r}") from exc
            return cls(name, p)
        if rest:
            raise MechanismPreconditionViolated(f"{name} takes no parameters")
        return cls(name)

    def __str__(self) -> str:
        if self.name == "percentile":
            return "percentile:" + ",".join(str(float(q)) for q in self.percentiles)
        return self.name

    @property
    def capacitated(self) -> bool:
        return self.name != "percentile"


PMM, PIPM, EIG, IC, IG, IM = (MechanismId(n) for n in NAMES[:6])


@dataclass(frozen=True)
class Outcome:
    """What a mechanism tells each raw agent.

    ``assignment[i]`` is the facility serving raw agent ``i``.  With
    ``free_choice`` (uncapacitated mechanisms) an agent simply uses whichever
    facility is nearest to its true position.
    """

    facilities: tuple
    assignment: tuple
    free_choice: bool = False

    def cost(self, i: int, true_position):
        if self.free_choice:
            return min(abs(true_position - y) for y in self.facilities)
        return abs(true_position - self.facilities[self.assignment[i]])


def _class_key(mech: MechanismId, cls) -> tuple:
    """Validate the mechanism/class pairing and return its numeric parameters."""
    name = mech.name
    if name in ("pmm", "pipm"):
        if not isinstance(cls, EquiCap):
            raise MechanismPreconditionViolated(f"{name} needs an equi-capacitated class")
        return (cls.m, cls.k)
    if name == "percentile":
        return ()
    if not isinstance(cls, TwoAbundant):
        raise MechanismPreconditionViolated(f"{name} needs a two-facility class")
    if name == "eig":
        return (cls.c1, cls.c2)
    if name == "ic":
        if abs(cls.c1 - cls.c2) != 1:
            raise MechanismPreconditionViolated("IC needs capacities (k+1, k)")
        return (min(cls.c1, cls.c2),)
    if cls.c1 != cls.c2:
        raise MechanismPreconditionViolated(f"{name.upper()} needs equal capacities")
    return (cls.c1,)


def place(mech, prof: AgentProfile, cls: ProblemClass | None = None) -> Placement:
    """Run ``mech`` on a sorted profile.

    For IC the returned ``pi`` refers to the class capacities as given, so
    ``TwoAbundant(k, k + 1)`` works as well as ``TwoAbundant(k + 1, k)``.
    """
    mech = MechanismId.parse(mech)
    params = _class_key(mech, cls)
    name = mech.name
    if name == "pmm":
        return pmm(prof, *params)
    if name == "pipm":
        return pipm(prof, *params)
    if name == "eig":
        return eig(prof, *params)
    if name == "ig":
        return ig(prof, *params)
    if name == "im":
        return im(prof, *params)
    if name == "ic":
        out = ic(prof, *params)
        if cls.c1 < cls.c2:
            out = Placement(out.y, tuple(1 - j for j in out.pi), out.mu)
        return out
    return percentile(prof, mech.percentiles)


@dataclass(frozen=True)
class BoundMechanism:
    """A mechanism fixed to one problem class, callable on raw reports."""

    mech: MechanismId
    cls: ProblemClass | None = None

    def __post_init__(self):
        object.__setattr__(self, "mech", MechanismId.parse(self.mech))
        _class_key(self.mech, self.cls)

    @property
    def free_choice(self) -> bool:
        return not self.mech.capacitated

    def check(self, n: int) -> None:
        """Raise if ``n`` agents do not fit this mechanism's preconditions."""
        name = self.mech.name
        if name == "ic" and n % 2 == 0:
            raise WrongParity("IC requires odd n")
        if name == "ic" and n != self.cls.c1 + self.cls.c2:
            raise WrongParity(f"IC requires n = 2k+1 = {self.cls.c1 + self.cls.c2}, got {n}")
        if name == "im" and n != 2 * self.cls.c1:
            raise WrongParity(f"IM requires n = 2k = {2 * self.cls.c1}, got {n}")
        if self.cls is not None:
            self.cls.check(n)

    def place(self, prof: AgentProfile) -> Placement:
        return place(self.mech, prof, self.cls)

    def __call__(self, reports: Sequence) -> Outcome:
        prof = reports if isinstance(reports, AgentProfile) else normalize(reports)
        pl = self.place(prof)
        return Outcome(pl.y, tuple(pl.mu[r] for r in prof.ranks), self.free_choice)

    def batch(self, reports: np.ndarray) -> tuple:
        """Vectorised run on integer report rows: ``(facilities, assignment)``.

        ``reports`` has shape ``(B, n)``; the result holds facility positions
        ``(B, m)`` and, per raw agent, the index of its facility ``(B, n)``.
        """
        params = _class_key(self.mech, self.cls)
        return _batch.run(self.mech.name, params, self.mech.percentiles, reports)

    def __str__(self) -> str:
        return f"{self.mech}" if self.cls is None else f"{self.mech}@{self.cls}"


def bind(mech, cls: ProblemClass | None = None) -> BoundMechanism:
    return BoundMechanism(MechanismId.parse(mech), cls)


def default_class(mech, n: int) -> ProblemClass | None:
    """The class a mechanism is defined for when only ``n`` is known.

    PMM and PIPM have no canonical class, so this raises for them.
    """
    name = MechanismId.parse(mech).name
    if name == "ic":
        if n % 2 == 0:
            raise WrongParity("IC requires odd n")
        return TwoAbundant((n + 1) // 2, n // 2)
    if name == "im":
        if n % 2:
            raise WrongParity("IM requires even n")
        return TwoAbundant(n // 2, n // 2)
    if name in ("ig", "eig"):
        c = (n + 1) // 2
        return TwoAbundant(c, c)
    if name == "percentile":
        return None
    raise InfeasibleCapacities(f"{name} needs explicit m and k")
