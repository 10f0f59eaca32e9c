"""Approximation-ratio bounds, worst-case instance families and empirical sweeps.

Ratios are exact :class:`~fractions.Fraction` values.  ``math.inf`` marks a
mechanism with positive cost on an instance whose optimum is zero; both costs
zero counts as ratio 1.
"""

from __future__ import annotations

import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from capflp import _batch
from capflp.mechanisms import MechanismId, bind, place
from capflp.model import AgentProfile, EquiCap, TwoAbundant, normalize, social_cost
from capflp.solvers import Objective, optimal, optimal_mc_equicap

UPPER = "upper"
LOWER = "lower"
LOWER_ANONYMOUS = "lower_anonymous"


@dataclass(frozen=True)
class BoundSpec:
    value: Fraction
    kind: str
    objective: Objective
    mechanism: str | None = None
    note: str = ""
    clamped: bool = False
    condition: str | None = None

    def to_json(self) -> dict:
        return {
            "value": str(self.value),
            "kind": self.kind,
            "objective": self.objective.value,
            "mechanism": self.mechanism,
            "note": self.note,
            "clamped": self.clamped,
            "condition": self.condition,
        }


def _spec(value, kind, objective, mechanism=None, condition=None) -> BoundSpec:
    value = Fraction(value)
    if value < 1:
        note = f"formula gives {value}; an approximation ratio is at least 1, so 1 is reported"
        return BoundSpec(Fraction(1), kind, objective, mechanism, note, True, condition)
    return BoundSpec(value, kind, objective, mechanism, condition=condition)


def _agents(cls, n: int | None, name: str) -> int:
    if isinstance(cls, EquiCap):
        return cls.n
    if name == "ic":
        n = cls.c1 + cls.c2 if n is None else n
    elif name == "im":
        n = 2 * cls.c1 if n is None else n
    if n is None:
        raise ValueError(f"{name} needs the number of agents n")
    cls.check(n)
    return n


def _two_sc(n: int, cbar: int) -> Fraction:
    return max(Fraction(n - cbar - 1), Fraction(cbar, n - cbar) - 1)


def bound(mech, cls, objective, n: int | None = None) -> BoundSpec:
    """Proven approximation ratio of ``mech`` on ``cls``.

    For the two-facility mechanisms other than IC and IM pass ``n``, since
    the class alone does not fix the number of agents.
    """
    mech = MechanismId.parse(mech)
    objective = Objective.parse(objective)
    name = mech.name
    if name == "percentile":
        raise ValueError("the percentile mechanism has no capacitated bound")
    bind(mech, cls)  # validates the pairing
    if objective is Objective.MC:
        return _spec(2, UPPER, objective, name)
    if name == "pmm":
        return _spec(cls.k * (cls.m // 2) + 1, UPPER, objective, name)
    if name == "pipm":
        return _spec(cls.k * -(-cls.m // 2) - 1, UPPER, objective, name)
    n = _agents(cls, n, name)
    if name == "ic":
        k = min(cls.c1, cls.c2)
        return _spec(k - 1 if n > 5 else 1, UPPER, objective, name)
    return _spec(_two_sc(n, cls.c_bar), UPPER, objective, name)


def lower_bound(cls, objective, anonymous: bool = False, n: int | None = None) -> BoundSpec:
    """Best ratio any truthful deterministic (optionally anonymous) mechanism can reach."""
    objective = Objective.parse(objective)
    kind = LOWER_ANONYMOUS if anonymous else LOWER
    if objective is Objective.MC:
        return _spec(2, kind, objective)
    if isinstance(cls, EquiCap):
        if not anonymous:
            return _spec(3, kind, objective, condition="k > 3")
        m, k = cls.m, cls.k
        value = Fraction(k * (m - 1), 2) + 1 if m % 2 else Fraction(k * m, 2) - 1
        return _spec(value, kind, objective)
    if not anonymous:
        return _spec(3, kind, objective)
    if n is None:
        n = cls.c1 + cls.c2 if abs(cls.c1 - cls.c2) == 1 else None
    if n is None:
        raise ValueError("the anonymous two-facility bound needs n")
    cls.check(n)
    return _spec(n - cls.c_bar - 1, kind, objective)


def table1_row(cls, n: int | None = None) -> dict:
    """One row of the summary table: bounds for both objectives and who attains the UB."""
    if isinstance(cls, EquiCap):
        ub_mech = "pmm" if cls.m % 2 else "pipm"
        ub = bound(ub_mech, cls, "sc")
        mc_mechs = ["pmm", "pipm"]
        label = {"m": cls.m, "k": cls.k}
    else:
        if n is None:
            raise ValueError("a two-facility row needs n")
        cls.check(n)
        ub_mech = "eig"
        ub = bound("eig", cls, "sc", n)
        mc_mechs = ["eig"]
        label = {"n": n, "c1": cls.c1, "c2": cls.c2}
    lb = lower_bound(cls, "sc", n=n)
    lb_star = lower_bound(cls, "sc", anonymous=True, n=n)
    return {
        "class": label,
        "sc": {"lb": lb, "lb_anonymous": lb_star, "ub": ub, "ub_mechanism": ub_mech},
        "mc": {"lb": lower_bound(cls, "mc", n=n), "ub": bound(mc_mechs[0], cls, "mc", n),
               "ub_mechanism": "/".join(mc_mechs)},
    }


# -- worst-case families --------------------------------------------------------


def _prof(values) -> AgentProfile:
    return normalize([Fraction(v) for v in values])


def _need(param, name):
    if param is None:
        raise ValueError(f"this family is parameterised: pass {name}")
    param = Fraction(param)
    if param <= 0:
        raise ValueError(f"{name} must be positive")
    return param


def tight_instance(mech, cls, objective, n: int | None = None, family: int = 1, eps=None) -> AgentProfile:
    """Instance on which ``mech`` attains (or, with ``eps``, approaches) its bound.

    SC families are exact.  MC families for PMM, PIPM and IC take a positive
    ``eps`` and give ratio ``2/(1+eps)`` (``2/(1+3eps)`` for IC).  The two-facility
    SC bound is a maximum of two terms; ``family`` selects which one the
    instance realises.
    """
    mech = MechanismId.parse(mech)
    objective = Objective.parse(objective)
    name = mech.name
    bind(mech, cls)
    if name in ("pmm", "pipm"):
        m, k = cls.m, cls.k
        if name == "pmm":
            r = (m + 1) // 2
            zeros = k * r - 1
        else:
            r = m // 2
            zeros = r * k + 1
        if objective is Objective.SC:
            if name == "pipm" and m % 2 == 0:
                half = m * k // 2
                return _prof([1] * (half - 1) + [2, 3] + [4] * (half - 1))
            return _prof([0] * zeros + [1] * (m * k - zeros))
        eps = _need(eps, "eps")
        if k < 2 or (name == "pipm" and m < 3):
            raise ValueError(f"no MC family approaching 2 for {name} with m={m}, k={k}")
        return _prof([0] * zeros + [1] * (m * k - zeros - 1) + [2 + eps])
    n = _agents(cls, n, name)
    cbar = cls.c_bar
    if name == "ic":
        k = min(cls.c1, cls.c2)
        if objective is Objective.SC:
            return _prof([0] * (k + 1) + [1] + [2] * (k - 1))
        eps = _need(eps, "eps")
        return _prof([0] * k + [Fraction(1, 3) + eps, Fraction(2, 3)] + [1] * (k - 1))
    if objective is Objective.MC:
        if n - cbar - 1 < 1:
            raise ValueError("the MC family needs n - cbar >= 2")
        return _prof([0] * (cbar + 1) + [1] * (n - cbar - 1))
    if family == 1:
        return _prof([0] * (n - cbar - 1) + [1] + [5] * cbar)
    if family == 2:
        return _prof([0] * (n - cbar) + [1] * (2 * cbar - n) + [2] * (n - cbar))
    raise ValueError(f"unknown family {family}")


def family_ratio(mech, cls, objective, n: int | None = None, family: int = 1) -> Fraction:
    """Closed-form ratio the tight family is built to reach."""
    mech = MechanismId.parse(mech)
    objective = Objective.parse(objective)
    if objective is Objective.MC:
        return Fraction(2)
    if mech.name in ("pmm", "pipm", "ic"):
        return bound(mech, cls, objective, n).value
    n = _agents(cls, n, mech.name)
    cbar = cls.c_bar
    if family == 1:
        return Fraction(n - cbar - 1)
    return max(Fraction(1), Fraction(cbar, n - cbar) - 1)


def lower_bound_instance(m: int, k: int, t) -> AgentProfile:
    """One agent at ``-t``, every other agent at 2."""
    t = _need(t, "t")
    return _prof([-t] + [2] * (m * k - 1))


def forced_mc_ratio(m: int, k: int, t) -> Fraction:
    """Ratio forced on any truthful mechanism by :func:`lower_bound_instance`.

    On the instance with the outlier at 0 the ratio bound keeps the outlier's
    facility at or right of 0, and truthfulness keeps it there when the
    outlier moves to ``-t``.
    """
    prof = lower_bound_instance(m, k, t)
    opt = optimal_mc_equicap(prof, m, k).cost
    return (0 - prof.positions[0]) / opt


# -- empirical ratios -----------------------------------------------------------


@dataclass(frozen=True)
class RatioRecord:
    instance: AgentProfile
    mech_cost: Fraction
    opt_cost: Fraction
    ratio: object  # Fraction or math.inf


def ratio_of(mech_cost, opt_cost):
    if opt_cost == 0:
        return Fraction(1) if mech_cost == 0 else math.inf
    return Fraction(mech_cost) / Fraction(opt_cost)


def evaluate(mech, cls, objective, prof: AgentProfile) -> RatioRecord:
    objective = Objective.parse(objective)
    report = social_cost(prof, place(mech, prof, cls))
    mcost = report.sc if objective is Objective.SC else report.mc
    ocost = optimal(prof, cls, objective).cost
    return RatioRecord(prof, mcost, ocost, ratio_of(mcost, ocost))


@dataclass(frozen=True)
class RatioSummary:
    best: RatioRecord | None
    records: tuple = field(default=(), repr=False)

    @property
    def max_ratio(self):
        return Fraction(1) if self.best is None else self.best.ratio


def empirical_ratio(mech, cls, objective, instances: Iterable[AgentProfile]) -> RatioSummary:
    """Exact ratio on every instance; the first maximum is kept as witness."""
    records = tuple(evaluate(mech, cls, objective, p) for p in instances)
    best = None
    for rec in records:
        if best is None or rec.ratio > best.ratio:
            best = rec
    return RatioSummary(best, records)


# -- random instances -----------------------------------------------------------

RESOLUTION = 10**6


def _draw(rng: random.Random, dist: str, n: int) -> list:
    kind, _, arg = dist.partition(":")
    if kind == "uniform01":
        return [Fraction(rng.randint(0, RESOLUTION), RESOLUTION) for _ in range(n)]
    if kind == "twocluster":
        gap = Fraction(arg) if arg else Fraction(10)
        left = rng.randint(1, n - 1) if n > 1 else 1
        unit = lambda: Fraction(rng.randint(0, RESOLUTION), RESOLUTION)  # noqa: E731
        return [unit() for _ in range(left)] + [1 + gap + unit() for _ in range(n - left)]
    if kind == "lattice":
        # few distinct values, so coincident reports are common
        steps = int(arg) if arg else 4
        return [Fraction(rng.randint(0, steps), steps) for _ in range(n)]
    if kind == "grid":
        return [Fraction(i, n - 1) if n > 1 else Fraction(0) for i in range(n)]
    raise ValueError(f"unknown distribution {dist!r}")


def sample_instances(dist: str, n: int, count: int, seed: int, exact: bool = True) -> list:
    """``count`` reproducible profiles of ``n`` agents.

    ``dist`` is ``uniform01``, ``twocluster:GAP`` (two groups of random size,
    the right one starting at least ``GAP`` past the left one), ``grid``
    (evenly spaced on [0, 1], identical for every seed) or ``lattice:S``
    (values in {0, 1/S, ..., 1}).
    """
    if count < 1 or n < 1:
        raise ValueError("count and n must be positive")
    rng = random.Random(f"{dist}|{n}|{seed}")
    return [normalize(_draw(rng, dist, n), exact=exact) for _ in range(count)]


# -- batched sweeps -------------------------------------------------------------


@dataclass(frozen=True)
class SweepResult:
    mechanism: str
    objective: Objective
    n: int
    params: str
    instances: int
    max_ratio: object
    witness: AgentProfile | None
    bound: BoundSpec
    exceedances: int

    @property
    def at_bound(self) -> bool:
        return self.max_ratio == self.bound.value


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CAPFLP_THREADS", "1")))
    except ValueError:
        return 1


def _integer_rows(instances: Sequence[AgentProfile]):
    vals = [v for p in instances for v in p.positions]
    if any(isinstance(v, float) for v in vals):
        return None
    scale = math.lcm(*(Fraction(v).denominator for v in vals))
    rows = [[int(Fraction(v) * scale) for v in p.positions] for p in instances]
    if max(abs(v) for r in rows for v in r) * 4 * len(rows[0]) ** 2 >= 2**62:
        return None
    return np.array(rows, dtype=np.int64)


def _batch_costs(mech: MechanismId, cls, objective: Objective, xs: np.ndarray):
    y, mu = bind(mech, cls).batch(xs)
    mcost = _batch.mechanism_cost(xs, y, mu, objective.value)
    if isinstance(cls, EquiCap):
        ocost = _batch.optimal_equicap(xs, cls.m, cls.k, objective.value)
    else:
        ocost = _batch.optimal_two(xs, cls.c1, cls.c2, objective.value)
    return mcost, ocost


def sweep(mech, cls, objective, instances: Sequence[AgentProfile], n: int | None = None) -> SweepResult:
    """Maximum ratio over ``instances`` plus the count of bound exceedances.

    Integer-valued rows go through the vectorised path (exact integer
    arithmetic); anything else is evaluated one instance at a time.
    """
    mech = MechanismId.parse(mech)
    objective = Objective.parse(objective)
    instances = list(instances)
    n = instances[0].n if n is None else n
    spec = bound(mech, cls, objective, n)
    params = ",".join(f"{k}={v}" for k, v in vars(cls).items())
    rows = _integer_rows(instances)
    if rows is None:
        summary = empirical_ratio(mech, cls, objective, instances)
        over = sum(1 for r in summary.records if r.ratio > spec.value)
        w = summary.best.instance if summary.best else None
        return SweepResult(str(mech), objective, n, params, len(instances), summary.max_ratio, w, spec, over)

    chunks = np.array_split(np.arange(len(instances)), _threads())
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda idx: _batch_costs(mech, cls, objective, rows[idx]), chunks))
    mcost = np.concatenate([p[0] for p in parts])
    ocost = np.concatenate([p[1] for p in parts])
    num, den = spec.value.numerator, spec.value.denominator
    infinite = (ocost == 0) & (mcost > 0)
    over = int(np.sum(infinite | (mcost * den > num * ocost)))
    if infinite.any():
        i = int(np.argmax(infinite))
        return SweepResult(str(mech), objective, n, params, len(instances), math.inf, instances[i], spec, over)
    safe = np.where(ocost == 0, 1, ocost)
    approx = np.where(ocost == 0, 1.0, mcost / safe)
    top = approx.max()
    best, best_i = None, None
    for i in np.nonzero(approx >= top * (1 - 1e-12))[0]:
        r = ratio_of(int(mcost[i]), int(ocost[i]))
        if best is None or r > best:
            best, best_i = r, int(i)
    return SweepResult(str(mech), objective, n, params, len(instances), best, instances[best_i], spec, over)
