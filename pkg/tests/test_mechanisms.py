import logging
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from capflp.errors import InfeasibleCapacities, MechanismPreconditionViolated, NotDivisible, WrongParity
from capflp.mechanisms import (
    MechanismId,
    bind,
    default_class,
    eig,
    ic,
    ig,
    im,
    percentile,
    pipm,
    place,
    pmm,
    split_closest,
)
from capflp.model import EquiCap, TwoAbundant, normalize, profile, social_cost, validate_placement

coord = st.fractions(min_value=-10, max_value=10, max_denominator=4)
PMM_FIXTURE = (0, 0, 0, 1, 1, 2, F(5, 2), 4, 4)


def test_pmm_examples():
    assert pmm(profile(*PMM_FIXTURE), 3, 3).y == (0, 1, 3)
    assert pmm(profile(0, 0, 0, 1, 1, 1, F(5, 2), 4, 4), 3, 3).y == (0, 1, F(5, 2))
    p = profile(0, 0, 0, 1, 1, 1)
    out = pmm(p, 3, 2)
    assert out.y == (0, 0, 2)
    assert social_cost(p, out).sc == 2 * (3 // 2) + 1


def test_pipm_examples():
    p = profile(1, 1, 2, 3, 4, 4)
    out = pipm(p, 2, 3)
    assert out.y == (2, 3) and social_cost(p, out).sc == 4
    assert pipm(profile(0, 0, 1, 1), 2, 2).y == (0, 1)
    assert pipm(profile(3, 3, 3, 3, 3, 3), 3, 2).y == (3, 3, 3)


def test_eig_examples():
    out = eig(profile(0, 0, 0, 0, 0, 1), 4, 4)
    assert out.y == (0, 0) and social_cost(profile(0, 0, 0, 0, 0, 1), out).mc == 1
    p = profile(0, 0, 1, 5, 5, 5)
    out = eig(p, 3, 3)
    assert out.y == (1, 5) and social_cost(p, out).sc == 2
    assert eig(profile(2, 2, 2, 2), 3, 3).y == (2, 2)


def test_ic_examples():
    p = profile(0, 0, F(1, 3) + F(1, 30), F(2, 3), 1)
    out = ic(p, 2)
    # capacity 3 (index 0) sits at 2/3, capacity 2 at 0
    assert out.y == (0, F(2, 3)) and out.pi == (1, 0)
    assert social_cost(p, out).mc == F(1, 3)
    q = profile(0, 0, 0, 1, 1, 1, 2)
    delta1, delta2 = q.x(4) - q.x(3), q.x(5) - q.x(4)
    assert (delta1, delta2) == (1, 0)
    out = ic(q, 3)
    big = out.pi.index(0)
    assert out.y[big] == q.x(5) == 1
    assert ic(profile(4, 4, 4), 1).y == (4, 4)


def test_ig_im_examples():
    p = profile(0, 0, 1, 5, 5, 5)
    assert ig(p, 3) == eig(p, 3, 3)
    assert ig(profile(0, 1, 2), 2).y == (0, 2)
    assert im(profile(0, 0, 1, 1), 2).y == (0, 1)
    assert im(profile(0, 4, 4, 4), 2).y == (4, 4)
    q = profile(6, 6, 6, 6)
    assert social_cost(q, im(q, 2)).sc == 0


def test_percentile_examples():
    assert percentile(profile(0, 1, 2, 2, 4), (F(1, 4), F(3, 4))).y == (1, 2)
    assert percentile(profile(0, 0, 1, 2, 4), (F(1, 4), F(3, 4))).y == (0, 2)
    p = profile(-3, 1, 9)
    assert percentile(p, (0, 1)).y == (-3, 9)


def test_preconditions():
    with pytest.raises(NotDivisible):
        pmm(profile(0, 1, 2), 2, 2)
    with pytest.raises(NotDivisible):
        pipm(profile(0, 1, 2, 3), 3, 1)
    with pytest.raises(WrongParity, match="IC requires odd n"):
        ic(profile(0, 1, 2, 3), 2)
    with pytest.raises(WrongParity):
        im(profile(0, 1, 2), 1)
    with pytest.raises(InfeasibleCapacities):
        eig(profile(0, 1, 2, 3, 4), 2, 2)
    with pytest.raises(MechanismPreconditionViolated):
        percentile(profile(0, 1), (F(1, 2), F(1, 4)))
    with pytest.raises(MechanismPreconditionViolated):
        bind("ic", TwoAbundant(3, 3))
    with pytest.raises(MechanismPreconditionViolated):
        bind("ig", TwoAbundant(3, 2))
    with pytest.raises(MechanismPreconditionViolated):
        bind("pmm", TwoAbundant(3, 2))
    with pytest.raises(MechanismPreconditionViolated):
        MechanismId.parse("median")


def test_mechanism_ids():
    mid = MechanismId.parse("percentile:0.25,0.75")
    assert mid.percentiles == (F(1, 4), F(3, 4)) and not mid.capacitated
    assert str(mid) == "percentile:0.25,0.75"
    assert MechanismId.parse("PMM").name == "pmm"
    with pytest.raises(MechanismPreconditionViolated):
        MechanismId.parse("pmm:1")
    assert default_class("ic", 7) == TwoAbundant(4, 3)
    assert default_class("im", 6) == TwoAbundant(3, 3)
    assert default_class("eig", 5) == TwoAbundant(3, 3)
    with pytest.raises(WrongParity):
        default_class("ic", 6)
    with pytest.raises(InfeasibleCapacities):
        default_class("pmm", 6)


def test_ic_accepts_either_capacity_order():
    p = profile(0, 0, 0, 1, 1, 1, 2)
    a, b = place("ic", p, TwoAbundant(4, 3)), place("ic", p, TwoAbundant(3, 4))
    assert a.y == b.y and a.mu == b.mu
    assert [(4, 3)[j] for j in a.pi] == [(3, 4)[j] for j in b.pi]


def test_eig_repeated_positions_stay_feasible(caplog):
    # counting every agent in [y1, z] would put 3 agents on the capacity-2 side here
    p = profile(0, 0, 2, 3, 9)
    with caplog.at_level(logging.WARNING, logger="capflp.mechanisms"):
        out = eig(p, 3, 2)
    assert validate_placement(TwoAbundant(3, 2), p, out) == []
    assert "CapacityOverflow" not in caplog.text


def test_split_closest_reports_overflow(caplog):
    with caplog.at_level(logging.WARNING, logger="capflp.mechanisms"):
        mu = split_closest((0, 0, 0, 5), 0, 5, 2, 2)
    assert mu == (0, 0, 1, 1)
    assert "CapacityOverflow" in caplog.text


def test_split_closest_ties_and_degenerate():
    assert split_closest((0, 1, 2), 0, 2, 2, 2) == (0, 0, 1)
    assert split_closest((3, 3, 3), 3, 3, 2, 2) == (0, 0, 1)


def test_bound_mechanism_maps_back_to_raw_agents():
    out = bind("pmm", EquiCap(3, 3))([4, 0, F(5, 2), 1, 0, 2, 4, 1, 0])
    assert out.facilities == (0, 1, 3)
    assert out.assignment == (2, 0, 2, 1, 0, 1, 2, 1, 0)
    assert out.cost(2, F(5, 2)) == F(1, 2)


def _random_case(data):
    kind = data.draw(st.sampled_from(["pmm", "pipm", "eig", "ic", "ig", "im"]))
    if kind in ("pmm", "pipm"):
        m, k = data.draw(st.integers(2, 4)), data.draw(st.integers(1, 3))
        cls, n = EquiCap(m, k), m * k
    elif kind == "ic":
        k = data.draw(st.integers(1, 4))
        cls, n = TwoAbundant(k + 1, k), 2 * k + 1
    elif kind == "im":
        k = data.draw(st.integers(1, 4))
        cls, n = TwoAbundant(k, k), 2 * k
    else:
        n = data.draw(st.integers(2, 9))
        c1 = data.draw(st.integers(n // 2, n - 1))
        c2 = c1 if kind == "ig" else data.draw(st.integers(max(n // 2, n - c1), n - 1))
        if kind == "ig" and 2 * c1 < n:
            c1 = c2 = n - n // 2
        cls = TwoAbundant(c1, c2)
    xs = data.draw(st.lists(coord, min_size=n, max_size=n))
    return kind, cls, xs


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_outputs_are_feasible_and_monotone(data):
    kind, cls, xs = _random_case(data)
    p = normalize(xs)
    out = place(kind, p, cls)
    assert validate_placement(cls, p, out) == []
    assert list(out.y) == sorted(out.y)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_equicap_agents_use_their_closest_facility(data):
    m, k = data.draw(st.integers(2, 4)), data.draw(st.integers(1, 4))
    p = normalize(data.draw(st.lists(coord, min_size=m * k, max_size=m * k)))
    for mech in (pmm, pipm):
        out = mech(p, m, k)
        for x, j in zip(p.positions, out.mu):
            assert abs(x - out.y[j]) == min(abs(x - y) for y in out.y)


@settings(max_examples=200, deadline=None)
@given(st.data(), st.fractions(F(1, 3), 4, max_denominator=3), coord)
def test_affine_equivariance(data, a, b):
    kind, cls, xs = _random_case(data)
    p = normalize(xs)
    base, moved = place(kind, p, cls), place(kind, p.map(a, b), cls)
    assert moved.y == tuple(a * y + b for y in base.y)
    assert social_cost(p.map(a, b), moved).per_agent == tuple(a * c for c in social_cost(p, base).per_agent)


@settings(max_examples=200, deadline=None)
@given(st.data(), st.randoms(use_true_random=False))
def test_permuting_reports_permutes_outcomes(data, rnd):
    kind, cls, xs = _random_case(data)
    mech = bind(kind, cls)
    perm = list(range(len(xs)))
    rnd.shuffle(perm)
    base, shuffled = mech(xs), mech([xs[i] for i in perm])

    def triples(reports, out):
        return sorted((x, out.facilities[j]) for x, j in zip(reports, out.assignment))

    assert triples(xs, base) == triples([xs[i] for i in perm], shuffled)
