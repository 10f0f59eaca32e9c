"""Vectorised mechanisms over integer report matrices.

These mirror the scalar routines in :mod:`capflp.mechanisms` row by row and
exist only to make exhaustive audits affordable.  Inputs are ``int64`` arrays
of raw reports (already scaled to integers); every mechanism here only adds,
subtracts, compares and selects, so results stay exact integers.  Agreement
with the scalar path is checked in the test-suite.
"""

from __future__ import annotations

import logging
import math

import numpy as np

log = logging.getLogger("capflp.mechanisms")


def _sort(reports: np.ndarray):
    order = np.argsort(reports, axis=1, kind="stable")
    return np.take_along_axis(reports, order, axis=1), order


def _unsort(sorted_vals: np.ndarray, order: np.ndarray) -> np.ndarray:
    out = np.empty_like(sorted_vals)
    np.put_along_axis(out, order, sorted_vals, axis=1)
    return out


def _propagate(xs, k, y, left_seed, right_seed):
    m = y.shape[1]
    for l in range(right_seed, m):
        top = xs[:, k * l - 1]
        d = np.abs(y[:, l - 1] - top)
        y[:, l] = np.maximum(xs[:, k * l], top + d)
    for l in range(left_seed, 1, -1):
        bottom = xs[:, k * (l - 1)]
        d = np.abs(y[:, l - 1] - bottom)
        y[:, l - 2] = np.minimum(xs[:, k * (l - 1) - 1], bottom - d)


def _equicap(xs, m, k, inner):
    b = xs.shape[0]
    y = np.zeros((b, m), dtype=xs.dtype)
    if inner:
        r = m // 2
        y[:, r - 1] = xs[:, r * k - 1]
        y[:, r] = xs[:, r * k]
        _propagate(xs, k, y, r, r + 1)
    else:
        r = (m + 1) // 2
        y[:, r - 1] = xs[:, k * (r - 1) + (k + 1) // 2 - 1]
        _propagate(xs, k, y, r, r)
    mu = np.broadcast_to(np.arange(m * k) // k, xs.shape)
    return y, mu


def _split(xs, y1, y2, cap_left, cap_right):
    n = xs.shape[1]
    count = np.sum(2 * xs <= (y1 + y2)[:, None], axis=1)
    same = y1 == y2
    count = np.where(same, np.minimum(cap_left, n), count)
    clipped = np.minimum(np.maximum(count, n - cap_right), cap_left)
    overflow = int(np.sum((clipped != count) & ~same))
    if overflow:
        log.warning("CapacityOverflow in %d batched rows", overflow)
    return (np.arange(n)[None, :] >= clipped[:, None]).astype(np.int64)


def _eig(xs, c1, c2):
    n = xs.shape[1]
    cbar, other = max(c1, c2), min(c1, c2)
    y1, y2 = xs[:, n - cbar - 1], xs[:, cbar]
    window = xs[:, n - cbar - 1 : cbar + 1]
    n1 = np.sum(2 * window <= (y1 + y2)[:, None], axis=1)
    n2 = window.shape[1] - n1
    big_left = n1 >= n2
    cap_left = np.where(big_left, cbar, other)
    cap_right = np.where(big_left, other, cbar)
    return np.stack([y1, y2], axis=1), _split(xs, y1, y2, cap_left, cap_right)


def _ic(xs, k):
    y1, y2 = xs[:, k - 1], xs[:, k + 1]
    d1 = np.abs(xs[:, k] - xs[:, k - 1])
    d2 = np.abs(xs[:, k + 1] - xs[:, k])
    cap_left = np.where(d1 <= d2, k + 1, k)
    cap_right = 2 * k + 1 - cap_left
    return np.stack([y1, y2], axis=1), _split(xs, y1, y2, cap_left, cap_right)


def _im(xs, k):
    y1, y2 = xs[:, k - 1], xs[:, k]
    caps = np.full(xs.shape[0], k)
    return np.stack([y1, y2], axis=1), _split(xs, y1, y2, caps, caps)


def _percentile(xs, p):
    n = xs.shape[1]
    idx = [math.floor(q * (n - 1)) for q in p]
    y = xs[:, idx]
    dist = np.abs(xs[:, :, None] - y[:, None, :])
    return y, np.argmin(dist, axis=2)


def run(name: str, params: tuple, percentiles: tuple, reports: np.ndarray):
    reports = np.asarray(reports, dtype=np.int64)
    xs, order = _sort(reports)
    if name == "pmm":
        y, mu = _equicap(xs, *params, inner=False)
    elif name == "pipm":
        y, mu = _equicap(xs, *params, inner=True)
    elif name == "eig":
        y, mu = _eig(xs, *params)
    elif name == "ig":
        y, mu = _eig(xs, params[0], params[0])
    elif name == "ic":
        y, mu = _ic(xs, *params)
    elif name == "im":
        y, mu = _im(xs, *params)
    elif name == "percentile":
        y, mu = _percentile(xs, percentiles)
    else:
        raise ValueError(f"no batched form for {name!r}")
    return y, _unsort(np.ascontiguousarray(mu), order)


# -- optimal costs and mechanism costs on sorted integer rows -----------------
# MC values are returned doubled so that midpoints stay integral.


def _side_sc(xs):
    if xs.shape[1] == 0:
        return np.zeros(xs.shape[0], dtype=xs.dtype)
    med = xs[:, (xs.shape[1] + 1) // 2 - 1]
    return np.sum(np.abs(xs - med[:, None]), axis=1)


def _side_mc2(xs):
    if xs.shape[1] == 0:
        return np.zeros(xs.shape[0], dtype=xs.dtype)
    return xs[:, -1] - xs[:, 0]


def optimal_equicap(xs, m, k, objective):
    blocks = xs.reshape(xs.shape[0], m, k)
    if objective == "sc":
        med = blocks[:, :, (k + 1) // 2 - 1]
        return np.sum(np.abs(blocks - med[:, :, None]), axis=(1, 2))
    return np.max(blocks[:, :, -1] - blocks[:, :, 0], axis=1)


def optimal_two(xs, c1, c2, objective):
    n = xs.shape[1]
    side = _side_sc if objective == "sc" else _side_mc2
    best = None
    for s in range(n + 1):
        if not ((s <= c1 and n - s <= c2) or (s <= c2 and n - s <= c1)):
            continue
        a, b = side(xs[:, :s]), side(xs[:, s:])
        cost = a + b if objective == "sc" else np.maximum(a, b)
        best = cost if best is None else np.minimum(best, cost)
    return best


def mechanism_cost(xs, y, mu, objective):
    """Cost of placement ``(y, mu)`` on sorted rows ``xs`` (MC doubled)."""
    per_agent = np.abs(xs - np.take_along_axis(y, mu, axis=1))
    if objective == "sc":
        return np.sum(per_agent, axis=1)
    return 2 * np.max(per_agent, axis=1)
