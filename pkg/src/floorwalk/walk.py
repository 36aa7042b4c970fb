"""Random-walk stepping and stopping machinery.

Two layers live here.  The generic layer (StopSpec, walk_until) runs one walk
with arbitrary predicate sets and visit counters; it is written for clarity
and used by tests and small experiments.  The batch layer is a set of numba
kernels for the estimators that need millions of steps; they share the step
convention and the counter-based stream discipline of the generic layer.

Step convention everywhere: draw one 64-bit word, direction = word & 3,
mapping 0:+x1, 1:-x1, 2:+x2, 3:-x2.

Walks on the periodic strip treat the ceiling row specially: an up-step off
the top row is replaced by the exact horizontal displacement accumulated by
the excursion above the row until it first comes back down.  Excursions
above a line have infinite expected duration, so stepping through them is
not an option; the displacement law, by contrast, is an explicit Fourier
symbol (see measure.descent_symbol) and sampling it is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit, uint64

from .errors import CapExceeded
from .rng import Stream, bits_nb, mix64_nb

Predicate = Callable[[tuple], bool]

FIRST_VISIT = "visit"
FIRST_RETURN = "return"

DEFAULT_STEP_CAP = 10**8

_MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass
class StopSpec:
    """Absorption predicates (tagged first-visit or first-return) plus
    optional named counting sets accumulated over [0, absorption)."""

    absorb: "list[tuple[Predicate, str]]"
    step_cap: int = DEFAULT_STEP_CAP
    count: "dict[str, Predicate]" = field(default_factory=dict)


@dataclass
class HitRecord:
    which: int
    at: tuple
    prev: Optional[tuple]
    steps: int
    visit_counts: "dict[str, int]"


def walk_until(start: tuple, spec: StopSpec, stream: Stream) -> HitRecord:
    """Run one walk from start until an absorption predicate fires.

    First-visit predicates may trigger at time 0; first-return predicates
    only from time 1 on.  Counting sets tally positions strictly before the
    absorption time, the start included.
    """
    if spec.step_cap < 1:
        raise ValueError("step_cap must be positive")
    counts = {name: 0 for name in spec.count}
    pos = (int(start[0]), int(start[1]))
    prev: Optional[tuple] = None
    n = 0
    while True:
        for idx, (pred, mode) in enumerate(spec.absorb):
            if n == 0 and mode == FIRST_RETURN:
                continue
            if pred(pos):
                return HitRecord(idx, pos, prev, n, counts)
        for name, pred in spec.count.items():
            if pred(pos):
                counts[name] += 1
        if n >= spec.step_cap:
            err = CapExceeded(f"no absorption within {spec.step_cap} steps")
            err.record = HitRecord(-1, pos, prev, n, counts)
            raise err
        d = stream.bits() & 3
        move = _MOVES[d]
        prev = pos
        pos = (pos[0] + move[0], pos[1] + move[1])
        n += 1


# ---------------------------------------------------------------------------
# batch kernels

@njit(uint64(uint64, uint64), cache=True)
def derive_nb(key, idx):
    """Child key, same derivation as rng.derive."""
    return mix64_nb((key ^ uint64(0xD6E8FEB86659FD93)) + idx * uint64(0x9E3779B97F4A7C15))


@njit(cache=True)
def _alias_draw(u, prob, alias, n):
    """One alias-table draw from a single uniform in [0, 1)."""
    s = u * n
    j = int(s)
    if j >= n:
        j = n - 1
    return j if (s - j) < prob[j] else alias[j]


@njit(cache=True)
def visits_batch(base_key, n_samples, start1, start2, width, ceiling,
                 grid, grid_h, first_return, kprob, kalias, step_cap):
    """Count ceiling-row visits before absorption, over a walker batch.

    Walks the periodic strip; absorbs on the floor or on marked grid sites;
    counts time indices spent on the ceiling row.  An up-step off the
    ceiling is collapsed through the (kprob, kalias) displacement table.
    Returns (sum of counts, sum of squared counts, censored walkers).
    """
    sum_v = 0.0
    sum_v2 = 0.0
    censored = 0
    for i in range(n_samples):
        wkey = derive_nb(base_key, uint64(i))
        ctr = uint64(0)
        x1 = start1 % width
        x2 = start2
        v = 0
        steps = 0
        done = False
        while steps < step_cap:
            if steps > 0 or not first_return:
                # A first-return start on the floor can dip below it; the
                # grid only covers heights >= 1.
                if x2 == 0 or (1 <= x2 <= grid_h and grid[x1, x2] != 0):
                    done = True
                    break
            if x2 == ceiling:
                v += 1
            w = bits_nb(wkey, ctr)
            ctr += uint64(1)
            d = w & uint64(3)
            if d == uint64(0):
                x1 = (x1 + 1) % width
            elif d == uint64(1):
                x1 = (x1 - 1) % width
            elif d == uint64(2):
                if x2 == ceiling:
                    u = (bits_nb(wkey, ctr) >> uint64(11)) * 1.1102230246251565e-16
                    ctr += uint64(1)
                    x1 = (x1 + _alias_draw(u, kprob, kalias, width)) % width
                else:
                    x2 += 1
            else:
                x2 -= 1
            steps += 1
        if done:
            sum_v += v
            sum_v2 += v * v
        else:
            censored += 1
    return sum_v, sum_v2, censored


@njit(cache=True)
def landing_batch(base_key, n_samples, width, launch_row, grid, grid_h,
                  kprob, kalias, counts, step_cap):
    """Launch walkers uniformly on a row and record where growth would go.

    Each walker starts at a uniform column of the launch row (one above the
    highest marked site) and walks until it steps onto a marked site or the
    floor.  On a marked-site hit the previous position (the growth
    candidate) is tallied into counts; floor hits are tallied as rejects.
    Up-steps off the launch row collapse through the displacement table.
    Returns (accepted, floor_hits, censored).
    """
    accepted = 0
    floor_hits = 0
    censored = 0
    for i in range(n_samples):
        wkey = derive_nb(base_key, uint64(i))
        u0 = (bits_nb(wkey, uint64(0)) >> uint64(11)) * 1.1102230246251565e-16
        ctr = uint64(1)
        x1 = int(u0 * width)
        if x1 >= width:
            x1 = width - 1
        x2 = launch_row
        p1 = x1
        p2 = x2
        steps = 0
        done = False
        while steps < step_cap:
            if x2 == 0:
                floor_hits += 1
                done = True
                break
            if x2 <= grid_h and grid[x1, x2] != 0:
                counts[p1, p2] += 1
                accepted += 1
                done = True
                break
            w = bits_nb(wkey, ctr)
            ctr += uint64(1)
            d = w & uint64(3)
            p1 = x1
            p2 = x2
            if d == uint64(0):
                x1 = (x1 + 1) % width
            elif d == uint64(1):
                x1 = (x1 - 1) % width
            elif d == uint64(2):
                if x2 == launch_row:
                    u = (bits_nb(wkey, ctr) >> uint64(11)) * 1.1102230246251565e-16
                    ctr += uint64(1)
                    x1 = (x1 + _alias_draw(u, kprob, kalias, width)) % width
                    p1 = x1  # the collapsed hop cannot precede an absorption
                else:
                    x2 += 1
            else:
                x2 -= 1
            steps += 1
        if not done:
            censored += 1
    return accepted, floor_hits, censored


def build_alias(pmf: np.ndarray) -> "tuple[np.ndarray, np.ndarray]":
    """Walker alias tables for a discrete pmf (must sum to ~1)."""
    n = pmf.size
    prob = np.zeros(n, dtype=np.float64)
    alias = np.zeros(n, dtype=np.int64)
    scaled = pmf * n / pmf.sum()
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] - (1.0 - scaled[s])
        if scaled[l] < 1.0:
            small.append(l)
        else:
            large.append(l)
    for i in large:
        prob[i] = 1.0
    for i in small:
        prob[i] = 1.0
    return prob, alias
