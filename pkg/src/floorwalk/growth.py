"""Pure-growth particle systems that dominate the aggregation dynamics.

Every occupied site fires each of its half-plane edges at rate sqrt(x2),
with floor sites firing at rate 1 (the max(sqrt(x2), 1) convention; the
slowed system inherits it unchanged, see `simulate_slowed_growth`).  A
firing whose target is already occupied is suppressed but still consumes
the clock event.  Runs live in a finite window with a frozen boundary:
sites outside never fire, and any arrow aimed at the window rim raises an
overflow flag so tail statistics can discard the run.

Clocks are lazy: an edge draws its next firing time the moment its source
becomes occupied, and redraws on every firing.  Each directed edge owns a
counter-based stream keyed by (seed, source, direction), so two state
machines stepped through one event loop see the same arrow realization;
that is what makes the coupling inclusions exact rather than in-law.
"""

import heapq
import math
from dataclasses import dataclass, field

from .errors import DomainError, EnvelopeViolation, WindowOverflow
from .lattice import Cluster, Site
from .rng import derive, stream_key, u01

__all__ = [
    "ArrowLog",
    "GrowthWindow",
    "radius_tail_experiment",
    "simulate_coupled",
    "simulate_pure_growth",
    "simulate_slowed_growth",
    "tail_csv",
]

# direction codes; floor sites skip index 3 because the lattice ends there
_STEPS_UP = ((1, 0), (-1, 0), (0, 1), (0, -1))


def _rate(x2: int) -> float:
    return math.sqrt(x2) if x2 > 1 else 1.0


@dataclass
class GrowthWindow:
    """State of one growth run inside the box [-width, width] x [0, height].

    `overflow` records whether any arrow ever targeted the window rim or
    beyond; such a run is still a valid prefix of the infinite dynamics,
    but its radius statistics are censored and must be discarded.
    """

    occupied: Cluster
    width: int
    height: int
    t: float
    frozen_boundary: bool = True
    overflow: bool = False

    def contains(self, site: Site) -> bool:
        x1, x2 = site
        return -self.width <= x1 <= self.width and 0 <= x2 <= self.height

    def on_rim(self, site: Site) -> bool:
        x1, x2 = site
        return self.contains(site) and (abs(x1) == self.width or x2 == self.height)


@dataclass
class ArrowLog:
    """Realized birth arrows of one run, in firing order.

    Rows are (t, source, target, born).  `born` is False when the target
    was already occupied (suppressed) or lay outside the window (frozen).
    In a slowed run only arrows that survived the thinning mark appear.
    """

    rows: "list[tuple[float, Site, Site, bool]]" = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def edge_times(self, src: Site, dst: Site) -> "list[float]":
        return [t for t, s, d, _ in self.rows if s == src and d == dst]

    def births(self) -> "list[tuple[float, Site]]":
        return [(t, d) for t, _, d, born in self.rows if born]


class _Machine:
    """One particle system read off the shared arrow stream."""

    __slots__ = ("occ", "order", "slowed", "overflow", "log")

    def __init__(self, sites: "list[Site]", slowed: bool):
        self.occ = set(sites)
        self.order = list(sites)
        self.slowed = slowed
        self.overflow = False
        self.log = ArrowLog()


def _check_window(window) -> "tuple[int, int]":
    try:
        w, hmax = window
    except (TypeError, ValueError):
        raise DomainError("window must be a (width, height) pair")
    w, hmax = int(w), int(hmax)
    if w < 1 or hmax < 1:
        raise DomainError("window extents must be >= 1")
    return w, hmax


def _check_initial(initial, w: int, hmax: int) -> "list[Site]":
    if isinstance(initial, Cluster):
        if initial.includes_floor:
            raise DomainError("growth starts from finite configurations only")
        sites = initial.sorted_sites()
    else:
        sites = sorted({(int(a), int(b)) for a, b in initial})
    if not sites:
        raise DomainError("initial configuration is empty")
    for x1, x2 in sites:
        if x2 < 0:
            raise DomainError(f"site ({x1}, {x2}) below the floor")
        if abs(x1) > w or x2 > hmax:
            raise DomainError(f"site ({x1}, {x2}) outside the window")
    return sites


def _run_machines(machines, T, w, hmax, seed):
    """Drive every machine through one shared lazy-clock event loop."""
    base = stream_key(seed, "growth")
    heap = []  # (t, tiebreak, x1, x2, dir, edge key, next counter)
    scheduled = set()
    seq = 0

    def expose(x1, x2, now):
        # first firing time drawn on exposure; memoryless, so the clock
        # needs no history even when a second machine exposes the edge later
        nonlocal seq
        kx = derive(derive(base, x1), x2)
        for d in range(3 if x2 == 0 else 4):
            if (x1, x2, d) in scheduled:
                continue
            scheduled.add((x1, x2, d))
            ekey = derive(kx, d)
            t1 = now - math.log1p(-u01(ekey, 0)) / _rate(x2)
            if t1 <= T:
                heapq.heappush(heap, (t1, seq, x1, x2, d, ekey, 2))
                seq += 1

    for m in machines:
        for x1, x2 in m.order:
            expose(x1, x2, 0.0)

    while heap:
        t, _, x1, x2, d, ekey, ctr = heapq.heappop(heap)
        dx, dy = _STEPS_UP[d]
        y = (x1 + dx, x2 + dy)
        mark = u01(ekey, ctr - 1)
        # redraw this edge's clock; suppressed births consume the event
        t2 = t - math.log1p(-u01(ekey, ctr)) / _rate(x2)
        if t2 <= T:
            heapq.heappush(heap, (t2, seq, x1, x2, d, ekey, ctr + 2))
            seq += 1
        src = (x1, x2)
        accept = None
        for m in machines:
            if src not in m.occ:
                continue
            if m.slowed:
                if accept is None:
                    accept = mark < 1.0 / math.sqrt(t + 1.0)
                if not accept:
                    continue
            born = False
            y1, y2 = y
            if -w <= y1 <= w and y2 <= hmax:
                if abs(y1) == w or y2 == hmax:
                    m.overflow = True
                if y not in m.occ:
                    m.occ.add(y)
                    m.order.append(y)
                    born = True
                    expose(y1, y2, t)
            else:
                m.overflow = True
            m.log.rows.append((t, src, y, born))


def _finish(m: _Machine, w, hmax, T, rim_start) -> "tuple[GrowthWindow, ArrowLog]":
    gw = GrowthWindow(
        occupied=Cluster(m.order),
        width=w,
        height=hmax,
        t=float(T),
        overflow=m.overflow or rim_start,
    )
    return gw, m.log


def _simulate(initial, T, window, seed, slowed):
    w, hmax = _check_window(window)
    sites = _check_initial(initial, w, hmax)
    if T < 0:
        raise DomainError("horizon T must be >= 0")
    rim_start = any(abs(x1) == w or x2 == hmax for x1, x2 in sites)
    m = _Machine(sites, slowed)
    if T > 0:
        _run_machines([m], float(T), w, hmax, seed)
    return _finish(m, w, hmax, T, rim_start)


def simulate_pure_growth(initial, T, window, seed):
    """Grow `initial` for time T under the rate max(sqrt(x2), 1) dynamics.

    Returns (GrowthWindow, ArrowLog).  The log holds every clock firing of
    an exposed edge, including suppressed ones, so per-edge firing times
    form a Poisson process at the source's rate for as long as the source
    stays occupied.
    """
    return _simulate(initial, T, window, seed, slowed=False)


def simulate_slowed_growth(initial, T, window, seed):
    """Grow `initial` under rates sqrt(x2)/sqrt(t+1) via thinning.

    Each firing of the rate-sqrt(x2) envelope clock carries a uniform mark
    and survives iff mark < 1/sqrt(t+1); at t = 0 every mark survives.
    Floor sites keep the envelope rate 1, so their thinned rate is
    1/sqrt(t+1): the max(sqrt(x2), 1) floor convention is carried through
    the slowed system unchanged.  Returns (GrowthWindow, ArrowLog); the
    log holds surviving arrows only.
    """
    return _simulate(initial, T, window, seed, slowed=True)


def simulate_coupled(initials, T, window, seed, kinds=None):
    """Run several systems in lockstep on one arrow stream.

    `kinds` lists "pure" or "slowed" per entry (default all pure).  All
    machines read the same per-edge clocks and thinning marks, so the
    classical inclusions hold pathwise: a pure run from a subset
    configuration stays inside a pure run from a superset, and a slowed
    run stays inside the pure run it thins.  Returns a list of
    (GrowthWindow, ArrowLog) pairs in input order.
    """
    w, hmax = _check_window(window)
    if kinds is None:
        kinds = ["pure"] * len(initials)
    if len(kinds) != len(initials):
        raise DomainError("kinds must match initials one to one")
    for k in kinds:
        if k not in ("pure", "slowed"):
            raise DomainError(f"unknown kind {k!r}")
    if not initials:
        raise DomainError("need at least one initial configuration")
    if T < 0:
        raise DomainError("horizon T must be >= 0")
    packs = [_check_initial(ini, w, hmax) for ini in initials]
    rims = [any(abs(a) == w or b == hmax for a, b in s) for s in packs]
    machines = [_Machine(s, k == "slowed") for s, k in zip(packs, kinds)]
    if T > 0:
        _run_machines(machines, float(T), w, hmax, seed)
    return [_finish(m, w, hmax, T, r) for m, r in zip(machines, rims)]


# ---------------------------------------------------------------------------
# radius of influence

def _bound(t: float, n: int) -> float:
    return (4.0 * t) ** n * math.sqrt(math.factorial(n))


def radius_tail_experiment(t, n_max, runs, seed):
    """Tail of the influence radius grown from {(0,0)} for time t.

    Runs `runs` independent pure-growth runs and tabulates the empirical
    P(Rad >= n) for n = 1..n_max against the analytic envelope
    (4t)^n sqrt(n!), where Rad is the largest 1-norm of an occupied site.
    Runs whose influence touched the frozen boundary are discarded from
    the estimates and counted, keeping the kept sample unbiased.  Raises
    EnvelopeViolation if any empirical tail exceeds bound + 4 stderr.

    Each row is a dict with keys n, empirical, stderr, bound, runs
    (launched, not kept) and discarded.
    """
    if t < 0:
        raise DomainError("time t must be >= 0")
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    if runs < 1:
        raise DomainError("runs must be >= 1")
    for n in range(1, n_max + 1):
        if _bound(t, n) >= 1.0:
            raise DomainError(
                f"t too large: (4t)^n sqrt(n!) = {_bound(t, n):.3g} >= 1 at n = {n}"
            )
    side = n_max + 4
    window = (side, side)
    exceed = [0] * (n_max + 1)
    discarded = 0
    for i in range(runs):
        gw, _ = simulate_pure_growth(
            [(0, 0)], t, window, stream_key(seed, "tail", i)
        )
        if gw.overflow:
            discarded += 1
            continue
        rad = max(abs(a) + b for a, b in gw.occupied)
        for n in range(1, min(rad, n_max) + 1):
            exceed[n] += 1
    kept = runs - discarded
    if kept == 0:
        raise WindowOverflow("every run reached the frozen boundary")
    rows = []
    for n in range(1, n_max + 1):
        p = exceed[n] / kept
        se = math.sqrt(p * (1.0 - p) / kept)
        rows.append(
            {
                "n": n,
                "empirical": p,
                "stderr": se,
                "bound": _bound(t, n),
                "runs": runs,
                "discarded": discarded,
            }
        )
    for r in rows:
        if r["empirical"] > r["bound"] + 4.0 * r["stderr"]:
            raise EnvelopeViolation(
                f"tail at n = {r['n']}: {r['empirical']:.3g} exceeds "
                f"bound {r['bound']:.3g} + 4 stderr"
            )
    return rows


def tail_csv(rows, path) -> None:
    """Write a radius tail table as CSV: n,empirical,stderr,bound,runs,discarded."""
    with open(path, "w") as f:
        f.write("n,empirical,stderr,bound,runs,discarded\n")
        for r in rows:
            f.write(
                "%d,%.17g,%.17g,%.17g,%d,%d\n"
                % (r["n"], r["empirical"], r["stderr"], r["bound"], r["runs"], r["discarded"])
            )
