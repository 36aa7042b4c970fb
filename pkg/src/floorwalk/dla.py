"""Aggregation driven by absorbed random walkers over an absorbing floor.

The discrete chain repeats one experiment: drop a walker far above the
cluster, let it wander until it steps onto the cluster or onto the floor,
and grow by the site the walker occupied just before sticking.  Floor hits
are resampled, so the chain is the growth process conditioned on growing.
Two reductions make the drop cheap without touching its law.  A walker
released from any height first crosses the row just above the cluster top
at a uniform column, independently of everything else, so the engine
releases it there directly.  And the strip above that row is empty, so an
excursion into it returns with a horizontal displacement whose law is
known in closed form; any move that overshoots the top row draws that
displacement instead of walking it out, which confines the whole walk to
the rows the cluster occupies.
The continuous variant runs the same experiment against a clock: launches
arrive as a Poisson stream of total rate equal to the window width, one
unit of rate per column, so each boundary site gains mass at exactly its
outer-measure rate and nothing has to be estimated inside the loop.  The
envelope rate bound (`envelope_c` times the square root of the source
height, one for floor sources) is audited after the fact on small clusters
with the exact solver and breaches raise EnvelopeViolation.

Walkers move in exact leaps where the geometry allows it.  Writing
u = x1+x2, v = x1-x2 turns the four-neighbour walk into two independent
coin-flip coordinates, so the exit law of an L1 sphere that meets neither
the cluster nor the floor interior is an explicit eigenseries
(diamond_exit_pmf).  The engine jumps dyadic spheres certified empty by a
block-occupancy pyramid and steps plainly inside the last shell, which
keeps every absorption, its source site, and its penultimate site exact.
A sphere is also allowed to touch the floor at its south pole, because an
exit there is an absorption and the walk into the pole is forced through
the site directly above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from numba import njit, uint64

from .errors import DomainError, EnvelopeViolation, ResampleLimit
from .lattice import Cluster, Site, neighbors, norm1
from .rng import Stream, bits_nb, stream_key
from .walk import _alias_draw, build_alias, derive_nb

from . import measure


@dataclass(frozen=True)
class EngineConfig:
    """Knobs of the walker engine.

    ceiling_multiple scales the window width.  Walkers enter on the row
    just above the cluster top, and every excursion above that row is
    folded into its exact first-return displacement, so the launch height
    itself has no effect on the law; widening the window is the one
    truncation left to probe, and doubling the multiple does exactly that.
    jump_radius_max caps the leap tables, resample_limit bounds
    consecutive floor hits, step_cap bounds one walk.  Continuous runs
    audit the envelope with the exact solver at event counts audit_every,
    2x, 4x, ... while the cluster has at most audit_site_cap sites;
    envelope_c is the audited rate-bound constant.
    """

    ceiling_multiple: int = 8
    envelope_c: float = 6.0
    resample_limit: int = 10**6
    step_cap: int = 10**7
    audit_every: int = 64
    audit_site_cap: int = 400
    jump_radius_max: int = 1024
    min_width: int = 512

    def __post_init__(self):
        if self.ceiling_multiple < 1:
            raise DomainError("ceiling multiple must be >= 1")
        if self.envelope_c <= 0:
            raise DomainError("envelope constant must be positive")
        if self.resample_limit < 1 or self.step_cap < 1:
            raise DomainError("limits must be positive")
        r = self.jump_radius_max
        if r < 2 or (r & (r - 1)) != 0:
            raise DomainError("jump radius cap must be a power of two >= 2")
        w = self.min_width
        if w < 16 or (w & (w - 1)) != 0:
            raise DomainError("minimum width must be a power of two >= 16")


DEFAULT_CONFIG = EngineConfig()


class EventLog:
    """Accepted growth events in time order.

    Entries are (t, source, target, accepted): the walker was absorbed at
    source and the cluster grew by target.  Only accepted events are
    recorded; rejected launches are bare floor absorptions that carry no
    cluster information and would dominate the log at the acceptance
    ratios involved.  Times are kept strictly increasing: a timestamp that
    would repeat its predecessor (events are appended in (time, source,
    target) order, so ties are already ordered) is nudged up one ulp.
    """

    def __init__(self):
        self.entries: "list[tuple[float, Site, Site, bool]]" = []

    def append(self, t: float, source: Site, target: Site,
               accepted: bool = True) -> float:
        if self.entries and t <= self.entries[-1][0]:
            t = math.nextafter(self.entries[-1][0], math.inf)
        self.entries.append((t, source, target, accepted))
        return t

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def rows(self) -> "list[tuple]":
        """CSV rows: t,sx1,sx2,tx1,tx2,accepted."""
        return [(t, s[0], s[1], y[0], y[1], int(a))
                for t, s, y, a in self.entries]


@dataclass
class AggregateState:
    """One growth trajectory's current position."""

    cluster: Cluster
    n: int = 0
    t: float = 0.0
    height: int = 0
    radius: int = 0
    event_log: EventLog = dc_field(default_factory=EventLog)

    @classmethod
    def initial(cls) -> "AggregateState":
        return cls(cluster=Cluster([(0, 0)]))


@dataclass
class TrajectoryReport:
    """A finished run: final state, per-event series, and the height fit.

    The series carries one row per event plus the starting row; for the
    discrete chain, which has no clock, the t column repeats the step
    index.  height_slope is the log-log regression slope of height against
    step count over the final decade of steps (nan when the run is too
    short or the height never left zero).
    """

    state: AggregateState
    n_series: np.ndarray
    t_series: np.ndarray
    h_series: np.ndarray
    radius_series: np.ndarray
    size_series: np.ndarray
    height_slope: float
    meta: dict

    def rows(self) -> "list[tuple]":
        """CSV rows: n,t,h,radius,size."""
        return list(zip(self.n_series.tolist(), self.t_series.tolist(),
                        self.h_series.tolist(), self.radius_series.tolist(),
                        self.size_series.tolist()))


# ---------------------------------------------------------------------------
# exact sphere-exit law

@lru_cache(maxsize=None)
def diamond_exit_pmf(radius: int) -> "tuple[np.ndarray, np.ndarray]":
    """Exit law of the L1 sphere of the given radius around the start.

    Returns (offsets, pmf) over the 4*radius boundary sites.  In
    u = x1+x2, v = x1-x2 coordinates the walk is two independent +-1
    coordinates stepping at every tick, the sphere is the square
    max(|u|,|v|) = radius, and the exit mass factorizes into first-passage
    times survival of one path-graph chain.  Both factors expand in the
    explicit sine eigenbasis and the sum over time is geometric, leaving
    the O(radius^2) double sums below.
    """
    rho = int(radius)
    if rho < 1:
        raise DomainError("sphere radius must be >= 1")
    m = 2 * rho - 1
    j = np.arange(1, m + 1, dtype=np.float64)
    lam = np.cos(np.pi * j / (2 * rho))
    c = np.sin(np.pi * j / 2.0) / rho          # start expansion, phi_j(0)/rho
    first = c * np.sin(np.pi * j * (2 * rho - 1) / (2.0 * rho))
    ks = np.arange(-rho + 1, rho)
    phi_k = np.sin(np.pi * np.outer(j, ks + rho) / (2.0 * rho))
    resolvent = 1.0 / (1.0 - np.outer(lam, lam))
    # P(one coordinate exits at +rho at time t) = first/2 summed against
    # the other coordinate's survival at k; simultaneous exits stack two
    # first-passage factors and land on a corner of the square.
    edge = 0.5 * (first @ resolvent) @ ((c * lam)[:, None] * phi_k)
    corner = 0.25 * float(first @ resolvent @ first)

    mass = 4.0 * float(edge.sum()) + 4.0 * corner
    if abs(mass - 1.0) > 1e-9:
        raise DomainError(f"sphere exit mass {mass!r} is off unity")
    offsets = []
    pmf = []
    for k_idx in range(ks.size):
        k = int(ks[k_idx])
        if (k - rho) % 2 != 0:
            continue                            # parity: k and rho agree mod 2
        a = (rho + k) // 2
        b = (rho - k) // 2
        p = float(edge[k_idx])
        offsets += [(a, b), (-b, -a), (a, -b), (-b, a)]
        pmf += [p, p, p, p]
    offsets += [(rho, 0), (0, rho), (0, -rho), (-rho, 0)]
    pmf += [corner] * 4
    off = np.array(offsets, dtype=np.int64)
    out = np.array(pmf, dtype=np.float64)
    out /= out.sum()
    return off, out


@lru_cache(maxsize=None)
def _jump_tables(radius_max: int):
    """Stacked alias tables for dyadic sphere radii 2..radius_max.

    Scale s holds radius 2**s; joff[s]..joff[s+1] indexes its slice of the
    flat (dx, dy, prob, alias) arrays.
    """
    n_scales = int(round(math.log2(radius_max)))
    dxs, dys, probs, aliases = [], [], [], []
    # joff[s] is the start of scale s's slice, s = 1..n_scales
    joff = np.zeros(n_scales + 2, dtype=np.int64)
    for s in range(1, n_scales + 1):
        off, pmf = diamond_exit_pmf(2**s)
        prob, alias = build_alias(pmf)
        dxs.append(off[:, 0].copy())
        dys.append(off[:, 1].copy())
        probs.append(prob)
        aliases.append(alias)
        joff[s + 1] = joff[s] + pmf.size
    return (n_scales,
            np.concatenate(dxs), np.concatenate(dys),
            np.concatenate(probs), np.concatenate(aliases), joff)


# ---------------------------------------------------------------------------
# walker kernels

_U53 = 1.1102230246251565e-16


@njit(cache=True)
def _absorb_walk(wkey, ctr, x1, x2, width, top, xa, xb, grid0, grid_h,
                 pyr, pyr_off, pyr_bh, n_scales, smax_w,
                 jdx, jdy, jprob, jalias, joff, dkprob, dkalias, step_cap):
    """Walk one walker to absorption below the cluster top.

    Returns (status, a1, a2, p1, p2): status 0 cluster hit with source
    (a1,a2) and penultimate (p1,p2), 1 bare floor hit, 2 step cap.  The
    strip above row `top` is empty, so whenever a move lands k rows above
    it the rest of that excursion, down to its first return to `top`, is
    replaced by its exact horizontal displacement: the k-fold convolution
    of the one-row descent law, drawn as one alias sample per set bit of k
    from the dyadic power tables (dkprob, dkalias).  The walk therefore
    lives entirely in the rows the cluster occupies and nothing above can
    pinch it.  Leaps use the sphere tables; a leap is legal at scale s
    when 2**s fits under the walker and no cluster site sits within the
    nine scale-s blocks around it, so spheres never contain cluster sites
    and touch the floor only at their south pole (sky overshoot is handled
    by the collapse).  Columns more than twice the leap radius away from
    the occupied column arc [xa, xb] pass the block test by distance
    alone, sparing the reads for the far majority of the window.
    """
    arc = (xb - xa) % width
    p1 = x1
    p2 = x2
    steps = 0
    while steps < step_cap:
        s = 0
        room = x2
        if room >= 2:
            smax = 0
            v = room
            while v >= 2 and smax < n_scales:
                v >>= 1
                smax += 1
            if smax > smax_w:
                smax = smax_w
            rel = (x1 - xa) % width
            if rel <= arc:
                far = 0
            else:
                d1 = width - rel
                d2 = rel - arc
                far = d1 if d1 < d2 else d2
            for s_try in range(smax, 0, -1):
                if far >= (2 << s_try):
                    s = s_try
                    break
                bw = width >> s_try
                bh = pyr_bh[s_try]
                base = pyr_off[s_try]
                bx = x1 >> s_try
                by = x2 >> s_try
                clear = True
                for dyb in range(-1, 2):
                    yy = by + dyb
                    if yy < 0 or yy >= bh:
                        continue
                    for dxb in range(-1, 2):
                        xx = (bx + dxb) % bw
                        if pyr[base + xx * bh + yy] != 0:
                            clear = False
                            break
                    if not clear:
                        break
                if clear:
                    s = s_try
                    break
        if s == 0:
            w = bits_nb(wkey, ctr)
            ctr += uint64(1)
            d = w & uint64(3)
            p1 = x1
            p2 = x2
            if d == uint64(0):
                x1 = (x1 + 1) % width
            elif d == uint64(1):
                x1 = (x1 - 1 + width) % width
            elif d == uint64(2):
                x2 += 1
            else:
                x2 -= 1
            if x2 == 0:
                if grid0[x1, 0] != 0:
                    return 0, x1, 0, p1, p2, ctr
                return 1, x1, 0, p1, p2, ctr
            if x2 <= grid_h and grid0[x1, x2] != 0:
                return 0, x1, x2, p1, p2, ctr
        else:
            u = (bits_nb(wkey, ctr) >> uint64(11)) * _U53
            ctr += uint64(1)
            o = joff[s]
            n = joff[s + 1] - o
            idx = o + _alias_draw(u, jprob[o:o + n], jalias[o:o + n], n)
            x1 = (x1 + jdx[idx] + width) % width
            x2 = x2 + jdy[idx]
            if x2 == 0:
                # south pole: the walk enters it from straight above
                if grid0[x1, 0] != 0:
                    return 0, x1, 0, x1, 1, ctr
                return 1, x1, 0, x1, 1, ctr
        if x2 > top:
            k = x2 - top
            j = 0
            while k:
                if k & 1:
                    u = (bits_nb(wkey, ctr) >> uint64(11)) * _U53
                    ctr += uint64(1)
                    x1 = (x1 + _alias_draw(u, dkprob[j], dkalias[j],
                                           width)) % width
                k >>= 1
                j += 1
            x2 = top
        steps += 1
    return 2, x1, x2, p1, p2, ctr


@njit(cache=True)
def _launch_until_growth(lkey, width, top, xa, xb, grid0, grid_h,
                         pyr, pyr_off, pyr_bh, n_scales, smax_w,
                         jdx, jdy, jprob, jalias, joff, dkprob, dkalias,
                         resample_limit, step_cap):
    """Launch walkers until one sticks to the cluster.

    Each attempt starts at a uniform column of the row just above the
    cluster top and burns an Exp(1) clock tick (the launch stream has one
    unit of rate per column, so callers divide the returned clock sum by
    the width).  Returns (status, source1, source2, target1, target2,
    attempts, censored, clock): status 0 growth, 1 resample limit.
    """
    clock = 0.0
    censored = 0
    for i in range(resample_limit):
        wkey = derive_nb(lkey, uint64(i))
        u = (bits_nb(wkey, uint64(0)) >> uint64(11)) * _U53
        clock += -math.log(1.0 - u)
        u0 = (bits_nb(wkey, uint64(1)) >> uint64(11)) * _U53
        x1 = int(u0 * width)
        if x1 >= width:
            x1 = width - 1
        st, a1, a2, p1, p2, _ = _absorb_walk(
            wkey, uint64(2), x1, top, width, top, xa, xb,
            grid0, grid_h, pyr, pyr_off, pyr_bh, n_scales, smax_w,
            jdx, jdy, jprob, jalias, joff, dkprob, dkalias, step_cap)
        if st == 0:
            return 0, a1, a2, p1, p2, i + 1, censored, clock
        if st == 2:
            censored += 1
    return 1, 0, 0, 0, 0, resample_limit, censored, clock


@njit(cache=True)
def _landing_freq(lkey0, n_accepted, width, top, xa, xb,
                  grid0, grid_h,
                  pyr, pyr_off, pyr_bh, n_scales, smax_w,
                  jdx, jdy, jprob, jalias, joff, dkprob, dkalias,
                  resample_limit, step_cap, counts):
    """Tally penultimate landing sites of n_accepted stuck walkers."""
    attempts = 0
    censored = 0
    for k in range(n_accepted):
        lkey = derive_nb(lkey0, uint64(k))
        st, a1, a2, p1, p2, att, cen, _ = _launch_until_growth(
            lkey, width, top, xa, xb, grid0, grid_h,
            pyr, pyr_off, pyr_bh, n_scales, smax_w,
            jdx, jdy, jprob, jalias, joff, dkprob, dkalias,
            resample_limit, step_cap)
        attempts += att
        censored += cen
        if st != 0:
            return 1, attempts, censored
        counts[p1, p2] += 1
    return 0, attempts, censored


# ---------------------------------------------------------------------------
# the engine

def _next_pow2(n: int) -> int:
    return 1 << max(0, (int(n) - 1).bit_length())


class _Engine:
    """Grids, tables, and the stepping loop behind the public runs.

    Owns one trajectory.  Cluster sites live in absolute coordinates; the
    grids index columns mod width, which is collision-free because the
    width policy keeps the window at least eight times the cluster's
    horizontal reach.
    """

    def __init__(self, state: AggregateState, config: EngineConfig,
                 stream: Stream, width_override: "int | None" = None):
        if not state.cluster.contains_origin:
            raise DomainError("growth starts from a cluster holding (0,0)")
        # height and radius are caches of cluster functionals; recompute
        # here so a hand-assembled state cannot desynchronize the launch
        # row from the actual cluster top
        state.height = state.cluster.max_height
        state.radius = max(norm1(s) for s in state.cluster.sites())
        self.state = state
        self.config = config
        self.stream = stream
        self.censored_walks = 0
        tables = _jump_tables(config.jump_radius_max)
        (self._n_scales, self._jdx, self._jdy,
         self._jprob, self._jalias, self._joff) = tables
        if width_override is not None:
            if width_override & (width_override - 1):
                raise DomainError("width must be a power of two")
            if width_override < self._policy_width():
                raise DomainError(
                    f"width below the policy window {self._policy_width()}")
        self.width_override = width_override
        self.width = 0
        self._rebuild()

    # -- geometry bookkeeping

    def _policy_width(self) -> int:
        st = self.state
        k = self.config.ceiling_multiple
        need = max(k * (st.height + 2), k * (2 * st.radius + 4),
                   self.config.min_width)
        return _next_pow2(need)

    def _required_width(self) -> int:
        if self.width_override is not None:
            return self.width_override
        return self._policy_width()

    def _rebuild(self) -> None:
        st = self.state
        self.width = self._required_width()
        self.grid_h = _next_pow2(max(st.height + 2, 16))
        self.smax_w = int(round(math.log2(self.width // 4)))
        if self.smax_w > self._n_scales:
            self.smax_w = self._n_scales
        self.grid0 = np.zeros((self.width, self.grid_h + 1), dtype=np.uint8)
        bh = [0]
        off = [0]
        total = 0
        self._s_built = min(self._n_scales, self.smax_w)
        for s in range(1, self._s_built + 1):
            h_s = (self.grid_h >> s) + 1
            bh.append(h_s)
            off.append(total)
            total += (self.width >> s) * h_s
        self.pyr_off = np.array(off, dtype=np.int64)
        self.pyr_bh = np.array(bh, dtype=np.int64)
        self.pyr = np.zeros(total, dtype=np.uint8)
        # dyadic powers of the one-row descent law; a move landing k rows
        # above the cluster top collapses with one draw per set bit of k,
        # and k never exceeds min(grid height, leap radius)
        kmax = min(self.grid_h, self.config.jump_radius_max)
        theta = 2.0 * np.pi * np.arange(self.width // 2 + 1) / self.width
        sym = measure.descent_symbol(theta)
        rows = kmax.bit_length()
        self.dk_prob = np.empty((rows, self.width), dtype=np.float64)
        self.dk_alias = np.empty((rows, self.width), dtype=np.int64)
        for j in range(rows):
            pmf = np.clip(np.fft.irfft(sym, n=self.width), 0.0, None)
            prob, alias = build_alias(pmf / pmf.sum())
            self.dk_prob[j] = prob
            self.dk_alias[j] = alias
            sym = sym * sym
        self._by_mod = {}
        self.x_lo = 0
        self.x_hi = 0
        for site in self.state.cluster.sites():
            self._mark(site)

    def _mark(self, site: Site) -> None:
        x1 = site[0] % self.width
        x2 = site[1]
        self.grid0[x1, x2] = 1
        self._by_mod[(x1, x2)] = site
        if site[0] < self.x_lo:
            self.x_lo = site[0]
        elif site[0] > self.x_hi:
            self.x_hi = site[0]
        if x2 >= 1:
            for s in range(1, self._s_built + 1):
                self.pyr[self.pyr_off[s]
                         + (x1 >> s) * self.pyr_bh[s] + (x2 >> s)] = 1

    def _absolute(self, mod_site: "tuple[int, int]",
                  near: Site) -> Site:
        """Lift a mod-width site to absolute coordinates next to `near`."""
        d = (mod_site[0] - near[0]) % self.width
        if d > self.width // 2:
            d -= self.width
        return (near[0] + d, mod_site[1])

    # -- stepping

    def _grow_once(self) -> "tuple[Site, Site, int, float]":
        st = self.state
        cfg = self.config
        lkey = np.uint64(self.stream.bits())
        status, a1, a2, p1, p2, attempts, censored, clock = \
            _launch_until_growth(
                lkey, self.width, st.height + 1,
                self.x_lo % self.width, self.x_hi % self.width,
                self.grid0, self.grid_h,
                self.pyr, self.pyr_off, self.pyr_bh,
                self._n_scales, self.smax_w,
                self._jdx, self._jdy, self._jprob, self._jalias, self._joff,
                self.dk_prob, self.dk_alias,
                cfg.resample_limit, cfg.step_cap)
        self.censored_walks += int(censored)
        if status != 0:
            raise ResampleLimit(
                f"{cfg.resample_limit} consecutive walkers hit the floor")
        # lift the mod-width hit back to the cluster's absolute frame
        source = self._by_mod.get((int(a1), int(a2)))
        if source is None:
            raise RuntimeError("absorption source is not a cluster site")
        target = self._absolute((int(p1), int(p2)), source)
        if target in st.cluster or target[1] < 1 or \
                abs(target[0] - source[0]) + abs(target[1] - source[1]) != 1:
            raise RuntimeError("walker produced an illegal growth site")
        return source, target, int(attempts), clock / self.width

    def _apply(self, source: Site, target: Site, t: float) -> None:
        st = self.state
        st.cluster.add(target)
        st.n += 1
        st.t = t
        if target[1] > st.height:
            st.height = target[1]
        r = norm1(target)
        if r > st.radius:
            st.radius = r
        st.event_log.append(t, source, target)
        if self._required_width() > self.width or \
                st.height + 1 >= self.grid_h:
            self._rebuild()
        else:
            self._mark(target)

    def step_discrete(self) -> "tuple[Site, Site]":
        source, target, _, _ = self._grow_once()
        self._apply(source, target, float(self.state.n + 1))
        return source, target

    def step_continuous(self, horizon: float) -> "tuple[Site, Site] | None":
        source, target, _, dt = self._grow_once()
        t_event = self.state.t + dt
        if t_event > horizon:
            self.state.t = horizon
            return None
        self._apply(source, target, t_event)
        return source, target


# ---------------------------------------------------------------------------
# public operations

def dla_step_discrete(state: AggregateState, config: "EngineConfig | None" = None,
                      rng: "Stream | None" = None) -> AggregateState:
    """Grow the cluster by one site of the conditioned landing law.

    Mutates and returns the state.  The walker launches from a uniform
    column one row above the cluster; uniform entry there is exactly what
    a uniform launch from any higher row produces, and excursions back
    above it are folded into their exact return displacement, so the
    ceiling multiple in the config only widens the window.  Floor hits
    resample, up to the configured limit.
    """
    cfg = config or DEFAULT_CONFIG
    if rng is None:
        raise DomainError("a Stream is required")
    if len(state.cluster) == 0:
        raise DomainError("the cluster must be nonempty")
    engine = _Engine(state, cfg, rng)
    engine.step_discrete()
    return state


def dla_run_discrete(n_steps: int, config: "EngineConfig | None" = None,
                     seed: int = 0) -> TrajectoryReport:
    """Run the discrete chain from the origin and fit its height growth."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    cfg = config or DEFAULT_CONFIG
    stream = Stream.from_path(seed, "dla", "discrete")
    engine = _Engine(AggregateState.initial(), cfg, stream)
    series = [(0, 0.0, 0, 0, 1)]
    for _ in range(n_steps):
        engine.step_discrete()
        st = engine.state
        series.append((st.n, float(st.n), st.height, st.radius,
                       len(st.cluster)))
    return _trajectory_report(engine, series, seed)


def dla_run_continuous(t_max: float, config: "EngineConfig | None" = None,
                       seed: int = 0) -> AggregateState:
    """Run the timed growth process from the origin up to time t_max.

    Launches arrive at total rate equal to the window width, uniformly
    over columns, so a boundary site y collects growth events at exactly
    its outer-measure rate and the embedded jump chain is the discrete
    sampler.  At event counts audit_every, 2x, 4x, ... (while the cluster
    is small enough to solve exactly) the current edge measures are
    checked against the envelope bound; an excess raises
    EnvelopeViolation.
    """
    if not t_max > 0:
        raise DomainError("t_max must be positive")
    cfg = config or DEFAULT_CONFIG
    stream = Stream.from_path(seed, "dla", "continuous")
    engine = _Engine(AggregateState.initial(), cfg, stream)
    st = engine.state
    while st.t < t_max:
        if engine.step_continuous(t_max) is None:
            break
        q, r = divmod(st.n, cfg.audit_every) if cfg.audit_every else (0, 1)
        if r == 0 and q & (q - 1) == 0 and \
                len(st.cluster) <= cfg.audit_site_cap:
            audit_envelope(st.cluster, cfg.envelope_c)
    return st


def _trajectory_report(engine: _Engine, series: list,
                       seed: int) -> TrajectoryReport:
    arr = np.array(series, dtype=np.float64)
    n_s = arr[:, 0].astype(np.int64)
    h_s = arr[:, 2].astype(np.int64)
    slope = _final_decade_slope(n_s, h_s)
    return TrajectoryReport(
        state=engine.state,
        n_series=n_s,
        t_series=arr[:, 1],
        h_series=h_s,
        radius_series=arr[:, 3].astype(np.int64),
        size_series=arr[:, 4].astype(np.int64),
        height_slope=slope,
        meta={"seed": seed, "width": engine.width,
              "censored_walks": engine.censored_walks,
              "config": engine.config},
    )


def _final_decade_slope(n_s: np.ndarray, h_s: np.ndarray) -> float:
    """Log-log height-vs-step slope over the last decade of steps."""
    n_max = int(n_s[-1]) if n_s.size else 0
    if n_max < 10:
        return float("nan")
    keep = (n_s >= max(1, n_max // 10)) & (h_s >= 1)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log10(n_s[keep]), np.log10(h_s[keep]), 1)[0])


def landing_frequencies(cluster: Cluster, n_accepted: int, seed: int,
                        config: "EngineConfig | None" = None,
                        width: "int | None" = None) -> "tuple[dict, dict]":
    """Empirical landing-site frequencies on a frozen cluster.

    Runs the engine's sampler n_accepted times without growing and tallies
    the site each stuck walker came from.  Returns (counts keyed by
    absolute site, meta with attempts/width/censored).  `width` overrides
    the policy window, which is how the ceiling-multiple sensitivity runs
    double it.
    """
    if n_accepted < 1:
        raise DomainError("need at least one accepted walker")
    cfg = config or DEFAULT_CONFIG
    st = _frozen_state(cluster)
    engine = _Engine(st, cfg, Stream.from_path(seed, "dla", "landing"),
                     width_override=width)
    counts = np.zeros((engine.width, engine.grid_h + 2), dtype=np.int64)
    lkey0 = np.uint64(stream_key(seed, "dla", "landing-batch"))
    status, attempts, censored = _landing_freq(
        lkey0, int(n_accepted), engine.width, st.height + 1,
        engine.x_lo % engine.width, engine.x_hi % engine.width,
        engine.grid0, engine.grid_h,
        engine.pyr, engine.pyr_off, engine.pyr_bh,
        engine._n_scales, engine.smax_w,
        engine._jdx, engine._jdy, engine._jprob, engine._jalias, engine._joff,
        engine.dk_prob, engine.dk_alias,
        cfg.resample_limit, cfg.step_cap, counts)
    if status != 0:
        raise ResampleLimit(
            f"{cfg.resample_limit} consecutive walkers hit the floor")
    hits = {}
    for x1, x2 in zip(*np.nonzero(counts)):
        site = _lift_column(int(x1), int(x2), cluster, engine.width)
        hits[site] = int(counts[x1, x2])
    meta = {"attempts": int(attempts), "censored": int(censored),
            "width": engine.width, "n_accepted": int(n_accepted)}
    return hits, meta


def _frozen_state(cluster: Cluster) -> AggregateState:
    # the engine recomputes the height and radius caches itself
    return AggregateState(cluster=cluster.copy())


def _lift_column(x1_mod: int, x2: int, cluster: Cluster, width: int) -> Site:
    """Pick the absolute column of a landing site from its mod-width one.

    Landing sites neighbour the cluster, whose horizontal reach is far
    inside one window, so exactly one representative is adjacent to it.
    """
    for cand_base in (x1_mod, x1_mod - width, x1_mod + width):
        site = (cand_base, x2)
        for nb in neighbors(site):
            if nb in cluster:
                return site
    raise RuntimeError("landing site not adjacent to the cluster")


def audit_envelope(cluster: Cluster, envelope_c: float = 6.0,
                   height: int = None) -> float:
    """Check every edge measure against its rate envelope.

    The growth construction thins edge clocks of rate envelope_c * sqrt of
    the source height (rate 1 for floor sources); validity needs every
    acceptance ratio at most one, i.e. every edge measure at most its
    envelope.  Solves the cluster once on the policy window; the
    width-doubling certificate is skipped because a yes/no comparison
    against a loose bound has no use for its extra digits.  Raises
    EnvelopeViolation on any excess and returns the worst ratio observed.
    """
    h = height or cluster.max_height + 1
    dom = measure.TruncatedDomain(
        measure.default_width(h, cluster.horizontal_extent), h)
    profile = measure.exact_profile(cluster, h, domain=dom)
    worst = 0.0
    for (x, y), est in profile.edge_measure.items():
        env = envelope_c * math.sqrt(x[1]) if x[1] >= 1 else 1.0
        ratio = est.value / env
        if ratio > worst:
            worst = ratio
        if est.value > env + 1e-9:
            raise EnvelopeViolation(
                f"edge {x}->{y} carries {est.value!r} above its envelope {env!r}")
    return worst


def moment_tail_report(t_max: float, m: int, n_runs: int, seed: int = 0,
                       config: "EngineConfig | None" = None) -> dict:
    """Empirical radius moment at t_max with bootstrap CI and tail shape.

    A consistency report, explicitly labeled as such: finiteness of the
    true moments is not something a finite batch can verify.  Checkpoints
    at quarters of t_max reuse the same runs, so their moments are
    pathwise monotone.  The tail histogram covers values above the 95th
    percentile in geometric bins.
    """
    if m not in (1, 2, 3, 4):
        raise DomainError("moment order must be in 1..4")
    if n_runs < 100:
        raise DomainError("need at least 100 runs")
    if t_max < 0:
        raise DomainError("t_max must be >= 0")
    cfg = config or DEFAULT_CONFIG
    checkpoints = [t_max / 4, t_max / 2, t_max] if t_max > 0 else [0.0]
    radii = np.zeros((n_runs, len(checkpoints)), dtype=np.float64)
    if t_max > 0:
        for i in range(n_runs):
            stream = Stream.from_path(seed, "dla", "moment", i)
            engine = _Engine(AggregateState.initial(), cfg, stream)
            while engine.state.t < t_max:
                if engine.step_continuous(t_max) is None:
                    break
            # radius at time s = largest reach among events up to s
            r = 0.0
            k = 0
            for t, _, target, _ in engine.state.event_log:
                while k < len(checkpoints) and t > checkpoints[k]:
                    radii[i, k] = r
                    k += 1
                r = max(r, float(norm1(target)))
            while k < len(checkpoints):
                radii[i, k] = r
                k += 1
    values = radii[:, -1] ** m
    mean = float(values.mean())
    boot = Stream.from_path(seed, "dla", "moment", "boot")
    res = np.empty(1000)
    for b in range(res.size):
        idx = boot.bits_block(n_runs) % n_runs
        res[b] = values[idx].mean()
    lo, hi = np.percentile(res, [2.5, 97.5])
    p95 = float(np.percentile(values, 95.0))
    tail = values[values >= p95]
    if tail.size and tail.max() > p95 > 0:
        edges = np.geomspace(p95, float(tail.max()), 5)
        edges[-1] = np.nextafter(edges[-1], np.inf)
        tail_counts, _ = np.histogram(tail, bins=edges)
    else:
        edges = np.array([p95, p95])
        tail_counts = np.array([int(tail.size)])
    return {
        "label": "consistency report; finiteness is not desk-checkable",
        "t": float(t_max), "m": int(m), "n_runs": int(n_runs),
        "moment": mean, "ci_low": float(lo), "ci_high": float(hi),
        "checkpoints": {float(c): float((radii[:, k] ** m).mean())
                        for k, c in enumerate(checkpoints)},
        "tail_edges": edges, "tail_counts": tail_counts,
        "values": values,
    }
