"""Sites, clusters, and the named site families used throughout.

Sites are plain (x1, x2) integer tuples.  The half plane constraint x2 >= 0
is enforced at cluster boundaries, not on every helper: full-plane sets (the
diamond arcs, L1 balls) are legitimate objects for the full-plane walks.

A Cluster is a finite set of sites with deterministic iteration order and a
generation counter that bumps on every mutation.  Sets that conceptually
contain the whole floor line (like U_n) carry ``includes_floor=True`` and
store only their finite part; the measure code treats the floor implicitly.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Iterator, Optional

from .errors import DomainError, TooSmall

Site = tuple  # (x1, x2)


def norm1(site: Site) -> int:
    """L1 norm |x1| + |x2|."""
    return abs(site[0]) + abs(site[1])


def neighbors(site: Site) -> "tuple[Site, Site, Site, Site]":
    """The four lattice neighbors, full plane."""
    x1, x2 = site
    return ((x1 + 1, x2), (x1 - 1, x2), (x1, x2 + 1), (x1, x2 - 1))


def half_plane_neighbors(site: Site) -> "list[Site]":
    """Neighbors with x2 >= 0."""
    return [w for w in neighbors(site) if w[1] >= 0]


class Cluster:
    """A finite site set, optionally riding on the full absorbing floor.

    Iteration follows insertion order, so any loop over a cluster is
    reproducible given the construction sequence.  Membership is O(1).
    """

    __slots__ = ("_sites", "includes_floor", "generation")

    def __init__(self, sites: Iterable[Site] = (), includes_floor: bool = False):
        self._sites: "dict[Site, None]" = {}
        self.includes_floor = includes_floor
        self.generation = 0
        for s in sites:
            self.add(s)

    def add(self, site: Site) -> None:
        x1, x2 = site
        if x2 < 0:
            raise DomainError(f"site {site} below the floor")
        s = (int(x1), int(x2))
        if s not in self._sites:
            self._sites[s] = None
            self.generation += 1

    def __contains__(self, site: Site) -> bool:
        if self.includes_floor and site[1] == 0:
            return True
        return tuple(site) in self._sites

    def __iter__(self) -> Iterator[Site]:
        return iter(self._sites)

    def __len__(self) -> int:
        return len(self._sites)

    def __repr__(self) -> str:
        floor = ", +floor" if self.includes_floor else ""
        return f"Cluster({len(self._sites)} sites{floor})"

    def sites(self) -> "list[Site]":
        return list(self._sites)

    def sorted_sites(self) -> "list[Site]":
        return sorted(self._sites)

    @property
    def contains_origin(self) -> bool:
        return (0, 0) in self._sites

    @property
    def max_height(self) -> int:
        if not self._sites:
            return 0
        return max(s[1] for s in self._sites)

    @property
    def min_height(self) -> int:
        if self.includes_floor or not self._sites:
            return 0
        return min(s[1] for s in self._sites)

    def column_span(self) -> "tuple[int, int]":
        if not self._sites:
            return (0, 0)
        cols = [s[0] for s in self._sites]
        return (min(cols), max(cols))

    @property
    def horizontal_extent(self) -> int:
        lo, hi = self.column_span()
        return hi - lo

    def elevated_sites(self) -> "list[Site]":
        """Sites strictly above the floor, insertion order."""
        return [s for s in self._sites if s[1] >= 1]

    def copy(self) -> "Cluster":
        c = Cluster(includes_floor=self.includes_floor)
        c._sites = dict(self._sites)
        c.generation = self.generation
        return c

    def is_connected(self) -> bool:
        """BFS connectivity.

        With an implicit floor, each finite component only needs to reach the
        floor (a site at height <= 1 is linked to it); the floor line itself
        is connected.
        """
        if not self._sites:
            return True
        if self.includes_floor:
            comps = self._components()
            return all(any(s[1] <= 1 for s in comp) for comp in comps)
        return len(self._components()) == 1

    def _components(self) -> "list[list[Site]]":
        seen: "set[Site]" = set()
        comps = []
        for start in self._sites:
            if start in seen:
                continue
            comp = [start]
            seen.add(start)
            queue = [start]
            while queue:
                cur = queue.pop()
                for w in neighbors(cur):
                    if w in self._sites and w not in seen:
                        seen.add(w)
                        comp.append(w)
                        queue.append(w)
            comps.append(comp)
        return comps

    def outer_boundary(self) -> "list[Site]":
        """Sites of H adjacent to the cluster but outside it, sorted."""
        if self.includes_floor:
            raise DomainError("outer boundary is infinite with an implicit floor")
        out = set()
        for s in self._sites:
            for w in neighbors(s):
                if w[1] >= 0 and w not in self._sites:
                    out.add(w)
        return sorted(out)

    def boundary_edges(self) -> "list[tuple[Site, Site]]":
        """Directed edges (x, y), x inside, y outside in H, sorted."""
        if self.includes_floor:
            raise DomainError("boundary edges are infinite with an implicit floor")
        edges = []
        for s in self._sites:
            for w in neighbors(s):
                if w[1] >= 0 and w not in self._sites:
                    edges.append((s, w))
        return sorted(edges)

    # -- snapshot format: one "x1 x2" per line, sorted lexicographically --

    def to_text(self) -> str:
        if self.includes_floor:
            raise DomainError("snapshots hold finite clusters only")
        return "".join(f"{x1} {x2}\n" for x1, x2 in self.sorted_sites())

    @classmethod
    def from_text(cls, text: str) -> "Cluster":
        c = cls()
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            a, b = line.split()
            c.add((int(a), int(b)))
        return c


# ---------------------------------------------------------------------------
# named families

def vertical_segment(n: int) -> Cluster:
    """V_n: the column (0,0)..(0,n); n+1 sites."""
    if n < 0:
        raise DomainError("segment height must be >= 0")
    return Cluster((0, i) for i in range(n + 1))


def segment_with_floor(n: int) -> Cluster:
    """U_n: the floor line plus the vertical segment up to (0,n)."""
    c = vertical_segment(n)
    c.includes_floor = True
    return c


def segment_tip(n: int) -> Site:
    """y_n = (0, n), the top of the vertical segment."""
    return (0, n)


def l1_sphere(center: Site, r: int) -> "list[Site]":
    """Sites at L1 distance exactly r from center, full plane, sorted."""
    if r < 0:
        raise DomainError("radius must be >= 0")
    if r == 0:
        return [tuple(center)]
    cx, cy = center
    pts = set()
    for a in range(-r, r + 1):
        b = r - abs(a)
        pts.add((cx + a, cy + b))
        pts.add((cx + a, cy - b))
    return sorted(pts)


def l1_ball(center: Site, r: int) -> "list[Site]":
    """Sites at L1 distance <= r from center, full plane, sorted."""
    cx, cy = center
    out = []
    for a in range(-r, r + 1):
        b = r - abs(a)
        for y in range(cy - b, cy + b + 1):
            out.append((cx + a, y))
    return sorted(out)


def diamond_arcs(m: int) -> "dict[str, list[Site]]":
    """The four pieces of the slit-diamond geometry around the origin.

    a_plus / a_minus are the upper and lower halves of the L1 sphere of
    radius m (each includes the two horizontal corners (+-m, 0)); c_plus /
    c_minus are the vertical segments from the origin to (0, +-m).
    """
    if m < 1:
        raise DomainError("diamond radius must be >= 1")
    a_plus = sorted(
        {(x, m - x) for x in range(0, m + 1)} | {(x, m + x) for x in range(-m, 1)}
    )
    a_minus = sorted(
        {(x, -m - x) for x in range(-m, 1)} | {(x, x - m) for x in range(0, m + 1)}
    )
    c_plus = [(0, i) for i in range(m + 1)]
    c_minus = [(0, -i) for i in range(m + 1)]
    return {
        "a_plus": a_plus,
        "a_minus": a_minus,
        "c_plus": c_plus,
        "c_minus": c_minus,
    }


def slit_diamond(m: int, both_slits: bool) -> "set[Site]":
    """E_m with both slits, or E_m^- with only the lower one."""
    arcs = diamond_arcs(m)
    out = set(arcs["a_plus"]) | set(arcs["a_minus"]) | set(arcs["c_minus"])
    if both_slits:
        out |= set(arcs["c_plus"])
    return out


def grow_random_cluster(stream, n_sites: int, seed_site: Site = (0, 0)) -> Cluster:
    """Random connected cluster: repeatedly annex a uniform boundary site.

    Eden-style growth inside H.  Deterministic given the stream state.
    """
    if n_sites < 1:
        raise DomainError("cluster needs at least one site")
    c = Cluster([seed_site])
    frontier = [w for w in half_plane_neighbors(seed_site)]
    while len(c) < n_sites and frontier:
        pick = stream.randint(len(frontier))
        site = frontier.pop(pick)
        if site in c:
            continue
        c.add(site)
        for w in half_plane_neighbors(site):
            if w not in c:
                frontier.append(w)
    return c


# ---------------------------------------------------------------------------
# closed-form walk identities

def gamblers_ruin(x2: int, n: int) -> Fraction:
    """P(reach height n before the floor | start height x2), exactly x2/n."""
    if n < 1:
        raise DomainError("ceiling height must be >= 1")
    if x2 < 0 or x2 > n:
        raise DomainError(f"start height {x2} outside [0, {n}]")
    return Fraction(x2, n)


def expected_ceiling_visits(n: int) -> Fraction:
    """Expected visits to the ceiling line before the floor, started on it.

    Equals 4n for every start column: one visit per up-crossing chance,
    four-to-one step accounting against the gambler's ruin escape rate.
    """
    if n < 1:
        raise DomainError("ceiling height must be >= 1")
    return Fraction(4 * n, 1)


def removable_vertices(cluster: Cluster) -> "tuple[Site, Site]":
    """Two sites whose individual removal keeps the cluster connected.

    Returns the lexicographically smallest valid pair; each candidate is
    re-verified by BFS before being returned.
    """
    if cluster.includes_floor:
        raise DomainError("needs a finite cluster")
    if len(cluster) < 2:
        raise TooSmall("need at least two sites")
    if not cluster.is_connected():
        raise DomainError("cluster must be connected")
    found = []
    members = set(cluster.sites())
    for cand in cluster.sorted_sites():
        rest = members - {cand}
        if _connected_set(rest):
            found.append(cand)
            if len(found) == 2:
                return (found[0], found[1])
    # a finite connected graph always has two non-cut vertices
    raise DomainError("no removable pair found; cluster is malformed")


def _connected_set(sites: "set[Site]") -> bool:
    if not sites:
        return True
    start = next(iter(sites))
    seen = {start}
    queue = [start]
    while queue:
        cur = queue.pop()
        for w in neighbors(cur):
            if w in sites and w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == len(sites)
