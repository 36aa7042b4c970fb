"""Exact fields and hitting measures for floor-absorbed walks on a strip.

The infinite strip below a ceiling row is truncated to a periodic cylinder of
even width W.  Everything exact rests on one observation: the walk watched at
heights <= N is again a Markov chain once an up-step off row N is replaced by
the horizontal displacement the walk accumulates above the row before first
coming back down, and that displacement has an explicit Fourier symbol.  Per
horizontal mode the field equations are tridiagonal in the height, so a solve
costs one FFT, one Thomas sweep, and one inverse FFT.

A finite absorbing cluster enters through a rank-m correction.  With G the
floor-only Green operator and S the cluster's sites above the floor, the
absorbed visit field is f = G r - G 1_S lam, where lam zeroes f on S.  The
matrix G[S,S] is symmetric positive definite, so lam comes out of a Cholesky
factor, and the same factor gives the equilibrium weights behind the second,
independent route to the total mass.

Values computed here depend on the ceiling height only through roundoff: the
displacement symbol is its own fixed point under adding another layer, so
raising the ceiling leaves the watched chain, and hence every measure below
it, unchanged.  Tests pin that down; the public knobs that matter are the
cluster and the width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, NotConverged, NotOuterBoundary, WindowTooSmall
from .lattice import Cluster, Site, neighbors
from .rng import stream_key
from .walk import build_alias, visits_batch

MAX_WIDTH = 2**16
DOUBLING_RTOL = 1e-6
RESIDUAL_TOL = 1e-10
SPARSE_UNKNOWN_CAP = 50_000

PERIODIC = "periodic"
ABSORBING = "absorbing"


def descent_symbol(theta: np.ndarray) -> np.ndarray:
    """Fourier symbol of the horizontal displacement of one descent.

    For a walk started one row above a line, the displacement D picked up
    before first reaching the line satisfies, by one-step conditioning,
    phi = 1/4 + (cos(theta)/2) phi + phi^2/4; the root with |phi| <= 1 is
    (2 - cos) - sqrt((2 - cos)^2 - 1), written below in a form that avoids
    cancellation near theta = 0.
    """
    t = np.asarray(theta, dtype=np.float64)
    s = 2.0 * np.sin(t / 2.0) ** 2  # 1 - cos(theta), stable for small theta
    return (1.0 + s) - np.sqrt(s * (2.0 + s))


def descent_kernel(width: int) -> np.ndarray:
    """Displacement pmf of one descent, folded onto a width-W circle."""
    if width < 2 or width % 2:
        raise DomainError("kernel width must be even and >= 2")
    theta = 2.0 * np.pi * np.arange(width // 2 + 1) / width
    k = np.fft.irfft(descent_symbol(theta), n=width)
    if k.min() < -1e-12 or abs(k.sum() - 1.0) > 1e-12:
        raise NotConverged("descent kernel failed its mass checks")
    k = np.clip(k, 0.0, None)
    return k / k.sum()


def default_width(height: int, extent: int = 0) -> int:
    """Window policy: wide enough for the ceiling and the cluster."""
    w = max(8 * height, 8 * extent, 16)
    return w + (w % 2)


@dataclass(frozen=True)
class TruncatedDomain:
    """Finite stand-in for the infinite strip below row ``height``."""

    width: int
    height: int
    side_mode: str = PERIODIC

    def __post_init__(self):
        if self.height < 1:
            raise DomainError("ceiling height must be >= 1")
        if self.width < 4:
            raise DomainError("width must be >= 4")
        if self.side_mode not in (PERIODIC, ABSORBING):
            raise DomainError(f"unknown side mode {self.side_mode!r}")
        if self.width % 2:
            raise DomainError("width must be even")


@dataclass
class Estimate:
    """One measured number with its provenance.

    ``stderr`` is 0 exactly when the value came from the exact solver.  A
    Monte Carlo estimate whose censored fraction exceeds 1e-4 is flagged
    unreliable rather than rejected.
    """

    value: float
    stderr: float = 0.0
    n_samples: int = 0
    method: str = "exact_solve"
    seed: int = 0
    censored: int = 0
    converged: bool = True

    @property
    def reliable(self) -> bool:
        if self.method == "exact_solve":
            return True
        return self.censored <= 1e-4 * max(self.n_samples, 1)


@dataclass
class MeasureProfile:
    """All measures of one cluster at one ceiling, with cross-checks."""

    cluster: Cluster
    height: int
    point_measure: "dict[Site, Estimate]"
    outer_measure: "dict[Site, Estimate]"
    edge_measure: "dict[tuple[Site, Site], Estimate]"
    total: Estimate
    meta: dict = dc_field(default_factory=dict)

    def rows(self) -> "list[tuple]":
        """CSV rows: kind,x1,x2,tx1,tx2,value,stderr,method,n_samples,seed."""
        out = []
        for (x1, x2), e in sorted(self.point_measure.items()):
            out.append(("point", x1, x2, "", "", e.value, e.stderr, e.method, e.n_samples, e.seed))
        for (x1, x2), e in sorted(self.outer_measure.items()):
            out.append(("outer", x1, x2, "", "", e.value, e.stderr, e.method, e.n_samples, e.seed))
        for ((x1, x2), (t1, t2)), e in sorted(self.edge_measure.items()):
            out.append(("edge", x1, x2, t1, t2, e.value, e.stderr, e.method, e.n_samples, e.seed))
        e = self.total
        out.append(("total", "", "", "", "", e.value, e.stderr, e.method, e.n_samples, e.seed))
        return out


# ---------------------------------------------------------------------------
# the periodic exact solver

class CylinderSolver:
    """Green operator of the floor-absorbed walk on one cylinder.

    Factors the per-mode tridiagonal systems once; afterwards each field
    solve is two FFTs and two sweeps.  Row indices in field arrays are
    height - 1 (the floor row is identically zero and not stored).
    """

    def __init__(self, width: int, height: int):
        if width % 2 or width < 4:
            raise DomainError("cylinder width must be even and >= 4")
        self.width = width
        self.height = height
        n, w = height, width
        self.theta = 2.0 * np.pi * np.arange(w // 2 + 1) / w
        self.u = descent_symbol(self.theta)
        s = 2.0 * np.sin(self.theta / 2.0) ** 2
        a = (1.0 + s) / 2.0  # 1 - cos(theta)/2
        # forward-elimination diagonals; the ceiling row absorbs u/4
        d = np.empty((w // 2 + 1, n))
        d[:, 0] = a - (self.u / 4.0 if n == 1 else 0.0)
        for j in range(1, n):
            d[:, j] = a - 1.0 / (16.0 * d[:, j - 1])
            if j == n - 1:
                d[:, j] -= self.u / 4.0
        self._diag = d
        # all-Dirichlet variant (absorbing ceiling), rows 1..n-1
        dg = np.empty((w // 2 + 1, max(n - 1, 0)))
        if n > 1:
            dg[:, 0] = a
            for j in range(1, n - 1):
                dg[:, j] = a - 1.0 / (16.0 * dg[:, j - 1])
        self._diag_gr = dg
        self._free_field: Optional[np.ndarray] = None

    # -- sweeps ------------------------------------------------------------

    def _sweep(self, modes: np.ndarray, d: np.ndarray) -> np.ndarray:
        n = d.shape[1]
        y = np.empty_like(modes)
        y[:, 0] = modes[:, 0]
        for j in range(1, n):
            y[:, j] = modes[:, j] + y[:, j - 1] / (4.0 * d[:, j - 1])
        f = np.empty_like(y)
        f[:, n - 1] = y[:, n - 1] / d[:, n - 1]
        for j in range(n - 2, -1, -1):
            f[:, j] = (y[:, j] + f[:, j + 1] / 4.0) / d[:, j]
        return f

    def apply_green(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (I - P) f = rhs on the cylinder; shapes (W, N)."""
        modes = np.fft.rfft(rhs, axis=0)
        return np.fft.irfft(self._sweep(modes, self._diag), n=self.width, axis=0)

    def mode_green_column(self, source_height: int) -> np.ndarray:
        """Per-mode field of a unit source at column 0, shape (W/2+1, N)."""
        rhs = np.zeros((self._diag.shape[0], self.height))
        rhs[:, source_height - 1] = 1.0
        return self._sweep(rhs, self._diag)

    def mode0_solve(self, rhs_profile: np.ndarray) -> np.ndarray:
        """Column-summed solve: one tridiagonal system, the k = 0 mode."""
        return self._sweep(rhs_profile[None, :], self._diag[:1])[0]

    def apply_operator(self, f: np.ndarray) -> np.ndarray:
        """(I - P) f, the residual workhorse."""
        pf = (np.roll(f, 1, axis=0) + np.roll(f, -1, axis=0)) / 4.0
        if self.height > 1:
            pf[:, :-1] += f[:, 1:] / 4.0
            pf[:, 1:] += f[:, :-1] / 4.0
        top = np.fft.irfft(np.fft.rfft(f[:, -1]) * self.u, n=self.width)
        pf[:, -1] += top / 4.0
        return f - pf

    # -- reference fields ----------------------------------------------------

    def ceiling_visit_field(self) -> np.ndarray:
        """Expected visits to the ceiling row before the floor; 4j exactly."""
        if self._free_field is None:
            rhs = np.zeros((self.width, self.height))
            rhs[:, -1] = 1.0
            self._free_field = self.apply_green(rhs)
        return self._free_field

    def reach_ceiling_field(self) -> np.ndarray:
        """P(ceiling before floor) for interior starts; j/N exactly."""
        n = self.height
        if n == 1:
            return np.zeros((self.width, 0))
        rhs = np.zeros((self.width // 2 + 1, n - 1), dtype=np.complex128)
        rhs[0, n - 2] = 0.25 * self.width  # rfft of a constant quarter
        return np.fft.irfft(self._sweep(rhs, self._diag_gr), n=self.width, axis=0)


@lru_cache(maxsize=8)
def get_solver(width: int, height: int) -> CylinderSolver:
    return CylinderSolver(width, height)


# ---------------------------------------------------------------------------
# cluster fields

class Field:
    """The absorbed visit field of one cluster on one domain, queryable.

    ``grid[x, j]`` is the expected number of visits to the ceiling row
    before absorption in the cluster or the floor, for a walk started at
    column x, height j + 1.  Edge and point measures are quarter-sums of
    this field over the appropriate neighbors.
    """

    def __init__(self, domain: TruncatedDomain, cluster: Cluster,
                 grid: np.ndarray, dual_total: Optional[float],
                 residual: float):
        self.domain = domain
        self.cluster = cluster
        self.grid = grid
        self.dual_total = dual_total
        self.residual = residual

    def f_at(self, site: Site) -> float:
        x1, x2 = site
        if x2 == 0:
            return 0.0
        if not 1 <= x2 <= self.domain.height:
            raise DomainError(f"height {x2} outside the domain")
        return float(self.grid[x1 % self.domain.width, x2 - 1])

    def _outside(self, site: Site) -> bool:
        return site[1] >= 1 and site not in self.cluster

    def h_edge(self, x: Site, y: Site) -> float:
        if abs(x[0] - y[0]) + abs(x[1] - y[1]) != 1:
            raise DomainError(f"{x} -> {y} is not a lattice edge")
        if not self._outside(y):
            return 0.0
        return self.f_at(y) / 4.0

    def h_point(self, x: Site) -> float:
        return sum(self.f_at(y) / 4.0 for y in neighbors(x) if self._outside(y))

    def hhat(self, y: Site) -> float:
        deg = sum(1 for w in neighbors(y) if w[1] >= 0 and w in self.cluster)
        if deg == 0:
            raise NotOuterBoundary(f"{y} has no cluster neighbor")
        if y[1] == 0 or not self._outside(y):
            return 0.0
        return deg * self.f_at(y) / 4.0

    def point_total(self, sites: Iterable[Site]) -> float:
        return sum(self.h_point(x) for x in sites)


def _periodic_field(domain: TruncatedDomain, cluster: Cluster) -> Field:
    solver = get_solver(domain.width, domain.height)
    w, n = domain.width, domain.height
    elevated = cluster.elevated_sites()
    if cluster.max_height >= n:
        raise DomainError("cluster reaches the ceiling; raise the domain height")
    if elevated and cluster.horizontal_extent >= w:
        raise WindowTooSmall("cluster wraps around the window")

    free = solver.ceiling_visit_field()
    m = len(elevated)
    if m == 0:
        resid = float(np.abs(solver.apply_operator(free) - _ceiling_rhs(w, n)).max())
        return Field(domain, cluster, free, None, resid)

    cols = np.array([s[0] % w for s in elevated], dtype=np.int64)
    hts = np.array([s[1] for s in elevated], dtype=np.int64)

    # G[S, S] assembled in mode space, one tridiagonal solve per distinct
    # source height; a cosine sum then reads off every needed translate
    weights = np.full(w // 2 + 1, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    gram = np.empty((m, m))
    theta = solver.theta
    for h in sorted(set(hts.tolist())):
        modes = solver.mode_green_column(h)  # (W/2+1, N)
        sampled = modes[:, hts - 1] * weights[:, None]  # (modes, m) at eval heights
        for j in np.nonzero(hts == h)[0]:
            delta = cols - cols[j]
            gram[:, j] = np.einsum(
                "ki,ki->i", sampled, np.cos(theta[:, None] * delta[None, :])
            ) / w

    sym_gap = float(np.abs(gram - gram.T).max())
    if sym_gap > 1e-9:
        raise NotConverged(f"green matrix asymmetry {sym_gap:.2e}")
    gram = (gram + gram.T) / 2.0
    chol = sla.cho_factor(gram, lower=True)

    b = free[cols, hts - 1]
    lam = sla.cho_solve(chol, b)
    scatter = np.zeros((w, n))
    np.add.at(scatter, (cols, hts - 1), lam)
    grid = free - solver.apply_green(scatter)

    # equilibrium route to the elevated total: column sums see only mode 0
    mu = sla.cho_solve(chol, np.ones(m))
    rhs0 = np.zeros(n)
    np.add.at(rhs0, hts - 1, mu)
    dual_total = float(solver.mode0_solve(rhs0)[n - 1])

    resid_grid = solver.apply_operator(grid) - _ceiling_rhs(w, n) + scatter
    resid = float(np.abs(resid_grid).max())
    on_s = float(np.abs(grid[cols, hts - 1]).max())
    return Field(domain, cluster, grid, dual_total, max(resid, on_s))


def _ceiling_rhs(width: int, height: int) -> np.ndarray:
    rhs = np.zeros((width, height))
    rhs[:, -1] = 1.0
    return rhs


# ---------------------------------------------------------------------------
# direct sparse route (absorbing sides, and the cross-check oracle)

def assemble_operator(domain: TruncatedDomain) -> sp.csr_matrix:
    """(I - P) as an explicit sparse matrix; unknown (x, j) at (j-1)*W + x."""
    w, n = domain.width, domain.height
    if w * n > SPARSE_UNKNOWN_CAP:
        raise DomainError(f"{w * n} unknowns exceed the direct-solve cap")
    periodic = domain.side_mode == PERIODIC
    kern = descent_kernel(w)
    rows, cols_, vals = [], [], []

    def put(r, c, v):
        rows.append(r)
        cols_.append(c)
        vals.append(v)

    for j in range(1, n + 1):
        base = (j - 1) * w
        for x in range(w):
            idx = base + x
            put(idx, idx, 1.0)
            for dx in (-1, 1):
                xx = x + dx
                if periodic:
                    put(idx, base + xx % w, -0.25)
                elif 0 <= xx < w:
                    put(idx, base + xx, -0.25)
            if j > 1:
                put(idx, idx - w, -0.25)
            if j < n:
                put(idx, idx + w, -0.25)
            else:
                for dx in range(w):
                    if kern[dx] == 0.0:
                        continue
                    xx = x + dx
                    if periodic:
                        put(idx, base + xx % w, -0.25 * kern[dx])
                    else:
                        # fold the displacement to its representative in
                        # (-W/2, W/2]; mass leaving the window is killed
                        shift = dx if dx <= w // 2 else dx - w
                        if 0 <= x + shift < w:
                            put(idx, base + x + shift, -0.25 * kern[dx])
    mat = sp.coo_matrix((vals, (rows, cols_)), shape=(w * n, w * n))
    return mat.tocsr()


def solve_field_direct(domain: TruncatedDomain, cluster: Cluster) -> Field:
    """Same field as the spectral route, by one sparse LU factorization.

    Serves two duties: it is the solver for absorbing side walls, where the
    translation invariance behind the FFT is gone, and the independent
    oracle the spectral path is tested against.
    """
    w, n = domain.width, domain.height
    elevated = cluster.elevated_sites()
    if cluster.max_height >= n:
        raise DomainError("cluster reaches the ceiling; raise the domain height")
    op = assemble_operator(domain).tolil()
    rhs = np.zeros(w * n)
    rhs[(n - 1) * w:] = 1.0
    ones_rhs = np.zeros(w * n)
    s_idx = []
    for x1, x2 in elevated:
        idx = (x2 - 1) * w + x1 % w
        s_idx.append(idx)
        op.rows[idx] = [idx]
        op.data[idx] = [1.0]
        rhs[idx] = 0.0
        ones_rhs[idx] = 1.0
    lu = spla.splu(op.tocsc())
    grid = lu.solve(rhs).reshape(n, w).T
    dual_total = None
    if s_idx:
        eq = lu.solve(ones_rhs).reshape(n, w).T
        dual_total = float(eq[:, n - 1].sum())
    return Field(domain, cluster, grid, dual_total, 0.0)


# ---------------------------------------------------------------------------
# window policy and the public operations

def _resolve_domain(cluster: Cluster, height: int, sites: "tuple[Site, ...]",
                    domain: "TruncatedDomain | None") -> TruncatedDomain:
    if domain is not None:
        return domain
    xs = [s[0] for s in cluster.sites()] + [s[0] for s in sites]
    extent = (max(xs) - min(xs)) if xs else 0
    return TruncatedDomain(default_width(height, extent), height)


def _rel_move(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum.reduce([np.abs(a), np.abs(b), np.ones_like(a)])
    return float(np.max(np.abs(b - a) / denom))


def _certified(cluster: Cluster, height: int, sites: "tuple[Site, ...]",
               domain: "TruncatedDomain | None", evaluate,
               extrapolate: bool = True) -> "tuple[np.ndarray, Field]":
    """Evaluate with a doubling certificate on the reported value.

    An explicitly supplied domain is authoritative: the caller asked for
    that truncation (oracle comparisons, sensitivity studies), so the
    value computed on it is returned as-is, uncertified.

    Without a domain the window is an artifact to be removed, not an
    object of interest.  The value is re-solved on a width ladder W, 2W,
    4W, ... until one doubling moves it by less than 1e-6 relative.  Raw
    values converge like 1/W^2, too slowly for tall clusters to certify
    directly, so once four rungs exist the same test is applied to their
    two-level Richardson extrapolants (1/W^2 and 1/W^4 terms removed),
    which converge like 1/W^6 and certify by about 64x the cluster
    height.  WindowTooSmall means even that diverged within the width cap.
    """
    base = _resolve_domain(cluster, height, sites, domain)
    if domain is not None:
        fld = _field(base, cluster)
        return np.atleast_1d(np.asarray(evaluate(fld), dtype=np.float64)), fld
    raw: "list[np.ndarray]" = []
    fld = None
    width = base.width
    need = 4 if extrapolate else 2
    while True:
        if width > MAX_WIDTH:
            raise WindowTooSmall(f"no convergence within width {MAX_WIDTH}")
        fld = _field(TruncatedDomain(width, base.height, base.side_mode), cluster)
        raw.append(np.atleast_1d(np.asarray(evaluate(fld), dtype=np.float64)))
        if len(raw) >= 2 and _rel_move(raw[-2], raw[-1]) < DOUBLING_RTOL:
            return raw[-1], fld
        if extrapolate and len(raw) >= 4:
            r1 = [b + (b - a) / 3.0 for a, b in zip(raw, raw[1:])]
            q = [b + (b - a) / 15.0 for a, b in zip(r1, r1[1:])]
            if _rel_move(q[-2], q[-1]) < DOUBLING_RTOL:
                return q[-1], fld
        width *= 2


def _field(domain: TruncatedDomain, cluster: Cluster) -> Field:
    if domain.side_mode == ABSORBING:
        return solve_field_direct(domain, cluster)
    f = _periodic_field(domain, cluster)
    scale = 1.0 + float(np.abs(f.grid).max())
    if f.residual > RESIDUAL_TOL * scale:
        raise NotConverged(f"field residual {f.residual:.2e} above tolerance")
    return f


def _require_member(cluster: Cluster, x: Site) -> None:
    if x not in cluster and x[1] != 0:
        raise DomainError(f"{x} is neither in the cluster nor on the floor")


def _require_height(cluster: Cluster, height: int) -> None:
    if height <= cluster.max_height:
        raise DomainError("ceiling must sit strictly above the cluster")


def exact_h_point(cluster: Cluster, x: Site, height: int,
                  domain: "TruncatedDomain | None" = None) -> Estimate:
    """Measure arriving at x: expected ceiling visits of the return walk."""
    _require_member(cluster, x)
    _require_height(cluster, height)
    v, _ = _certified(cluster, height, (x,), domain, lambda f: f.h_point(x))
    return Estimate(float(v[0]))


def exact_h_edge(cluster: Cluster, x: Site, y: Site, height: int,
                 domain: "TruncatedDomain | None" = None) -> Estimate:
    """Measure of the directed boundary crossing x -> y."""
    _require_member(cluster, x)
    _require_height(cluster, height)
    if y[1] < 0:
        raise DomainError(f"{y} lies below the floor")
    v, _ = _certified(cluster, height, (x, y), domain, lambda f: f.h_edge(x, y))
    return Estimate(float(v[0]))


def hhat_outer(cluster: Cluster, y: Site, height: int,
               domain: "TruncatedDomain | None" = None,
               method: str = "exact") -> Estimate:
    """Arrival measure collected at the outside site y."""
    _require_height(cluster, height)
    deg = sum(1 for w_ in neighbors(y) if w_[1] >= 0 and w_ in cluster)
    if deg == 0:
        raise NotOuterBoundary(f"{y} has no cluster neighbor")
    if y[1] == 0:
        return Estimate(0.0)  # an arrival cannot step out of the floor
    if y in cluster:
        raise DomainError(f"{y} is inside the cluster")
    if method == "exact":
        v, _ = _certified(cluster, height, (y,), domain, lambda f: f.hhat(y))
        return Estimate(float(v[0]))
    if method == "visits_mc":
        raise DomainError("use mc_h_edge per edge and sum; no direct mc route here")
    raise DomainError(f"unknown method {method!r}")


def h_total(cluster: Cluster, height: int,
            domain: "TruncatedDomain | None" = None) -> Estimate:
    """Total mass over the cluster, certified by two independent routes."""
    if cluster.includes_floor:
        raise DomainError("totals need a finite cluster")
    _require_height(cluster, height)

    def ev(f: Field) -> float:
        total = f.point_total(cluster.sites())
        elevated = f.point_total(cluster.elevated_sites())
        if f.dual_total is not None and abs(elevated - f.dual_total) > 1e-9 * max(1.0, elevated):
            raise NotConverged(
                f"mass routes disagree: adjacency {elevated!r} vs equilibrium {f.dual_total!r}"
            )
        return total

    v, _ = _certified(cluster, height, (), domain, ev)
    return Estimate(float(v[0]))


def exact_profile(cluster: Cluster, height: int,
                  domain: "TruncatedDomain | None" = None) -> MeasureProfile:
    """Every point, outer, and edge measure of a finite cluster at once."""
    if cluster.includes_floor:
        raise DomainError("profiles need a finite cluster")
    _require_height(cluster, height)
    edges = cluster.boundary_edges()

    def ev(f: Field) -> np.ndarray:
        return np.array([f.h_edge(x, y) for x, y in edges])

    vals, fld = _certified(cluster, height, (), domain, ev)
    edge_measure = {e: Estimate(float(v)) for e, v in zip(edges, vals)}
    point = {}
    for x in cluster.sites():
        point[x] = Estimate(sum(edge_measure[(x, y)].value
                                for y in neighbors(x)
                                if (x, y) in edge_measure))
    outer = {}
    for y in cluster.outer_boundary():
        outer[y] = Estimate(sum(edge_measure[(x, y)].value
                                for x in neighbors(y)
                                if (x, y) in edge_measure))
    total = sum(e.value for e in point.values())
    outer_total = sum(e.value for e in outer.values())
    if abs(total - outer_total) > 1e-9 * max(1.0, abs(total)):
        raise NotConverged("inner and outer totals disagree")
    return MeasureProfile(
        cluster=cluster.copy(),
        height=height,
        point_measure=point,
        outer_measure=outer,
        edge_measure=edge_measure,
        total=Estimate(total),
        meta={"width": fld.domain.width, "side_mode": fld.domain.side_mode},
    )


def h_limit(cluster: Cluster, x: Site, height_schedule: "list[int]",
            y: "Site | None" = None,
            domain: "TruncatedDomain | None" = None) -> Estimate:
    """Stabilized value across a ceiling schedule.

    Edge values may only decrease (within 1e-9) as the ceiling rises; the
    run is converged once the relative gap between consecutive ceilings
    drops below 1e-3.  A non-converged result is returned flagged, not
    raised.
    """
    if len(height_schedule) < 2 or any(
        b <= a for a, b in zip(height_schedule, height_schedule[1:])
    ):
        raise DomainError("schedule must be strictly increasing with >= 2 entries")
    _require_height(cluster, height_schedule[0])
    if domain is None:
        sites = (x,) if y is None else (x, y)
        domain = _resolve_domain(cluster, height_schedule[-1], sites, None)
    if domain.height < height_schedule[-1]:
        raise DomainError("domain ceiling below the top of the schedule")

    values = []
    for n_ceil in height_schedule:
        d = TruncatedDomain(domain.width, n_ceil, domain.side_mode)
        f = _field(d, cluster)
        values.append(f.h_point(x) if y is None else f.h_edge(x, y))
    if y is not None:
        for a, b in zip(values, values[1:]):
            if b > a + 1e-9:
                raise NotConverged(f"edge measure rose from {a!r} to {b!r}")
    last, prev = values[-1], values[-2]
    gap = abs(last - prev) / max(abs(last), abs(prev), 1.0)
    return Estimate(float(last), converged=bool(gap < 1e-3))


# ---------------------------------------------------------------------------
# Monte Carlo estimators

def _mc_setup(cluster: Cluster, height: int, extra: "tuple[Site, ...]"):
    _require_height(cluster, height)
    dom = _resolve_domain(cluster, height, extra, None)
    w = dom.width
    elevated = cluster.elevated_sites()
    grid_h = max([s[1] for s in elevated], default=0)
    grid = np.zeros((w, grid_h + 1), dtype=np.uint8)
    for x1, x2 in elevated:
        grid[x1 % w, x2] = 1
    kprob, kalias = build_alias(descent_kernel(w))
    return dom, grid, grid_h, kprob, kalias


def mc_h_point_visits(cluster: Cluster, x: Site, height: int,
                      n_samples: int, seed: int) -> Estimate:
    """Monte Carlo twin of exact_h_point, from the visit identity."""
    _require_member(cluster, x)
    dom, grid, grid_h, kprob, kalias = _mc_setup(cluster, height, (x,))
    key = stream_key(seed, "hm-point", x[0], x[1], height)
    sum_v, sum_v2, censored = visits_batch(
        np.uint64(key), n_samples, x[0] % dom.width, x[1], dom.width,
        height, grid, grid_h, True, kprob, kalias, 10**7,
    )
    mean = sum_v / n_samples
    var = max(sum_v2 / n_samples - mean * mean, 0.0)
    return Estimate(mean, math.sqrt(var / n_samples), n_samples,
                    "visits_mc", seed, int(censored))


def mc_h_edge(cluster: Cluster, x: Site, y: Site, height: int,
              n_samples: int, seed: int) -> Estimate:
    """Monte Carlo edge measure via the reversed walk started at y."""
    _require_member(cluster, x)
    if abs(x[0] - y[0]) + abs(x[1] - y[1]) != 1:
        raise DomainError(f"{x} -> {y} is not a lattice edge")
    if y[1] == 0 or y in cluster:
        return Estimate(0.0)  # zero by definition, no sampling involved
    dom, grid, grid_h, kprob, kalias = _mc_setup(cluster, height, (x, y))
    key = stream_key(seed, "hm-edge", x[0], x[1], y[0], y[1], height)
    sum_v, sum_v2, censored = visits_batch(
        np.uint64(key), n_samples, y[0] % dom.width, y[1], dom.width,
        height, grid, grid_h, False, kprob, kalias, 10**7,
    )
    mean = sum_v / n_samples / 4.0
    var = max(sum_v2 / n_samples - (sum_v / n_samples) ** 2, 0.0)
    return Estimate(mean, math.sqrt(var / n_samples) / 4.0, n_samples,
                    "visits_mc", seed, int(censored))
