"""Eigenvalue location: Newton refinement, argument-principle counts, certified covers."""
from __future__ import annotations

import cmath
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import asymptotics
from .errors import (BoundaryTooClose, ConvergedToWrongBasin, IncompleteSpectrum,
                     NoConvergence, SolverError)
from .model import TubeParams
from .ode_core import determinant_with_derivative, evaluate_determinant

log = logging.getLogger(__name__)

TOL_ROOT = 1e-9
TOL_CONJ = 1e-8
TOL_SIMPLE = 1e-10
N_MAX_LIMIT = 60
LOW_MODES = 5
MAX_NEWTON = 50
# |Delta| relative to the size of its summands below which an edge point
# counts as sitting on a root
EDGE_FLOOR = 1e-6
CONTOUR_RTOL = 1e-9
MAX_DILATIONS = 5
# off-centre split keeps bisection lines away from symmetric positions
_SPLIT = 0.5 + 1.0 / (10 * math.pi)


@dataclass(frozen=True)
class Rectangle:
    re0: float
    re1: float
    im0: float
    im1: float

    def __post_init__(self):
        if not (self.re0 < self.re1 and self.im0 < self.im1):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def centroid(self) -> complex:
        return complex(0.5 * (self.re0 + self.re1), 0.5 * (self.im0 + self.im1))

    @property
    def width(self):
        return self.re1 - self.re0

    @property
    def height(self):
        return self.im1 - self.im0

    def contains(self, z, pad=0.0) -> bool:
        return (self.re0 - pad <= z.real <= self.re1 + pad
                and self.im0 - pad <= z.imag <= self.im1 + pad)

    def dilate(self, frac):
        dx, dy = 0.5 * frac * self.width, 0.5 * frac * self.height
        return Rectangle(self.re0 - dx, self.re1 + dx, self.im0 - dy, self.im1 + dy)

    def mirrored(self):
        return Rectangle(self.re0, self.re1, -self.im1, -self.im0)

    def split(self):
        if self.height >= self.width:
            y = self.im0 + _SPLIT * self.height
            return (Rectangle(self.re0, self.re1, self.im0, y),
                    Rectangle(self.re0, self.re1, y, self.im1))
        x = self.re0 + _SPLIT * self.width
        return (Rectangle(self.re0, x, self.im0, self.im1),
                Rectangle(x, self.re1, self.im0, self.im1))

    def corners(self):
        return [complex(self.re0, self.im0), complex(self.re1, self.im0),
                complex(self.re1, self.im1), complex(self.re0, self.im1)]


@dataclass(frozen=True)
class Eigenvalue:
    """A root of the characteristic determinant.

    ``index`` is the signed position among complex pairs ordered by height
    (``k`` in the upper half-plane, ``-k`` for the conjugate) and 0 for real
    eigenvalues. ``mode`` is the asymptotic label n with Im rho_n near
    (n + 1/2) pi, or None for real eigenvalues.
    """

    lam: complex
    index: int = 0
    mode: int | None = None
    residual: float = 0.0
    certified: bool = False
    provenance: str = "refined"
    iterations: int = 0
    derivative_ratio: float = float("inf")

    @property
    def rho(self) -> complex:
        return cmath.sqrt(-1j * self.lam)

    @property
    def is_real(self) -> bool:
        return self.index == 0

    @property
    def possibly_multiple(self) -> bool:
        return self.derivative_ratio < TOL_SIMPLE


@dataclass(frozen=True)
class Certificate:
    region: Rectangle
    winding: int
    mirrored: bool = False


@dataclass(frozen=True)
class Spectrum:
    params: TubeParams
    eigenvalues: tuple
    certificates: tuple = field(default=())
    n_max: int = 0

    @property
    def abscissa(self) -> float:
        return spectral_abscissa(self)

    def upper(self):
        """Complex eigenvalues with positive imaginary part, by mode."""
        return [e for e in self.eigenvalues if e.index > 0]

    def real(self):
        return [e for e in self.eigenvalues if e.index == 0]

    def mode(self, n) -> Eigenvalue:
        for e in self.eigenvalues:
            if e.index > 0 and e.mode == n:
                return e
        raise KeyError(f"mode {n} not in spectrum")

    def conjugate_of(self, ev: Eigenvalue) -> Eigenvalue:
        for e in self.eigenvalues:
            if e.index == -ev.index and ev.index != 0:
                return e
        raise KeyError(f"no conjugate partner for index {ev.index}")

    def lambdas(self):
        return np.array([e.lam for e in self.eigenvalues])

    def __len__(self):
        return len(self.eigenvalues)

    def __iter__(self):
        return iter(self.eigenvalues)


def _newton(seed, params, tol_root, max_iter=MAX_NEWTON):
    lam = complex(seed)
    for it in range(1, max_iter + 1):
        ev, d = determinant_with_derivative(lam, params)
        if d == 0 or not np.isfinite(d):
            raise NoConvergence(f"vanishing derivative at lambda={lam}")
        step = ev.mantissa / d
        lam = lam - step
        if not np.isfinite(lam):
            raise NoConvergence(f"Newton diverged from seed {seed}")
        if abs(step) < tol_root * (1.0 + abs(lam)):
            final, d = determinant_with_derivative(lam, params)
            ratio = abs(d) * (1.0 + abs(lam)) / final.magnitude
            return lam, final.residual, it, ratio
    raise NoConvergence(f"no convergence in {max_iter} Newton steps from seed {seed}")


def refine_root(seed, params: TubeParams, tol_root=TOL_ROOT, seed_mode=None) -> Eigenvalue:
    """Newton iteration on the characteristic determinant.

    With ``seed_mode`` given, a root farther than half the asymptotic gap to the
    neighbouring mode is rejected as belonging to another basin.
    """
    seed = complex(seed)
    if not np.isfinite(evaluate_determinant(seed, params).mantissa):
        raise NoConvergence(f"determinant not finite at seed {seed}")
    lam, res, its, ratio = _newton(seed, params, tol_root)
    if abs(lam) < 1e-8:
        raise NoConvergence("Newton converged to the origin, which is never an eigenvalue")
    if seed_mode is not None:
        half_gap = 0.5 * asymptotics.mode_gap(max(seed_mode - 1, 0), params)
        if abs(lam - seed) > half_gap:
            raise ConvergedToWrongBasin(
                f"seed {seed} for mode {seed_mode} converged to {lam}, beyond half-gap {half_gap:.4g}")
    if abs(lam.imag) < 1e-10 * max(1.0, abs(lam)):
        lam = complex(lam.real, 0.0)
    return Eigenvalue(lam, residual=res, iterations=its, derivative_ratio=ratio,
                      provenance="refined")


def _edge_phases(a, b, params, cache=None, depth_limit=40):
    """Accumulated argument change of the determinant from a to b.

    Edges are always sampled from their lexicographically smaller end so that
    shared edges of adjacent rectangles reuse cached samples exactly.
    """
    if (b.real, b.imag) < (a.real, a.imag):
        return -_edge_phases(b, a, params, cache, depth_limit)
    cache = {} if cache is None else cache

    def sample(t):
        z = a + t * (b - a)
        hit = cache.get(z)
        if hit is not None:
            return hit
        ev, d = determinant_with_derivative(z, params, rtol=CONTOUR_RTOL)
        if ev.residual < EDGE_FLOOR:
            raise BoundaryTooClose(f"determinant nearly vanishes on the contour at {z}")
        # log-derivative bounds the local phase rate and guards against aliasing
        hit = (ev.mantissa, abs(d / ev.mantissa))
        cache[z] = hit
        return hit

    length = abs(b - a)
    n0 = 8
    ts = np.linspace(0.0, 1.0, n0 + 1)
    vals = [sample(t) for t in ts]
    total = 0.0
    stack = [(ts[i], ts[i + 1], vals[i], vals[i + 1], 0) for i in range(n0)][::-1]
    while stack:
        t0, t1, (f0, r0), (f1, r1), depth = stack.pop()
        if depth >= depth_limit:
            raise BoundaryTooClose(f"phase unresolved near {a + t0 * (b - a)}")
        tm = 0.5 * (t0 + t1)
        fm, rm = sample(tm)
        d1, d2 = cmath.phase(fm / f0), cmath.phase(f1 / fm)
        # accept only when both halves are small, agree with the whole, and the
        # log-derivative predicts no unseen rotation
        if (max(abs(d1), abs(d2)) < math.pi / 4
                and abs(d1 + d2 - cmath.phase(f1 / f0)) < 1e-9
                and max(r0, rm, r1) * (t1 - t0) * length < math.pi):
            total += d1 + d2
            continue
        stack.append((tm, t1, (fm, rm), (f1, r1), depth + 1))
        stack.append((t0, tm, (f0, r0), (fm, rm), depth + 1))
    return total


def winding_number(rect: Rectangle, params: TubeParams, cache=None) -> int:
    """Zeros of the determinant inside ``rect`` by the argument principle (no retries)."""
    cs = rect.corners()
    total = sum(_edge_phases(cs[i], cs[(i + 1) % 4], params, cache) for i in range(4))
    count = total / (2 * math.pi)
    k = int(round(count))
    if abs(count - k) > 1e-3:
        raise BoundaryTooClose(f"non-integral winding {count:.6f} on {rect}")
    return k


def count_zeros(region: Rectangle, params: TubeParams, retries=MAX_DILATIONS) -> int:
    """Winding number of the determinant along the boundary of ``region``.

    When a zero sits too close to the boundary the rectangle is dilated by 1%
    and the count retried.
    """
    rect = region
    for attempt in range(retries + 1):
        try:
            return winding_number(rect, params)
        except BoundaryTooClose as exc:
            log.debug("count_zeros retry %d: %s", attempt, exc)
            rect = rect.dilate(0.01)
    raise BoundaryTooClose(f"zero too close to the boundary of {region} after {retries} dilations")


def _resolve(rect, params, count, seeds, tol_root, cache=None, depth=0):
    """Locate the ``count`` zeros inside ``rect`` by bisection and Newton."""
    if count == 0:
        return []
    if count == 1:
        centre = rect.centroid
        starts = [s for s in seeds if rect.contains(s)] + [centre]
        for s in starts:
            try:
                ev = refine_root(s, params, tol_root)
            except SolverError:
                continue
            if rect.contains(ev.lam, pad=1e-9 * (1 + abs(ev.lam))):
                return [replace(ev, provenance="seeded" if s is not centre else "refined")]
    if depth > 40:
        raise IncompleteSpectrum(f"could not isolate {count} zeros in {rect}")
    found = []
    first, second = rect.split()
    try:
        n1 = winding_number(first, params, cache)
    except BoundaryTooClose:
        # a zero sits on the cut; move it
        first, second = _shifted_split(rect)
        n1 = count_zeros(first, params)
    n2 = count - n1
    if n2 < 0:
        raise IncompleteSpectrum(f"inconsistent counts while bisecting {rect}")
    found += _resolve(first, params, n1, seeds, tol_root, cache, depth + 1)
    found += _resolve(second, params, n2, seeds, tol_root, cache, depth + 1)
    return found


def _shifted_split(rect):
    f = 0.5 - 1.0 / (7 * math.pi)
    if rect.height >= rect.width:
        y = rect.im0 + f * rect.height
        return (Rectangle(rect.re0, rect.re1, rect.im0, y), Rectangle(rect.re0, rect.re1, y, rect.im1))
    x = rect.re0 + f * rect.width
    return (Rectangle(rect.re0, x, rect.im0, rect.im1), Rectangle(x, rect.re1, rect.im0, rect.im1))


def left_extent(params: TubeParams) -> float:
    damping = params.beta * params.eta + (1.0 / params.kappa if params.kappa > 0 else 0.0)
    return max(50.0, 5.0 * damping)


def _cut(n, params):
    """Horizontal cut between modes n-1 and n."""
    return 0.5 * (asymptotics.asymptotic_imag(n - 1, params) + asymptotics.asymptotic_imag(n, params))


def _seed(n, params):
    if params.kappa > 0:
        return asymptotics.asymptotic_lambda(n, params)
    return complex(-params.beta * params.eta, asymptotics.asymptotic_imag(n, params))


def _tile_count(rect, params, cache=None):
    """Count with cut adjustment; returns (count, possibly adjusted rectangle)."""
    for k in range(MAX_DILATIONS + 1):
        try:
            return winding_number(rect, params, cache), rect
        except BoundaryTooClose:
            shrink = 0.01 * (k + 1) * rect.height
            rect = Rectangle(rect.re0, rect.re1, rect.im0, rect.im1 - shrink)
    raise BoundaryTooClose(f"could not place tile edges away from zeros near {rect}")


def find_spectrum(params: TubeParams, n_max: int, tol_root=TOL_ROOT, workers=1) -> Spectrum:
    """All eigenvalues with mode label up to ``n_max`` plus any real eigenvalues.

    The plane is covered by a symmetric low box holding the first few modes and
    the real axis, and by one tile per higher mode in the upper half-plane
    (mirrored into the lower). Each region carries an argument-principle count;
    zeros are isolated by bisection and refined by Newton from asymptotic seeds
    or region centroids.
    """
    if not 0 <= n_max <= N_MAX_LIMIT:
        raise ValueError(f"n_max must lie in [0, {N_MAX_LIMIT}], got {n_max}")
    R = left_extent(params)
    right = 1.0
    y_low = _cut(LOW_MODES, params)
    certificates = []
    roots = []
    cache = {}

    low = Rectangle(-R, right, -y_low, y_low)
    low_count, low = _tile_count(low, params, cache)
    low_seeds = []
    for n in range(LOW_MODES):
        s = _seed(n, params)
        low_seeds += [s, s.conjugate()]
    roots += _resolve(low, params, low_count, low_seeds, tol_root, cache)
    certificates.append(Certificate(low, low_count))
    log.info("low box %s holds %d zeros", low, low_count)

    edges = [low.im1] + [_cut(n + 1, params) for n in range(LOW_MODES, n_max + 1)]
    tiles = []
    for n in range(LOW_MODES, n_max + 1):
        lo, hi = edges[n - LOW_MODES], edges[n - LOW_MODES + 1]
        tiles.append((n, Rectangle(-R, right, lo, hi)))

    def solve_tile(item):
        n, rect = item
        cnt, rect = _tile_count(rect, params, cache)
        found = _resolve(rect, params, cnt, [_seed(n, params)], tol_root, cache)
        return n, rect, cnt, found

    # tile edges must be shared, so adjust sequentially when a cut moves
    results = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve_tile, tiles))
    else:
        results = [solve_tile(t) for t in tiles]
    prev_top = low.im1
    for n, rect, cnt, found in results:
        if rect.im0 != prev_top:
            # a shrunken top edge leaves a gap; count it explicitly
            gap = Rectangle(-R, right, prev_top, rect.im0)
            gcnt, _ = _tile_count(gap, params, cache)
            roots += _resolve(gap, params, gcnt, [], tol_root, cache)
            certificates += [Certificate(gap, gcnt), Certificate(gap.mirrored(), gcnt, True)]
        roots += found
        certificates += [Certificate(rect, cnt), Certificate(rect.mirrored(), cnt, True)]
        roots += [replace(e, lam=e.lam.conjugate()) for e in found]
        prev_top = rect.im1

    return _assemble(params, roots, certificates, n_max)


def _assemble(params, roots, certificates, n_max):
    total = sum(c.winding for c in certificates)
    if total != len(roots):
        raise IncompleteSpectrum(f"certificates count {total} zeros but {len(roots)} were found")
    reals = sorted((r for r in roots if r.lam.imag == 0.0), key=lambda e: -e.lam.real)
    upper = sorted((r for r in roots if r.lam.imag > 0), key=lambda e: (e.lam.imag, -e.lam.real))
    lower = [r for r in roots if r.lam.imag < 0]
    if len(upper) != len(lower):
        raise IncompleteSpectrum(f"{len(upper)} upper vs {len(lower)} lower zeros")
    evs = []
    for e in reals:
        evs.append(replace(e, index=0, mode=None, certified=True))
    for k, e in enumerate(upper, start=1):
        partner = min(lower, key=lambda z: abs(z.lam - e.lam.conjugate()))
        if abs(partner.lam - e.lam.conjugate()) > TOL_CONJ * (1 + abs(e.lam)):
            raise IncompleteSpectrum(f"no conjugate partner for {e.lam}")
        lower.remove(partner)
        evs.append(replace(e, index=k, mode=k - 1, certified=True))
        evs.append(replace(partner, index=-k, mode=k - 1, certified=True))
    evs.sort(key=lambda e: (e.lam.imag, -e.lam.real))
    for e in evs:
        if e.possibly_multiple:
            log.warning("eigenvalue %s has a nearly vanishing derivative; possible multiplicity", e.lam)
        if e.is_real:
            log.info("real eigenvalue %.12g flagged", e.lam.real)
    return Spectrum(params, tuple(evs), tuple(certificates), n_max)


def spectral_abscissa(spec: Spectrum) -> float:
    """Largest real part over the computed eigenvalues."""
    if not spec.eigenvalues:
        raise ValueError("empty spectrum")
    return max(e.lam.real for e in spec.eigenvalues)
