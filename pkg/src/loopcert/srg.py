"""Scaled relative graph sampling and a sound planar region calculus.

An operator's scaled relative graph (SRG) is sampled as a cloud of complex
points, one conjugate pair per input pair.  Certified reasoning happens on
:class:`Region` objects: finite unions of discs, half-planes and disc
exteriors that over-approximate SRGs and stay closed under the operations
used by the separation argument (inversion, chord closure, real scaling,
Minkowski sum, distance, sweep of the feedback fraction).

Every region operation is sound by construction: the image of each member
point of the input lies in the output region.  Over-approximation may grow
the region but never shrink it.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np

from .operators import LtiNode, OperatorSpec, apply
from .signals import Signal, angle, norm

__all__ = [
    "Disc",
    "HalfPlane",
    "DiscExterior",
    "Region",
    "SrgCloud",
    "UnrepresentableRegionError",
    "lipschitz_disc",
    "sector_disc",
    "sample_srg",
    "max_radius",
    "invert_region",
    "chord_closure",
    "scale_region",
    "negate_region",
    "minkowski_sum",
    "region_distance",
    "SeparationSweep",
    "separation_sweep",
    "separation_margin",
    "lti_nyquist_cover",
]


class UnrepresentableRegionError(ValueError):
    """The requested image region cannot be expressed in this algebra."""


# ---------------------------------------------------------------------------
# Primitives.  Membership tests are exact closed-form inequalities; a
# tolerance argument widens them for floating-point probes.


@dataclass(frozen=True)
class Disc:
    center: complex
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0.0:
            raise ValueError("disc radius must be nonnegative")

    def contains(self, z: complex, tol: float = 0.0) -> bool:
        return abs(z - self.center) <= self.radius + tol

    def conjugate(self) -> "Disc":
        return Disc(self.center.conjugate(), self.radius)


@dataclass(frozen=True)
class HalfPlane:
    """Closed half-plane {z : Re(conj(normal) * z) >= offset}; |normal| = 1."""

    normal: complex
    offset: float

    def __post_init__(self) -> None:
        n = complex(self.normal)
        mag = abs(n)
        if mag == 0.0:
            raise ValueError("half-plane normal must be nonzero")
        object.__setattr__(self, "normal", n / mag)
        object.__setattr__(self, "offset", float(self.offset) / mag)

    def contains(self, z: complex, tol: float = 0.0) -> bool:
        return (self.normal.conjugate() * z).real >= self.offset - tol

    def conjugate(self) -> "HalfPlane":
        return HalfPlane(self.normal.conjugate(), self.offset)


@dataclass(frozen=True)
class DiscExterior:
    """Closed complement of an open disc: {z : |z - center| >= radius}."""

    center: complex
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0.0:
            raise ValueError("radius must be nonnegative")

    def contains(self, z: complex, tol: float = 0.0) -> bool:
        return abs(z - self.center) >= self.radius - tol

    def conjugate(self) -> "DiscExterior":
        return DiscExterior(self.center.conjugate(), self.radius)


Primitive = Disc | HalfPlane | DiscExterior


def _is_chord_closed_primitive(p: Primitive) -> bool:
    # Real-centered discs and real-normal half-planes are invariant under
    # z -> lam*z + (1-lam)*conj(z); disc exteriors never are.
    if isinstance(p, Disc):
        return p.center.imag == 0.0
    if isinstance(p, HalfPlane):
        return p.normal.imag == 0.0
    return False


@dataclass(frozen=True)
class Region:
    """Union of primitives.  ``chord_closed`` marks a region whose membership
    set is known to satisfy the chord property; ``tags`` carry provenance
    notes (e.g. heuristic covers) into certificates."""

    primitives: tuple[Primitive, ...]
    chord_closed: bool = False
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        prims = tuple(self.primitives)
        object.__setattr__(self, "primitives", prims)
        if not self.chord_closed and all(
                _is_chord_closed_primitive(p) for p in prims):
            object.__setattr__(self, "chord_closed", True)
        object.__setattr__(self, "tags", tuple(self.tags))

    def contains(self, z: complex, tol: float = 0.0) -> bool:
        return any(p.contains(z, tol) for p in self.primitives)

    def is_empty(self) -> bool:
        return not self.primitives

    def is_bounded(self) -> bool:
        return all(isinstance(p, Disc) for p in self.primitives)

    def is_conjugate_symmetric(self, tol: float = 1e-12) -> bool:
        def matches(p: Primitive, q: Primitive) -> bool:
            if type(p) is not type(q):
                return False
            if isinstance(p, HalfPlane):
                return (abs(p.normal - q.normal) <= tol
                        and abs(p.offset - q.offset) <= tol)
            return (abs(p.center - q.center) <= tol
                    and abs(p.radius - q.radius) <= tol)

        for p in self.primitives:
            mirror = p.conjugate()
            if not any(matches(mirror, q) for q in self.primitives):
                return False
        return True


def lipschitz_disc(lipschitz: float) -> Region:
    """Region containing the SRG of any Lipschitz-bounded operator."""
    return Region((Disc(0.0, float(lipschitz)),))


def sector_disc(k1: float, k2: float) -> Region:
    """Incremental disc of a static nonlinearity with slopes in [k1, k2]."""
    if k2 < k1:
        raise ValueError("sector requires k1 <= k2")
    return Region((Disc(complex((k1 + k2) / 2.0, 0.0), (k2 - k1) / 2.0),))


# ---------------------------------------------------------------------------
# SRG sampling.


@dataclass(frozen=True)
class SrgCloud:
    """Sampled SRG points, closed under conjugation; ``pair_index[i]`` is the
    index of the input pair that produced ``points[i]``."""

    points: np.ndarray
    pair_index: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=complex).copy()
        idx = np.asarray(self.pair_index, dtype=int).copy()
        if pts.shape != idx.shape:
            raise ValueError("points and pair_index must have equal shape")
        pts.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "pair_index", idx)


def sample_srg(op: OperatorSpec, pairs: list[tuple[Signal, Signal]]) -> SrgCloud:
    """Sample SRG points (both conjugates) from the given input pairs."""
    points: list[complex] = []
    index: list[int] = []
    for i, (u1, u2) in enumerate(pairs):
        du = u1 - u2
        ndu = norm(du)
        if ndu <= 1e-12:
            raise ValueError(f"pair {i} is degenerate: ||u1 - u2|| <= 1e-12")
        dy = apply(op, u1) - apply(op, u2)
        r = norm(dy) / ndu
        theta = angle(du, dy) if r > 0.0 else 0.0
        z = r * cmath.exp(1j * theta)
        points.extend([z, z.conjugate()])
        index.extend([i, i])
    return SrgCloud(np.array(points, dtype=complex), np.array(index, dtype=int))


def max_radius(obj: SrgCloud | Region) -> float:
    """Supremum of |z| over a cloud or region; inf for unbounded regions."""
    if isinstance(obj, SrgCloud):
        if obj.points.size == 0:
            return 0.0
        return float(np.max(np.abs(obj.points)))
    worst = 0.0
    for p in obj.primitives:
        if isinstance(p, Disc):
            worst = max(worst, abs(p.center) + p.radius)
        else:
            return math.inf
    return worst


# ---------------------------------------------------------------------------
# Region calculus.


def _invert_primitive(p: Primitive) -> Primitive:
    if isinstance(p, Disc):
        c, r = p.center, p.radius
        k = abs(c) ** 2 - r ** 2
        if abs(k) <= 1e-12 * max(abs(c), r, 1.0) ** 2:
            # 0 on the boundary circle: the image is a half-plane.
            if abs(c) == 0.0:  # Disc(0, 0) would need the point at infinity.
                raise UnrepresentableRegionError(
                    "cannot invert the origin point")
            return HalfPlane(c.conjugate() / abs(c), 1.0 / (2.0 * abs(c)))
        if k > 0.0:  # 0 outside: disc maps to disc.
            return Disc(c.conjugate() / k, r / k)
        # 0 interior: disc maps to the exterior of the image circle.
        return DiscExterior(c.conjugate() / k, r / (-k))
    if isinstance(p, HalfPlane):
        n, o = p.normal, p.offset
        if o > 0.0:  # 0 strictly outside: image is a disc through 1/boundary.
            return Disc(n.conjugate() / (2.0 * o), 1.0 / (2.0 * o))
        if o == 0.0:  # 0 on the boundary line: image is again a half-plane.
            return HalfPlane(n.conjugate(), 0.0)
        raise UnrepresentableRegionError(
            "cannot invert a half-plane containing 0 in its interior")
    # DiscExterior.
    c, r = p.center, p.radius
    k = abs(c) ** 2 - r ** 2
    if abs(k) <= 1e-12 * max(abs(c), r, 1.0) ** 2:
        if abs(c) == 0.0:
            raise UnrepresentableRegionError("cannot invert the whole plane")
        return HalfPlane(-c.conjugate() / abs(c), -1.0 / (2.0 * abs(c)))
    if k < 0.0:  # 0 in the excluded hole: exterior maps to a disc.
        return Disc(c.conjugate() / k, r / (-k))
    raise UnrepresentableRegionError(
        "cannot invert a disc exterior containing 0 in its interior")


def invert_region(r: Region) -> Region:
    """Image of the region under z -> 1/z (pointwise, on finite members).

    Fails loudly when any primitive has 0 in its interior in a way whose
    inverse is not representable as a finite union of primitives.
    """
    return Region(tuple(_invert_primitive(p) for p in r.primitives),
                  chord_closed=False, tags=r.tags)


def chord_closure(r: Region) -> Region:
    """Enlarge a conjugate-symmetric union of discs until it contains every
    chord point ``lam*z + (1-lam)*conj(z)`` of the input.

    Each off-axis disc (paired with its mirror) is covered by a vertical
    stack of discs along the segment joining the two centers.  The stack
    radius is inflated to ``sqrt(rho^2 + (h/2)^2)`` (h the center spacing) so
    the union provably contains the full chord set, which equals the stadium
    of the segment.  Already chord-closed regions pass through unchanged,
    which makes the operation idempotent.
    """
    if r.chord_closed:
        return r
    if not r.is_conjugate_symmetric():
        raise ValueError("chord closure requires a conjugate-symmetric region")
    out: list[Primitive] = []
    done: set[tuple[float, float, float]] = set()
    for p in r.primitives:
        if not isinstance(p, Disc):
            raise UnrepresentableRegionError(
                f"cannot chord-close a {type(p).__name__} in this algebra")
        b = p.center.imag
        if b == 0.0:
            out.append(p)
            continue
        key = (p.center.real, abs(b), p.radius)
        if key in done:
            continue
        done.add(key)
        a, rho = p.center.real, p.radius
        if rho == 0.0:
            # Degenerate disc: cover the chord segment with point-spacing
            # discs of radius h/2.
            m = 64
            heights = np.linspace(-abs(b), abs(b), m)
            half_gap = abs(heights[1] - heights[0]) / 2.0
            out.extend(Disc(complex(a, h), half_gap) for h in heights)
            continue
        m = math.ceil(2.0 * abs(b) / rho) + 1
        heights = np.linspace(-abs(b), abs(b), m)
        spacing = 2.0 * abs(b) / (m - 1)
        inflated = math.sqrt(rho ** 2 + (spacing / 2.0) ** 2)
        out.extend(Disc(complex(a, h), inflated) for h in heights)
    return Region(tuple(out), chord_closed=True, tags=r.tags)


def scale_region(r: Region, c: float) -> Region:
    """Pointwise real scaling; scaling a nonempty region by 0 collapses it to
    the origin point."""
    c = float(c)
    if c == 0.0:
        prims = (Disc(0.0, 0.0),) if r.primitives else ()
        return Region(prims, chord_closed=r.chord_closed, tags=r.tags)
    out: list[Primitive] = []
    for p in r.primitives:
        if isinstance(p, Disc):
            out.append(Disc(c * p.center, abs(c) * p.radius))
        elif isinstance(p, DiscExterior):
            out.append(DiscExterior(c * p.center, abs(c) * p.radius))
        else:
            if c > 0.0:
                out.append(HalfPlane(p.normal, c * p.offset))
            else:
                out.append(HalfPlane(-p.normal, -c * p.offset))
    return Region(tuple(out), chord_closed=r.chord_closed, tags=r.tags)


def negate_region(r: Region) -> Region:
    return scale_region(r, -1.0)


def _sum_primitives(p: Primitive, q: Primitive) -> Primitive:
    if isinstance(p, Disc) and isinstance(q, Disc):
        return Disc(p.center + q.center, p.radius + q.radius)
    if isinstance(p, HalfPlane) and isinstance(q, Disc):
        shift = (p.normal.conjugate() * q.center).real
        return HalfPlane(p.normal, p.offset + shift - q.radius)
    if isinstance(p, Disc) and isinstance(q, HalfPlane):
        return _sum_primitives(q, p)
    raise UnrepresentableRegionError(
        f"unsupported Minkowski sum of {type(p).__name__} and "
        f"{type(q).__name__}")


def minkowski_sum(a: Region, b: Region) -> Region:
    """Pairwise Minkowski sum over the unions; supports disc+disc and
    half-plane+disc pairs (exact support-function arithmetic)."""
    prims = tuple(_sum_primitives(p, q)
                  for p in a.primitives for q in b.primitives)
    return Region(prims, chord_closed=a.chord_closed and b.chord_closed,
                  tags=tuple(dict.fromkeys(a.tags + b.tags)))


def _primitive_distance(p: Primitive, q: Primitive) -> float:
    if isinstance(q, Disc) and not isinstance(p, Disc):
        p, q = q, p
    if isinstance(p, Disc):
        if isinstance(q, Disc):
            return max(0.0, abs(p.center - q.center) - p.radius - q.radius)
        if isinstance(q, HalfPlane):
            gap = q.offset - (q.normal.conjugate() * p.center).real
            return max(0.0, gap - p.radius)
        return max(0.0, q.radius - abs(p.center - q.center) - p.radius)
    if isinstance(p, HalfPlane) and isinstance(q, HalfPlane):
        if abs(p.normal + q.normal) <= 1e-12:
            return max(0.0, p.offset + q.offset)
        return 0.0
    # Any pairing involving a disc exterior and another unbounded primitive
    # always intersects far from the origin.
    return 0.0


def region_distance(a: Region, b: Region) -> float:
    """Infimum of |x - y| over member pairs; inf if either region is empty."""
    if a.is_empty() or b.is_empty():
        return math.inf
    return min(_primitive_distance(p, q)
               for p in a.primitives for q in b.primitives)


# ---------------------------------------------------------------------------
# Certified sweep of the feedback fraction.


@dataclass(frozen=True)
class SeparationSweep:
    """Certified infimum over tau of dist(s1_inv, -tau * s2)."""

    margin: float
    tau_star: float
    slack: float
    evaluations: int


def _distance_profile(s1_inv: Region, s2: Region,
                      taus: np.ndarray) -> np.ndarray:
    """Vectorized dist(s1_inv, -tau*s2) for every tau; s2 must be discs."""
    best = np.full(taus.shape, math.inf)
    for q in s2.primitives:
        qc, qr = q.center, q.radius
        centers = -taus * qc
        radii = taus * qr
        for p in s1_inv.primitives:
            if isinstance(p, Disc):
                d = np.abs(p.center - centers) - p.radius - radii
            elif isinstance(p, HalfPlane):
                gap = p.offset - (p.normal.conjugate() * centers).real
                d = gap - radii
            else:
                d = p.radius - np.abs(p.center - centers) - radii
            np.minimum(best, np.maximum(0.0, d), out=best)
    return best


def separation_sweep(
    s1_inv: Region, s2: Region, tau_lo: float = 1e-9, tau_hi: float = 1.0,
    rel_slack: float = 1e-4, max_evaluations: int = 10 ** 6,
) -> SeparationSweep:
    """Certified infimum of ``dist(s1_inv, -tau * s2)`` over a tau interval.

    The distance is 1-Lipschitz in ``tau`` with constant ``max_radius(s2)``,
    so a grid evaluation minus ``R2 * h / 2`` lower-bounds the true infimum.
    The grid refines until the subtracted slack is below ``rel_slack`` of the
    running margin or the evaluation budget is spent.
    """
    if not 0.0 < tau_lo <= tau_hi <= 1.0:
        raise ValueError("require 0 < tau_lo <= tau_hi <= 1")
    if not s2.is_bounded():
        raise ValueError("sweep requires a bounded region for the feedback "
                         "block (discs only)")
    if s1_inv.is_empty() or s2.is_empty():
        return SeparationSweep(math.inf, tau_lo, 0.0, 0)
    lipschitz = max_radius(s2)
    n = 65
    evaluations = 0
    while True:
        taus = np.linspace(tau_lo, tau_hi, n)
        profile = _distance_profile(s1_inv, s2, taus)
        evaluations += n
        i_min = int(np.argmin(profile))
        grid_min = float(profile[i_min])
        tau_star = float(taus[i_min])
        spacing = (tau_hi - tau_lo) / (n - 1) if n > 1 else 0.0
        slack = lipschitz * spacing / 2.0
        if grid_min <= 0.0:
            return SeparationSweep(0.0, tau_star, slack, evaluations)
        if slack < rel_slack * grid_min or evaluations >= max_evaluations:
            return SeparationSweep(max(0.0, grid_min - slack), tau_star,
                                   slack, evaluations)
        n = min(2 * n - 1, max(n + 1, max_evaluations - evaluations))


def separation_margin(
    s1_inv: Region, s2: Region, tau_lo: float = 1e-9, tau_hi: float = 1.0,
) -> float:
    """Certified margin of :func:`separation_sweep` (value only)."""
    return separation_sweep(s1_inv, s2, tau_lo, tau_hi).margin


# ---------------------------------------------------------------------------
# Heuristic SRG cover of a stable SISO LTI block.


def lti_nyquist_cover(
    op: OperatorSpec, omegas: np.ndarray | None = None, padding: float = 1e-3,
) -> Region:
    """Cover the frequency-response curve of a SISO LTI block with discs.

    The curve is sampled on a log grid; each sample becomes a disc whose
    radius is the larger adjacent curve gap plus ``padding``, and mirror
    discs keep the region conjugate-symmetric.  This covers the response
    curve itself, not its convex or hyperbolic hull, so the result is tagged
    ``heuristic`` and certificates must surface that tag.
    """
    node = op.node
    if not isinstance(node, LtiNode):
        raise ValueError("a frequency-response cover needs an LTI node")
    if node.n_in != 1 or node.n_out != 1:
        raise ValueError("frequency-response cover is limited to SISO blocks")
    if omegas is None:
        scale = float(np.max(np.abs(np.linalg.eigvals(node.a))))
        omegas = np.concatenate(
            ([0.0], np.geomspace(1e-3 * scale, 1e3 * scale, 256)))
    omegas = np.asarray(omegas, dtype=float)
    points = node.transfer(omegas)[:, 0, 0]
    limit = complex(node.d[0, 0])
    points = np.append(points, limit)
    prims: list[Primitive] = []
    for i, z in enumerate(points):
        gap = 0.0
        if i > 0:
            gap = max(gap, abs(z - points[i - 1]))
        if i + 1 < len(points):
            gap = max(gap, abs(z - points[i + 1]))
        disc = Disc(complex(z), gap + padding)
        prims.append(disc)
        if z.imag != 0.0:
            prims.append(disc.conjugate())
    return Region(tuple(prims), tags=("heuristic-nyquist-cover",))
