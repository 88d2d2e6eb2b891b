"""Domains for reflected simulation: signed distances, projections, normals.

Sign convention: signed_distance < 0 strictly inside, 0 on the boundary,
> 0 outside.  project_to_closure returns the nearest point of the closed
domain together with the displacement length, so interior points are fixed
points with displacement 0.  inward_normal is the unit normal pointing into
the domain and is only defined on the boundary.

1-d domains (Interval, HalfLine) work with plain floats; 2-d domains take
length-2 arrays.  Every domain also exposes block variants (signed_block,
project_block) operating on (n,) or (n, 2) arrays; the simulation engine
uses only those.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Points within PROJ_TOL outside the closure count as already projected;
# this makes projection exactly idempotent despite rounding on curved pieces.
PROJ_TOL = 1e-12
# Two projection candidates whose distances agree to AMBIG_TOL but whose
# footpoints differ by more than AMBIG_SEP have no well-defined nearest point.
# AMBIG_SEP must sit above the float mismatch of two parametrizations of the
# same tangency point (observed ~1e-8 where a fillet meets a chamber arc)
# and below any genuine medial-axis gap (at least the neck width).
AMBIG_TOL = 1e-12
AMBIG_SEP = 1e-6
# inward_normal accepts points this close to the boundary.
BOUNDARY_TOL = 1e-9


class AmbiguousProjection(Exception):
    """Nearest boundary point is not unique at the requested tolerance."""


class NotOnBoundary(Exception):
    """inward_normal called at a point away from the boundary."""


class Domain:
    """Base interface; concrete domains implement the *_block methods."""

    dimension: int = 0

    def signed_distance(self, p):
        raise NotImplementedError

    def project_to_closure(self, p):
        raise NotImplementedError

    def inward_normal(self, q):
        raise NotImplementedError

    def signed_block(self, pts):
        raise NotImplementedError

    def project_block(self, pts, rng=None):
        """Project an (n, d) block into the closure.

        Returns (projected, displacement).  Rows already inside pass through
        unchanged with displacement 0.  For domains where the nearest point
        can be non-unique, ambiguous rows are perturbed and retried when an
        rng is supplied (three attempts), else AmbiguousProjection is raised.
        """
        raise NotImplementedError

    def reflect_block(self, pts, rng=None):
        """Mirror an (n, d) block back into the closure.

        Same contract as project_block (and the same displacement, the
        exterior distance), but exited rows land strictly inside instead of
        on the boundary.  The projected chain piles O(sqrt(h)) occupation
        mass onto the boundary, which biases expectations of non-Neumann
        observables at half order; the mirrored chain removes that layer.
        Note the mirror's overshoot distance is not a faithful local-time
        increment (the walk re-enters after each contact, so overshoots sum
        to about half the Skorokhod local time); use bridge_step when the
        increment matters.  Domains without a cheap mirror fall back to
        projection.
        """
        return self.project_block(pts, rng)

    def bridge_step(self, pos, noise, h, rng):
        """One reflected step carrying the within-step boundary excursion.

        pos is the (n,) or (n, 2) block of current positions, noise the
        Gaussian increments for a step of size h.  Returns (new_positions,
        local_time_increments).  Flat-boundary 1-d domains implement the
        exact joint law of (endpoint, local time) by sampling the Brownian
        bridge maximum; this sees sub-step excursions that a discrete
        proposal misses entirely, so expectations and local-time clocks
        built on it carry no half-order boundary bias.  Domains without a
        bridge rule fall back to the mirrored step.
        """
        return self.reflect_block(pos + noise, rng)


def _as_point2(p):
    q = np.asarray(p, dtype=float)
    if q.shape != (2,):
        raise ValueError(f"expected a 2-d point, got shape {q.shape}")
    return q


@dataclass(frozen=True)
class Interval(Domain):
    a: float
    b: float
    dimension: int = field(default=1, init=False, repr=False)

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")

    def signed_distance(self, p):
        p = float(p)
        return max(self.a - p, p - self.b)

    def project_to_closure(self, p):
        p = float(p)
        q = min(max(p, self.a), self.b)
        return q, abs(p - q)

    def inward_normal(self, q):
        q = float(q)
        if abs(q - self.a) <= BOUNDARY_TOL:
            return 1.0
        if abs(q - self.b) <= BOUNDARY_TOL:
            return -1.0
        raise NotOnBoundary(f"{q} is not on the boundary of [{self.a}, {self.b}]")

    def signed_block(self, pts):
        return np.maximum(self.a - pts, pts - self.b)

    def project_block(self, pts, rng=None):
        proj = np.clip(pts, self.a, self.b)
        return proj, np.abs(pts - proj)

    def reflect_block(self, pts, rng=None):
        disp = np.abs(pts - np.clip(pts, self.a, self.b))
        refl = np.where(pts < self.a, 2.0 * self.a - pts, pts)
        refl = np.where(refl > self.b, 2.0 * self.b - refl, refl)
        # a step large enough to mirror past the far endpoint is far outside
        # the sqrt(h) regime; clamp rather than iterate
        return np.clip(refl, self.a, self.b), disp

    def bridge_step(self, pos, noise, h, rng):
        prop = pos + noise
        m = np.sqrt(noise * noise + 2.0 * h * rng.exponential(1.0, len(pos)))
        # bridge-max push at each endpoint; at step scale at most one is
        # active, so a single max sample serves both
        lo = np.maximum(0.5 * (m - (pos - self.a) - (prop - self.a)), 0.0)
        hi = np.maximum(0.5 * (m - (self.b - pos) - (self.b - prop)), 0.0)
        return np.clip(prop + lo - hi, self.a, self.b), lo + hi


@dataclass(frozen=True)
class HalfLine(Domain):
    """The half-line [0, inf)."""

    dimension: int = field(default=1, init=False, repr=False)

    def signed_distance(self, p):
        return -float(p)

    def project_to_closure(self, p):
        p = float(p)
        if p >= 0.0:
            return p, 0.0
        return 0.0, -p

    def inward_normal(self, q):
        if abs(float(q)) <= BOUNDARY_TOL:
            return 1.0
        raise NotOnBoundary(f"{q} is not at the origin")

    def signed_block(self, pts):
        return -pts

    def project_block(self, pts, rng=None):
        proj = np.maximum(pts, 0.0)
        return proj, proj - pts

    def reflect_block(self, pts, rng=None):
        return np.abs(pts), np.maximum(-pts, 0.0)

    def bridge_step(self, pos, noise, h, rng):
        prop = pos + noise
        m = np.sqrt(noise * noise + 2.0 * h * rng.exponential(1.0, len(pos)))
        dl = np.maximum(0.5 * (m - pos - prop), 0.0)
        return prop + dl, dl


@dataclass(frozen=True)
class Disk(Domain):
    center: tuple
    radius: float
    dimension: int = field(default=2, init=False, repr=False)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 2:
            raise ValueError("center must be a 2-d point")

    def _c(self):
        return np.asarray(self.center)

    def signed_distance(self, p):
        p = _as_point2(p)
        return float(np.hypot(*(p - self._c())) - self.radius)

    def project_to_closure(self, p):
        p = _as_point2(p)
        sd = self.signed_distance(p)
        if sd <= PROJ_TOL:
            return p, 0.0
        c = self._c()
        q = c + (p - c) * (self.radius / (sd + self.radius))
        return q, sd

    def inward_normal(self, q):
        q = _as_point2(q)
        if abs(self.signed_distance(q)) > BOUNDARY_TOL:
            raise NotOnBoundary("point is not on the circle")
        v = self._c() - q
        return v / np.hypot(*v)

    def signed_block(self, pts):
        return np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1]) - self.radius

    def project_block(self, pts, rng=None):
        v = pts - self._c()
        r = np.hypot(v[:, 0], v[:, 1])
        out = r > self.radius + PROJ_TOL
        if not out.any():
            return pts, np.zeros(len(pts))
        proj = pts.copy()
        scale = self.radius / r[out]
        proj[out] = self._c() + v[out] * scale[:, None]
        d = np.zeros(len(pts))
        d[out] = r[out] - self.radius
        return proj, d

    def reflect_block(self, pts, rng=None):
        v = pts - self._c()
        r = np.hypot(v[:, 0], v[:, 1])
        out = r > self.radius + PROJ_TOL
        if not out.any():
            return pts, np.zeros(len(pts))
        refl = pts.copy()
        # radial mirror r -> 2R - r; overshoot past the center is out of the
        # step-scale regime, clamp the mirrored radius at 0
        scale = np.maximum(2.0 * self.radius - r[out], 0.0) / r[out]
        refl[out] = self._c() + v[out] * scale[:, None]
        d = np.zeros(len(pts))
        d[out] = r[out] - self.radius
        return refl, d


@dataclass(frozen=True)
class HalfSpace2D(Domain):
    """The upper half-plane {(x, y): y >= 0}."""

    dimension: int = field(default=2, init=False, repr=False)

    def signed_distance(self, p):
        return -float(_as_point2(p)[1])

    def project_to_closure(self, p):
        p = _as_point2(p)
        if p[1] >= 0.0:
            return p, 0.0
        return np.array([p[0], 0.0]), -p[1]

    def inward_normal(self, q):
        q = _as_point2(q)
        if abs(q[1]) > BOUNDARY_TOL:
            raise NotOnBoundary("point is not on the axis")
        return np.array([0.0, 1.0])

    def signed_block(self, pts):
        return -pts[:, 1]

    def project_block(self, pts, rng=None):
        proj = pts.copy()
        below = pts[:, 1] < 0.0
        proj[below, 1] = 0.0
        d = np.where(below, -pts[:, 1], 0.0)
        return proj, d

    def reflect_block(self, pts, rng=None):
        refl = pts.copy()
        refl[:, 1] = np.abs(pts[:, 1])
        return refl, np.where(pts[:, 1] < 0.0, -pts[:, 1], 0.0)

    def bridge_step(self, pos, noise, h, rng):
        # flat boundary: the y coordinate is a half-line reflection
        prop = pos + noise
        m = np.sqrt(noise[:, 1] ** 2 + 2.0 * h * rng.exponential(1.0, len(pos)))
        dl = np.maximum(0.5 * (m - pos[:, 1] - prop[:, 1]), 0.0)
        new = prop
        new[:, 1] += dl
        return new, dl


@dataclass(frozen=True)
class DumbbellParams:
    """Two chambers joined by a straight neck with filleted junctions.

    chamber_centers must share their y coordinate (axis-aligned neck).  The
    neck is the rectangle spanning the two centers with half-width
    neck_halfwidth; each of the four reentrant junction corners is rounded
    by an arc of radius fillet_radius, so the boundary is C^{1,1}.
    """

    chamber_radius: float
    chamber_centers: tuple
    neck_halfwidth: float
    fillet_radius: float

    def __post_init__(self):
        r, eps, rho = self.chamber_radius, self.neck_halfwidth, self.fillet_radius
        if r <= 0:
            raise ValueError("chamber_radius must be positive")
        if not 0 < eps < r:
            raise ValueError("need 0 < neck_halfwidth < chamber_radius")
        if rho <= 0:
            raise ValueError("fillet_radius must be positive")
        c1, c2 = (tuple(float(v) for v in c) for c in self.chamber_centers)
        if c1[1] != c2[1]:
            raise ValueError("chamber centers must share their y coordinate")
        if c1[0] > c2[0]:
            c1, c2 = c2, c1
        object.__setattr__(self, "chamber_centers", (c1, c2))
        if c2[0] - c1[0] <= 2 * r:
            raise ValueError("chambers must be disjoint")
        # x-offset from a chamber center to the fillet center / line tangency
        half_span = math.sqrt((r + rho) ** 2 - (eps + rho) ** 2)
        if c1[0] + half_span >= c2[0] - half_span:
            raise ValueError("fillet_radius too large: neck edges vanish")


class Dumbbell(Domain):
    """Signed geometry of the filleted dumbbell.

    The boundary decomposes exactly into two chamber arcs, two neck edges
    and four fillet arcs; distances are minima over those pieces, so they
    are exact (not an SDF approximation).
    """

    dimension = 2

    def __init__(self, params: DumbbellParams):
        self.params = params
        r = params.chamber_radius
        eps = params.neck_halfwidth
        rho = params.fillet_radius
        c1, c2 = params.chamber_centers
        self._r = r
        self._eps = eps
        self._rho = rho
        self._c1 = np.asarray(c1)
        self._c2 = np.asarray(c2)
        self._ny = c1[1]

        hs = math.sqrt((r + rho) ** 2 - (eps + rho) ** 2)  # fillet x-offset
        qx = math.sqrt(r * r - eps * eps)  # junction corner x-offset
        self._theta = math.atan2(eps + rho, hs)  # absorbed half-angle
        # farthest point of a fillet bay from its fillet center
        self._reach = math.hypot(hs - qx, rho)

        ny = self._ny
        self._fillets = np.array(
            [
                [c1[0] + hs, ny + eps + rho],
                [c1[0] + hs, ny - eps - rho],
                [c2[0] - hs, ny + eps + rho],
                [c2[0] - hs, ny - eps - rho],
            ]
        )
        self._neck_x = (c1[0] + hs, c2[0] - hs)
        self._box_cx = 0.5 * (c1[0] + c2[0])
        self._box_hx = 0.5 * (c2[0] - c1[0])

        self._arcs = []  # (center, radius, ang_lo, ang_hi, inward_sign)
        th = self._theta
        # chamber arcs keep everything outside the absorbed junction sector;
        # inward_sign +1 means the inward normal points toward the center
        self._arcs.append((self._c1, r, th, 2 * math.pi - th, +1.0))
        self._arcs.append((self._c2, r, th - math.pi, math.pi - th, +1.0))
        for k, f in enumerate(self._fillets):
            cham = self._c1 if k < 2 else self._c2
            a_cham = math.atan2(cham[1] - f[1], cham[0] - f[0])
            a_line = -math.pi / 2 if f[1] > ny else math.pi / 2
            lo, hi = sorted((a_cham, _unwrap_near(a_line, a_cham)))
            self._arcs.append((f, rho, lo, hi, -1.0))
        xs = self._neck_x
        self._segs = [
            (np.array([xs[0], ny + eps]), np.array([xs[1], ny + eps]), np.array([0.0, -1.0])),
            (np.array([xs[0], ny - eps]), np.array([xs[1], ny - eps]), np.array([0.0, 1.0])),
        ]

    # -- membership ---------------------------------------------------------

    def _primitive_min(self, pts):
        """min over (chamber, chamber, neck box) signed distances; exact outside."""
        d1 = np.hypot(pts[:, 0] - self._c1[0], pts[:, 1] - self._c1[1]) - self._r
        d2 = np.hypot(pts[:, 0] - self._c2[0], pts[:, 1] - self._c2[1]) - self._r
        qx = np.abs(pts[:, 0] - self._box_cx) - self._box_hx
        qy = np.abs(pts[:, 1] - self._ny) - self._eps
        dbox = np.minimum(np.maximum(qx, qy), 0.0) + np.hypot(
            np.maximum(qx, 0.0), np.maximum(qy, 0.0)
        )
        return np.minimum(np.minimum(d1, d2), dbox)

    def _inside(self, pts):
        inside = self._primitive_min(pts) <= 0.0
        # fillet bays: annular sector between the fillet arc and the old corner
        for f, rho, lo, hi, sgn in self._arcs[2:]:
            v = pts - f
            rr = np.hypot(v[:, 0], v[:, 1])
            ang = lo + np.mod(np.arctan2(v[:, 1], v[:, 0]) - lo, 2 * math.pi)
            bay = (ang <= hi) & (rr >= rho) & (rr <= self._reach)
            inside |= bay
        return inside

    # -- distances ----------------------------------------------------------

    def _piece_candidates(self, pts):
        """Distances and footpoints to every boundary piece: (n, m), (n, m, 2)."""
        n = len(pts)
        dists, projs = [], []
        for cc, rad, lo, hi, sgn in self._arcs:
            v = pts - cc
            rr = np.hypot(v[:, 0], v[:, 1])
            safe = np.maximum(rr, 1e-300)
            ang = lo + np.mod(np.arctan2(v[:, 1], v[:, 0]) - lo, 2 * math.pi)
            on = (ang <= hi) & (rr > 1e-15)
            foot = cc + v * (rad / safe)[:, None]
            d = np.abs(rr - rad)
            e_lo = cc + rad * np.array([math.cos(lo), math.sin(lo)])
            e_hi = cc + rad * np.array([math.cos(hi), math.sin(hi)])
            d_lo = np.hypot(pts[:, 0] - e_lo[0], pts[:, 1] - e_lo[1])
            d_hi = np.hypot(pts[:, 0] - e_hi[0], pts[:, 1] - e_hi[1])
            use_hi = d_hi < d_lo
            d_end = np.where(use_hi, d_hi, d_lo)
            foot_end = np.where(use_hi[:, None], e_hi[None, :], e_lo[None, :])
            dists.append(np.where(on, d, d_end))
            projs.append(np.where(on[:, None], foot, foot_end))
        for p0, p1, nrm in self._segs:
            u = p1 - p0
            L2 = float(u @ u)
            t = np.clip(((pts - p0) @ u) / L2, 0.0, 1.0)
            foot = p0 + t[:, None] * u
            d = np.hypot(pts[:, 0] - foot[:, 0], pts[:, 1] - foot[:, 1])
            dists.append(d)
            projs.append(foot)
        return np.stack(dists, axis=1), np.stack(projs, axis=1)

    def signed_block(self, pts):
        dists, _ = self._piece_candidates(pts)
        ud = dists.min(axis=1)
        return np.where(self._inside(pts), -ud, ud)

    def signed_distance(self, p):
        return float(self.signed_block(_as_point2(p)[None, :])[0])

    def project_block(self, pts, rng=None):
        proj = pts.copy()
        disp = np.zeros(len(pts))
        # anything inside the primitive union is inside the domain; only the
        # remainder (near junctions or genuinely outside) needs piece work
        maybe = self._primitive_min(pts) > 0.0
        if not maybe.any():
            return proj, disp
        sub = pts[maybe]
        # exact membership prunes the fillet bays cheaply; only the residue
        # (outside or within PROJ_TOL of the boundary) pays for piece work
        unresolved = ~self._inside(sub)
        out_sub = np.zeros(len(sub), dtype=bool)
        if unresolved.any():
            out_sub[unresolved] = self.signed_block(sub[unresolved]) > PROJ_TOL
        out = np.zeros(len(pts), dtype=bool)
        out[maybe] = out_sub
        if not out.any():
            return proj, disp
        sub = pts[out]
        for attempt in range(3):
            dists, feet = self._piece_candidates(sub)
            order = np.argsort(dists, axis=1)
            idx = np.arange(len(sub))
            d0 = dists[idx, order[:, 0]]
            d1 = dists[idx, order[:, 1]]
            f0 = feet[idx, order[:, 0]]
            f1 = feet[idx, order[:, 1]]
            sep = np.hypot(f0[:, 0] - f1[:, 0], f0[:, 1] - f1[:, 1])
            ambig = (d1 - d0 < AMBIG_TOL) & (sep > AMBIG_SEP)
            if not ambig.any():
                proj[out] = f0
                disp[out] = np.hypot(sub[:, 0] - f0[:, 0], sub[:, 1] - f0[:, 1])
                return proj, disp
            if rng is None:
                raise AmbiguousProjection("nearest boundary point is not unique")
            sub = sub.copy()
            sub[ambig] += 1e-9 * rng.standard_normal((int(ambig.sum()), 2))
        raise AmbiguousProjection("nearest boundary point is not unique after retries")

    def project_to_closure(self, p):
        p = _as_point2(p)
        if self.signed_distance(p) <= PROJ_TOL:
            return p, 0.0
        proj, disp = self.project_block(p[None, :])
        return proj[0], float(disp[0])

    def inward_normal(self, q):
        q = _as_point2(q)
        if abs(self.signed_distance(q)) > BOUNDARY_TOL:
            raise NotOnBoundary("point is not on the dumbbell boundary")
        dists, _ = self._piece_candidates(q[None, :])
        k = int(np.argmin(dists[0]))
        if k < len(self._arcs):
            cc, rad, lo, hi, sgn = self._arcs[k]
            v = cc - q if sgn > 0 else q - cc
            return v / np.hypot(*v)
        return self._segs[k - len(self._arcs)][2]


def _unwrap_near(angle, ref):
    """Shift angle by multiples of 2*pi to land within pi of ref."""
    while angle - ref > math.pi:
        angle -= 2 * math.pi
    while angle - ref < -math.pi:
        angle += 2 * math.pi
    return angle


DomainSpec = Interval | Disk | HalfLine | HalfSpace2D | Dumbbell
