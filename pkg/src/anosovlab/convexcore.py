"""Hilbert geometry of ellipsoids, the Klein model of hyperbolic 3-space,
shadows, and orbit sequences along geodesic rays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from anosovlab.errors import (
    CocompactnessGap,
    InvalidInput,
    OutsideDomain,
    ShadowAmbiguous,
)
from anosovlab.flags import bloch
from anosovlab.matgrp import ProjectiveMatrix, normalize

BOUNDARY_TOL = 1e-9
INTERIOR_TOL = 1e-9
SEARCH_TOL = 1e-8
TERNARY_ITERS = 80

_PAULI = np.array([
    [[1, 0], [0, 1]],
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    """{[v] : q(v) > 0} for a form q of signature (1, d0 - 1).

    Points are given either in the affine chart v_0 = 1 (length d0 - 1) or
    as homogeneous vectors (length d0).
    """

    form: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.form, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or not np.allclose(q, q.T):
            raise InvalidInput("form must be a symmetric square matrix")
        ev = np.linalg.eigvalsh(q)
        if (ev > 0).sum() != 1 or (ev < 0).sum() != q.shape[0] - 1:
            raise InvalidInput(f"form must have signature (1, {q.shape[0] - 1}), eigenvalues {ev}")
        if np.any(np.linalg.eigvalsh(q[1:, 1:]) >= 0):
            raise InvalidInput("domain is not bounded in the chart v_0 = 1")
        q = q.copy()
        q.setflags(write=False)
        object.__setattr__(self, "form", q)

    @classmethod
    def klein_ball(cls, d0: int = 4) -> ConvexDomain:
        return cls(np.diag([1.0] + [-1.0] * (d0 - 1)))

    @property
    def dim(self) -> int:
        return self.form.shape[0]

    def center(self) -> np.ndarray:
        """Chart point maximizing the normalized form (the ball center for Klein)."""
        q = self.form
        return -np.linalg.solve(q[1:, 1:], q[1:, 0])

    def lift(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] == self.dim:
            return p
        if p.shape[-1] != self.dim - 1:
            raise InvalidInput(f"expected points of length {self.dim - 1} or {self.dim}")
        return np.concatenate([np.ones(p.shape[:-1] + (1,)), p], axis=-1)

    def chart(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return v[..., 1:] / v[..., :1]

    def bilinear(self, u, v) -> np.ndarray:
        return np.einsum("...i,ij,...j->...", u, self.form, v)

    def q(self, v) -> np.ndarray:
        return self.bilinear(v, v)

    def normalized(self, p, what: str = "point") -> np.ndarray:
        """Lift with q = 1 on the sheet containing the chart."""
        v = self.lift(p)
        qv = self.q(v)
        scale = np.einsum("...i,...i->...", v, v)
        if np.any(qv <= INTERIOR_TOL * scale):
            raise OutsideDomain(f"{what} is not strictly inside the domain")
        v = v / np.sqrt(qv)[..., None]
        return v * np.sign(v[..., :1])

    def contains(self, p) -> bool:
        v = self.lift(p)
        return bool(self.q(v) > INTERIOR_TOL * np.dot(v, v))

    def boundary_lift(self, a) -> np.ndarray:
        v = self.lift(a)
        scale = np.einsum("...i,...i->...", v, v)
        if np.any(np.abs(self.q(v)) >= BOUNDARY_TOL * scale):
            raise OutsideDomain("point is not on the boundary")
        return v * np.sign(v[..., :1])


def _acosh1p(x):
    """acosh(1 + x) for x >= 0 without cancellation."""
    x = np.maximum(x, 0.0)
    return np.log1p(x + np.sqrt(x * (x + 2)))


def hyperbolic_distance(domain: ConvexDomain, p, q) -> np.ndarray:
    """Riemannian distance of curvature -1; half the Hilbert distance."""
    u = domain.normalized(p)
    v = domain.normalized(q)
    # B(u, v) - 1 = -q(u - v) / 2 for q(u) = q(v) = 1
    return _acosh1p(-domain.q(u - v) / 2)


def hilbert_distance(domain: ConvexDomain, p, q) -> float | np.ndarray:
    """log of the cross ratio of p, q with the chord endpoints.

    Evaluated through the form: equals 2 acosh(B(p, q)) for lifts with
    q(p) = q(q) = 1.
    """
    out = 2 * hyperbolic_distance(domain, p, q)
    return float(out) if np.ndim(out) == 0 else out


def chord_cross_ratio_distance(domain: ConvexDomain, p, q) -> float:
    """log(|q-a||p-b| / (|p-a||q-b|)) from the chord endpoints a, b in the chart."""
    p = domain.chart(domain.lift(p)) if np.shape(p)[-1] == domain.dim else np.asarray(p, float)
    q = domain.chart(domain.lift(q)) if np.shape(q)[-1] == domain.dim else np.asarray(q, float)
    for x in (p, q):
        if not domain.contains(x):
            raise OutsideDomain("point is not strictly inside the domain")
    if np.allclose(p, q, rtol=0, atol=0):
        return 0.0
    direction = q - p
    # q(lift(p + t direction)) = A t^2 + 2 B t + C
    u = domain.lift(p)
    w = np.concatenate([[0.0], direction])
    A, B, C = domain.q(w), domain.bilinear(u, w), domain.q(u)
    disc = np.sqrt(B * B - A * C)
    t1, t2 = sorted([(-B - disc) / A, (-B + disc) / A])
    # a beyond p (t < 0), b beyond q (t > 1); lengths along the chord
    pa, qa = -t1, 1 - t1
    pb, qb = t2, t2 - 1
    return float(np.log(qa * pb / (pa * qb)))


def mobius_to_klein(g) -> ProjectiveMatrix:
    """Action X -> g X g^* on Hermitian 2x2 matrices in the basis (I, s1, s2, s3).

    The matrix preserves x_0^2 - x_1^2 - x_2^2 - x_3^2 = det X, so the Klein
    ball of its chart is invariant.
    """
    a = np.asarray(g.entries if isinstance(g, ProjectiveMatrix) else g, dtype=complex)
    conj = np.einsum("ab,kbc,dc->kad", a, _PAULI, a.conj())
    m = np.einsum("jab,kba->jk", _PAULI, conj).real / 2
    return normalize(m, "R")


def boundary_point(v) -> np.ndarray:
    """Chart coordinates on the sphere at infinity of [v] in CP^1 (Bloch vector)."""
    return bloch(v)


@dataclass(frozen=True)
class ShadowSpec:
    basepoint: np.ndarray
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInput("shadow radius must be positive")


def _ray(domain, o_hat, a):
    """Unit-speed geodesic ray s -> p(s) from o towards the boundary point a."""
    av = domain.boundary_lift(a)
    n = av / domain.bilinear(o_hat, av)

    def p(s):
        s = np.asarray(s, dtype=float)
        return np.exp(-s)[..., None] * o_hat + np.sinh(s)[..., None] * n

    return p, n


def shadow_membership(domain: ConvexDomain, spec: ShadowSpec, a, search_tol: float = SEARCH_TOL) -> bool:
    """Whether the ray [o, a) meets the open Hilbert ball B(q, r).

    The distance to q is convex along the ray, so a ternary search on the
    window where the nearest point can lie finds its minimum.
    """
    o_hat = domain.normalized(spec.basepoint, "basepoint")
    q_hat = domain.normalized(spec.center, "center")
    p, _ = _ray(domain, o_hat, a)

    def f(s):
        return float(2 * _acosh1p(-domain.q(domain.normalized(p(s)) - q_hat) / 2))

    hi = float(_acosh1p(-domain.q(o_hat - q_hat) / 2)) + 1.0
    lo = 0.0
    for _ in range(TERNARY_ITERS):
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if f(m1) < f(m2):
            hi = m2
        else:
            lo = m1
    best = min(f(lo), f(0.0))
    if abs(best - spec.radius) < search_tol:
        raise ShadowAmbiguous(f"nearest approach {best:.12g} within {search_tol:g} of r = {spec.radius}")
    return best < spec.radius


def _is_klein_center(domain: ConvexDomain, o) -> bool:
    d0 = domain.dim
    o = np.asarray(o, dtype=float)
    chart = o if len(o) == d0 - 1 else o[1:] / o[0]
    return bool(np.allclose(domain.form, np.diag([1.0] + [-1.0] * (d0 - 1))) and np.allclose(chart, 0))


def klein_polar(points, d0: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """(depth, direction) of points of the Klein ball about its center.

    Depth is the hyperbolic distance to the center, direction a unit
    vector. Rows of length d0 - 1 are chart points; rows of length d0 are
    hyperboloid vectors (x_0^2 - |x'|^2 = 1), which stay accurate far out
    where chart coordinates crowd against the sphere.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] == d0 - 1:
        spatial = pts
        rad = np.linalg.norm(spatial, axis=1)
        if np.any(rad >= 1 - INTERIOR_TOL):
            raise OutsideDomain("chart point is not strictly inside the ball")
        depth = np.arctanh(rad)
    elif pts.shape[1] == d0:
        if np.any(pts[:, 0] <= 0):
            raise OutsideDomain("hyperboloid vector on the wrong sheet")
        spatial = pts[:, 1:]
        rad = np.linalg.norm(spatial, axis=1)
        depth = np.arcsinh(rad)
    else:
        raise InvalidInput(f"points must have {d0 - 1} or {d0} coordinates")
    dirs = np.zeros_like(spatial)
    nz = rad > 0
    dirs[nz] = spatial[nz] / rad[nz, None]
    dirs[~nz, 0] = 1.0
    return depth, dirs


def polar_distance(D1, u1, D2, u2) -> np.ndarray:
    """Hyperbolic distance between points given in polar form (broadcasting).

    cosh d = cosh(D1 - D2) + 2 sinh D1 sinh D2 sin^2(theta / 2), with
    sin(theta / 2) = |u1 - u2| / 2 read off the directions directly.
    """
    half = np.linalg.norm(np.asarray(u1) - np.asarray(u2), axis=-1) / 2
    x = 2 * np.sinh((D1 - D2) / 2) ** 2 + 2 * np.sinh(D1) * np.sinh(D2) * half ** 2
    return _acosh1p(x)


def hyperboloid_orbit(matrices) -> np.ndarray:
    """Hyperboloid coordinates of g o for a stack of 2x2 unimodular matrices:
    the Hermitian matrix g g^* in the basis (I, s1, s2, s3)."""
    g = np.asarray(matrices, dtype=complex)
    h = g @ np.conj(np.swapaxes(g, -1, -2))
    x0 = np.real(h[:, 0, 0] + h[:, 1, 1]) / 2
    x1 = np.real(h[:, 0, 1])
    x2 = -np.imag(h[:, 0, 1])
    x3 = np.real(h[:, 0, 0] - h[:, 1, 1]) / 2
    return np.stack([x0, x1, x2, x3], axis=1)


def _angles(dirs, u):
    """cos and sin of the angle between unit vectors, sin from the rejection."""
    c = dirs @ u
    s = np.linalg.norm(dirs - c[..., None] * u, axis=-1)
    return c, s


def shadow_mask(domain: ConvexDomain, spec: ShadowSpec, boundary_points) -> np.ndarray:
    """Vectorized shadow test for many boundary points.

    With D the distance from o to q and psi the angle at o between q and
    the ray, the ray's distance to q is D when psi >= 90 degrees and
    asinh(sinh D sin psi) otherwise (hyperbolic units; Hilbert = 2x).
    """
    rho = spec.radius / 2
    bp = np.atleast_2d(np.asarray(boundary_points, dtype=float))
    if _is_klein_center(domain, spec.basepoint):
        Dq, wq = klein_polar(np.asarray(spec.center, float)[None], domain.dim)
        D, w = float(Dq[0]), wq[0]
        a = bp[:, 1:] / bp[:, :1] if bp.shape[1] == domain.dim else bp
        a = a / np.linalg.norm(a, axis=1, keepdims=True)
        cos_psi, sin_psi = _angles(a, w)
    else:
        o_hat = domain.normalized(spec.basepoint, "basepoint")
        q_hat = domain.normalized(spec.center, "center")
        D = float(_acosh1p(-domain.q(o_hat - q_hat) / 2))
        av = domain.lift(bp)
        av = av * np.sign(av[:, :1])
        # tangent directions at o; the Riemannian inner product there is -B
        u = av / domain.bilinear(o_hat, av)[:, None] - o_hat
        wv = q_hat - domain.bilinear(o_hat, q_hat) * o_hat
        cos_psi = np.clip(-domain.bilinear(u, wv) / np.sqrt(domain.q(u) * domain.q(wv)), -1, 1)
        sin_psi = np.sqrt(1 - cos_psi ** 2)
    if D < rho:
        return np.ones(len(bp), dtype=bool)
    return (cos_psi > 0) & (np.sinh(D) * sin_psi < np.sinh(rho))


def _require_klein(domain, basepoint):
    o = domain.center() if basepoint is None else np.asarray(basepoint, float)
    if not _is_klein_center(domain, o):
        raise InvalidInput("orbit diagnostics are implemented for the Klein ball seen from its center")


def _ray_windows(D, dirs, a, R_h):
    """Arclength window of the ray from the center towards a within R_h of
    each point, plus the distance from each point to the full geodesic."""
    c, s = _angles(dirs, a)
    h = np.arcsinh(np.sinh(D) * s)
    # cosh D = cosh h cosh s0, s0 signed by the side of the projection
    s0 = np.sign(c) * np.arccosh(np.maximum(np.cosh(D) / np.cosh(h), 1.0))
    inside = h < R_h
    half = np.arccosh(np.maximum(np.cosh(R_h) / np.cosh(h), 1.0))
    return s0 - half, s0 + half, inside, h


def _points(orbit_points):
    """Orbit points from a Ball (via its matrices) or as given."""
    if hasattr(orbit_points, "entries"):
        return hyperboloid_orbit(orbit_points.entries)
    return orbit_points


def _unit_boundary(a, d0=4):
    a = np.asarray(a, dtype=float)
    if a.shape[-1] == d0:
        a = a[1:] / a[0]
    return a / np.linalg.norm(a)


def geodesic_orbit_sequence(domain: ConvexDomain, orbit_points, a, R: float,
                            basepoint=None, depth_limit: float | None = None,
                            margin: float = 1e-9) -> dict:
    """Greedy chain gamma_1 = id, gamma_2, ... of orbit points covering the
    ray [o, a) by Hilbert R-balls: each next point's ball contains the far
    end of the current one's intersection with the ray, and among those the
    one reaching farthest is taken.

    ``orbit_points`` are the points gamma o (chart or hyperboloid form),
    index 0 being o itself, or a Ball of 2x2 matrices (then the chain's
    words are reported too). Depths and R are in Hilbert units. The chain
    stops at ``depth_limit`` (default: half the largest depth supplied,
    beyond which a finite sample cannot cover the ray) and raises
    CocompactnessGap if it breaks before.
    """
    _require_klein(domain, basepoint)
    ball = orbit_points if hasattr(orbit_points, "entries") else None
    D, dirs = klein_polar(_points(orbit_points), domain.dim)
    u = _unit_boundary(a)
    R_h = R / 2
    lo, hi, inside, _ = _ray_windows(D, dirs, u, R_h)
    limit_h = D.max() / 2 if depth_limit is None else depth_limit / 2
    chain = [0]
    far = hi[0]
    steps = []
    while far < limit_h:
        cand = np.nonzero(inside & (lo < far - margin) & (hi > far + margin))[0]
        if len(cand) == 0:
            nearest = float(2 * np.min(polar_distance(far, u, D, dirs)))
            raise CocompactnessGap(2 * float(far), nearest)
        nxt = int(cand[np.argmax(hi[cand])])
        steps.append(float(2 * polar_distance(D[chain[-1]], dirs[chain[-1]], D[nxt], dirs[nxt])))
        chain.append(nxt)
        far = hi[nxt]
    out = {"indices": chain, "step_distances": steps, "reached_depth": float(2 * far),
            "depth_limit": float(2 * limit_h), "max_step": max(steps) if steps else 0.0,
            "R": R}
    if ball is not None:
        out["words"] = [ball.word(i) for i in chain]
    return out


def cocompactness_radius(domain: ConvexDomain, orbit_points, boundary_points, depth: float,
                         n_steps: int = 64, basepoint=None) -> float:
    """Largest distance from a ray point to the orbit sample, over rays from
    the center towards the given boundary points (Hilbert units, ray depths
    up to ``depth``)."""
    _require_klein(domain, basepoint)
    D, dirs = klein_polar(_points(orbit_points), domain.dim)
    s = np.linspace(0, depth / 2, n_steps)
    worst = 0.0
    for a in np.atleast_2d(boundary_points):
        u = _unit_boundary(a)
        near = np.array([np.min(polar_distance(t, u, D, dirs)) for t in s])
        worst = max(worst, float(near.max()))
    return 2 * worst


def shadow_cap_angle(depth, rho) -> np.ndarray:
    """Angular radius, seen from the center, of the shadow of the ball of
    hyperbolic radius rho about a point at hyperbolic depth ``depth``
    (pi when the ball contains the center)."""
    depth = np.asarray(depth, dtype=float)
    k = np.sinh(rho) / np.sinh(np.maximum(depth, 1e-300))
    ang = np.where(k >= 1, np.pi / 2, np.arcsin(np.minimum(k, 1.0)))
    return np.where(depth < rho, np.pi, ang)


def shadow_lemma_diagnostic(domain: ConvexDomain, orbit_points, alphas, atoms, weights,
                            delta: float, r: float, r0: float | None = None) -> dict:
    """Ratios mu(shadow of B(gamma o, r) from o) / exp(-delta alpha_1(kappa(gamma))).

    ``atoms`` are boundary points (unit vectors of the sphere at infinity)
    with ``weights``; ``orbit_points`` the points gamma o and ``alphas``
    the matching alpha_1 values. Shadows are caps, so the masses come from
    range queries on a KD-tree of the atoms.
    """
    from scipy.spatial import cKDTree

    _require_klein(domain, None)
    D, dirs = klein_polar(orbit_points, domain.dim)
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    atoms = atoms / np.linalg.norm(atoms, axis=1, keepdims=True)
    weights = np.asarray(weights, dtype=float)
    chord = 2 * np.sin(shadow_cap_angle(D, r / 2) / 2)
    tree = cKDTree(atoms)
    hits = tree.query_ball_point(dirs, chord * (1 + 1e-12))
    masses = np.array([weights[h].sum() if h else 0.0 for h in hits])
    ratios = masses / np.exp(-delta * np.asarray(alphas, dtype=float))
    ok = masses > 0
    out = {"r": r, "delta": delta, "evaluated": int(ok.sum()), "empty_shadows": int((~ok).sum()),
           "ratios_min": float(ratios[ok].min()) if ok.any() else float("nan"),
           "ratios_max": float(ratios[ok].max()) if ok.any() else float("nan")}
    out["spread"] = out["ratios_max"] / out["ratios_min"] if ok.any() else float("nan")
    out["reliable"] = r0 is None or r > r0
    if not out["reliable"]:
        out["note"] = f"r = {r:g} is below the estimated r0 = {r0:g}; no band asserted"
        out["spread"] = None
    return out
