"""Poincaré series, critical exponents, Patterson–Sullivan atoms, and
Ahlfors / dimension diagnostics for measures on projective space."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from anosovlab.errors import (
    InsufficientData,
    InsufficientOverlap,
    InvalidFunctional,
    InvalidInput,
    NumericalFailure,
)
from anosovlab.flags import attracting_bases, bloch, from_bloch, projector_embedding
from anosovlab.matgrp import RootFunctional, _raw
from anosovlab.wordball import Ball

MATCH_TOL = 1e-6
_EXP_MAX = 709.0


# ---------------------------------------------------------------- series


def poincare_series(ball: Ball, phi: RootFunctional, s: float, values=None) -> float:
    """sum over the ball of exp(-s phi(kappa(gamma))), compensated."""
    if s <= 0:
        raise InvalidInput(f"s must be positive, got {s}")
    v = ball.values(phi) if values is None else np.asarray(values)
    if np.min(v) < -1e-9:
        raise InvalidFunctional(f"{phi} takes negative values on the ball")
    expo = -s * v
    if np.max(expo) > _EXP_MAX:
        raise NumericalFailure("term overflows double precision")
    return math.fsum(np.exp(expo).tolist())


@dataclass(frozen=True)
class ExponentEstimate:
    value: float
    method: str
    diagnostics: dict = field(default_factory=dict)


def _complete_threshold(ball: Ball, v) -> float:
    """phi-values below this are seen in full: every element with a smaller
    value has word length at most the radius, assuming values grow along
    spheres (checked by the caller's diagnostics)."""
    s = ball.sphere(ball.radius)
    return float(v[s].min())


def orbit_regression(ball: Ball, phi: RootFunctional, window=(0.2, 0.8), bins: int = 40,
                     values=None) -> ExponentEstimate:
    """Slope of log #{gamma : phi(kappa(gamma)) <= T} against T over the
    central part of [0, T_complete]."""
    if ball.radius < 4:
        raise InsufficientData("critical exponent needs radius >= 4")
    v = ball.values(phi) if values is None else np.asarray(values)
    t_complete = _complete_threshold(ball, v)
    lo, hi = window[0] * t_complete, window[1] * t_complete
    ts = np.linspace(lo, hi, bins)
    vs = np.sort(v)
    counts = np.searchsorted(vs, ts, side="right")
    if len(np.unique(counts)) < 5:
        raise InsufficientData(f"only {len(np.unique(counts))} distinct orbit counts in the window")
    y = np.log(counts)
    A = np.vstack([ts, np.ones_like(ts)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ coef
    rms = float(np.sqrt(np.mean((y - fit) ** 2)))
    return ExponentEstimate(max(0.0, float(coef[0])), "orbit_regression",
                            {"fit_rms": rms, "T_window": [float(lo), float(hi)],
                             "T_complete": t_complete, "raw_slope": float(coef[0])})


def _sphere_logsums(ball: Ball, v, s, spheres):
    out = []
    for n in spheres:
        sl = ball.sphere(n)
        x = -s * v[sl]
        m = x.max()
        out.append(m + math.log(math.fsum(np.exp(x - m).tolist())))
    return np.array(out)


def poincare_bisection(ball: Ball, phi: RootFunctional, values=None, tol: float = 1e-10) -> ExponentEstimate:
    """The s at which the sphere sums of exp(-s phi) stop growing with the
    radius (zero slope of their logarithms over the outer half of radii)."""
    if ball.radius < 4:
        raise InsufficientData("critical exponent needs radius >= 4")
    v = ball.values(phi) if values is None else np.asarray(values)
    spheres = [n for n in range(max(1, ball.radius // 2), ball.radius + 1)
               if ball.sphere(n).stop > ball.sphere(n).start]
    if len(spheres) < 3:
        raise InsufficientData("too few nonempty spheres")
    n = np.array(spheres, dtype=float)

    def slope(s):
        y = _sphere_logsums(ball, v, s, spheres)
        return float(np.polyfit(n, y, 1)[0])

    lo, hi = 1e-9, 1.0
    if slope(lo) <= 0:
        return ExponentEstimate(0.0, "poincare_bisection", {"slope_at_0": slope(lo),
                                                             "spheres": spheres})
    while slope(hi) > 0:
        hi *= 2
        if hi > 1e6:
            raise NumericalFailure("sphere sums grow for every s tested")
    s_star = brentq(slope, lo, hi, xtol=tol)
    y = _sphere_logsums(ball, v, s_star, spheres)
    rms = float(np.sqrt(np.mean((y - np.polyval(np.polyfit(n, y, 1), n)) ** 2)))
    return ExponentEstimate(float(s_star), "poincare_bisection", {"fit_rms": rms, "spheres": spheres})


def critical_exponent(ball: Ball, phi: RootFunctional, method: str | None = None,
                      window=(0.2, 0.8)):
    """Estimates of the critical exponent; both methods unless one is named."""
    if method == "orbit_regression":
        return orbit_regression(ball, phi, window)
    if method == "poincare_bisection":
        return poincare_bisection(ball, phi)
    if method is not None:
        raise InvalidInput(f"unknown method {method!r}")
    return {"orbit_regression": orbit_regression(ball, phi, window),
            "poincare_bisection": poincare_bisection(ball, phi)}


# ---------------------------------------------------------------- measures


@dataclass(eq=False)
class AtomicMeasure:
    """Finitely many weighted atoms on a flag manifold.

    ``bases`` has shape (n, d, m): nested orthonormal columns of the atom
    flags; for measures on projective space m = 1.
    """

    bases: np.ndarray
    weights: np.ndarray
    theta: tuple[int, ...] = (1,)
    metadata: dict = field(default_factory=dict)
    words: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0):
            raise InvalidInput("negative weights")

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights.tolist())

    @property
    def dim(self) -> int:
        return self.bases.shape[1]

    def __len__(self) -> int:
        return len(self.weights)

    def normalized(self) -> AtomicMeasure:
        return AtomicMeasure(self.bases, self.weights / self.total_mass, self.theta,
                             dict(self.metadata), self.words)

    def lines(self) -> np.ndarray:
        return self.bases[:, :, 0]

    def embedding(self) -> np.ndarray:
        """Euclidean coordinates of the smallest member of the atom flags
        (chordal for lines, see :func:`subspace_embedding`)."""
        return subspace_embedding(self.bases, min(self.theta))

    def pushforward(self, g) -> AtomicMeasure:
        a, _ = _raw(g)
        q = np.linalg.qr(a @ self.bases)[0]
        return AtomicMeasure(q, self.weights.copy(), self.theta, dict(self.metadata), self.words)


def line_embedding(lines) -> np.ndarray:
    """Chordal-isometric Euclidean embedding of lines given as unit vectors."""
    lines = np.asarray(lines)
    if lines.shape[-1] == 2:
        return bloch(lines) / 2
    return projector_embedding(lines)


def subspace_embedding(bases, k: int = 1) -> np.ndarray:
    """Euclidean coordinates of the k-planes spanned by the first k columns.

    Lines use :func:`line_embedding`; k-planes the orthogonal projector
    divided by sqrt(2), whose distances are the root sum of squared sines
    of the principal angles.
    """
    bases = np.asarray(bases)
    if k == 1:
        return line_embedding(bases[..., :, 0])
    b = bases[..., :, :k]
    p = b @ np.conj(np.swapaxes(b, -1, -2))
    flat = p.reshape(p.shape[:-2] + (-1,))
    return np.concatenate([flat.real, flat.imag], axis=-1) / np.sqrt(2)


def ps_atoms(ball: Ball, phi: RootFunctional, s: float, theta=(1,), shell=None,
             gap_tol: float = 1e-8) -> AtomicMeasure:
    """Orbit-measure approximation: atoms at U_theta(gamma) with weights
    exp(-s phi(kappa(gamma))) / Q(s), normalized.

    ``shell`` = (n_min, n_max) restricts the atoms to an annulus of word
    lengths; the default uses every element with nondegenerate gaps.
    """
    v = ball.values(phi)
    Q = poincare_series(ball, phi, s, v)
    if Q < 1 + 1e-12:
        raise InsufficientData("the series has no mass beyond the identity")
    n_min, n_max = (1, ball.radius) if shell is None else shell
    sl = ball.annulus(n_min, n_max)
    bases, ok = attracting_bases(ball.entries[sl], ball.inverses[sl], theta, gap_tol)
    idx = np.arange(sl.start, sl.stop)[ok]
    w = np.exp(-s * v[idx]) / Q
    if len(idx) == 0 or w.sum() == 0:
        raise InsufficientData("no atoms with nondegenerate gaps")
    words = ball.words()
    mu = AtomicMeasure(bases[ok], w, tuple(theta),
                       {"phi": str(phi), "s": s, "radius": ball.radius, "shell": [n_min, n_max],
                        "Q": Q, "skipped": int((~ok).sum())},
                       [words[i] for i in idx])
    return mu.normalized()


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z * z)
    phi = np.pi * (3 - np.sqrt(5)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def round_measure_cp1(n: int) -> AtomicMeasure:
    """Equal-weight atoms at a Fibonacci grid, pulled back from the sphere to
    CP^1; approximates the unique PSU(2)-invariant probability measure."""
    v = from_bloch(fibonacci_sphere(n))
    return AtomicMeasure(v[:, :, None], np.full(n, 1.0 / n), (1,), {"kind": "round", "n": n})


def cantor_measure(level: int, chart_scale: float = 1.0) -> AtomicMeasure:
    """Natural self-similar measure on the middle-thirds Cantor set placed
    on the real chart line [1 : c t], t in [0, 1]; one atom per interval of
    the given level, at its left endpoint."""
    digits = (np.arange(2 ** level)[:, None] >> np.arange(level)[::-1]) & 1
    t = (2 * digits * 3.0 ** -np.arange(1, level + 1)).sum(axis=1)
    v = np.stack([np.ones_like(t), chart_scale * t], axis=1).astype(complex)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return AtomicMeasure(v[:, :, None], np.full(len(t), 2.0 ** -level), (1,),
                         {"kind": "cantor", "level": level})


# ------------------------------------------------------- density check


def _cocycle_values(phi: RootFunctional, g, bases) -> np.ndarray:
    """phi(B(g, x)) for the flags in a stack, from wedge-norm growth."""
    a, _ = _raw(g)
    d = bases.shape[1]
    coeffs = phi.omega_coefficients(d)
    if max(coeffs) > bases.shape[2]:
        raise InvalidFunctional(f"{phi} needs members beyond the stored flags")
    out = np.zeros(bases.shape[0])
    for k, c in coeffs.items():
        r = np.linalg.qr(a @ bases[:, :, :k], mode="r")
        diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
        out += c * np.log(diag).sum(axis=1)
    return out


def _test_functions(d: int, n: int, kappa: float, seed: int):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    c /= np.linalg.norm(c, axis=1, keepdims=True)

    def f(lines):
        return np.exp(kappa * np.abs(lines @ c.conj().T) ** 2)

    return f


def ps_density_check(mu: AtomicMeasure, gamma, delta: float, phi: RootFunctional,
                     match_tol: float = MATCH_TOL, mode: str = "atoms",
                     n_test: int = 8, kappa: float = 2.0, seed: int = 0) -> dict:
    """Compare gamma_* mu with exp(-delta phi(B(gamma^-1, x))) mu.

    ``mode="atoms"``: pushed atoms are matched to atoms of mu within
    match_tol and the pointwise weight relation is checked.
    ``mode="weak"``: for discretizations of continuous measures, whose
    atoms are not permuted by gamma, both sides are integrated against
    smooth test functions exp(kappa |<c, y>|^2) and compared.
    """
    inv = gamma.inverse() if hasattr(gamma, "inverse") else np.linalg.inv(np.asarray(gamma))
    rn = np.exp(-delta * _cocycle_values(phi, inv, mu.bases))
    pushed = mu.pushforward(gamma)
    if mode == "weak":
        f = _test_functions(mu.dim, n_test, kappa, seed)
        lhs = mu.weights @ f(pushed.lines())
        rhs = (mu.weights * rn) @ f(mu.lines())
        rel = np.abs(lhs - rhs) / np.abs(rhs)
        return {"mode": "weak", "max_relative_defect": float(rel.max()),
                "defects": [float(v) for v in rel], "test_functions": n_test}
    if mode != "atoms":
        raise InvalidInput(f"unknown mode {mode!r}")
    tree = cKDTree(mu.embedding())
    dist, idx = tree.query(pushed.embedding(), k=1)
    matched = dist <= match_tol
    frac = float(mu.weights[matched].sum() / mu.weights.sum())
    if frac < 0.5:
        raise InsufficientOverlap(f"only {frac:.1%} of the pushed mass matches atoms")
    expected = rn[idx[matched]] * mu.weights[idx[matched]]
    got = mu.weights[matched]
    rel = np.abs(got - expected) / expected
    return {"mode": "atoms", "max_relative_defect": float(rel.max()),
            "matched_fraction": frac, "unmatched_fraction": 1 - frac}


# ---------------------------------------------------------- Ahlfors


def _ball_masses(tree, weights, centers, radii):
    """mu(B(x, t)) for each center and radius (closed balls)."""
    out = np.zeros((len(centers), len(radii)))
    rmax = radii.max()
    for i, c in enumerate(centers):
        idx = tree.query_ball_point(c, rmax)
        if not idx:
            continue
        idx = np.asarray(idx)
        dd = np.linalg.norm(tree.data[idx] - c, axis=1)
        order = np.argsort(dd)
        cum = np.cumsum(weights[idx[order]])
        pos = np.searchsorted(dd[order], radii, side="right")
        out[i] = np.where(pos > 0, cum[np.maximum(pos - 1, 0)], 0.0)
    return out


def default_radii(points, n: int = 8):
    """Dyadic radii from twice the median nearest-neighbour distance up to
    the largest distance from the centroid (between half the diameter and
    the diameter; unlike a bounding box it is invariant under isometries)."""
    tree = cKDTree(points)
    nn = tree.query(points, k=2)[0][:, 1]
    t_floor = 2 * float(np.median(nn))
    t0 = float(np.max(np.linalg.norm(points - points.mean(axis=0), axis=1)))
    if t0 <= t_floor:
        raise InsufficientData("sample too small for a range of radii")
    k = max(2, int(np.floor(np.log2(t0 / t_floor))) + 1)
    return t0 * 2.0 ** -np.arange(k)[::-1], t_floor, t0


def ahlfors_diagnostic(mu: AtomicMeasure, sample=None, radii=None, delta=None,
                       n_sample: int = 50, seed: int = 0) -> dict:
    """Per-point slopes of log mu(B(x, t)) against log t, and the band
    mu(B(x, t)) / t^delta in [c / D, c D] at the target delta."""
    pts = mu.embedding()
    tree = cKDTree(pts)
    if radii is None:
        radii, t_floor, t0 = default_radii(pts)
    else:
        radii = np.sort(np.asarray(radii, dtype=float))
        t_floor, t0 = float(radii[0]), float(radii[-1])
    if sample is None:
        rng = np.random.default_rng(seed)
        sample = rng.choice(len(pts), size=min(n_sample, len(pts)), replace=False,
                            p=mu.weights / mu.weights.sum())
    centers = pts[np.asarray(sample)]
    masses = _ball_masses(tree, mu.weights, centers, radii)
    logt = np.log(radii)
    slopes, empty = [], []
    for i, m in enumerate(masses):
        ok = m > 0
        if not ok[0]:
            empty.append(int(i))
        if ok.sum() < 2:
            slopes.append(float("nan"))
            continue
        slopes.append(float(np.polyfit(logt[ok], np.log(m[ok]), 1)[0]))
    out = {"radii": [float(r) for r in radii], "t_floor": t_floor, "t0": t0,
           "slopes": slopes, "empty_at_floor": empty,
           "median_slope": float(np.nanmedian(slopes))}
    if delta is not None:
        ok = masses > 0
        ratio = np.log(masses[ok]) - delta * np.broadcast_to(logt, masses.shape)[ok]
        c = float(np.mean(ratio))
        out["band"] = {"delta": delta, "center": float(np.exp(c)),
                       "D": float(np.exp(np.max(np.abs(ratio - c))))}
    return out


# ---------------------------------------------------------- dimensions


def _box_counts(points, scales):
    lo = points.min(axis=0)
    counts = []
    for eps in scales:
        cells = np.floor((points - lo) / eps).astype(np.int64)
        counts.append(len(np.unique(cells, axis=0)))
    return np.array(counts)


def default_scales(points, n: int = 24, saturation: float = 0.25):
    """Dyadic scales from a quarter of the diameter down to where the box
    count reaches a quarter of the sample size, or 2^-n of the diameter."""
    lo, hi = points.min(axis=0), points.max(axis=0)
    diam = float(np.linalg.norm(hi - lo))
    if diam == 0:
        return np.array([1.0])
    scales = []
    eps = diam / 4
    n_pts = len(points)
    for _ in range(n):
        scales.append(eps)
        if _box_counts(points, [eps])[0] >= saturation * n_pts:
            break
        eps /= 2
    return np.array(scales)


def box_dimension(points, scales=None, window=(0.2, 0.8)) -> dict:
    """Slope of log N(eps) against log(1/eps) over the central scales.

    ``points`` are Euclidean coordinates (see :func:`line_embedding`).
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        raise InsufficientData("need at least two points")
    scales = default_scales(pts) if scales is None else np.asarray(scales, dtype=float)
    scales = np.sort(scales)[::-1]
    counts = _box_counts(pts, scales)
    if len(np.unique(counts)) == 1:
        return {"dimension": 0.0, "scales": scales.tolist(), "counts": counts.tolist(),
                "window": [0, len(scales)], "warnings": ["box counts constant over all scales"]}
    n = len(scales)
    lo = int(np.floor(window[0] * n))
    hi = max(lo + 2, int(np.ceil(window[1] * n)))
    sel = slice(lo, hi)
    if len(np.unique(counts[sel])) < 3 or n < 5:
        raise InsufficientData(f"{len(np.unique(counts[sel]))} distinct counts over {n} scales")
    slope = np.polyfit(np.log(1 / scales[sel]), np.log(counts[sel]), 1)[0]
    warnings = [] if len(pts) >= 1000 else [f"only {len(pts)} points"]
    return {"dimension": float(slope), "scales": scales.tolist(), "counts": counts.tolist(),
            "window": [lo, hi], "warnings": warnings}


def _separated_set(tree, points, t):
    covered = np.zeros(len(points), dtype=bool)
    centers = []
    for i in range(len(points)):
        if covered[i]:
            continue
        centers.append(i)
        covered[tree.query_ball_point(points[i], t)] = True
    return centers


def hausdorff_mass_bounds(points, delta: float, scales=None, weights=None,
                          n_centers: int = 200, seed: int = 0) -> dict:
    """Bounds on the delta-dimensional cover sums of the sampled set.

    upper: min over scales t of k(t) t^delta, k(t) the size of a greedy
    maximal t-separated subset (whose t-balls cover the sample).
    lower: mass distribution bound 1 / max mu(B(x, t)) / t^delta.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 2:
        raise InsufficientData("need at least two points")
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float) / np.sum(weights)
    scales = default_scales(pts) if scales is None else np.asarray(scales, dtype=float)
    scales = np.sort(scales)[::-1]
    if len(scales) < 2:
        raise InsufficientData("need at least two scales")
    tree = cKDTree(pts)
    covers = [len(_separated_set(tree, pts, t)) for t in scales]
    sums = np.array(covers) * scales ** delta
    rng = np.random.default_rng(seed)
    centers = pts[rng.choice(n, size=min(n_centers, n), replace=False)]
    masses = _ball_masses(tree, w, centers, scales)
    density = (masses / scales[None, :] ** delta).max()
    return {"upper": float(sums.min()), "lower": float(1.0 / density),
            "cover_sums": sums.tolist(), "cover_sizes": covers, "scales": scales.tolist()}
