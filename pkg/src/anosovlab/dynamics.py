"""Limit-set samples, transversality audits, hyperconvexity tests, and
convergence spot checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from anosovlab.errors import (
    EmptySample,
    InsufficientData,
    InvalidFlag,
    NotTransverse,
    PreconditionViolation,
    RankAmbiguous,
)
from anosovlab.flags import (
    GAP_TOL,
    TRANS_TOL,
    Flag,
    GrassmannPoint,
    attracting_bases,
    attracting_flag,
    gr_distance,
    iota,
    theta_k,
    transversality_margin,
)
from anosovlab.matgrp import _raw, random_unitary
from anosovlab.wordball import Ball, format_word

RANK_TOL = 1e-7
RANK_BAND = (1e-9, 1e-7)
SEP_TOL = 1e-4


@dataclass(eq=False)
class LimitSetSample:
    """Attracting flags U_theta(gamma) over an annulus of a ball.

    ``bases`` holds nested orthonormal columns of type theta u iota(theta),
    so any two members can be tested for transversality.
    """

    theta: tuple[int, ...]
    bases: np.ndarray
    words: list[tuple[str, ...]]
    indices: np.ndarray
    annulus: tuple[int, int]
    skipped: int = 0
    ball: Ball | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def dim(self) -> int:
        return self.bases.shape[1]

    @property
    def full_type(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.theta) | set(iota(self.theta, self.dim))))

    def flag(self, i: int, theta=None) -> Flag:
        return Flag(self.bases[i], self.full_type if theta is None else theta)

    def flags(self, theta=None) -> list[Flag]:
        return [self.flag(i, theta) for i in range(len(self))]

    def lines(self) -> np.ndarray:
        """Unit vectors spanning the 1-dimensional members, shape (n, d)."""
        if 1 not in self.full_type:
            raise InvalidFlag("sample has no 1-dimensional members")
        return self.bases[:, :, 0]


def limit_set_sample(ball: Ball, theta, n_min: int = 2, n_max: int | None = None,
                     gap_tol: float = GAP_TOL) -> LimitSetSample:
    d = ball.dim
    theta = tuple(sorted(set(theta)))
    n_max = ball.radius if n_max is None else n_max
    if not 0 <= n_min <= n_max <= ball.radius:
        raise PreconditionViolation(f"annulus [{n_min}, {n_max}] not inside radius {ball.radius}")
    full = tuple(sorted(set(theta) | set(iota(theta, d))))
    s = ball.annulus(n_min, n_max)
    ent, inv = ball.entries[s], ball.inverses[s]
    idx = np.arange(s.start, s.stop)
    bases, ok = attracting_bases(ent, inv, full, gap_tol)
    # gaps outside theta do not matter for the attracting flag of type theta,
    # but the dual members need theirs too; both are in full
    if not ok.any():
        raise EmptySample(f"all {len(ok)} elements in the annulus have degenerate gaps")
    words = ball.words()
    return LimitSetSample(
        theta, bases[ok], [words[i] for i in idx[ok]], idx[ok], (n_min, n_max),
        int((~ok).sum()), ball,
    )


def _pair_margins(xs, ys, theta, d):
    """Smallest singular value of [x^k | y^{d-k}] minimized over k, for paired stacks."""
    out = np.full(xs.shape[0], np.inf)
    for k in theta:
        stacked = np.concatenate([xs[:, :, :k], ys[:, :, : d - k]], axis=2)
        out = np.minimum(out, np.linalg.svd(stacked, compute_uv=False)[:, -1])
    return out


def _pair_separation(xs, ys, k):
    """gr_distance between k-dimensional members, for paired stacks."""
    bx, by = xs[:, :, :k], ys[:, :, :k]
    resid = bx - by @ (np.conj(np.swapaxes(by, -1, -2)) @ bx)
    return np.linalg.norm(resid, ord=2, axis=(1, 2)) if k > 1 else np.linalg.norm(resid[:, :, 0], axis=1)


def transversality_audit(sample: LimitSetSample, sep_tol: float = SEP_TOL,
                         trans_tol: float = TRANS_TOL, max_pairs: int = 200_000,
                         seed: int = 0) -> dict:
    """Minimum transversality margin over pairs of distinct sample flags.

    Pairs whose theta-members lie within sep_tol are reported as
    near-coincident and left out. With more than max_pairs pairs a fixed
    pseudo-random subset is audited.
    """
    n = len(sample)
    if n < 2:
        raise InsufficientData("transversality audit needs at least two flags")
    d = sample.dim
    theta = sample.theta
    total = n * (n - 1) // 2
    if total <= max_pairs:
        i, j = np.triu_indices(n, 1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, max_pairs)
        j = rng.integers(0, n, max_pairs)
        keep = i != j
        i, j = i[keep], j[keep]
    margins = np.empty(len(i))
    sep = np.full(len(i), np.inf)
    chunk = 50_000
    for lo in range(0, len(i), chunk):
        sl = slice(lo, lo + chunk)
        xs, ys = sample.bases[i[sl]], sample.bases[j[sl]]
        margins[sl] = _pair_margins(xs, ys, theta, d)
        for k in theta:
            sep[sl] = np.minimum(sep[sl], _pair_separation(xs, ys, k))
    distinct = sep > sep_tol
    violations = distinct & (margins <= trans_tol)
    m = margins[distinct]
    fail = [
        (format_word(sample.words[a]), format_word(sample.words[b]), float(v))
        for a, b, v in zip(i[violations], j[violations], margins[violations])
    ]
    return {
        "pairs_examined": int(len(i)),
        "pairs_total": int(total),
        "near_coincident": int((~distinct).sum()),
        "min_margin": float(m.min()) if len(m) else float("nan"),
        "violations": fail[:100],
        "violation_count": int(violations.sum()),
        "pass": bool(len(m) and not violations.any()),
    }


def _null_dim(mat, rank_tol, band, what):
    """Dimension of the kernel of a matrix by a rank-revealing SVD."""
    n = mat.shape[1]
    if n == 0:
        return 0, np.zeros(0)
    s = np.linalg.svd(mat, compute_uv=False)
    s = np.concatenate([s, np.zeros(max(0, n - len(s)))])
    inside = (s >= band[0]) & (s <= band[1])
    if inside.any():
        raise RankAmbiguous(float(s[inside][0]), band)
    return int((s < rank_tol).sum()), s


def _complement(basis, d):
    if basis.shape[1] == 0:
        return np.eye(d, dtype=complex)
    u = np.linalg.svd(basis, full_matrices=True)[0]
    return u[:, basis.shape[1]:]


def subspace_intersection(a, b, rank_tol: float = RANK_TOL, band=RANK_BAND) -> np.ndarray:
    """Orthonormal basis of span(a) ∩ span(b) for orthonormal column bases."""
    d = a.shape[0]
    # v = a c lies in span(b) iff (I - P_b) a c = 0
    if b.shape[1] == d:
        return a
    if b.shape[1] == 0 or a.shape[1] == 0:
        return np.zeros((d, 0), dtype=complex)
    resid = a - b @ (b.conj().T @ a)
    _, s, vh = np.linalg.svd(resid)
    dim, _ = _null_dim(resid, rank_tol, band, "intersection")
    if dim == 0:
        return np.zeros((d, 0), dtype=complex)
    c = vh[-dim:].conj().T
    return np.linalg.qr(a @ c)[0]


def _span(*bases):
    cat = np.concatenate(bases, axis=1)
    if cat.shape[1] == 0:
        return cat
    u, s, _ = np.linalg.svd(cat, full_matrices=False)
    return u[:, : int((s > RANK_TOL).sum())]


def hyperconvex_check(x: Flag, y: Flag, z: Flag, k: int, rank_tol: float = RANK_TOL,
                      band=RANK_BAND, sep_tol: float = SEP_TOL,
                      trans_tol: float = TRANS_TOL) -> dict:
    """Triple condition ((x^k ∩ z^{d-k+1}) + z^{d-k-1}) ∩ (same for y) = z^{d-k-1}.

    Conventions: z^d is the whole space and z^0 = {0}.
    """
    d = x.dim
    need = theta_k(k, d)
    for name, f in (("x", x), ("y", y), ("z", z)):
        if f.dim != d:
            raise InvalidFlag("flags in different dimensions")
        if not set(need) <= set(f.theta):
            raise InvalidFlag(f"{name} has type {f.theta}, needs theta_{k} = {need}")
    for (n1, f1), (n2, f2) in ((("x", x), ("y", y)), (("x", x), ("z", z)), (("y", y), ("z", z))):
        dist = gr_distance(f1.subspace(k), f2.subspace(k))
        if dist <= sep_tol:
            raise PreconditionViolation(f"{n1} and {n2} are not distinct (distance {dist:.2e})")
    for name, f in (("x", x), ("y", y)):
        m = transversality_margin(Flag(f.basis, need), Flag(z.basis, need))
        if m <= trans_tol:
            raise NotTransverse(f"z is not transverse to {name} (margin {m:.2e})")

    def w(f):
        line = subspace_intersection(f.subspace(k), z.subspace(d - k + 1), rank_tol, band)
        return _span(line, z.subspace(d - k - 1)), line.shape[1]

    wx, lx = w(x)
    wy, ly = w(y)
    inter = subspace_intersection(wx, wy, rank_tol, band)
    dim = inter.shape[1]
    target = d - k - 1
    return {"pass": dim == target, "defect": dim - target, "dim": dim,
            "line_dims": (lx, ly)}


def hyperconvex_direct_k1(x: Flag, y: Flag, z: Flag, rank_tol: float = RANK_TOL,
                          band=RANK_BAND) -> bool:
    """x^1 + y^1 + z^{d-2} is the whole space."""
    d = x.dim
    cat = np.concatenate([x.subspace(1), y.subspace(1), z.subspace(d - 2)], axis=1)
    s = np.linalg.svd(cat, compute_uv=False)
    inside = (s >= band[0]) & (s <= band[1])
    if inside.any():
        raise RankAmbiguous(float(s[inside][0]), band)
    return bool((s > rank_tol).sum() == d)


def stratified_triples(sample: LimitSetSample, n: int, seed: int = 0,
                       prefix: int = 1) -> list[tuple[int, int, int]]:
    """Triples of sample indices whose provenance words have pairwise
    different prefixes of the given length (distinct strata of the
    limit set), drawn deterministically."""
    strata: dict[tuple[str, ...], list[int]] = {}
    for i, w in enumerate(sample.words):
        strata.setdefault(tuple(w[:prefix]), []).append(i)
    keys = sorted(strata)
    if len(keys) < 3:
        raise InsufficientData(f"only {len(keys)} strata at prefix length {prefix}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        ks = rng.choice(len(keys), 3, replace=False)
        out.append(tuple(int(rng.choice(strata[keys[c]])) for c in ks))
    return out


def probe_grid(d: int, theta, n: int, seed: int = 0, field: str = "C") -> list[Flag]:
    """Deterministic probe flags: images of the standard flag under Haar unitaries."""
    rng = np.random.default_rng(seed)
    return [Flag(random_unitary(d, field, rng).entries, theta) for _ in range(n)]


def _flag_distance(a: Flag, b: Flag) -> float:
    return max(gr_distance(a.subspace(k), b.subspace(k)) for k in a.theta)


def convergence_spotcheck(g_seq, theta, probes, exclusion_tol: float = 1e-6,
                          gap_tol: float = GAP_TOL) -> dict:
    """Check that g_n * probe approaches U_theta(g_n) for probes off the
    repelling locus of the sequence."""
    theta = tuple(sorted(set(theta)))
    if not g_seq:
        raise InsufficientData("empty sequence")
    last = g_seq[-1]
    a, inv = _raw(last)
    d = a.shape[0]
    x_plus = attracting_flag(last, theta, gap_tol)
    # repelling locus: probes not transverse to U_{iota theta}(g^-1)
    last_inv = last.inverse() if hasattr(last, "inverse") else np.linalg.inv(a)
    x_minus = attracting_flag(last_inv, iota(theta, d), gap_tol)
    included, excluded = [], []
    for i, p in enumerate(probes):
        m = transversality_margin(Flag(p.basis, theta), x_minus)
        (included if m > exclusion_tol else excluded).append(i)
    per_step = []
    for g in g_seq:
        target = attracting_flag(g, theta, gap_tol)
        dists = [_flag_distance(probes[i].transform(g), target) for i in included]
        per_step.append(max(dists) if dists else float("nan"))
    terminal = [_flag_distance(probes[i].transform(last), x_plus) for i in included]
    return {
        "probes": len(probes),
        "excluded": excluded,
        "max_terminal_distance": float(max(terminal)) if terminal else float("nan"),
        "per_step_max_distance": [float(v) for v in per_step],
        "grid_resolution": f"{len(probes)} Haar-random probe flags",
    }


def kendall_tau(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 2:
        return float("nan")
    sx = np.sign(x[None, :] - x[:, None])
    sy = np.sign(y[None, :] - y[:, None])
    iu = np.triu_indices(n, 1)
    return float((sx * sy)[iu].sum() * 2 / (n * (n - 1)))


def secant_convergence_check(x: Flag, pairs) -> dict:
    """gr_distance(z_n^1 + w_n^1, x^2) along a sequence of pairs of lines.

    Pairs with z_n = w_n, or repeating the previous pair, span no secant
    and are dropped.
    """
    d = x.dim
    vecs = []
    prev = None
    for z, w in pairs:
        zb = z.subspace(1) if isinstance(z, Flag) else np.asarray(z.basis if isinstance(z, GrassmannPoint) else z).reshape(d, 1)
        wb = w.subspace(1) if isinstance(w, Flag) else np.asarray(w.basis if isinstance(w, GrassmannPoint) else w).reshape(d, 1)
        if gr_distance(zb, wb) < 1e-12:
            continue
        if prev is not None and gr_distance(zb, prev[0]) < 1e-12 and gr_distance(wb, prev[1]) < 1e-12:
            continue
        prev = (zb, wb)
        vecs.append((zb, wb))
    if len(vecs) < 4:
        raise InsufficientData(f"only {len(vecs)} distinct secant pairs (need 4)")
    if d == 2:
        x2 = np.eye(2, dtype=complex)
    else:
        x2 = x.subspace(2)
    dists = []
    for zb, wb in vecs:
        plane = np.linalg.qr(np.concatenate([zb, wb], axis=1))[0]
        dists.append(0.0 if d == 2 else gr_distance(plane, x2))
    n = np.arange(len(dists))
    return {
        "distances": [float(v) for v in dists],
        "kendall_tau": kendall_tau(n, dists) if d > 2 else float("nan"),
        "terminal": float(dists[-1]),
    }
