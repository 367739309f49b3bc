"""Grassmannians, partial flags, transversality, the chordal metric,
attracting flags and Plücker embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from anosovlab.errors import DegenerateGap, InvalidFlag
from anosovlab.matgrp import ProjectiveMatrix, _raw, log_singular_values

GAP_TOL = 1e-8
TRANS_TOL = 1e-8
ORTHO_TOL = 1e-10


def _orthonormalize(basis):
    q, r = np.linalg.qr(basis)
    return q


def _split_basis(head, tail_dual, d, m):
    """Nested orthonormal columns whose first h = head.shape[1] span head and
    whose members past h are orthogonal complements of leading columns of
    tail_dual (so member j is the complement of tail_dual[:, :d - j])."""
    h = head.shape[-1]
    full = np.concatenate([head, tail_dual[..., :, : d - h][..., ::-1]], axis=-1)
    return np.linalg.qr(full)[0][..., :, :m]


def _image_basis(a, inv, basis):
    """Orthonormal nested basis of g applied to the nested columns of basis.

    Members up to d/2 are direct images; larger ones are complements of
    g^-H applied to the complement, which keeps them accurate when
    sigma_1 / sigma_k is beyond 1 / eps.
    """
    d, m = basis.shape
    h = d // 2
    if inv is None or m <= h:
        return _orthonormalize(a @ basis)
    resid = np.eye(d, dtype=basis.dtype) - basis @ basis.conj().T
    k = _orthonormalize(np.concatenate([basis, np.linalg.svd(resid)[0][:, : d - m]], axis=1))
    head = _orthonormalize(a @ k[:, :h])
    dual = _orthonormalize(np.conj(inv.T) @ k[:, ::-1])
    return _split_basis(head, dual, d, m)


@dataclass(frozen=True, eq=False)
class GrassmannPoint:
    """A k-dimensional subspace of K^d, stored as an orthonormal d x k basis."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis)
        if b.ndim == 1:
            b = b[:, None]
        gram = b.conj().T @ b
        if not np.allclose(gram, np.eye(b.shape[1]), atol=ORTHO_TOL):
            b = _orthonormalize(b)
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def span(cls, vectors) -> GrassmannPoint:
        v = np.asarray(vectors)
        if v.ndim == 1:
            v = v[:, None]
        u, s, _ = np.linalg.svd(v, full_matrices=False)
        rank = int(np.sum(s > 1e-12 * s[0]))
        return cls(u[:, :rank])

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    def transform(self, g) -> GrassmannPoint:
        a, inv = _raw(g)
        return GrassmannPoint(_image_basis(a, inv, self.basis))

    def line(self) -> np.ndarray:
        """Unit spanning vector (k = 1 only)."""
        if self.k != 1:
            raise InvalidFlag("not a line")
        return self.basis[:, 0]


@dataclass(frozen=True, eq=False)
class Flag:
    """A partial flag of type theta in K^d.

    ``basis`` is a d x max(theta) matrix with orthonormal columns whose first
    k columns span the k-dimensional member, so nesting holds by construction.
    """

    basis: np.ndarray
    theta: tuple[int, ...]

    def __post_init__(self):
        theta = tuple(sorted(set(int(k) for k in self.theta)))
        b = np.asarray(self.basis)
        d = b.shape[0]
        if not theta or theta[0] < 1 or theta[-1] > d - 1:
            raise InvalidFlag(f"type {theta} invalid for d={d}")
        if b.shape[1] < theta[-1]:
            raise InvalidFlag(f"basis has {b.shape[1]} columns, need {theta[-1]}")
        b = b[:, : theta[-1]]
        gram = b.conj().T @ b
        if not np.allclose(gram, np.eye(b.shape[1]), atol=ORTHO_TOL):
            b = _orthonormalize(b)
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "theta", theta)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def is_complete(self) -> bool:
        return self.theta == tuple(range(1, self.dim))

    def subspace(self, k: int) -> np.ndarray:
        if k == 0:
            return self.basis[:, :0]
        if k == self.dim:
            return np.eye(self.dim, dtype=self.basis.dtype)
        if k not in self.theta:
            raise InvalidFlag(f"flag of type {self.theta} has no {k}-dimensional member")
        return self.basis[:, :k]

    def component(self, k: int) -> GrassmannPoint:
        return GrassmannPoint(self.subspace(k))

    def forget(self, theta) -> Flag:
        theta = tuple(sorted(set(theta)))
        if not set(theta) <= set(self.theta):
            raise InvalidFlag(f"cannot restrict type {self.theta} to {theta}")
        return Flag(self.basis[:, : theta[-1]], theta)

    def complete_basis(self) -> np.ndarray:
        """A unitary d x d matrix whose first k columns span x^k for k in theta."""
        b = self.basis
        d, m = b.shape
        if m == d:
            return b
        resid = np.eye(d, dtype=b.dtype) - b @ b.conj().T
        u, _, _ = np.linalg.svd(resid)
        full = np.concatenate([b, u[:, : d - m]], axis=1)
        return _orthonormalize(full)

    def complete(self) -> Flag:
        return Flag(self.complete_basis(), tuple(range(1, self.dim)))

    def transform(self, g) -> Flag:
        a, inv = _raw(g)
        return Flag(_image_basis(a, inv, self.basis), self.theta)

    @classmethod
    def from_subspaces(cls, subspaces: dict[int, np.ndarray], nest_tol: float = 1e-6) -> Flag:
        """Build a flag from bases of its members, checking that they nest."""
        ks = sorted(subspaces)
        d = np.asarray(subspaces[ks[0]]).shape[0]
        cols = np.zeros((d, 0), dtype=complex)
        for k in ks:
            s = _orthonormalize(np.asarray(subspaces[k], dtype=complex))
            if s.shape[1] != k:
                raise InvalidFlag(f"member {k} has {s.shape[1]} columns")
            if cols.shape[1]:
                outside = cols - s @ (s.conj().T @ cols)
                if np.linalg.norm(outside, 2) > nest_tol:
                    raise InvalidFlag(f"members are not nested at k={k}")
            rest = s - cols @ (cols.conj().T @ s)
            u, _, _ = np.linalg.svd(rest, full_matrices=False)
            cols = np.concatenate([cols, u[:, : k - cols.shape[1]]], axis=1)
            cols = _orthonormalize(cols)
        if all(np.isrealobj(subspaces[k]) or not np.any(np.imag(subspaces[k])) for k in ks):
            if not np.any(np.abs(cols.imag) > 1e-14):
                cols = cols.real
        return cls(cols, tuple(ks))

    @classmethod
    def standard(cls, d: int, theta=None, dtype=complex) -> Flag:
        theta = tuple(range(1, d)) if theta is None else tuple(theta)
        return cls(np.eye(d, dtype=dtype), theta)


def check_nesting(x: Flag) -> float:
    """Largest residual of x^{k_i} outside x^{k_j} over consecutive members."""
    worst = 0.0
    for a, b in zip(x.theta, x.theta[1:]):
        sa, sb = x.subspace(a), x.subspace(b)
        worst = max(worst, float(np.linalg.norm(sa - sb @ (sb.conj().T @ sa), 2)))
    return worst


def attracting_bases(entries, inverses, theta, gap_tol: float = GAP_TOL):
    """Batched U_theta for stacks of unimodular matrices.

    Returns (bases, ok): bases has shape (n, d, max(theta)) with nested
    orthonormal columns, ok flags elements whose alpha_k gaps all exceed
    gap_tol. Directions past d/2 come from the inverse stack, where they
    are leading singular vectors and hence well resolved.
    """
    a = np.asarray(entries)
    inv = None if inverses is None else np.asarray(inverses)
    d = a.shape[-1]
    theta = tuple(sorted(set(theta)))
    if not theta or theta[0] < 1 or theta[-1] > d - 1:
        raise InvalidFlag(f"type {theta} invalid for d={d}")
    kappa = log_singular_values(a, inv)
    ok = np.ones(a.shape[0], dtype=bool)
    for k in theta:
        ok &= (kappa[:, k - 1] - kappa[:, k]) > gap_tol
    u = np.linalg.svd(a)[0]
    m = theta[-1]
    h = d // 2
    if inv is None or m <= h:
        return u[:, :, :m], ok
    # g^{-H} = U S^{-1} V^H: its leading left singular vectors are the
    # trailing ones of g, resolved to working accuracy
    w = np.linalg.svd(np.conj(np.swapaxes(inv, -1, -2)))[0]
    return _split_basis(u[:, :, :h], w, d, m), ok


def attracting_flag(g, theta, gap_tol: float = GAP_TOL) -> Flag:
    """U_theta(g): x^k spanned by the first k left singular vectors of g.

    Members of dimension above d/2 are computed as orthogonal complements of
    the leading left singular vectors of g^{-H}, which resolves them to
    working accuracy even when the small singular values of g are tiny.
    """
    a, inv = _raw(g)
    d = a.shape[0]
    theta = tuple(sorted(set(theta)))
    if not theta or theta[0] < 1 or theta[-1] > d - 1:
        raise InvalidFlag(f"type {theta} invalid for d={d}")
    kappa = log_singular_values(a, inv)
    for k in theta:
        gap = kappa[k - 1] - kappa[k]
        if gap <= gap_tol:
            raise DegenerateGap(k, float(gap), gap_tol)
    bases, _ = attracting_bases(a[None], None if inv is None else np.asarray(inv)[None], theta, -np.inf)
    return Flag(bases[0], theta)


def repelling_flag(g, theta, gap_tol: float = GAP_TOL) -> Flag:
    """U_{iota(theta)}(g^{-1})."""
    d = g.dim if isinstance(g, ProjectiveMatrix) else np.asarray(g).shape[0]
    if isinstance(g, ProjectiveMatrix):
        ginv = g.inverse()
    else:
        ginv = np.linalg.inv(np.asarray(g))
    return attracting_flag(ginv, [d - k for k in theta], gap_tol)


def iota(theta, d: int) -> tuple[int, ...]:
    return tuple(sorted(d - k for k in theta))


def theta_k(k: int, d: int) -> tuple[int, ...]:
    """{k-1, k, k+1, d-k-1, d-k, d-k+1} intersected with {1, ..., d-1}."""
    cand = {k - 1, k, k + 1, d - k - 1, d - k, d - k + 1}
    return tuple(sorted(j for j in cand if 1 <= j <= d - 1))


def transversality_margin(x: Flag, y: Flag) -> float:
    """min over k in theta(x) of the smallest singular value of [x^k | y^{d-k}]."""
    d = x.dim
    if y.dim != d:
        raise InvalidFlag("flags live in different dimensions")
    need = iota(x.theta, d)
    if not set(need) <= set(y.theta):
        raise InvalidFlag(f"type {y.theta} is not compatible with {x.theta}")
    margin = np.inf
    for k in x.theta:
        stacked = np.concatenate([x.subspace(k), y.subspace(d - k)], axis=1)
        margin = min(margin, float(np.linalg.svd(stacked, compute_uv=False)[-1]))
    return margin


def transverse(x: Flag, y: Flag, trans_tol: float = TRANS_TOL) -> bool:
    return transversality_margin(x, y) > trans_tol


def gr_distance(x, y) -> float:
    """Chordal distance ||P_x - P_y||_2 between two points of Gr_k(K^d).

    Plain arrays are read as spanning sets and orthonormalized if needed.
    """
    bx = x.basis if isinstance(x, GrassmannPoint) else np.asarray(x)
    by = y.basis if isinstance(y, GrassmannPoint) else np.asarray(y)
    if bx.ndim == 1:
        bx = bx[:, None]
    if by.ndim == 1:
        by = by[:, None]
    if bx.shape != by.shape:
        raise InvalidFlag(f"shape mismatch {bx.shape} vs {by.shape}")
    eye = np.eye(bx.shape[1])
    if not np.allclose(bx.conj().T @ bx, eye, atol=ORTHO_TOL):
        bx = _orthonormalize(bx)
    if not np.allclose(by.conj().T @ by, eye, atol=ORTHO_TOL):
        by = _orthonormalize(by)
    # for equal dimensions ||P_x - P_y|| = ||(I - P_y) P_x|| = ||(I - P_x) P_y||;
    # taking the larger of the two makes the result exactly symmetric
    r1 = np.linalg.norm(bx - by @ (by.conj().T @ bx), 2)
    r2 = np.linalg.norm(by - bx @ (bx.conj().T @ by), 2)
    return float(max(r1, r2))


def line_distances(u, v) -> np.ndarray:
    """Chordal distances between rows of u and rows of v (unit vectors), paired or broadcast."""
    u = np.asarray(u)
    v = np.asarray(v)
    proj = np.sum(v.conj() * u, axis=-1)
    resid = u - proj[..., None] * v
    return np.linalg.norm(resid, axis=-1)


def lex_subsets(d: int, k: int) -> list[tuple[int, ...]]:
    return list(combinations(range(d), k))


def plucker_vector(basis) -> np.ndarray:
    """k x k minors of a d x k basis in lexicographic order of row subsets."""
    b = np.asarray(basis)
    d, k = b.shape
    rows = np.array(lex_subsets(d, k))
    return np.linalg.det(b[rows, :])


def plucker(x: GrassmannPoint) -> GrassmannPoint:
    """E_k: the line spanned by v_1 ^ ... ^ v_k in ∧^k K^d."""
    if not 1 <= x.k <= x.dim - 1:
        raise InvalidFlag(f"k={x.k} out of range for d={x.dim}")
    v = plucker_vector(x.basis)
    return GrassmannPoint(v / np.linalg.norm(v))


def theta_bar_1(dbar: int) -> tuple[int, ...]:
    return tuple(sorted(j for j in {1, 2, dbar - 2, dbar - 1} if 1 <= j <= dbar - 1))


def flag_plucker(x: Flag, k: int) -> Flag:
    """E_{theta_k}: a flag of type theta_k in K^d to a flag of type
    {1, 2, dbar-2, dbar-1} in ∧^k K^d.

    Any completion of x works; the members of the image depend only on the
    theta_k members of x.
    """
    d = x.dim
    need = theta_k(k, d)
    if not set(need) <= set(x.theta):
        raise InvalidFlag(f"flag of type {x.theta} lacks theta_{k} = {need}")
    from anosovlab.reps import wedge_matrix

    full = Flag(x.basis, need).complete_basis()
    big = wedge_matrix(full, k)
    dbar = comb(d, k)
    return Flag(big, theta_bar_1(dbar))


def veronese_flag(v, d: int, theta=None) -> Flag:
    """Osculating flag of the rational normal curve at [v^{⊙(d-1)}].

    This is the image of the standard flag under tau_d(m) for m in SU(2)
    with m e_1 proportional to v, hence the attracting flag of tau_d of any
    loxodromic element of PSL(2, C) with attracting fixed point [v].
    """
    from anosovlab.reps import sym_matrix

    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    m = np.array([[v[0], -np.conj(v[1])], [v[1], np.conj(v[0])]])
    big = sym_matrix(m, d)
    theta = tuple(range(1, d)) if theta is None else theta
    return Flag(big, theta)


def cp1_point(z) -> np.ndarray:
    """Unit vector for the point z of the affine chart [1 : z]; z = inf gives [0 : 1]."""
    if z == np.inf:
        return np.array([0.0, 1.0], dtype=complex)
    v = np.array([1.0, z], dtype=complex)
    return v / np.linalg.norm(v)


def bloch(v) -> np.ndarray:
    """Point of the unit 2-sphere for lines in C^2 (rows of v); chordal = |b - b'|/2."""
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    a, b = v[..., 0], v[..., 1]
    x = 2 * np.real(np.conj(a) * b)
    y = 2 * np.imag(np.conj(a) * b)
    z = np.abs(a) ** 2 - np.abs(b) ** 2
    return np.stack([x, y, z], axis=-1)


def from_bloch(p) -> np.ndarray:
    """Inverse of :func:`bloch` (rows of unit 3-vectors to unit vectors of C^2)."""
    p = np.asarray(p, dtype=float)
    p = p / np.linalg.norm(p, axis=-1, keepdims=True)
    theta = np.arccos(np.clip(p[..., 2], -1, 1))
    phi = np.arctan2(p[..., 1], p[..., 0])
    return np.stack([np.cos(theta / 2) + 0j, np.exp(1j * phi) * np.sin(theta / 2)], axis=-1)


def projector_embedding(v) -> np.ndarray:
    """Real coordinates of v v^H / sqrt(2) for rows of v (unit vectors).

    Euclidean distance between embedded lines equals their chordal distance.
    """
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    p = v[..., :, None] * v[..., None, :].conj()
    flat = p.reshape(p.shape[:-2] + (-1,))
    return np.concatenate([flat.real, flat.imag], axis=-1) / np.sqrt(2)
