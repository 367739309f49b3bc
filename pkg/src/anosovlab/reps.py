"""Exterior powers, symmetric powers, tensor products and block sums of
projective matrices, materialized as explicit matrices."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from anosovlab.errors import InvalidIndex, InvalidMatrix
from anosovlab.matgrp import ProjectiveMatrix, _from_unimodular, normalize


@lru_cache(maxsize=None)
def _subset_index(d: int, k: int) -> np.ndarray:
    return np.array(list(combinations(range(d), k)), dtype=np.intp)


def wedge_matrix(a, k: int) -> np.ndarray:
    """Matrix of the k-th exterior power of a (or of a stack of matrices)
    in the lexicographic basis e_I, I = i_1 < ... < i_k."""
    a = np.asarray(a)
    d = a.shape[-1]
    if not 1 <= k <= d:
        raise InvalidIndex(f"exterior power k={k} out of range for d={d}")
    if k == 1:
        return a.copy()
    rows = _subset_index(d, k)
    # minors[..., I, J] = det a[I, J]
    sub = a[..., rows[:, None, :, None], rows[None, :, None, :]]
    return np.linalg.det(sub)


@lru_cache(maxsize=None)
def _sym_weights(n: int) -> np.ndarray:
    return np.sqrt(np.array([comb(n, j) for j in range(n + 1)], dtype=float))


def sym_matrix(m, d: int) -> np.ndarray:
    """Matrix of Sym^{d-1}(m) for a 2x2 matrix m, in the orthonormal basis
    f_j = sqrt(C(n, j)) e_1^{n-j} e_2^j with n = d - 1."""
    m = np.asarray(m)
    if m.shape != (2, 2):
        raise InvalidMatrix(f"symmetric power needs a 2x2 matrix, got shape {m.shape}")
    if d < 2:
        raise InvalidIndex(f"symmetric power target dimension {d} < 2")
    n = d - 1
    a, b, c, dd = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    # column j: coefficients of (a e1 + c e2)^{n-j} (b e1 + d e2)^j in e1^{n-i} e2^i
    dtype = np.result_type(m.dtype, float)
    out = np.zeros((d, d), dtype=dtype)
    col1 = np.array([a, c], dtype=dtype)
    col2 = np.array([b, dd], dtype=dtype)
    p1 = [np.ones(1, dtype=dtype)]
    p2 = [np.ones(1, dtype=dtype)]
    for _ in range(n):
        p1.append(np.convolve(p1[-1], col1))
        p2.append(np.convolve(p2[-1], col2))
    for j in range(d):
        out[:, j] = np.convolve(p1[n - j], p2[j])
    w = _sym_weights(n)
    return out * (w[None, :] / w[:, None])


@lru_cache(maxsize=None)
def _complement_map(d: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Position of I^c among the (d-k)-subsets and the sign (-1)^{sum I}."""
    subsets = _subset_index(d, k)
    lookup = {tuple(c): i for i, c in enumerate(_subset_index(d, d - k))}
    full = set(range(d))
    perm = np.array([lookup[tuple(sorted(full - set(I)))] for I in subsets], dtype=np.intp)
    sign = (-1.0) ** subsets.sum(axis=1)
    return perm, sign


def complementary_wedge(inv, k: int) -> np.ndarray:
    """wedge_matrix(a, k) for |det a| = 1 computed from inv = a^-1 through
    complementary minors: det a[I, J] = +-det(a) det inv[J^c, I^c].

    For k > d/2 this is the accurate route: the minors of a of size k
    involve cancellation over its whole spectrum, those of the inverse of
    size d - k do not.
    """
    inv = np.asarray(inv)
    d = inv.shape[-1]
    if k == d:
        return (1 / np.linalg.det(inv))[..., None, None]
    perm, sign = _complement_map(d, k)
    w = wedge_matrix(inv, d - k)
    w = np.swapaxes(w[..., perm[:, None], perm[None, :]], -1, -2)
    # det a = 1 / det inv is a unit scalar (a sign over R in even dimension)
    det = np.linalg.det(inv)
    unit = np.conj(det) / np.abs(det)
    return w * (sign[:, None] * sign[None, :]) * np.asarray(unit)[..., None, None]


def exterior_power(g: ProjectiveMatrix, k: int) -> ProjectiveMatrix:
    """eta_k(g) acting on the k-th exterior power, dimension C(d, k).

    Above the middle degree the matrix and its inverse come from
    complementary minors of the tracked inverse and of g respectively.
    """
    d = g.dim
    if not 1 <= k <= d - 1:
        raise InvalidIndex(f"exterior power k={k} out of range for d={d}")
    a, inv = g.entries, g.inverse_entries
    if 2 * k > d:
        return _from_unimodular(complementary_wedge(inv, k), g.field, complementary_wedge(a, k))
    return _from_unimodular(wedge_matrix(a, k), g.field, wedge_matrix(inv, k))


def sym_power(g: ProjectiveMatrix, d: int) -> ProjectiveMatrix:
    """tau_d(g) for g in SL(2), irreducible of dimension d."""
    if g.dim != 2:
        raise InvalidMatrix(f"symmetric power is defined on SL(2), got d={g.dim}")
    return _from_unimodular(sym_matrix(g.entries, d), g.field, sym_matrix(g.inverse_entries, d))


def tensor_rep(g1: ProjectiveMatrix, g2: ProjectiveMatrix) -> ProjectiveMatrix:
    field = "C" if "C" in (g1.field, g2.field) else "R"
    return _from_unimodular(
        np.kron(g1.entries, g2.entries), field, np.kron(g1.inverse_entries, g2.inverse_entries)
    )


def _block_diag(a, b):
    d1, d2 = a.shape[0], b.shape[0]
    out = np.zeros((d1 + d2, d1 + d2), dtype=np.result_type(a, b))
    out[:d1, :d1] = a
    out[d1:, d1:] = b
    return out


def direct_sum_rep(g1: ProjectiveMatrix, g2: ProjectiveMatrix) -> ProjectiveMatrix:
    """Block-diagonal sum, renormalized to determinant one."""
    field = "C" if "C" in (g1.field, g2.field) else "R"
    big = _block_diag(g1.entries, g2.entries)
    # both blocks are unimodular, so the sum already is; normalize() fixes
    # the canonical representative and rejects anything singular
    out = normalize(big, field)
    blocks = _block_diag(g1.inverse_entries, g2.inverse_entries)
    # same scale as out: out = c * big, so out^-1 = blocks / c
    c = np.vdot(big, out.entries) / np.vdot(big, big)
    return ProjectiveMatrix(out.entries, field, np.array(blocks / c, dtype=out.entries.dtype))


def rho_d(gamma: ProjectiveMatrix, rho_gamma: ProjectiveMatrix, d: int) -> ProjectiveMatrix:
    """rho(gamma) in the top-left block and tau_d(gamma) in the bottom-right."""
    return direct_sum_rep(rho_gamma, sym_power(gamma, d))


@dataclass(frozen=True)
class RepresentationSpec:
    """Description of a representation by its construction.

    ``kind`` is one of ``exterior``, ``sym``, ``tensor``, ``direct_sum``.
    For ``exterior`` the parameter is k, for ``sym`` the target dimension;
    ``tensor`` and ``direct_sum`` combine with a second representation of
    dimension ``param`` supplied per element when applying.
    """

    kind: str
    source_dim: int
    param: int

    @property
    def target_dim(self) -> int:
        if self.kind == "exterior":
            return comb(self.source_dim, self.param)
        if self.kind == "sym":
            return self.param
        if self.kind == "tensor":
            return self.source_dim * self.param
        if self.kind == "direct_sum":
            return self.source_dim + self.param
        raise InvalidIndex(f"unknown representation kind {self.kind!r}")

    def apply(self, g: ProjectiveMatrix, other: ProjectiveMatrix | None = None) -> ProjectiveMatrix:
        if g.dim != self.source_dim:
            raise InvalidMatrix(f"expected dimension {self.source_dim}, got {g.dim}")
        if self.kind == "exterior":
            return exterior_power(g, self.param)
        if self.kind == "sym":
            return sym_power(g, self.param)
        if other is None or other.dim != self.param:
            raise InvalidMatrix(f"{self.kind} needs a second factor of dimension {self.param}")
        if self.kind == "tensor":
            return tensor_rep(g, other)
        return direct_sum_rep(g, other)
