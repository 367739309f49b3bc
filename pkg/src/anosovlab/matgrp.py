"""Projective matrices, Cartan/Jordan projections, roots and weights, and the
Iwasawa cocycle for PSL(d, R) and PSL(d, C).

A :class:`ProjectiveMatrix` carries its inverse alongside its entries.
Long products in a word ball have singular values spread over many orders
of magnitude, and the small ones cannot be read off a single SVD of the
product; they are recovered as reciprocals of the large singular values of
the (separately accumulated) inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import TYPE_CHECKING

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from anosovlab.errors import (
    InvalidFlag,
    InvalidFunctional,
    InvalidIndex,
    InvalidMatrix,
    NumericalFailure,
)

if TYPE_CHECKING:
    from anosovlab.flags import Flag

FIELDS = ("R", "C")
SIGMA_FLOOR = 1e-300
_SIGNIFICANT = 1e-8


def _as_dtype(field):
    return np.float64 if field == "R" else np.complex128


def _canonical_factor(entries, field):
    """Root of unity (or sign) that puts a unimodular matrix in canonical form."""
    d = entries.shape[-1]
    flat = entries.reshape(-1)
    mags = np.abs(flat)
    idx = int(np.argmax(mags > _SIGNIFICANT * mags.max()))
    lead = flat[idx]
    if field == "R":
        if d % 2 == 0 and lead.real < 0:
            return -1.0
        return 1.0
    step = 2 * math.pi / d
    arg = math.atan2(lead.imag, lead.real) % (2 * math.pi)
    m = math.floor(arg / step + 1e-12)
    if m >= d:
        m = 0
    return complex(np.exp(-1j * step * m))


def _canonical_factors(stack, field):
    """Vectorized :func:`_canonical_factor` over a stack of matrices."""
    n, d, _ = stack.shape
    flat = stack.reshape(n, -1)
    mags = np.abs(flat)
    idx = np.argmax(mags > _SIGNIFICANT * mags.max(axis=1, keepdims=True), axis=1)
    lead = flat[np.arange(n), idx]
    if field == "R":
        if d % 2 == 0:
            return np.where(lead.real < 0, -1.0, 1.0)
        return np.ones(n)
    step = 2 * math.pi / d
    arg = np.mod(np.angle(lead), 2 * math.pi)
    m = np.floor(arg / step + 1e-12)
    m[m >= d] = 0
    return np.exp(-1j * step * m)


def _inverse2(a):
    # the determinant is a unit scalar but may be -1 over R
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    return np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]], dtype=a.dtype) / det


@dataclass(frozen=True, eq=False)
class ProjectiveMatrix:
    """Unimodular representative of an element of PSL(d, field).

    Use :func:`normalize` to build one from raw data. ``inverse_entries``
    is carried along products so that small singular values stay accurate.
    """

    entries: np.ndarray
    field: str = "C"
    inverse_entries: np.ndarray | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        self.entries.setflags(write=False)
        if self.inverse_entries is None:
            if self.dim == 2:
                inv = _inverse2(self.entries)
            else:
                inv = np.linalg.inv(self.entries)
            object.__setattr__(self, "inverse_entries", inv)
        self.inverse_entries.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def inverse(self) -> ProjectiveMatrix:
        return ProjectiveMatrix(self.inverse_entries, self.field, self.entries)

    def __matmul__(self, other: ProjectiveMatrix) -> ProjectiveMatrix:
        field = "C" if "C" in (self.field, other.field) else "R"
        return _from_unimodular(
            self.entries @ other.entries, field, other.inverse_entries @ self.inverse_entries
        )

    def __pow__(self, n: int) -> ProjectiveMatrix:
        base = self if n >= 0 else self.inverse()
        result = identity(self.dim, self.field)
        for _ in range(abs(n)):
            result = result @ base
        return result

    def projective_distance(self, other: ProjectiveMatrix) -> float:
        return projective_distance(self.entries, other.entries, self.field)

    def projectively_equal(self, other: ProjectiveMatrix, tol: float = 1e-8) -> bool:
        scale = max(1.0, float(np.linalg.norm(self.entries)))
        return self.projective_distance(other) <= tol * scale

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def _from_unimodular(entries, field, inverse=None):
    c = _canonical_factor(entries, field)
    entries = np.array(entries * c, dtype=_as_dtype(field))
    if inverse is not None:
        inverse = np.array(inverse / c, dtype=_as_dtype(field))
    return ProjectiveMatrix(entries, field, inverse)


def identity(d: int, field: str = "C") -> ProjectiveMatrix:
    return ProjectiveMatrix(np.eye(d, dtype=_as_dtype(field)), field)


def normalize(raw, field: str | None = None) -> ProjectiveMatrix:
    """Scale a square invertible matrix to determinant of modulus one and
    pick the canonical projective representative.

    Over C the determinant is made exactly 1 and the first significant entry
    (row-major) gets argument in [0, 2*pi/d). Over R the sign is fixed by the
    determinant for odd d and by the first significant entry for even d.
    """
    a = np.asarray(raw)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise InvalidMatrix(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidMatrix("matrix has non-finite entries")
    if field is None:
        field = "C" if np.iscomplexobj(a) and np.any(a.imag != 0) else "R"
    if field not in FIELDS:
        raise InvalidMatrix(f"unknown field {field!r}")
    if field == "R":
        if np.iscomplexobj(a) and np.any(a.imag != 0):
            raise InvalidMatrix("complex entries for a real matrix")
        a = a.real.astype(np.float64)
    else:
        a = a.astype(np.complex128)
    d = a.shape[0]
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] == 0 or sv[-1] < 1e-15 * sv[0]:
        raise InvalidMatrix("matrix is singular")
    det = np.linalg.det(a)
    if field == "R":
        scale = abs(det) ** (-1.0 / d)
        if d % 2 == 1 and det < 0:
            scale = -scale
    else:
        scale = complex(det) ** (-1.0 / d)
    return _from_unimodular(a * scale, field)


def projective_distance(a, b, field: str = "C") -> float:
    """min over scalars z of modulus 1 that preserve unimodularity of ||a - z b||_F."""
    a = np.asarray(a)
    b = np.asarray(b)
    d = a.shape[-1]
    inner = np.vdot(b, a)
    if field == "R":
        roots = np.array([1.0, -1.0])
    else:
        roots = np.exp(2j * np.pi * np.arange(d) / d)
    best = roots[int(np.argmax(np.real(np.conj(roots) * inner)))]
    return float(np.linalg.norm(a - best * b))


def relative_projective_distance(a, b, field: str = "C") -> float:
    """:func:`projective_distance` divided by max(1, ||a||_F)."""
    return projective_distance(a, b, field) / max(1.0, float(np.linalg.norm(np.asarray(a))))


def _raw(g):
    if isinstance(g, ProjectiveMatrix):
        return g.entries, g.inverse_entries
    a = np.asarray(g)
    return a, None


def _block_partition(a) -> list[np.ndarray] | None:
    """Index sets of the diagonal blocks shared by a stack, or None if the
    common sparsity pattern is irreducible."""
    pattern = np.any(a != 0, axis=tuple(range(a.ndim - 2))) if a.ndim > 2 else a != 0
    n, labels = connected_components(csr_matrix(pattern | pattern.T), directed=False)
    if n == 1:
        return None
    return [np.nonzero(labels == c)[0] for c in range(n)]


def _svd(a):
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc


def _block_logs(a, inv):
    """Uncentered log singular values of one block: the upper half from the
    block, the lower half from the matching block of the inverse."""
    m = a.shape[-1]
    logs = np.log(np.maximum(_svd(a), SIGMA_FLOOR))
    if inv is not None and m > 1:
        h = m // 2
        logs[..., m - h:] = -np.log(np.maximum(_svd(inv)[..., :h], SIGMA_FLOOR))[..., ::-1]
    return logs


def log_singular_values(entries, inverse=None):
    """Cartan projection from raw stacks of unimodular matrices.

    ``entries`` has shape (..., d, d). When ``inverse`` is given the lower
    half of the spectrum is taken from it. A block-diagonal pattern common
    to the stack (as for direct sums) is split first, so each block keeps
    its own dynamic range.
    """
    a = np.asarray(entries)
    d = a.shape[-1]
    blocks = _block_partition(a) if d > 2 else None
    if blocks is not None:
        inv = None if inverse is None else np.asarray(inverse)
        parts = [
            _block_logs(a[..., b[:, None], b], None if inv is None else inv[..., b[:, None], b])
            for b in blocks
        ]
        logs = np.sort(np.concatenate(parts, axis=-1), axis=-1)[..., ::-1]
        return logs - logs.mean(axis=-1, keepdims=True)
    s = _svd(a)
    si = None if inverse is None else _svd(inverse)
    if d == 2:
        t = np.log(s[..., 0])
        if si is not None:
            # sigma_1(g) = sigma_1(g^-1) in SL(2); average the two computations
            t = 0.5 * (t + np.log(si[..., 0]))
        return np.stack([t, -t], axis=-1)
    logs = np.log(np.maximum(s, SIGMA_FLOOR))
    if si is not None:
        h = d // 2
        logs[..., d - h:] = -np.log(np.maximum(si[..., :h], SIGMA_FLOOR))[..., ::-1]
        if d % 2 == 1:
            mask = np.ones(d, dtype=bool)
            mask[h] = False
            logs[..., h] = -logs[..., mask].sum(axis=-1)
    logs = np.sort(logs, axis=-1)[..., ::-1]
    return logs - logs.mean(axis=-1, keepdims=True)


def singular_values(g) -> np.ndarray:
    """Singular values sigma_1 >= ... >= sigma_d of the unimodular lift."""
    return np.exp(cartan(g))


def cartan(g) -> np.ndarray:
    """Cartan projection kappa(g): sorted log singular values, summing to 0."""
    a, inv = _raw(g)
    return log_singular_values(a, inv)


def partial_cartan(g, theta) -> np.ndarray:
    """kappa_theta(g): kappa(g) averaged over the blocks cut out by theta.

    The result lies in a_theta (alpha_j = 0 for j not in theta) and has the
    same omega_k, k in theta, as kappa(g).
    """
    A = cartan(g)
    d = len(A)
    cuts = sorted(set(theta))
    if not cuts or cuts[0] < 1 or cuts[-1] > d - 1:
        raise InvalidIndex(f"theta={tuple(theta)} out of range for d={d}")
    out = np.empty_like(A)
    for lo, hi in zip([0] + cuts, cuts + [d]):
        out[lo:hi] = A[lo:hi].mean()
    return out


def jordan(g) -> np.ndarray:
    """Jordan projection nu(g): sorted log moduli of eigenvalues, summing to 0."""
    a, _ = _raw(g)
    try:
        ev = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    logs = np.sort(np.log(np.maximum(np.abs(ev), SIGMA_FLOOR)))[::-1]
    return logs - logs.mean()


@dataclass(frozen=True)
class RootFunctional:
    """A linear functional on the Cartan subspace.

    ``kind`` is ``"alpha"`` (simple root), ``"omega"`` (fundamental weight)
    or ``"custom"``; a custom functional is a combination of fundamental
    weights given as ``{k: c_k}``.
    """

    kind: str
    index: int = 0
    coefficients: tuple[tuple[int, float], ...] = ()

    def omega_coefficients(self, d: int) -> dict[int, float]:
        """Coefficients over the basis omega_1, ..., omega_{d-1}."""
        self._check(d)
        if self.kind == "omega":
            return {self.index: 1.0}
        if self.kind == "alpha":
            k = self.index
            out = {k: 2.0}
            for j in (k - 1, k + 1):
                if 1 <= j <= d - 1:
                    out[j] = -1.0
            return out
        return {k: c for k, c in self.coefficients if c != 0}

    def support(self, d: int) -> set[int]:
        return set(self.omega_coefficients(d))

    def _check(self, d):
        if self.kind in ("alpha", "omega"):
            if not 1 <= self.index <= d - 1:
                raise InvalidIndex(f"{self.kind}_{self.index} out of range for d={d}")
        elif self.kind == "custom":
            for k, _ in self.coefficients:
                if not 1 <= k <= d - 1:
                    raise InvalidIndex(f"omega_{k} out of range for d={d}")
        else:
            raise InvalidFunctional(f"unknown functional kind {self.kind!r}")

    def __call__(self, A) -> float | np.ndarray:
        return evaluate(self, A)

    def __str__(self):
        if self.kind == "custom":
            return "+".join(f"{c:g}*omega_{k}" for k, c in self.coefficients)
        return f"{self.kind}_{self.index}"


def alpha(k: int) -> RootFunctional:
    return RootFunctional("alpha", k)


def omega(k: int) -> RootFunctional:
    return RootFunctional("omega", k)


def custom(coefficients: dict[int, float]) -> RootFunctional:
    return RootFunctional("custom", 0, tuple(sorted(coefficients.items())))


def parse_functional(text: str) -> RootFunctional:
    """Parse ``alpha_2``, ``omega_1`` or ``alpha2``."""
    t = text.strip().lower().replace("_", "")
    for kind in ("alpha", "omega"):
        if t.startswith(kind) and t[len(kind):].isdigit():
            return RootFunctional(kind, int(t[len(kind):]))
    raise InvalidFunctional(f"cannot parse functional {text!r}")


def evaluate(phi: RootFunctional, A) -> float | np.ndarray:
    """Evaluate phi on a vector (or stack of vectors) in the Cartan subspace."""
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    phi._check(d)
    if phi.kind == "alpha":
        out = A[..., phi.index - 1] - A[..., phi.index]
    elif phi.kind == "omega":
        out = A[..., : phi.index].sum(axis=-1)
    else:
        partial = np.cumsum(A, axis=-1)
        out = sum(c * partial[..., k - 1] for k, c in phi.coefficients)
        if not phi.coefficients:
            out = np.zeros(A.shape[:-1])
    return float(out) if np.ndim(out) == 0 else out


def iwasawa_cocycle(g, x: Flag) -> np.ndarray:
    """B(g, x) for a complete flag x.

    With k unitary representing x, gk = m e^A n with n unipotent upper
    triangular; this is the QR factorization with positive diagonal, and A
    is the log of the diagonal of R. When g carries its inverse, the lower
    half of A is read from g^-* k = m e^-A n^-*, a QL factorization whose
    large diagonal entries (the small e^A_i) are computed first.
    """
    if not x.is_complete:
        raise InvalidFlag(f"Iwasawa cocycle needs a complete flag, got type {x.theta}")
    a, inv = _raw(g)
    k = x.complete_basis()
    d = k.shape[0]
    r = np.linalg.qr(a @ k, mode="r")
    logs = np.log(np.maximum(np.abs(np.diag(r)), SIGMA_FLOOR))
    if inv is not None and d > 2:
        # QL of M through QR of the doubly reversed matrix
        m = np.conj(inv.T) @ k
        r2 = np.linalg.qr(m[::-1, ::-1], mode="r")
        low = -np.log(np.maximum(np.abs(np.diag(r2)), SIGMA_FLOOR))[::-1]
        h = d // 2
        logs[d - h:] = low[d - h:]
        if d % 2 == 1:
            logs[h] = -(logs[:h].sum() + logs[d - h:].sum())
    return logs - logs.mean()


def partial_cocycle(theta, phi: RootFunctional, g, x: Flag) -> float:
    """phi(B_theta(g, x)) for phi in the span of omega_k, k in theta."""
    theta = tuple(sorted(set(theta)))
    d = x.dim
    if not phi.support(d) <= set(theta):
        raise InvalidFunctional(f"{phi} is not supported on theta={theta}")
    if not set(theta) <= set(x.theta):
        raise InvalidFlag(f"flag of type {x.theta} lacks components {theta}")
    a, _ = _raw(g)
    coeffs = phi.omega_coefficients(d)
    total = 0.0
    # omega_k(B(g, x)) depends only on x^k: log of the wedge-norm growth
    for k, c in coeffs.items():
        total += c * wedge_norm_growth(a, x.subspace(k))
    return total


def wedge_norm_growth(a, basis) -> float:
    """log ||g v_1 ^ ... ^ g v_k|| / ||v_1 ^ ... ^ v_k|| for the columns v_i of basis."""
    a = np.asarray(a)
    q = np.linalg.qr(basis)[0]
    r1 = np.linalg.qr(a @ q, mode="r")
    return float(np.sum(np.log(np.abs(np.diag(r1)))))


def random_special(d: int, field: str = "C", rng=None, scale: float = 1.0) -> ProjectiveMatrix:
    """Random unimodular matrix with Gaussian entries (before normalization)."""
    rng = np.random.default_rng(rng)
    a = rng.standard_normal((d, d)) * scale
    if field == "C":
        a = a + 1j * rng.standard_normal((d, d)) * scale
    a = a + np.eye(d)
    return normalize(a, field)


def random_unitary(d: int, field: str = "C", rng=None) -> ProjectiveMatrix:
    """Haar-distributed element of SU(d) (SO(d) over R)."""
    rng = np.random.default_rng(rng)
    z = rng.standard_normal((d, d))
    if field == "C":
        z = z + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    q = q * ph
    return normalize(q, field)
