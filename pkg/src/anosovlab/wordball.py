"""Word-metric balls in finitely generated matrix groups, with projective
deduplication, and the Anosov / divergence diagnostics built on them."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from anosovlab.errors import BudgetExceeded, DedupAmbiguous, InvalidInput, InvalidMatrix
from anosovlab.matgrp import (
    ProjectiveMatrix,
    _canonical_factors,
    alpha,
    evaluate,
    identity,
    log_singular_values,
)

DEFAULT_BUDGET = 5_000_000
MERGE_TOL = 1e-8
AMBIGUOUS_TOL = 1e-6
HASH_BIN = 2e-6
# stacks of this many matrices or more are split across threads
_CHUNK = 2048


def budget_from_env(default: int = DEFAULT_BUDGET) -> int:
    raw = os.environ.get("ANOSOVLAB_BUDGET")
    if not raw:
        return default
    try:
        value = int(float(raw))
    except ValueError:
        raise InvalidInput(f"ANOSOVLAB_BUDGET={raw!r} is not a number") from None
    if value < 1:
        raise InvalidInput("ANOSOVLAB_BUDGET must be positive")
    return value


def _inverse_name(name: str) -> str:
    if len(name) == 1 and name.islower():
        return name.upper()
    return name + "^-1"


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    """Named generators; the letter alphabet is each generator (sorted by
    name) followed by its inverse."""

    names: tuple[str, ...]
    matrices: tuple[ProjectiveMatrix, ...]

    def __post_init__(self):
        if len(self.names) != len(self.matrices) or not self.names:
            raise InvalidMatrix("need a nonempty list of named generators")
        if len(set(self.names)) != len(self.names):
            raise InvalidMatrix("generator names must be distinct")
        order = sorted(range(len(self.names)), key=lambda i: self.names[i])
        names = tuple(self.names[i] for i in order)
        mats = tuple(self.matrices[i] for i in order)
        d, fld = mats[0].dim, mats[0].field
        for n, m in zip(names, mats):
            if m.dim != d:
                raise InvalidMatrix(f"generator {n} has dimension {m.dim}, expected {d}")
            if m.projectively_equal(identity(d, m.field)):
                raise InvalidMatrix(f"generator {n} is projectively the identity")
        field_ = "C" if any(m.field == "C" for m in mats) else fld
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "_field", field_)

    @classmethod
    def from_dict(cls, gens: dict[str, ProjectiveMatrix]) -> GeneratorSet:
        return cls(tuple(gens), tuple(gens.values()))

    @property
    def dim(self) -> int:
        return self.matrices[0].dim

    @property
    def field(self) -> str:
        return self._field

    @property
    def letters(self) -> tuple[str, ...]:
        out = []
        for n in self.names:
            out += [n, _inverse_name(n)]
        return tuple(out)

    def letter_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacks (2m, d, d) of letter matrices and of their inverses."""
        dtype = np.complex128 if self.field == "C" else np.float64
        mats, invs = [], []
        for g in self.matrices:
            mats += [g.entries, g.inverse_entries]
            invs += [g.inverse_entries, g.entries]
        return np.array(mats, dtype=dtype), np.array(invs, dtype=dtype)

    def map(self, fn) -> GeneratorSet:
        """Apply a homomorphism given on generators."""
        return GeneratorSet(self.names, tuple(fn(g) for g in self.matrices))

    def word_matrix(self, word) -> ProjectiveMatrix:
        """Ordered product of letter matrices for a word given as letter names."""
        letters = self.letters
        lookup = {}
        for i, g in enumerate(self.matrices):
            lookup[letters[2 * i]] = g
            lookup[letters[2 * i + 1]] = g.inverse()
        out = identity(self.dim, self.field)
        for a in word:
            out = out @ lookup[a]
        return out


@dataclass(frozen=True, eq=False)
class OrbitElement:
    word: tuple[str, ...]
    length: int
    matrix: ProjectiveMatrix
    cartan: np.ndarray
    flags: object = None

    @property
    def word_str(self) -> str:
        return format_word(self.word)


def format_word(word) -> str:
    if all(len(a) == 1 for a in word):
        return "".join(word)
    return " ".join(word)


@dataclass(eq=False)
class Ball:
    """The ball of radius N, stored as stacked arrays in shortlex order."""

    gens: GeneratorSet
    radius: int
    entries: np.ndarray
    inverses: np.ndarray
    kappa: np.ndarray
    lengths: np.ndarray
    parent: np.ndarray
    last_letter: np.ndarray
    offsets: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.lengths)

    @property
    def dim(self) -> int:
        return self.gens.dim

    @property
    def field(self) -> str:
        return self.gens.field

    def word(self, i: int) -> tuple[str, ...]:
        letters = self.gens.letters
        out = []
        while i > 0:
            out.append(letters[self.last_letter[i]])
            i = self.parent[i]
        return tuple(reversed(out))

    def words(self) -> list[tuple[str, ...]]:
        letters = self.gens.letters
        out: list[tuple[str, ...]] = [()]
        for i in range(1, len(self)):
            out.append(out[self.parent[i]] + (letters[self.last_letter[i]],))
        return out

    def matrix(self, i: int) -> ProjectiveMatrix:
        return ProjectiveMatrix(self.entries[i].copy(), self.field, self.inverses[i].copy())

    def __getitem__(self, i: int) -> OrbitElement:
        return OrbitElement(self.word(i), int(self.lengths[i]), self.matrix(i), self.kappa[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def sphere(self, n: int) -> slice:
        return slice(int(self.offsets[n]), int(self.offsets[n + 1]))

    def annulus(self, n_min: int, n_max: int | None = None) -> slice:
        n_max = self.radius if n_max is None else n_max
        return slice(int(self.offsets[n_min]), int(self.offsets[n_max + 1]))

    def values(self, phi) -> np.ndarray:
        """phi(kappa(gamma)) for every element."""
        return evaluate(phi, self.kappa)

    def truncate(self, n: int) -> Ball:
        """Ball of smaller radius (an exact prefix)."""
        s = slice(0, int(self.offsets[n + 1]))
        return Ball(
            self.gens, n, self.entries[s], self.inverses[s], self.kappa[s],
            self.lengths[s], self.parent[s], self.last_letter[s], self.offsets[: n + 2],
        )

    def mapped(self, fn_raw) -> Ball:
        """Push the ball through a homomorphism given on raw matrix stacks.

        ``fn_raw`` maps a stack (n, d, d) to a stack (n, d', d') and must be
        multiplicative; words and order are kept.
        """
        ent = fn_raw(self.entries)
        inv = fn_raw(self.inverses)
        return Ball(
            self.gens.map(lambda g: ProjectiveMatrix(fn_raw(g.entries[None])[0], g.field,
                                                     fn_raw(g.inverse_entries[None])[0])),
            self.radius, ent, inv, log_singular_values(ent, inv), self.lengths,
            self.parent, self.last_letter, self.offsets,
        )


class _DedupTable:
    """Projectively invariant bucket hash over matrices.

    Keys are |<w_i, M>| / max(1, |M|) for two fixed random complex unit
    matrices w_i; these do not depend on the choice of unimodular lift, and
    two matrices at projective distance below the bin width land in
    neighbouring buckets. Candidates are confirmed by absolute projective
    Frobenius distance: long products of distinct elements can agree to
    many relative digits while differing by O(1) in absolute terms.
    """

    def __init__(self, d: int, field_: str):
        rng = np.random.default_rng(0x5EED)
        self.w = rng.standard_normal((2, d, d)) + 1j * rng.standard_normal((2, d, d))
        self.w /= np.linalg.norm(self.w, axis=(1, 2), keepdims=True)
        self.field = field_
        self.d = d
        self.buckets: dict[tuple[int, int], list[int]] = {}
        self.mats: list[np.ndarray] = []
        self.scales: list[float] = []
        self.labels: list[object] = []
        if field_ == "R":
            self.roots = np.array([1.0, -1.0])
        else:
            self.roots = np.exp(2j * np.pi * np.arange(d) / d)

    def keys(self, stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        norms = np.linalg.norm(stack, axis=(1, 2))
        q = np.abs(np.einsum("kij,nij->nk", self.w.conj(), stack)) / np.maximum(1.0, norms)[:, None]
        return np.floor(q / HASH_BIN).astype(np.int64), norms

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        inner = np.vdot(b, a)
        best = self.roots[int(np.argmax(np.real(np.conj(self.roots) * inner)))]
        return float(np.linalg.norm(a - best * b))

    def find(self, key, mat, scale, label) -> int | None:
        hit = None
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for idx in self.buckets.get((key[0] + di, key[1] + dj), ()):
                    dist = self.distance(mat, self.mats[idx])
                    if dist < MERGE_TOL:
                        hit = idx if hit is None else min(hit, idx)
                    elif dist < AMBIGUOUS_TOL:
                        raise DedupAmbiguous(self.labels[idx], label, dist)
        return hit

    def add(self, key, mat, scale, label) -> int:
        idx = len(self.mats)
        self.mats.append(mat)
        self.scales.append(scale)
        self.labels.append(label)
        self.buckets.setdefault((int(key[0]), int(key[1])), []).append(idx)
        return idx


def _products(left, right, threads: int):
    """left[i] @ right[i] for stacks, split over threads in fixed chunks."""
    n = left.shape[0]
    if threads <= 1 or n < 2 * _CHUNK:
        return np.matmul(left, right)
    out = np.empty(np.broadcast_shapes(left.shape, right.shape), dtype=np.result_type(left, right))

    def work(lo):
        hi = min(n, lo + _CHUNK)
        np.matmul(left[lo:hi], right[lo:hi], out=out[lo:hi])

    with ThreadPoolExecutor(max_workers=threads) as ex:
        list(ex.map(work, range(0, n, _CHUNK)))
    return out


def enumerate_ball(gens: GeneratorSet, radius: int, budget: int | None = None,
                   threads: int = 1) -> Ball:
    """All distinct projective elements of word length <= radius.

    Order is shortlex in the letter order of ``gens.letters``: each sphere
    lists (parent in order) x (letter in order), dropping products already
    seen. Output does not depend on ``threads``.
    """
    if radius < 0:
        raise InvalidInput(f"radius must be >= 0, got {radius}")
    budget = budget_from_env() if budget is None else budget
    d, fld = gens.dim, gens.field
    dtype = np.complex128 if fld == "C" else np.float64
    let, let_inv = gens.letter_matrices()
    nl = len(let)
    # letter 2i+1 is the inverse of letter 2i
    inv_letter = np.arange(nl) ^ 1

    ent = [np.eye(d, dtype=dtype)[None]]
    inv = [np.eye(d, dtype=dtype)[None]]
    parent = [np.array([-1])]
    last = [np.array([-1])]
    offsets = [0, 1]
    table = _DedupTable(d, fld)
    k0, n0 = table.keys(ent[0])
    table.add(k0[0], ent[0][0], n0[0], "")
    total = 1
    frontier = np.array([0])
    front_ent, front_inv, front_last = ent[0], inv[0], last[0]

    for n in range(1, radius + 1):
        m = len(frontier)
        if m == 0:
            offsets.append(total)
            continue
        pi = np.repeat(np.arange(m), nl)
        li = np.tile(np.arange(nl), m)
        keep = li != inv_letter[np.maximum(front_last[pi], 0)]
        if n == 1:
            keep[:] = True
        pi, li = pi[keep], li[keep]
        if total + len(pi) > budget:
            raise BudgetExceeded(
                f"sphere {n} would bring the ball to {total + len(pi)} elements "
                f"(budget {budget}; set ANOSOVLAB_BUDGET to raise it)"
            )
        cand = _products(front_ent[pi], let[li], threads)
        cand_inv = _products(let_inv[li], front_inv[pi], threads)
        c = _canonical_factors(cand, fld)
        cand = cand * c[:, None, None]
        cand_inv = cand_inv / c[:, None, None]
        keys, norms = table.keys(cand)
        accepted = []
        for j in range(len(pi)):
            label = (n, int(frontier[pi[j]]), int(li[j]))
            if table.find(keys[j], cand[j], norms[j], label) is None:
                table.add(keys[j], cand[j], norms[j], label)
                accepted.append(j)
        acc = np.array(accepted, dtype=np.intp)
        front_ent = cand[acc]
        front_inv = cand_inv[acc]
        front_last = li[acc]
        ent.append(front_ent)
        inv.append(front_inv)
        parent.append(frontier[pi[acc]])
        last.append(front_last)
        frontier = np.arange(total, total + len(acc))
        total += len(acc)
        offsets.append(total)

    entries = np.concatenate(ent)
    inverses = np.concatenate(inv)
    lengths = np.concatenate([np.full(offsets[i + 1] - offsets[i], i) for i in range(radius + 1)])
    return Ball(
        gens, radius, entries, inverses, log_singular_values(entries, inverses),
        lengths, np.concatenate(parent), np.concatenate(last), np.array(offsets),
    )


def sphere_minima(ball: Ball, k: int) -> np.ndarray:
    """min alpha_k(kappa(gamma)) over each sphere n = 1..N (nan for empty spheres)."""
    vals = ball.values(alpha(k))
    out = np.full(ball.radius, np.nan)
    for n in range(1, ball.radius + 1):
        s = ball.sphere(n)
        if s.stop > s.start:
            out[n - 1] = vals[s].min()
    return out


def _lower_hull(x, y):
    pts = []
    for p in zip(x, y):
        while len(pts) >= 2:
            (x1, y1), (x2, y2) = pts[-2], pts[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                pts.pop()
            else:
                break
        pts.append(p)
    return pts


NO_GROWTH_TOL = 1e-6


def anosov_diagnostic(ball: Ball, k: int) -> dict:
    """Linear lower bound alpha_k(kappa(gamma)) >= a|gamma| - C over the ball.

    a is the slope of the last edge of the lower convex envelope of the
    sphere minima over the outer half of the radii (the asymptotic
    growth rate at this radius), and C >= 0 the smallest constant making
    the bound hold on every sphere.
    """
    if ball.radius < 3:
        raise InvalidInput("anosov_diagnostic needs radius >= 3")
    mins = sphere_minima(ball, k)
    n = np.arange(1, ball.radius + 1, dtype=float)
    ok = ~np.isnan(mins)
    if ok.sum() < 2:
        raise InvalidInput("fewer than two nonempty spheres")
    n, mins = n[ok], mins[ok]
    tail = n >= ball.radius // 2
    hull = _lower_hull(n[tail], mins[tail])
    (x1, y1), (x2, y2) = hull[-2], hull[-1]
    a = (y2 - y1) / (x2 - x1)
    grows = a > NO_GROWTH_TOL
    a_used = a if grows else 0.0
    slack = a_used * n - mins
    C = max(0.0, float(slack.max()))
    if C < 1e-9 * max(1.0, float(np.abs(mins).max())):
        C = 0.0
    wit_n = int(n[int(np.argmax(slack))])
    vals = ball.values(alpha(k))
    s = ball.sphere(wit_n)
    wit = s.start + int(np.argmin(vals[s]))
    return {
        "k": k,
        "radius": ball.radius,
        "slope": float(a),
        "intercept": C,
        "linear_growth": bool(grows),
        "verdict": (f"consistent with P_{k}-Anosov at radius {ball.radius}" if grows
                    else "no linear growth at this radius"),
        "witness": {"word": format_word(ball.word(wit)), "length": wit_n,
                    "alpha": float(vals[wit])},
        "sphere_minima": [float(v) for v in mins],
    }


def _kendall_tau(x, y) -> float:
    n = len(x)
    if n < 2:
        return float("nan")
    s = 0
    for i in range(n):
        for j in range(i + 1, n):
            s += np.sign(x[j] - x[i]) * np.sign(y[j] - y[i])
    return float(2 * s / (n * (n - 1)))


def divergence_check(ball: Ball, theta) -> dict:
    """Per k in theta: sphere minima of alpha_k and whether they increase."""
    if ball.radius < 2 and len(ball) > 1:
        raise InvalidInput("divergence_check needs radius >= 2")
    report = {}
    if len(ball) <= 1:
        return report
    for k in sorted(set(theta)):
        mins = sphere_minima(ball, k)
        n = np.arange(1, ball.radius + 1)
        ok = ~np.isnan(mins)
        m = mins[ok]
        steps = np.diff(m)
        report[k] = {
            "sphere_minima": [float(v) for v in m],
            "strictly_increasing": bool(np.all(steps > 0)),
            "non_monotone_at": [int(v) for v in n[ok][1:][steps <= 0]],
            "kendall_tau": _kendall_tau(n[ok], m),
            "max_minimum": float(m.max()) if len(m) else float("nan"),
        }
    return report
