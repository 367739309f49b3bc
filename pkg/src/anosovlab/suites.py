"""Invariant suites run by ``anosovlab verify`` and by the acceptance tests.

Each check returns a row {check, worst, tol, pass}; ``worst`` is the
largest residual seen over the instances.
"""

from __future__ import annotations

import numpy as np

from anosovlab.errors import InvalidMatrix
from anosovlab.flags import Flag, flag_plucker, plucker_vector, theta_k
from anosovlab.matgrp import (
    ProjectiveMatrix,
    alpha,
    cartan,
    iwasawa_cocycle,
    jordan,
    normalize,
    random_unitary,
    projective_distance,
    relative_projective_distance,
)
from anosovlab.reps import exterior_power, sym_power, wedge_matrix

ROOT_TOL = 1e-9
SYM_TOL = 1e-8
COCYCLE_TOL = 1e-9
JORDAN_TOL = 1e-4

SUITES = ("roots", "cocycle", "wedge", "sym")


def _row(check: str, residuals, tol: float) -> dict:
    worst = float(np.max(residuals)) if len(residuals) else 0.0
    return {"check": check, "worst": worst, "tol": tol, "pass": bool(worst < tol),
            "instances": len(residuals)}


def _inverse_letter(gens, letter: str) -> str:
    i = gens.letters.index(letter)
    return gens.letters[i ^ 1]


def sample_elements(gens, n_words: int = 20, max_len: int = 6, seed: int = 0,
                    max_log_cond: float | None = None) -> list[ProjectiveMatrix]:
    """The generators, their inverses and random freely reduced words.

    A word stops growing before log(sigma_1 / sigma_d) exceeds
    max_log_cond (default: 6 or the largest value over the generators,
    whichever is bigger); past that double precision no longer resolves
    the middle singular values of the derived representations.
    """
    rng = np.random.default_rng(seed)
    mats = []
    for g in gens.matrices:
        mats += [g, g.inverse()]
    if max_log_cond is None:
        max_log_cond = max([6.0] + [float(cartan(g)[0] - cartan(g)[-1]) for g in gens.matrices])
    letters = gens.letters
    for _ in range(n_words):
        n = int(rng.integers(1, max_len + 1))
        word: list[str] = []
        while len(word) < n:
            c = letters[int(rng.integers(0, len(letters)))]
            if word and c == _inverse_letter(gens, word[-1]):
                continue
            A = cartan(gens.word_matrix(word + [c]))
            if word and A[0] - A[-1] > max_log_cond:
                break
            word.append(c)
        mats.append(gens.word_matrix(word))
    return mats


def _pdist(a: ProjectiveMatrix, b: ProjectiveMatrix, c: ProjectiveMatrix | None = None) -> float:
    """Projective distance of a and b relative to max(1, |a|), or to
    |b||c| when b = b' c' is a product of factors with norms |b|, |c|."""
    if c is None:
        return relative_projective_distance(a.entries, b.entries, a.field)
    return float(projective_distance(a.entries, (b @ c).entries, a.field)
                 / max(1.0, np.linalg.norm(b.entries) * np.linalg.norm(c.entries)))


def _pairs(mats):
    """(g, h) pairs for the product checks, h the next element whose
    product with g is not the identity (g g^-1 only measures rounding)."""
    n = len(mats)
    out = []
    for i, g in enumerate(mats):
        for step in range(1, n):
            h = mats[(i + step) % n]
            if not _is_identity(g @ h):
                out.append((g, h))
                break
    return out


def _is_identity(g: ProjectiveMatrix) -> bool:
    return relative_projective_distance(g.entries, np.eye(g.dim), g.field) < 1e-6


def _scale(A) -> float:
    return max(1.0, float(np.max(np.abs(A))))


def second_root(A, k: int) -> float:
    """alpha_2 of kappa(eta_k(g)) predicted from A = kappa(g), 2 <= k <= d - 1.

    The third singular value of the exterior power is the larger of
    s_1..s_{k-2} s_k s_{k+1} and s_1..s_{k-1} s_{k+2}, so the gap to the
    second is the smaller of alpha_{k-1} and alpha_{k+1}.
    """
    d = len(A)
    if d == k + 1:
        return float(alpha(k - 1)(A))
    return float(min(alpha(k - 1)(A), alpha(k + 1)(A)))


def second_root_max(A, k: int) -> float:
    """The variant with max in place of min (treated as a conflict; see notes)."""
    d = len(A)
    if d == k + 1:
        return float(alpha(k - 1)(A))
    return float(max(alpha(k - 1)(A), alpha(k + 1)(A)))


def roots_suite(mats, scaled: bool = False) -> list[dict]:
    first, second = [], []
    for g in mats:
        d = g.dim
        A = cartan(g)
        sc = _scale(A) if scaled else 1.0
        for k in range(1, d):
            B = cartan(exterior_power(g, k))
            first.append(abs(alpha(1)(B) - alpha(k)(A)) / sc)
            if 2 <= k <= d - 1 and len(B) >= 3:
                second.append(abs(alpha(2)(B) - second_root(A, k)) / sc)
    return [_row("alpha_1(kappa(eta_k g)) = alpha_k(kappa(g))", first, ROOT_TOL),
            _row("alpha_2(kappa(eta_k g)) second-root rule", second, ROOT_TOL)]


def sym_suite(mats, degrees=range(2, 7), scaled: bool = False) -> list[dict]:
    res, mult = [], []
    for g in mats:
        if g.dim != 2:
            raise InvalidMatrix("the sym suite needs 2x2 input")
        a1 = alpha(1)(cartan(g))
        sc = _scale([a1]) if scaled else 1.0
        for d in degrees:
            A = cartan(sym_power(g, d))
            res.extend(abs(alpha(i)(A) - a1) / sc for i in range(1, d))
    for g, h in _pairs(mats):
        for d in degrees:
            mult.append(_pdist(sym_power(g @ h, d), sym_power(g, d), sym_power(h, d)))
    return [_row("alpha_i(kappa(tau_d g)) = alpha_1(kappa(g))", res, SYM_TOL),
            _row("tau_d(gh) = tau_d(g) tau_d(h)", mult, ROOT_TOL)]


def _random_complete_flag(d: int, field: str, rng) -> Flag:
    return Flag(random_unitary(d, field, rng).entries, tuple(range(1, d)))


def cocycle_suite(mats, n_flags: int = 5, seed: int = 0, scaled: bool = False) -> list[dict]:
    """Additivity of the Iwasawa cocycle, its wedge-norm description and the
    exterior-power compatibility alpha_1(B(eta_k g, E x)) = alpha_k(B(g, x))."""
    rng = np.random.default_rng(seed)
    add, weight, ext = [], [], []
    for g, h in _pairs(mats):
        d = g.dim
        for _ in range(n_flags):
            x = _random_complete_flag(d, g.field, rng)
            hx = x.transform(h)
            Bg, Bh = iwasawa_cocycle(g, hx), iwasawa_cocycle(h, x)
            sc = _scale(np.concatenate([Bg, Bh])) if scaled else 1.0
            add.append(np.max(np.abs(iwasawa_cocycle(g @ h, x) - Bg - Bh)) / sc)
            B = iwasawa_cocycle(g, x)
            for k in range(1, d):
                # norm of g applied to the decomposable k-vector of x^k,
                # computed in the exterior power
                p = plucker_vector(x.subspace(k))
                growth = np.log(np.linalg.norm(exterior_power(g, k).entries @ p) / np.linalg.norm(p))
                weight.append(abs(np.sum(B[:k]) - growth) / sc)
                if d >= 3:
                    ex = flag_plucker(Flag(x.basis, theta_k(k, d)), k)
                    ex = Flag(ex.complete_basis(), tuple(range(1, ex.dim)))
                    Be = iwasawa_cocycle(exterior_power(g, k), ex)
                    ext.append(abs(alpha(1)(Be) - alpha(k)(B)) / sc)
    rows = [_row("B(gh, x) = B(g, hx) + B(h, x)", add, COCYCLE_TOL),
            _row("omega_k(B(g, x)) = log |g x^k| / |x^k|", weight, COCYCLE_TOL)]
    if ext:
        rows.append(_row("alpha_1(B(eta_k g, E x)) = alpha_k(B(g, x))", ext, COCYCLE_TOL))
    return rows


def wedge_suite(mats, scaled: bool = False) -> list[dict]:
    mult, inv, roots = [], [], []
    for g, h in _pairs(mats):
        d = g.dim
        for k in range(1, d):
            eg, eh = exterior_power(g, k), exterior_power(h, k)
            mult.append(_pdist(exterior_power(g @ h, k), eg, eh))
            inv.append(_pdist(exterior_power(g.inverse(), k), eg.inverse()))
            A = cartan(g)
            roots.append(abs(alpha(1)(cartan(eg)) - alpha(k)(A)) / (_scale(A) if scaled else 1.0))
    return [_row("eta_k(gh) = eta_k(g) eta_k(h)", mult, ROOT_TOL),
            _row("eta_k(g^-1) = eta_k(g)^-1", inv, ROOT_TOL),
            _row("alpha_1(kappa(eta_k g)) = alpha_k(kappa(g))", roots, ROOT_TOL)]


def run_suite(name: str, mats, seed: int = 0, scaled: bool = False) -> list[dict]:
    """``scaled`` divides spectral residuals by max(1, |kappa|), the natural
    unit for elements with large singular-value spread."""
    if name == "roots":
        return roots_suite(mats, scaled)
    if name == "sym":
        return sym_suite(mats, scaled=scaled)
    if name == "cocycle":
        return cocycle_suite(mats, seed=seed, scaled=scaled)
    if name == "wedge":
        return wedge_suite(mats, scaled)
    raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")


def cartan_of_power(g: ProjectiveMatrix, n: int) -> np.ndarray:
    """kappa(g^n) for n a power of two, without forming g^n.

    omega_k(kappa(g^n)) is log |eta_k(g)^n| (operator norm), obtained by
    repeated squaring of eta_k(g) with the norm divided out and its log
    accumulated at every step; kappa follows by differencing. Nothing
    overflows or underflows, whatever the size of n kappa(g).
    """
    if n < 1 or n & (n - 1):
        raise ValueError("n must be a power of two")
    d = g.dim
    omegas = [0.0]
    for k in range(1, d):
        m = wedge_matrix(g.entries, k)
        log_scale = 0.0
        for _ in range(int(np.log2(n))):
            m = m @ m
            s = np.linalg.norm(m, 2)
            m = m / s
            log_scale = 2 * log_scale + np.log(s)
        # the steps above track log |m^(2^j)| as 2 * previous + log of the new norm
        omegas.append(float(np.log(np.linalg.norm(m, 2)) + log_scale) if n > 1
                      else float(np.log(np.linalg.norm(m, 2))))
    omegas.append(0.0)
    return np.diff(omegas)


def random_hyperbolic(d: int, field: str, rng, min_gap: float = 0.2,
                      spread: float = 1.0, perturb: float = 0.05) -> ProjectiveMatrix:
    """g = V e^D V^-1 with separated random log-moduli in D, random phases
    (signs over R), and V a Haar unitary times I + perturb * Gaussian.

    kappa(g^n) - n nu(g) stays within about 2 log cond(V) of zero, so a
    nearly unitary V is what makes the 1/n limit visible at moderate n.
    """
    while True:
        logs = np.sort(rng.uniform(-spread, spread, d))[::-1]
        logs -= logs.mean()
        if np.min(-np.diff(logs)) >= min_gap:
            break
    if field == "C":
        ph = np.exp(1j * rng.uniform(0, 2 * np.pi, d))
        e = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    else:
        ph = rng.choice([-1.0, 1.0], d)
        ph[-1] = np.prod(ph[:-1])
        e = rng.standard_normal((d, d))
    v = random_unitary(d, field, rng).entries @ (np.eye(d) + perturb * e)
    g = v @ np.diag(np.exp(logs) * ph) @ np.linalg.inv(v)
    return normalize(g, field)


def jordan_limit_residual(g: ProjectiveMatrix, n: int = 4096) -> float:
    return float(np.max(np.abs(jordan(g) - cartan_of_power(g, n) / n)))
