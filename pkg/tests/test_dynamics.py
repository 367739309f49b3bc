import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anosovlab.dynamics import (
    convergence_spotcheck,
    hyperconvex_check,
    hyperconvex_direct_k1,
    limit_set_sample,
    probe_grid,
    secant_convergence_check,
    stratified_triples,
    subspace_intersection,
    transversality_audit,
)
from anosovlab.errors import InsufficientData, NotTransverse, PreconditionViolation, RankAmbiguous
from anosovlab.flags import Flag, bloch, gr_distance, plucker_vector, theta_k, veronese_flag
from anosovlab.groups import cyclic_hyperbolic, sym_image
from anosovlab.matgrp import normalize
from anosovlab.reps import exterior_power
from anosovlab.suites import random_hyperbolic
from anosovlab.wordball import enumerate_ball
from strategies import seeds


def veronese(t, d=3, theta=None):
    return veronese_flag(np.array([1.0, t], dtype=complex), d, theta)


# ------------------------------------------------------------ limit sets


def test_cyclic_limit_set_is_two_points():
    ball = enumerate_ball(cyclic_hyperbolic(3.0), 4)
    s = limit_set_sample(ball, (1,), n_min=1)
    lines = s.lines()
    e1, e2 = np.eye(2)[:, :1], np.eye(2)[:, 1:]
    for v in lines:
        assert min(gr_distance(v[:, None], e1), gr_distance(v[:, None], e2)) < 1e-12
    audit = transversality_audit(s)
    assert audit["min_margin"] == pytest.approx(1.0)


def test_sym_cyclic_limit_set_is_veronese():
    ball = enumerate_ball(sym_image(cyclic_hyperbolic(3.0), 3), 3)
    s = limit_set_sample(ball, (1,), n_min=1)
    targets = [veronese_flag(np.eye(2)[0], 3), veronese_flag(np.eye(2)[1], 3)]
    for i in range(len(s)):
        assert min(gr_distance(s.flag(i).subspace(1), t.subspace(1)) for t in targets) < 1e-12


def test_schottky_limit_set_in_four_disks(schottky10):
    ball = enumerate_ball(schottky10, 6)
    s = limit_set_sample(ball, (1,), n_min=3)
    # the four clusters are labelled by the first letter of the word
    b = bloch(s.lines())
    groups = {}
    for w, p in zip(s.words, b):
        groups.setdefault(w[0], []).append(p)
    centers = {k: np.mean(v, axis=0) for k, v in groups.items()}
    radii = {k: np.max(np.linalg.norm(np.array(v) - centers[k], axis=1)) for k, v in groups.items()}
    keys = sorted(groups)
    assert len(keys) == 4
    for i, a in enumerate(keys):
        for c in keys[i + 1:]:
            assert np.linalg.norm(centers[a] - centers[c]) > radii[a] + radii[c]


def test_schottky_audit_and_duplicates(schottky3):
    ball = enumerate_ball(schottky3, 6)
    s = limit_set_sample(ball, (1,), n_min=3)
    audit = transversality_audit(s)
    assert audit["pass"] and audit["min_margin"] > 0
    # duplicate one flag: the copy must be reported as near-coincident, not as a violation
    s.bases = np.concatenate([s.bases, s.bases[:1]])
    s.words = s.words + [s.words[0]]
    audit2 = transversality_audit(s)
    assert audit2["near_coincident"] >= 1 and audit2["pass"]


# ------------------------------------------------------------ hyperconvexity


def test_hyperconvex_veronese_k1():
    x, y, z = veronese(0.0), veronese(1.0), veronese(2.0)
    assert hyperconvex_check(x, y, z, 1)["pass"]
    assert hyperconvex_direct_k1(x, y, z)


def test_hyperconvex_fails_for_collinear_lines():
    # three lines in a common plane break x^1 + y^1 + z^1 = C^3
    def ex(*v):
        return np.array(v, dtype=complex)[:, None]

    x = Flag.from_subspaces({1: ex(1, 0, 0), 2: np.eye(3)[:, [0, 2]]})
    y = Flag.from_subspaces({1: ex(0, 1, 0), 2: np.eye(3)[:, [1, 2]]})
    z = Flag.from_subspaces({1: ex(1, 1, 0), 2: np.array([[1, 0], [1, 0], [0, 1]], dtype=complex)})
    out = hyperconvex_check(x, y, z, 1)
    assert not out["pass"] and out["defect"] == 1
    assert not hyperconvex_direct_k1(x, y, z)


def test_hyperconvex_precondition():
    x = veronese(0.5)
    with pytest.raises(PreconditionViolation):
        hyperconvex_check(x, x, veronese(2.0), 1)


def test_hyperconvex_sym4_k2(schottky3):
    ball = enumerate_ball(sym_image(schottky3, 4), 5)
    s = limit_set_sample(ball, theta_k(2, 4), n_min=3)
    for i, j, k in stratified_triples(s, 50, seed=1):
        assert hyperconvex_check(s.flag(i), s.flag(j), s.flag(k), 2)["pass"]


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3, unique=True))
def test_direct_and_general_k1_agree_on_veronese(ts):
    ts = sorted(ts)
    if min(np.diff(ts)) < 0.05:
        return
    x, y, z = (veronese(t, 4) for t in ts)
    assert hyperconvex_check(x, y, z, 1)["pass"] == hyperconvex_direct_k1(x, y, z)


def test_direct_and_general_k1_agree_on_500_veronese_triples(rng):
    n = 0
    while n < 500:
        d = int(rng.integers(3, 6))
        vs = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        x, y, z = (veronese_flag(v, d) for v in vs)
        try:
            general = hyperconvex_check(x, y, z, 1)["pass"]
        except (PreconditionViolation, NotTransverse):
            # nearly coincident points on the curve; draw again
            continue
        assert general == hyperconvex_direct_k1(x, y, z)
        n += 1


def test_hyperconvex_symmetric_in_x_y(schottky3):
    ball = enumerate_ball(sym_image(schottky3, 5), 5)
    for k in (1, 2):
        s = limit_set_sample(ball, theta_k(k, 5), n_min=3)
        for i, j, l in stratified_triples(s, 30, seed=k):
            a = hyperconvex_check(s.flag(i), s.flag(j), s.flag(l), k)
            b = hyperconvex_check(s.flag(j), s.flag(i), s.flag(l), k)
            assert a["pass"] == b["pass"]


def test_rank_ambiguity_raised():
    a = np.eye(3, dtype=complex)[:, :2]
    # the second column leaves span(a) at angle ~1e-8, inside the ambiguity band
    b = np.array([[1, 0], [0, 1], [0, 1e-8]], dtype=complex)
    with pytest.raises(RankAmbiguous):
        subspace_intersection(a, b)


def test_wedge_reduction_on_triples(schottky3):
    # hyperconvexity for k transfers to k = 1 of the exterior power through flag_plucker
    from anosovlab.flags import flag_plucker

    ball = enumerate_ball(sym_image(schottky3, 4), 4)
    s = limit_set_sample(ball, theta_k(2, 4), n_min=2)
    for i, j, k in stratified_triples(s, 30, seed=2):
        xs = [flag_plucker(s.flag(t), 2) for t in (i, j, k)]
        assert hyperconvex_check(s.flag(i), s.flag(j), s.flag(k), 2)["pass"] == \
            hyperconvex_check(*xs, 1)["pass"]


# ------------------------------------------------------------ convergence


def test_north_south_dynamics():
    g = normalize(np.diag([2.0, 0.5]), "R")
    seq = [g ** n for n in range(1, 31)]
    probes = probe_grid(2, (1,), 20, seed=0) + [Flag(np.eye(2, dtype=complex)[:, 1:], (1,))]
    rep = convergence_spotcheck(seq, (1,), probes)
    assert rep["excluded"] == [20]
    assert rep["max_terminal_distance"] < 1e-6


@given(seeds)
def test_powers_converge_to_attracting_flag(seed):
    g = random_hyperbolic(3, "C", np.random.default_rng(seed))
    seq = [g ** n for n in (16, 32, 64, 128)]
    rep = convergence_spotcheck(seq, (1, 2), probe_grid(3, (1, 2), 10, seed=seed))
    assert rep["max_terminal_distance"] < 1e-5


def test_secant_convergence_veronese():
    t0 = 0.3
    x = veronese(t0)
    pairs = [(veronese(t0 - h).subspace(1), veronese(t0 + h).subspace(1))
             for h in (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)]
    rep = secant_convergence_check(x, pairs)
    assert rep["distances"][-1] < 1e-4
    assert rep["distances"][0] > rep["distances"][-1]


def test_secant_guards_and_kleinian():
    x = veronese(0.3)
    p = x.subspace(1)
    with pytest.raises(InsufficientData):
        secant_convergence_check(x, [(p, p)] * 6)
    y = Flag(np.array([[1.0], [0.2]], dtype=complex), (1,))
    pairs = [(np.array([1, t], dtype=complex) / np.hypot(1, t), np.array([1, -t], dtype=complex) / np.hypot(1, t))
             for t in (0.4, 0.2, 0.1, 0.05)]
    rep = secant_convergence_check(y, pairs)
    assert max(rep["distances"]) < 1e-12


def test_exterior_power_limit_set_is_plucker(schottky3):
    # limit sets are equivariant: U_1(eta_2 g) = E_2(U_2(g))
    s4 = sym_image(schottky3, 4)
    g = s4.word_matrix(("a", "b", "A"))
    from anosovlab.flags import attracting_flag

    lhs = attracting_flag(exterior_power(g, 2), (1,)).subspace(1)
    rhs = plucker_vector(attracting_flag(g, (2,)).subspace(2))[:, None]
    assert gr_distance(lhs, rhs) < 1e-9
