import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anosovlab.errors import DegenerateGap, InvalidFlag
from anosovlab.flags import (
    Flag,
    GrassmannPoint,
    attracting_flag,
    bloch,
    check_nesting,
    cp1_point,
    flag_plucker,
    from_bloch,
    gr_distance,
    iota,
    lex_subsets,
    plucker,
    plucker_vector,
    projector_embedding,
    repelling_flag,
    theta_k,
    transversality_margin,
    transverse,
    veronese_flag,
)
from anosovlab.matgrp import identity, normalize, random_special, random_unitary
from anosovlab.reps import exterior_power, sym_power
from strategies import seeds


def e(d, *idx):
    return np.eye(d, dtype=complex)[:, list(idx)]


def test_flag_basics():
    x = Flag.standard(4, (1, 3))
    assert x.dim == 4 and not x.is_complete
    assert x.subspace(3).shape == (4, 3)
    assert check_nesting(x) < 1e-14
    assert x.complete().is_complete
    with pytest.raises(InvalidFlag):
        x.subspace(2)
    with pytest.raises(InvalidFlag):
        Flag(np.eye(3), (3,))


def test_from_subspaces_checks_nesting():
    f = Flag.from_subspaces({1: e(3, 0), 2: e(3, 0, 1)})
    assert gr_distance(f.subspace(1), e(3, 0)) < 1e-14
    with pytest.raises(InvalidFlag):
        Flag.from_subspaces({1: e(3, 2), 2: e(3, 0, 1)})


@given(seeds, st.sampled_from([3, 4, 5]))
def test_random_flags_are_orthonormal_and_nested(seed, d):
    x = Flag(random_unitary(d, "C", np.random.default_rng(seed)).entries, tuple(range(1, d)))
    assert np.allclose(x.basis.conj().T @ x.basis, np.eye(d - 1), atol=1e-10)
    assert check_nesting(x) < 1e-9


# ------------------------------------------------------------ attracting flags


def test_attracting_flag_diagonal():
    g = normalize(np.diag([3.0, 1.0, 1 / 3]), "R")
    assert gr_distance(attracting_flag(g, (1,)).subspace(1), e(3, 0)) < 1e-12


def test_attracting_flag_left_singular_factor(rng):
    u = random_unitary(2, "C", rng)
    g = normalize(u.entries @ np.diag([3, 1 / 3]), "C")
    assert gr_distance(attracting_flag(g, (1,)).subspace(1), u.entries[:, :1]) < 1e-12


def test_attracting_flag_unipotent():
    g = normalize(np.array([[1.0, 1.0], [0.0, 1.0]]), "R")
    u, s, _ = np.linalg.svd(g.entries)
    x = attracting_flag(g, (1,))
    assert gr_distance(x.subspace(1), u[:, :1]) < 1e-12
    assert 2 * np.log(s[0]) == pytest.approx(2 * np.log((1 + np.sqrt(5)) / 2))


def test_attracting_flag_degenerate_gap():
    with pytest.raises(DegenerateGap):
        attracting_flag(identity(3), (1,))


def test_repelling_flag_of_diagonal():
    g = normalize(np.diag([3.0, 1.0, 1 / 3]), "R")
    y = repelling_flag(g, (1,))
    assert y.theta == (2,)
    assert gr_distance(y.subspace(2), e(3, 1, 2)) < 1e-12


# ------------------------------------------------------------ transversality


def test_transverse_examples():
    d = 4
    x = Flag(e(d, 0), (1,))
    assert transverse(x, Flag(e(d, 1, 2, 3), (3,)))
    assert not transverse(x, Flag(e(d, 0, 1, 2), (3,)))
    assert iota((1, 2), 5) == (3, 4)


def test_random_pairs_transverse(rng):
    d = 4
    hits = 0
    for _ in range(2000):
        x = Flag(random_unitary(d, "C", rng).entries, (1, 2, 3))
        y = Flag(random_unitary(d, "C", rng).entries, (1, 2, 3))
        hits += transverse(x, y)
    assert hits == 2000


def test_transverse_matches_rank(rng):
    # half the pairs are made non-transverse by putting x^1 inside y^3
    d = 4
    for i in range(1000):
        x = Flag(random_unitary(d, "C", rng).entries, (1,))
        b = random_unitary(d, "C", rng).entries[:, :3].copy()
        if i % 2:
            b[:, 0] = x.subspace(1)[:, 0]
        y = Flag(np.linalg.qr(b)[0], (3,))
        rank = np.linalg.matrix_rank(np.hstack([x.subspace(1), y.subspace(3)]), tol=1e-8)
        assert transverse(x, y) == (rank == d)


def test_transversality_margin_rejects_wrong_type():
    with pytest.raises(InvalidFlag):
        transversality_margin(Flag.standard(4, (1,)), Flag.standard(4, (1,)))


def test_gr_distance_examples():
    assert gr_distance(e(2, 0), e(2, 0)) == pytest.approx(0)
    assert gr_distance(e(2, 0), e(2, 1)) == pytest.approx(1)


@given(seeds)
def test_gr_distance_symmetric(seed):
    rng = np.random.default_rng(seed)
    a = random_unitary(5, "C", rng).entries[:, :2]
    b = random_unitary(5, "C", rng).entries[:, :2]
    assert gr_distance(a, b) == gr_distance(b, a)
    assert 0 <= gr_distance(a, b) <= 1 + 1e-12


@given(seeds)
def test_gr_distance_invariant_under_unitaries(seed):
    rng = np.random.default_rng(seed)
    a = random_unitary(4, "C", rng).entries[:, :2]
    b = random_unitary(4, "C", rng).entries[:, :2]
    u = random_unitary(4, "C", rng).entries
    assert gr_distance(u @ a, u @ b) == pytest.approx(gr_distance(a, b), abs=1e-12)


def test_gr_distance_triangle(rng):
    for _ in range(1000):
        a, b, c = (random_unitary(5, "C", rng).entries[:, :2] for _ in range(3))
        assert gr_distance(a, c) <= gr_distance(a, b) + gr_distance(b, c) + 1e-12


# ------------------------------------------------------------ Pluecker


def test_plucker_basis_cases():
    p = plucker(GrassmannPoint(e(4, 0, 1)))
    assert gr_distance(p.basis, np.eye(6)[:, :1]) < 1e-14
    v = plucker_vector(np.array([[1, 0], [1, 0], [0, 1]], dtype=complex))
    subsets = lex_subsets(3, 2)
    expected = np.zeros(3, dtype=complex)
    expected[subsets.index((0, 2))] = 1
    expected[subsets.index((1, 2))] = 1
    assert gr_distance(v[:, None], expected[:, None]) < 1e-14


@given(seeds, st.sampled_from([(3, 1), (4, 2), (5, 2), (5, 3)]))
def test_plucker_equivariance(seed, dk):
    d, k = dk
    rng = np.random.default_rng(seed)
    g = random_special(d, "C", rng)
    x = GrassmannPoint(random_unitary(d, "C", rng).entries[:, :k])
    lhs = plucker(x.transform(g)).basis
    rhs = exterior_power(g, k).entries @ plucker(x).basis
    assert gr_distance(lhs, rhs) < 1e-9


def test_flag_plucker_standard():
    x = Flag.standard(4, theta_k(2, 4))
    E = flag_plucker(x, 2)
    assert E.theta == (1, 2, 4, 5)
    assert gr_distance(E.subspace(1), np.eye(6)[:, :1]) < 1e-14
    assert gr_distance(E.subspace(2), np.eye(6)[:, :2]) < 1e-14


@given(seeds, st.sampled_from([(4, 2), (5, 2), (6, 3)]))
def test_flag_plucker_equivariant_and_consistent(seed, dk):
    d, k = dk
    rng = np.random.default_rng(seed)
    g = random_special(d, "C", rng)
    x = Flag(random_unitary(d, "C", rng).entries, theta_k(k, d))
    E = flag_plucker(x, k)
    assert gr_distance(E.subspace(1), plucker_vector(x.subspace(k))[:, None]) < 1e-10
    lhs = flag_plucker(x.transform(g), k)
    rhs = E.transform(exterior_power(g, k))
    for j in E.theta:
        assert gr_distance(lhs.subspace(j), rhs.subspace(j)) < 1e-9


def test_flag_plucker_needs_theta_k():
    with pytest.raises(InvalidFlag):
        flag_plucker(Flag.standard(5, (2,)), 2)


def test_theta_k():
    assert theta_k(1, 2) == (1,)
    assert theta_k(1, 4) == (1, 2, 3)
    assert theta_k(2, 6) == (1, 2, 3, 4, 5)
    assert theta_k(1, 6) == (1, 2, 4, 5)


# ------------------------------------------------------------ CP^1 helpers


@given(seeds)
def test_bloch_roundtrip_and_chordal(seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    b = bloch(v)
    assert np.allclose(np.linalg.norm(b, axis=1), 1)
    w = from_bloch(b)
    for x, y in zip(v, w):
        assert gr_distance(x[:, None], y[:, None]) < 1e-10
    # chordal distance |b - b'| / 2 equals the projector embedding distance
    pe = projector_embedding(v)
    assert np.linalg.norm(b[0] - b[1]) / 2 == pytest.approx(np.linalg.norm(pe[0] - pe[1]))


def test_cp1_point():
    assert np.allclose(cp1_point(0), [1, 0])
    assert np.allclose(cp1_point(np.inf), [0, 1])


def test_veronese_flag_is_attracting_flag_of_sym(rng):
    g = random_special(2, "C", rng)
    x = attracting_flag(g, (1,))
    ver = veronese_flag(x.subspace(1)[:, 0], 4)
    att = attracting_flag(sym_power(g, 4), (1, 2, 3))
    for k in (1, 2, 3):
        assert gr_distance(ver.subspace(k), att.subspace(k)) < 1e-8
