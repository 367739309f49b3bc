import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anosovlab.errors import InvalidFlag, InvalidFunctional, InvalidIndex, InvalidMatrix
from anosovlab.flags import Flag
from anosovlab.matgrp import (
    alpha,
    cartan,
    custom,
    evaluate,
    identity,
    iwasawa_cocycle,
    jordan,
    normalize,
    omega,
    parse_functional,
    partial_cartan,
    partial_cocycle,
    projective_distance,
    random_special,
    random_unitary,
    singular_values,
)
from strategies import complete_flags, element_pairs, elements, seeds

LOG3 = np.log(3.0)


# ---------------------------------------------------------------- normalize


def test_normalize_identity():
    g = normalize(np.eye(3), "C")
    assert g.projectively_equal(identity(3))
    assert np.allclose(g.entries, np.eye(3))


def test_normalize_absorbs_real_scalar():
    g = normalize(2 * np.eye(2), "R")
    assert np.allclose(g.entries, np.eye(2))


def test_normalize_absorbs_complex_scalar():
    u = np.array([[1.0, 1.0], [0.0, 1.0]])
    g = normalize(np.array([[2, 0], [0, 2]]) @ u, "C")
    assert g.projectively_equal(normalize(u, "C"))
    assert abs(abs(np.linalg.det(g.entries)) - 1) < 1e-14


@pytest.mark.parametrize("bad", [np.zeros((2, 2)), np.array([[1.0, np.nan], [0, 1]]),
                                 np.ones((2, 3)), np.array([[1.0, 2.0], [2.0, 4.0]])])
def test_normalize_rejects(bad):
    with pytest.raises(InvalidMatrix):
        normalize(bad, "C")


@given(elements())
def test_normalized_det_has_modulus_one(g):
    assert abs(abs(np.linalg.det(g.entries)) - 1) < 1e-10


@given(elements(dims=(2, 3, 4), field="C"), st.floats(0, 2 * np.pi))
def test_projective_equality_ignores_phase(g, t):
    h = normalize(np.exp(1j * t) * 3.7 * g.entries, "C")
    assert g.projectively_equal(h)
    assert projective_distance(g.entries, h.entries, "C") < 1e-10


# ---------------------------------------------------------------- spectra


def test_singular_values_examples():
    assert np.allclose(singular_values(normalize(np.diag([3, 1 / 3]), "R")), [3, 1 / 3])
    phi = (1 + np.sqrt(5)) / 2
    assert np.allclose(singular_values(normalize(np.array([[1.0, 1], [0, 1]]))), [phi, 1 / phi])


@given(seeds, st.sampled_from([2, 3, 4, 5]), st.sampled_from(["R", "C"]))
def test_unitary_singular_values_are_one(seed, d, field):
    u = random_unitary(d, field, np.random.default_rng(seed))
    assert np.allclose(singular_values(u), 1, atol=1e-12)


def test_cartan_and_jordan_examples():
    assert np.allclose(cartan(normalize(np.diag([3, 1 / 3]))), [LOG3, -LOG3])
    assert np.allclose(jordan(normalize(np.array([[1.0, 1], [0, 1]]))), [0, 0], atol=1e-7)


@given(elements(scale=2.0))
def test_cartan_sorted_and_trace_zero(g):
    A = cartan(g)
    assert np.all(np.diff(A) <= 1e-12)
    assert abs(A.sum()) < 1e-12 * g.dim * max(1.0, np.abs(A).max())


@given(elements())
def test_cartan_of_inverse_is_opposite(g):
    assert np.allclose(cartan(g.inverse()), -cartan(g)[::-1], atol=1e-9)


def test_cartan_resolves_tiny_singular_values():
    # tau_3 of a boost by t: kappa(g^n) = (nt, 0, -nt) exactly, with
    # sigma_3 / sigma_1 = e^-80 far below eps; the carried inverse recovers it
    from anosovlab.groups import boost
    from anosovlab.reps import sym_power

    g = sym_power(normalize(boost(1.0), "R"), 3)
    A = cartan(g ** 40)
    assert np.allclose(A, [40, 0, -40], atol=1e-9)


# ---------------------------------------------------------------- functionals


def test_functional_examples():
    A = cartan(normalize(np.diag([3, 1 / 3])))
    assert alpha(1)(A) == pytest.approx(2 * LOG3)
    assert omega(1)(A) == pytest.approx(LOG3)
    g = normalize(np.diag([4.0, 3.0, 2.0, 1.0]), "R")
    assert evaluate(alpha(2), cartan(g)) == pytest.approx(np.log(1.5))


@given(elements(dims=(2,)))
def test_omega_top_vanishes(g):
    # omega_d is the full trace, zero on the Cartan subspace
    assert abs(np.sum(cartan(g))) < 1e-12


@given(elements(dims=(3, 4, 5, 6)))
def test_alpha_in_terms_of_weights(g):
    A = cartan(g)
    d = g.dim
    w = [0.0] + [omega(k)(A) for k in range(1, d)] + [0.0]
    for k in range(1, d):
        assert alpha(k)(A) == pytest.approx(2 * w[k] - w[k - 1] - w[k + 1], abs=1e-12)


def test_functional_parsing_and_bounds():
    assert parse_functional("alpha_2") == alpha(2)
    assert str(parse_functional("omega_1")) == "omega_1"
    phi = custom({1: 2.0, 2: -1.0})
    A = np.array([1.0, 0.5, -1.5])
    assert phi(A) == pytest.approx(alpha(1)(A))
    with pytest.raises(InvalidIndex):
        alpha(3)(np.zeros(3))
    with pytest.raises(InvalidFunctional):
        parse_functional("beta_1")


# ---------------------------------------------------------------- cocycle


def test_cocycle_triangular_example():
    g = normalize(np.array([[2, 1], [0, 0.5]]), "R")
    assert np.allclose(iwasawa_cocycle(g, Flag.standard(2)), [np.log(2), -np.log(2)])


def test_cocycle_weight_example():
    x = Flag.standard(2)
    B = iwasawa_cocycle(normalize(np.diag([2, 0.5])), x)
    assert omega(1)(B) == pytest.approx(np.log(2))


@given(seeds, st.sampled_from([2, 3, 4]))
def test_cocycle_of_unitary_vanishes(seed, d):
    rng = np.random.default_rng(seed)
    u = random_unitary(d, "C", rng)
    x = Flag(random_unitary(d, "C", rng).entries, tuple(range(1, d)))
    assert np.allclose(iwasawa_cocycle(u, x), 0, atol=1e-12)


@given(element_pairs(), seeds)
def test_cocycle_additive(pair, seed):
    g, h = pair
    d = g.dim
    x = Flag(random_unitary(d, "C", np.random.default_rng(seed)).entries, tuple(range(1, d)))
    lhs = iwasawa_cocycle(g @ h, x)
    rhs = iwasawa_cocycle(g, x.transform(h)) + iwasawa_cocycle(h, x)
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_cocycle_needs_complete_flag():
    with pytest.raises(InvalidFlag):
        iwasawa_cocycle(identity(3), Flag.standard(3, (1,)))


def test_partial_cocycle_mobius_norm(rng):
    g = random_special(2, "C", rng)
    v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    x = Flag(v[:, None], (1,))
    expected = np.log(np.linalg.norm(g.entries @ v) / np.linalg.norm(v))
    assert partial_cocycle((1,), omega(1), g, x) == pytest.approx(expected, abs=1e-12)


@given(seeds)
def test_partial_cocycle_independent_of_completion(seed):
    rng = np.random.default_rng(seed)
    d = 4
    g = random_special(d, "C", rng)
    x = Flag(random_unitary(d, "C", rng).entries, (1, 2))
    u = random_unitary(2, "C", rng).entries
    rest = x.complete_basis()[:, 2:] @ u
    a = Flag(np.concatenate([x.basis, rest], axis=1), (1, 2, 3))
    b = Flag(np.concatenate([x.basis, rest[:, ::-1]], axis=1), (1, 2, 3))
    phi = custom({1: 1.0, 2: 0.5})
    va = omega(1)(iwasawa_cocycle(g, a)) + 0.5 * omega(2)(iwasawa_cocycle(g, a))
    vb = omega(1)(iwasawa_cocycle(g, b)) + 0.5 * omega(2)(iwasawa_cocycle(g, b))
    assert va == pytest.approx(vb, abs=1e-10)
    assert partial_cocycle((1, 2), phi, g, x) == pytest.approx(va, abs=1e-10)


def test_partial_cocycle_unitary_and_support(rng):
    u = random_unitary(2, "C", rng)
    x = Flag(random_unitary(2, "C", rng).entries, (1,))
    assert abs(partial_cocycle((1,), alpha(1), u.inverse(), x)) < 1e-12
    with pytest.raises(InvalidFunctional):
        partial_cocycle((1,), alpha(1), random_special(3, "C", rng), Flag.standard(3, (1,)))


@given(complete_flags(3))
def test_cocycle_identity_is_zero(x):
    assert np.allclose(iwasawa_cocycle(identity(3), x), 0, atol=1e-14)


# ---------------------------------------------------------------- more invariants


@given(elements(dims=(2, 3, 4, 5)), st.integers(1, 5))
def test_jordan_of_powers(g, n):
    assert np.allclose(jordan(g ** n), n * jordan(g), atol=1e-8)


@given(elements(dims=(2, 3, 4, 5), field="C"), seeds)
def test_cartan_bi_unitary_invariant(g, seed):
    rng = np.random.default_rng(seed)
    u, v = random_unitary(g.dim, "C", rng), random_unitary(g.dim, "C", rng)
    assert np.allclose(cartan(u @ g @ v), cartan(g), atol=1e-10)


@given(elements(dims=(3, 4, 5, 6)), st.data())
def test_partial_cartan_weights(g, data):
    d = g.dim
    theta = data.draw(st.sets(st.integers(1, d - 1), min_size=1))
    A, At = cartan(g), partial_cartan(g, theta)
    for k in theta:
        assert omega(k)(At) == pytest.approx(omega(k)(A), abs=1e-12)
    # phi in the span of omega_k, k in theta
    phi = custom({k: float(k) + 0.5 for k in theta})
    assert phi(At) == pytest.approx(phi(A), abs=1e-11)
    for j in set(range(1, d)) - set(theta):
        assert alpha(j)(At) == pytest.approx(0, abs=1e-12)


def test_partial_cartan_bounds():
    with pytest.raises(InvalidIndex):
        partial_cartan(identity(3), (3,))
