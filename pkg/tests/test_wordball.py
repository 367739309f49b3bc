import numpy as np
import pytest

from anosovlab.errors import BudgetExceeded, InvalidInput, InvalidMatrix
from anosovlab.groups import (
    cyclic_hyperbolic,
    cyclic_unipotent,
    load_group,
    schottky_pair,
    sym_image,
    tensor_with_unitary,
)
from anosovlab.matgrp import alpha, cartan, identity, normalize
from anosovlab.wordball import (
    GeneratorSet,
    anosov_diagnostic,
    budget_from_env,
    divergence_check,
    enumerate_ball,
    format_word,
    sphere_minima,
)


def test_generator_set_guards():
    with pytest.raises(InvalidMatrix):
        GeneratorSet(("a",), (identity(2),))
    with pytest.raises(InvalidMatrix):
        GeneratorSet(("a", "b"), (normalize(np.diag([2, 0.5])), normalize(np.eye(3) * 0 + np.diag([2, 1, 0.5]))))
    s = schottky_pair(3.0)
    assert s.letters == ("a", "A", "b", "B")


def test_schottky_counts(schottky3):
    ball = enumerate_ball(schottky3, 3)
    assert len(ball) == 53
    assert [ball.sphere(n).stop - ball.sphere(n).start for n in range(4)] == [1, 4, 12, 36]


def test_cyclic_counts():
    ball = enumerate_ball(cyclic_hyperbolic(2.0), 5)
    assert len(ball) == 11
    assert enumerate_ball(cyclic_hyperbolic(2.0), 0).words() == [()]


def test_ball_words_and_order(schottky3):
    ball = enumerate_ball(schottky3, 2)
    words = ball.words()
    assert words[:5] == [(), ("a",), ("A",), ("b",), ("B",)]
    assert format_word(("a", "B", "B")) == "aBB"
    for i in (7, 13, 16):
        assert ball.matrix(i).projectively_equal(schottky3.word_matrix(words[i]))
        assert np.allclose(ball.kappa[i], cartan(ball.matrix(i)))


def test_ball_dedups_relations():
    # an element of order 3 in PSL(2): the ball of radius 3 has 3 elements
    t = 2 * np.pi / 3
    r = normalize(np.array([[np.cos(t / 2), -np.sin(t / 2)], [np.sin(t / 2), np.cos(t / 2)]]), "R")
    ball = enumerate_ball(GeneratorSet(("r",), (r,)), 3)
    assert len(ball) == 3


def test_threads_do_not_change_output(schottky3):
    a = enumerate_ball(schottky3, 5, threads=1)
    b = enumerate_ball(schottky3, 5, threads=3)
    assert a.words() == b.words()
    assert np.array_equal(a.entries, b.entries)
    assert np.array_equal(a.kappa, b.kappa)


def test_budget(schottky3, monkeypatch):
    with pytest.raises(BudgetExceeded):
        enumerate_ball(schottky3, 6, budget=100)
    monkeypatch.setenv("ANOSOVLAB_BUDGET", "77")
    assert budget_from_env() == 77
    monkeypatch.setenv("ANOSOVLAB_BUDGET", "lots")
    with pytest.raises(InvalidInput):
        budget_from_env()


def test_anosov_diagnostic_cyclic():
    ball = enumerate_ball(cyclic_hyperbolic(4.0), 8)
    rep = anosov_diagnostic(ball, 1)
    assert rep["slope"] == pytest.approx(2 * np.log(4))
    assert rep["intercept"] == 0
    assert rep["linear_growth"]


def test_anosov_diagnostic_unipotent():
    rep = anosov_diagnostic(enumerate_ball(cyclic_unipotent(), 12), 1)
    assert rep["slope"] < 0.5
    # alpha_1 ~ 2 log n: the tail slope is about 2 / n, far from the hyperbolic rates
    assert rep["sphere_minima"][-1] == pytest.approx(2 * np.log(12), rel=0.05)


def test_anosov_diagnostic_schottky(schottky10):
    rep = anosov_diagnostic(enumerate_ball(schottky10, 8), 1)
    assert rep["slope"] >= 2 * np.log(10) - 0.5


def test_divergence_check(schottky3):
    rep = divergence_check(enumerate_ball(schottky3, 6), (1,))
    assert rep[1]["strictly_increasing"]
    assert divergence_check(enumerate_ball(schottky3, 0), (1,)) == {}


def test_tensor_with_unitary_is_degenerate(schottky10):
    ball = enumerate_ball(tensor_with_unitary(schottky10), 6)
    mins = sphere_minima(ball, 1)
    assert np.all(mins < 1e-8)
    rep = divergence_check(ball, (1,))
    assert rep[1]["max_minimum"] < 1e-8


def test_values_and_sym_image(schottky3):
    s3 = sym_image(schottky3, 3)
    b2, b3 = enumerate_ball(schottky3, 3), enumerate_ball(s3, 3)
    assert b2.words() == b3.words()
    assert np.allclose(b3.values(alpha(1)), b2.values(alpha(1)), atol=1e-9)


def test_bundled_corpus_loads():
    gens, meta = load_group("rho4-schottky-10")
    assert gens.dim == 6 and "description" in meta


def test_ball_is_prefix_consistent(schottky3):
    small, big = enumerate_ball(schottky3, 4), enumerate_ball(schottky3, 5)
    n = len(small)
    assert big.words()[:n] == small.words()
    assert np.array_equal(big.entries[:n], small.entries)


def test_cyclic_dedup_collapses_inverse_pairs():
    g = cyclic_hyperbolic(2.0)
    ball = enumerate_ball(g, 6)
    # g^n g^-n is the identity, so each sphere holds exactly g^n and g^-n
    assert [ball.sphere(n).stop - ball.sphere(n).start for n in range(7)] == [1] + [2] * 6
    assert g.word_matrix(("g",) * 3 + ("G",) * 3).projectively_equal(identity(2))
