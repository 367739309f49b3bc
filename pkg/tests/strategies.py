"""Hypothesis strategies for random group elements and flags."""

import numpy as np
from hypothesis import strategies as st

from anosovlab.flags import Flag
from anosovlab.matgrp import random_special, random_unitary

seeds = st.integers(min_value=0, max_value=2**32 - 1)
fields = st.sampled_from(["R", "C"])


@st.composite
def elements(draw, dims=(2, 3, 4, 5), field=None, scale=1.0):
    d = draw(st.sampled_from(dims))
    f = field or draw(fields)
    rng = np.random.default_rng(draw(seeds))
    return random_special(d, f, rng, scale)


@st.composite
def element_pairs(draw, dims=(2, 3, 4), field="C"):
    d = draw(st.sampled_from(dims))
    rng = np.random.default_rng(draw(seeds))
    return random_special(d, field, rng), random_special(d, field, rng)


@st.composite
def complete_flags(draw, d, field="C"):
    rng = np.random.default_rng(draw(seeds))
    return Flag(random_unitary(d, field, rng).entries, tuple(range(1, d)))
