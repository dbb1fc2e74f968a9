import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from syncsel.errors import ConfigError
from syncsel.scores import (
    NEG_ENTROPY,
    SR,
    ScoreKind,
    neg_entropy_score,
    score,
    score_and_grad,
    smp_score,
    sr_score,
)

from .conftest import random_simplex


def simplex_vectors(max_c=12):
    raw = arrays(np.float64, st.integers(2, max_c), elements=st.floats(1e-3, 10.0))
    return raw.map(lambda a: a / a.sum())


def test_sr_examples():
    assert sr_score([0.7, 0.2, 0.1]) == 0.7
    assert sr_score([0.5, 0.5]) == 0.5


def test_smp_examples():
    assert smp_score([0.25] * 4, 0.5) == pytest.approx(0.5, abs=1e-15)
    assert smp_score([0.9, 0.1], 2.0) == pytest.approx(0.81, abs=1e-15)


def test_negent_examples():
    assert neg_entropy_score([0.25] * 4) == pytest.approx(0.0, abs=1e-12)
    assert neg_entropy_score([1.0, 0.0, 0.0]) == 1.0
    p = np.array([0.5, 0.25, 0.25])
    H = -np.sum(p * np.log(p))
    assert neg_entropy_score(p) == pytest.approx(1 - H / math.log(3), abs=1e-15)


@pytest.mark.parametrize("bad", [[0.6, 0.6], [1.2, -0.2], [0.5, np.nan], [1.0]])
def test_rejects_non_simplex(bad):
    with pytest.raises(ValueError):
        sr_score(bad)


def test_smp_rejects_nonpositive_gamma():
    with pytest.raises(ValueError):
        smp_score([0.5, 0.5], 0.0)
    with pytest.raises(ConfigError):
        ScoreKind("smp", -1.0)


def test_batch_and_single_agree(rng):
    P = random_simplex(rng, 50, 6)
    for kind in (SR, NEG_ENTROPY, ScoreKind("smp", 0.5), ScoreKind("smp", 2.5)):
        batch = score(P, kind)
        assert batch.shape == (50,)
        single = np.array([score(P[i], kind) for i in range(50)])
        np.testing.assert_allclose(batch, single, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("text,expect", [
    ("sr", ScoreKind("sr")),
    ("negent", NEG_ENTROPY),
    ("SMP:2.5", ScoreKind("smp", 2.5)),
    ("smp", ScoreKind("smp", 1.0)),
])
def test_parse(text, expect):
    assert ScoreKind.parse(text) == expect
    assert ScoreKind.parse(str(expect)) == expect


def test_parse_rejects_garbage():
    with pytest.raises(ConfigError):
        ScoreKind.parse("smp:abc")
    with pytest.raises(ConfigError):
        ScoreKind.parse("entropy")


@given(simplex_vectors())
def test_scores_in_unit_interval(p):
    for kind in (SR, NEG_ENTROPY, ScoreKind("smp", 0.3), ScoreKind("smp", 3.0)):
        s = score(p, kind)
        assert 0.0 <= s <= 1.0


@given(simplex_vectors())
def test_smp_one_is_sr(p):
    assert smp_score(p, 1.0) == sr_score(p)


@given(simplex_vectors(), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
@settings(max_examples=50)
def test_smp_monotone_in_sr(p, g1, g2):
    # ranking by max p is preserved by any exponent
    q = np.roll(p, 1)
    a, b = sr_score(p), sr_score(q)
    if a < b:
        assert smp_score(p, g1) <= smp_score(q, g1)
        assert smp_score(p, g2) <= smp_score(q, g2)


def test_sr_lower_bound(rng):
    for C in (2, 7, 50):
        P = random_simplex(rng, 1000, C)
        assert np.all(sr_score(P) >= 1.0 / C - 1e-15)


def test_score_grad_matches_finite_differences(rng):
    P = random_simplex(rng, 20, 5)
    eps = 1e-7
    for kind in (SR, NEG_ENTROPY, ScoreKind("smp", 0.5), ScoreKind("smp", 2.5)):
        s, G = score_and_grad(P, kind)
        assert np.array_equal(s, score(P, kind))
        for j in range(5):
            E = np.zeros_like(P)
            E[:, j] = eps
            # score formulas extend off the simplex, so perturb one coordinate
            sp, _ = score_and_grad(P + E, kind)
            sm, _ = score_and_grad(P - E, kind)
            np.testing.assert_allclose((sp - sm) / (2 * eps), G[:, j], rtol=1e-6, atol=1e-7)


def test_max_subgradient_goes_to_lowest_index():
    _, G = score_and_grad(np.array([[0.4, 0.4, 0.2]]), SR)
    assert G.tolist() == [[1.0, 0.0, 0.0]]
