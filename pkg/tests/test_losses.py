"""Loss math against independent scalar oracles."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from hotspotter.errors import NumericDomainError, ValidationError
from hotspotter.losses import (
    DEFAULT_BETA,
    LossConfig,
    compound_loss,
    cross_entropy_term,
    loss_terms,
    negative_cosine_similarity,
    symmetric_similarity_loss,
)


# -- oracles: plain-python scalar arithmetic, no torch -----------------------


def oracle_ncs(p, z):
    dot = sum(a * b for a, b in zip(p, z))
    return -dot / (math.sqrt(sum(a * a for a in p)) * math.sqrt(sum(b * b for b in z)))


def oracle_softmax(v):
    m = max(v)
    exps = [math.exp(x - m) for x in v]
    s = sum(exps)
    return [e / s for e in exps]


def oracle_ce(p, z):
    q, r = oracle_softmax(p), oracle_softmax(z)
    return -sum(qi * math.log(ri) for qi, ri in zip(q, r))


def vec(*values):
    return np.array(values, dtype=np.float64)


# -- Eq. 1 --------------------------------------------------------------------


def test_ncs_identical_unit_vectors():
    assert float(negative_cosine_similarity(vec(1, 0, 0), vec(1, 0, 0))) == pytest.approx(-1.0, abs=1e-12)


def test_ncs_orthogonal():
    assert float(negative_cosine_similarity(vec(1, 0), vec(0, 1))) == pytest.approx(0.0, abs=1e-12)


def test_ncs_45_degrees():
    expected = oracle_ncs([1, 0], [1, 1])  # -cos 45 = -0.7071067811865475
    assert expected == pytest.approx(-0.7071067, abs=1e-6)
    assert float(negative_cosine_similarity(vec(1, 0), vec(1, 1))) == pytest.approx(expected, abs=1e-9)


def test_ncs_zero_norm_raises():
    with pytest.raises(NumericDomainError):
        negative_cosine_similarity(vec(0, 0), vec(1, 0))
    with pytest.raises(NumericDomainError):
        negative_cosine_similarity(vec(1, 0), vec(0, 0))


def test_ncs_range_and_scale_invariance():
    rng = np.random.default_rng(7)
    for _ in range(200):
        p = rng.normal(size=8)
        z = rng.normal(size=8)
        base = float(negative_cosine_similarity(p, z))
        assert -1.0 - 1e-12 <= base <= 1.0 + 1e-12
        a, b = rng.uniform(0.1, 10.0, size=2)
        scaled = float(negative_cosine_similarity(a * p, b * z))
        assert scaled == pytest.approx(base, abs=1e-10)


# -- Eq. 2 --------------------------------------------------------------------


def test_symmetric_all_equal_unit_vectors():
    v = vec(1, 0, 0)
    assert float(symmetric_similarity_loss(v, v, v, v)) == pytest.approx(-2.0, abs=1e-12)


def test_symmetric_orthogonal_pairs():
    # p1 is matched against z2 and p2 against z1
    out = symmetric_similarity_loss(vec(1, 0), vec(1, 0), vec(0, 1), vec(0, 1))
    assert float(out) == pytest.approx(0.0, abs=1e-12)


def test_symmetric_derived_case():
    expected = oracle_ncs([1, 0], [1, 1]) + oracle_ncs([0, 1], [1, 1])
    assert expected == pytest.approx(-1.4142136, abs=1e-6)
    out = symmetric_similarity_loss(vec(1, 0), vec(1, 1), vec(0, 1), vec(1, 1))
    assert float(out) == pytest.approx(expected, abs=1e-9)


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda v: any(abs(x) > 1e-3 for x in v)),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda v: any(abs(x) > 1e-3 for x in v)),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda v: any(abs(x) > 1e-3 for x in v)),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda v: any(abs(x) > 1e-3 for x in v)))
@settings(max_examples=50, deadline=None)
def test_symmetric_argument_swap(p1, z1, p2, z2):
    a = float(symmetric_similarity_loss(vec(*p1), vec(*z1), vec(*p2), vec(*z2)))
    b = float(symmetric_similarity_loss(vec(*p2), vec(*z2), vec(*p1), vec(*z1)))
    assert a == pytest.approx(b, abs=1e-12)
    assert -2.0 - 1e-9 <= a <= 2.0 + 1e-9


def test_symmetric_gradient_skips_z_branch():
    p1 = torch.tensor([0.3, 0.7], requires_grad=True)
    p2 = torch.tensor([0.9, -0.2], requires_grad=True)
    z1 = torch.tensor([0.5, 0.5], requires_grad=True)
    z2 = torch.tensor([-0.1, 1.2], requires_grad=True)
    symmetric_similarity_loss(p1, z1, p2, z2).backward()
    assert p1.grad is not None and p2.grad is not None
    assert z1.grad is None and z2.grad is None


# -- Eq. 3 --------------------------------------------------------------------


def test_ce_uniform_inputs_give_ln2():
    assert float(cross_entropy_term(vec(0, 0), vec(0, 0))) == pytest.approx(math.log(2), abs=1e-9)


def test_ce_self_equals_entropy_and_is_minimal():
    rng = np.random.default_rng(3)
    p = rng.normal(size=6)
    q = oracle_softmax(list(p))
    entropy = -sum(x * math.log(x) for x in q)
    self_ce = float(cross_entropy_term(p, p))
    assert self_ce == pytest.approx(entropy, abs=1e-9)
    for _ in range(50):  # Gibbs: H(q, r) >= H(q, q) for any other r
        r = rng.normal(size=6)
        assert float(cross_entropy_term(p, r)) >= self_ce - 1e-12


def test_ce_derived_case():
    # the independent oracle gives 1.8885222 for p=(2,0), z=(0,2)
    expected = oracle_ce([2, 0], [0, 2])
    assert expected == pytest.approx(1.8885221669987375, abs=1e-12)
    assert float(cross_entropy_term(vec(2, 0), vec(0, 2))) == pytest.approx(expected, abs=1e-9)


def test_ce_nonnegative_on_random_inputs():
    rng = np.random.default_rng(11)
    for _ in range(200):
        p, z = rng.normal(size=5), rng.normal(size=5)
        assert float(cross_entropy_term(p, z)) >= 0.0


def test_ce_rejects_non_finite():
    with pytest.raises(NumericDomainError):
        cross_entropy_term(vec(np.nan, 0), vec(1, 0))
    with pytest.raises(NumericDomainError):
        cross_entropy_term(vec(1, 0), vec(np.inf, 0))


def test_ce_blocks_gradient_through_z():
    p = torch.tensor([0.2, -0.4], requires_grad=True)
    z = torch.tensor([1.0, 0.5], requires_grad=True)
    cross_entropy_term(p, z).backward()
    assert p.grad is not None
    assert z.grad is None


# -- Eq. 4 --------------------------------------------------------------------


def test_compound_beta_zero_equals_regular_exactly():
    rng = np.random.default_rng(5)
    for _ in range(20):
        p1, z1, p2, z2 = (rng.normal(size=4) for _ in range(4))
        compound = float(compound_loss(p1, z1, p2, z2, LossConfig("compound", 0.0)))
        regular = float(symmetric_similarity_loss(p1, z1, p2, z2))
        assert compound == regular


def test_compound_derived_case_all_equal():
    # similarity part -2 plus beta * 2 * entropy(softmax(1, 0))
    expected = -2.0 + (2.0 / 3.0) * 2.0 * oracle_ce([1, 0], [1, 0])
    assert expected == pytest.approx(-1.2237291881490429, abs=1e-12)
    v = vec(1, 0)
    out = compound_loss(v, v, v, v, LossConfig("compound", 2.0 / 3.0))
    assert float(out) == pytest.approx(expected, abs=1e-9)


def test_default_beta_round_trip():
    cfg = LossConfig()
    assert cfg.beta == pytest.approx(2.0 / 3.0)
    assert DEFAULT_BETA == pytest.approx(2.0 / 3.0)


def test_compound_requires_compound_variant():
    with pytest.raises(ValidationError):
        compound_loss(vec(1, 0), vec(1, 0), vec(1, 0), vec(1, 0), LossConfig("regular"))


def test_loss_config_validation():
    with pytest.raises(ValidationError):
        LossConfig("bogus")
    with pytest.raises(ValidationError):
        LossConfig("compound", -0.1)


def test_loss_terms_variants():
    v1, v2 = vec(1, 0.5), vec(0.5, 1)
    regular = loss_terms(v1, v2, v2, v1, LossConfig("regular"))
    assert set(regular) == {"total", "similarity"}
    compound = loss_terms(v1, v2, v2, v1, LossConfig("compound", 0.5))
    assert float(compound["total"]) == pytest.approx(
        float(compound["similarity"]) + 0.5 * float(compound["cross_entropy"]), abs=1e-12
    )
