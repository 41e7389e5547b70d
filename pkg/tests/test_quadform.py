from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gfcalc.errors import DegenerateForm, InputError
from gfcalc.quadform import (
    CutoffProfile,
    QuadForm,
    compose,
    cutoff_eval,
    cutoff_gradient,
    cutoff_scales,
    cutoff_support_halfwidths,
    diagonal,
    form_components,
    difference_form,
    direct_sum,
    homotopy_to_hyperbolic,
    hyperbolic,
    invariants,
    negate,
    permute,
    unit,
)
from strategies import quad_forms, random_form


def eigen_invariants(q: QuadForm) -> tuple[int, int, int, int]:
    """Independent float oracle: count eigenvalue signs."""
    if q.dim == 0:
        return (0, 0, 0, 0)
    ev = np.linalg.eigvalsh(q.array())
    neg = int((ev < 0).sum())
    pos = int((ev > 0).sum())
    return (q.dim, neg, pos, pos - neg)


def test_hyperbolic_examples():
    assert hyperbolic(0) == unit()
    assert hyperbolic(1).mat == ((0, Fraction(1, 2)), (Fraction(1, 2), 0))
    assert invariants(hyperbolic(1)) == (2, 1, 1, 0)
    assert invariants(hyperbolic(3))[0] == 6
    assert invariants(hyperbolic(3)).signature == 0
    hh = direct_sum(hyperbolic(1), hyperbolic(1))
    assert invariants(hh) == (4, 2, 2, 0)


def test_invariant_examples():
    assert invariants(unit()) == (0, 0, 0, 0)
    assert invariants(diagonal(1, 1, -1)) == (3, 1, 2, 1)
    split = direct_sum(diagonal(1), diagonal(-1))
    assert split == diagonal(1, -1)
    assert invariants(split) == (2, 1, 1, 0)


def test_degenerate_and_asymmetric_rejected():
    with pytest.raises(DegenerateForm):
        QuadForm([[1, 1], [1, 1]])
    with pytest.raises(InputError):
        QuadForm([[1, 2], [0, 1]])


def test_negate_examples():
    assert negate(diagonal(1)) == diagonal(-1)
    assert invariants(negate(hyperbolic(1))) == (2, 1, 1, 0)
    rng = np.random.default_rng(11)
    for _ in range(20):
        q = random_form(rng, int(rng.integers(1, 5)))
        d, i, c, s = eigen_invariants(q)
        assert invariants(negate(q)) == (d, c, i, -s)


def test_permute_examples():
    q = diagonal(1, -1)
    assert permute(q, (0, 1)) == q
    assert permute(q, (1, 0)) == diagonal(-1, 1)
    assert permute(hyperbolic(1), (1, 0)) == hyperbolic(1)
    with pytest.raises(InputError):
        permute(q, (0, 0))
    with pytest.raises(InputError):
        permute(q, (0, 1, 2))


def test_permute_matches_pullback_definition():
    rng = np.random.default_rng(3)
    q = random_form(rng, 3)
    for sigma in itertools.permutations(range(3)):
        p = permute(q, sigma)
        for _ in range(5):
            u = rng.normal(size=3)
            assert p(u) == pytest.approx(q(u[list(sigma)]), abs=1e-12)


@given(quad_forms(), quad_forms(), quad_forms())
def test_direct_sum_monoid_laws(a, b, c):
    assert direct_sum(direct_sum(a, b), c) == direct_sum(a, direct_sum(b, c))
    assert direct_sum(a, unit()) == a
    assert direct_sum(unit(), a) == a


def test_invariants_additive_on_random_pairs():
    rng = np.random.default_rng(5)
    for _ in range(100):
        a = random_form(rng, int(rng.integers(0, 4)))
        b = random_form(rng, int(rng.integers(0, 4)))
        total = invariants(direct_sum(a, b))
        assert tuple(total) == tuple(x + y for x, y in zip(invariants(a), invariants(b)))


@given(quad_forms(min_dim=1, max_dim=4))
def test_invariants_match_eigen_oracle(q):
    inv = invariants(q)
    assert tuple(inv) == eigen_invariants(q)
    assert inv.index + inv.coindex == inv.dim


@given(quad_forms(min_dim=1, max_dim=3), st.data())
def test_permute_preserves_invariants_and_composes(q, data):
    n = q.dim
    sigma = tuple(data.draw(st.permutations(range(n))))
    tau = tuple(data.draw(st.permutations(range(n))))
    assert invariants(permute(q, sigma)) == invariants(q)
    assert permute(permute(q, sigma), tau) == permute(q, compose(sigma, tau))


def test_json_round_trip():
    q = QuadForm([[1, Fraction(1, 3)], [Fraction(1, 3), -2]])
    assert QuadForm.from_json(q.to_json()) == q
    with pytest.raises(InputError):
        QuadForm.from_json({"dim": 3, "mat": [[1]]})


def test_homotopy_endpoints_and_dyadic_path():
    q = hyperbolic(1)
    start = direct_sum(q, negate(q))
    end = hyperbolic(2)
    assert homotopy_to_hyperbolic(start, end, 0) == start
    assert homotopy_to_hyperbolic(start, end, 1) == end
    for k in range(17):
        form = homotopy_to_hyperbolic(start, end, Fraction(k, 16))
        assert form.dim == 4


def test_difference_form_homotopy_is_nondegenerate():
    rng = np.random.default_rng(8)
    for _ in range(10):
        q = random_form(rng, int(rng.integers(1, 3)))
        start = difference_form(q)
        for k in range(17):
            homotopy_to_hyperbolic(start, hyperbolic(q.dim), Fraction(k, 16))


def test_homotopy_degenerate_raises():
    # At t = 1/2 the arc point is (3/5, 4/5), so 4 * 3/5 - 3 * 4/5 = 0.
    with pytest.raises(DegenerateForm):
        homotopy_to_hyperbolic(diagonal(4), diagonal(-3), Fraction(1, 2))
    with pytest.raises(InputError):
        homotopy_to_hyperbolic(diagonal(1), diagonal(1), 2)


def test_profile_validation_and_values():
    prof = CutoffProfile()
    assert prof.psi(0.0) == 1.0
    assert prof.psi(3.0) == 0.0 and prof.psi(-3.0) == 0.0
    s = np.linspace(-4, 4, 4001)
    assert np.all(np.abs(prof.psi_prime(s)) <= 1.0)
    assert np.max(np.abs(prof.psi_prime(s))) == pytest.approx(15 / 16, abs=1e-6)
    with pytest.raises(InputError):
        CutoffProfile(1, 2)


def test_cutoff_examples():
    q = diagonal(1, -2)
    assert cutoff_eval(q, np.zeros(2)) == 1.0
    c = cutoff_scales(q)
    assert cutoff_eval(q, [3.0 / (2.0 * c[0]), 0.0]) == 0.0
    assert cutoff_eval(q, [0.99 / (2.0 * c[0]), 0.99 / (4.0 * c[1])]) == 1.0
    assert cutoff_eval(unit(), np.zeros(0)) == 1.0
    with pytest.raises(InputError):
        cutoff_eval(q, [1.0])


def _forms_for_cutoff():
    rng = np.random.default_rng(21)
    return [hyperbolic(1), diagonal(1, -1), diagonal(3, -2)] + [random_form(rng, 3) for _ in range(3)]


@pytest.mark.parametrize("q", _forms_for_cutoff(), ids=repr)
def test_cutoff_support_and_gradient_bound(q):
    rng = np.random.default_rng(q.dim)
    half = cutoff_support_halfwidths(q)
    pts = rng.uniform(-1.5, 1.5, size=(1000, q.dim)) * half
    h = 1e-6
    for u in pts:
        val = cutoff_eval(q, u)
        if np.max(np.abs(cutoff_scales(q) * q.gradient(u))) >= 3.0:
            assert val == 0.0
        fd = np.array([(cutoff_eval(q, u + h * e) - cutoff_eval(q, u - h * e)) / (2 * h)
                       for e in np.eye(q.dim)])
        assert np.allclose(fd, cutoff_gradient(q, u), atol=1e-4)
        assert np.linalg.norm(fd) <= np.linalg.norm(q.gradient(u)) + 1e-4
        assert np.linalg.norm(cutoff_gradient(q, u)) <= 0.5 * np.linalg.norm(q.gradient(u)) + 1e-12
    outside = half * 1.01
    assert cutoff_eval(q, outside) == 0.0


@pytest.mark.parametrize("q", _forms_for_cutoff(), ids=repr)
def test_cutoff_product_and_permutation_laws(q):
    rng = np.random.default_rng(40 + q.dim)
    r = random_form(rng, 2)
    qr = direct_sum(q, r)
    sigma = tuple(rng.permutation(q.dim))
    p = permute(q, sigma)
    for _ in range(200):
        u = rng.normal(scale=1.5, size=q.dim)
        v = rng.normal(scale=1.5, size=2)
        assert abs(cutoff_eval(qr, np.concatenate([u, v])) - cutoff_eval(q, u) * cutoff_eval(r, v)) <= 1e-12
        assert abs(cutoff_eval(p, u) - cutoff_eval(q, u[list(sigma)])) <= 1e-12


def test_components_and_scales_follow_blocks():
    q = direct_sum(hyperbolic(1), diagonal(5), QuadForm([[1, 2], [2, -1]]))
    assert form_components(q) == [[0, 1], [2], [3, 4]]
    c = cutoff_scales(q)
    assert np.array_equal(c[:2], cutoff_scales(hyperbolic(1)))
    assert c[2] == cutoff_scales(diagonal(5))[0]
    assert c[0] == c[1] and c[3] == c[4]


@pytest.mark.parametrize("a", [Fraction(1, 100), 1, 100])
def test_gradient_bound_is_scale_free(a):
    # The bound must hold for steep and flat forms alike.
    q = diagonal(a)
    c = cutoff_scales(q)[0]
    u = np.linspace(-3.2, 3.2, 4001) / (2 * float(a) * c)
    grads = np.array([cutoff_gradient(q, [x])[0] for x in u])
    assert np.all(np.abs(grads) <= 0.5 * np.abs(2 * float(a) * u) + 1e-12)
    assert np.max(np.abs(grads)) > 0
