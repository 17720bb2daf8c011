"""Jet algebra, brackets, resonance scan, and normalization tests.

Derived expectations are computed by independent oracles inside this
module: brute-force lattice enumeration for resonances, numerically
integrated flows for Lie transforms, and a directly assembled linear
system for the normalization coefficients.
"""

import itertools
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from hypnf.errors import (
    DimensionMismatch,
    GeneratorTooLowDegree,
    NegativeAction,
    NonActionMonomial,
    NotWilliamson,
    ResonanceObstruction,
)
from hypnf.jets import (
    Jet,
    action_form,
    birkhoff_normalize,
    hyperbolic_action_angle,
    lie_transform,
    loxodromic_complex_matrix,
    poisson,
    quadratic_block_structure,
    resonance_scan,
)


def random_jet(rng, n, order, exact=False, max_terms=12):
    terms = {}
    for _ in range(rng.randrange(1, max_terms)):
        e = tuple(rng.randrange(0, order + 1) for _ in range(2 * n))
        if sum(e) > order:
            continue
        if exact:
            terms[e] = Fraction(rng.randrange(-9, 10), rng.randrange(1, 7))
        else:
            terms[e] = rng.uniform(-2, 2)
    return Jet(n, order, terms)


# ---------------------------------------------------------------- ring axioms
def test_ring_axioms_exact():
    rng = random.Random(7)
    for _ in range(25):
        n = rng.choice([1, 2])
        order = rng.choice([3, 4, 5])
        a = random_jet(rng, n, order, exact=True)
        b = random_jet(rng, n, order, exact=True)
        c = random_jet(rng, n, order, exact=True)
        assert (a + b) + c == a + (b + c)
        assert a + b == b + a
        assert (a * b) * c == a * (b * c)
        assert a * (b + c) == a * b + a * c
        assert a * b == b * a


def test_truncation_is_graded():
    # degree-k part of a product depends only on degrees summing to k
    rng = random.Random(3)
    a = random_jet(rng, 2, 5, exact=True)
    b = random_jet(rng, 2, 5, exact=True)
    full = (a.truncated(10) * b.truncated(10)).truncated(5)
    assert full == a * b


def test_zero_terms_never_stored():
    j = Jet(1, 4, {(1, 1): 1.0, (2, 0): 0.0})
    assert (2, 0) not in j.terms
    k = j - j
    assert k.terms == {}


# ---------------------------------------------------------------- poisson
def test_poisson_canonical_pairs():
    x = Jet.variable(1, 3, 0)
    xi = Jet.variable(1, 3, 1)
    # sign convention: {f,g} = d_xi f d_x g - d_x f d_xi g, so {xi, x} = 1
    assert poisson(xi, x).terms == {(0, 0): 1}
    assert poisson(x, xi).terms == {(0, 0): -1}


def test_poisson_is_hamiltonian_derivative():
    # {x xi, x} = x, i.e. H_{x xi} = x d_x - xi d_xi
    p = Jet(1, 3, {(1, 1): 1})
    x = Jet.variable(1, 3, 0)
    xi = Jet.variable(1, 3, 1)
    assert poisson(p, x).terms == {(1, 0): 1}
    assert poisson(p, xi).terms == {(0, 1): -1}


@pytest.mark.parametrize("a,b,lam", [(3, 0, 1.0), (2, 4, 1.0), (1, 2, 2.5)])
def test_poisson_eigenmonomials(a, b, lam):
    p2 = Jet(1, 8, {(1, 1): lam})
    mono = Jet(1, 8, {(a, b): 1.0})
    out = poisson(p2, mono)
    expected = lam * (a - b)
    if expected == 0:
        assert out.terms == {}
    else:
        assert out.terms == {(a, b): pytest.approx(expected)}


def test_poisson_antisymmetry_and_jacobi_exact():
    rng = random.Random(11)
    for _ in range(15):
        n = rng.choice([1, 2])
        # degree <= 4 jets held at an order where no bracket truncates,
        # so the identities hold as exact polynomial statements
        f = random_jet(rng, n, 4, exact=True).truncated(12)
        g = random_jet(rng, n, 4, exact=True).truncated(12)
        h = random_jet(rng, n, 4, exact=True).truncated(12)
        assert poisson(f, g) == -poisson(g, f)
        jac = (poisson(f, poisson(g, h)) + poisson(g, poisson(h, f))
               + poisson(h, poisson(f, g)))
        assert jac.terms == {}


def test_poisson_leibniz_exact():
    rng = random.Random(13)
    for _ in range(10):
        # held at a non-truncating order so the identity is exact
        f = random_jet(rng, 1, 6, exact=True).truncated(14)
        g = random_jet(rng, 1, 3, exact=True).truncated(14)
        h = random_jet(rng, 1, 3, exact=True).truncated(14)
        lhs = poisson(f, g * h)
        rhs = poisson(f, g) * h + g * poisson(f, h)
        assert lhs == rhs


def test_poisson_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        poisson(Jet.variable(1, 3, 0), Jet.variable(2, 3, 0))


# ---------------------------------------------------------------- resonance
def brute_force_resonances(lambdas, K, tol):
    hits = []
    n = len(lambdas)
    for k in itertools.product(range(-K, K + 1), repeat=n):
        o = sum(abs(v) for v in k)
        if o == 0 or o > K:
            continue
        if abs(sum(kv * lv for kv, lv in zip(k, lambdas))) < tol:
            hits.append(k)
    return set(hits)


def test_resonance_scan_examples():
    assert not resonance_scan((1.0, math.sqrt(2.0)), 10).resonances
    rep = resonance_scan((1.0, 2.0), 3)
    assert (2, -1) in rep.resonances
    assert (-2, 1) in rep.resonances
    assert not resonance_scan((1.0,), 12).resonances


def test_resonance_scan_matches_brute_force():
    rng = random.Random(5)
    for _ in range(8):
        n = rng.choice([1, 2, 3])
        lam = tuple(rng.uniform(0.5, 3.0) for _ in range(n))
        K = rng.choice([4, 6, 8])
        rep = resonance_scan(lam, K)
        assert set(rep.resonances) == brute_force_resonances(lam, K, rep.res_tol)


def test_resonance_scan_exact_mode():
    rep = resonance_scan((Fraction(1), Fraction(5, 2)), 6)
    assert not rep.resonances
    rep = resonance_scan((Fraction(1), Fraction(5, 2)), 7)
    assert rep.resonances == ((-5, 2), (5, -2))


def test_resonance_scan_deterministic_order():
    rep = resonance_scan((1.0, 1.0), 3)
    orders = [sum(abs(v) for v in k) for k in rep.resonances]
    assert orders == sorted(orders)


# ---------------------------------------------------------------- lie series
def test_lie_transform_constant_unchanged():
    f = Jet(1, 5, {(2, 1): 0.7})
    g = Jet.constant(3.25, 1, 5)
    assert lie_transform(f, g) == g


def test_lie_transform_low_degree_rejected():
    f = Jet(1, 4, {(1, 0): 1.0, (2, 1): 1.0})
    with pytest.raises(GeneratorTooLowDegree):
        lie_transform(f, Jet.variable(1, 4, 0))


def test_lie_transform_hand_example():
    # f = eps x^2 xi, g = x xi, order 3: g + eps {f, g} = x xi - eps x^2 xi
    eps = 0.01
    f = Jet(1, 3, {(2, 1): eps})
    g = Jet(1, 3, {(1, 1): 1.0})
    out = lie_transform(f, g)
    assert out.terms == {(1, 1): pytest.approx(1.0), (2, 1): pytest.approx(-eps)}


def hamiltonian_flow_map(f, point, t=1.0, tol=1e-13):
    """Oracle: integrate the Hamiltonian field of the jet f numerically."""
    n = f.n
    grads = [f.diff(i) for i in range(2 * n)]

    def rhs(_, rho):
        gx = [g.evaluate(rho) for g in grads[:n]]
        gxi = [g.evaluate(rho) for g in grads[n:]]
        return np.concatenate([gxi, [-v for v in gx]])

    sol = solve_ivp(rhs, (0.0, t), np.asarray(point, dtype=float),
                    rtol=tol, atol=tol, method="DOP853")
    assert sol.success
    return sol.y[:, -1]


def test_lie_transform_matches_integrated_flow():
    # value oracle: |lie_transform(f, g)(rho) - g(flow_1(rho))| = O(rho^{N+1})
    rng = random.Random(19)
    f = Jet(1, 5, {(2, 1): 0.3, (0, 3): -0.2})
    g = Jet(1, 5, {(1, 1): 1.0, (2, 0): 0.5})
    transformed = lie_transform(f, g)
    base = np.array([0.7, -0.4])
    errs = []
    for eps in (1e-1, 5e-2, 2.5e-2):
        rho = eps * base
        direct = g.evaluate(hamiltonian_flow_map(f, rho))
        errs.append(abs(transformed.evaluate(rho) - direct))
    # successive ratios should be ~2^(order+1) = 64; accept >= 30
    assert errs[0] < 1e-6
    assert errs[0] / max(errs[1], 1e-16) > 30
    assert errs[1] / max(errs[2], 1e-16) > 30
    del rng


def test_lie_transform_preserves_canonical_brackets():
    # transported coordinates keep {X_i, X_j} through the reliable order
    order = 5
    n = 2
    f = Jet(n, order, {(1, 1, 1, 0): 0.2, (0, 2, 0, 1): -0.15})
    coords = [Jet.variable(n, order, i) for i in range(2 * n)]
    moved = [lie_transform(f, c) for c in coords]
    J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    for i in range(2 * n):
        for j in range(2 * n):
            br = poisson(moved[i], moved[j])
            expect = -J[i, j]  # {rho_i, rho_j} = -J_ij under this convention
            for e, c in br.terms.items():
                if sum(e) == 0:
                    assert abs(c - expect) < 1e-12
                elif sum(e) <= order - 1:
                    assert abs(c) < 1e-12


# ---------------------------------------------------------------- actions
def test_action_form_examples():
    q = Jet(2, 4, {(1, 0, 1, 0): 3.0, (1, 1, 1, 1): 2.0})
    ap = action_form(q)
    assert ap.as_dict() == {(1, 0): 3.0, (1, 1): 2.0}
    bad = Jet(2, 4, {(1, 0, 0, 1): 1.0})
    with pytest.raises(NonActionMonomial):
        action_form(bad)


def test_action_form_round_trip():
    q = Jet(2, 6, {(1, 0, 1, 0): 3.0, (1, 1, 1, 1): 2.0, (2, 0, 2, 0): -0.5})
    assert action_form(q).to_jet(6) == q


def test_hyperbolic_action_angle_values():
    pt = hyperbolic_action_angle([1.0], [0.5], [0.0])
    assert pt == pytest.approx([1.0, 0.0])
    pt = hyperbolic_action_angle([1.0], [0.5], [math.log(2.0)])
    assert pt == pytest.approx([1.25, 0.75])
    assert pt[1] ** 2 - pt[0] ** 2 == pytest.approx(-1.0)
    with pytest.raises(NegativeAction):
        hyperbolic_action_angle([1.0], [-0.1], [0.0])


def test_hyperbolic_action_angle_jacobian():
    # d xi ^ dx pulls back to d iota ^ d phi: Jacobian determinant is 1
    lam = np.array([1.3])
    h = 1e-4
    for iota, phi in [(0.4, 0.3), (0.9, -1.1), (0.2, 2.0)]:
        def chart(v):
            return hyperbolic_action_angle(lam, [v[0]], [v[1]])
        base = np.array([iota, phi])
        cols = []
        for k in range(2):
            dv = np.zeros(2)
            dv[k] = h
            # 4th-order central stencil keeps the check honest at 1e-10
            cols.append((-chart(base + 2 * dv) + 8 * chart(base + dv)
                         - 8 * chart(base - dv) + chart(base - 2 * dv))
                        / (12 * h))
        jac = np.column_stack(cols)
        assert abs(np.linalg.det(jac) - 1.0) < 1e-10


# ------------------------------------------------------- block structure
def test_quadratic_block_structure():
    p2 = Jet(1, 2, {(1, 1): 2.0})
    lam, ell, m, blocks = quadratic_block_structure(p2)
    assert (lam, ell, m) == ((2.0,), 1, 0)

    plox = Jet(2, 2, {(1, 0, 1, 0): 1.0, (0, 1, 0, 1): 1.0,
                      (1, 0, 0, 1): 3.0, (0, 1, 1, 0): -3.0})
    lam, ell, m, blocks = quadratic_block_structure(plox)
    assert ell == 0 and m == 1
    assert lam == (1 + 3j, 1 - 3j)
    assert blocks == ((1.0, 3.0),)

    with pytest.raises(NotWilliamson):
        quadratic_block_structure(Jet(1, 2, {(2, 0): 1.0}))
    with pytest.raises(NotWilliamson):
        quadratic_block_structure(Jet(2, 2, {(1, 0, 1, 0): 1.0,
                                             (0, 1, 0, 1): 2.0,
                                             (1, 0, 0, 1): 1.0}))


def test_loxodromic_matrix_is_complex_symplectic():
    for ell, m in [(0, 1), (1, 1), (0, 2)]:
        n = ell + 2 * m
        C, Cinv = loxodromic_complex_matrix(ell, m)
        J = np.block([[np.zeros((n, n)), np.eye(n)],
                      [-np.eye(n), np.zeros((n, n))]])
        assert np.max(np.abs(C.T @ J @ C - J)) < 1e-14
        assert np.max(np.abs(C @ Cinv - np.eye(2 * n))) < 1e-14


# ------------------------------------------------------------ normalization
def nonaction_coefficients(jet):
    n = jet.n
    return {e: c for e, c in jet.terms.items() if e[:n] != e[n:]}


def apply_generators(p, result):
    out = p.truncated(result.order)
    if result.mode == "complexified":
        _, Cinv = result.complex_map
        out = out.map_coefficients(complex).compose_linear(Cinv)
    for g in result.generators:
        if g.terms:
            out = lie_transform(g, out)
    return out


def test_birkhoff_cubic_saddle():
    # p = x xi + x^3: the cubic has no resonant monomials, q0 = iota
    p = Jet(1, 3, {(1, 1): Fraction(1), (3, 0): Fraction(1)})
    res = birkhoff_normalize(p, 3)
    assert res.q0.as_dict() == {(1,): Fraction(1)}
    f3 = res.generators[0]
    assert f3.terms == {(3, 0): Fraction(1, 3)}
    composed = apply_generators(p, res)
    assert nonaction_coefficients(composed) == {}


def test_birkhoff_already_normal():
    p = Jet(1, 4, {(1, 1): 1.0})
    res = birkhoff_normalize(p, 4)
    assert all(not g.terms for g in res.generators)
    assert res.q0.as_dict() == {(1,): 1.0}


def direct_normal_form_oracle(p, order, lambdas):
    """Independent solve: peel degrees with explicitly assembled updates.

    Works on a copy of the coefficient dictionary, building each
    generator by solving its diagonal linear system and applying the
    exponential via the bracket only (no reuse of birkhoff_normalize).
    """
    n = p.n
    current = p.truncated(order)
    for k in range(3, order + 1):
        rows = [(e, c) for e, c in current.terms.items()
                if sum(e) == k and e[:n] != e[n:]]
        if not rows:
            continue
        gen = {}
        for e, c in rows:
            div = sum((a - b) * l for a, b, l in
                      zip(e[:n], e[n:], lambdas))
            gen[e] = c / div
        fk = Jet(n, order, gen)
        # exp(ad_f) applied manually
        acc = current
        term = current
        fact = 1.0
        for j in range(1, order + 2):
            term = poisson(fk, term)
            if not term.terms:
                break
            fact *= j
            acc = acc + term * (1.0 / fact)
        current = acc
    return {e: c for e, c in current.terms.items() if e[:n] == e[n:]}


def test_birkhoff_two_dof_matches_direct_solve():
    rng = np.random.default_rng(2)
    lam = (1.0, math.sqrt(2.0))
    order = 4
    terms = {(1, 0, 1, 0): lam[0], (0, 1, 0, 1): lam[1]}
    for e in itertools.product(range(4), repeat=4):
        if sum(e) == 3:
            terms[e] = float(rng.uniform(-0.5, 0.5))
    p = Jet(2, order, terms)
    res = birkhoff_normalize(p, order)
    composed = apply_generators(p, res)
    scale = max(abs(c) for c in p.terms.values())
    for e, c in nonaction_coefficients(composed).items():
        assert abs(c) < 1e-12 * scale
    oracle = direct_normal_form_oracle(p, order, lam)
    mine = res.q0.to_jet(order).terms
    for e in set(oracle) | set(mine):
        assert abs(oracle.get(e, 0.0) - mine.get(e, 0.0)) < 1e-10


def test_birkhoff_resonant_input_rejected():
    p = Jet(2, 3, {(1, 0, 1, 0): 1.0, (0, 1, 0, 1): 2.0,
                   (2, 0, 0, 1): 0.3})
    with pytest.raises(ResonanceObstruction) as err:
        birkhoff_normalize(p, 3)
    assert err.value.k in ((2, -1), (-2, 1))


def test_birkhoff_exact_mode_is_exact():
    p = Jet(1, 5, {(1, 1): Fraction(1), (3, 0): Fraction(1, 2),
                   (0, 4): Fraction(-1, 3), (2, 1): Fraction(1, 5)})
    res = birkhoff_normalize(p, 5)
    composed = apply_generators(p, res)
    assert nonaction_coefficients(composed) == {}
    assert all(isinstance(c, Fraction)
               for g in res.generators for c in g.terms.values())
    # float mode agrees
    resf = birkhoff_normalize(p.to_float(), 5)
    exact_q0 = {m: float(c) for m, c in res.q0.as_dict().items()}
    float_q0 = resf.q0.as_dict()
    for m in set(exact_q0) | set(float_q0):
        assert float_q0.get(m, 0.0) == pytest.approx(exact_q0.get(m, 0.0),
                                                     rel=1e-12, abs=1e-12)


def test_birkhoff_generators_homogeneous():
    p = Jet(1, 5, {(1, 1): 1.0, (3, 0): 0.2, (1, 3): -0.1})
    res = birkhoff_normalize(p, 5)
    for k, g in zip(range(3, 6), res.generators):
        degs = {sum(e) for e in g.terms}
        assert degs <= {k}


def test_birkhoff_loxodromic_real_generators():
    # 2-DOF loxodromic block with a generic cubic perturbation
    terms = {(1, 0, 1, 0): 1.0, (0, 1, 0, 1): 1.0,
             (1, 0, 0, 1): 0.7, (0, 1, 1, 0): -0.7,
             (3, 0, 0, 0): 0.05, (1, 1, 0, 1): -0.04}
    p = Jet(2, 3, terms)
    res = birkhoff_normalize(p, 3)
    assert res.mode == "complexified"
    composed = apply_generators(p, res)
    # non-action coefficients vanish in the complexified chart
    for e, c in nonaction_coefficients(composed).items():
        assert abs(c) < 1e-10
    # mapped-back generators are real jets reproducing the same transform
    for g in res.generators_real:
        assert all(not isinstance(c, complex) for c in g.terms.values())
    # and q0 expands to a real jet matching the composed normal form
    q0_jet = res.q0_jet()
    C, _ = res.complex_map
    back = composed.compose_linear(C).real_part(tol=1e-9)
    diff = q0_jet - back
    assert all(abs(c) < 1e-10 for c in diff.terms.values())
