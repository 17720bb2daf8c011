"""Partition of unity and the quadrature transport solver."""

import math

import numpy as np
import pytest

from hypnf.errors import DecayMarginTooSmall, OriginUndefined
from hypnf.hamiltonians import FlatFunction, Hamiltonian, MonomialBump, \
    flat_combination
from hypnf.homological import (
    CutoffPair,
    make_partition,
    residual_check,
    solve_homological,
)
from hypnf.jets import Jet
from hypnf.linalg import lyapunov_B0


def saddle(lam=1.0):
    return Hamiltonian(Jet(1, 2, {(1, 1): float(lam)}))


@pytest.fixture(scope="module")
def cut():
    b0 = lyapunov_B0(np.array([[1.0]]))
    return make_partition(3, b0=b0)


# ---------------------------------------------------------------- partition
def test_partition_plateaus(cut):
    # |xi|_0 = 3 |x|_0 is outside the out-cone
    assert cut.chi_out([1.0, 3.0]) == 0.0
    assert cut.chi_in([1.0, 3.0]) == 1.0
    # on the expanding axis
    assert cut.chi_out([0.7, 0.0]) == 1.0
    # on the contracting axis
    assert cut.chi_out([0.0, 0.7]) == 0.0


def test_partition_sums_to_one_exactly(cut):
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        rho = rng.uniform(-1.0, 1.0, size=2)
        if not np.any(rho):
            continue
        assert cut.chi_out(rho) + cut.chi_in(rho) == 1.0


def test_partition_homogeneous_exactly(cut):
    rng = np.random.default_rng(1)
    for _ in range(200):
        rho = rng.uniform(-1.0, 1.0, size=2)
        if not np.any(rho):
            continue
        # power-of-two scalings commute exactly with float arithmetic
        for s in (0.25, 0.5, 2.0, 8.0):
            assert cut.chi_out(s * rho) == cut.chi_out(rho)
        # generic scalings are homogeneous to rounding
        s = rng.uniform(0.1, 10.0)
        assert cut.chi_out(s * rho) == pytest.approx(cut.chi_out(rho),
                                                     abs=1e-14)


def test_partition_support_containment(cut):
    rng = np.random.default_rng(2)
    for _ in range(500):
        rho = rng.uniform(-1.0, 1.0, size=2)
        a, b = cut._block_norms(rho)
        if a == 0.0 and b == 0.0:
            continue
        if b >= 2.0 * a:
            assert cut.chi_out(rho) == 0.0
        if a >= 2.0 * b:
            assert cut.chi_in(rho) == 0.0


def test_partition_gradient_matches_fd(cut):
    h = 1e-6
    for rho in ([0.5, 0.4], [0.3, -0.45], [-0.6, 0.5]):
        rho = np.array(rho)
        fd = np.zeros(2)
        for i in range(2):
            dv = np.zeros(2)
            dv[i] = h
            fd[i] = (cut.chi_out(rho + dv) - cut.chi_out(rho - dv)) / (2 * h)
        assert cut.grad_chi_out(rho) == pytest.approx(fd, abs=1e-8)
        assert np.linalg.norm(cut.grad_chi_out(rho)) < 10.0


def test_partition_origin_undefined(cut):
    with pytest.raises(OriginUndefined):
        cut.chi_out([0.0, 0.0])


def test_partition_profile_order_validation():
    with pytest.raises(ValueError):
        make_partition(0)
    assert isinstance(make_partition(1), CutoffPair)


# ------------------------------------------------------------------- solve
def eigen_monomial(a=2, b=4, support=50.0):
    return MonomialBump((a,), (b,), 1.0, support_radius=support,
                        plateau_radius=0.8 * support)


def test_solve_zero_rhs(cut):
    g = MonomialBump((2,), (4,), 0.0, support_radius=1.0)
    res = solve_homological(saddle(), g, cut, [0.2, 0.3], tol=1e-8)
    assert res.value == 0.0


def test_solve_eigen_monomial_closed_form(cut):
    # where the cutoffs are constant along the support of the integrand,
    # the quadrature reproduces g / <a-b, lambda> = -x^2 xi^4 / 2
    H = saddle(1.0)
    g = eigen_monomial()
    tol = 1e-9
    for x, xi in [(1e-3, 0.6), (2e-3, 0.5), (-1e-3, 0.45)]:
        res = solve_homological(H, g, cut, [x, xi], tol=tol)
        closed = -x ** 2 * xi ** 4 / 2.0
        # cutoff-constancy correction is O(x/xi) relative
        assert abs(res.value - closed) <= \
            abs(closed) * 3.0 * abs(x / xi) + 10 * tol


def test_solve_origin_undefined(cut):
    with pytest.raises(OriginUndefined):
        solve_homological(saddle(), eigen_monomial(), cut, [0.0, 0.0])


def test_solve_decay_margin(cut):
    g = eigen_monomial()
    with pytest.raises(DecayMarginTooSmall):
        solve_homological(saddle(), g, cut, [0.1, 0.2], rates=(1.0, 7.0))


def test_solve_self_convergence(cut):
    H = saddle(1.0)
    g = eigen_monomial()
    rho = [0.05, 0.3]
    coarse = solve_homological(H, g, cut, rho, tol=1e-6)
    fine = solve_homological(H, g, cut, rho, tol=5e-7)
    assert abs(coarse.value - fine.value) <= \
        max(coarse.error_estimate, 1e-14) + fine.error_estimate


def test_solve_linearity(cut):
    H = saddle(1.0)
    g1 = MonomialBump((2,), (4,), 1.0, support_radius=10.0)
    g2 = MonomialBump((1,), (3,), 1.0, support_radius=10.0)
    alpha, beta = 1.7, -0.6
    combo = flat_combination([alpha, beta], [g1, g2])
    for rho in ([0.04, 0.3], [0.2, 0.25]):
        v1 = solve_homological(H, g1, cut, rho, tol=1e-10).value
        v2 = solve_homological(H, g2, cut, rho, tol=1e-10).value
        vc = solve_homological(H, combo, cut, rho, tol=1e-10).value
        assert vc == pytest.approx(alpha * v1 + beta * v2, abs=1e-9)


def test_solve_support_propagation(cut):
    # rhs supported strictly inside the pure out-cone: the solution
    # vanishes off the outgoing region
    H = saddle(1.0)

    def g_fn(rho):
        a, b = cut._block_norms(rho)
        if a == 0.0 or b / a > 0.4:  # vanish outside a thin out-cone
            return 0.0
        r2 = float(rho @ rho)
        window = max(0.0, 1.0 - r2 / 0.25) ** 4
        return rho[0] ** 3 * window

    g = FlatFunction(1, g_fn, n_flat=3, c_flat=1.0, support_radius=0.5)
    for rho in ([0.05, 0.3], [-0.04, 0.25], [0.02, 0.3]):
        # points with |xi|_0 >= 2 |x|_0, i.e. off the outgoing region
        assert cut._block_norms(rho)[1] >= 2 * cut._block_norms(rho)[0]
        res = solve_homological(H, g, cut, rho, tol=1e-9)
        assert abs(res.value) < 1e-9


def test_solve_flatness_slope(cut):
    # log |f| decays along rays at least at the conservative slope
    H = saddle(1.0)
    g = eigen_monomial()  # N_flat = 6
    n_flat, lam_n, lam_1 = 6, 1.0, 1.0
    direction = np.array([0.4, 1.0])
    direction /= np.linalg.norm(direction)
    radii = [0.3, 0.15, 0.075]
    logs = []
    for r in radii:
        val = solve_homological(H, g, cut, r * direction, tol=1e-12).value
        assert val != 0.0
        logs.append(math.log(abs(val)))
    slope = np.polyfit(np.log(radii), logs, 1)[0]
    assert slope >= n_flat - 2 * 1 * (lam_n / lam_1) - 1


def test_solve_truncation_honesty(cut):
    # on the expanding manifold the tail bound is reported; doubling the
    # horizon changes the value by less than that bound
    H = saddle(1.0)
    g = MonomialBump((6,), (0,), 1.0, support_radius=10.0,
                     plateau_radius=8.0)
    rho = [0.25, 0.0]
    res = solve_homological(H, g, cut, rho, tol=1e-7)
    assert res.tail_bound > 0.0
    long = solve_homological(H, g, cut, rho, tol=1e-9)
    assert abs(long.value - res.value) <= res.tail_bound + 1e-12


def test_solve_reports_windows(cut):
    res = solve_homological(saddle(), eigen_monomial(), cut, [0.01, 0.4],
                            tol=1e-8)
    assert res.windows["backward"]["reason"] == "off-cone"
    assert res.windows["forward"]["reason"] in ("cone", "support")
    assert float(res) == res.value


# ----------------------------------------------------------------- residual
def test_residual_eigen_monomial(cut):
    H = saddle(1.0)
    g = eigen_monomial()
    rng = np.random.default_rng(5)
    pts = []
    while len(pts) < 8:
        rho = rng.uniform(-0.5, 0.5, size=2)
        if np.linalg.norm(rho) > 0.15:
            pts.append(rho)

    def f_eval(rho):
        return solve_homological(H, g, cut, rho, tol=1e-9).value

    report = residual_check(H, f_eval, g, pts, h=1e-2)
    assert report.max_residual < 1e-5
    assert len(report.table()) == len(pts)


def test_residual_detects_planted_error(cut):
    H = saddle(1.0)
    g = eigen_monomial()
    rho = np.array([0.1, 0.3])
    eps = 1e-3

    def f_bad(state):
        return solve_homological(H, g, cut, state, tol=1e-9).value \
            + eps * state[0]

    report = residual_check(H, f_bad, g, [rho], h=1e-2)
    # d/dt x = x along the flow, so the planted error shows as ~eps * x
    assert report.max_residual > 0.5 * eps * abs(rho[0])


def test_residual_zero_case(cut):
    H = saddle(1.0)
    g = MonomialBump((2,), (4,), 0.0, support_radius=1.0)
    report = residual_check(H, lambda rho: 1.25, g, [[0.2, 0.1]], h=1e-2)
    assert report.max_residual == 0.0
