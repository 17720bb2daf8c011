"""Quadrature solver for the transport equation H_p f = g on flat data.

The solution is assembled from two flow integrals: the outgoing piece
integrates chi_out * g backward in time, the incoming piece chi_in * g
forward, with chi_out + chi_in = 1 a homogeneous degree-0 partition of
unity supported in the conjugate cones.  Improper tails are truncated
where an explicit flatness certificate bounds them below the requested
tolerance; cone and support exits truncate exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import (
    DecayMarginTooSmall,
    NoCrossingWithinHorizon,
    OriginUndefined,
)
from .flow import integrate
from .hamiltonians import FlatFunction, MonomialBump, SmoothStep, \
    flat_combination  # noqa: F401  (re-exported: flat data lives here too)
from .linalg import as_coords

DEFAULT_CONE_FACTOR = 2.0


class CutoffPair:
    """Homogeneous degree-0 partition chi_out + chi_in = 1 on the cones.

    chi_out equals 1 where |xi|_0 <= |x|_0 / cone_factor, 0 where
    |xi|_0 >= cone_factor |x|_0, and follows a polynomial smoothstep in
    log(|xi|_0 / |x|_0) in between, so the plateaus and the support
    containment are exact by construction.  chi_in is defined as
    1 - chi_out.
    """

    def __init__(self, profile_order=3, b0=None, cone_factor=DEFAULT_CONE_FACTOR):
        if cone_factor <= 1.0:
            raise ValueError("cone factor must exceed 1")
        self.profile_order = int(profile_order)
        self.cone_factor = float(cone_factor)
        self.b0 = b0
        self.step = SmoothStep(profile_order)
        self._log_span = 2.0 * math.log(self.cone_factor)

    def _block_norms(self, rho):
        rho = np.asarray(rho, dtype=float)
        n = rho.size // 2
        if self.b0 is not None:
            return self.b0.norm(rho[:n]), self.b0.norm(rho[n:])
        return float(np.linalg.norm(rho[:n])), float(np.linalg.norm(rho[n:]))

    def _u(self, a, b):
        """Profile coordinate: 0 at ratio 1/cf, 1 at ratio cf."""
        if a == 0.0:
            return 1.0
        if b == 0.0:
            return 0.0
        return (math.log(b / a) + math.log(self.cone_factor)) / self._log_span

    def chi_out(self, rho):
        a, b = self._block_norms(rho)
        if a == 0.0 and b == 0.0:
            raise OriginUndefined("cutoffs are defined away from the origin")
        return 1.0 - self.step.value(self._u(a, b))

    def chi_in(self, rho):
        return 1.0 - self.chi_out(rho)

    def grad_chi_out(self, rho):
        rho = np.asarray(rho, dtype=float)
        n = rho.size // 2
        a, b = self._block_norms(rho)
        if a == 0.0 and b == 0.0:
            raise OriginUndefined("cutoffs are defined away from the origin")
        u = self._u(a, b)
        ds = self.step.deriv(u)
        if ds == 0.0:
            return np.zeros_like(rho)
        B = self.b0.b0 if self.b0 is not None else np.eye(n)
        grad_u = np.concatenate([
            -(B @ rho[:n]) / (a * a),
            (B @ rho[n:]) / (b * b),
        ]) / self._log_span
        return -ds * grad_u

    def grad_chi_in(self, rho):
        return -self.grad_chi_out(rho)


def make_partition(profile_order=3, b0=None,
                   cone_factor=DEFAULT_CONE_FACTOR):
    """Build the smooth cone partition of unity.

    Parameters
    ----------
    profile_order : int
        Smoothness order of the transition profile (>= 1).
    b0 : AnisotropicNorm, optional
        Block norm used for the cone ratio; euclidean when omitted.
    """
    if profile_order < 1:
        raise ValueError("profile order must be >= 1")
    return CutoffPair(profile_order=profile_order, b0=b0,
                      cone_factor=cone_factor)


# --------------------------------------------------------------- solve
@dataclass
class HomologicalResult:
    """Value of f at one point plus the error budget of its quadratures."""

    value: float
    out_value: float
    in_value: float
    panel_error: float
    tail_bound: float
    windows: dict = field(default_factory=dict)
    reentry_flag: bool = False
    margin: float = 0.0

    @property
    def error_estimate(self):
        return self.panel_error + self.tail_bound

    def __float__(self):
        return float(self.value)


def _window(H, rho, sign, cut, g, tail_radius, horizon, flow_tol,
            on_manifold):
    """Find the truncation window for one flow direction.

    Off the invariant manifolds the cone ratio is monotone along the
    flow, so the integrand dies exactly at the cone exit (or earlier at
    the support exit of g); both are reachable within the horizon and
    truncate without error.  On the manifold itself the orbit decays
    monotonically into the origin and the window is cut where the
    flatness certificate bounds the remaining tail.
    """
    cf = cut.cone_factor
    r_support = g.support_radius

    def cone_exit(_, rho_t):
        a, b = cut._block_norms(rho_t)
        return (b - cf * a) if sign < 0 else (b - a / cf)

    def support_exit(_, rho_t):
        return float(rho_t @ rho_t) - (1.02 * r_support) ** 2

    def tail_entry(_, rho_t):
        return float(rho_t @ rho_t) - tail_radius ** 2

    def edge_hi(_, rho_t):
        a, b = cut._block_norms(rho_t)
        return b - cf * a

    def edge_lo(_, rho_t):
        a, b = cut._block_norms(rho_t)
        return b - a / cf

    events = []
    labels = []
    if on_manifold:
        # cone exit never comes; the certificate tail is the stop
        if float(rho @ rho) <= tail_radius ** 2:
            return None, 0.0, "tail", []
        tail_entry.terminal = True
        events.append(tail_entry)
        labels.append("tail")
    else:
        cone_exit.terminal = True
        events.append(cone_exit)
        labels.append("cone")
    if math.isfinite(r_support):
        support_exit.terminal = True
        events.append(support_exit)
        labels.append("support")
    edge_hi.terminal = False
    edge_lo.terminal = False
    events = events + [edge_hi, edge_lo]

    traj = integrate(H, rho, (0.0, sign * horizon), tol=flow_tol,
                     events=events)
    t_events = traj.meta["t_events"]
    stops = [(abs(t_events[i][0]), labels[i])
             for i in range(len(labels)) if t_events[i]]
    if not stops:
        raise NoCrossingWithinHorizon(
            "integrand still alive at the quadrature horizon",
            horizon=horizon)
    t_stop, reason = min(stops, key=lambda s: s[0])
    breaks = sorted({abs(t) for te in t_events[-2:] for t in te
                     if 0.0 < abs(t) < t_stop})
    return traj, t_stop, reason, breaks


def _tail_bound(g, state, margin):
    return g.C_flat * float(np.linalg.norm(state)) ** g.N_flat / margin


def solve_homological(H, g, cut, rho, tol=1e-7, rates=None, horizon=None,
                      flow_tol=None, quad_eps_abs=None, quad_eps_rel=None,
                      reentry_check=False):
    """Evaluate the transport solution f at one point by quadrature.

    f(rho) integrates chi_out*g backward and chi_in*g forward along the
    flow of H; the two improper integrals are truncated where the
    integrand is exactly zero (cone or support exit) or where the
    flatness certificate of ``g`` bounds the remaining tail below the
    budget.  The returned object carries the quadrature panel error and
    the tail bound; their sum is the reported error estimate.

    H is assumed adapted to the invariant manifolds (every jet monomial
    mixes x and xi factors), which makes the cone ratio monotone along
    the flow; that monotonicity justifies both the off-cone shortcuts
    and the exact cone-exit truncation.

    Parameters
    ----------
    rates : (float, float), optional
        ``(lambda_min, slack)`` contraction data; defaults to the
        linearized rate of H and zero slack.

    Raises
    ------
    DecayMarginTooSmall
        If N_flat * lambda_min - slack <= 0.
    OriginUndefined
    """
    rho = as_coords(rho, H.n)
    if not np.any(rho):
        raise OriginUndefined("transport solution undefined at the origin")
    lam1, slack = rates if rates is not None else \
        (H.min_expansion_rate(), 0.0)
    margin = g.N_flat * lam1 - slack
    if margin <= 0.0:
        raise DecayMarginTooSmall(
            f"flatness margin N_flat*lambda1 - slack = {margin:.3e} <= 0")
    if horizon is None:
        horizon = 50.0 / lam1
    if flow_tol is None:
        flow_tol = min(1e-12, tol * 1e-3)
    eps_abs = quad_eps_abs if quad_eps_abs is not None else tol / 4.0
    eps_rel = quad_eps_rel if quad_eps_rel is not None else 1e-10
    tail_budget = tol / 4.0
    tail_radius = (tail_budget * margin / max(g.C_flat, 1e-300)) \
        ** (1.0 / g.N_flat)

    a0, b0 = cut._block_norms(rho)
    ratio = math.inf if a0 == 0.0 else b0 / a0
    cf = cut.cone_factor
    flat_tol = 1e-12

    out_val = in_val = 0.0
    panel = tail = 0.0
    windows = {}
    reentry = False

    def run_piece(sign, chi, on_manifold):
        nonlocal panel, tail, reentry
        traj, t_stop, reason, breaks = _window(
            H, rho, sign, cut, g, tail_radius, horizon, flow_tol,
            on_manifold=on_manifold)
        windows[("backward" if sign < 0 else "forward")] = {
            "t_stop": float(t_stop), "reason": reason,
            "breakpoints": [float(b) for b in breaks],
        }
        if traj is None:
            tail += _tail_bound(g, rho, margin)
            return 0.0

        def integrand(t):
            state = traj.state_at(sign * t)
            return chi(state) * g.value(state)

        val, err = quad(integrand, 0.0, t_stop,
                        points=breaks or None, limit=200,
                        epsabs=eps_abs, epsrel=eps_rel)
        panel += abs(err)
        if reason == "tail":
            tail += _tail_bound(g, traj.state_at(sign * t_stop), margin)
        if reentry_check and reason in ("cone", "support"):
            probe = integrate(H, traj.state_at(sign * t_stop),
                              (0.0, sign * min(1.0 / lam1, horizon - t_stop)),
                              tol=flow_tol)
            for t in np.linspace(0.05, 1.0, 8) * (probe.t1 - probe.t0):
                state = probe.state_at(probe.t0 + t)
                if abs(chi(state) * g.value(state)) > tol:
                    reentry = True
                    break
        return val

    # backward piece vanishes identically off the outgoing cone, forward
    # piece off the incoming cone (monotone ratio under the flow)
    if ratio < cf:
        out_val = run_piece(-1.0, cut.chi_out, on_manifold=ratio < flat_tol)
    else:
        windows["backward"] = {"t_stop": 0.0, "reason": "off-cone",
                               "breakpoints": []}
    if ratio > 1.0 / cf:
        in_val = -run_piece(+1.0, cut.chi_in,
                            on_manifold=ratio > 1.0 / flat_tol)
    else:
        windows["forward"] = {"t_stop": 0.0, "reason": "off-cone",
                              "breakpoints": []}

    return HomologicalResult(
        value=out_val + in_val,
        out_value=out_val,
        in_value=in_val,
        panel_error=panel,
        tail_bound=tail,
        windows=windows,
        reentry_flag=reentry,
        margin=margin,
    )


# ------------------------------------------------------------ verification
@dataclass
class ResidualReport:
    max_residual: float
    rows: list

    def table(self):
        return [dict(r) for r in self.rows]


def residual_check(H, f_eval, g, points, h=1e-2, flow_tol=1e-12):
    """Compare the flow derivative of f with g at sample points.

    The derivative d/dt f(exp(t H_p) rho) at t=0 is taken by centered
    differences of step ``h`` along the numerically integrated flow.
    """
    rows = []
    worst = 0.0
    for rho in points:
        rho = as_coords(rho, H.n)
        fwd = integrate(H, rho, (0.0, h), tol=flow_tol).state_at(h)
        bwd = integrate(H, rho, (0.0, -h), tol=flow_tol).state_at(-h)
        deriv = (f_eval(fwd) - f_eval(bwd)) / (2.0 * h)
        target = g.value(rho) if hasattr(g, "value") else float(g(rho))
        resid = abs(deriv - target)
        worst = max(worst, resid)
        rows.append({
            "point": [float(v) for v in rho],
            "flow_derivative": float(deriv),
            "rhs": float(target),
            "residual": float(resid),
        })
    return ResidualReport(max_residual=worst, rows=rows)
