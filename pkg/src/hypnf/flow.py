"""Numerical Hamiltonian flow near the saddle.

Adaptive high-order integration with dense output, outgoing/incoming cone
regions measured in the anisotropic block norms, first hitting times of
the cone and ball boundaries, variational (tangent) flow, and empirical
bracketing of the exponential growth/decay rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    DimensionMismatch,
    EnergyDriftExceeded,
    InsufficientSamples,
    LeftDomain,
    NoCrossingWithinHorizon,
    OriginUndefined,
    StepSizeCollapse,
)
from .linalg import AnisotropicNorm, as_coords

DEFAULT_CONE_FACTOR = 2.0
DEFAULT_SYMP_TOL = 1e-8
DEFAULT_FLAT_TOL = 1e-12


@dataclass(frozen=True)
class RegionSpec:
    """Outgoing/incoming cone regions inside a ball of radius delta.

    Membership is measured with the anisotropic norm on each block:
    outgoing means |xi|_0 < cone_factor |x|_0 inside the ball, incoming
    the reverse.  The cone factor is fixed at 2 by the construction and
    configurable only for experiments.
    """

    delta: float
    b0: AnisotropicNorm
    cone_factor: float = DEFAULT_CONE_FACTOR

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def n(self):
        return self.b0.n

    def block_norms(self, rho):
        rho = as_coords(rho, self.n)
        return self.b0.norm(rho[: self.n]), self.b0.norm(rho[self.n:])

    def membership(self, rho):
        a, b = self.block_norms(rho)
        inside = a * a + b * b < self.delta ** 2
        if not inside:
            return "neither"
        out = b < self.cone_factor * a
        inc = a < self.cone_factor * b
        if out and inc:
            return "both"
        if out:
            return "out"
        if inc:
            return "in"
        return "neither"  # only the origin reaches here

    def ratio(self, rho):
        """|xi|_0 / |x|_0, +inf on the contracting subspace axis."""
        a, b = self.block_norms(rho)
        if a == 0.0:
            return math.inf
        return b / a


def region_membership(rho, spec):
    """Classify a point as out / in / both / neither for the given spec."""
    return spec.membership(rho)


class Trajectory:
    """Dense-output integral curve, optionally with the tangent flow."""

    def __init__(self, H, times, states, sol, meta, dkappa=None):
        self.H = H
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self._sol = sol
        self.meta = dict(meta)
        self.dkappa = dkappa

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def t1(self):
        return float(self.times[-1])

    def state_at(self, t):
        y = self._sol(t)
        return y[: 2 * self.H.n]

    def dkappa_at(self, t):
        if self.dkappa is None:
            raise ValueError("trajectory carries no variational data")
        dim = 2 * self.H.n
        y = self._sol(t)
        return y[dim:].reshape(dim, dim)

    @property
    def energy_drift(self):
        return self.meta["energy_drift"]

    @property
    def error_estimate(self):
        return self.meta["error_estimate"]


def _rhs(H):
    def fun(_, rho):
        return H.vector_field(rho)
    return fun


def _energy_tol(p0):
    return 1e-9 * (1.0 + abs(p0))


def integrate(H, rho0, t_span, tol=1e-10, events=None, chart_radius=None,
              method="DOP853", max_retries=2):
    """Integrate the Hamiltonian flow with dense output.

    Energy conservation is enforced to 1e-9 (1 + |p(rho0)|); the solver
    tolerance is tightened and the run repeated if the drift exceeds it.

    Raises
    ------
    StepSizeCollapse
        If the integrator fails to meet its local tolerance.
    LeftDomain
        If ``chart_radius`` is given and the state exits that ball.
    """
    rho0 = as_coords(rho0, H.n)
    p0 = H.value(rho0)
    drift_budget = _energy_tol(p0)
    ev = list(events or [])
    chart_event = None
    if chart_radius is not None:
        def chart_event(_, rho):
            return float(rho @ rho) - chart_radius ** 2
        chart_event.terminal = True
        ev = ev + [chart_event]

    current = tol
    last_drift = math.inf
    for _ in range(max_retries + 1):
        sol = solve_ivp(_rhs(H), tuple(t_span), rho0, method=method,
                        dense_output=True, rtol=max(current, 1e-13),
                        atol=current * 1e-2, events=ev or None)
        if not sol.success:
            raise StepSizeCollapse(sol.message)
        energies = H.value_many(sol.y.T)
        last_drift = float(np.max(np.abs(energies - p0)))
        if last_drift <= drift_budget:
            break
        current = current * 1e-2
    if last_drift > drift_budget:
        raise EnergyDriftExceeded(
            f"energy drift {last_drift:.3e} exceeds {drift_budget:.3e}")
    if chart_event is not None and sol.t_events[-1].size:
        raise LeftDomain(
            f"state left the chart of radius {chart_radius} at "
            f"t={sol.t_events[-1][0]:.6g}")
    span = abs(t_span[1] - t_span[0])
    meta = {
        "tol": tol,
        "rtol": max(current, 1e-13),
        "atol": current * 1e-2,
        "nfev": sol.nfev,
        "energy_drift": last_drift,
        "error_estimate": last_drift + current * (1.0 + span),
        "t_events": [list(map(float, te)) for te in (sol.t_events or [])],
    }
    traj = Trajectory(H, sol.t, sol.y.T, sol.sol, meta)
    traj._raw = sol
    return traj


def variational_flow(H, rho0, t_span, tol=1e-10, symp_tol=DEFAULT_SYMP_TOL,
                     method="DOP853"):
    """Integrate the flow together with its Jacobian d kappa_t.

    The tangent matrix solves dM/dt = (d field / d rho) M with M(0) = id;
    its symplecticity defect over the stored samples is certified below
    ``symp_tol`` (the tolerance is tightened once if needed).
    """
    rho0 = as_coords(rho0, H.n)
    dim = 2 * H.n
    y0 = np.concatenate([rho0, np.eye(dim).ravel()])
    p0 = H.value(rho0)
    J = np.zeros((dim, dim))
    J[: H.n, H.n:] = np.eye(H.n)
    J[H.n:, : H.n] = -np.eye(H.n)

    def fun(_, y):
        rho = y[:dim]
        M = y[dim:].reshape(dim, dim)
        return np.concatenate([H.vector_field(rho),
                               (H.field_jacobian(rho) @ M).ravel()])

    current = tol
    for attempt in range(2):
        sol = solve_ivp(fun, tuple(t_span), y0, method=method,
                        dense_output=True, rtol=max(current, 1e-13),
                        atol=current * 1e-2)
        if not sol.success:
            raise StepSizeCollapse(sol.message)
        defect = 0.0
        for col in sol.y.T:
            M = col[dim:].reshape(dim, dim)
            defect = max(defect, float(np.max(np.abs(M.T @ J @ M - J))))
        if defect <= symp_tol:
            break
        current = current * 1e-2
    if defect > symp_tol:
        raise EnergyDriftExceeded(
            f"variational symplecticity defect {defect:.3e} exceeds "
            f"{symp_tol:.1e}")
    energies = H.value_many(sol.y[:dim].T)
    drift = float(np.max(np.abs(energies - p0)))
    span = abs(t_span[1] - t_span[0])
    meta = {
        "tol": tol,
        "nfev": sol.nfev,
        "energy_drift": drift,
        "symplectic_defect": defect,
        "error_estimate": drift + current * (1.0 + span),
    }
    dk = [col[dim:].reshape(dim, dim) for col in sol.y.T]
    return Trajectory(H, sol.t, sol.y[:dim].T, sol.sol, meta, dkappa=dk)


# ------------------------------------------------------------- hitting times
@dataclass(frozen=True)
class HittingTimes:
    """First crossing times; inf marks invariant-manifold points, None
    marks times whose defining region condition fails at the start point."""

    t_minus_out: float | None
    t_plus_out: float | None
    t_minus_in: float | None
    t_plus_in: float | None
    membership: str = "neither"
    residuals: dict = field(default_factory=dict)

    @staticmethod
    def _encode(v):
        if v is None:
            return "undefined"
        if math.isinf(v):
            return "+inf"
        return float(v)

    def to_dict(self):
        return {
            "t_minus_out": self._encode(self.t_minus_out),
            "t_plus_out": self._encode(self.t_plus_out),
            "t_minus_in": self._encode(self.t_minus_in),
            "t_plus_in": self._encode(self.t_plus_in),
            "membership": self.membership,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
        }


def _first_crossing(H, rho0, sign, event_fn, horizon, tol, label):
    """First positive t with event_fn(exp(sign t H)(rho0)) = 0."""
    def ev(_, rho):
        return event_fn(rho)
    ev.terminal = True
    traj = integrate(H, rho0, (0.0, sign * horizon), tol=tol, events=[ev])
    hits = traj.meta["t_events"][0]
    if not hits:
        raise NoCrossingWithinHorizon(
            f"{label}: no crossing within horizon {horizon:.4g}",
            horizon=horizon)
    t_star = abs(hits[0])
    residual = abs(event_fn(traj.state_at(sign * t_star)))
    return t_star, residual


def hitting_times(H, rho0, spec, tol=1e-12, root_tol=1e-9,
                  flat_tol=DEFAULT_FLAT_TOL, horizon=None):
    """Hitting times of the cone and ball boundaries from ``rho0``.

    Outgoing times are defined for points of the outgoing region,
    incoming times for the incoming region; inapplicable entries are the
    undefined marker (None).  A start point numerically on the expanding
    (resp. contracting) subspace gets the +inf marker for its backward
    (resp. forward) cone time.

    Raises
    ------
    OriginUndefined
        At the fixed point itself.
    NoCrossingWithinHorizon
        When an applicable crossing is not found within the horizon.
    """
    rho0 = as_coords(rho0, spec.n)
    a0, b0 = spec.block_norms(rho0)
    if a0 == 0.0 and b0 == 0.0:
        raise OriginUndefined("hitting times undefined at the origin")
    if horizon is None:
        horizon = 50.0 / H.min_expansion_rate()
    member = spec.membership(rho0)
    cf = spec.cone_factor

    def cone_out(rho):  # |xi|_0 - 2 |x|_0, crossed backward from out
        a, b = spec.block_norms(rho)
        return b - cf * a

    def cone_in(rho):   # |x|_0 - 2 |xi|_0, crossed forward from in
        a, b = spec.block_norms(rho)
        return a - cf * b

    def ball(rho):
        a, b = spec.block_norms(rho)
        return a * a + b * b - spec.delta ** 2

    t_minus_out = t_plus_out = t_minus_in = t_plus_in = None
    residuals = {}
    if member in ("out", "both"):
        if b0 < flat_tol * a0:
            t_minus_out = math.inf
        else:
            t_minus_out, r = _first_crossing(
                H, rho0, -1.0, cone_out, horizon, tol, "t_minus_out")
            residuals["t_minus_out"] = r
        t_plus_out, r = _first_crossing(
            H, rho0, +1.0, ball, horizon, tol, "t_plus_out")
        residuals["t_plus_out"] = r
    if member in ("in", "both"):
        if a0 < flat_tol * b0:
            t_plus_in = math.inf
        else:
            t_plus_in, r = _first_crossing(
                H, rho0, +1.0, cone_in, horizon, tol, "t_plus_in")
            residuals["t_plus_in"] = r
        t_minus_in, r = _first_crossing(
            H, rho0, -1.0, ball, horizon, tol, "t_minus_in")
        residuals["t_minus_in"] = r

    for name, r in residuals.items():
        if r > root_tol:
            raise NoCrossingWithinHorizon(
                f"{name}: crossing residual {r:.3e} above root_tol",
                horizon=horizon)
    return HittingTimes(
        t_minus_out=t_minus_out,
        t_plus_out=t_plus_out,
        t_minus_in=t_minus_in,
        t_plus_in=t_plus_in,
        membership=member,
        residuals=residuals,
    )


# ------------------------------------------------------------ rate brackets
@dataclass(frozen=True)
class GronwallReport:
    """Empirical bracket of the block-norm growth/decay exponents."""

    lambda_minus: float
    lambda_plus: float
    slack: float
    delta: float
    samples: int
    seed: int
    monotone_ok: bool
    rate_bounds: dict
    spectrum: tuple

    def to_dict(self):
        return {
            "lambda_minus": float(self.lambda_minus),
            "lambda_plus": float(self.lambda_plus),
            "slack": float(self.slack),
            "delta": float(self.delta),
            "samples": int(self.samples),
            "seed": int(self.seed),
            "monotone_ok": bool(self.monotone_ok),
            "rate_bounds": {k: [float(v[0]), float(v[1])]
                            for k, v in self.rate_bounds.items()},
            "spectrum": [float(v) for v in self.spectrum],
        }


def sample_outgoing(spec, samples, rng, radius_factor=0.5, max_tries=None):
    """Seeded rejection sampler for points of the outgoing region."""
    n = spec.n
    out = []
    tries = 0
    cap = max_tries or 400 * samples
    radius = radius_factor * spec.delta
    while len(out) < samples:
        tries += 1
        if tries > cap:
            raise InsufficientSamples(
                f"only {len(out)}/{samples} outgoing points after {cap} tries")
        y = rng.normal(size=2 * n)
        a, b = spec.block_norms(y)
        scale = radius * rng.uniform(0.15, 1.0) / math.hypot(a, b)
        y = y * scale
        if spec.membership(y) in ("out", "both"):
            out.append(y)
    return out


def _instant_rates(H, spec, rho):
    """Exact d/dt log |x|_0 and d/dt log |xi|_0 along the field."""
    n = spec.n
    rho = np.asarray(rho, dtype=float)
    v = H.vector_field(rho)
    B = spec.b0.b0
    x, xi = rho[:n], rho[n:]
    vx, vxi = v[:n], v[n:]
    rx = float(x @ B @ vx) / float(x @ B @ x) if x @ B @ x > 0 else math.nan
    rxi = float(xi @ B @ vxi) / float(xi @ B @ xi) if xi @ B @ xi > 0 \
        else math.nan
    return rx, rxi


def estimate_gronwall(H, spec, samples=40, seed=0, tol=1e-10,
                      points_per_path=25):
    """Fit the tightest exponent bracket over outgoing trajectories.

    Trajectories start in the outgoing region and are followed until they
    leave it; instantaneous rates of the block norms are computed exactly
    from the vector field at sampled times.  The slack is the worst
    overshoot of the observed rates beyond the linearized spectrum.

    The rate bounds assume coordinates adapted to the invariant
    manifolds, i.e. every jet monomial carries both an x and a xi factor
    so the coordinate planes stay invariant.  For unadapted input the
    report still measures rates but ``monotone_ok`` will flag the
    failure near plane crossings.
    """
    rng = np.random.default_rng(seed)
    points = sample_outgoing(spec, samples, rng)
    lam1 = H.min_expansion_rate()
    # full expanding spectrum for the bracket reference
    L = np.vstack([H.quadratic_hessian()[H.n:],
                   -H.quadratic_hessian()[: H.n]])
    pos = np.linalg.eigvals(L).real
    pos = np.sort(pos[pos > 1e-12])
    lam_n = float(pos[-1])

    def exit_out(_, rho):
        a, b = spec.block_norms(rho)
        return max(b - spec.cone_factor * a, a * a + b * b - spec.delta ** 2)
    exit_out.terminal = True

    x_rates, xi_rates = [], []
    for rho in points:
        traj = integrate(H, rho, (0.0, 50.0 / lam1), tol=tol,
                         events=[exit_out])
        hits = traj.meta["t_events"][0]
        t_end = hits[0] if hits else traj.t1
        for t in np.linspace(0.0, 0.98 * t_end, points_per_path):
            state = traj.state_at(t)
            if spec.membership(state) not in ("out", "both"):
                continue
            rx, rxi = _instant_rates(H, spec, state)
            if not math.isnan(rx):
                x_rates.append(rx)
            if not math.isnan(rxi):
                xi_rates.append(rxi)
    if not x_rates or not xi_rates:
        raise InsufficientSamples("no usable rate samples")
    x_rates = np.array(x_rates)
    xi_decay = -np.array(xi_rates)
    lo = float(min(x_rates.min(), xi_decay.min()))
    hi = float(max(x_rates.max(), xi_decay.max()))
    slack = max(0.0, lam1 - lo, hi - lam_n)
    monotone = bool(x_rates.min() > 0.0 and xi_decay.min() > 0.0)
    return GronwallReport(
        lambda_minus=lo,
        lambda_plus=hi,
        slack=slack,
        delta=spec.delta,
        samples=samples,
        seed=seed,
        monotone_ok=monotone,
        rate_bounds={"x": (float(x_rates.min()), float(x_rates.max())),
                     "xi_decay": (float(xi_decay.min()),
                                  float(xi_decay.max()))},
        spectrum=(lam1, lam_n),
    )


def certify_delta(H, spec, samples=24, seed=0, max_halvings=12):
    """Halve delta until the norm monotonicity holds on all samples."""
    current = spec
    for _ in range(max_halvings):
        report = estimate_gronwall(H, current, samples=samples, seed=seed)
        if report.monotone_ok:
            return current.delta, report
        current = RegionSpec(delta=current.delta / 2.0, b0=current.b0,
                             cone_factor=current.cone_factor)
    raise InsufficientSamples(
        f"monotonicity not certified above delta={current.delta:.3e}")
