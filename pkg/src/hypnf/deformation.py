"""Homotopy removal of a flat remainder from an integrable Hamiltonian.

Interpolate q_s between the action Hamiltonian q0 and the perturbed
q0 + r, solve the transport equation H_{q_s} f_s = r at each s, and
advance every point along the generator field H_{f_s}; the time-one map
conjugates the perturbed Hamiltonian back to q0 up to the method's
numerical floor.  All generator-field values come from the quadrature
solver; the gradient is taken by centered differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    DecayMarginTooSmall,
    HomologicalFailure,
    HypnfError,
    ResidualDiverging,
    StepSizeCollapse,
)
from .flow import RegionSpec, estimate_gronwall
from .hamiltonians import Hamiltonian
from .homological import make_partition, residual_check, solve_homological
from .jets import Jet, action_form, resonance_scan
from .linalg import (
    as_coords,
    classify_spectrum,
    fundamental_matrix,
    standard_symplectic,
)


@dataclass
class DeformationProblem:
    """Inputs of one homotopy run.

    ``q0`` is a jet in action form (only x_j xi_j monomials), ``r`` a
    flat function with a certificate strong enough to beat the worst
    contraction slack over the whole interpolation family.
    """

    q0: Jet
    r: object
    region: RegionSpec
    s_steps: int = 8
    quad_tol: float = 1e-9
    ode_tol: float = 1e-9
    profile_order: int = 3
    res_order: int = 6

    def __post_init__(self):
        action_form(self.q0)  # raises NonActionMonomial on bad input
        if self.r.n != self.q0.n:
            raise HypnfError("remainder dimension mismatch")
        if self.s_steps < 2:
            raise ValueError("need at least two interpolation nodes")

    @property
    def n(self):
        return self.q0.n

    def hamiltonian_at(self, s):
        if s == 0.0:
            return Hamiltonian(self.q0)
        return Hamiltonian(self.q0, (self.r.scaled(s),))

    @property
    def fd_step(self):
        # centered-difference step: cube root of the quadrature tolerance,
        # scaled by the chart size
        return self.quad_tol ** (1.0 / 3.0) * self.region.delta


@dataclass
class DeformationDiagnostics:
    s_nodes: list = field(default_factory=list)
    field_norms: list = field(default_factory=list)
    homological_residuals: list = field(default_factory=list)
    symplectic_defects: list = field(default_factory=list)
    conjugacy_residuals: list = field(default_factory=list)
    probe_points: list = field(default_factory=list)
    rate_reports: dict = field(default_factory=dict)
    margin: float = 0.0
    fd_step: float = 0.0
    ode_error_estimate: float = 0.0
    accepted: bool = True

    def to_dict(self):
        return {
            "s_nodes": [float(s) for s in self.s_nodes],
            "field_norms": [float(v) for v in self.field_norms],
            "homological_residuals": [float(v)
                                      for v in self.homological_residuals],
            "symplectic_defects": [float(v)
                                   for v in self.symplectic_defects],
            "conjugacy_residuals": [float(v)
                                    for v in self.conjugacy_residuals],
            "probe_points": [[float(v) for v in p]
                             for p in self.probe_points],
            "rate_reports": {k: v.to_dict()
                             for k, v in self.rate_reports.items()},
            "margin": float(self.margin),
            "fd_step": float(self.fd_step),
            "ode_error_estimate": float(self.ode_error_estimate),
            "accepted": bool(self.accepted),
        }


class ConjugacyResult:
    """Time-one conjugation map with its per-node diagnostics."""

    def __init__(self, problem, advance, diagnostics):
        self._problem = problem
        self._advance = advance
        self.diagnostics = diagnostics

    @property
    def n(self):
        return self._problem.n

    def kappa(self, rho, s=1.0):
        """Map a point through the deformation up to parameter s."""
        return self._advance(as_coords(rho, self.n), s)

    def kappa1(self, rho):
        return self.kappa(rho, 1.0)

    def map_points(self, points, s=1.0):
        return np.array([self.kappa(p, s) for p in points])

    def jacobian(self, rho, h=None, s=1.0):
        """Centered-difference Jacobian of kappa_s at rho."""
        rho = as_coords(rho, self.n)
        h = h if h is not None else self._problem.fd_step
        cols = []
        for i in range(2 * self.n):
            dv = np.zeros(2 * self.n)
            dv[i] = h
            cols.append((self.kappa(rho + dv, s) - self.kappa(rho - dv, s))
                        / (2.0 * h))
        return np.column_stack(cols)

    def symplectic_defect(self, rho, h=None, s=1.0):
        K = self.jacobian(rho, h=h, s=s)
        J = standard_symplectic(self.n)
        return float(np.max(np.abs(K.T @ J @ K - J)))


def _default_probes(problem):
    d = problem.region.delta
    if problem.n == 1:
        raw = [(1.0, 0.4), (-1.0, -0.4), (0.4, 1.0), (-0.4, -1.0)]
        return [np.array(p) * d * 0.8 for p in raw]
    rng = np.random.default_rng(0)
    probes = []
    while len(probes) < 4:
        y = rng.normal(size=2 * problem.n)
        a, b = problem.region.block_norms(y)
        probes.append(y * (0.5 * d / math.hypot(a, b)))
    return probes


def deform(problem, probes=None, check_rates=True):
    """Run the homotopy loop and return the conjugation map.

    At each interpolation parameter the generator solves the transport
    equation with Hamiltonian q_s and right-hand side r, so that the
    interpolated Hamiltonian stays conjugate to q0; points are advanced
    by an adaptive solver in s.  Diagnostics are collected on a uniform
    node grid (refined where the generator field is largest): generator
    field norms, transport residuals, symplectic defects of the advanced
    probe stencils, and per-node conjugacy residuals.

    Raises
    ------
    DecayMarginTooSmall
        If the flatness certificate cannot beat the fitted slack.
    ResidualDiverging
        If the probe conjugacy residual grows over the last three nodes.
    HomologicalFailure
        If a generator evaluation fails at some node.
    """
    n = problem.n
    q0_ham = problem.hamiltonian_at(0.0)
    spectrum = classify_spectrum(fundamental_matrix(q0_ham))
    lam1 = spectrum.min_rate()
    scan = resonance_scan(spectrum.lambdas, problem.res_order)
    if scan.is_resonant:
        raise HypnfError(
            f"q0 frequencies resonant at k={scan.resonances[0]}")

    diagnostics = DeformationDiagnostics(fd_step=problem.fd_step)
    slack = 0.0
    if check_rates:
        for tag, s in (("s0", 0.0), ("s1", 1.0)):
            rep = estimate_gronwall(problem.hamiltonian_at(s),
                                    problem.region, samples=8, seed=0)
            diagnostics.rate_reports[tag] = rep
            slack = max(slack, rep.slack)
    margin = problem.r.N_flat * lam1 - slack
    diagnostics.margin = margin
    if margin <= 0.0:
        raise DecayMarginTooSmall(
            f"N_flat * lambda1 - slack = {margin:.3e} <= 0 over the family")

    cut = make_partition(problem.profile_order, b0=problem.region.b0)
    h_fd = problem.fd_step
    eps_abs = problem.quad_tol * 1e-5
    eps_rel = 1e-10

    def generator_value(s, rho):
        try:
            return solve_homological(
                problem.hamiltonian_at(s), problem.r, cut, rho,
                tol=problem.quad_tol, rates=(lam1, 0.0),
                quad_eps_abs=eps_abs, quad_eps_rel=eps_rel).value
        except HypnfError as exc:
            raise HomologicalFailure(
                f"transport solve failed at s={s:.4f}: {exc}") from exc

    def generator_field(s, rho):
        v = np.zeros(2 * n)
        for i in range(2 * n):
            dv = np.zeros(2 * n)
            dv[i] = h_fd
            v[i] = (generator_value(s, rho + dv)
                    - generator_value(s, rho - dv)) / (2.0 * h_fd)
        return np.concatenate([v[n:], -v[:n]])

    def advance(rho, s_target):
        if s_target == 0.0:
            return np.array(rho, dtype=float)
        sol = solve_ivp(generator_field, (0.0, s_target), rho,
                        method="RK45", rtol=problem.ode_tol,
                        atol=problem.ode_tol * 1e-3,
                        first_step=min(s_target, 1.0 / problem.s_steps))
        if not sol.success:
            raise StepSizeCollapse(sol.message)
        return sol.y[:, -1]

    probes = [as_coords(p, n) for p in (probes or _default_probes(problem))]
    diagnostics.probe_points = [list(map(float, p)) for p in probes]

    # diagnostic node grid: uniform, one refinement pass around the
    # largest generator-field norm
    nodes = list(np.linspace(0.0, 1.0, problem.s_steps + 1))
    field_norm = {}
    for s in nodes:
        field_norm[s] = max(float(np.linalg.norm(generator_field(s, p)))
                            for p in probes[:2])
    peak = max(field_norm, key=field_norm.get)
    idx = nodes.index(peak)
    for neighbor in (idx - 1, idx + 1):
        if 0 <= neighbor < len(nodes):
            mid = 0.5 * (nodes[idx] + nodes[neighbor])
            if mid not in field_norm:
                nodes.append(mid)
                field_norm[mid] = max(
                    float(np.linalg.norm(generator_field(mid, p)))
                    for p in probes[:2])
    nodes = sorted(set(nodes))
    diagnostics.s_nodes = nodes
    diagnostics.field_norms = [field_norm[s] for s in nodes]

    # advance probe stencils once, with dense output in s
    J = standard_symplectic(n)
    stencil_sols = []
    for p in probes[:2]:
        group = [p]
        for i in range(2 * n):
            dv = np.zeros(2 * n)
            dv[i] = h_fd
            group.extend([p + dv, p - dv])
        sols = []
        for q in group:
            sol = solve_ivp(generator_field, (0.0, 1.0), q, method="RK45",
                            rtol=problem.ode_tol,
                            atol=problem.ode_tol * 1e-3,
                            dense_output=True,
                            first_step=1.0 / problem.s_steps)
            if not sol.success:
                raise StepSizeCollapse(sol.message)
            sols.append(sol.sol)
        stencil_sols.append(sols)

    r_probe_scale = max(abs(problem.r.value(p)) for p in probes)
    for s in nodes:
        qs = problem.hamiltonian_at(s)
        # transport residual of the generator at this node
        rep = residual_check(
            qs, lambda rho: generator_value(s, rho), problem.r,
            probes[:2], h=1e-2)
        diagnostics.homological_residuals.append(rep.max_residual)
        # symplectic defect of the advanced stencils
        defect = 0.0
        conj = 0.0
        for sols, p in zip(stencil_sols, probes[:2]):
            center = sols[0](s)
            cols = []
            for i in range(2 * n):
                plus = sols[1 + 2 * i](s)
                minus = sols[2 + 2 * i](s)
                cols.append((plus - minus) / (2.0 * h_fd))
            K = np.column_stack(cols)
            defect = max(defect, float(np.max(np.abs(K.T @ J @ K - J))))
            conj = max(conj, abs(qs.value(center) - q0_ham.value(p)))
        diagnostics.symplectic_defects.append(defect)
        diagnostics.conjugacy_residuals.append(conj)
        seq = diagnostics.conjugacy_residuals
        if (len(seq) >= 3 and seq[-1] > seq[-2] > seq[-3]
                and seq[-1] > 0.25 * r_probe_scale):
            raise ResidualDiverging(
                f"conjugacy residual grew over nodes "
                f"{nodes[len(seq) - 3:len(seq)]}: {seq[-3:]}")

    diagnostics.ode_error_estimate = 10.0 * (
        problem.ode_tol * problem.region.delta + problem.ode_tol * 1e-3)
    diagnostics.accepted = max(diagnostics.symplectic_defects,
                               default=0.0) <= 1e-6
    return ConjugacyResult(problem, advance, diagnostics)


# ------------------------------------------------------------- verification
@dataclass
class ConjugacyReport:
    """Residual statistics of p o kappa against q0 over a grid."""

    stats: dict
    baseline: dict
    improvement: float
    rows: list

    def to_dict(self):
        return {
            "stats": {k: float(v) for k, v in self.stats.items()},
            "baseline": {k: float(v) for k, v in self.baseline.items()},
            "improvement": float(self.improvement),
            "points": len(self.rows),
        }


def _stats(values):
    values = np.asarray(values, dtype=float)
    return {
        "max": float(values.max()),
        "mean": float(values.mean()),
        "median": float(np.quantile(values, 0.5)),
        "q90": float(np.quantile(values, 0.9)),
    }


def verify_conjugacy(p, kappa, q0, grid):
    """Residual field |p(kappa(rho)) - q0(rho)| with its baseline.

    ``kappa`` is any callable point map (identity gives the baseline
    itself); ``p`` and ``q0`` are evaluable Hamiltonians.
    """
    rows = []
    finals, bases = [], []
    for rho in grid:
        rho = np.asarray(rho, dtype=float)
        mapped = np.asarray(kappa(rho), dtype=float)
        final = abs(p.value(mapped) - q0.value(rho))
        base = abs(p.value(rho) - q0.value(rho))
        finals.append(final)
        bases.append(base)
        rows.append({"point": [float(v) for v in rho],
                     "baseline": float(base),
                     "residual": float(final)})
    stats = _stats(finals)
    baseline = _stats(bases)
    improvement = baseline["max"] / max(stats["max"], 1e-300)
    return ConjugacyReport(stats=stats, baseline=baseline,
                           improvement=improvement, rows=rows)


def near_identity_slope(kappa, direction, radii):
    """Fitted decay exponent of |kappa(rho) - rho| along a ray."""
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    logs, logr = [], []
    for rad in radii:
        rho = rad * direction
        diff = float(np.linalg.norm(kappa(rho) - rho))
        if diff > 0.0:
            logs.append(math.log(diff))
            logr.append(math.log(rad))
    if len(logs) < 2:
        return math.inf
    return float(np.polyfit(logr, logs, 1)[0])


def square_grid(extent, count, n=1):
    """Uniform residual grid, excluding the exact origin."""
    axis = np.linspace(-extent, extent, count)
    pts = []
    if n != 1:
        raise NotImplementedError("residual grids are built for 1 DOF")
    for x in axis:
        for xi in axis:
            if x == 0.0 and xi == 0.0:
                continue
            pts.append(np.array([x, xi]))
    return pts
