"""Evaluable Hamiltonians: jet part plus optional flat remainder terms.

The flow, homological, and deformation machinery all consume the same
object: a polynomial jet compiled for fast evaluation, optionally summed
with smooth terms that vanish to high order at the origin (monomials
windowed by a radial bump).  Flat terms carry an explicit flatness
certificate (N_flat, C_flat) that the quadrature tail bounds rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .jets import Jet


class SmoothStep:
    """Polynomial smoothstep of smoothness order k.

    S(0) = 0, S(1) = 1, with the first k derivatives vanishing at both
    ends; values are clamped to exact 0 / 1 plateaus outside [0, 1].
    """

    def __init__(self, order=3):
        if order < 1:
            raise ValueError("smoothstep order must be >= 1")
        self.order = int(order)
        k = self.order
        # S(u) = sum_j (-1)^j C(k+j, j) C(2k+1, k-j) u^(k+1+j)
        self._powers = [k + 1 + j for j in range(k + 1)]
        self._coeffs = [(-1) ** j * math.comb(k + j, j) * math.comb(2 * k + 1, k - j)
                        for j in range(k + 1)]

    def value(self, u):
        if u <= 0.0:
            return 0.0
        if u >= 1.0:
            return 1.0
        return sum(c * u ** p for c, p in zip(self._coeffs, self._powers))

    def deriv(self, u):
        if u <= 0.0 or u >= 1.0:
            return 0.0
        return sum(c * p * u ** (p - 1)
                   for c, p in zip(self._coeffs, self._powers))

    def second(self, u):
        if u <= 0.0 or u >= 1.0:
            return 0.0
        return sum(c * p * (p - 1) * u ** (p - 2)
                   for c, p in zip(self._coeffs, self._powers))


class RadialBump:
    """Window equal to 1 inside the plateau radius, 0 outside the support.

    The transition runs in the squared euclidean radius through a
    smoothstep profile, so plateaus are exact and two derivatives are
    available in closed form.
    """

    def __init__(self, support_radius, plateau_radius=None, order=3):
        if support_radius <= 0:
            raise ValueError("support radius must be positive")
        self.support_radius = float(support_radius)
        self.plateau_radius = float(plateau_radius
                                    if plateau_radius is not None
                                    else 0.7 * support_radius)
        if not 0.0 < self.plateau_radius < self.support_radius:
            raise ValueError("need 0 < plateau < support radius")
        self.step = SmoothStep(order)
        self._lo = self.plateau_radius ** 2
        self._hi = self.support_radius ** 2
        self._span = self._hi - self._lo

    def _u(self, rho):
        return (float(rho @ rho) - self._lo) / self._span

    def value(self, rho):
        return 1.0 - self.step.value(self._u(rho))

    def grad(self, rho):
        u = self._u(rho)
        du = 2.0 * rho / self._span
        return -self.step.deriv(u) * du

    def hess(self, rho):
        u = self._u(rho)
        du = 2.0 * rho / self._span
        d2 = (2.0 / self._span) * np.eye(rho.size)
        return -(self.step.second(u) * np.outer(du, du)
                 + self.step.deriv(u) * d2)


class FlatFunction:
    """Evaluable function with a flatness certificate near the origin.

    The certificate guarantees |g(rho)| <= C_flat |rho|^N_flat on the
    chart; ``support_radius`` may be infinite.  Gradients fall back to
    central differences when no closed form is supplied.
    """

    def __init__(self, n, func, grad=None, n_flat=1, c_flat=1.0,
                 support_radius=math.inf):
        self.n = int(n)
        self._func = func
        self._grad = grad
        self.N_flat = int(n_flat)
        self.C_flat = float(c_flat)
        self.support_radius = float(support_radius)

    def value(self, rho):
        return float(self._func(np.asarray(rho, dtype=float)))

    def grad(self, rho, h=1e-6):
        rho = np.asarray(rho, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(rho), dtype=float)
        out = np.zeros_like(rho)
        for i in range(rho.size):
            dv = np.zeros_like(rho)
            dv[i] = h
            out[i] = (self.value(rho + dv) - self.value(rho - dv)) / (2 * h)
        return out

    def scaled(self, factor):
        return ScaledFlatFunction(self, factor)

    def validate_certificate(self, seed=0, rays=8, radii=(1e-1, 1e-2, 1e-3),
                             slope_slack=0.1):
        """Empirical slope check of log|g| against log|rho| toward 0.

        Returns the worst fitted slope over random rays (ignoring rays on
        which g vanishes identically).
        """
        rng = np.random.default_rng(seed)
        worst = math.inf
        for _ in range(rays):
            direction = rng.normal(size=2 * self.n)
            direction /= np.linalg.norm(direction)
            logs, logr = [], []
            for r in radii:
                v = abs(self.value(r * direction))
                if v > 0.0:
                    logs.append(math.log(v))
                    logr.append(math.log(r))
            if len(logs) >= 2:
                slope = np.polyfit(logr, logs, 1)[0]
                worst = min(worst, slope)
        if worst < self.N_flat - slope_slack:
            raise ValueError(
                f"flatness certificate violated: slope {worst:.3f} < "
                f"{self.N_flat} - {slope_slack}")
        return worst


class ScaledFlatFunction(FlatFunction):
    """A flat function multiplied by a scalar, certificate rescaled."""

    def __init__(self, base, factor):
        self.base = base
        self.factor = float(factor)
        super().__init__(base.n, func=None, n_flat=base.N_flat,
                         c_flat=abs(factor) * base.C_flat,
                         support_radius=base.support_radius)

    def value(self, rho):
        return self.factor * self.base.value(rho)

    def grad(self, rho, h=1e-6):
        return self.factor * self.base.grad(rho, h=h)

    def hess(self, rho):
        return self.factor * self.base.hess(rho)


class MonomialBump(FlatFunction):
    """coeff * x^alpha xi^beta windowed by a radial bump.

    The flatness order is |alpha| + |beta| and the certificate constant
    |coeff|, valid since the bump is bounded by one and each coordinate
    by the euclidean norm.
    """

    def __init__(self, alpha, beta, coeff, support_radius=math.inf,
                 plateau_radius=None, order=3):
        alpha, beta = tuple(alpha), tuple(beta)
        if len(alpha) != len(beta):
            raise DimensionMismatch("alpha and beta must have equal length")
        n = len(alpha)
        self.alpha = alpha
        self.beta = beta
        self.coeff = float(coeff)
        self.exps = np.array(alpha + beta, dtype=int)
        self.bump = (RadialBump(support_radius, plateau_radius, order)
                     if math.isfinite(support_radius) else None)
        super().__init__(n, func=None, n_flat=int(self.exps.sum()),
                         c_flat=abs(self.coeff),
                         support_radius=support_radius)

    def _monomial(self, rho):
        return float(np.prod(rho ** self.exps))

    def _monomial_grad(self, rho):
        out = np.zeros_like(rho)
        for i, e in enumerate(self.exps):
            if e == 0:
                continue
            shifted = self.exps.copy()
            shifted[i] -= 1
            out[i] = e * float(np.prod(rho ** shifted))
        return out

    def _monomial_hess(self, rho):
        dim = rho.size
        out = np.zeros((dim, dim))
        for i, ei in enumerate(self.exps):
            if ei == 0:
                continue
            for j3, ej in enumerate(self.exps):
                factor = ei * (ej - (1 if i == j3 else 0))
                if factor == 0 or (i == j3 and ei < 2) or \
                        (i != j3 and ej == 0):
                    continue
                shifted = self.exps.copy()
                shifted[i] -= 1
                shifted[j3] -= 1
                out[i, j3] = factor * float(np.prod(rho ** shifted))
        return out

    def value(self, rho):
        rho = np.asarray(rho, dtype=float)
        v = self.coeff * self._monomial(rho)
        if self.bump is not None:
            v *= self.bump.value(rho)
        return v

    def grad(self, rho, h=None):
        rho = np.asarray(rho, dtype=float)
        g = self.coeff * self._monomial_grad(rho)
        if self.bump is not None:
            b = self.bump.value(rho)
            g = g * b + self.coeff * self._monomial(rho) * self.bump.grad(rho)
        return g

    def hess(self, rho):
        rho = np.asarray(rho, dtype=float)
        hm = self.coeff * self._monomial_hess(rho)
        if self.bump is None:
            return hm
        b = self.bump.value(rho)
        gb = self.bump.grad(rho)
        gm = self.coeff * self._monomial_grad(rho)
        mv = self.coeff * self._monomial(rho)
        return (hm * b + np.outer(gm, gb) + np.outer(gb, gm)
                + mv * self.bump.hess(rho))

    def scaled(self, factor):
        if self.bump is None:
            return MonomialBump(self.alpha, self.beta, self.coeff * factor)
        return MonomialBump(self.alpha, self.beta, self.coeff * factor,
                            support_radius=self.support_radius,
                            plateau_radius=self.bump.plateau_radius,
                            order=self.bump.step.order)


def flat_combination(coeffs, functions):
    """Linear combination of flat functions with a combined certificate."""
    functions = list(functions)
    coeffs = [float(c) for c in coeffs]
    if len(coeffs) != len(functions):
        raise DimensionMismatch("one coefficient per function")
    n = functions[0].n
    if any(f.n != n for f in functions):
        raise DimensionMismatch("mixed phase-space dimensions")

    def value(rho):
        return sum(c * f.value(rho) for c, f in zip(coeffs, functions))

    def grad(rho):
        return sum((c * f.grad(rho) for c, f in zip(coeffs, functions)),
                   start=np.zeros(2 * n))

    return FlatFunction(
        n, func=value, grad=grad,
        n_flat=min(f.N_flat for f in functions),
        c_flat=sum(abs(c) * f.C_flat for c, f in zip(coeffs, functions)),
        support_radius=max(f.support_radius for f in functions),
    )


class Hamiltonian:
    """A jet with optional flat remainder terms, compiled for evaluation.

    Exposes values, gradients, Hessians, the Hamiltonian vector field
    (d_xi p, -d_x p), and its Jacobian; everything the integrators need.
    """

    def __init__(self, jet, remainders=()):
        if not isinstance(jet, Jet):
            raise TypeError("Hamiltonian needs a Jet")
        self.jet = jet.to_float() if any(
            not isinstance(c, float) for c in jet.terms.values()) else jet
        self.remainders = tuple(remainders)
        for r in self.remainders:
            if r.n != jet.n:
                raise DimensionMismatch("remainder dimension mismatch")
        self.n = jet.n
        dim = 2 * self.n
        items = self.jet.sorted_terms()
        self._exps = np.array([e for e, _ in items], dtype=int).reshape(
            len(items), dim)
        self._coeffs = np.array([float(c) for _, c in items])
        self._grad_data = []
        for i in range(dim):
            rows = [(k, e[i]) for k, (e, _) in enumerate(items) if e[i] > 0]
            if rows:
                idx = np.array([k for k, _ in rows])
                exps = self._exps[idx].copy()
                exps[:, i] -= 1
                coeffs = self._coeffs[idx] * np.array([v for _, v in rows])
            else:
                exps = np.zeros((0, dim), dtype=int)
                coeffs = np.zeros(0)
            self._grad_data.append((exps, coeffs))

    @property
    def order(self):
        return self.jet.order

    def value(self, rho):
        rho = np.asarray(rho, dtype=float)
        v = float(self._coeffs @ np.prod(rho ** self._exps, axis=1)) \
            if len(self._coeffs) else 0.0
        for r in self.remainders:
            v += r.value(rho)
        return v

    def value_many(self, points):
        points = np.asarray(points, dtype=float)
        vals = (np.prod(points[:, None, :] ** self._exps[None, :, :], axis=2)
                @ self._coeffs) if len(self._coeffs) else np.zeros(len(points))
        for r in self.remainders:
            vals = vals + np.array([r.value(p) for p in points])
        return vals

    def grad(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.zeros(2 * self.n)
        for i, (exps, coeffs) in enumerate(self._grad_data):
            if len(coeffs):
                out[i] = coeffs @ np.prod(rho ** exps, axis=1)
        for r in self.remainders:
            out = out + r.grad(rho)
        return out

    def hess(self, rho):
        rho = np.asarray(rho, dtype=float)
        dim = 2 * self.n
        out = np.zeros((dim, dim))
        for i in range(dim):
            exps, coeffs = self._grad_data[i]
            for row, c in zip(exps, coeffs):
                for j3 in range(dim):
                    if row[j3] == 0:
                        continue
                    shifted = row.copy()
                    shifted[j3] -= 1
                    out[i, j3] += c * row[j3] * float(np.prod(rho ** shifted))
        for r in self.remainders:
            out = out + r.hess(rho)
        return out

    def vector_field(self, rho):
        g = self.grad(rho)
        return np.concatenate([g[self.n:], -g[: self.n]])

    def field_jacobian(self, rho):
        h = self.hess(rho)
        return np.vstack([h[self.n:], -h[: self.n]])

    def quadratic_hessian(self):
        """Hessian of the degree-2 jet part at the origin."""
        dim = 2 * self.n
        out = np.zeros((dim, dim))
        for e, c in self.jet.homogeneous_part(2).terms.items():
            idx = [i for i, v in enumerate(e) for _ in range(v)]
            i, j3 = idx
            if i == j3:
                out[i, i] = 2.0 * float(c)
            else:
                out[i, j3] += float(c)
                out[j3, i] += float(c)
        return out

    def with_remainder_scale(self, factor):
        """Same jet, every flat remainder scaled by ``factor``."""
        return Hamiltonian(self.jet,
                           tuple(r.scaled(factor) for r in self.remainders))

    def min_expansion_rate(self):
        """Smallest positive real part over the linearized spectrum."""
        L = np.vstack([self.quadratic_hessian()[self.n:],
                       -self.quadratic_hessian()[: self.n]])
        vals = np.linalg.eigvals(L)
        pos = vals.real[vals.real > 0]
        if pos.size == 0:
            raise ValueError("linearization has no expanding directions")
        return float(np.min(pos))
