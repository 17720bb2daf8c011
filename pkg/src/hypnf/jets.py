"""Truncated power-series (jet) algebra on phase space.

Jets are sparse polynomials in the 2n phase variables (x_1..x_n, xi_1..xi_n),
graded by total degree and truncated at a fixed order.  Coefficients may be
floats, complex numbers, or :class:`fractions.Fraction` for exact runs; the
arithmetic never mixes modes unless the caller does.

The module also hosts the normal-form machinery built on that algebra:
Poisson brackets, resonance scans, Lie-series transforms, order-by-order
normalization of perturbed saddles, and hyperbolic action-angle coordinates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    DimensionMismatch,
    GeneratorTooLowDegree,
    NegativeAction,
    NonActionMonomial,
    NotWilliamson,
    ResonanceObstruction,
)

_EXACT_TYPES = (int, Fraction)


def _is_exact(c):
    return isinstance(c, _EXACT_TYPES)


class Jet:
    """Sparse truncated polynomial in 2n phase variables.

    Terms map an exponent tuple ``e`` of length 2n (x exponents first,
    then xi exponents) to a coefficient.  Terms of total degree above
    ``order`` and exact zeros are never stored.
    """

    __slots__ = ("n", "order", "terms")

    def __init__(self, n, order, terms=None):
        if n < 1:
            raise ValueError("need at least one degree of freedom")
        if order < 0:
            raise ValueError("truncation order must be nonnegative")
        self.n = int(n)
        self.order = int(order)
        clean = {}
        for e, c in (terms or {}).items():
            e = tuple(int(v) for v in e)
            if len(e) != 2 * self.n:
                raise DimensionMismatch(
                    f"exponent tuple of length {len(e)}, expected {2 * self.n}"
                )
            if any(v < 0 for v in e):
                raise ValueError(f"negative exponent in {e}")
            if sum(e) > self.order:
                continue
            acc = clean.get(e)
            clean[e] = c if acc is None else acc + c
        self.terms = {e: c for e, c in clean.items() if c != 0}

    # ------------------------------------------------------------ builders
    @classmethod
    def zero(cls, n, order):
        return cls(n, order)

    @classmethod
    def constant(cls, value, n, order):
        return cls(n, order, {(0,) * (2 * n): value})

    @classmethod
    def variable(cls, n, order, index):
        """Coordinate function rho_index (0..n-1 are x, n..2n-1 are xi)."""
        e = [0] * (2 * n)
        e[index] = 1
        return cls(n, order, {tuple(e): 1})

    @classmethod
    def monomial(cls, n, order, alpha, beta, coeff):
        alpha, beta = tuple(alpha), tuple(beta)
        if len(alpha) != n or len(beta) != n:
            raise DimensionMismatch("alpha and beta must have length n")
        return cls(n, order, {alpha + beta: coeff})

    @classmethod
    def from_terms(cls, n, order, triples):
        """Build from an iterable of (alpha, beta, coeff) triples."""
        terms = {}
        for alpha, beta, coeff in triples:
            e = tuple(alpha) + tuple(beta)
            terms[e] = terms.get(e, 0) + coeff
        return cls(n, order, terms)

    # ----------------------------------------------------------- structure
    def min_degree(self):
        """Lowest total degree carrying a nonzero term (None if zero jet)."""
        return min((sum(e) for e in self.terms), default=None)

    def max_degree(self):
        return max((sum(e) for e in self.terms), default=None)

    def homogeneous_part(self, k):
        return Jet(self.n, self.order,
                   {e: c for e, c in self.terms.items() if sum(e) == k})

    def truncated(self, order):
        """Copy truncated at ``order`` (may be lower or higher)."""
        return Jet(self.n, order, dict(self.terms))

    def sorted_terms(self):
        """Terms in graded-lex order: by total degree, then exponent tuple."""
        return sorted(self.terms.items(), key=lambda item: (sum(item[0]), item[0]))

    def map_coefficients(self, fn):
        return Jet(self.n, self.order, {e: fn(c) for e, c in self.terms.items()})

    def to_float(self):
        return self.map_coefficients(float)

    def real_part(self, tol=None):
        """Real jet from a complex one; errors if imaginary residue > tol."""
        if tol is not None:
            scale = max((abs(c) for c in self.terms.values()), default=0.0)
            worst = max((abs(complex(c).imag) for c in self.terms.values()),
                        default=0.0)
            if worst > tol * max(1.0, scale):
                raise ValueError(
                    f"imaginary residue {worst:.3e} above {tol:.1e} x scale")
        return self.map_coefficients(lambda c: complex(c).real)

    # ---------------------------------------------------------- arithmetic
    def _compat(self, other):
        if self.n != other.n:
            raise DimensionMismatch(
                f"jets with n={self.n} and n={other.n}")

    def __eq__(self, other):
        if not isinstance(other, Jet):
            return NotImplemented
        return (self.n == other.n and self.order == other.order
                and self.terms == other.terms)

    def __hash__(self):
        return hash((self.n, self.order, frozenset(self.terms.items())))

    def __add__(self, other):
        if not isinstance(other, Jet):
            return self + Jet.constant(other, self.n, self.order)
        self._compat(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0) + c
        return Jet(self.n, min(self.order, other.order), terms)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.n, self.order, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -1 * other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            if other == 0:
                return Jet.zero(self.n, self.order)
            return Jet(self.n, self.order,
                       {e: c * other for e, c in self.terms.items()})
        self._compat(other)
        order = min(self.order, other.order)
        out = {}
        for ea, ca in self.terms.items():
            da = sum(ea)
            for eb, cb in other.terms.items():
                if da + sum(eb) > order:
                    continue
                e = tuple(a + b for a, b in zip(ea, eb))
                out[e] = out.get(e, 0) + ca * cb
        return Jet(self.n, order, out)

    def __rmul__(self, other):
        return self * other

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("jet powers must be nonnegative integers")
        result = Jet.constant(1, self.n, self.order)
        for _ in range(k):
            result = result * self
        return result

    def diff(self, index):
        """Partial derivative with respect to phase variable ``index``."""
        out = {}
        for e, c in self.terms.items():
            k = e[index]
            if k == 0:
                continue
            de = list(e)
            de[index] = k - 1
            out[tuple(de)] = c * k
        return Jet(self.n, self.order, out)

    # ---------------------------------------------------------- evaluation
    def evaluate(self, point):
        point = list(point)
        if len(point) != 2 * self.n:
            raise DimensionMismatch(
                f"point of length {len(point)}, expected {2 * self.n}")
        total = 0
        for e, c in self.terms.items():
            m = c
            for v, k in zip(point, e):
                if k:
                    m = m * v ** k
            total = total + m
        return total

    def compose_linear(self, matrix):
        """Jet of rho -> self(matrix @ rho).

        ``matrix`` is a (2n x 2n) array-like; complex entries give a
        complex-coefficient jet.  Exactness is preserved when both the
        jet and the matrix entries are exact.
        """
        dim = 2 * self.n
        rows = [list(matrix[i]) for i in range(dim)]
        if any(len(r) != dim for r in rows):
            raise DimensionMismatch("matrix must be 2n x 2n")
        linear = [Jet(self.n, self.order,
                      {tuple(1 if j == k else 0 for k in range(dim)): rows[i][j]
                       for j in range(dim) if rows[i][j] != 0})
                  for i in range(dim)]
        # cache powers of each substituted coordinate
        max_pow = [0] * dim
        for e in self.terms:
            for i, k in enumerate(e):
                max_pow[i] = max(max_pow[i], k)
        powers = []
        for i in range(dim):
            p = [Jet.constant(1, self.n, self.order)]
            for _ in range(max_pow[i]):
                p.append(p[-1] * linear[i])
            powers.append(p)
        result = Jet.zero(self.n, self.order)
        for e, c in self.terms.items():
            term = Jet.constant(c, self.n, self.order)
            for i, k in enumerate(e):
                if k:
                    term = term * powers[i][k]
            result = result + term
        return result

    def chop(self, tol):
        """Drop coefficients of magnitude below ``tol`` (absolute)."""
        return Jet(self.n, self.order,
                   {e: c for e, c in self.terms.items() if abs(c) >= tol})

    def __repr__(self):
        parts = []
        for e, c in self.sorted_terms()[:8]:
            parts.append(f"{c!r}*{e}")
        body = " + ".join(parts) if parts else "0"
        extra = "" if len(self.terms) <= 8 else f" (+{len(self.terms) - 8} terms)"
        return f"Jet(n={self.n}, order={self.order}, {body}{extra})"


# ---------------------------------------------------------------- brackets
def poisson(f, g):
    """Poisson bracket {f, g} = sum_j d_xi f d_x g - d_x f d_xi g.

    The sign is fixed so that ``poisson(p, g)`` is the derivative of g
    along the Hamiltonian vector field of p (xdot = d_xi p).  Under this
    convention {xi_j, x_j} = 1 and {p2, x^a xi^b} = <a-b, lambda> x^a xi^b
    for p2 = sum lambda_j x_j xi_j.
    """
    if not isinstance(f, Jet) or not isinstance(g, Jet):
        raise TypeError("poisson expects two jets")
    f._compat(g)
    n = f.n
    order = min(f.order, g.order)
    out = {}

    def accumulate(ef, cf, eg, cg, i_down_f, i_down_g, sign):
        kf = ef[i_down_f]
        kg = eg[i_down_g]
        if not kf or not kg:
            return
        e = list(a + b for a, b in zip(ef, eg))
        e[i_down_f] -= 1
        e[i_down_g] -= 1
        e = tuple(e)
        out[e] = out.get(e, 0) + sign * cf * cg * kf * kg

    for ef, cf in f.terms.items():
        df = sum(ef)
        for eg, cg in g.terms.items():
            if df + sum(eg) - 2 > order:
                continue
            for i in range(n):
                accumulate(ef, cf, eg, cg, n + i, i, 1)
                accumulate(ef, cf, eg, cg, i, n + i, -1)
    return Jet(n, order, out)


def _one_over(k, sample):
    """1/k in the arithmetic mode of ``sample``."""
    if _is_exact(sample):
        return Fraction(1, k)
    return 1.0 / k


def lie_transform(f, g):
    """Pull back g through the time-1 flow of the Hamiltonian field of f.

    Returns the jet of g o exp(H_f) = sum_k ad_f^k g / k!, a finite sum
    at jet level because every bracket with f raises the degree.  ``f``
    must vanish to second order.
    """
    if not isinstance(f, Jet) or not isinstance(g, Jet):
        raise TypeError("lie_transform expects two jets")
    f._compat(g)
    low = f.min_degree()
    if low is not None and low < 3:
        raise GeneratorTooLowDegree(
            f"generator has terms of degree {low}; need degree >= 3")
    order = min(f.order, g.order)
    result = g.truncated(order)
    term = g.truncated(order)
    sample = next(iter(f.terms.values()), 1.0)
    for k in range(1, order + 2):
        term = poisson(f, term)
        if not term.terms:
            break
        term = term * _one_over(k, sample)
        result = result + term
    return result


# ---------------------------------------------------------------- resonance
@dataclass(frozen=True)
class ResonanceReport:
    """Integer vectors nearly annihilated by the frequency vector."""

    lambdas: tuple
    max_order: int
    res_tol: float
    resonances: tuple
    values: tuple

    @property
    def is_resonant(self):
        return bool(self.resonances)


def resonance_scan(lambdas, max_order, res_tol=1e-9):
    """Exhaustive search for k with |<k, lambda>| < res_tol, 0 < |k|_1 <= K.

    Exact (Fraction / int) frequencies are tested for exact annihilation.
    Results are ordered by |k|_1 then lexicographically.
    """
    lambdas = tuple(lambdas)
    n = len(lambdas)
    if max_order < 1:
        raise ValueError("max_order must be at least 1")
    exact = all(_is_exact(l) for l in lambdas)
    hits, values = [], []
    for k in itertools.product(range(-max_order, max_order + 1), repeat=n):
        order = sum(abs(v) for v in k)
        if order == 0 or order > max_order:
            continue
        combo = sum(kv * lv for kv, lv in zip(k, lambdas))
        if exact:
            resonant = combo == 0
        else:
            resonant = abs(complex(combo)) < res_tol
        if resonant:
            hits.append(k)
            values.append(abs(complex(combo)))
    ordering = sorted(range(len(hits)),
                      key=lambda i: (sum(abs(v) for v in hits[i]), hits[i]))
    return ResonanceReport(
        lambdas=lambdas,
        max_order=max_order,
        res_tol=res_tol,
        resonances=tuple(hits[i] for i in ordering),
        values=tuple(values[i] for i in ordering),
    )


# ---------------------------------------------------------------- actions
@dataclass(frozen=True)
class ActionPolynomial:
    """Polynomial in the action variables iota_j = x_j xi_j."""

    n: int
    coeffs: tuple  # tuple of (multi-index over iota, coefficient)

    def as_dict(self):
        return dict(self.coeffs)

    def evaluate(self, iota):
        iota = list(iota)
        if len(iota) != self.n:
            raise DimensionMismatch("iota must have length n")
        total = 0
        for m, c in self.coeffs:
            v = c
            for ij, k in zip(iota, m):
                if k:
                    v = v * ij ** k
            total = total + v
        return total

    def to_jet(self, order):
        """Expand back to phase variables via iota_j -> x_j xi_j."""
        terms = {}
        for m, c in self.coeffs:
            e = tuple(m) + tuple(m)
            terms[e] = terms.get(e, 0) + c
        return Jet(self.n, order, terms)


def action_form(q):
    """Rewrite a jet with only x_j xi_j monomials as an action polynomial."""
    offenders = [e for e in q.terms if e[:q.n] != e[q.n:]]
    if offenders:
        offenders.sort(key=lambda e: (sum(e), e))
        raise NonActionMonomial(
            f"{len(offenders)} non-action monomial(s), first {offenders[0]}",
            offenders=offenders[:10])
    pairs = sorted(((e[:q.n], c) for e, c in q.terms.items()),
                   key=lambda item: (sum(item[0]), item[0]))
    return ActionPolynomial(n=q.n, coeffs=tuple(pairs))


def hyperbolic_action_angle(lambdas, iota, phi):
    """Phase point of the hyperbolic action-angle chart.

    Coordinates satisfy lambda_j x_j = sqrt(2 lambda_j iota_j) cosh(phi_j)
    and xi_j = sqrt(2 lambda_j iota_j) sinh(phi_j), so that on this locus
    xi_j^2 - lambda_j^2 x_j^2 = -2 lambda_j iota_j.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    iota = np.asarray(iota, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if not (lambdas.shape == iota.shape == phi.shape):
        raise DimensionMismatch("lambdas, iota, phi must share a shape")
    if np.any(lambdas <= 0):
        raise ValueError("frequencies must be positive")
    if np.any(iota < 0):
        raise NegativeAction(f"negative action in {iota}")
    radius = np.sqrt(2.0 * lambdas * iota)
    x = radius * np.cosh(phi) / lambdas
    xi = radius * np.sinh(phi)
    return np.concatenate([x, xi])


# ------------------------------------------------------- quadratic structure
def quadratic_block_structure(p2, tol=0.0):
    """Read the saddle / loxodromic block layout off a quadratic jet.

    Returns ``(lambdas, ell, m, blocks)`` where ``lambdas`` lists the
    per-slot frequencies (complex-paired on loxodromic slots), ``blocks``
    the (c, d) pairs.  Raises :class:`NotWilliamson` when the quadratic
    part carries monomials outside the block form.
    """
    n = p2.n
    quad = {e: c for e, c in p2.terms.items() if sum(e) == 2}
    cross = {}
    for e, c in quad.items():
        alpha, beta = e[:n], e[n:]
        if sum(alpha) != 1 or sum(beta) != 1:
            raise NotWilliamson(f"monomial {e} is not of x_i xi_j type")
        i = alpha.index(1)
        j = beta.index(1)
        cross[(i, j)] = c
    lambdas = [None] * n
    blocks = []
    used = [False] * n
    i = 0
    while i < n:
        diag = cross.pop((i, i), 0)
        d = cross.pop((i, i + 1), None) if i + 1 < n else None
        if d is None:
            if diag == 0:
                raise NotWilliamson(f"slot {i} carries no x_{i} xi_{i} term")
            lambdas[i] = diag
            used[i] = True
            i += 1
            continue
        # candidate loxodromic block on slots (i, i+1)
        dn = cross.pop((i + 1, i), 0)
        diag2 = cross.pop((i + 1, i + 1), 0)
        cval = diag
        if abs(dn + d) > tol or abs(diag2 - cval) > tol:
            raise NotWilliamson(
                f"slots ({i},{i + 1}) are not a loxodromic block")
        blocks.append((cval, d))
        lambdas[i] = complex(cval, d) if not _is_exact(cval) else complex(cval, d)
        lambdas[i + 1] = complex(cval, -d)
        used[i] = used[i + 1] = True
        i += 2
    if cross:
        key = sorted(cross)[0]
        raise NotWilliamson(f"stray cross term x_{key[0]} xi_{key[1]}")
    ell = sum(1 for l in lambdas if not isinstance(l, complex))
    return tuple(lambdas), ell, len(blocks), tuple(blocks)


def loxodromic_complex_matrix(ell, m):
    """Complex symplectic change mixing each loxodromic pair of slots.

    Returns ``(C, Cinv)`` with ``new = C @ old``; real slots are left
    untouched.  The map preserves the complex symplectic pairing and
    diagonalizes loxodromic quadratic blocks into lambda z zeta terms.
    """
    n = ell + 2 * m
    dim = 2 * n
    isq = 1.0 / math.sqrt(2.0)
    C = np.zeros((dim, dim), dtype=complex)
    for j in range(ell):
        C[j, j] = 1.0
        C[n + j, n + j] = 1.0
    for blk in range(m):
        i1 = ell + 2 * blk
        i2 = i1 + 1
        C[i1, i2] = isq
        C[i1, i1] = -1j * isq
        C[i2, i2] = isq
        C[i2, i1] = 1j * isq
        C[n + i1, n + i2] = isq
        C[n + i1, n + i1] = 1j * isq
        C[n + i2, n + i2] = isq
        C[n + i2, n + i1] = -1j * isq
    return C, np.linalg.inv(C)


# ------------------------------------------------------------ normalization
@dataclass
class NormalFormResult:
    """Outcome of the order-by-order normalization.

    ``generators`` are homogeneous jets f_3..f_N in the coordinates the
    scheme ran in; on loxodromic input that is the complexified chart and
    ``generators_real`` holds the real-coefficient pullbacks to the input
    coordinates (for pure saddles the two lists coincide).
    """

    n: int
    order: int
    mode: str  # "real" | "complexified"
    lambdas: tuple
    generators: list
    generators_real: list
    q0: ActionPolynomial
    residual_degree: int
    nonaction_residual: float
    complex_map: tuple | None = None  # (C, Cinv) when mode == "complexified"

    def q0_jet(self, order=None):
        jet = self.q0.to_jet(order if order is not None else self.order)
        if self.mode == "complexified":
            C, _ = self.complex_map
            jet = jet.compose_linear(C).real_part(tol=1e-8)
        return jet


def _divisor_scale(lambdas):
    vals = [abs(complex(l)) for l in lambdas]
    return max(1.0, max(vals))


def birkhoff_normalize(p, order, res_tol=1e-9, dust_tol=1e-9):
    """Normalize a perturbed saddle to a function of actions through ``order``.

    ``p`` must have its quadratic part in block normal form (pure saddle
    terms lambda_j x_j xi_j, or loxodromic (c, d) blocks, which are handled
    through the complexified chart).  Returns a :class:`NormalFormResult`
    whose generators, applied in sequence via :func:`lie_transform`,
    cancel every non-action monomial of degree <= order.
    """
    if order < 2:
        raise ValueError("normalization order must be at least 2")
    n = p.n
    p = p.truncated(order)
    low = p.min_degree()
    if low is not None and low < 2:
        raise NotWilliamson("input carries constant or linear terms")
    lambdas, ell, m, _ = quadratic_block_structure(p.homogeneous_part(2))

    mode = "real"
    complex_map = None
    work = p
    if m > 0:
        C, Cinv = loxodromic_complex_matrix(ell, m)
        work = p.map_coefficients(complex).compose_linear(Cinv)
        mode = "complexified"
        complex_map = (C, Cinv)

    report = resonance_scan(lambdas, order, res_tol=res_tol)
    if report.is_resonant:
        k = report.resonances[0]
        raise ResonanceObstruction(
            f"frequencies resonant at k={k}, |<k,lambda>|={report.values[0]:.3e}",
            k=k, value=report.values[0])

    scale = _divisor_scale(lambdas)
    exact = all(_is_exact(c) for c in work.terms.values()) and \
        all(_is_exact(l) for l in lambdas)

    generators = []
    dust = 0.0
    for k in range(3, order + 1):
        h = work.homogeneous_part(k)
        gen_terms = {}
        for e, c in h.terms.items():
            alpha, beta = e[:n], e[n:]
            if alpha == beta:
                continue
            kvec = tuple(a - b for a, b in zip(alpha, beta))
            div = sum(kv * lv for kv, lv in zip(kvec, lambdas))
            if exact:
                if div == 0:
                    raise ResonanceObstruction(
                        f"monomial {e} resonant: <k,lambda> = 0", k=kvec,
                        value=0.0)
            elif abs(complex(div)) < res_tol * scale:
                raise ResonanceObstruction(
                    f"monomial {e} nearly resonant: |<k,lambda>| = "
                    f"{abs(complex(div)):.3e}", k=kvec, value=abs(complex(div)))
            gen_terms[e] = c / div
        fk = Jet(n, order, gen_terms)
        generators.append(fk)
        if fk.terms:
            work = lie_transform(fk, work)
        if not exact:
            # the cancelled coefficients are exact zeros of the scheme; strip
            # the floating-point dust the bracket arithmetic leaves behind
            cleaned = {}
            deg_scale = max(
                (abs(c) for e, c in h.terms.items()), default=1.0)
            for e, c in work.terms.items():
                if sum(e) == k and e[:n] != e[n:]:
                    if abs(c) > dust_tol * max(1.0, deg_scale):
                        raise ResonanceObstruction(
                            f"degree-{k} monomial {e} failed to cancel "
                            f"(residue {abs(c):.3e})", k=e, value=abs(c))
                    dust = max(dust, abs(c))
                    continue
                cleaned[e] = c
            work = Jet(n, order, cleaned)

    q0 = action_form(work)
    if mode == "complexified":
        C, _ = complex_map
        generators_real = [g.compose_linear(C).real_part(tol=1e-10)
                           for g in generators]
    else:
        generators_real = list(generators)
    return NormalFormResult(
        n=n,
        order=order,
        mode=mode,
        lambdas=lambdas,
        generators=generators,
        generators_real=generators_real,
        q0=q0,
        residual_degree=order + 1,
        nonaction_residual=dust,
        complex_map=complex_map,
    )
