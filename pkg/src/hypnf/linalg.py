"""Linear symplectic algebra at the fixed point.

Provides the fundamental matrix of a Hamiltonian at a critical point, its
spectral classification into eigenvalue quadruples, normalization of the
quadratic part into saddle and loxodromic blocks, the complexification of
loxodromic pairs, and the anisotropic norms built from the block Lyapunov
equation.

Phase-space ordering is (x_1..x_n, xi_1..xi_n) throughout, with the
standard symplectic matrix ``J = [[0, I], [-I, 0]]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateHessian,
    DimensionMismatch,
    NoComplexBlocks,
    NonDiagonalizable,
    NormalizationFailed,
    NotCriticalPoint,
    NotWilliamson,
    PurelyImaginarySpectrum,
    ResonantOrMultipleSpectrum,
    UnstableA0,
    ZeroEigenvalue,
)
from .jets import Jet, loxodromic_complex_matrix

DEFAULT_GRAD_TOL = 1e-10
DEFAULT_SPECTRAL_GAP_TOL = 1e-8
DEFAULT_SYMPLECTIC_TOL = 1e-10
DEFAULT_COND_THRESHOLD = 1e12


def standard_symplectic(n):
    """The 2n x 2n matrix J with J (x, xi) = (xi, -x)."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


def symplectic_defect(M):
    """Max-norm defect of M^T J M = J."""
    n = M.shape[0] // 2
    J = standard_symplectic(n)
    return float(np.max(np.abs(M.T @ J @ M - J)))


def random_symplectic(n, rng, scale=0.5):
    """Random symplectic matrix exp(J S) with S symmetric, for testing."""
    S = rng.normal(size=(2 * n, 2 * n))
    S = scale * (S + S.T) / 2.0
    return scipy.linalg.expm(standard_symplectic(n) @ S)


@dataclass(frozen=True)
class PhasePoint:
    """Point of T*R^n with coordinates ordered (x_1..x_n, xi_1..xi_n)."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.atleast_1d(np.asarray(self.coords, dtype=float))
        if coords.ndim != 1 or coords.size % 2:
            raise DimensionMismatch(
                f"phase point needs an even-length vector, got {coords.shape}")
        object.__setattr__(self, "coords", coords)

    @property
    def n(self):
        return self.coords.size // 2

    @property
    def x(self):
        return self.coords[: self.n]

    @property
    def xi(self):
        return self.coords[self.n:]


def as_coords(point, n=None):
    """Accept a PhasePoint or raw array and return validated coordinates."""
    coords = point.coords if isinstance(point, PhasePoint) else \
        np.atleast_1d(np.asarray(point, dtype=float))
    if coords.ndim != 1 or coords.size % 2:
        raise DimensionMismatch(f"bad phase point shape {coords.shape}")
    if n is not None and coords.size != 2 * n:
        raise DimensionMismatch(
            f"point of length {coords.size}, expected {2 * n}")
    return coords


class SymplecticLinearMap:
    """Real linear map with a certified symplecticity defect."""

    def __init__(self, matrix, tol=DEFAULT_SYMPLECTIC_TOL):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] \
                or matrix.shape[0] % 2:
            raise DimensionMismatch(f"matrix shape {matrix.shape}")
        self.matrix = matrix
        self.defect = symplectic_defect(matrix)
        if self.defect > tol:
            raise NormalizationFailed(
                f"symplecticity defect {self.defect:.3e} exceeds {tol:.1e}")

    @property
    def n(self):
        return self.matrix.shape[0] // 2

    def apply(self, point):
        return self.matrix @ as_coords(point, self.n)

    def inverse(self):
        return SymplecticLinearMap(np.linalg.inv(self.matrix),
                                   tol=max(10 * self.defect,
                                           DEFAULT_SYMPLECTIC_TOL))

    def __repr__(self):
        return f"SymplecticLinearMap(n={self.n}, defect={self.defect:.2e})"


# ------------------------------------------------------------- fundamental
@dataclass(frozen=True)
class FundamentalMatrix:
    """Linearization data at the fixed point.

    ``F = convention_factor * J Hess(p)``; the actual generator of the
    linearized flow is :attr:`linearization` = J Hess(p), and every
    downstream rate refers to its eigenvalues.
    """

    F: np.ndarray
    convention_factor: float = 2.0

    @property
    def n(self):
        return self.F.shape[0] // 2

    @property
    def linearization(self):
        return self.F / self.convention_factor

    def hamiltonian_defect(self):
        """Max-norm defect of the Hamiltonian-matrix identity L^T J + J L = 0."""
        L = self.linearization
        J = standard_symplectic(self.n)
        return float(np.max(np.abs(L.T @ J + J @ L)))


def _hessian_of(H, rho0):
    """2n x 2n Hessian, accepting a Hamiltonian-like object or a Jet."""
    if hasattr(H, "hess"):
        return np.asarray(H.hess(rho0), dtype=float)
    jet = H
    dim = 2 * jet.n
    out = np.zeros((dim, dim))
    for i in range(dim):
        di = jet.diff(i)
        for j in range(i, dim):
            out[i, j] = out[j, i] = float(di.diff(j).evaluate(rho0))
    return out


def _gradient_of(H, rho0):
    if hasattr(H, "grad"):
        return np.asarray(H.grad(rho0), dtype=float)
    jet = H
    return np.array([float(jet.diff(i).evaluate(rho0))
                     for i in range(2 * jet.n)])


def fundamental_matrix(H, rho0=None, convention_factor=2.0,
                       grad_tol=DEFAULT_GRAD_TOL,
                       cond_threshold=DEFAULT_COND_THRESHOLD):
    """Fundamental matrix of a Hamiltonian at a critical point.

    Parameters
    ----------
    H : Hamiltonian or Jet
        Must have a critical point at ``rho0`` (gradient below ``grad_tol``).
    rho0 : array_like, optional
        Candidate fixed point; defaults to the origin.
    convention_factor : float
        Stored matrix is ``convention_factor * J Hess``.  The default 2
        keeps the classical normalization reproducible while
        :attr:`FundamentalMatrix.linearization` stays the true generator.

    Raises
    ------
    NotCriticalPoint, DegenerateHessian
    """
    n = H.n
    rho0 = np.zeros(2 * n) if rho0 is None else as_coords(rho0, n)
    grad = _gradient_of(H, rho0)
    gnorm = float(np.linalg.norm(grad))
    if gnorm > grad_tol:
        raise NotCriticalPoint(
            f"gradient norm {gnorm:.3e} exceeds {grad_tol:.1e} at {rho0}")
    hess = _hessian_of(H, rho0)
    svals = np.linalg.svd(hess, compute_uv=False)
    if svals[-1] == 0 or svals[0] / svals[-1] > cond_threshold:
        raise DegenerateHessian(
            f"Hessian condition number beyond {cond_threshold:.1e}")
    F = convention_factor * (standard_symplectic(n) @ hess)
    return FundamentalMatrix(F=F, convention_factor=convention_factor)


# ------------------------------------------------------------ classification
@dataclass(frozen=True)
class SpectralQuadruple:
    lam: complex           # representative with Re > 0 (and Im >= 0)
    multiplicity: int
    kind: str              # "real" | "complex-pair"


@dataclass(frozen=True)
class SpectrumQuadruples:
    """Eigenvalues of the linearization grouped as lambda, conj, -lambda, -conj."""

    n: int
    quads: tuple
    simple: bool
    spectral_gap_tol: float

    @property
    def lambdas(self):
        """Representatives sorted ascending by real part."""
        return tuple(q.lam for q in self.quads)

    def min_rate(self):
        return min(q.lam.real for q in self.quads)

    def max_rate(self):
        return max(q.lam.real for q in self.quads)


def classify_spectrum(F, spectral_gap_tol=DEFAULT_SPECTRAL_GAP_TOL):
    """Group the linearization spectrum into hyperbolic quadruples.

    Raises
    ------
    PurelyImaginarySpectrum
        If any eigenvalue real part is below ``spectral_gap_tol`` relative
        to the spectral radius.
    ZeroEigenvalue, NonDiagonalizable
    """
    L = F.linearization if isinstance(F, FundamentalMatrix) else \
        np.asarray(F, dtype=float)
    dim = L.shape[0]
    n = dim // 2
    vals = np.linalg.eigvals(L)
    radius = float(np.max(np.abs(vals)))
    if radius == 0.0:
        raise ZeroEigenvalue("linearization is nilpotent or zero")
    gap = spectral_gap_tol * radius
    for v in vals:
        if abs(v) < gap:
            raise ZeroEigenvalue(f"eigenvalue {v:.3e} is numerically zero")
        if abs(v.real) < gap:
            raise PurelyImaginarySpectrum(
                f"eigenvalue {v:.6g} has |Re| below the hyperbolicity gap")

    # cluster eigenvalues and check geometric multiplicities
    cluster_tol = max(gap, 1e-12 * radius)
    remaining = list(vals)
    clusters = []
    while remaining:
        v = remaining.pop()
        members = [v]
        keep = []
        for w in remaining:
            if abs(w - v) < cluster_tol * 10:
                members.append(w)
            else:
                keep.append(w)
        remaining = keep
        clusters.append((np.mean(members), len(members)))
    for center, mult in clusters:
        if mult > 1:
            rank = np.linalg.matrix_rank(
                L - center * np.eye(dim), tol=cluster_tol * 100)
            if dim - rank < mult:
                raise NonDiagonalizable(
                    f"eigenvalue {center:.6g} has geometric multiplicity "
                    f"{dim - rank} < algebraic {mult}")

    # pair off quadruples by the representative in the closed upper-right
    # quarter plane
    reps = {}
    for center, mult in clusters:
        key = complex(abs(center.real), abs(center.imag))
        match = None
        for k in reps:
            if abs(k - key) < cluster_tol * 10:
                match = k
                break
        if match is None:
            reps[key] = {"members": [(center, mult)]}
        else:
            reps[match]["members"].append((center, mult))

    quads = []
    for key in sorted(reps, key=lambda k: (k.real, k.imag)):
        members = reps[key]["members"]
        kinds = {m for _, m in members}
        mult = members[0][1]
        is_real = abs(key.imag) < cluster_tol * 10
        expected = 2 if is_real else 4
        if len(members) != expected or len(kinds) != 1:
            raise NonDiagonalizable(
                f"eigenvalue {key:.6g} does not close into a quadruple")
        quads.append(SpectralQuadruple(
            lam=complex(key.real) if is_real else key,
            multiplicity=mult,
            kind="real" if is_real else "complex-pair"))
    simple = all(q.multiplicity == 1 for q in quads)
    total = sum(q.multiplicity * (2 if q.kind == "real" else 4)
                for q in quads)
    if total != dim:
        raise NonDiagonalizable("quadruple structure did not cover the spectrum")
    return SpectrumQuadruples(n=n, quads=tuple(quads), simple=simple,
                              spectral_gap_tol=spectral_gap_tol)


# ------------------------------------------------------------- Williamson
@dataclass(frozen=True)
class WilliamsonFrame:
    """Symplectic frame normalizing a hyperbolic quadratic part.

    ``S`` maps old to new coordinates; in the new coordinates the
    quadratic part reads sum a_j y_j eta_j over the real slots plus the
    (c_j, d_j) loxodromic blocks, the expanding subspace is {eta = 0},
    and the contracting one {y = 0}.
    """

    S: SymplecticLinearMap
    a: tuple
    c: tuple
    d: tuple
    block_defect: float

    @property
    def n(self):
        return self.S.n

    @property
    def ell(self):
        return len(self.a)

    @property
    def m(self):
        return len(self.c)

    @property
    def symplectic_defect(self):
        return self.S.defect

    def lambda_slots(self):
        """Per-slot frequencies: reals, then c +- i d per loxodromic block."""
        slots = [complex(v) for v in self.a]
        for cv, dv in zip(self.c, self.d):
            slots.extend([complex(cv, dv), complex(cv, -dv)])
        return tuple(slots)

    def A0_matrix(self):
        """Block diagonal generator of the expanding half-flow on x."""
        A = np.zeros((self.n, self.n))
        for j, v in enumerate(self.a):
            A[j, j] = v
        for k, (cv, dv) in enumerate(zip(self.c, self.d)):
            i = self.ell + 2 * k
            A[i, i] = cv
            A[i + 1, i + 1] = cv
            A[i, i + 1] = -dv
            A[i + 1, i] = dv
        return A

    def normal_quadratic_jet(self, order=2):
        """The normalized quadratic part as a jet in the new coordinates."""
        n = self.n
        terms = {}

        def mono(i, j):
            e = [0] * (2 * n)
            e[i] += 1
            e[n + j] += 1
            return tuple(e)

        for j, v in enumerate(self.a):
            terms[mono(j, j)] = v
        for k, (cv, dv) in enumerate(zip(self.c, self.d)):
            i = self.ell + 2 * k
            terms[mono(i, i)] = cv
            terms[mono(i + 1, i + 1)] = cv
            terms[mono(i, i + 1)] = dv
            terms[mono(i + 1, i)] = -dv
        return Jet(n, order, terms)

    def to_dict(self):
        return {
            "n": self.n,
            "ell": self.ell,
            "m": self.m,
            "a": [float(v) for v in self.a],
            "c": [float(v) for v in self.c],
            "d": [float(v) for v in self.d],
            "S": [[float(v) for v in row] for row in self.S.matrix],
            "symplectic_defect": float(self.symplectic_defect),
        }


def _canonical_real_vector(v, tol=1e-9):
    """Phase-align, normalize, and sign-fix an eigenvector of a real pair."""
    idx = int(np.argmax(np.abs(v)))
    phase = v[idx] / abs(v[idx])
    v = (v / phase).real
    v = v / np.linalg.norm(v)
    for comp in v:
        if abs(comp) > tol:
            if comp < 0:
                v = -v
            break
    return v


def _canonical_complex_vector(v):
    idx = int(np.argmax(np.abs(v)))
    phase = v[idx] / abs(v[idx])
    v = v / phase
    return v / np.linalg.norm(v)


def _eigvec_for(vals, vecs, target, used, tol):
    best, best_dist = None, np.inf
    for i, v in enumerate(vals):
        if i in used:
            continue
        dist = abs(v - target)
        if dist < best_dist:
            best, best_dist = i, dist
    if best is None or best_dist > tol:
        raise NormalizationFailed(
            f"no eigenvector found near {target:.6g}")
    used.add(best)
    return vecs[:, best]


def williamson_normalize(p2, spectrum=None,
                         spectral_gap_tol=DEFAULT_SPECTRAL_GAP_TOL,
                         symp_tol=DEFAULT_SYMPLECTIC_TOL,
                         block_tol=1e-10):
    """Normalize a hyperbolic quadratic Hamiltonian into block form.

    Parameters
    ----------
    p2 : Jet
        Purely quadratic jet (any nonquadratic term is rejected).
    spectrum : SpectrumQuadruples, optional
        Reused if already classified.

    Returns
    -------
    WilliamsonFrame

    Raises
    ------
    ResonantOrMultipleSpectrum
        If eigenvalues coincide (the simple normal form needs distinct ones).
    NormalizationFailed
        If the symplectic pairing of the eigenframe degenerates.
    """
    if isinstance(p2, Jet):
        degs = {sum(e) for e in p2.terms}
        if degs - {2}:
            raise NotWilliamson(
                "quadratic-part normalization needs a purely quadratic jet")
    n = p2.n
    hess = _hessian_of(p2, np.zeros(2 * n))
    L = standard_symplectic(n) @ hess
    if spectrum is None:
        spectrum = classify_spectrum(
            FundamentalMatrix(L, 1.0), spectral_gap_tol=spectral_gap_tol)
    if not spectrum.simple:
        raise ResonantOrMultipleSpectrum(
            "coinciding eigenvalues; simple block form unavailable")

    vals, vecs = np.linalg.eig(L)
    radius = float(np.max(np.abs(vals)))
    match_tol = 1e-6 * radius
    used = set()
    J = standard_symplectic(n)

    reals = sorted((q.lam.real for q in spectrum.quads if q.kind == "real"))
    complexes = sorted(((q.lam.real, abs(q.lam.imag))
                        for q in spectrum.quads if q.kind == "complex-pair"))

    x_cols, xi_cols = [], []
    for lam in reals:
        vp = _canonical_real_vector(
            _eigvec_for(vals, vecs, complex(lam), used, match_tol))
        vm_raw = _canonical_real_vector(
            _eigvec_for(vals, vecs, complex(-lam), used, match_tol))
        pairing = float(vp @ J @ vm_raw)
        if abs(pairing) < 1e-12:
            raise NormalizationFailed(
                f"degenerate pairing for rate {lam:.6g}")
        x_cols.append(vp)
        xi_cols.append(vm_raw / pairing)
    for cv, dv in complexes:
        lam = complex(cv, dv)
        w = _canonical_complex_vector(
            _eigvec_for(vals, vecs, lam, used, match_tol))
        # the conjugate eigenvectors are implied; mark them used
        _eigvec_for(vals, vecs, lam.conjugate(), used, match_tol)
        u = _canonical_complex_vector(
            _eigvec_for(vals, vecs, -lam, used, match_tol))
        _eigvec_for(vals, vecs, (-lam).conjugate(), used, match_tol)
        gamma = complex(w @ J @ u)
        if abs(gamma) < 1e-12:
            raise NormalizationFailed(
                f"degenerate pairing for rate {lam:.6g}")
        u = u * (2.0 / gamma)
        x_cols.extend([w.real, -w.imag])
        xi_cols.extend([u.real, u.imag])

    T = np.column_stack(x_cols + xi_cols)
    try:
        Smat = np.linalg.inv(T)
    except np.linalg.LinAlgError as exc:
        raise NormalizationFailed(f"eigenframe lost rank: {exc}") from exc
    S = SymplecticLinearMap(Smat, tol=symp_tol)

    frame = WilliamsonFrame(
        S=S,
        a=tuple(reals),
        c=tuple(cd[0] for cd in complexes),
        d=tuple(cd[1] for cd in complexes),
        block_defect=0.0,
    )
    pulled = p2.compose_linear(T)
    target = frame.normal_quadratic_jet()
    diff = pulled - target
    defect = max((abs(v) for v in diff.terms.values()), default=0.0)
    if defect > block_tol * max(1.0, radius):
        raise NormalizationFailed(
            f"block-form defect {defect:.3e} exceeds {block_tol:.1e}")
    return WilliamsonFrame(S=S, a=frame.a, c=frame.c, d=frame.d,
                           block_defect=float(defect))


# ---------------------------------------------------------- complexification
class ComplexSymplecticMap:
    """Complex-symplectic change splitting each loxodromic pair."""

    def __init__(self, ell, m):
        if m < 1:
            raise NoComplexBlocks("frame has no loxodromic blocks")
        self.ell = ell
        self.m = m
        self.n = ell + 2 * m
        self.C, self.Cinv = loxodromic_complex_matrix(ell, m)

    def apply(self, point):
        return self.C @ np.asarray(point, dtype=complex)

    def invert(self, zeta):
        return self.Cinv @ np.asarray(zeta, dtype=complex)

    def form_defect(self):
        J = standard_symplectic(self.n)
        return float(np.max(np.abs(self.C.T @ J @ self.C - J)))


def complexify(frame):
    """Complex coordinates diagonalizing the loxodromic blocks of a frame."""
    if frame.m == 0:
        raise NoComplexBlocks("frame has no loxodromic blocks")
    return ComplexSymplecticMap(frame.ell, frame.m)


# ------------------------------------------------------------- Lyapunov norm
@dataclass(frozen=True)
class AnisotropicNorm:
    """Positive-definite matrix defining |v|^2 = <B0 v, v> on a block."""

    b0: np.ndarray

    @property
    def n(self):
        return self.b0.shape[0]

    def norm(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise DimensionMismatch(
                f"vector of shape {v.shape}, expected ({self.n},)")
        return float(np.sqrt(v @ self.b0 @ v))

    def identity_defect(self, A0):
        A0 = np.asarray(A0, dtype=float)
        return float(np.max(np.abs(A0.T @ self.b0 + self.b0 @ A0
                                   - np.eye(self.n))))

    @classmethod
    def euclidean(cls, n):
        return cls(b0=np.eye(n))


def lyapunov_B0(A0):
    """Solve A0^T B0 + B0 A0 = I for the anisotropic norm matrix.

    ``A0`` must have spectrum in the open right half plane.  The solution
    equals the integral of exp(-s A0^T) exp(-s A0) over s >= 0; the
    equation is solved directly rather than by quadrature.
    """
    A0 = np.asarray(A0, dtype=float)
    vals = np.linalg.eigvals(A0)
    if np.any(vals.real <= 0):
        worst = vals[np.argmin(vals.real)]
        raise UnstableA0(f"eigenvalue {worst:.6g} has Re <= 0")
    B = scipy.linalg.solve_continuous_lyapunov(A0.T, np.eye(A0.shape[0]))
    B = (B + B.T) / 2.0
    eigs = np.linalg.eigvalsh(B)
    if np.any(eigs <= 0):
        raise UnstableA0("Lyapunov solution not positive definite")
    norm = AnisotropicNorm(b0=B)
    defect = norm.identity_defect(A0)
    if defect > 1e-12 * max(1.0, float(np.max(np.abs(A0)))):
        raise UnstableA0(f"Lyapunov identity defect {defect:.3e}")
    return norm


def anorm(B, v):
    """Anisotropic norm sqrt(<B0 v, v>) of an n-vector."""
    return B.norm(v)
