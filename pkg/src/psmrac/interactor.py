"""Modified left interactor matrices and the high-frequency gain.

A modified left interactor is a lower-triangular polynomial matrix xi_m(s)
with monic, strictly stable diagonal entries such that the limit
Kp = lim_{s->inf} xi_m(s) G(s) is finite and nonsingular.  Only diagonal
interactors diag{(s+a)^{l_i}} are synthesized automatically; a general
triangular xi_m is accepted as user input but never searched for.

The LDS decomposition Kp = L_s D_s S (L_s unit lower triangular, D_s a
signed diagonal with free positive magnitudes, S symmetric positive
definite) exists whenever all leading principal minors of Kp are nonzero,
and supplies the minimal gain knowledge (minor signs) that the adaptive
law needs.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import AssumptionError, DimensionError
from .polymatrix import Polynomial, PolyMatrix, poly_roots, polymat_mul


class InteractorBundle:
    """Lower-triangular interactor matrix with stability bookkeeping."""

    def __init__(self, xi_m):
        if xi_m.rows != xi_m.cols:
            raise DimensionError(f"interactor must be square, got {xi_m.shape}")
        if not xi_m.is_lower_triangular():
            raise DimensionError("interactor must be lower triangular")
        degrees = []
        for i in range(xi_m.rows):
            d = xi_m[i, i]
            if d.degree < 1:
                raise AssumptionError(f"diagonal entry {i + 1} must have degree >= 1")
            if not d.is_monic:
                raise AssumptionError(f"diagonal entry {i + 1} must be monic")
            roots = poly_roots(d)
            if np.max(roots.real) >= 0:
                raise AssumptionError(
                    f"diagonal entry {i + 1} has unstable roots {roots}")
            degrees.append(d.degree)
        self.xi_m = xi_m
        self.M = xi_m.rows
        self.diag_degrees = tuple(degrees)
        self.d_m = xi_m.max_degree

    @classmethod
    def diagonal(cls, degrees, a):
        """diag{(s+a)^{l_i}} for a > 0."""
        if a <= 0:
            raise AssumptionError(f"interactor pole location a={a} must be positive")
        M = len(degrees)
        base = Polynomial([a, 1.0])
        entries = [[Polynomial.zero() for _ in range(M)] for _ in range(M)]
        for i, l in enumerate(degrees):
            entries[i][i] = base ** int(l)
        return cls(PolyMatrix(entries))

    @property
    def is_diagonal(self):
        for i in range(self.M):
            for j in range(i):
                if not self.xi_m[i, j].is_zero:
                    return False
        return True

    def eval(self, s):
        return self.xi_m.eval(s)

    def det(self):
        """Product of the diagonal entries (triangular determinant)."""
        out = Polynomial.one()
        for i in range(self.M):
            out = out * self.xi_m[i, i]
        return out

    def inverse_over_denominator(self):
        """Polynomial matrix X and q = det(xi_m) with xi_m^{-1} = X / q.

        Solved column by column by forward substitution; every division by a
        diagonal entry is exact up to roundoff because X holds the adjugate
        entries of a triangular polynomial matrix.
        """
        q = self.det()
        M = self.M
        X = [[Polynomial.zero() for _ in range(M)] for _ in range(M)]
        for j in range(M):
            for i in range(j, M):
                rhs = q if i == j else Polynomial.zero()
                for k in range(j, i):
                    rhs = rhs - self.xi_m[i, k] * X[k][j]
                quot, rem = rhs.divmod(self.xi_m[i, i])
                if not rem.allclose(Polynomial.zero(), tol=1e-8):
                    raise AssumptionError(
                        "interactor inverse is not polynomial over det; "
                        f"remainder {rem} at entry ({i + 1},{j + 1})")
                X[i][j] = quot
        return PolyMatrix(X), q

    def __repr__(self):
        return f"InteractorBundle(M={self.M}, degrees={self.diag_degrees})"


def leading_minors(K):
    """Leading principal minors by the Gaussian-elimination pivot recursion.

    Returns (minors, d_star) with minors[i] the (i+1)x(i+1) leading minor and
    d_star[i] = minors[i] / minors[i-1] the elimination pivots.
    """
    K = np.asarray(K, dtype=float)
    M = K.shape[0]
    if K.shape != (M, M):
        raise DimensionError(f"square matrix required, got {K.shape}")
    work = K.copy()
    minors = np.empty(M)
    d_star = np.empty(M)
    running = 1.0
    for k in range(M):
        pivot = work[k, k]
        d_star[k] = pivot
        running *= pivot
        minors[k] = running
        if k + 1 < M:
            if pivot == 0.0:
                # elimination breaks down; remaining minors via direct determinants
                for j in range(k, M):
                    minors[j] = np.linalg.det(K[: j + 1, : j + 1])
                    d_star[j] = minors[j] / minors[j - 1] if j and minors[j - 1] else np.nan
                break
            work[k + 1:, k:] -= np.outer(work[k + 1:, k] / pivot, work[k, k:])
    return minors, d_star


@dataclass
class HighFrequencyGain:
    """Kp = lim xi_m(s) G(s) with its leading-minor data."""

    Kp: np.ndarray
    minors: np.ndarray
    signs: np.ndarray
    d_star: np.ndarray

    @property
    def M(self):
        return self.Kp.shape[0]

    def minors_nonzero(self, rel=1e-10):
        scale = max(1.0, float(np.max(np.abs(self.Kp))))
        return all(abs(self.minors[i]) > rel * scale ** (i + 1) for i in range(self.M))


def high_freq_gain(G, xi):
    """High-frequency gain of G(s) for the interactor xi.

    Forms xi_m(s) * num(G)(s); the limit is the coefficient matrix of degree
    deg(den) in that product.  Any entry of higher degree makes the limit
    infinite (the interactor degrees overshoot the row relative degrees);
    a singular limit means they undershoot or G is rank deficient.
    """
    if xi.M != G.shape[0]:
        raise DimensionError(
            f"interactor size {xi.M} does not match G rows {G.shape[0]}")
    if not G.strictly_proper:
        raise AssumptionError("G must be strictly proper")
    product = polymat_mul(xi.xi_m, G.numerator)
    d = G.denominator.degree
    M = G.shape[0]
    Kp = np.zeros((M, M))
    coeff_scale = max(1.0, max(np.max(np.abs(e.coeffs))
                               for row in product.entries for e in row))
    for i in range(M):
        for j in range(M):
            e = product.entries[i][j]
            if e.degree > d:
                high = np.max(np.abs(e.coeffs[d + 1:]))
                if high > 1e-9 * coeff_scale:
                    raise AssumptionError(
                        "high-frequency gain is infinite: interactor degrees "
                        f"too high at entry ({i + 1},{j + 1})")
            if e.degree >= d:
                Kp[i, j] = e.coeffs[d]
    det = np.linalg.det(Kp)
    if abs(det) <= 1e-10 * max(np.linalg.norm(Kp), 1e-30) ** M:
        raise AssumptionError(
            "high-frequency gain is singular: interactor degrees too low "
            "or G rank deficient")
    minors, d_star = leading_minors(Kp)
    return HighFrequencyGain(Kp, minors, np.sign(minors), d_star)


def find_diagonal_interactor(G, a):
    """Smallest diagonal interactor diag{(s+a)^{l_i}} giving a finite nonsingular gain.

    For a diagonal candidate the limit of row i is finite iff l_i does not
    exceed the row relative degree, and nonzero iff it equals it; so the
    lexicographically smallest feasible degree tuple is exactly the vector
    of row relative degrees.  If the resulting limit matrix is singular, no
    diagonal interactor exists and a general triangular xi_m must be
    supplied by the user.
    """
    if G.shape[0] != G.shape[1]:
        raise DimensionError(f"G must be square, got {G.shape}")
    if not G.strictly_proper:
        raise AssumptionError("G must be strictly proper")
    d = G.denominator.degree
    degrees = []
    for i in range(G.shape[0]):
        row_deg = max(e.degree for e in G.numerator.entries[i])
        if row_deg < 0:
            raise AssumptionError(
                f"row {i + 1} of G is identically zero; G is rank deficient")
        degrees.append(d - row_deg)
    xi = InteractorBundle.diagonal(degrees, a)
    try:
        high_freq_gain(G, xi)
    except AssumptionError as exc:
        raise AssumptionError(
            "no diagonal interactor exists for this plant; supply a "
            f"triangular xi_m manually ({exc})") from exc
    return xi


@dataclass
class LDSDecomposition:
    """Kp = L_s D_s S with L_s unit lower triangular and S symmetric positive definite."""

    L_s: np.ndarray
    D_s: np.ndarray
    S: np.ndarray
    gamma: np.ndarray
    Theta0_star: np.ndarray

    @property
    def d_s(self):
        """Diagonal of D_s as a vector."""
        return np.diag(self.D_s)

    def reconstruct(self):
        return self.L_s @ self.D_s @ self.S


def lds_decompose(kp, gamma=None):
    """LDS decomposition of a high-frequency gain matrix.

    Accepts a HighFrequencyGain or a raw square matrix.  From the LDU
    factorization Kp = L D U (D = diag of pivots d*_i) set
    D_s = diag(sign(d*_i) gamma_i), S = U^T D_s^{-1} D U and
    L_s = L D_s U^{-T} D_s^{-1}; then L_s D_s S = L D U = Kp, S is symmetric
    positive definite, and L_s is unit lower triangular.
    """
    if not isinstance(kp, HighFrequencyGain):
        K = np.asarray(kp, dtype=float)
        minors, d_star = leading_minors(K)
        kp = HighFrequencyGain(K, minors, np.sign(minors), d_star)
    M = kp.M
    if gamma is None:
        gamma = np.ones(M)
    gamma = np.asarray(gamma, dtype=float).ravel()
    if gamma.size != M:
        raise DimensionError(f"gamma has size {gamma.size}, expected {M}")
    if np.any(gamma <= 0):
        raise AssumptionError("all gamma_i must be positive")
    scale = max(1.0, float(np.max(np.abs(kp.Kp))))
    for i in range(M):
        if not np.isfinite(kp.minors[i]) or abs(kp.minors[i]) <= 1e-12 * scale ** (i + 1):
            raise AssumptionError(f"Assumption A4 violated at index {i + 1}: "
                                  f"leading minor {kp.minors[i]}")

    # Doolittle LDU without pivoting (pivots are exactly the d*_i ratios).
    K = kp.Kp.astype(float)
    L = np.eye(M)
    U = np.eye(M)
    work = K.copy()
    d = np.empty(M)
    for k in range(M):
        d[k] = work[k, k]
        L[k + 1:, k] = work[k + 1:, k] / d[k]
        U[k, k + 1:] = work[k, k + 1:] / d[k]
        work[k + 1:, k + 1:] -= np.outer(L[k + 1:, k], work[k, k + 1:])

    ds = np.sign(d) * gamma
    D_s = np.diag(ds)
    S = U.T @ np.diag(np.abs(d) / gamma) @ U
    Uinv_t = scipy.linalg.solve_triangular(U, np.eye(M), lower=False).T
    L_s = L @ D_s @ Uinv_t @ np.diag(1.0 / ds)

    recon = L_s @ D_s @ S
    err = np.max(np.abs(recon - kp.Kp)) / scale
    if err > 1e-9:
        raise AssumptionError(f"LDS reconstruction failed: relative error {err:.2e}")
    Theta0 = scipy.linalg.solve_triangular(L_s, np.eye(M), lower=True) - np.eye(M)
    return LDSDecomposition(L_s, D_s, S, gamma, Theta0)
