"""Real polynomial and polynomial-matrix algebra.

Coefficients are stored in ascending degree order: ``coeffs[k]`` multiplies
``s**k``.  Every arithmetic result is trimmed back to a canonical form whose
leading coefficient is nonzero (the zero polynomial is stored as ``[0.0]``),
so degree bookkeeping stays exact through long chains of operations.

Transfer matrices of state-space systems are produced by the
Faddeev-LeVerrier resolvent recursion: ``C (sI - A)^{-1} B`` is returned as a
polynomial numerator matrix over the monic characteristic polynomial of
``A``.  Root finding goes through the companion matrix so that one QR-based
eigenvalue kernel serves both polynomial roots and matrix spectra.

All values are immutable after construction; operations are pure functions.
"""

import numpy as np

from .errors import DimensionError

# A trailing coefficient is dropped when |c| < TRIM_REL * (1 + max|coeffs|).
TRIM_REL = 1e-12


def _trim(coeffs):
    c = np.asarray(coeffs, dtype=float).ravel()
    if c.size == 0:
        return np.zeros(1)
    tol = TRIM_REL * (1.0 + np.max(np.abs(c)))
    last = c.size - 1
    while last > 0 and abs(c[last]) < tol:
        last -= 1
    c = c[: last + 1].copy()
    if c.size == 1 and abs(c[0]) < tol:
        c[0] = 0.0
    return c


class Polynomial:
    """Real polynomial with ascending coefficients, canonically trimmed."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        self.coeffs = _trim(coeffs)

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls):
        return cls([0.0])

    @classmethod
    def one(cls):
        return cls([1.0])

    @classmethod
    def monomial(cls, degree, coeff=1.0):
        c = np.zeros(degree + 1)
        c[degree] = coeff
        return cls(c)

    @classmethod
    def from_roots(cls, roots):
        """Monic polynomial with the given (conjugate-closed) roots."""
        c = np.atleast_1d(np.poly(np.asarray(roots))) if len(roots) else np.array([1.0])
        if np.max(np.abs(np.imag(c))) > 1e-9 * (1.0 + np.max(np.abs(c))):
            raise ValueError("roots are not closed under conjugation")
        return cls(np.real(c)[::-1])

    # -- structure ----------------------------------------------------

    @property
    def degree(self):
        """Degree; -1 for the zero polynomial."""
        if self.is_zero:
            return -1
        return self.coeffs.size - 1

    @property
    def is_zero(self):
        return self.coeffs.size == 1 and self.coeffs[0] == 0.0

    @property
    def is_monic(self):
        return not self.is_zero and abs(self.coeffs[-1] - 1.0) < 1e-9

    def monic(self):
        if self.is_zero:
            raise ValueError("cannot normalize the zero polynomial")
        return Polynomial(self.coeffs / self.coeffs[-1])

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        other = _as_poly(other)
        n = max(self.coeffs.size, other.coeffs.size)
        c = np.zeros(n)
        c[: self.coeffs.size] += self.coeffs
        c[: other.coeffs.size] += other.coeffs
        return Polynomial(c)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self.coeffs)

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) + (-self)

    def __mul__(self, other):
        if np.isscalar(other):
            return Polynomial(self.coeffs * float(other))
        other = _as_poly(other)
        if self.is_zero or other.is_zero:
            return Polynomial.zero()
        return Polynomial(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __pow__(self, k):
        if k < 0 or int(k) != k:
            raise ValueError("only nonnegative integer powers")
        out = Polynomial.one()
        for _ in range(int(k)):
            out = out * self
        return out

    def __call__(self, s):
        """Horner evaluation; accepts real, complex, or arrays thereof."""
        out = np.zeros_like(np.asarray(s), dtype=complex) if np.iterable(s) else 0.0 + 0.0j
        for c in self.coeffs[::-1]:
            out = out * s + c
        return out

    def divmod(self, divisor):
        """Long division: self = q*divisor + r with deg r < deg divisor."""
        divisor = _as_poly(divisor)
        if divisor.is_zero:
            raise ZeroDivisionError("polynomial division by zero")
        q, r = np.polydiv(self.coeffs[::-1], divisor.coeffs[::-1])
        return Polynomial(np.atleast_1d(q)[::-1]), Polynomial(np.atleast_1d(r)[::-1])

    def allclose(self, other, tol=1e-9):
        other = _as_poly(other)
        n = max(self.coeffs.size, other.coeffs.size)
        a = np.zeros(n)
        b = np.zeros(n)
        a[: self.coeffs.size] = self.coeffs
        b[: other.coeffs.size] = other.coeffs
        scale = max(1.0, np.max(np.abs(a)), np.max(np.abs(b)))
        return bool(np.max(np.abs(a - b)) <= tol * scale)

    def __repr__(self):
        return f"Polynomial({self.coeffs.tolist()})"


def _as_poly(x):
    if isinstance(x, Polynomial):
        return x
    if np.isscalar(x):
        return Polynomial([float(x)])
    return Polynomial(x)


def poly_roots(p):
    """All roots (with multiplicity) via the companion-matrix eigenproblem.

    Sorted by real part then imaginary part for determinism.
    """
    p = _as_poly(p)
    if p.is_zero:
        raise ValueError("roots undefined for the zero polynomial")
    if p.degree < 1:
        raise ValueError("roots require degree >= 1")
    c = p.coeffs / p.coeffs[-1]
    n = p.degree
    comp = np.zeros((n, n))
    comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -c[:-1]
    return np.sort_complex(np.linalg.eigvals(comp))


def root_residual(p, root):
    """Scaled residual |p(z)| / (|lead| * max(1, |z|)^deg) of a claimed root."""
    p = _as_poly(p)
    return abs(p(root)) / (abs(p.coeffs[-1]) * max(1.0, abs(root)) ** p.degree)


class PolyMatrix:
    """Matrix with Polynomial entries."""

    __slots__ = ("entries", "rows", "cols")

    def __init__(self, entries):
        self.entries = [[_as_poly(e) for e in row] for row in entries]
        self.rows = len(self.entries)
        self.cols = len(self.entries[0]) if self.rows else 0
        for row in self.entries:
            if len(row) != self.cols:
                raise DimensionError("ragged rows in polynomial matrix")

    @classmethod
    def zeros(cls, rows, cols):
        return cls([[Polynomial.zero() for _ in range(cols)] for _ in range(rows)])

    @classmethod
    def identity(cls, m):
        return cls([[Polynomial.one() if i == j else Polynomial.zero() for j in range(m)]
                    for i in range(m)])

    @classmethod
    def from_coeff_array(cls, arr):
        """Build from array of shape (rows, cols, ncoeff), ascending degree."""
        arr = np.asarray(arr, dtype=float)
        return cls([[Polynomial(arr[i, j]) for j in range(arr.shape[1])]
                    for i in range(arr.shape[0])])

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def max_degree(self):
        return max(max(e.degree for e in row) for row in self.entries)

    def eval(self, s):
        """Entrywise evaluation at a scalar point; returns a complex matrix."""
        out = np.empty((self.rows, self.cols), dtype=complex)
        for i in range(self.rows):
            for j in range(self.cols):
                out[i, j] = self.entries[i][j](s)
        return out

    def __matmul__(self, other):
        return polymat_mul(self, other)

    def __add__(self, other):
        if not isinstance(other, PolyMatrix) or other.shape != self.shape:
            raise DimensionError(f"shape mismatch in add: {self.shape} vs {getattr(other, 'shape', None)}")
        return PolyMatrix([[self.entries[i][j] + other.entries[i][j] for j in range(self.cols)]
                           for i in range(self.rows)])

    def __sub__(self, other):
        if not isinstance(other, PolyMatrix) or other.shape != self.shape:
            raise DimensionError(f"shape mismatch in sub: {self.shape} vs {getattr(other, 'shape', None)}")
        return PolyMatrix([[self.entries[i][j] - other.entries[i][j] for j in range(self.cols)]
                           for i in range(self.rows)])

    def scale(self, c):
        return PolyMatrix([[e * c for e in row] for row in self.entries])

    def transpose(self):
        return PolyMatrix([[self.entries[i][j] for i in range(self.rows)]
                           for j in range(self.cols)])

    def is_lower_triangular(self, tol=0.0):
        for i in range(self.rows):
            for j in range(i + 1, self.cols):
                e = self.entries[i][j]
                if not e.is_zero and np.max(np.abs(e.coeffs)) > tol:
                    return False
        return True

    def __repr__(self):
        return f"PolyMatrix({self.rows}x{self.cols}, max_degree={self.max_degree})"


def polymat_mul(P, Q):
    """Polynomial matrix product by entrywise convolution sums."""
    if P.cols != Q.rows:
        raise DimensionError(f"inner dimensions differ: {P.cols} != {Q.rows}")
    out = [[Polynomial.zero() for _ in range(Q.cols)] for _ in range(P.rows)]
    for i in range(P.rows):
        for j in range(Q.cols):
            acc = Polynomial.zero()
            for k in range(P.cols):
                acc = acc + P.entries[i][k] * Q.entries[k][j]
            out[i][j] = acc
    return PolyMatrix(out)


def circle_samples(count, radius):
    """`count` points uniformly on the circle of the given radius."""
    k = np.arange(count)
    return radius * np.exp(2j * np.pi * k / count)


def coeffs_from_circle(values, radius):
    """Recover ascending polynomial coefficients from values on a circle.

    Inverse DFT of samples at radius*exp(2*pi*i*k/K); exact for polynomials
    of degree < K.  Returns complex coefficients; callers with real
    polynomials take the real part.
    """
    values = np.asarray(values, dtype=complex)
    k = values.size
    # forward DFT: sum_j f(R w^j) w^{-jk} / K = c_k R^k for deg < K
    coeffs = np.fft.fft(values) / k
    return coeffs / radius ** np.arange(k)


def det_polynomial(pm, radius=None):
    """Determinant of a square PolyMatrix via evaluation and interpolation."""
    if pm.rows != pm.cols:
        raise DimensionError(f"determinant needs a square matrix, got {pm.shape}")
    bound = sum(max(max(e.degree, 0) for e in row) for row in pm.entries)
    count = bound + 1
    if radius is None:
        scale = max(max(np.max(np.abs(e.coeffs)) for e in row) for row in pm.entries)
        radius = max(1.0, scale ** (1.0 / max(1, bound)))
    pts = circle_samples(count, radius)
    vals = np.array([np.linalg.det(pm.eval(s)) for s in pts])
    coeffs = coeffs_from_circle(vals, radius)
    return Polynomial(np.real(coeffs))


class PoleEvaluationError(ValueError):
    """Evaluation of a rational matrix at (or too near) a pole."""

    def __init__(self, s):
        super().__init__(f"evaluation at pole s={s}")
        self.s = s


class RationalMatrix:
    """Polynomial numerator matrix over a scalar monic denominator."""

    __slots__ = ("numerator", "denominator")

    def __init__(self, numerator, denominator):
        denominator = _as_poly(denominator)
        if denominator.is_zero:
            raise ValueError("zero denominator")
        lead = denominator.coeffs[-1]
        if abs(lead - 1.0) > 1e-12:
            numerator = numerator.scale(1.0 / lead)
            denominator = Polynomial(denominator.coeffs / lead)
        self.numerator = numerator
        self.denominator = denominator

    @property
    def shape(self):
        return self.numerator.shape

    @property
    def strictly_proper(self):
        d = self.denominator.degree
        return all(e.degree < d for row in self.numerator.entries for e in row)

    def eval(self, s):
        den = self.denominator(s)
        scale = np.max(np.abs(self.denominator.coeffs)) * max(1.0, abs(s)) ** self.denominator.degree
        if abs(den) <= 1e-12 * scale:
            raise PoleEvaluationError(s)
        return self.numerator.eval(s) / den

    def __repr__(self):
        return f"RationalMatrix({self.shape}, den_degree={self.denominator.degree})"


def eval_rational(G, s):
    """Evaluate a RationalMatrix at a complex point."""
    return G.eval(s)


def faddeev_adjugate(A):
    """Faddeev-LeVerrier recursion for adj(sI - A) and det(sI - A).

    Returns
    -------
    char_coeffs : ndarray
        Ascending coefficients of the monic characteristic polynomial.
    adj_terms : list of ndarray
        Matrices ``B_k`` with adj(sI - A) = sum_k B_k s^(n-1-k).
    residual : float
        Relative size of the terminating identity A @ B_{n-1} + a_n I.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got {A.shape}")
    n = A.shape[0]
    if n < 1:
        raise DimensionError("A must be at least 1x1")
    terms = [np.eye(n)]
    a = np.empty(n + 1)
    a[0] = 1.0
    a[1] = -np.trace(A)
    for k in range(1, n):
        Bk = A @ terms[-1] + a[k] * np.eye(n)
        terms.append(Bk)
        a[k + 1] = -np.trace(A @ Bk) / (k + 1)
    final = A @ terms[-1] + a[n] * np.eye(n)
    scale = np.linalg.norm(A) * np.linalg.norm(terms[-1]) + abs(a[n]) + 1.0
    residual = np.linalg.norm(final) / scale
    return a[::-1].copy(), terms, residual


def faddeev_resolvent(A, B, C):
    """Transfer matrix C (sI - A)^{-1} B as a strictly proper RationalMatrix."""
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise DimensionError(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise DimensionError(f"B has {B.shape[0]} rows, expected n={n}")
    if C.shape[1] != n:
        raise DimensionError(f"C has {C.shape[1]} columns, expected n={n}")
    char_coeffs, adj_terms, _ = faddeev_adjugate(A)
    p, m = C.shape[0], B.shape[1]
    num = np.zeros((p, m, n))
    for k, Bk in enumerate(adj_terms):
        num[:, :, n - 1 - k] = C @ Bk @ B
    return RationalMatrix(PolyMatrix.from_coeff_array(num), Polynomial(char_coeffs))
