"""LTI plant representation and structural analysis.

Covers the square M-input/M-output state-space plant, numerical rank and
observability checks for a partial-state selector C0, the coordinate
transform that puts C0 into [I, 0] form, reduced-order observer design by
Sylvester-equation pole placement, and the built-in NASA GTM 8-state
lateral+longitudinal model used throughout the simulation studies.

Transmission zeros are computed from the transfer-matrix determinant by
sampling and interpolation, which is adequate for the plant orders handled
here (n <= 12) and avoids a generalized-pencil QZ kernel.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import AssumptionError, DimensionError
from .polymatrix import (Polynomial, PolyMatrix, circle_samples,
                         coeffs_from_circle, faddeev_adjugate,
                         faddeev_resolvent, poly_roots)


class StateSpace:
    """Square LTI plant dx/dt = A x + B u, y = C x with M inputs and outputs."""

    def __init__(self, A, B, C):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        C = np.atleast_2d(np.asarray(C, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, expected n={n}")
        if C.shape[1] != n:
            raise DimensionError(f"C has {C.shape[1]} columns, expected n={n}")
        if B.shape[1] != C.shape[0]:
            raise DimensionError(
                f"plant must be square: B has {B.shape[1]} inputs, C has {C.shape[0]} outputs")
        M = B.shape[1]
        if not (1 <= M <= n):
            raise DimensionError(f"need n >= M >= 1, got n={n}, M={M}")
        self.A, self.B, self.C = A, B, C
        self.n, self.M = n, M

    def transfer(self):
        """G(s) = C (sI - A)^{-1} B."""
        return faddeev_resolvent(self.A, self.B, self.C)

    def partial_transfer(self, C0):
        """G0(s) = C0 (sI - A)^{-1} B for a selector matrix C0."""
        return faddeev_resolvent(self.A, self.B, C0)

    def __repr__(self):
        return f"StateSpace(n={self.n}, M={self.M})"


# State ordering of the GTM model: body-axis velocities, angular rates,
# and the pitch/roll attitude angles.  Outputs are theta (state 4) and
# phi (state 8); the printed output matrix in the source data is malformed
# (7 columns for 8 states), so C is built from the stated output definition.
GTM_STATE_LABELS = ("u_b", "w_b", "q_b", "theta", "v_b", "r_b", "p_b", "phi")
GTM_INPUT_LABELS = ("delta_e", "delta_a")
GTM_OUTPUT_LABELS = ("theta", "phi")


def gtm_model():
    """Linearized NASA GTM aircraft model: 8 states, 2 inputs, 2 outputs."""
    A = np.array([
        [-0.019,  0.1364,  -9.7778, -32.0829, -0.0018,   -0.0004,  0.0,     0.0],
        [-0.2804, -2.7567, 120.1968, -2.42,   -0.0001,    0.0,     0.0004, -0.0061],
        [0.0205,  -0.3106, -3.5393,   0.0,     0.007,     0.0328, -0.0014,  0.0],
        [0.0,      0.0,     1.0,      0.0,     0.0,      -0.0002,  0.0,     0.0002],
        [0.0,     -0.0027,  0.0,     -0.0005, -0.5765, -125.9974, 10.4690, 32.0829],
        [0.0,      0.0,    -0.0255,   0.0,     0.2245,   -1.4053, -0.2794,  0.0],
        [0.0,      0.0,     0.0018,   0.0,    -0.629,     1.9689, -5.4759,  0.0],
        [0.0,      0.0,     0.0,     -0.0002,  0.0,       0.0754,  1.0,     0.0],
    ])
    B = np.array([
        [0.0056, -0.0423],
        [-0.6119, 0.1579],
        [-0.7486, 0.0859],
        [0.0,     0.0],
        [0.0,    -0.0223],
        [0.0,    -0.0223],
        [0.0,    -0.7657],
        [0.0,     0.0],
    ])
    C = np.zeros((2, 8))
    C[0, 3] = 1.0
    C[1, 7] = 1.0
    return StateSpace(A, B, C)


def load_state_space(path):
    """Read plant matrices from a plain-text file.

    The file holds three labeled blocks ``A``, ``B``, ``C``; each label on
    its own line followed by whitespace-separated matrix rows.  ``#`` starts
    a comment.
    """
    blocks = {}
    current = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line in ("A", "B", "C"):
                current = line
                blocks[current] = []
                continue
            if current is None:
                raise DimensionError(
                    f"{path}:{lineno}: matrix rows before any A/B/C label")
            try:
                blocks[current].append([float(tok) for tok in line.split()])
            except ValueError:
                raise DimensionError(
                    f"{path}:{lineno}: unparsable matrix row {line!r}") from None
    missing = {"A", "B", "C"} - set(blocks)
    if missing:
        raise DimensionError(f"{path}: missing blocks {sorted(missing)}")
    return StateSpace(np.array(blocks["A"]), np.array(blocks["B"]), np.array(blocks["C"]))


class PartialStateSelector:
    """Full-row-rank selector C0 defining the measured signal y0 = C0 x."""

    def __init__(self, C0):
        C0 = np.atleast_2d(np.asarray(C0, dtype=float))
        svals = np.linalg.svd(C0, compute_uv=False)
        if svals.size == 0 or svals[-1] <= 1e-9 * svals[0]:
            raise DimensionError(
                f"C0 is rank deficient: singular values {svals}")
        self.C0 = C0
        self.n0 = C0.shape[0]

    @classmethod
    def from_states(cls, n, states):
        """Selector picking 1-indexed state components."""
        C0 = np.zeros((len(states), n))
        for row, k in enumerate(states):
            if not 1 <= k <= n:
                raise DimensionError(f"state index {k} out of range 1..{n}")
            C0[row, k - 1] = 1.0
        return cls(C0)

    def __repr__(self):
        return f"PartialStateSelector(n0={self.n0})"


@dataclass
class ObservabilityReport:
    observable: bool
    rank: int
    n: int
    singular_values: np.ndarray
    gap: float


def check_observable(A, C0):
    """Numerical observability of (A, C0) from the stacked observability matrix."""
    A = np.asarray(A, dtype=float)
    C0 = np.atleast_2d(np.asarray(C0, dtype=float))
    n = A.shape[0]
    if C0.shape[1] != n:
        raise DimensionError(f"C0 has {C0.shape[1]} columns, expected n={n}")
    blocks = [C0]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    obs = np.vstack(blocks)
    svals = np.linalg.svd(obs, compute_uv=False)
    tol = max(obs.shape) * np.finfo(float).eps * svals[0] if svals[0] > 0 else 0.0
    rank = int(np.sum(svals > tol))
    gap = svals[n - 1] / svals[0] if rank >= n and svals[0] > 0 else 0.0
    return ObservabilityReport(rank == n, rank, n, svals[:n], gap)


def build_transform(C0):
    """Invertible P with C0 P^{-1} = [I, 0].

    The first n0 rows of P are C0; the remaining rows are an orthonormal
    basis of the orthogonal complement of the row space, which keeps the
    condition number of P close to that of C0 itself.
    """
    C0 = np.atleast_2d(np.asarray(C0, dtype=float))
    n0, n = C0.shape
    svals = np.linalg.svd(C0, compute_uv=False)
    if svals[-1] <= 1e-9 * svals[0]:
        raise DimensionError("C0 is rank deficient; no transform exists")
    if n0 == n:
        return C0.copy()
    _, _, Vt = np.linalg.svd(C0)
    completion = Vt[n0:, :]
    return np.vstack([C0, completion])


def transmission_zeros(sys):
    """Transmission zeros of the square transfer matrix G(s).

    det of the numerator polynomial matrix equals z(s) * den(s)^(M-1) where
    den is the characteristic polynomial; the quotient z is recovered by
    sampling det(num)/den^(M-1) on a circle enclosing the plant spectrum and
    interpolating (degree bound n - M).
    """
    G = sys.transfer()
    num, den = G.numerator, G.denominator
    n, M = sys.n, sys.M
    radius = 1.0 + max(np.max(np.abs(np.linalg.eigvals(sys.A))), 1.0)
    quot_bound = max(n - M, 0)
    pts = circle_samples(quot_bound + 1, radius)
    num_vals = [num.eval(s) for s in pts]
    det_vals = np.array([np.linalg.det(v) for v in num_vals])
    den_vals = np.array([den(s) ** (M - 1) for s in pts])
    num_scale = max(1.0, max(np.linalg.norm(v) for v in num_vals))
    if np.max(np.abs(det_vals)) <= 1e-12 * num_scale ** M:
        raise AssumptionError("rank-deficient transfer matrix: det(num) vanishes identically")
    quot = coeffs_from_circle(det_vals / den_vals, radius)
    z = Polynomial(np.real(quot))
    if z.is_zero:
        raise AssumptionError("rank-deficient transfer matrix: det(num) vanishes identically")
    if z.degree < 1:
        return np.array([], dtype=complex)
    return poly_roots(z)


@dataclass
class ObserverDesign:
    """Reduced-order observer data in the transformed coordinates xbar = P x."""

    P: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    L_r: np.ndarray
    Lambda: Polynomial
    N1: PolyMatrix
    N2: PolyMatrix
    poles: np.ndarray
    Pinv: np.ndarray = field(repr=False, default=None)

    @property
    def F(self):
        """Observer system matrix A22 - L_r A12."""
        return self.A22 - self.L_r @ self.A12

    @property
    def w_input_u(self):
        return self.B2 - self.L_r @ self.B1

    @property
    def w_input_y0(self):
        return self.F @ self.L_r + self.A21 - self.L_r @ self.A11


def _real_block_spectrum(poles):
    """Real block-diagonal matrix with the requested conjugate-closed spectrum."""
    poles = np.asarray(poles, dtype=complex)
    remaining = list(poles)
    blocks = []
    while remaining:
        p = remaining.pop(0)
        if abs(p.imag) < 1e-12:
            blocks.append(np.array([[p.real]]))
            continue
        match = None
        for k, q in enumerate(remaining):
            if abs(q - np.conj(p)) < 1e-9 * (1 + abs(p)):
                match = k
                break
        if match is None:
            raise DimensionError(f"pole set not closed under conjugation near {p}")
        remaining.pop(match)
        blocks.append(np.array([[p.real, p.imag], [-p.imag, p.real]]))
    return scipy.linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))


def design_reduced_observer(sys, sel, poles, seed=0, max_tries=5):
    """Reduced-order observer for xbar2 with prescribed stable spectrum.

    The gain L_r places the eigenvalues of A22 - L_r A12 by the dual
    Sylvester method: solve A22^T X - X F = A12^T Q for a random Q and a
    real block-diagonal F carrying the target spectrum, then L_r = (Q X^{-1})^T.
    Retries with a fresh Q when X is ill conditioned.
    """
    poles = np.asarray(poles, dtype=complex)
    n, n0 = sys.n, sel.n0
    nu = n - n0
    if poles.size != nu:
        raise DimensionError(f"need {nu} observer poles, got {poles.size}")
    if nu and np.max(poles.real) >= 0:
        raise DimensionError(f"observer poles must be strictly stable, got {poles}")
    report = check_observable(sys.A, sel.C0)
    if not report.observable:
        raise AssumptionError(
            f"(A, C0) not observable: rank {report.rank} < n = {report.n}")

    P = build_transform(sel.C0)
    Pinv = np.linalg.inv(P)
    Abar = P @ sys.A @ Pinv
    Bbar = P @ sys.B
    A11, A12 = Abar[:n0, :n0], Abar[:n0, n0:]
    A21, A22 = Abar[n0:, :n0], Abar[n0:, n0:]
    B1, B2 = Bbar[:n0, :], Bbar[n0:, :]

    if nu == 0:
        L_r = np.zeros((0, n0))
        Lam = Polynomial.one()
        N1 = PolyMatrix.zeros(0, sys.M)
        N2 = PolyMatrix.zeros(0, n0)
        return ObserverDesign(P, A11, A12, A21, A22, B1, B2, L_r, Lam, N1, N2,
                              poles, Pinv)

    F = _real_block_spectrum(poles)
    rng = np.random.default_rng(seed)
    conds = []
    L_r = None
    for _ in range(max_tries):
        Q = rng.standard_normal((n0, nu))
        try:
            X = scipy.linalg.solve_sylvester(A22.T, -F, A12.T @ Q)
        except Exception:
            conds.append(np.inf)
            continue
        cond = np.linalg.cond(X)
        conds.append(cond)
        if np.isfinite(cond) and cond < 1e10:
            L_r = np.linalg.solve(X.T, Q.T)
            break
    if L_r is None:
        raise AssumptionError(
            "observer pole placement failed after "
            f"{max_tries} tries; cond(X) = {conds} (repeated poles need "
            "multiplicity <= n0, and targets must avoid eig(A22))")

    Fo = A22 - L_r @ A12
    achieved = np.sort_complex(np.linalg.eigvals(Fo))
    wanted = np.sort_complex(poles)
    if np.max(np.abs(achieved - wanted)) > 1e-6 * (1 + np.max(np.abs(wanted))):
        raise AssumptionError(
            f"placed spectrum {achieved} missed targets {wanted}")

    char_coeffs, adj_terms, _ = faddeev_adjugate(Fo)
    Lam = Polynomial(char_coeffs)
    Gu = B2 - L_r @ B1
    Gy = Fo @ L_r + A21 - L_r @ A11
    num_u = np.zeros((nu, sys.M, nu))
    num_y = np.zeros((nu, n0, nu))
    for k, Bk in enumerate(adj_terms):
        num_u[:, :, nu - 1 - k] = Bk @ Gu
        num_y[:, :, nu - 1 - k] = Bk @ Gy
    N1 = PolyMatrix.from_coeff_array(num_u)
    N2 = PolyMatrix.from_coeff_array(num_y)
    return ObserverDesign(P, A11, A12, A21, A22, B1, B2, L_r, Lam, N1, N2,
                          poles, Pinv)


@dataclass
class ObserverTrajectory:
    t: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    w: np.ndarray

    @property
    def error_norm(self):
        return np.linalg.norm(self.x - self.xhat, axis=1)


def simulate_observer(design, sys, u, x0, w0, t_end, dt):
    """Integrate plant and observer jointly with fixed-step RK4.

    ``u`` is a callable t -> R^M (None for zero input).  The state estimate
    is xhat = P^{-1} [y0; w + L_r y0].
    """
    if dt <= 0:
        raise DimensionError("dt must be positive")
    n, n0 = sys.n, design.A11.shape[0]
    nu = n - n0
    if u is None:
        u = lambda t: np.zeros(sys.M)
    x0 = np.asarray(x0, dtype=float).ravel()
    w0 = np.asarray(w0, dtype=float).ravel()
    if x0.size != n:
        raise DimensionError(f"x0 has size {x0.size}, expected {n}")
    if w0.size != nu:
        raise DimensionError(f"w0 has size {w0.size}, expected {nu}")

    Fo = design.F
    Gu = design.w_input_u
    Gy = design.w_input_y0
    C0 = design.P[:n0, :]

    def deriv(t, z):
        x, w = z[:n], z[n:]
        ut = np.asarray(u(t), dtype=float).ravel()
        y0 = C0 @ x
        dx = sys.A @ x + sys.B @ ut
        dw = Fo @ w + Gu @ ut + Gy @ y0
        return np.concatenate([dx, dw])

    steps = int(np.floor(t_end / dt + 0.5))
    t = np.arange(steps + 1) * dt
    z = np.concatenate([x0, w0])
    X = np.empty((steps + 1, n))
    W = np.empty((steps + 1, nu))
    Xhat = np.empty((steps + 1, n))
    for k in range(steps + 1):
        x, w = z[:n], z[n:]
        y0 = C0 @ x
        X[k] = x
        W[k] = w
        Xhat[k] = design.Pinv @ np.concatenate([y0, w + design.L_r @ y0])
        if k == steps:
            break
        tk = t[k]
        k1 = deriv(tk, z)
        k2 = deriv(tk + dt / 2, z + dt / 2 * k1)
        k3 = deriv(tk + dt / 2, z + dt / 2 * k2)
        k4 = deriv(tk + dt, z + dt * k3)
        z = z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return ObserverTrajectory(t, X, Xhat, W)
