"""Adaptive partial-state feedback controller.

The control law is u = Theta1^T w1 + Theta2^T w2 + Theta20^T y0 + Theta3 r
with regressor filters w1 = A1(s)/Lambda(s)[u] and w2 = A2(s)/Lambda(s)[y0].
Each filter block is realized in controllable canonical form, so a single
chain of length n - n0 per input channel produces all powers s^k/Lambda at
once and the realized spectra are exactly the roots of Lambda (resp. f).

The estimation error

    eps = [0, theta_2^T eta_2, ..., theta_M^T eta_M]^T + Psi xi + ebar

is linear in the parameter errors once the plant matches the reference
model, where ebar = xi_m(s) h(s)[y - y_m] (realized as a proper filter;
no differentiation of the tracking error ever happens), zeta = h(s)[omega],
xi = Theta^T zeta - h(s)[Theta^T omega], and eta_i collects the first i-1
components of ebar.  The normalized gradient laws divide by
m^2 = 1 + zeta^T zeta + xi^T xi + sum eta_i^T eta_i >= 1, which bounds the
update rate regardless of signal size.  No projection or parameter bounding
is applied; divergence is a test failure, not a runtime guard.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


def companion_chain(poly):
    """Controllable-canonical chain matrix for a monic polynomial.

    State k of dz/dt = F z + e_last * v carries s^k / poly [v] for
    k = 0..deg-1; eigenvalues of F are the roots of poly.
    """
    if not poly.is_monic:
        raise DimensionError(f"chain polynomial must be monic, got {poly}")
    d = poly.degree
    F = np.zeros((d, d))
    if d > 1:
        F[:-1, 1:] = np.eye(d - 1)
    F[-1, :] = -poly.coeffs[:d]
    return F


@dataclass
class AdaptationGains:
    """Gain matrices of the gradient laws plus the signed diagonal D_s.

    ``d_s`` carries sign(d*_i) * gamma_i: only the signs of the leading
    principal minors of Kp (and chosen positive magnitudes) enter the law.
    """

    Gamma: np.ndarray
    Gamma_theta: list
    d_s: np.ndarray

    def __post_init__(self):
        self.Gamma = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        self.d_s = np.asarray(self.d_s, dtype=float).ravel()
        _require_spd(self.Gamma, "Gamma")
        for i, g in enumerate(self.Gamma_theta):
            self.Gamma_theta[i] = np.atleast_2d(np.asarray(g, dtype=float))
            _require_spd(self.Gamma_theta[i], f"Gamma_theta[{i + 2}]")
        if np.any(self.d_s == 0):
            raise DimensionError("d_s entries must be nonzero (signs of minors)")

    @classmethod
    def uniform(cls, M, d_signs, gamma=5.0, gamma_theta=5.0, gamma_mag=1.0):
        """Gamma = gamma I, Gamma_theta_i = gamma_theta I, D_s = diag(sign * gamma_mag)."""
        d_signs = np.sign(np.asarray(d_signs, dtype=float).ravel())
        return cls(gamma * np.eye(M),
                   [gamma_theta * np.eye(i) for i in range(1, M)],
                   d_signs * gamma_mag)


def _require_spd(mat, name):
    if mat.shape[0] != mat.shape[1] or not np.allclose(mat, mat.T, atol=1e-12):
        raise DimensionError(f"{name} must be symmetric, got shape {mat.shape}")
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise DimensionError(f"{name} must be positive definite") from None


@dataclass
class AdaptiveState:
    """All time-varying quantities of one closed-loop run."""

    Theta: np.ndarray        # (K, M) stacked parameter estimate
    theta_small: np.ndarray  # flat [theta_2; theta_3; ...] of length M(M-1)/2
    Psi: np.ndarray          # (M, M) estimate of Psi* = D_s S
    Z1: np.ndarray           # (nu, M) omega1 chain states
    Z2: np.ndarray           # (nu, n0) omega2 chain states
    Zz: np.ndarray           # (d_m, K) zeta = h(s)[omega] chains
    Zw: np.ndarray           # (d_m, M) h(s)[Theta^T omega] chains
    We: np.ndarray           # (d_m, M) ebar = xi_m h [e] chains


@dataclass
class RegressorSnapshot:
    """Instantaneous regressor and error-model values at one time."""

    omega: np.ndarray
    zeta: np.ndarray
    xi_sig: np.ndarray
    ebar: np.ndarray
    eta: list
    epsilon: np.ndarray
    m2: float


@dataclass
class NominalTruth:
    """Ground-truth parameters for the Lyapunov diagnostic (known-plant mode)."""

    Theta_star: np.ndarray
    theta_small_star: np.ndarray
    Psi_star: np.ndarray
    S: np.ndarray


def nominal_truth(params, lds):
    """Assemble NominalTruth from a matching solution and an LDS decomposition."""
    M = params.M
    theta_star = np.concatenate(
        [lds.Theta0_star[i, :i] for i in range(1, M)]) if M > 1 else np.zeros(0)
    return NominalTruth(params.stacked, theta_star, lds.D_s @ lds.S, lds.S)


class AdaptiveController:
    """Filter realizations and adaptive-law evaluation for one plant geometry."""

    def __init__(self, n, M, n0, xi, fspec, gains):
        fspec.validate_for(n, n0, xi.d_m)
        if gains.Gamma.shape[0] != M:
            raise DimensionError(f"Gamma is {gains.Gamma.shape}, expected ({M}, {M})")
        if len(gains.Gamma_theta) != M - 1:
            raise DimensionError(
                f"need {M - 1} Gamma_theta blocks, got {len(gains.Gamma_theta)}")
        if gains.d_s.size != M:
            raise DimensionError(f"d_s has size {gains.d_s.size}, expected {M}")
        self.n, self.M, self.n0 = n, M, n0
        self.nu = n - n0
        self.d_m = xi.d_m
        self.xi = xi
        self.fspec = fspec
        self.gains = gains
        self.dim_omega = M * self.nu + n0 * self.nu + n0 + M

        self.Lc = companion_chain(fspec.Lambda) if self.nu else np.zeros((0, 0))
        self.fc = companion_chain(fspec.f)

        # ebar filter: column j is a chain on e_j; entry (i, j) of xi_m * h
        # splits into feedthrough De[i, j] plus a strictly proper numerator.
        self.Ne = np.zeros((M, M, self.d_m))
        self.De = np.zeros((M, M))
        f_coeffs = fspec.f.coeffs
        for i in range(M):
            for j in range(M):
                entry = xi.xi_m[i, j]
                c = np.zeros(self.d_m + 1)
                c[: entry.coeffs.size] = entry.coeffs
                self.De[i, j] = c[self.d_m]
                strictly = c[: self.d_m] - self.De[i, j] * f_coeffs[: self.d_m]
                self.Ne[i, j, :] = strictly

        self._Gamma_inv = np.linalg.inv(gains.Gamma)
        self._Gamma_theta_inv = [np.linalg.inv(g) for g in gains.Gamma_theta]
        # flat layout of theta_small: row i (0-indexed >= 1) has i entries
        self._theta_slices = []
        off = 0
        for i in range(1, M):
            self._theta_slices.append(slice(off, off + i))
            off += i
        self.theta_small_dim = off

    # -- state construction -------------------------------------------

    def initial_state(self, theta0=None, theta_small0=None, psi0=None, psi0_scale=1.0):
        """Fresh state with rest filters.

        Theta defaults to zero; Psi defaults to 0.5 * psi0_scale * diag(sign d*_i)
        (pass psi0 explicitly, e.g. zeros, to override).
        """
        K, M = self.dim_omega, self.M
        Theta = np.zeros((K, M)) if theta0 is None else np.asarray(theta0, dtype=float).reshape(K, M).copy()
        ts = np.zeros(self.theta_small_dim) if theta_small0 is None \
            else np.asarray(theta_small0, dtype=float).ravel().copy()
        if ts.size != self.theta_small_dim:
            raise DimensionError(
                f"theta_small0 has size {ts.size}, expected {self.theta_small_dim}")
        if psi0 is None:
            Psi = 0.5 * psi0_scale * np.diag(np.sign(self.gains.d_s))
        else:
            Psi = np.asarray(psi0, dtype=float).reshape(M, M).copy()
        return AdaptiveState(
            Theta=Theta, theta_small=ts, Psi=Psi,
            Z1=np.zeros((self.nu, M)), Z2=np.zeros((self.nu, self.n0)),
            Zz=np.zeros((self.d_m, K)), Zw=np.zeros((self.d_m, M)),
            We=np.zeros((self.d_m, M)))

    # -- signal assembly ----------------------------------------------

    def omega(self, st, y0, r):
        """Regressor [w1; w2; y0; r]; w1, w2 are read off the chain states."""
        parts = []
        if self.nu:
            parts.append(st.Z1.reshape(-1))
            parts.append(st.Z2.reshape(-1))
        parts.append(y0)
        parts.append(r)
        return np.concatenate(parts)

    def control_output(self, st, y0, r):
        """u = Theta^T omega (the four-term control sum)."""
        return st.Theta.T @ self.omega(st, y0, r)

    def ebar_output(self, st, e):
        """ebar = xi_m(s) h(s)[e] from the chain states plus feedthrough."""
        out = np.einsum("ijk,kj->i", self.Ne, st.We)
        return out + self.De @ e

    def estimation_error(self, st, y0, r, e, omega=None):
        """RegressorSnapshot of the instantaneous error-model values."""
        if omega is None:
            omega = self.omega(st, y0, r)
        zeta = st.Zz[0, :].copy()
        h_tw = st.Zw[0, :].copy()
        xi_sig = st.Theta.T @ zeta - h_tw
        ebar = self.ebar_output(st, e)
        M = self.M
        eta = [ebar[:i].copy() for i in range(1, M)]
        chi = np.zeros(M)
        for row in range(1, M):
            chi[row] = st.theta_small[self._theta_slices[row - 1]] @ ebar[:row]
        epsilon = chi + st.Psi @ xi_sig + ebar
        m2 = 1.0 + zeta @ zeta + xi_sig @ xi_sig + sum(h @ h for h in eta)
        return RegressorSnapshot(omega, zeta, xi_sig, ebar, eta, epsilon, float(m2))

    def parametric_error(self, st, snap, truth):
        """epsilon rebuilt from parameter errors (the identity the laws rely on)."""
        M = self.M
        chi = np.zeros(M)
        for row in range(1, M):
            sl = self._theta_slices[row - 1]
            chi[row] = (st.theta_small[sl] - truth.theta_small_star[sl]) @ snap.ebar[:row]
        Ds = np.diag(self.gains.d_s)
        return (chi
                + Ds @ truth.S @ (st.Theta - truth.Theta_star).T @ snap.zeta
                + (st.Psi - truth.Psi_star) @ snap.xi_sig)

    # -- adaptation ----------------------------------------------------

    def adaptation_derivatives(self, st, snap):
        """Normalized gradient updates for (theta_i, Theta, Psi)."""
        m2 = snap.m2
        eps = snap.epsilon
        dtheta = np.zeros_like(st.theta_small)
        for row in range(1, self.M):
            sl = self._theta_slices[row - 1]
            dtheta[sl] = -(self.gains.Gamma_theta[row - 1] @ snap.ebar[:row]) * eps[row] / m2
        dTheta = -np.outer(snap.zeta, self.gains.d_s * eps) / m2
        dPsi = -np.outer(self.gains.Gamma @ eps, snap.xi_sig) / m2
        return dTheta, dtheta, dPsi

    def filter_derivatives(self, st, u, y0, omega, e):
        """Time derivatives of every chain state."""
        if self.nu:
            dZ1 = self.Lc @ st.Z1
            dZ1[-1, :] += u
            dZ2 = self.Lc @ st.Z2
            dZ2[-1, :] += y0
        else:
            dZ1 = np.zeros((0, self.M))
            dZ2 = np.zeros((0, self.n0))
        dZz = self.fc @ st.Zz
        dZz[-1, :] += omega
        dZw = self.fc @ st.Zw
        dZw[-1, :] += st.Theta.T @ omega
        dWe = self.fc @ st.We
        dWe[-1, :] += e
        return dZ1, dZ2, dZz, dZw, dWe

    # -- diagnostics -----------------------------------------------------

    def lyapunov_value(self, st, truth):
        """V = (sum theta~' Gth^-1 theta~ + tr[Psi~' G^-1 Psi~] + tr[Theta~ S Theta~']) / 2."""
        try:
            np.linalg.cholesky(truth.S)
        except np.linalg.LinAlgError:
            raise DimensionError("truth.S must be symmetric positive definite") from None
        v = 0.0
        for row in range(1, self.M):
            sl = self._theta_slices[row - 1]
            dt = st.theta_small[sl] - truth.theta_small_star[sl]
            v += dt @ self._Gamma_theta_inv[row - 1] @ dt
        dPsi = st.Psi - truth.Psi_star
        v += np.trace(dPsi.T @ self._Gamma_inv @ dPsi)
        dTheta = st.Theta - truth.Theta_star
        v += np.trace(dTheta @ truth.S @ dTheta.T)
        return 0.5 * float(v)
