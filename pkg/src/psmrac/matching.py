"""Nominal plant-model output matching.

With the plant known, fixed controller parameters (Theta1*, Theta2*,
Theta20*, Theta3*) exist that make the closed-loop transfer matrix equal the
reference model W_m(s) = xi_m^{-1}(s).  Theta3* = Kp^{-1} is pinned by the
high-frequency gain; the remaining blocks satisfy a linear identity in s,

    Theta1'^T A1(s)/Lam(s) + (Theta2^T A2(s)/Lam(s) + Theta20^T) G0(s)
        = I - Theta3* xi_m(s) G(s),

which is solved here by sampling both sides at complex frequencies off the
real axis and solving the stacked real/imaginary least-squares system.
This sidesteps any construction of coprime matrix-fraction descriptions.
The solved parameters are the ground truth used by the Lyapunov diagnostic
and by the frozen-parameter verification runs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, MatchingError
from .interactor import high_freq_gain
from .polymatrix import Polynomial, poly_roots


@dataclass
class FilterSpec:
    """Controller filter polynomials: Lambda for the regressor filters, f for h(s) = 1/f(s).

    Lambda must be monic and stable with degree n - n0; f monic and stable
    with degree equal to the maximum interactor degree d_m.
    """

    Lambda: Polynomial
    f: Polynomial

    def __post_init__(self):
        for name, p in (("Lambda", self.Lambda), ("f", self.f)):
            if not p.is_monic:
                raise DimensionError(f"{name} must be monic, got {p}")
            if p.degree >= 1 and np.max(poly_roots(p).real) >= 0:
                raise DimensionError(f"{name} must be stable, got roots {poly_roots(p)}")

    @classmethod
    def default(cls, n, n0, d_m, lambda_pole=1.1, f_pole=2.0):
        """Defaults tuned for adaptation speed at slow references.

        Lambda = (s + 1.1)^(n - n0) keeps |1/Lambda(jw)| near unity inside
        the reference-model bandwidth, so the filtered regressors carry the
        phase-shifted signal content the gradient law needs; poles much
        faster than the reference (e.g. -3) attenuate those components by
        orders of magnitude and stall adaptation.  f = (s + 2)^d_m matches
        the usual interactor diagonal, making xi_m(s) h(s) close to (or
        exactly) the identity so the filtered tracking error keeps full
        strength.
        """
        lam = Polynomial([lambda_pole, 1.0]) ** (n - n0)
        f = Polynomial([f_pole, 1.0]) ** d_m
        return cls(lam, f)

    def validate_for(self, n, n0, d_m):
        if self.Lambda.degree != n - n0:
            raise DimensionError(
                f"Lambda degree {self.Lambda.degree} != n - n0 = {n - n0}")
        if self.f.degree != d_m:
            raise DimensionError(f"f degree {self.f.degree} != d_m = {d_m}")


def param_dims(n, M, n0):
    """Row counts of the stacked parameter blocks (Theta1, Theta2, Theta20, Theta3)."""
    nu = n - n0
    return M * nu, n0 * nu, n0, M


class ControllerParams:
    """Stacked controller parameter set Theta = [Theta1^T, Theta2^T, Theta20^T, Theta3]^T."""

    def __init__(self, n, M, n0, Theta1=None, Theta2=None, Theta20=None, Theta3=None):
        r1, r2, r20, r3 = param_dims(n, M, n0)
        self.n, self.M, self.n0 = n, M, n0
        self.Theta1 = _block(Theta1, (r1, M), "Theta1")
        self.Theta2 = _block(Theta2, (r2, M), "Theta2")
        self.Theta20 = _block(Theta20, (r20, M), "Theta20")
        self.Theta3 = _block(Theta3, (r3, M), "Theta3")

    @property
    def stacked(self):
        # u = Theta^T omega must produce ... + Theta3 r, so the bottom block
        # of the stacked K x M matrix carries Theta3 transposed
        return np.vstack([self.Theta1, self.Theta2, self.Theta20, self.Theta3.T])

    @property
    def rows(self):
        return sum(param_dims(self.n, self.M, self.n0))

    @classmethod
    def from_stacked(cls, n, M, n0, stacked):
        r1, r2, r20, r3 = param_dims(n, M, n0)
        stacked = np.asarray(stacked, dtype=float)
        if stacked.shape != (r1 + r2 + r20 + r3, M):
            raise DimensionError(
                f"stacked parameters have shape {stacked.shape}, "
                f"expected {(r1 + r2 + r20 + r3, M)}")
        parts = np.split(stacked, np.cumsum([r1, r2, r20])[:3], axis=0)
        return cls(n, M, n0, parts[0], parts[1], parts[2], parts[3].T)

    @classmethod
    def zeros(cls, n, M, n0):
        return cls(n, M, n0)

    def perturbed(self, rel, seed=0):
        """Multiplicative random perturbation of every entry (sensitivity studies)."""
        rng = np.random.default_rng(seed)
        s = self.stacked
        scale = np.max(np.abs(s)) if np.max(np.abs(s)) > 0 else 1.0
        noisy = s * (1 + rel * rng.standard_normal(s.shape)) \
            + rel * scale * 0.1 * rng.standard_normal(s.shape)
        return ControllerParams.from_stacked(self.n, self.M, self.n0, noisy)


def _block(value, shape, name):
    if value is None:
        return np.zeros(shape)
    value = np.asarray(value, dtype=float).reshape(shape) if np.size(value) == shape[0] * shape[1] \
        else np.asarray(value, dtype=float)
    if value.shape != shape:
        raise DimensionError(f"{name} has shape {value.shape}, expected {shape}")
    return value.copy()


def save_params(params, path):
    """Write parameters as a text file: dimension header then row-major stacked values."""
    with open(path, "w") as fh:
        fh.write(f"{params.n} {params.M} {params.n0}\n")
        for row in params.stacked:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_params(path):
    with open(path) as fh:
        lines = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    n, M, n0 = (int(tok) for tok in lines[0].split())
    rows = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    return ControllerParams.from_stacked(n, M, n0, np.array(rows))


def eval_a1(s, n_blocks, M):
    """A1(s) = [I_M, s I_M, ..., s^(n_blocks-1) I_M]^T evaluated at s."""
    if n_blocks == 0:
        return np.zeros((0, M), dtype=complex)
    powers = s ** np.arange(n_blocks)
    return np.kron(powers.reshape(-1, 1), np.eye(M))


@dataclass
class MatchSolution:
    params: ControllerParams
    residual: float
    sample_points: np.ndarray
    min_singular_value: float

    @property
    def matched(self):
        return self.residual < 1e-6


def _sample_points(count, lo=1e-2, hi=1e3, jitter=1.0):
    """Log-spaced points on the imaginary axis plus a shifted copy at 1 + jw."""
    half = count // 2
    w = np.logspace(np.log10(lo), np.log10(hi), half) * jitter
    return np.concatenate([1j * w, 1.0 + 1j * w])


def _regressor(s, G0val, lam_val, nu, M, n0):
    """W(s): stacked [A1/Lam; A2 G0/Lam; G0] block, shape (K, M)."""
    blocks = []
    if nu > 0:
        blocks.append(eval_a1(s, nu, M) / lam_val)
        blocks.append(eval_a1(s, nu, n0) @ G0val / lam_val)
    blocks.append(G0val)
    return np.vstack(blocks)


def solve_matching(sys, sel, xi, fspec, tol=1e-6, max_resample=10):
    """Solve the output-matching identity for the nominal parameters.

    Evaluates both sides at 4n complex points off the real axis (resampling
    when a point lands near a pole of G, G0 or a root of Lambda), solves the
    real-stacked least-squares system for (Theta1, Theta2, Theta20), and
    measures the residual at 2n fresh points.  Raises MatchingError when the
    residual exceeds ``tol`` (violated structural assumptions).
    """
    n, M, n0 = sys.n, sys.M, sel.n0
    nu = n - n0
    fspec.validate_for(n, n0, xi.d_m)
    G = sys.transfer()
    G0 = sys.partial_transfer(sel.C0)
    kp = high_freq_gain(G, xi)
    Theta3 = np.linalg.inv(kp.Kp)

    def safe_eval(points):
        rows_W, rows_R = [], []
        for s in points:
            lam_val = fspec.Lambda(s)
            Gval = G.eval(s)
            G0val = G0.eval(s)
            W = _regressor(s, G0val, lam_val, nu, M, n0)
            R = np.eye(M) - Theta3 @ xi.eval(s) @ Gval
            rows_W.append(W)
            rows_R.append(R)
        return rows_W, rows_R

    def usable(points):
        den = G.denominator
        for s in points:
            for p in (den, fspec.Lambda):
                scale = np.max(np.abs(p.coeffs)) * max(1.0, abs(s)) ** max(p.degree, 0)
                if abs(p(s)) <= 1e-9 * scale:
                    return False
        return True

    pts = None
    for attempt in range(max_resample):
        cand = _sample_points(4 * n, jitter=1.0 + 0.37 * attempt)
        if usable(cand):
            pts = cand
            break
    if pts is None:
        raise MatchingError("could not place sample points away from poles")

    Ws, Rs = safe_eval(pts)
    A_c = np.vstack([W.T for W in Ws])          # (len*M, K) complex
    b_c = np.vstack([R.T for R in Rs])          # (len*M, M) complex
    A_r = np.vstack([A_c.real, A_c.imag])
    b_r = np.vstack([b_c.real, b_c.imag])
    # column equilibration: the regressor blocks span many decades over the
    # frequency grid; normalizing columns makes the smallest singular value a
    # genuine identifiability measure and keeps the solve well conditioned.
    col = np.linalg.norm(A_r, axis=0)
    col[col == 0] = 1.0
    sol, _, rank, svals = np.linalg.lstsq(A_r / col, b_r, rcond=None)
    min_sv = svals[-1] if svals.size else 0.0
    Y = (sol / col[:, None]).T                   # (M, K): [Theta1^T, Theta2^T, Theta20^T]

    r1, r2, r20, _ = param_dims(n, M, n0)
    Theta1 = Y[:, :r1].T
    Theta2 = Y[:, r1:r1 + r2].T
    Theta20 = Y[:, r1 + r2:].T
    params = ControllerParams(n, M, n0, Theta1, Theta2, Theta20, Theta3)

    fresh = None
    for attempt in range(max_resample):
        cand = _sample_points(2 * n, jitter=1.91 + 0.41 * attempt)
        if usable(cand):
            fresh = cand
            break
    if fresh is None:
        raise MatchingError("could not place hold-out points away from poles")
    Wf, Rf = safe_eval(fresh)
    residual = max(
        np.linalg.norm(Y @ W - R) / (1.0 + np.linalg.norm(R))
        for W, R in zip(Wf, Rf))

    if residual > tol:
        raise MatchingError(
            f"no matching solution at this filter order: residual {residual:.3e} "
            f"(min singular value {min_sv:.3e})")
    return MatchSolution(params, residual, pts, min_sv)


def matching_residual(params, sys, sel, xi, fspec, points):
    """Relative deviation of the matching identity at given complex points."""
    G = sys.transfer()
    G0 = sys.partial_transfer(sel.C0)
    n, M, n0 = sys.n, sys.M, sel.n0
    nu = n - n0
    Y = np.hstack([params.Theta1.T, params.Theta2.T, params.Theta20.T])
    worst = 0.0
    for s in points:
        W = _regressor(s, G0.eval(s), fspec.Lambda(s), nu, M, n0)
        R = np.eye(M) - params.Theta3 @ xi.eval(s) @ G.eval(s)
        worst = max(worst, np.linalg.norm(Y @ W - R) / (1.0 + np.linalg.norm(R)))
    return worst


@dataclass
class MatchVerification:
    sup_error: float
    reference_amplitude: float
    bounded: bool
    passed: bool


def verify_matching(sol, sys, sel, xi, fspec, t_end=40.0, dt=0.002,
                    amplitudes=(0.5, 0.35), frequencies=(0.3, 0.7)):
    """Frozen-parameter closed-loop check of a matching solution.

    Runs the loop with Theta held at the solved values and a two-tone
    sinusoidal reference; passes when the output error sup-norm over the
    last quarter of the horizon is below 1e-3 times the reference amplitude.
    """
    from .simulate import ReferenceInput, Scenario, run_closed_loop
    from .adaptive import AdaptationGains

    M = sys.M
    terms = [[(amplitudes[0], frequencies[0], 0.0), (amplitudes[1], frequencies[1], 0.0)]
             for _ in range(M)]
    ref = ReferenceInput(terms)
    gains = AdaptationGains.uniform(M, d_signs=np.ones(M))
    sc = Scenario(plant=sys, sel=sel, xi=xi, fspec=fspec, gains=gains,
                  reference=ref, x0=np.zeros(sys.n), t_end=t_end, dt=dt,
                  label="matching-verification")
    tr = run_closed_loop(sc, mode="frozen", frozen_params=sol.params)
    if tr.diverged:
        raise MatchingError("matching verification failed: closed loop diverged")
    tail = slice(int(0.75 * len(tr.t)), None)
    sup = float(np.max(np.abs(tr.e[tail])))
    amp = float(max(amplitudes))
    bounded = bool(np.isfinite(tr.x).all() and np.max(np.abs(tr.x)) < 1e6
                   and np.max(np.abs(tr.u)) < 1e6)
    return MatchVerification(sup, amp, bounded, bounded and sup < 1e-3 * amp)
