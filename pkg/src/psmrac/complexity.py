"""Adaptation-complexity accounting for partial-state vs output feedback.

Counts updated parameters and first-order integrators for both controller
families and evaluates the reduction conditions.  The output-feedback
counts use the worst-case observability-index bound nu_bar = n - M + 1;
actual observability indices are never computed.

Two parameter-accounting conventions coexist: the update-law count N_ps
includes the theta_i triangle and Psi, while the "controller parameter
order" excludes them (that convention yields 48 vs 56 for the 8-state,
2-output minimal-order example).  Reduction decisions are always taken by
substituting into the closed-form quadratic

    q(n0) = -n0^2 + (n+1-M) n0 - nM - M + 2M^2 = -(n0 - M)(n0 - (n-2M+1)),

never by threshold shortcuts; the direct difference satisfies
N_ps - N_o = M * q(n0), so only the sign of q matters and the simplified
threshold rules (which miss a branch in the n < 3M-1 regime) are reported
alongside for comparison.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


def quadratic_gap(n, M, n0):
    """q(n0) = -n0^2 + (n+1-M) n0 - nM - M + 2M^2 (the per-column count gap)."""
    return -n0 ** 2 + (n + 1 - M) * n0 - n * M - M + 2 * M ** 2


def _check_dims(n, M, n0=None):
    if not (isinstance(n, (int, np.integer)) and isinstance(M, (int, np.integer))):
        raise ConfigError("n and M must be integers")
    if not (1 <= M <= n):
        raise ConfigError(f"need 1 <= M <= n, got n={n}, M={M}")
    if n0 is not None and not (1 <= n0 <= n):
        raise ConfigError(f"need 1 <= n0 <= n, got n0={n0}")


def count_params(n, M, n0):
    """Updated-parameter counts and the controller parameter order.

    Returns (N_ps, N_o, controller_param_order):
      N_ps    partial-state update-law count (theta_i + Theta blocks + Psi),
      N_o     output-feedback update-law count at nu_bar = n - M + 1,
      controller_param_order  entry count of the stacked Theta alone.
    """
    _check_dims(n, M, n0)
    nu_bar = n - M + 1
    n_ps = ((M * M - M) // 2 + (n - n0) * M * M + (n - n0) * M * n0
            + M * n0 + M * M + M * M)
    n_o = (M * M - M) // 2 + 2 * (nu_bar - 1) * M * M + 2 * M * M + M * M
    order = (M * (n - n0) + n0 * (n - n0) + n0 + M) * M
    return n_ps, n_o, order


def output_feedback_param_order(n, M):
    """Entry count of the stacked output-feedback Theta (2 M^2 nu_bar)."""
    _check_dims(n, M)
    nu_bar = n - M + 1
    return 2 * M * M * nu_bar


def block_dimension_sum(n, M, n0):
    """Independent N_ps recount from the individual block shapes."""
    _check_dims(n, M, n0)
    nu = n - n0
    theta_triangle = sum(i - 1 for i in range(2, M + 1))
    blocks = dict(
        Theta1=M * nu * M,
        Theta2=n0 * nu * M,
        Theta20=n0 * M,
        Theta3=M * M,
        theta_i=theta_triangle,
        Psi=M * M,
    )
    return sum(blocks.values()), blocks


def count_integrators(n, M, n0, n_h, n_e):
    """First-order integrator counts for the regressor/error filters.

    N'_ps = n_h ((M + n0)(n - n0 + 1) + M) + n_e for the partial-state
    scheme; N'_o = n_h (2 nu_bar M + M) + n_e for output feedback.
    """
    _check_dims(n, M, n0)
    if n_h < 1:
        raise ConfigError(f"n_h must be >= 1, got {n_h}")
    if n_e < 0:
        raise ConfigError(f"n_e must be >= 0, got {n_e}")
    nu_bar = n - M + 1
    n_ps = n_h * ((M + n0) * (n - n0 + 1) + M) + n_e
    n_o = n_h * (2 * nu_bar * M + M) + n_e
    return n_ps, n_o


@dataclass
class ConditionReport:
    """Reduction-condition evaluation for one (n, M) pair."""

    n: int
    M: int
    regime: str                      # "n>3M-1", "n<3M-1" or "n=3M-1"
    reduced_n0: list                 # all n0 in 1..n with q(n0) < 0
    prose_n0: list                   # n0 the simplified threshold rule claims
    prose_mismatch: list             # n0 where prose and quadratic disagree
    minimal_order_reduced: bool      # q(1) < 0
    minimal_order_prose: bool        # M < n/2
    minimizing_M_continuous: float   # (n+2)/4
    minimizing_M_integer: int
    max_saving_formula: float        # (n-2)^2 / 8
    max_saving_integer: int          # -q at the best integer M (n0 = 1)


def reduction_conditions(n, M):
    """Evaluate the reduction and minimality conditions for (n, M).

    Every decision substitutes into the closed-form quadratic; the
    simplified threshold rules are evaluated alongside and any disagreement
    is surfaced in ``prose_mismatch`` (they differ, e.g., for n < 3M - 1
    with n - 2M + 1 > 1, and at M = 1 where the gap is exactly zero).
    """
    _check_dims(n, M)
    if n > 3 * M - 1:
        regime = "n>3M-1"
    elif n < 3 * M - 1:
        regime = "n<3M-1"
    else:
        regime = "n=3M-1"
    reduced = [n0 for n0 in range(1, n + 1) if quadratic_gap(n, M, n0) < 0]
    if n > 3 * M - 1:
        prose = [n0 for n0 in range(1, n + 1) if n0 < M or n0 > n - 2 * M + 1]
    elif n < 3 * M - 1:
        prose = [n0 for n0 in range(1, n + 1) if n0 > M]
    else:
        prose = []
    mismatch = sorted(set(reduced).symmetric_difference(prose))

    min_reduced = quadratic_gap(n, M, 1) < 0
    min_prose = M < n / 2

    best_m = min(range(1, n + 1), key=lambda m: quadratic_gap(n, m, 1))
    return ConditionReport(
        n=n, M=M, regime=regime,
        reduced_n0=reduced, prose_n0=prose, prose_mismatch=mismatch,
        minimal_order_reduced=min_reduced, minimal_order_prose=min_prose,
        minimizing_M_continuous=(n + 2) / 4.0,
        minimizing_M_integer=best_m,
        max_saving_formula=(n - 2) ** 2 / 8.0,
        max_saving_integer=-quadratic_gap(n, best_m, 1),
    )


@dataclass
class ComplexityReport:
    """Full accounting for one (n, M, n0) triple."""

    n: int
    M: int
    n0: int
    nu_bar: int
    n_h: int
    n_e: int
    N_ps: int
    N_o: int
    Nprime_ps: int
    Nprime_o: int
    controller_param_order: int
    output_feedback_param_order: int
    quadratic: int
    reduced: bool
    conditions: ConditionReport = field(repr=False, default=None)

    def lines(self):
        yield f"n = {self.n}, M = {self.M}, n0 = {self.n0}, nu_bar = {self.nu_bar}"
        yield f"updated parameters: partial-state {self.N_ps}, output-feedback {self.N_o}"
        yield (f"controller parameter order: partial-state {self.controller_param_order}, "
               f"output-feedback {self.output_feedback_param_order}")
        yield (f"integrators (n_h = {self.n_h}, n_e = {self.n_e}): "
               f"partial-state {self.Nprime_ps}, output-feedback {self.Nprime_o}")
        yield (f"count gap quadratic q(n0) = {self.quadratic} "
               f"(N_ps - N_o = {self.N_ps - self.N_o} = M * q)")
        yield f"adaptation complexity reduced: {'yes' if self.reduced else 'no'}"


def complexity_report(n, M, n0, n_h=None, n_e=None):
    """All counts plus the condition evaluation in one report.

    n_h defaults to 1 and n_e to 0 when the filter orders are not known;
    pass the f(s) degree and the ebar-filter order for a concrete design.
    """
    _check_dims(n, M, n0)
    n_h = 1 if n_h is None else int(n_h)
    n_e = 0 if n_e is None else int(n_e)
    n_ps, n_o, order = count_params(n, M, n0)
    np_ps, np_o = count_integrators(n, M, n0, n_h, n_e)
    q = quadratic_gap(n, M, n0)
    return ComplexityReport(
        n=n, M=M, n0=n0, nu_bar=n - M + 1, n_h=n_h, n_e=n_e,
        N_ps=n_ps, N_o=n_o, Nprime_ps=np_ps, Nprime_o=np_o,
        controller_param_order=order,
        output_feedback_param_order=output_feedback_param_order(n, M),
        quadratic=q, reduced=q < 0,
        conditions=reduction_conditions(n, M),
    )


def sweep_n0(n, M, n_h=None, n_e=None):
    """ComplexityReports for every n0 in 1..n."""
    return [complexity_report(n, M, n0, n_h, n_e) for n0 in range(1, n + 1)]


def sweep_csv(reports):
    """CSV grid of a report list."""
    header = ("n,M,n0,N_ps,N_o,Nprime_ps,Nprime_o,"
              "controller_param_order,output_feedback_param_order,quadratic,reduced")
    rows = [header]
    for r in reports:
        rows.append(",".join(str(v) for v in (
            r.n, r.M, r.n0, r.N_ps, r.N_o, r.Nprime_ps, r.Nprime_o,
            r.controller_param_order, r.output_feedback_param_order,
            r.quadratic, int(r.reduced))))
    return "\n".join(rows) + "\n"
