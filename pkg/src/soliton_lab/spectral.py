"""Drift-Laplacian spectral machinery: mode ODEs, Dirichlet solves, Poincare gap.

Fourier modes of the weighted Laplacian on the model end satisfy the first
order system 4n u' - (lambda/t) u = n Q with explicit integral solutions;
the radial drift Laplacian in divergence form drives the Dirichlet solver
and the Rayleigh quotient.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.linalg import eigvalsh_tridiagonal, solve_banded

from .errors import (
    ConfigError,
    CriticalExponent,
    DomainError,
    SingularSystem,
    SpectrumTooShort,
    TailDominates,
)
from .profile import ConeSpec, Profile, RadialGrid

_CRITICAL_MARGIN = 1e-9
_WEYL_THRESHOLD = 1e-10


class Branch(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass
class ModeData:
    """One Fourier mode's data: basic eigenvalue, decay exponent, source samples.

    `power` marks sources of the exact form Q(s) = s^power, for which the
    improper integral tail beyond the grid is evaluated in closed form.
    `envelope_c` is the declared constant in |Q| <= C t^(-beta).
    """

    lam: float
    beta: float
    grid: RadialGrid
    q: np.ndarray
    envelope_c: float = 1.0
    power: float | None = None

    def __post_init__(self):
        if self.lam < 0.0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not (0.0 < self.beta < 1.0):
            raise ConfigError(f"beta must lie in (0,1), got {self.beta}")
        self.q = np.asarray(self.q, dtype=float)
        if self.q.shape != (self.grid.count,):
            raise ConfigError("Q samples must match the grid")
        env = self.envelope_c * self.grid.nodes ** (-self.beta)
        if np.any(np.abs(self.q) > env * (1.0 + 1e-9) + 1e-300):
            raise ConfigError("Q samples violate the declared envelope C t^(-beta)")

    @classmethod
    def power_law(cls, lam: float, beta: float, grid: RadialGrid, power: float | None = None):
        p = -beta if power is None else power
        return cls(lam, beta, grid, grid.nodes**p, envelope_c=1.0, power=p)


@dataclass
class ModeSolution:
    u: np.ndarray
    branch: Branch
    tail_bound: float
    fitted_c: float


def _check_mode(data: ModeData, spec: ConeSpec) -> float:
    if abs(data.grid.t_min - 1.0) > 1e-12:
        raise ConfigError(f"mode grid must start at t = 1, got {data.grid.t_min}")
    if min(abs(data.lam - l) for l in spec.link_spectrum) > 1e-9 * max(1.0, data.lam):
        raise ConfigError(f"lambda = {data.lam} is not in the link spectrum")
    kappa = 1.0 - data.beta - data.lam / (4.0 * spec.n)
    if abs(kappa) < _CRITICAL_MARGIN:
        raise CriticalExponent(
            f"1 - beta - lambda/(4n) = {kappa} within {_CRITICAL_MARGIN} of critical"
        )
    return kappa


def solve_mode(data: ModeData, spec: ConeSpec, tol: float = 1e-8) -> ModeSolution:
    """Integrate one mode of the first-order system 4n u' - (lambda/t) u = n Q.

    The branch follows the sign of 1 - beta - lambda/(4n): positive runs the
    integral up from t = 1, negative runs it down from infinity.  For
    power-law sources the tail beyond the grid is added exactly; otherwise
    it is only bounded through the declared envelope and surfaced in
    tail_bound.
    """
    kappa = _check_mode(data, spec)
    t = data.grid.nodes
    h = data.grid.spacing
    alpha = data.lam / (4.0 * spec.n)
    if alpha * math.log(data.grid.t_max) > 600.0:
        raise DomainError("t^(lambda/4n) overflows on this grid; shrink t_max or lambda")
    integrand = data.q * t ** (-alpha)
    scale = t**alpha

    if kappa > 0.0:
        cum = cumulative_simpson(integrand, dx=h, initial=0.0)
        u = 0.25 * scale * cum
        tail_bound = 0.0
        branch = Branch.FORWARD
    else:
        # reversed cumulative integral avoids cancellation in I(inf) - I(t)
        rev = cumulative_simpson(integrand[::-1], dx=h, initial=0.0)[::-1]
        if data.power is not None:
            p = data.power
            tail_exact = data.grid.t_max ** (p - alpha + 1.0) / (alpha - p - 1.0)
            u = -0.25 * scale * (rev + tail_exact)
            tail_bound = 0.0
        else:
            u = -0.25 * scale * rev
            tail_bound = 0.25 * data.envelope_c * data.grid.t_max ** (1.0 - data.beta) / (-kappa)
            k_half = int(np.argmin(np.abs(t - data.grid.t_max / 2.0)))
            if tail_bound > tol * abs(u[k_half]):
                raise TailDominates(
                    f"envelope tail bound {tail_bound} exceeds tol*|u(t_max/2)| = "
                    f"{tol * abs(u[k_half])}"
                )
        branch = Branch.BACKWARD

    with np.errstate(divide="ignore"):
        fitted = np.abs(u) * t ** (data.beta - 1.0)
    fitted_c = float(np.max(fitted)) if np.any(u != 0.0) else 0.0
    return ModeSolution(u=u, branch=branch, tail_bound=tail_bound, fitted_c=fitted_c)


def _diff4(u: np.ndarray, h: float):
    """First and second derivatives, fourth order inside, second order at the rim."""
    n = len(u)
    d1 = np.empty(n)
    d2 = np.empty(n)
    d1[2:-2] = (u[:-4] - 8 * u[1:-3] + 8 * u[3:-1] - u[4:]) / (12 * h)
    d2[2:-2] = (-u[:-4] + 16 * u[1:-3] - 30 * u[2:-2] + 16 * u[3:-1] - u[4:]) / (12 * h**2)
    for k in (1, n - 2):
        d1[k] = (u[k + 1] - u[k - 1]) / (2 * h)
        d2[k] = (u[k + 1] - 2 * u[k] + u[k - 1]) / h**2
    d1[0] = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)
    d1[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
    d2[0] = d2[1]
    d2[-1] = d2[-2]
    return d1, d2


def mode_residual(sol: ModeSolution, data: ModeData, spec: ConeSpec) -> np.ndarray:
    """Per-node residual of 4n u' - (lambda/t) u - n Q with differenced u'.

    Fourth-order stencils in the interior; the outermost two nodes on each
    side carry lower-order formulas and are excluded from max-norm checks.
    """
    t = data.grid.nodes
    d1, _ = _diff4(sol.u, data.grid.spacing)
    return 4.0 * spec.n * d1 - (data.lam / t) * sol.u - spec.n * data.q


@dataclass
class SecondOrderReport:
    max_residual: float
    remainder_exponent: float


def second_order_residual(sol: ModeSolution, data: ModeData, spec: ConeSpec) -> SecondOrderReport:
    """Discrepancy of the first-order solution in the second-order mode equation.

    The quantity 4u'' + (4n + 4(n-1)/t)u' - (lambda/t)u - nQ is exactly the
    remainder produced by solving the first-order system; its fitted decay
    exponent should not exceed -(1+beta).
    """
    t = data.grid.nodes
    n = spec.n
    d1, d2 = _diff4(sol.u, data.grid.spacing)
    disc = 4.0 * d2 + (4.0 * n + 4.0 * (n - 1.0) / t) * d1 - (data.lam / t) * sol.u - n * data.q
    inner = disc[2:-2]
    t_in = t[2:-2]
    max_res = float(np.max(np.abs(inner)))
    u_scale = float(np.max(np.abs(sol.u))) if np.any(sol.u != 0.0) else 1.0
    mask = (np.abs(inner) > 1e-250 * max(1.0, u_scale)) & (t_in <= data.grid.t_max / 2.0)
    if int(np.sum(mask)) < 8:
        return SecondOrderReport(max_res, float("-inf"))
    slope = np.polyfit(np.log(t_in[mask]), np.log(np.abs(inner[mask])), 1)[0]
    return SecondOrderReport(max_res, float(slope))


def weyl_truncation(spec: ConeSpec, k_target: int) -> int:
    """Number of modes to retain so the discarded tail stays below 1e-10.

    The tail is weighted by the coefficient bound |Q_i| <= C (lambda_i)^(-k)
    and the infinite part is controlled through the eigenvalue growth
    lambda_i >= C i^(2/(2n-1)) fitted against the supplied spectrum.
    """
    if k_target < 1:
        raise ConfigError(f"k_target must be >= 1, got {k_target}")
    lams = spec.link_spectrum
    m = len(lams)
    if m == 1:
        return 1
    n = spec.n
    p = 2.0 * k_target / (2.0 * n - 1.0)
    if p <= 1.0:
        raise ConfigError(
            f"k_target = {k_target} too small: tail exponent 2k/(2n-1) = {p} <= 1"
        )
    growth = 2.0 / (2.0 * n - 1.0)
    c_fit = min(lam * i ** (-growth) for i, lam in enumerate(lams[1:], start=1))
    if not (c_fit > 0.0):
        raise SpectrumTooShort("eigenvalue growth constant is not positive")
    for N in range(1, m + 1):
        tail = c_fit ** (-k_target) * (N ** (-p) + N ** (1.0 - p) / (p - 1.0))
        if tail < _WEYL_THRESHOLD:
            return N
    raise SpectrumTooShort(
        f"supplied spectrum of {m} modes ends before the truncation index"
    )


def _log_radial_weight(profile: Profile, ref: float) -> np.ndarray:
    # log of e^phi phi^(n-1), shifted by ref to keep exponentials in range
    n = profile.spec.n
    return profile.phi - ref + (n - 1.0) * np.log(profile.phi)


def dirichlet_drift_solve(
    profile: Profile, F: np.ndarray, R_cut: float, tol: float = 1e-9
) -> np.ndarray:
    """Solve the radial drift-Laplacian Dirichlet problem Delta_f u = 2F on t < R_cut.

    The operator (4/(phi' phi^(n-1)))(phi^(n-1) u')' + 4u' is discretized in
    its weighted divergence form (e^phi phi^(n-1) u')' so the tridiagonal
    system is an M-matrix and the discrete maximum principle holds.  A
    no-flux condition at t_min stands in for regularity at the apex;
    u(R_cut) = 0.
    """
    F = np.asarray(F, dtype=float)
    t = profile.t
    if F.shape != t.shape:
        raise ConfigError("F samples must match the profile grid")
    M = int(np.argmin(np.abs(t - R_cut)))
    if M <= 1 or M >= len(t) - 1:
        raise ConfigError(f"R_cut = {R_cut} must lie strictly inside the grid")
    if np.any(F[M:] != 0.0):
        raise ConfigError("F must be supported in {t < R_cut}")
    h = profile.grid.spacing
    lp = _log_radial_weight(profile, ref=float(profile.phi[M]))
    p_half = np.exp(0.5 * (lp[:-1] + lp[1:]))[:M]
    w = np.exp(lp) * profile.phi1
    if not np.all(np.isfinite(p_half)) or np.any(p_half <= 0.0):
        raise SingularSystem("weight function is not positive finite; corrupted profile")

    # unknowns u_0 .. u_{M-1}; u_M = 0 by the Dirichlet condition
    diag = np.empty(M)
    lower = np.zeros(M)
    upper = np.zeros(M)
    rhs = np.empty(M)
    diag[0] = -p_half[0] / h
    upper[1] = p_half[0] / h
    rhs[0] = 0.25 * h * w[0] * F[0]
    for k in range(1, M):
        diag[k] = -(p_half[k] + p_half[k - 1]) / h
        lower[k - 1] = p_half[k - 1] / h
        if k + 1 < M:
            upper[k + 1] = p_half[k] / h
        rhs[k] = 0.5 * h * w[k] * F[k]
    ab = np.zeros((3, M))
    ab[0, 1:] = upper[1:]
    ab[1, :] = diag
    ab[2, :-1] = lower[:-1]
    try:
        u_in = solve_banded((1, 1), ab, rhs)
    except Exception as exc:  # singular factorization
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(u_in)):
        raise SingularSystem("linear solve produced non-finite values")
    res = np.abs(_apply_tridiag(lower, diag, upper, u_in) - rhs)
    rel = float(np.max(res)) / (float(np.max(np.abs(rhs))) + 1e-300)
    if rel > max(tol, 1e-12):
        raise SingularSystem(f"linear residual {rel} exceeds tolerance {tol}")
    u = np.zeros_like(t)
    u[:M] = u_in
    return u


def _apply_tridiag(lower, diag, upper, x):
    y = diag * x
    y[:-1] += upper[1:] * x[1:]
    y[1:] += lower[:-1] * x[:-1]
    return y


@dataclass
class PoincareGap:
    """Discrete spectral-gap certificate for the weighted radial measure."""

    rayleigh_min: float
    certified_constant: float
    certified_from_t: float
    min_margin: float

    def __float__(self) -> float:
        return self.rayleigh_min


def poincare_gap(profile: Profile, beta: float) -> PoincareGap:
    """Certify the weighted subsolution inequality and the discrete Rayleigh gap.

    Part one verifies, node by node and in closed form,
        Delta_f e^(-beta f) <= -beta(1-beta)(c/2) e^(-beta f),  f = phi, c = 4n,
    reporting the smallest radius beyond which it holds (for the exact
    profile it holds everywhere because phi' < n).  Part two returns the
    minimum of int 4 e^phi phi^(n-1) (u')^2 dt / int e^phi phi^(n-1) phi' u^2 dt
    over grid functions vanishing at both ends.
    """
    if not (0.0 < beta < 1.0):
        raise DomainError(f"beta must lie in (0,1), got {beta}")
    n = profile.spec.n
    # closed form: Delta_f e^(-b phi) = -b (4n - 4 b phi') e^(-b phi)
    margin = beta * (4.0 * n - 4.0 * beta * profile.phi1) - 2.0 * n * beta * (1.0 - beta)
    holds = margin >= -1e-12 * n
    certified_from = None
    for k in range(len(holds) - 1, -1, -1):
        if holds[k]:
            certified_from = k
        else:
            break
    cert_t = float(profile.t[certified_from]) if certified_from is not None else math.inf

    h = profile.grid.spacing
    ref = float(np.max(profile.phi))
    lq = _log_radial_weight(profile, ref)
    q_half = 4.0 * np.exp(0.5 * (lq[:-1] + lq[1:]))
    mass = h * np.exp(lq) * profile.phi1
    m = len(profile.t) - 2
    if m < 2:
        raise DomainError("grid too small for a Rayleigh quotient")
    diag = (q_half[:-1] + q_half[1:]) / h
    off = -q_half[1:-1] / h
    b = mass[1:-1]
    d_sym = diag / b
    e_sym = off / np.sqrt(b[:-1] * b[1:])
    vals = eigvalsh_tridiagonal(d_sym, e_sym, select="i", select_range=(0, 0))
    return PoincareGap(
        rayleigh_min=float(vals[0]),
        certified_constant=beta * (1.0 - beta) * 2.0 * n,
        certified_from_t=cert_t,
        min_margin=float(np.min(margin)),
    )
