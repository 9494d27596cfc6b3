"""Radial soliton profile from the implicit equation F(phi)e^phi = e^(nt)/n + F(a)e^a.

The profile phi(t) is the derivative of the rotation-invariant Kahler
potential on the cone.  Everything downstream (geometry, spectral theory,
the continuity method) consumes the sampled arrays built here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DomainError,
    InsufficientRange,
    NoBracket,
    NoConvergence,
)

# Above this value of n*t the right-hand side e^(nt)/n overflows a double,
# so the root-find switches to the logarithmic form of the equation.
_LOG_SWITCH = 400.0

# Newton basin degenerates near the root phi -> 0 when a = 0 (the derivative
# of F(s)e^s vanishes to order n-1 there); plain bisection takes over.
_BISECT_BELOW = 1e-6

_MAX_ITER = 200


def _spectrum_floor(n: int) -> float:
    # smallest admissible first nonzero basic eigenvalue on a Ricci-flat link
    return 2.0 * n * (1.0 + 1.0 / (2 * n - 3)) if n > 2 else 8.0


@dataclass(frozen=True)
class ConeSpec:
    """Discrete data of the cone: dimension, soliton parameter, link spectrum."""

    n: int
    a: float = 0.0
    link_spectrum: tuple = (0.0,)
    link_volume: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"n must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not (self.a >= 0.0):
            raise ConfigError(f"soliton parameter a must be >= 0, got {self.a}")
        if not (self.link_volume > 0.0):
            raise ConfigError(f"link_volume must be positive, got {self.link_volume}")
        spec = tuple(float(x) for x in self.link_spectrum)
        object.__setattr__(self, "link_spectrum", spec)
        if len(spec) == 0:
            raise ConfigError("link_spectrum must contain the zero eigenvalue")
        if any(b < a for a, b in zip(spec, spec[1:])):
            raise ConfigError("link_spectrum must be sorted nondecreasing")
        if spec[0] != 0.0 or sum(1 for x in spec if x == 0.0) != 1:
            raise ConfigError("link_spectrum must contain lambda_0 = 0 exactly once")
        if any(x < 0.0 for x in spec):
            raise ConfigError("link_spectrum entries must be nonnegative")
        if len(spec) > 1 and spec[1] < _spectrum_floor(self.n) - 1e-12:
            raise ConfigError(
                f"lambda_1 = {spec[1]} below the Ricci-flat floor "
                f"{_spectrum_floor(self.n)} for n = {self.n}"
            )


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid in the radial coordinate t."""

    t_min: float
    t_max: float
    count: int

    def __post_init__(self):
        if self.count < 3:
            raise ConfigError(f"grid needs at least 3 nodes, got {self.count}")
        if not (self.t_min < self.t_max):
            raise ConfigError(f"need t_min < t_max, got [{self.t_min}, {self.t_max}]")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.count)

    @property
    def spacing(self) -> float:
        return (self.t_max - self.t_min) / (self.count - 1)


@lru_cache(maxsize=None)
def _f_coefficients(n: int) -> tuple:
    """Coefficients of F(s) = sum_k (-1)^(n-k-1) (n-1)!/k! s^k, highest power first."""
    fact = math.factorial(n - 1)
    coefs = [(-1.0) ** (n - k - 1) * fact / math.factorial(k) for k in range(n)]
    return tuple(reversed(coefs))


def eval_F(s, n: int):
    """Evaluate the polynomial prefactor F at s by a Horner scheme.

    F is the unique polynomial with (F(s)e^s)' = s^(n-1) e^s, which makes
    F(s)e^s strictly increasing on s > 0.  Accepts scalars or arrays.
    """
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    coefs = _f_coefficients(n)
    if isinstance(s, np.ndarray):
        out = np.full_like(s, coefs[0], dtype=float)
        for c in coefs[1:]:
            out = out * s + c
        return out
    acc = coefs[0]
    for c in coefs[1:]:
        acc = acc * s + c
    return acc


def _eval_F_prime(s, n: int):
    coefs = _f_coefficients(n)
    deg = n - 1
    if isinstance(s, np.ndarray):
        out = np.full_like(s, coefs[0] * deg, dtype=float)
        for k, c in enumerate(coefs[1:-1], start=1):
            out = out * s + c * (deg - k)
        return out
    acc = coefs[0] * deg
    for k, c in enumerate(coefs[1:-1], start=1):
        acc = acc * s + c * (deg - k)
    return acc


def _norm_constant(spec: ConeSpec) -> float:
    # C = F(a) e^a, the integration constant fixed by the t -> -inf limit
    return eval_F(spec.a, spec.n) * math.exp(spec.a)


def _rel_residual(phi: float, t: float, spec: ConeSpec) -> float:
    """Relative residual of the implicit equation at a single node.

    Evaluated in plain arithmetic while e^(nt) is representable and in log
    form beyond; the log residual coincides with the relative residual to
    first order.
    """
    n = spec.n
    nt = n * t
    C = _norm_constant(spec)
    if nt <= _LOG_SWITCH:
        y = math.exp(nt) / n + C
        scale = math.exp(nt) / n + abs(C)
        if scale == 0.0:
            scale = 1.0
        return abs(eval_F(phi, n) * math.exp(phi) - y) / scale
    # log branch: log F(phi) + phi vs log(e^(nt)/n + C)
    target = nt - math.log(n) + math.log1p(n * C * math.exp(-min(nt, 745.0)))
    val = eval_F(phi, n)
    if val <= 0.0:
        return math.inf
    return abs(math.log(val) + phi - target)


def solve_phi(t: float, spec: ConeSpec, tol: float = 1e-12, x0: float | None = None) -> float:
    """Root phi > a of F(phi)e^phi = e^(nt)/n + F(a)e^a at radial coordinate t.

    Bracketed Newton with bisection fallback on [a + 1e-14, n*max(t,1) + n].
    An optional warm start x0 seeds Newton but never relaxes the bracket.
    """
    if not (tol > 0.0):
        raise ConfigError(f"tol must be positive, got {tol}")
    n, a = spec.n, spec.a
    nt = n * t
    lo = a + 1e-14
    hi = n * max(t, 1.0) + n

    # Deep below the apex the increment e^(nt)/n falls under the rounding
    # noise of F(a)e^a and the double-precision equation no longer resolves
    # the root; the local expansion of F(s)e^s about s = a does.
    C = _norm_constant(spec)
    delta = math.exp(nt) / n if nt < 700.0 else math.inf
    if delta <= 1e-13 * max(abs(C), 1.0):
        if a == 0.0:
            et = math.exp(t)
            return et * (1.0 - et / (n + 1))
        h1 = a ** (n - 1) * math.exp(a)
        h2 = ((n - 1) * a ** (n - 2) + a ** (n - 1)) * math.exp(a)
        step = delta / h1
        return a + step - 0.5 * step**2 * h2 / h1

    if nt <= _LOG_SWITCH:
        y = math.exp(nt) / n + C
        scale = math.exp(nt) / n + abs(C) or 1.0

        def g(s):
            return eval_F(s, n) * math.exp(s) - y

        def gp(s):
            return s ** (n - 1) * math.exp(s)

        target_abs = tol * scale
    else:
        # solve log F(phi) + phi = log(e^(nt)/n + C); the root is far out on
        # the branch where F > 0, so tighten the bracket away from F's zeros
        ly = nt - math.log(n) + math.log1p(n * C * math.exp(-min(nt, 745.0)))
        lo = max(lo, float(n))

        def g(s):
            val = eval_F(s, n)
            if val <= 0.0:
                return -math.inf
            return math.log(val) + s - ly

        def gp(s):
            val = eval_F(s, n)
            return _eval_F_prime(s, n) / val + 1.0

        target_abs = tol

    glo, ghi = g(lo), g(hi)
    if not (glo <= 0.0 <= ghi):
        raise NoBracket(
            f"no sign change on [{lo}, {hi}] at t={t} (n={n}, a={a}); "
            f"g(lo)={glo}, g(hi)={ghi}"
        )

    x = x0 if (x0 is not None and lo < x0 < hi) else 0.5 * (lo + hi)
    gx = g(x)
    for _ in range(_MAX_ITER):
        if abs(gx) <= target_abs:
            return x
        if gx > 0.0:
            hi = x
        else:
            lo = x
        use_newton = x >= _BISECT_BELOW
        if use_newton:
            d = gp(x)
            step = gx / d if d > 0.0 else math.inf
            x_new = x - step
            if not (lo < x_new < hi):
                x_new = 0.5 * (lo + hi)
        else:
            x_new = 0.5 * (lo + hi)
        if x_new == x:
            return x
        x, gx = x_new, g(x_new)
    if abs(gx) <= target_abs * 10.0:
        return x
    raise NoConvergence(
        f"root-find at t={t} (n={n}, a={a}) stalled: residual {gx} vs target {target_abs}"
    )


def derivatives(phi, t, spec: ConeSpec):
    """Closed-form (phi', phi'', phi''') implied by the profile ODE.

    phi' = e^(nt - phi) phi^(1-n) and the two exact recursions obtained by
    differentiating it.  Works on scalars and arrays alike.
    """
    n = spec.n
    phi_arr = np.asarray(phi, dtype=float)
    if np.any(phi_arr <= 0.0):
        raise DomainError("derivatives need phi > 0")
    t_arr = np.asarray(t, dtype=float)
    phi1 = np.exp(n * t_arr - phi_arr + (1.0 - n) * np.log(phi_arr))
    ratio = phi1 / phi_arr
    phi2 = phi1 * (n - phi1 - (n - 1) * ratio)
    phi3 = phi2 * (n - phi1 - (n - 1) * ratio) - phi1 * (
        phi2 + (n - 1) * (phi2 / phi_arr - ratio**2)
    )
    if phi_arr.ndim == 0:
        return float(phi1), float(phi2), float(phi3)
    return phi1, phi2, phi3


@dataclass
class Profile:
    """Sampled soliton profile with derivatives and residual bookkeeping."""

    spec: ConeSpec
    grid: RadialGrid
    phi: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    phi3: np.ndarray
    residual: np.ndarray
    residual_max: float

    CSV_HEADER = "t,phi,phi1,phi2,phi3,residual"

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def check_invariants(self, tol: float | None = None) -> list:
        """Return the list of violated structural invariants (empty if none)."""
        bad = []
        n, a = self.spec.n, self.spec.a
        if not np.all(self.phi > a):
            bad.append("phi > a")
        if not np.all(np.diff(self.phi) > 0.0):
            bad.append("phi strictly increasing")
        if not (np.all(self.phi1 > 0.0) and np.all(self.phi1 < n)):
            bad.append("0 < phi' < n")
        if tol is not None and not (self.residual_max <= tol):
            bad.append(f"residual_max <= {tol}")
        return bad

    def to_csv(self, path) -> None:
        cols = (self.t, self.phi, self.phi1, self.phi2, self.phi3, self.residual)
        with open(path, "w") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for row in zip(*cols):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, spec: ConeSpec) -> "Profile":
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        if data.ndim != 2 or data.shape[1] != 6:
            raise ConfigError(f"profile CSV {path} must have 6 columns")
        t = data[:, 0]
        grid = RadialGrid(float(t[0]), float(t[-1]), len(t))
        if not np.allclose(t, grid.nodes, rtol=0.0, atol=1e-9 * max(1.0, abs(t[-1]))):
            raise ConfigError(f"profile CSV {path} is not on a uniform grid")
        return cls(
            spec=spec,
            grid=grid,
            phi=data[:, 1],
            phi1=data[:, 2],
            phi2=data[:, 3],
            phi3=data[:, 4],
            residual=data[:, 5],
            residual_max=float(np.max(data[:, 5])),
        )


def build_profile(spec: ConeSpec, grid: RadialGrid, tol: float = 1e-12) -> Profile:
    """Sample the profile on the grid, warm-starting each node from the last."""
    nodes = grid.nodes
    phi = np.empty(grid.count)
    guess = None
    for k, t in enumerate(nodes):
        try:
            phi[k] = solve_phi(float(t), spec, tol, x0=guess)
        except (NoBracket, NoConvergence) as exc:
            raise type(exc)(f"node {k} (t={t}): {exc}") from exc
        # predictor for the next node: phi' < n bounds the increment
        guess = phi[k] + spec.n * grid.spacing
    phi1, phi2, phi3 = derivatives(phi, nodes, spec)
    residual = np.array([_rel_residual(p, float(t), spec) for p, t in zip(phi, nodes)])
    prof = Profile(
        spec=spec,
        grid=grid,
        phi=phi,
        phi1=phi1,
        phi2=phi2,
        phi3=phi3,
        residual=residual,
        residual_max=float(np.max(residual)),
    )
    bad = prof.check_invariants(tol=max(tol, 1e-10))
    if bad:
        raise NoConvergence(f"profile invariants violated: {bad}")
    return prof


def asymptotic_phi(t: float, n: int):
    """Five-term far-field expansion of phi and the magnitude of its error term.

    Returns (value, order) where order = (log t)^2 / t^2 is the size of the
    first omitted term.
    """
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 1.0):
        raise DomainError("expansion valid for t > 1 only")
    lt = np.log(t_arr)
    value = (
        n * t_arr
        - (n - 1) * lt
        - n * math.log(n)
        + ((n - 1) ** 2 / n) * lt / t_arr
        + ((n - 1) / n + (n - 1) * math.log(n)) / t_arr
    )
    order = lt**2 / t_arr**2
    if t_arr.ndim == 0:
        return float(value), float(order)
    return value, order


def expansion_error_exponent(
    profile: Profile, window: tuple = (50.0, None), min_nodes: int = 16
) -> float:
    """Fitted decay exponent of |phi - expansion| after dividing out (log t)^2.

    Least-squares slope of log(err/(log t)^2) against log t over the window;
    a clean profile comes out near -2.
    """
    t0, t1 = window
    t1 = profile.grid.t_max if t1 is None else t1
    if profile.grid.t_max < 1e3:
        raise InsufficientRange("profile must reach t_max >= 1e3 for the expansion fit")
    t = profile.t
    mask = (t >= t0) & (t <= t1)
    if int(np.sum(mask)) < min_nodes:
        raise InsufficientRange(f"fit window has {int(np.sum(mask))} nodes, need {min_nodes}")
    tw = t[mask]
    approx, _ = asymptotic_phi(tw, profile.spec.n)
    err = np.abs(profile.phi[mask] - approx)
    floor = 1e-13 * np.abs(profile.phi[mask])
    if np.median(err) <= np.median(floor):
        raise InsufficientRange("error signal is numerically zero; fit is degenerate")
    keep = err > floor
    if int(np.sum(keep)) < min_nodes:
        raise InsufficientRange("too few nodes with a resolvable error signal")
    y = np.log(err[keep] / np.log(tw[keep]) ** 2)
    x = np.log(tw[keep])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)
