"""Metric-level quantities of the radial soliton in the cohomogeneity-one frame.

The link enters only through coefficient slots and its volume: the soliton
metric has radial/Reeb coefficient phi' and transverse coefficient phi, the
model metric has n and nt, and every quantity below is diagonal in the
adapted orthonormal frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import DomainError, InsufficientRange, UnsupportedOrder
from .profile import ConeSpec, Profile


@dataclass(frozen=True)
class MetricSample:
    """Frame coefficients of a cohomogeneity-one metric at one radius."""

    t: float
    c_rad: float
    c_reeb: float
    c_trans: float

    def __post_init__(self):
        if min(self.c_rad, self.c_reeb, self.c_trans) <= 0.0:
            raise DomainError(f"metric coefficients must be positive at t={self.t}")


def soliton_sample(profile: Profile, k: int) -> MetricSample:
    return MetricSample(
        t=float(profile.t[k]),
        c_rad=float(profile.phi1[k]),
        c_reeb=float(profile.phi1[k]),
        c_trans=float(profile.phi[k]),
    )


def model_sample(t: float, n: int) -> MetricSample:
    return MetricSample(t=t, c_rad=float(n), c_reeb=float(n), c_trans=float(n * t))


def scalar_curvature(profile: Profile) -> np.ndarray:
    """R(t) = 4n - 4 phi'(t), exact in the reduction."""
    return 4.0 * profile.spec.n - 4.0 * profile.phi1


@dataclass(frozen=True)
class CurvatureFloorResult:
    passed: bool
    threshold_t: float

    def __bool__(self) -> bool:
        return self.passed


def curvature_floor_check(profile: Profile, eps: float) -> CurvatureFloorResult:
    """Check R(t) >= 4(n-1-eps)/t from some radius on; report the smallest one.

    eps = 0 is rejected: the bound degenerates to a strict inequality with
    vanishing margin and cannot be certified at finite resolution.
    """
    if not (0.0 < eps < 1.0):
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    if profile.grid.t_max < 100.0:
        raise DomainError("profile must reach t >= 100")
    t = profile.t
    R = scalar_curvature(profile)
    n = profile.spec.n
    ok = (t > 0.0) & (R * t >= 4.0 * (n - 1.0 - eps))
    # smallest node index from which the bound holds through t_max
    holds_from = None
    for k in range(len(t) - 1, -1, -1):
        if ok[k]:
            holds_from = k
        else:
            break
    if holds_from is None:
        return CurvatureFloorResult(False, math.inf)
    return CurvatureFloorResult(True, float(t[holds_from]))


def metric_difference(profile: Profile) -> np.ndarray:
    """Frame norm of (soliton - model) measured in the model metric.

    |g - g_model| = sqrt((2n-2)((phi-nt)/(nt))^2 + 2((phi'-n)/n)^2),
    the exact norm of the diagonal difference tensor.
    """
    t = profile.t
    if np.any(t <= 0.0):
        k = int(np.argmax(t <= 0.0))
        raise DomainError(f"metric difference needs t > 0; node {k} has t={t[k]}")
    n = profile.spec.n
    trans = (profile.phi - n * t) / (n * t)
    radial = (profile.phi1 - n) / n
    return np.sqrt((2.0 * n - 2.0) * trans**2 + 2.0 * radial**2)


def charge_identity(profile: Profile) -> np.ndarray:
    """Per-node defect of |X|^2 + R = 4n with |X|^2 = 4 phi'.

    The identity is definitional in the reduction, so the defect is pure
    floating-point noise.
    """
    n = profile.spec.n
    grad_sq = 4.0 * profile.phi1
    R = 4.0 * n - 4.0 * profile.phi1
    return np.abs(grad_sq + R - 4.0 * n)


def volume_growth(profile: Profile, spec: ConeSpec, min_nodes: int = 16):
    """Log-log slope of geodesic-ball volume against radius over the top decade.

    V(t) = link_volume * (n/2) * int phi^(n-1) phi' dt and the radial
    distance s(t) = int sqrt(phi')/2 dt, both by composite Simpson on the
    uniform grid.  The expected slope is n (half the real dimension).
    Returns (slope, samples) with samples columns (t, V, s).
    """
    if profile.grid.t_max < 1e3:
        raise InsufficientRange("volume growth needs t_max >= 1e3")
    n = spec.n
    t = profile.t
    v_integrand = profile.phi ** (n - 1) * profile.phi1
    s_integrand = np.sqrt(profile.phi1) / 2.0
    V = spec.link_volume * (n / 2.0) * cumulative_simpson(v_integrand, x=t, initial=0.0)
    s = cumulative_simpson(s_integrand, x=t, initial=0.0)
    samples = np.column_stack([t, V, s])
    s_max = s[-1]
    mask = (s >= s_max / 10.0) & (V > 0.0) & (s > 0.0)
    if int(np.sum(mask)) < min_nodes:
        raise InsufficientRange(f"top-decade window has {int(np.sum(mask))} nodes")
    slope = np.polyfit(np.log(s[mask]), np.log(V[mask]), 1)[0]
    return float(slope), samples


def hat_frame_decay(t: float, k: int, n: int) -> float:
    """Frame norm of the k-th model-metric covariant derivative of 1/t.

    k = 0 is 1/t itself; k = 1 uses |dt| = 2/sqrt(n); k = 2 assembles the
    two contributions of the connection (radial stretch and the transverse
    cone terms).  Orders k >= 3 are outside the implemented range.
    """
    if t <= 1.0:
        raise DomainError(f"need t > 1, got {t}")
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    if k == 0:
        return 1.0 / t
    if k == 1:
        return 2.0 / (math.sqrt(n) * t**2)
    if k == 2:
        return (2.0 / n) * math.sqrt(2.0 * n + 14.0) / t**3
    raise UnsupportedOrder(f"covariant order k={k} not implemented (k <= 2 only)")


@dataclass
class GeometryReport:
    """Per-node geometric diagnostics of a profile."""

    t: np.ndarray
    scalar_curvature: np.ndarray
    diff_norm: np.ndarray
    charge_defect: np.ndarray
    volume: np.ndarray
    geodesic_s: np.ndarray

    CSV_HEADER = "t,R,diff_norm,charge_defect,volume,geodesic_s"

    def to_csv(self, path) -> None:
        cols = (
            self.t,
            self.scalar_curvature,
            self.diff_norm,
            self.charge_defect,
            self.volume,
            self.geodesic_s,
        )
        with open(path, "w") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for row in zip(*cols):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def geometry_report(profile: Profile) -> GeometryReport:
    _, samples = volume_growth(profile, profile.spec)
    return GeometryReport(
        t=profile.t.copy(),
        scalar_curvature=scalar_curvature(profile),
        diff_norm=metric_difference(profile),
        charge_defect=charge_identity(profile),
        volume=samples[:, 1],
        geodesic_s=samples[:, 2],
    )


def metric_difference_rate_constant(profile: Profile, window: tuple = (100.0, 1e4)) -> float:
    """Mean of |g - g_model| * t / log t over the window.

    Witnesses boundedness of the decay rate; the leading-order target value
    is sqrt(2n-2)*(n-1)/n.
    """
    t = profile.t
    mask = (t >= window[0]) & (t <= window[1])
    if int(np.sum(mask)) < 16:
        raise InsufficientRange("rate window too short")
    d = metric_difference(profile)[mask]
    return float(np.mean(d * t[mask] / np.log(t[mask])))
