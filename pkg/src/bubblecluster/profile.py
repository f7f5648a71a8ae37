"""Profiles of constant mean curvature surfaces of revolution.

The profile curve (r(s), z(s)) in a meridian half-plane is parametrized by
arclength, with tangent angle psi measured from the radial direction::

    r' = cos psi,   z' = sin psi,   psi' = lam - sin(psi) / r

so the meridian curvature psi' plus the parallel curvature sin(psi)/r equals
the mean curvature ``lam`` (sum of principal curvatures).  The quantity

    C = r sin(psi) - lam r^2 / 2

is conserved.  Curves are started at an equator (psi = pi/2, maximal radius)
and labelled by ``tau = 2 lam C``: tau = 0 sphere, tau = 1 cylinder,
0 < tau < 1 unduloid, tau < 0 nodoid.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, solve_ivp

from .errors import IntegrationFailure, PinchOff

log = logging.getLogger(__name__)

RTOL = 1e-12
ATOL = 1e-14


class ProfileKind(str, enum.Enum):
    SPHERE = "sphere"
    CYLINDER = "cylinder"
    UNDULOID = "unduloid"
    NODOID = "nodoid"


def profile_kind(tau: float, eps: float = 1e-12) -> ProfileKind:
    if abs(tau) <= eps:
        return ProfileKind.SPHERE
    if abs(tau - 1.0) <= eps:
        return ProfileKind.CYLINDER
    if 0.0 < tau < 1.0:
        return ProfileKind.UNDULOID
    if tau < 0.0:
        return ProfileKind.NODOID
    raise ValueError(f"shape parameter {tau} > 1 has no equator")


def equator_radius(lam: float, tau: float) -> float:
    return (1.0 + math.sqrt(1.0 - tau)) / lam


def shape_parameter_from_point(lam: float, r: float, psi: float) -> float:
    """Shape parameter of the profile through radius ``r`` with tangent angle ``psi``."""
    return 2.0 * lam * (r * math.sin(psi) - 0.5 * lam * r * r)


def _rhs(lam):
    def f(_s, y):
        r, _z, psi = y
        return [math.cos(psi), math.sin(psi), lam - math.sin(psi) / r]
    return f


@dataclass
class DelaunayProfile:
    kind: ProfileKind
    lam: float
    shape_parameter: float
    samples: np.ndarray  # columns: arclength, radius, axial coordinate
    psi: np.ndarray
    residual: np.ndarray
    period: float | None = None
    axial_period: float | None = None
    _solutions: list = field(default_factory=list, repr=False)

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual))) if len(self.residual) else 0.0

    def evaluate(self, s) -> np.ndarray:
        """(r, z, psi) at arclengths ``s`` from the dense solution."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty((len(s), 3))
        fwd = s >= 0
        if fwd.any():
            out[fwd] = self._solutions[0](s[fwd]).T
        if (~fwd).any():
            out[~fwd] = self._solutions[1](s[~fwd]).T
        return out


def _integrate(lam, y0, s_end, events=None):
    if s_end == 0.0:
        return None
    sol = solve_ivp(_rhs(lam), (0.0, s_end), y0, method="DOP853", rtol=RTOL, atol=ATOL,
                    dense_output=True, events=events)
    if sol.status == -1:
        raise IntegrationFailure(sol.message)
    return sol


def _pinch_event(scale):
    def ev(_s, y):
        return y[0] - 1e-9 * scale
    ev.terminal = True
    return ev


def _equator_event(_s, y):
    return math.cos(y[2])


_equator_event.direction = -1


def _curvature_residual(dense, s, lam, scale):
    """|psi'(s) + sin(psi)/r - lam| with psi' from a 4th-order central stencil."""
    r, _z, psi = dense(s)
    d = 1e-3 * min(scale, r)
    p = [dense(s + k * d)[2] for k in (-2, -1, 1, 2)]
    kp = (p[0] - 8 * p[1] + 8 * p[2] - p[3]) / (12 * d)
    return kp + math.sin(psi) / r - lam


def generate_delaunay_profile(lam: float, shape_parameter: float, span: tuple[float, float],
                              n_samples: int = 201) -> DelaunayProfile:
    """Integrate a CMC profile from its equator over arclengths ``span``.

    Raises PinchOff if the radius reaches zero inside the span.
    """
    if lam <= 0:
        raise ValueError("mean curvature must be positive")
    kind = profile_kind(shape_parameter)
    s0, s1 = float(span[0]), float(span[1])
    if s0 > 0 or s1 < 0 or s1 <= s0:
        raise ValueError("span must contain the equator at arclength 0")
    r0 = equator_radius(lam, shape_parameter)
    y0 = [r0, 0.0, math.pi / 2]
    scale = 1.0 / lam
    margin = 3e-3 * scale  # room for the curvature stencil at the span ends
    fwd = _integrate(lam, y0, s1 + margin, events=[_pinch_event(scale), _equator_event])
    bwd = _integrate(lam, y0, s0 - margin, events=[_pinch_event(scale)])
    for sol, end in ((fwd, s1), (bwd, s0)):
        if sol is not None and sol.t_events[0].size and abs(sol.t_events[0][0]) <= abs(end) + margin:
            raise PinchOff(f"profile radius vanishes at arclength {sol.t_events[0][0]:.6g}")
    s = np.linspace(s0, s1, n_samples)
    dense_f = fwd.sol if fwd is not None else None
    dense_b = bwd.sol if bwd is not None else None
    vals = np.array([(dense_f if si >= 0 else dense_b)(si) for si in s])
    res = np.array([
        _curvature_residual(dense_f if si >= 0 else dense_b, si, lam, scale) for si in s
    ])
    period = axial = None
    if kind in (ProfileKind.UNDULOID, ProfileKind.NODOID) and fwd is not None:
        ev = fwd.t_events[1]
        ev = ev[ev > 1e-9 * scale]
        if ev.size:
            period = float(ev[0])
            axial = float(fwd.y_events[1][fwd.t_events[1] > 1e-9 * scale][0][1])
    samples = np.column_stack([s, vals[:, 0], vals[:, 1]])
    return DelaunayProfile(kind, lam, shape_parameter, samples, vals[:, 2], res, period, axial,
                           [dense_f or dense_b, dense_b or dense_f])


def profile_period(lam: float, shape_parameter: float, max_step: float | None = None) -> tuple[float, float]:
    """Arclength and axial length of one period, from successive equators."""
    kind = profile_kind(shape_parameter)
    if kind not in (ProfileKind.UNDULOID, ProfileKind.NODOID):
        raise ValueError("only unduloids and nodoids are periodic")
    r0 = equator_radius(lam, shape_parameter)
    kw = {} if max_step is None else {"max_step": max_step}
    sol = solve_ivp(_rhs(lam), (0.0, 40.0 / lam), [r0, 0.0, math.pi / 2], method="DOP853",
                    rtol=RTOL, atol=ATOL, events=[_equator_event], **kw)
    t = sol.t_events[0]
    keep = t > 1e-9 / lam
    if not keep.any():
        raise IntegrationFailure("no second equator found")
    return float(t[keep][0]), float(sol.y_events[0][keep][0][1])


@dataclass
class CapillaryZone:
    """Profile piece between two parallel planes met at a prescribed angle."""

    profile: DelaunayProfile
    s_start: float
    s_end: float
    rim_radius: float
    separation: float
    volume: float
    contact_angles_deg: tuple[float, float]


def capillary_zone(lam: float, rim_radius: float, interior_angle_deg: float, n_samples: int = 401) -> CapillaryZone:
    """CMC profile leaving the plane z = 0 at ``rim_radius`` with the given interior angle.

    The interior angle is measured inside the enclosed region between the
    plane (pointing toward the axis) and the surface.  The profile is
    followed until it returns to the rim radius; the separation of the two
    planes and the enclosed volume are outputs of the initial value problem.
    """
    psi_rim = math.pi - math.radians(interior_angle_deg)
    tau = shape_parameter_from_point(lam, rim_radius, psi_rim)
    if abs(tau) < 1e-12:
        tau = 0.0
    kind = profile_kind(tau)
    r0 = equator_radius(lam, tau)
    scale = 1.0 / lam

    def rim_event(_s, y):
        return y[0] - rim_radius

    rim_event.terminal = False
    hits = []
    for direction in (1.0, -1.0):
        sol = solve_ivp(_rhs(lam), (0.0, direction * 20.0 * scale), [r0, 0.0, math.pi / 2], method="DOP853",
                        rtol=RTOL, atol=ATOL, events=[rim_event, _pinch_event(scale)])
        t = sol.t_events[0]
        if not t.size:
            raise IntegrationFailure("profile never reaches the rim radius")
        hits.append(float(t[0]))
    s_end, s_start = hits
    prof = generate_delaunay_profile(lam, tau, (s_start, s_end), n_samples=n_samples)
    s = prof.samples[:, 0]
    r, z, psi = prof.samples[:, 1], prof.samples[:, 2], prof.psi
    # enclosed volume between the planes: integral of pi r^2 dz
    vol = float(simpson(np.pi * r * r * np.sin(psi), x=s))
    a0 = 180.0 - math.degrees(psi[0])
    a1 = math.degrees(psi[-1])
    log.debug("capillary zone: kind=%s tau=%.3g separation=%.6g", kind.value, tau, z[-1] - z[0])
    return CapillaryZone(prof, s_start, s_end, rim_radius, float(z[-1] - z[0]), vol, (a0, a1))
