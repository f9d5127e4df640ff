"""Material models and separable coefficients for the two model problems.

Radial profiles are piecewise polynomials in a local coordinate per piece.
Coefficient builders produce the radial factors c0, c1, c2 and angular
weights w0, w1 of the separable bilinear form

    a(u, v) = int int (-c0 w0 u v + c1 w0 u_r v_r + c2 w1 u_t v_t) dtheta dr.

All evaluation callables accept real or complex arrays; complex arguments
arise from the PML coordinate stretch, with piece selection always done on
the real part of the coordinate (right-limit convention at breakpoints).
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

_BREAK_SIDE = "right"  # value at an interior breakpoint is the right limit


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class RadialProfile:
    """Piecewise-polynomial density and shear velocity.

    breakpoints: strictly increasing radii, length n+1.
    rho_polys / v_polys: per piece, polynomial coefficients (ascending powers)
    in the local coordinate t = (r - r_left)/(r_right - r_left).
    """

    breakpoints: np.ndarray
    rho_polys: tuple
    v_polys: tuple

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        object.__setattr__(self, "breakpoints", bp)
        if bp.ndim != 1 or bp.size < 2 or not np.all(np.diff(bp) > 0):
            raise ProfileError("breakpoints must be strictly increasing, length >= 2")
        npieces = bp.size - 1
        if len(self.rho_polys) != npieces or len(self.v_polys) != npieces:
            raise ProfileError("need one (rho, v) polynomial pair per piece")
        object.__setattr__(self, "rho_polys", tuple(np.asarray(c, dtype=float) for c in self.rho_polys))
        object.__setattr__(self, "v_polys", tuple(np.asarray(c, dtype=float) for c in self.v_polys))
        # positivity spot-check on a dense sample per piece
        t = (np.cos(np.linspace(0, np.pi, 17)) + 1.0) / 2.0
        for k in range(npieces):
            if np.polyval(self.rho_polys[k][::-1], t).min() <= 0:
                raise ProfileError(f"rho must be positive on piece {k}")
            if np.polyval(self.v_polys[k][::-1], t).min() <= 0:
                raise ProfileError(f"v must be positive on piece {k}")

    @property
    def r_inner(self):
        return float(self.breakpoints[0])

    @property
    def r_outer(self):
        return float(self.breakpoints[-1])

    def _pieces(self, r):
        rr = np.real(np.asarray(r))
        lo, hi = self.breakpoints[0], self.breakpoints[-1]
        if np.any(rr < lo - 1e-12) or np.any(rr > hi + 1e-12):
            raise ProfileError("evaluation point outside profile domain")
        k = np.searchsorted(self.breakpoints, rr, side=_BREAK_SIDE) - 1
        return np.clip(k, 0, self.breakpoints.size - 2)

    def _eval_polys(self, polys, r):
        r = np.asarray(r)
        k = np.atleast_1d(self._pieces(r))
        flat = np.atleast_1d(r).ravel()
        out = np.empty(flat.shape, dtype=np.result_type(r, np.float64))
        kf = k.ravel()
        for piece in np.unique(kf):
            a, b = self.breakpoints[piece], self.breakpoints[piece + 1]
            t = (flat[kf == piece] - a) / (b - a)
            out[kf == piece] = np.polyval(polys[piece][::-1], t)
        if np.asarray(r).ndim == 0:
            return out[0]
        return out.reshape(np.asarray(r).shape)

    def rho(self, r):
        return self._eval_polys(self.rho_polys, r)

    def v(self, r):
        return self._eval_polys(self.v_polys, r)

    def mu(self, r):
        v = self.v(r)
        return self.rho(r) * v * v


def eval_profile(profile, r):
    """(rho, v) at a single radius; right limit at interior breakpoints."""
    return float(np.real(profile.rho(r))), float(np.real(profile.v(r)))


# model radii: outer surface normalized to 1, core-mantle boundary at 3480/6371
R_SURFACE = 1.0
R_CMB = 3480.0 / 6371.0


def prem_like_profile():
    """Bundled synthetic 3-layer mantle-like profile.

    Radii are normalized to the planet radius; velocities keep mantle-like
    ratios and are scaled so that desk frequencies omega in 32..256 span
    roughly 2..15 wavelengths across the shell. One interior velocity
    discontinuity at r = 0.896 plus a kink at r = 0.66; neither aligns with
    sweep layers.
    """
    return RadialProfile(
        breakpoints=np.array([R_CMB, 0.66, 0.896, 1.0]),
        rho_polys=(
            np.array([5.5, -0.9]),
            np.array([4.6, -0.8]),
            np.array([3.5, -0.7]),
        ),
        v_polys=(
            np.array([1.2, -0.15]),
            np.array([1.05, -0.1333333333333333]),
            np.array([0.8666666666666667, -0.3]),
        ),
    )


def load_profile(path):
    """Read a profile file.

    Grammar: a header line 'breakpoints: r0 r1 ... rn', then for each of the
    n pieces two lines 'rho: a0 a1 ...' and 'v: a0 a1 ...' with polynomial
    coefficients in the local piece coordinate. '#' starts a comment.
    """
    lines = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                lines.append(line)
    if not lines or not lines[0].startswith("breakpoints:"):
        raise ProfileError(f"{path}: first line must be 'breakpoints: ...'")
    breakpoints = np.array([float(x) for x in lines[0].split(":", 1)[1].split()])
    npieces = breakpoints.size - 1
    if len(lines) != 1 + 2 * npieces:
        raise ProfileError(f"{path}: expected {2 * npieces} coefficient lines")
    rho_polys, v_polys = [], []
    for k in range(npieces):
        rho_line, v_line = lines[1 + 2 * k], lines[2 + 2 * k]
        if not rho_line.startswith("rho:") or not v_line.startswith("v:"):
            raise ProfileError(f"{path}: piece {k} must have 'rho:' then 'v:' lines")
        rho_polys.append(np.array([float(x) for x in rho_line.split(":", 1)[1].split()]))
        v_polys.append(np.array([float(x) for x in v_line.split(":", 1)[1].split()]))
    return RadialProfile(breakpoints, tuple(rho_polys), tuple(v_polys))


def save_profile(path, profile):
    with open(path, "w") as fh:
        fh.write("breakpoints: " + " ".join(repr(float(x)) for x in profile.breakpoints) + "\n")
        for rho_c, v_c in zip(profile.rho_polys, profile.v_polys):
            fh.write("rho: " + " ".join(repr(float(x)) for x in rho_c) + "\n")
            fh.write("v: " + " ".join(repr(float(x)) for x in v_c) + "\n")


@dataclass(frozen=True)
class PMLSpec:
    """Complex-scaling layer [start, start+width] with absorption profile
    sigma(s) = sigma0 * ((s - start)/width)**exponent and frequency shift
    omega -> omega + i*gamma inside the scaled operator."""

    start: float
    width: float
    sigma0: float
    exponent: int = 2
    gamma: float = 0.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("PML width must be positive")
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be nonnegative")
        if self.exponent < 0:
            raise ValueError("exponent must be >= 0")

    @classmethod
    def tuned(cls, start, width, strength=9.0, exponent=2, gamma=0.0):
        """Choose sigma0 so the one-way amplitude decay is exp(-strength)."""
        sigma0 = strength * (exponent + 1) / width
        return cls(start, width, sigma0, exponent, gamma)

    def sigma(self, r):
        t = np.clip((np.real(r) - self.start) / self.width, 0.0, None)
        return self.sigma0 * t ** self.exponent

    def sigma_integral(self, r):
        t = np.clip((np.real(r) - self.start) / self.width, 0.0, None)
        return self.sigma0 * self.width / (self.exponent + 1) * t ** (self.exponent + 1)


@dataclass(frozen=True)
class SeparableCoefficients:
    """Radial factors and angular weights of the separable bilinear form.

    volume_r/volume_theta give the physical volume element used by weighted
    L2 norms (r^4 sin^3 and sin^3 theta for SH, r and 1 for the disk).
    """

    c0: Callable
    c1: Callable
    c2: Callable
    w0: Callable
    w1: Callable
    omega: complex
    r_interval: tuple
    theta_interval: tuple
    theta_bc: str               # 'dirichlet' | 'periodic'
    r_bc_inner: str = "neumann"  # 'neumann' | 'dirichlet'
    r_bc_outer: str = "neumann"  # 'neumann' | 'dirichlet' | 'pml'
    volume_r: Callable = field(default=lambda r: np.ones_like(np.asarray(r, dtype=float)))
    volume_theta: Callable = field(default=lambda t: np.ones_like(np.asarray(t, dtype=float)))
    pml: Optional[PMLSpec] = None
    profile: Optional[RadialProfile] = None

    def __post_init__(self):
        if self.theta_bc not in ("dirichlet", "periodic"):
            raise ValueError(f"unknown theta_bc {self.theta_bc!r}")


def make_sh_coefficients(profile, omega):
    """SH-wave coefficients: c0 = rho w^2 r^4, c1 = mu r^4, c2 = mu r^2,
    w0 = w1 = sin^3(theta) on (0, pi) with Dirichlet theta ends and free
    (Neumann) radial ends."""
    if not np.real(omega) > 0:
        raise ValueError("omega must be positive")
    om2 = omega * omega

    def c0(r):
        return profile.rho(r) * om2 * r ** 4

    def c1(r):
        return profile.mu(r) * r ** 4

    def c2(r):
        return profile.mu(r) * r ** 2

    sin3 = lambda t: np.sin(t) ** 3
    return SeparableCoefficients(
        c0=c0, c1=c1, c2=c2, w0=sin3, w1=sin3,
        omega=omega,
        r_interval=(profile.r_inner, profile.r_outer),
        theta_interval=(0.0, np.pi),
        theta_bc="dirichlet",
        volume_r=lambda r: np.real(r) ** 4,
        volume_theta=sin3,
        profile=profile,
    )


def disk_speeds(alpha, J):
    """Wavespeed per radial layer, outermost first: 1/(1+a/2), 1/(1-a/2), ..."""
    if not 0 <= alpha < 2:
        raise ValueError("alpha must satisfy 0 <= alpha < 2")
    return np.array([1.0 / (1.0 + alpha / 2.0) if k % 2 == 0 else 1.0 / (1.0 - alpha / 2.0)
                     for k in range(J)])


def make_disk_coefficients(alpha, omega, J):
    """Unit-disk Helmholtz coefficients with J alternating-speed layers:
    c0 = r w^2 / c(r)^2, c1 = r, c2 = 1/r, w0 = w1 = 1 on (0, 2 pi) periodic.

    The outer boundary is intended to carry a PML (apply pml_scale before
    assembly); the center uses the natural condition.
    """
    if not np.real(omega) > 0:
        raise ValueError("omega must be positive")
    if J < 1:
        raise ValueError("J must be >= 1")
    speeds = disk_speeds(alpha, J)
    breaks = np.linspace(0.0, 1.0, J + 1)
    # ascending interval m = [m/J, (m+1)/J) is layer J-m counted from outside
    interval_speed = speeds[::-1].copy()
    om2 = omega * omega

    def speed(r):
        rr = np.asarray(np.real(np.asarray(r)), dtype=float)
        k = np.clip(np.searchsorted(breaks, rr, side=_BREAK_SIDE) - 1, 0, J - 1)
        return interval_speed[k]

    def c0(r):
        return np.asarray(r) * om2 / speed(r) ** 2

    ones = lambda t: np.ones_like(np.asarray(t, dtype=float))
    return SeparableCoefficients(
        c0=c0,
        c1=lambda r: np.asarray(r) * np.ones_like(np.asarray(r)),
        c2=lambda r: 1.0 / np.asarray(r),
        w0=ones, w1=ones,
        omega=omega,
        r_interval=(0.0, 1.0),
        theta_interval=(0.0, 2.0 * np.pi),
        theta_bc="periodic",
        volume_r=lambda r: np.real(r),
        volume_theta=ones,
    )


def damped(coeffs, gamma):
    """Shift the frequency omega -> omega + i*gamma.

    Only c0 depends on omega (quadratically) in both model problems, so the
    damped coefficients are c0 * (omega_d/omega)^2 with everything else kept.
    """
    if gamma == 0:
        return coeffs
    om_d = coeffs.omega + 1j * gamma
    factor = (om_d / coeffs.omega) ** 2
    c0 = coeffs.c0
    return replace(coeffs, c0=lambda r: c0(r) * factor, omega=om_d)


def pml_scale(spec, coeffs):
    """Apply the complex radial stretch of `spec` to separable coefficients.

    Inside [start, start+width]: r~ = r + (i/w~) int sigma, d = dr~/dr, and
    c0 -> c0(r~) d, c1 -> c1(r~)/d, c2 -> c2(r~) d; identity outside. The
    returned coefficients mark the outer radial end as 'pml'.
    """
    lo, hi = coeffs.r_interval
    if spec.start < lo - 1e-12 or spec.start + spec.width > hi + 1e-9:
        raise ValueError("PML region must lie inside the radial interval")
    om = coeffs.omega + 1j * spec.gamma

    def stretch(r):
        r = np.asarray(r)
        rt = r + (1j / om) * spec.sigma_integral(r)
        d = 1.0 + (1j / om) * spec.sigma(r)
        return rt, d

    def wrap(f, power):
        def g(r):
            rt, d = stretch(r)
            return f(rt) * d ** power
        return g

    return replace(
        coeffs,
        c0=wrap(coeffs.c0, +1),
        c1=wrap(coeffs.c1, -1),
        c2=wrap(coeffs.c2, +1),
        r_bc_outer="pml",
        pml=spec,
    )


@dataclass(frozen=True)
class Perturbation:
    """Relative velocity perturbation: none, trig (cos(r t) sin(r t)) or
    constant."""

    kind: str = "none"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "trig", "constant"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


def apply_perturbation(profile, pert):
    """Return the perturbed velocity v(r, theta).

    trig:     v = v_bg(r) (1 + eps cos(r theta) sin(r theta))
    constant: v = v_bg(r) (1 + eps)
    none:     v = v_bg(r)

    The trig variant breaks separability; feed it to the general assembly.
    """
    eps = pert.epsilon
    if pert.kind == "trig" and eps > 0:
        def v(r, theta):
            rt = np.asarray(r) * np.asarray(theta)
            return profile.v(r) * (1.0 + eps * np.cos(rt) * np.sin(rt))
    elif pert.kind == "constant" and eps > 0:
        def v(r, theta):
            return profile.v(r) * (1.0 + eps) * np.ones_like(np.asarray(theta, dtype=float))
    else:
        def v(r, theta):
            return profile.v(r) * np.ones_like(np.asarray(theta, dtype=float))
    return v


def perturbed_profile(profile, epsilon):
    """Profile with v scaled by (1 + epsilon) everywhere (stays separable)."""
    return RadialProfile(
        profile.breakpoints,
        profile.rho_polys,
        tuple(c * (1.0 + epsilon) for c in profile.v_polys),
    )
