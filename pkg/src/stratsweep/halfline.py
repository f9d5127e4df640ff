"""Analytic and numerical sensitivity toolkit for 1D scattering on (0, a).

Transparent problems carry the radiation condition u'(a) = i w u(a),
reflecting problems the Dirichlet condition u(a) = 0; both have u(0) = 1.
Constant relative perturbations shift the wavenumber to w_eps = w sqrt(1+eps),
giving closed-form solutions, DtN numbers and relative errors. The local
DtN number v = u'/u satisfies a Riccati equation that is integrated
numerically for the transparent branch; the reflecting branch blows up at
zeros of u and is handled through closed forms only.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp


class ResonanceError(ArithmeticError):
    """Evaluation at (or too close to) a reflecting resonance or kernel pole."""


_POLE_TOL = 1e-12


@dataclass(frozen=True)
class HalfLineProblem:
    a: float
    omega: complex
    epsilon: float = 0.0
    bc: str = "transparent"

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("interval length must be positive")
        if self.epsilon <= -1:
            raise ValueError("epsilon must exceed -1")
        if np.imag(self.omega) < 0:
            raise ValueError("omega must have nonnegative imaginary part")
        if self.bc not in ("transparent", "reflecting"):
            raise ValueError(f"unknown bc {self.bc!r}")

    @property
    def omega_eps(self):
        return self.omega * np.sqrt(1.0 + self.epsilon)


def _check_reflecting_resonance(p):
    if abs(np.sin(p.omega_eps * p.a)) < _POLE_TOL:
        raise ResonanceError(
            f"omega_eps * a = {p.omega_eps * p.a!r} is a reflecting resonance")


def closed_form_solution(p, x):
    """Exact solution value at x in [0, a]."""
    if not 0 <= x <= p.a:
        raise ValueError("x must lie in [0, a]")
    we = p.omega_eps
    if p.bc == "transparent":
        se = np.sqrt(1.0 + p.epsilon)
        num = se * np.cos(we * (x - p.a)) + 1j * np.sin(we * (x - p.a))
        den = se * np.cos(we * p.a) - 1j * np.sin(we * p.a)
        return complex(num / den)
    _check_reflecting_resonance(p)
    return complex(np.cos(we * x) - np.sin(we * x) / np.tan(we * p.a))


def dtn_numbers(p):
    """DtN number -u'(0) of the perturbed problem.

    Transparent: -i w - w eps sin(w_e a) / (sqrt(1+eps) cos(w_e a) - i sin(w_e a)).
    Reflecting:  w_e cot(w_e a).
    """
    we = p.omega_eps
    w = p.omega
    if p.bc == "transparent":
        se = np.sqrt(1.0 + p.epsilon)
        return complex(-1j * w - w * p.epsilon * np.sin(we * p.a)
                       / (se * np.cos(we * p.a) - 1j * np.sin(we * p.a)))
    _check_reflecting_resonance(p)
    return complex(we * np.cos(we * p.a) / np.sin(we * p.a))


def relative_errors(epsilon, omega, a):
    """(Delta_T, Delta_R): exact relative DtN errors of the constant
    perturbation; Delta_R is the exact quotient, infinity at cot(w a) = 0."""
    we = omega * np.sqrt(1.0 + epsilon)
    delta_t = epsilon * abs(np.sin(we * a)) / np.sqrt(1.0 + epsilon * np.cos(we * a) ** 2)
    if abs(np.sin(omega * a)) < _POLE_TOL or abs(np.sin(we * a)) < _POLE_TOL:
        raise ResonanceError("omega a at a reflecting resonance")
    if abs(np.cos(omega * a)) < _POLE_TOL:
        # cot(omega a) = 0: pole of the relative error
        return float(delta_t), np.inf
    cot0 = np.cos(omega * a) / np.sin(omega * a)
    cote = np.cos(we * a) / np.sin(we * a)
    delta_r = abs(cot0 - np.sqrt(1.0 + epsilon) * cote) / abs(cot0)
    return float(delta_t), float(delta_r)


def riccati_integrate(omega, a, E=None, bc="transparent", atol=1e-10, rtol=1e-12):
    """Integrate v' = -w^2 - E(x) - v^2 backward from v(a) = i w; return v(0).

    E(x) = w^2 eps(x) is the additive perturbation of the squared wavenumber.
    Only the transparent branch is supported: the reflecting local DtN has
    poles at zeros of u_R and is covered by closed forms instead.
    """
    if bc != "transparent":
        raise ValueError("riccati_integrate supports only the transparent branch")
    Efun = E if E is not None else (lambda x: 0.0)
    w2 = omega * omega

    def rhs(x, y):
        return [-w2 - Efun(x) - y[0] * y[0]]

    sol = solve_ivp(rhs, (a, 0.0), [1j * omega + 0j], method="RK45",
                    atol=atol, rtol=rtol, dense_output=False)
    if not sol.success:
        raise RuntimeError(f"Riccati integration failed: {sol.message}")
    return complex(sol.y[0, -1])


def perturbation_kernel(omega, a, bc, x, y):
    """Homogeneous-solution kernel k^y(x) = exp(int_x^y 2 v_B) at eps = 0.

    Transparent: exp(2 i w (y - x)), modulus one. Reflecting:
    sin^2(w (a-y)) / sin^2(w (a-x)), evaluated through the closed-form
    antiderivative of 2 v_R; landing on a pole raises."""
    if not x <= y <= a:
        raise ValueError("need x <= y <= a")
    if bc == "transparent":
        return complex(np.exp(2j * omega * (y - x)))
    if bc != "reflecting":
        raise ValueError(f"unknown bc {bc!r}")
    den = np.sin(omega * (a - x))
    if abs(den) < _POLE_TOL:
        raise ResonanceError(f"kernel pole at x = {x!r}")
    return complex(np.sin(omega * (a - y)) ** 2 / den ** 2)


def first_order_sensitivity(omega, a, bc, E_tilde, x=0.0):
    """k_B(x) = int_x^a k^y_B(x) E~(y) dy by adaptive quadrature."""
    def integrand_re(y):
        return np.real(perturbation_kernel(omega, a, bc, x, y) * E_tilde(y))

    def integrand_im(y):
        return np.imag(perturbation_kernel(omega, a, bc, x, y) * E_tilde(y))

    re, _ = quad(integrand_re, x, a, limit=200)
    im, _ = quad(integrand_im, x, a, limit=200)
    return complex(re + 1j * im)
