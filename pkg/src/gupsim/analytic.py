"""Closed-form layer: sideband sums, slow-flow fixed points, supermode rates.

For stationary forced vibration b_j = beta_j0 + A_j exp(-i delta2 t), the
cavity sees a phase modulation of index xi = 2 g_b |A_b| / delta2 and its
stationary field is a double Bessel series over sideband orders.  The
coefficient of the exp(-i delta2 t) component of |a|^2 drives the bright
slow amplitude; grouping it as P_{-1} = A_b F1 + F2 + A_b^2 F3 defines the
auxiliary functions

    F1 = (E_h^2/|A_b|) sum_n J_n J_{n+1} / [(i n D - L_h)(-i (n+1) D - L_h*)]
         + (E_c^2/|A_b|) [same with L_c],
    F2 = E_h E_c sum_n J_n^2 / [(i n D - L_h)(-i n D - L_c*)],
    F3 = (E_h E_c/|A_b|^2) sum_n J_n J_{n+2} / [(i n D - L_h*)(-i (n+2) D - L_c)],

with J_n = J_n(-xi), D = delta2, L_h = -i(delta1 - delta2) - kappa and
L_c = -i delta1 - kappa.  F1 and F3 have finite xi -> 0 limits (the Bessel
products scale as xi and xi^2); they are evaluated through ratios in xi so
the formulas stay regular at zero amplitude.  All series are truncated
adaptively with a certified relative tail below 1e-12.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import jv

from .errors import DomainError, NumericalError
from .params import SystemParams

__all__ = [
    "SidebandCoefficients",
    "SupermodeParams",
    "bessel_j",
    "sideband_coefficients",
    "cavity_closed_form",
    "steady_bright_amplitude",
    "supermode_rates",
    "lorentzian_spectrum",
    "predicted_shift",
    "detuned_bright_amplitude",
    "dark_excitation_estimate",
    "f1_reality_diagnostic",
]

_TAIL_RTOL = 1e-12
_MAX_ORDER = 500
_XI_FLOOR = 1e-8


def bessel_j(n, x):
    """First-kind Bessel J_n(x) for |n| <= 500, |x| < 1e4.

    Accuracy is 1e-12 relative for |n| <= 200 over the supported range.
    """
    n_arr = np.asarray(n)
    x_arr = np.asarray(x, dtype=float)
    if np.any(np.abs(x_arr) >= 1e4):
        raise DomainError("argument out of supported range |x| < 1e4")
    if np.any(np.abs(n_arr) > _MAX_ORDER):
        raise DomainError(f"order out of supported range |n| <= {_MAX_ORDER}")
    out = jv(n_arr, x_arr)
    if np.ndim(n) == 0 and np.ndim(x) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class SidebandCoefficients:
    """Converged sideband sums at one operating point."""

    f1: complex
    f2: complex
    f3: complex
    p_minus1: complex
    p_zero: float
    xi: float
    truncation_order: int
    tail_bound: float


@dataclass(frozen=True)
class SupermodeParams:
    """Effective rates of the bright/dark superpositions in the drive frame."""

    gamma_b: complex
    gamma_d: complex
    mu: complex
    g_b: float
    delta_p: float


def _lvalues(params: SystemParams, delta1_eff: float | None):
    d1 = params.delta1 if delta1_eff is None else delta1_eff
    lh = -1j * (d1 - params.delta2) - params.kappa
    lc = -1j * d1 - params.kappa
    return lh, lc


def _raw_sums(xi: float, params: SystemParams, lh: complex, lc: complex, order: int):
    """Sideband sums at truncation order `order` (indices |n| <= order)."""
    d2 = params.delta2
    n = np.arange(-order, order + 1)
    j0 = jv(n, -xi)
    j1 = jv(n + 1, -xi)
    j2 = jv(n + 2, -xi)
    jm1 = jv(n - 1, -xi)
    dh = 1j * n * d2 - lh
    dc = 1j * n * d2 - lc
    s1h = np.sum(j0 * j1 / (dh * (-1j * (n + 1) * d2 - np.conj(lh))))
    s1c = np.sum(j0 * j1 / (dc * (-1j * (n + 1) * d2 - np.conj(lc))))
    s2 = np.sum(j0 * j0 / (dh * (-1j * n * d2 - np.conj(lc))))
    s3 = np.sum(j0 * j2 / ((1j * n * d2 - np.conj(lh)) * (-1j * (n + 2) * d2 - lc)))
    t_h = np.sum(j0 * j0 / np.abs(dh) ** 2)
    t_c = np.sum(j0 * j0 / np.abs(dc) ** 2)
    s0 = np.sum(j0 * jm1 / (dh * (-1j * (n - 1) * d2 - np.conj(lc))))
    return np.array([s1h, s1c, s2, s3, t_h, t_c, s0])


def _converged_sums(xi: float, params: SystemParams, lh: complex, lc: complex):
    if xi >= 1e4:
        raise DomainError("modulation index out of supported range (xi < 1e4)")
    order = int(math.ceil(xi)) + 20
    prev = _raw_sums(xi, params, lh, lc, order)
    while True:
        order_next = min(_MAX_ORDER, order + max(10, order // 2))
        cur = _raw_sums(xi, params, lh, lc, order_next)
        scale = np.maximum(np.abs(cur), 1e-300)
        tail = float(np.max(np.abs(cur - prev) / scale))
        if tail < _TAIL_RTOL:
            return cur, order_next, tail
        if order_next >= _MAX_ORDER:
            raise NumericalError(
                f"sideband sums did not converge by order {_MAX_ORDER} "
                f"(xi={xi:g}, tail={tail:g})"
            )
        order, prev = order_next, cur


def sideband_coefficients(
    abs_ab: float,
    theta: float,
    params: SystemParams,
    delta1_eff: float | None = None,
) -> SidebandCoefficients:
    """Evaluate F1, F2, F3 and the +-1/0 sideband coefficients of |a|^2."""
    if abs_ab < 0:
        raise DomainError("|A_b| must be non-negative")
    gb = params.g_bright
    d2 = params.delta2
    u = 2.0 * gb / d2
    xi = u * abs_ab
    lh, lc = _lvalues(params, delta1_eff)
    eh, ec = params.drive_h, params.drive_c

    sums, order, tail = _converged_sums(xi, params, lh, lc)
    s1h, s1c, s2, s3, t_h, t_c, s0 = sums
    if u > 0.0 and xi < _XI_FLOOR:
        # linear/quadratic small-xi regime: evaluate ratios at a tiny finite xi
        sums_f, order, tail = _converged_sums(_XI_FLOOR, params, lh, lc)
        ratio1h = sums_f[0] / _XI_FLOOR
        ratio1c = sums_f[1] / _XI_FLOOR
        ratio3 = sums_f[3] / _XI_FLOOR**2
    elif u > 0.0:
        ratio1h, ratio1c, ratio3 = s1h / xi, s1c / xi, s3 / xi**2
    else:
        ratio1h = ratio1c = ratio3 = 0.0

    f1 = (eh**2 * ratio1h + ec**2 * ratio1c) * u
    f2 = eh * ec * s2
    f3 = eh * ec * ratio3 * u**2
    ab = abs_ab * cmath.exp(1j * theta)
    p_minus1 = ab * f1 + f2 + ab * ab * f3
    p_zero = float(
        eh**2 * t_h.real + ec**2 * t_c.real
        + 2.0 * (eh * ec * cmath.exp(-1j * theta) * s0).real
    )
    return SidebandCoefficients(
        f1=complex(f1),
        f2=complex(f2),
        f3=complex(f3),
        p_minus1=complex(p_minus1),
        p_zero=p_zero,
        xi=xi,
        truncation_order=order,
        tail_bound=tail,
    )


def f1_reality_diagnostic(coeffs: SidebandCoefficients) -> float:
    """Im(F1)/|F1|: how far the drive calibration is from making F1 real."""
    if coeffs.f1 == 0:
        return 0.0
    return float(coeffs.f1.imag / abs(coeffs.f1))


def cavity_closed_form(
    t,
    abs_ab: float,
    theta: float,
    params: SystemParams,
    delta1_eff: float | None = None,
) -> np.ndarray:
    """Stationary cavity field for prescribed mechanical motion.

    Assumes b_j(t) = A_j exp(-i delta2 t) with constant slow amplitudes whose
    bright combination has modulus ``abs_ab`` and phase ``theta``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    d2 = params.delta2
    gb = params.g_bright
    xi = 2.0 * gb * abs_ab / d2
    if xi >= 1e4:
        raise DomainError("modulation index out of supported range (xi < 1e4)")
    lh, lc = _lvalues(params, delta1_eff)
    order = int(math.ceil(xi)) + 20
    while True:
        n = np.arange(-order, order + 1)
        weight = np.abs(jv(n, -xi)) * (
            1.0 / np.abs(1j * n * d2 - lh) + 1.0 / np.abs(1j * n * d2 - lc)
        )
        interior = weight[3:-3].sum()
        edge = weight[:3].sum() + weight[-3:].sum()
        if edge <= _TAIL_RTOL * max(interior, 1e-300):
            break
        if order >= _MAX_ORDER:
            raise NumericalError(f"closed-form series did not converge by order {_MAX_ORDER}")
        order = min(_MAX_ORDER, order + max(10, order // 2))

    jn = jv(n, -xi)
    phase = np.exp(1j * np.outer(n, d2 * t - theta))
    sum_h = (jn / (1j * n * d2 - lh)) @ phase * np.exp(-1j * d2 * t)
    sum_c = (jn / (1j * n * d2 - lc)) @ phase
    psi = xi * np.sin(d2 * t - theta)
    return np.exp(1j * psi) * (params.drive_h * sum_h + params.drive_c * sum_c)


def static_offsets(p_zero: float, params: SystemParams) -> tuple[complex, complex]:
    """Radiation-pressure equilibrium displacements beta_j0 = i g_j P0/(i omega_j + gamma_j)."""
    b10 = 1j * params.g1 * p_zero / (1j * params.omega_b1 + params.gamma1)
    b20 = 1j * params.g2 * p_zero / (1j * params.omega_b2 + params.gamma2)
    return b10, b20


def supermode_rates(params: SystemParams) -> SupermodeParams:
    """Shared bright/dark rate and the beam-splitter coupling from asymmetry."""
    dw1 = params.omega_b1 - params.delta2
    dw2 = params.omega_b2 - params.delta2
    gamma = 0.5 * (params.gamma1 + params.gamma2) + 0.5j * (dw1 + dw2)
    mu = 0.5 * (params.gamma2 - params.gamma1) + 0.5j * (params.omega_b2 - params.omega_b1)
    return SupermodeParams(
        gamma_b=gamma,
        gamma_d=gamma,
        mu=mu,
        g_b=params.g_bright,
        delta_p=gamma.imag,
    )


def steady_bright_amplitude(
    params: SystemParams,
    include_static_shift: bool = True,
    gamma_b: complex | None = None,
    tol: float = 1e-13,
    max_iter: int = 10000,
    full_output: bool = False,
):
    """Stationary bright amplitude from the slow-flow balance.

    Solves 0 = -Gamma_b A + i g_b (A F1 + F2 + A^2 F3) by damped fixed-point
    iteration continued from A = 0 (the branch reached from rest), with the
    sideband sums re-evaluated at each iterate.  The cubic-nonlinearity terms
    are not included; the dark amplitude is taken as zero.  With
    ``include_static_shift`` the cavity detuning is corrected each iterate
    for the radiation-pressure displacement derived from the DC intensity.
    """
    rates = supermode_rates(params)
    gamma = rates.gamma_b if gamma_b is None else gamma_b
    if gamma == 0:
        raise DomainError("effective bright-mode rate must be non-zero")
    gb = params.g_bright
    if gb == 0.0 or (params.drive_h == 0.0 and params.drive_c == 0.0):
        return (0j, None) if full_output else 0j

    a = 0j
    damping = 0.5
    history: list[complex] = []
    delta1_eff = params.delta1
    coeffs = None
    converge_count = 0
    warned_oscillation = False
    for it in range(max_iter):
        coeffs = sideband_coefficients(abs(a), cmath.phase(a) if a != 0 else params.theta,
                                       params, delta1_eff)
        target = 1j * gb * (a * coeffs.f1 + coeffs.f2 + a * a * coeffs.f3) / gamma
        a_next = (1.0 - damping) * a + damping * target
        if include_static_shift:
            b10, b20 = static_offsets(coeffs.p_zero, params)
            delta1_eff = params.delta1 - 2.0 * (params.g1 * b10.real + params.g2 * b20.real)
        history.append(a_next)
        move = abs(a_next - a) / max(abs(a_next), 1e-300)
        if len(history) >= 3:
            z0, z1, z2 = history[-3], history[-2], history[-1]
            osc = abs(z2 - z0) < 0.2 * abs(z2 - z1)
            if osc and not warned_oscillation and it > 40:
                warnings.warn(
                    "fixed-point iterates oscillate; possible bistable operating point",
                    stacklevel=2,
                )
                warned_oscillation = True
            if osc:
                damping = max(0.05, 0.5 * damping)
            if it > 30 and it % 8 == 0:
                denom = z2 - 2.0 * z1 + z0
                if abs(denom) > 1e-300:
                    acc = z2 - (z2 - z1) ** 2 / denom
                    if abs(acc) < 10.0 * abs(z2) + 1.0:
                        a_next = acc
        converge_count = converge_count + 1 if move < tol else 0
        a = a_next
        if converge_count >= 3:
            break
    else:
        raise NumericalError(f"bright-mode fixed point did not converge in {max_iter} iterations")

    coeffs = sideband_coefficients(abs(a), cmath.phase(a) if a != 0 else params.theta,
                                   params, delta1_eff)
    residual = abs(-gamma * a + 1j * gb * (a * coeffs.f1 + coeffs.f2 + a * a * coeffs.f3))
    if residual > 1e-9 * max(abs(a), 1e-300):
        raise NumericalError(
            f"fixed-point residual {residual:g} too large for |A_b|={abs(a):g}"
        )
    return (a, coeffs) if full_output else a


def detuned_bright_amplitude(params: SystemParams, delta_p: float, simple: bool = False):
    """Bright amplitude when the drive sits delta_p away from the mean eigenfrequency.

    The full version solves the fixed point with Gamma_b = gamma_bar + i*delta_p;
    ``simple`` returns the large-detuning magnitude |g_b F2 / delta_p| evaluated
    at zero modulation index.
    """
    if delta_p == 0:
        raise DomainError("delta_p must be non-zero")
    if simple:
        coeffs = sideband_coefficients(0.0, 0.0, params)
        return abs(params.g_bright * coeffs.f2 / delta_p)
    gamma = params.gamma_bar + 1j * delta_p
    return steady_bright_amplitude(params, gamma_b=gamma)


def dark_excitation_estimate(ab: complex, mu: complex, gamma_d: complex) -> complex:
    """Coherent dark amplitude driven through the beam-splitter coupling, (mu/Gamma_d) A_b."""
    if gamma_d == 0:
        raise DomainError("gamma_d must be non-zero")
    return (mu / gamma_d) * ab


def lorentzian_spectrum(omega, omega_peak: float, gamma: float, occupancy: float):
    """Symmetrized thermal noise spectrum gamma*(n+1/2)/((|omega|-peak)^2+gamma^2)."""
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    omega = np.asarray(omega, dtype=float)
    out = gamma * (occupancy + 0.5) / ((np.abs(omega) - omega_peak) ** 2 + gamma**2)
    return float(out) if out.ndim == 0 else out


def predicted_shift(omega_b: float, beta_nl: float, amp: float) -> float:
    """Amplitude-dependent oscillation frequency omega_b (1 + beta_nl |A|^2)."""
    x = beta_nl * amp * amp
    if x >= 0.1:
        warnings.warn(
            f"beta_nl*|A|^2 = {x:g} is outside the first-order expansion's validity",
            stacklevel=2,
        )
    return omega_b * (1.0 + x)
