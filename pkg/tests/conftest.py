import math

import numpy as np
import pytest

from gupsim import SystemParams


@pytest.fixture
def desk_params():
    """Small, fast two-resonator operating point used across tests."""
    return SystemParams(
        gamma1=1e-3, gamma2=1e-3, g1=2e-4, g2=2e-4,
        kappa=4.190476190476191, kappa_in=2.0952380952380953, delta1=1.2857,
        delta2=1.0, drive_h=220.0, drive_c=600.0, nbar1=40.0, nbar2=40.0,
    )


def simulate_ou_exact(n, dt, gamma, nu0, occupancy, rng):
    """Exact discretization of the complex OU process

        dy = -(gamma + i nu0) y dt + sqrt(2 gamma) dW,   <dW* dW> = (occ + 1/2) dt

    used as an independent oracle for the spectral estimators.  The update
    uses the exact propagator and the exact stationary increment variance,
    so no integrator error enters.
    """
    lam = gamma + 1j * nu0
    prop = np.exp(-lam * dt)
    var_stat = occupancy + 0.5
    var_step = var_stat * (1.0 - abs(prop) ** 2)
    y = np.empty(n, dtype=complex)
    z = rng.standard_normal((n, 2))
    y0 = math.sqrt(var_stat / 2.0) * (z[0, 0] + 1j * z[0, 1])
    y[0] = y0
    s = math.sqrt(var_step / 2.0)
    for k in range(1, n):
        y[k] = prop * y[k - 1] + s * (z[k, 0] + 1j * z[k, 1])
    return y


def lorentzian_fit(freqs, psd, center_guess, hwhm_guess):
    """Two-pass Lorentzian fit used by tests to extract peak/width.

    Periodogram noise is multiplicative (chi^2), so the second pass weights
    residuals by the first-pass model values; weighting by the noisy data
    itself would bias the fit low, an unweighted fit would be pulled by
    peak-region noise.
    """
    from scipy.optimize import curve_fit

    def model(w, height, center, hwhm):
        return height * hwhm**2 / ((w - center) ** 2 + hwhm**2)

    p0 = (float(np.max(psd)), center_guess, hwhm_guess)
    popt, _ = curve_fit(model, freqs, psd, p0=p0, maxfev=20000)
    weights = np.maximum(model(freqs, *popt), 1e-3 * np.max(psd))
    popt, _ = curve_fit(model, freqs, psd, p0=popt, sigma=weights, maxfev=20000)
    height, center, hwhm = popt
    return height, center, abs(hwhm)
