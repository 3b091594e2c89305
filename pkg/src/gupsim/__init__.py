"""Dark-mode optomechanics simulator and estimation toolkit.

Simulates the stochastic dynamics of two mechanical resonators coupled to a
driven cavity, demodulates bright/dark supermodes, estimates dark-mode noise
spectra, and extracts the motion-induced nonlinearity from the peak-shift
versus amplitude-squared regression.
"""

__version__ = "0.1.0"

from .analytic import (
    SidebandCoefficients,
    SupermodeParams,
    bessel_j,
    cavity_closed_form,
    dark_excitation_estimate,
    detuned_bright_amplitude,
    lorentzian_spectrum,
    predicted_shift,
    sideband_coefficients,
    steady_bright_amplitude,
    supermode_rates,
)
from .constants import CODATA, PhysicalConstants
from .errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    FitError,
    NumericalError,
    ProtocolError,
)
from .modes import (
    SlowAmplitudeSeries,
    demodulate,
    estimate_static_offset,
    inverse_supermode_transform,
    slow_amplitudes,
    supermode_transform,
    time_avg_amplitude,
)
from .params import (
    SiContext,
    SystemParams,
    beta0_from_beta_nl,
    beta_nl_from_beta0,
    drive_amplitude_from_power,
    resolution_limit,
    thermal_occupancy,
    to_dimensionless,
)
from .sde import (
    IntegratorConfig,
    NoiseSettings,
    StabilityReport,
    Trajectory,
    assess_stability,
    gen_complex_white_noise,
    simulate,
    simulate_batch,
    simulate_single_oscillator,
    step_full_system,
    step_single_oscillator,
)
from .spectra import (
    PeakEstimate,
    Spectrum,
    WelchConfig,
    autocorr_spectrum,
    find_peak,
    normalize_peak,
    welch_spectrum,
)
from .pipeline import (
    FitResult,
    ProtocolConfig,
    ScatterSet,
    linear_fit,
    resolution_sweep,
    run_protocol,
)
