"""System parameters, SI conversions and closed-form scaling relations.

All internal quantities are dimensionless ratios to the mean mechanical
frequency (the unit system fixes (omega_b1 + omega_b2)/2 = 1).  Frequencies
quoted in Hz are converted by direct ratio to the mean mechanical frequency
in Hz; drive amplitudes derived from laser power are rates and are divided
by the angular mean frequency 2*pi*omega_b_si.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace

from .constants import CODATA, PhysicalConstants
from .errors import ConfigError, DomainError

__all__ = [
    "SystemParams",
    "SiContext",
    "to_dimensionless",
    "drive_amplitude_from_power",
    "drive_dimensionless",
    "thermal_occupancy",
    "beta_nl_from_beta0",
    "beta0_from_beta_nl",
    "resolution_limit",
    "load_config",
    "dump_config",
    "params_from_config",
]

# Soft-validation thresholds; exceeding them warns but does not raise, so
# stress tests may leave the weak-coupling / small-nonlinearity regime.
_BETA_NL_SOFT_MAX = 1e-3
_WEAK_COUPLING_SOFT_MAX = 1e-2


@dataclass(frozen=True)
class SystemParams:
    """Dimensionless parameters of the two-resonator cavity model.

    Frequencies and rates are in units of the mean mechanical frequency;
    the constructor enforces (omega_b1 + omega_b2)/2 == 1.
    """

    omega_b1: float = 1.0
    omega_b2: float = 1.0
    gamma1: float = 1e-7
    gamma2: float = 1e-7
    g1: float = 0.0
    g2: float = 0.0
    kappa: float = 4.190476190476191
    kappa_in: float = 2.0952380952380953
    delta1: float = 1.2857
    delta2: float = 1.0
    drive_h: float = 0.0
    drive_c: float = 0.0
    nbar1: float = 0.0
    nbar2: float = 0.0
    beta_nl: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise DomainError("mechanical decay rates must be positive")
        if not (self.kappa >= self.kappa_in > 0):
            raise DomainError("require kappa >= kappa_in > 0")
        if self.g1 < 0 or self.g2 < 0:
            raise DomainError("couplings must be non-negative")
        if self.nbar1 < 0 or self.nbar2 < 0:
            raise DomainError("thermal occupancies must be non-negative")
        if self.beta_nl < 0:
            raise DomainError("beta_nl must be non-negative")
        mean = 0.5 * (self.omega_b1 + self.omega_b2)
        if abs(mean - 1.0) > 1e-12:
            raise DomainError(
                f"(omega_b1 + omega_b2)/2 must equal 1 (got {mean!r}); "
                "frequencies are expressed in units of their mean"
            )
        if self.beta_nl >= _BETA_NL_SOFT_MAX:
            warnings.warn(
                f"beta_nl={self.beta_nl:g} is outside the perturbative regime "
                f"(soft bound {_BETA_NL_SOFT_MAX:g})",
                stacklevel=2,
            )
        if self.kappa > 0 and max(self.g1, self.g2) / self.kappa > _WEAK_COUPLING_SOFT_MAX:
            warnings.warn(
                "single-photon coupling is not weak relative to the cavity "
                f"linewidth (g/kappa > {_WEAK_COUPLING_SOFT_MAX:g})",
                stacklevel=2,
            )

    @property
    def delta(self) -> float:
        """Half the mechanical frequency difference |omega_b1 - omega_b2|/2."""
        return 0.5 * abs(self.omega_b1 - self.omega_b2)

    @property
    def omega_bar(self) -> float:
        return 0.5 * (self.omega_b1 + self.omega_b2)

    @property
    def gamma_bar(self) -> float:
        return 0.5 * (self.gamma1 + self.gamma2)

    @property
    def g_bright(self) -> float:
        """Effective coupling of the bright superposition, sqrt(g1^2 + g2^2)."""
        return math.hypot(self.g1, self.g2)

    @classmethod
    def detuned_pair(cls, delta: float, **kwargs) -> "SystemParams":
        """Build a pair with omega_b1 = 1 - delta, omega_b2 = 1 + delta."""
        if delta < 0:
            raise DomainError("delta must be non-negative")
        return cls(omega_b1=1.0 - delta, omega_b2=1.0 + delta, **kwargs)

    def replace(self, **kwargs) -> "SystemParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class SiContext:
    """SI-side quantities needed to translate to/from the dimensionless system.

    ``omega_b_si`` is the ordinary (cycles/s) mean mechanical frequency; the
    mass is needed only for the beta0 <-> beta_nl conversion.
    """

    omega_b_si: float
    laser_wavelength: float = 1.064e-6
    temperature: float = 0.0
    mass: float | None = None
    constants: PhysicalConstants = field(default=CODATA)

    def __post_init__(self):
        if self.omega_b_si <= 0:
            raise DomainError("omega_b_si must be positive")
        if self.laser_wavelength <= 0:
            raise DomainError("laser_wavelength must be positive")
        if self.temperature < 0:
            raise DomainError("temperature must be non-negative")
        if self.mass is not None and self.mass <= 0:
            raise DomainError("mass must be positive when given")

    @property
    def omega_b_angular(self) -> float:
        return 2.0 * math.pi * self.omega_b_si

    @property
    def laser_omega_angular(self) -> float:
        return 2.0 * math.pi * self.constants.c_light / self.laser_wavelength


def to_dimensionless(si_value: float, reference: float) -> float:
    """Ratio of a quoted frequency to the reference frequency (same units)."""
    if reference <= 0:
        raise DomainError("reference frequency must be positive")
    return si_value / reference


def drive_amplitude_from_power(
    power: float, kappa_in: float, laser_angular_freq: float, constants: PhysicalConstants = CODATA
) -> float:
    """Drive amplitude E = sqrt(2 * kappa_in * P / (hbar * omega_laser)) in 1/s.

    ``kappa_in`` and ``laser_angular_freq`` are angular rates [rad/s].
    """
    if power < 0:
        raise DomainError("laser power must be non-negative")
    if kappa_in <= 0 or laser_angular_freq <= 0:
        raise DomainError("kappa_in and laser frequency must be positive")
    return math.sqrt(2.0 * kappa_in * power / (constants.hbar * laser_angular_freq))


def drive_dimensionless(power: float, kappa_in_hz: float, si: SiContext) -> float:
    """Dimensionless drive amplitude for a given laser power in watts."""
    e_si = drive_amplitude_from_power(
        power, 2.0 * math.pi * kappa_in_hz, si.laser_omega_angular, si.constants
    )
    return e_si / si.omega_b_angular


def thermal_occupancy(
    omega_si: float, temperature: float, constants: PhysicalConstants = CODATA
) -> float:
    """Mean thermal phonon number 1/(exp(hbar*omega/kT) - 1); 0 at T = 0."""
    if omega_si <= 0:
        raise DomainError("omega must be positive")
    if temperature < 0:
        raise DomainError("temperature must be non-negative")
    if temperature == 0.0:
        return 0.0
    x = constants.hbar * omega_si / (constants.k_boltzmann * temperature)
    return 1.0 / math.expm1(x)


def beta_nl_from_beta0(
    beta0: float, mass: float, omega_b_si: float, constants: PhysicalConstants = CODATA
) -> float:
    """Oscillator-referenced nonlinearity beta_nl = beta0 * hbar*m*omega_b / (m_p^2 c^2).

    ``omega_b_si`` is angular [rad/s].
    """
    if beta0 < 0 or mass < 0 or omega_b_si < 0:
        raise DomainError("arguments must be non-negative")
    scale = constants.hbar * mass * omega_b_si / (constants.planck_mass**2 * constants.c_light**2)
    return beta0 * scale


def beta0_from_beta_nl(
    beta_nl: float, mass: float, omega_b_si: float, constants: PhysicalConstants = CODATA
) -> float:
    """Inverse of :func:`beta_nl_from_beta0`."""
    if beta_nl < 0:
        raise DomainError("beta_nl must be non-negative")
    if mass <= 0 or omega_b_si <= 0:
        raise DomainError("mass and omega_b must be positive for the inverse conversion")
    scale = constants.hbar * mass * omega_b_si / (constants.planck_mass**2 * constants.c_light**2)
    return beta_nl / scale


def resolution_limit(k_decay: float, amp_limit: float, q_factor: float) -> float:
    """Smallest resolvable nonlinearity k / (|A|^2 * Q) for transient readout."""
    if k_decay <= 0:
        raise DomainError("k_decay must be positive")
    if amp_limit <= 0 or q_factor <= 0:
        raise DomainError("amplitude and quality factor must be positive")
    return k_decay / (amp_limit**2 * q_factor)


# --- flat key/value configuration files -------------------------------------

_DIMENSIONLESS_KEYS = {f.name for f in fields(SystemParams)}
_SI_KEYS = {
    "si_omega_b_hz",
    "si_delta_hz",
    "si_q1",
    "si_q2",
    "si_g_hz",
    "si_g1_hz",
    "si_g2_hz",
    "si_kappa_hz",
    "si_kappa_in_hz",
    "si_delta2_hz",
    "si_power_h_w",
    "si_power_c_w",
    "si_wavelength_m",
    "si_temperature_k",
    "si_mass_kg",
    "si_beta0",
}
KNOWN_KEYS = _DIMENSIONLESS_KEYS | _SI_KEYS


def load_config(text_or_path) -> dict[str, float]:
    """Parse a flat ``key = value`` file (UTF-8, '#' comments) into a dict."""
    import os

    if isinstance(text_or_path, (str, os.PathLike)) and os.path.exists(str(text_or_path)):
        with open(text_or_path, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = str(text_or_path)
    out: dict[str, float] = {}
    lines = text.splitlines()
    if not any(line.split("#", 1)[0].strip() for line in lines):
        raise ConfigError("configuration is empty")
    for i, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {i}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        try:
            out[key] = float(val.strip())
        except ValueError as exc:
            raise ConfigError(f"line {i}: cannot parse value for {key!r}: {val.strip()!r}") from exc
    return out


def _suggest(key: str) -> str:
    import difflib

    close = difflib.get_close_matches(key, sorted(KNOWN_KEYS), n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def params_from_config(cfg: dict[str, float]) -> tuple[SystemParams, SiContext | None]:
    """Resolve a flat configuration dict into dimensionless system parameters.

    SI keys are translated first; any dimensionless key present overrides the
    SI-derived value and emits a warning.  Unknown keys raise ConfigError with
    a spelling suggestion.
    """
    for key in cfg:
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown configuration key {key!r}{_suggest(key)}")

    si_ctx: SiContext | None = None
    values: dict[str, float] = {}
    si_present = [k for k in cfg if k in _SI_KEYS]
    if si_present:
        if "si_omega_b_hz" not in cfg:
            raise ConfigError("SI keys require si_omega_b_hz (mean mechanical frequency in Hz)")
        om_hz = cfg["si_omega_b_hz"]
        si_ctx = SiContext(
            omega_b_si=om_hz,
            laser_wavelength=cfg.get("si_wavelength_m", 1.064e-6),
            temperature=cfg.get("si_temperature_k", 0.0),
            mass=cfg.get("si_mass_kg"),
        )
        d_ratio = cfg.get("si_delta_hz", 0.0) / om_hz
        values["omega_b1"] = 1.0 - d_ratio
        values["omega_b2"] = 1.0 + d_ratio
        if "si_q1" in cfg:
            values["gamma1"] = values["omega_b1"] / cfg["si_q1"]
        if "si_q2" in cfg:
            values["gamma2"] = values["omega_b2"] / cfg["si_q2"]
        if "si_g_hz" in cfg:
            values["g1"] = values["g2"] = cfg["si_g_hz"] / om_hz
        if "si_g1_hz" in cfg:
            values["g1"] = cfg["si_g1_hz"] / om_hz
        if "si_g2_hz" in cfg:
            values["g2"] = cfg["si_g2_hz"] / om_hz
        if "si_kappa_hz" in cfg:
            values["kappa"] = cfg["si_kappa_hz"] / om_hz
        if "si_kappa_in_hz" in cfg:
            values["kappa_in"] = cfg["si_kappa_in_hz"] / om_hz
        if "si_delta2_hz" in cfg:
            values["delta2"] = cfg["si_delta2_hz"] / om_hz
        kappa_in_hz = cfg.get("si_kappa_in_hz", cfg.get("si_kappa_hz", 0.0) / 2.0)
        for pkey, field_name in (("si_power_h_w", "drive_h"), ("si_power_c_w", "drive_c")):
            if pkey in cfg:
                if kappa_in_hz <= 0:
                    raise ConfigError(f"{pkey} requires si_kappa_in_hz (or si_kappa_hz)")
                values[field_name] = drive_dimensionless(cfg[pkey], kappa_in_hz, si_ctx)
        if "si_temperature_k" in cfg:
            for j, okey in ((1, "omega_b1"), (2, "omega_b2")):
                values[f"nbar{j}"] = thermal_occupancy(
                    si_ctx.omega_b_angular * values[okey], si_ctx.temperature
                )
        if "si_beta0" in cfg:
            if si_ctx.mass is None:
                raise ConfigError("si_beta0 requires si_mass_kg")
            values["beta_nl"] = beta_nl_from_beta0(
                cfg["si_beta0"], si_ctx.mass, si_ctx.omega_b_angular
            )

    for key in cfg:
        if key in _DIMENSIONLESS_KEYS:
            if key in values and not math.isclose(values[key], cfg[key], rel_tol=1e-12):
                warnings.warn(
                    f"dimensionless key {key!r} overrides the SI-derived value "
                    f"{values[key]:g} with {cfg[key]:g}",
                    stacklevel=2,
                )
            values[key] = cfg[key]

    return SystemParams(**values), si_ctx


def dump_config(params: SystemParams) -> str:
    """Serialize dimensionless parameters as a flat key = value block."""
    lines = [f"{f.name} = {getattr(params, f.name)!r}" for f in fields(SystemParams)]
    return "\n".join(lines) + "\n"
