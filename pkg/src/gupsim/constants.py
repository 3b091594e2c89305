"""Fixed physical constants (CODATA 2018). Not user-settable."""

from dataclasses import dataclass


@dataclass(frozen=True)
class PhysicalConstants:
    """SI values used for unit conversions.

    Attributes
    ----------
    hbar : float
        Reduced Planck constant [J s].
    k_boltzmann : float
        Boltzmann constant [J/K].
    c_light : float
        Speed of light in vacuum [m/s].
    planck_mass : float
        Planck mass [kg].
    """

    hbar: float = 1.054571817e-34
    k_boltzmann: float = 1.380649e-23
    c_light: float = 2.99792458e8
    planck_mass: float = 2.176434e-8

    def __post_init__(self):
        for name in ("hbar", "k_boltzmann", "c_light", "planck_mass"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


CODATA = PhysicalConstants()
