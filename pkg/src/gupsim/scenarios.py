"""Named scenario presets and the config-driven scenario runner.

Desk-scale presets reproduce every qualitative feature of the measurement
scheme at quality factors (1e3-1e4) that integrate in minutes; full-scale
presets carry the published operating point (Q = 1e7) and are provided as
long-running benchmarks only.  Desk parameter substitutions are explicit in
the preset tables below, never silent rescalings.

The desk protocol presets place the drive-difference frequency about 100
mechanical linewidths below the mean eigenfrequency.  Operating the pump
exactly on resonance leaves the dark-mode fluctuation shift in the
degenerate-parametric regime (the conjugate-amplitude coupling pulls the
noise peak by up to sqrt(3)/2) and lets the bright mode detune itself
through its own amplitude-dependent frequency; both effects disappear in
linear response a safe offset away, where the peak-shift slope cleanly
inverts to the preset nonlinearity.
"""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .analytic import supermode_rates
from .errors import ConfigError, DivergenceError
from .modes import slow_amplitudes, time_avg_amplitude
from .params import KNOWN_KEYS, SystemParams, params_from_config
from .pipeline import (
    ProtocolConfig,
    fit_to_csv,
    resolution_sweep,
    run_protocol,
    scatter_to_csv,
)
from .sde import (
    IntegratorConfig,
    NoiseSettings,
    dt_bound,
    simulate,
    simulate_batch,
    strobe_stride,
)
from .spectra import normalize_peak, spectrum_to_csv

SCENARIOS = (
    "fig2_amplitude",
    "fig3_spectrum",
    "fig4_resolution",
    "fig5_mismatch",
    "fig6_peak_vs_beta",
    "custom",
)
SCALES = ("paper", "desk")

# Shared desk-scale cavity flavor (dimensionless, unit mean mechanical frequency).
_DESK_CAVITY = dict(kappa=4.190476190476191, kappa_in=2.0952380952380953, delta1=1.2857)

# Published operating point: 525 kHz resonators, Q=1e7, kappa=2.2 MHz,
# g=1 Hz, drives from laser powers at 1064 nm; nbar ~= 40.
PAPER_BASE = SystemParams(
    gamma1=1e-7,
    gamma2=1e-7,
    g1=1.9047619047619048e-6,
    g2=1.9047619047619048e-6,
    delta2=1.0,
    drive_h=494.93230423713385,   # 0.036 uW
    drive_c=26085.22281641247,    # 100 uW
    nbar1=40.0,
    nbar2=40.0,
    **_DESK_CAVITY,
)

# Mismatched variant: 1 Hz half-difference, pump offset 480 Hz, both 100 uW.
PAPER_MISMATCH = PAPER_BASE.replace(
    omega_b1=1.0 - 1.9047619047619048e-6,
    omega_b2=1.0 + 1.9047619047619048e-6,
    delta2=1.0009142857142857,
    drive_h=26085.22281641247,
)


def desk_fig2_params() -> SystemParams:
    """Resonant operating point for amplitude evolution and saturation."""
    return SystemParams(
        gamma1=1e-3, gamma2=1e-3, g1=2e-4, g2=2e-4, delta2=1.0,
        drive_h=220.0, drive_c=600.0, nbar1=40.0, nbar2=40.0, **_DESK_CAVITY,
    )


def desk_fig2_drive_grid() -> np.ndarray:
    return np.linspace(60.0, 1400.0, 10)


def desk_fig3_params(beta_nl: float = 1.5e-10) -> SystemParams:
    """Detuned protocol operating point, Q = 1e4."""
    gamma = 1e-4
    return SystemParams(
        gamma1=gamma, gamma2=gamma, g1=2e-4, g2=2e-4,
        delta2=1.0 - 100.0 * gamma,
        drive_h=400.0, drive_c=3000.0, nbar1=40.0, nbar2=40.0,
        beta_nl=beta_nl, **_DESK_CAVITY,
    )


def desk_fig3_drive_grid(n: int = 8) -> np.ndarray:
    return np.linspace(0.35, 1.0, n) * 400.0


def desk_fig4_params(beta_nl: float = 2.5e-9) -> SystemParams:
    """Faster sweep point for resolution-limit scans, Q = 1e3."""
    gamma = 1e-3
    return SystemParams(
        gamma1=gamma, gamma2=gamma, g1=2e-4, g2=2e-4,
        delta2=1.0 - 50.0 * gamma,
        drive_h=2000.0, drive_c=3000.0, nbar1=40.0, nbar2=40.0,
        beta_nl=beta_nl, **_DESK_CAVITY,
    )


def desk_fig4_drive_grid(n: int = 8) -> np.ndarray:
    return np.linspace(0.35, 1.0, n) * 2000.0


def desk_fig4_beta_grid() -> np.ndarray:
    return np.logspace(-11.0, -8.6, 7)


def desk_fig5_params(delta_ratio: float = 0.002) -> SystemParams:
    """Mismatched resonators: drive 50 linewidths above the eigenfrequency."""
    gamma = 1e-4
    delta_p = 50.0 * gamma
    delta = delta_ratio * delta_p
    return SystemParams(
        omega_b1=1.0 - delta, omega_b2=1.0 + delta,
        gamma1=gamma, gamma2=gamma, g1=1e-4, g2=1e-4,
        delta2=1.0 + delta_p,
        drive_h=3000.0, drive_c=3000.0, nbar1=1.0, nbar2=1.0, **_DESK_CAVITY,
    )


@dataclass(frozen=True)
class ScenarioConfig:
    """A named scenario at one scale with overrides and provenance."""

    scenario: str
    scale: str = "desk"
    overrides: dict = field(default_factory=dict)
    master_seed: int = 2024
    output_dir: str = "."
    workers: int = 1
    allow_long: bool = False
    config_params: SystemParams | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; use one of {SCENARIOS}")
        if self.scale not in SCALES:
            raise ConfigError(f"unknown scale {self.scale!r}; use one of {SCALES}")
        for key in self.overrides:
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown override key {key!r}")


def _apply_overrides(params: SystemParams, overrides: dict) -> SystemParams:
    if not overrides:
        return params
    merged = {k: getattr(params, k) for k in SystemParams.__dataclass_fields__}
    cfg = dict(merged)
    cfg.update(overrides)
    out, _ = params_from_config(cfg)
    return out


def _write_manifest(path, entries: dict, outputs: list[str], wall: float) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in entries.items():
            fh.write(f"{key} = {val}\n")
        for name in outputs:
            fh.write(f"output = {name}\n")
        fh.write(f"generated = {time.strftime('%Y-%m-%dT%H:%M:%S')} wall_s={wall:.1f}\n")


def _params_hash(params: SystemParams) -> str:
    from .params import dump_config

    return hashlib.sha256(dump_config(params).encode()).hexdigest()[:16]


def _protocol_cfg_for(params: SystemParams, master_seed: int, **kw) -> ProtocolConfig:
    defaults = dict(
        record_gamma_t=20.0, discard_gamma_t=3.0, seeds_per_point=3,
        master_seed=master_seed, search_halfwidth=70.0,
    )
    defaults.update(kw)
    return ProtocolConfig(**defaults)


def _csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")


def _run_fig2(cfg: ScenarioConfig, params: SystemParams, out: str) -> list[str]:
    gamma = params.gamma_bar
    integ = IntegratorConfig(
        dt=0.99 * dt_bound(params),
        t_total=23.0 / gamma,
        t_discard=3.0 / gamma,
        record_stride=None,
        record_cavity=False,
    )
    # replace default stride with a strobe near 4 drive periods to keep files small
    integ = replace(integ, record_stride=strobe_stride(integ.dt, params.delta2, 26.0))
    noise = NoiseSettings(seed=cfg.master_seed)
    traj = simulate(params, integ, noise, run_index=0)
    slow = slow_amplitudes(traj, estimate_offsets=False)
    outputs = []
    path = os.path.join(out, "amplitudes_vs_time.csv")
    _csv(
        path,
        "t [1/omega_bar],abs_bright,abs_dark",
        zip(slow.times.tolist(), np.abs(slow.ab).tolist(), np.abs(slow.ad).tolist()),
    )
    outputs.append(path)

    grid = desk_fig2_drive_grid() if cfg.scale == "desk" else np.linspace(0.1, 1.0, 10) * params.drive_h
    runs = [params.replace(drive_h=float(e)) for e in grid]
    trajs = simulate_batch(runs, integ, noise, run_indices=list(range(1, len(runs) + 1)))
    rows = []
    for p, tr in zip(runs, trajs):
        s = slow_amplitudes(tr, estimate_offsets=False)
        rows.append((p.drive_h, time_avg_amplitude(s.times, s.ab), time_avg_amplitude(s.times, s.ad)))
    path = os.path.join(out, "avg_amplitude_vs_drive.csv")
    _csv(path, "drive_h [omega_bar],avg_abs_bright,avg_abs_dark", rows)
    outputs.append(path)
    return outputs


def _run_fig3(cfg: ScenarioConfig, params: SystemParams, out: str) -> list[str]:
    grid = np.linspace(0.35, 1.0, 8) * params.drive_h
    pcfg = _protocol_cfg_for(params, cfg.master_seed, keep_spectra=True)
    scatter, fit, spectra = run_protocol(params, grid, pcfg)
    outputs = []
    for i, spec in enumerate(spectra):
        path = os.path.join(out, f"dark_spectrum_{i:02d}.csv")
        spectrum_to_csv(path, normalize_peak(spec))
        outputs.append(path)
    spath = os.path.join(out, "scatter.csv")
    scatter_to_csv(spath, scatter)
    fpath = os.path.join(out, "fit.csv")
    fit_to_csv(fpath, fit)
    outputs += [spath, fpath]
    return outputs


def _run_fig4(cfg: ScenarioConfig, params: SystemParams, out: str) -> list[str]:
    betas = desk_fig4_beta_grid()
    grid = desk_fig4_drive_grid()
    pcfg = _protocol_cfg_for(params, cfg.master_seed)
    sweep = resolution_sweep(params, betas, grid, threshold=0.1, cfg=pcfg, workers=cfg.workers)
    rows = []
    for b, r2, fit in zip(sweep.betas, sweep.r_squared, sweep.fits):
        rows.append((b, r2, fit.beta_nl_est, fit.ci95[0], fit.ci95[1]))
    path = os.path.join(out, "r2_vs_beta.csv")
    _csv(path, "beta_nl,r2,beta_nl_est,ci_low,ci_high", rows)
    lim = os.path.join(out, "resolution_limit.csv")
    _csv(lim, "beta_nl_lim,crossed,boundary", [(sweep.beta_lim, int(sweep.crossed), sweep.boundary or "none")])
    return [path, lim]


def _run_fig5(cfg: ScenarioConfig, params: SystemParams, out: str) -> list[str]:
    from .analytic import dark_excitation_estimate
    from .spectra import WelchConfig, welch_spectrum

    outputs = []
    rows = []
    for i, ratio in enumerate((0.002, 0.02)):
        p = _apply_overrides(desk_fig5_params(ratio), cfg.overrides) if cfg.scale == "desk" else params
        gamma = p.gamma_bar
        integ = IntegratorConfig(
            dt=0.99 * dt_bound(p), t_total=23.0 / gamma, t_discard=3.0 / gamma,
            record_stride=strobe_stride(0.99 * dt_bound(p), p.delta2, 40.0),
            record_cavity=False,
        )
        traj = simulate(p, integ, NoiseSettings(seed=cfg.master_seed), run_index=i)
        slow = slow_amplitudes(traj, estimate_offsets=False)
        ab_mean = time_avg_amplitude(slow.times, slow.ab)
        ad_mean = time_avg_amplitude(slow.times, slow.ad)
        rates = supermode_rates(p)
        predicted = abs(dark_excitation_estimate(1.0 + 0j, rates.mu, rates.gamma_d))
        rec_dt = slow.times[1] - slow.times[0]
        wcfg = WelchConfig(segment_length=5.0, overlap=2.0, gamma=gamma)
        spec = welch_spectrum(slow.ad, rec_dt, wcfg, carrier_freq=p.delta2)
        spath = os.path.join(out, f"mismatch_spectrum_ratio{ratio:g}.csv")
        spectrum_to_csv(spath, normalize_peak(spec))
        outputs.append(spath)
        rows.append((ratio, p.delta, abs(rates.delta_p), ad_mean / ab_mean, predicted))
    path = os.path.join(out, "mismatch_summary.csv")
    _csv(path, "delta_over_deltap,delta,abs_delta_p,measured_ratio,predicted_ratio", rows)
    outputs.append(path)
    return outputs


def _run_fig6(cfg: ScenarioConfig, params: SystemParams, out: str) -> list[str]:
    grid = [params.drive_h * f for f in (0.7, 0.85, 1.0)]
    rows = []
    for i, beta in enumerate((1e-10, 1e-9, 1e-8)):
        p = params.replace(beta_nl=beta)
        pcfg = _protocol_cfg_for(params, cfg.master_seed, seeds_per_point=1,
                                 run_index_offset=100 * i)
        scatter, fit = run_protocol(p, grid, pcfg)
        rows.append((beta, float(np.mean(scatter.omega_peak)), fit.beta_nl_est))
    path = os.path.join(out, "peak_vs_beta.csv")
    _csv(path, "beta_nl,mean_omega_peak,beta_nl_est", rows)
    return [path]


_RUNNERS = {
    "fig2_amplitude": _run_fig2,
    "fig3_spectrum": _run_fig3,
    "fig4_resolution": _run_fig4,
    "fig5_mismatch": _run_fig5,
    "fig6_peak_vs_beta": _run_fig6,
}

_DESK_PARAMS = {
    "fig2_amplitude": desk_fig2_params,
    "fig3_spectrum": desk_fig3_params,
    "fig4_resolution": desk_fig4_params,
    "fig5_mismatch": desk_fig5_params,
    "fig6_peak_vs_beta": desk_fig4_params,
}


def scenario_params(cfg: ScenarioConfig) -> SystemParams:
    if cfg.scenario == "custom":
        if cfg.config_params is None:
            raise ConfigError("custom scenario requires a configuration file")
        base = cfg.config_params
    elif cfg.scale == "desk":
        base = _DESK_PARAMS[cfg.scenario]()
    elif cfg.scenario in ("fig5_mismatch", "fig6_peak_vs_beta"):
        base = PAPER_MISMATCH
    else:
        base = PAPER_BASE
    return _apply_overrides(base, cfg.overrides)


def estimated_steps(params: SystemParams, record_gamma_t: float = 23.0) -> float:
    dt = dt_bound(params)
    return record_gamma_t / params.gamma_bar / dt


def run_scenario(cfg: ScenarioConfig) -> dict:
    """Execute a scenario and write CSV artifacts plus a manifest.

    Returns a manifest dict; writes ``manifest.txt`` where every line is a
    key = value pair (one volatile ``generated`` line carries timestamp and
    wall time).
    """
    params = scenario_params(cfg)
    if cfg.scale == "paper" and not cfg.allow_long:
        raise ConfigError(
            "full-scale runs need about "
            f"{estimated_steps(params):.2g} integration steps per trajectory; "
            "pass allow_long/--allow-long to start one anyway"
        )
    os.makedirs(cfg.output_dir, exist_ok=True)
    runner = _RUNNERS.get(cfg.scenario, _run_fig3)
    start = time.time()
    status = "complete"
    failures = 0
    try:
        outputs = runner(cfg, params, cfg.output_dir)
    except DivergenceError as exc:
        outputs = []
        status = f"failed: {exc}"
        failures = 1
    wall = time.time() - start
    entries = {
        "scenario": cfg.scenario,
        "scale": cfg.scale,
        "master_seed": cfg.master_seed,
        "params_hash": _params_hash(params),
        "version": __version__,
        "status": status,
        "failures": failures,
    }
    manifest_path = os.path.join(cfg.output_dir, "manifest.txt")
    _write_manifest(manifest_path, entries, [os.path.basename(o) for o in outputs], wall)
    entries["outputs"] = outputs
    entries["manifest"] = manifest_path
    return entries
