"""Measurement protocol: power sweep -> dark-mode peak tracking -> regression.

Each drive power is simulated to steady state; the bright slow amplitude is
time-averaged and the dark-mode noise spectrum is Welch-estimated; the peak
positions against |A_b|^2 are fit with a weighted straight line whose slope
divided by the mean mechanical frequency estimates the nonlinearity
beta_nl.  A sweep of preset beta_nl values maps out the R^2 threshold that
defines the resolution limit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import t as student_t

from .errors import DivergenceError, DomainError, FitError, ProtocolError
from .modes import slow_amplitudes, time_avg_amplitude
from .params import SystemParams
from .sde import IntegratorConfig, NoiseSettings, dt_bound, simulate_batch, strobe_stride
from .spectra import WelchConfig, find_peak, welch_spectrum

__all__ = [
    "ScatterSet",
    "FitResult",
    "ProtocolConfig",
    "SweepResult",
    "linear_fit",
    "run_protocol",
    "resolution_sweep",
    "scatter_to_csv",
    "fit_to_csv",
]


@dataclass
class ScatterSet:
    """(|A_b|^2, peak position) points with weights and run provenance."""

    amp_sq: np.ndarray
    omega_peak: np.ndarray
    sigma: np.ndarray
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        self.amp_sq = np.asarray(self.amp_sq, dtype=float)
        self.omega_peak = np.asarray(self.omega_peak, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if np.any(self.amp_sq < 0):
            raise DomainError("amp_sq must be non-negative")

    def __len__(self) -> int:
        return len(self.amp_sq)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    beta_nl_est: float
    r_squared: float
    ci95: tuple[float, float]
    dof: int
    slope_stderr: float
    n_points: int


def linear_fit(scatter: ScatterSet, omega_bar: float = 1.0) -> FitResult:
    """Weighted least-squares line through the scatter.

    Weights are 1/sigma^2 when all uncertainties are positive, else uniform.
    R^2 uses plain (unweighted) sums of squares about the mean of the
    observed peaks; the 95% interval comes from the slope standard error and
    the Student-t quantile at n-2 degrees of freedom.
    """
    n = len(scatter)
    if n < 3:
        raise FitError("need at least 3 scatter points")
    x = scatter.amp_sq
    y = scatter.omega_peak
    if np.all(scatter.sigma > 0):
        w = 1.0 / scatter.sigma**2
    else:
        w = np.ones(n)

    sw = float(np.sum(w))
    sx = float(np.sum(w * x))
    sy = float(np.sum(w * y))
    sxx = float(np.sum(w * x * x))
    sxy = float(np.sum(w * x * y))
    det = sw * sxx - sx * sx
    scale = sw * sxx + sx * sx
    if det <= 1e-14 * max(scale, 1e-300):
        raise FitError("degenerate abscissa: amplitude values do not spread")
    slope = (sw * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det

    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot <= 0.0:
        r2 = 1.0 if ss_res <= 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot

    dof = n - 2
    s2 = float(np.sum(w * resid**2)) / dof
    se_slope = math.sqrt(s2 * sw / det)
    tq = float(student_t.ppf(0.975, dof))
    beta = slope / omega_bar
    half = tq * se_slope / omega_bar
    return FitResult(
        slope=slope,
        intercept=intercept,
        beta_nl_est=beta,
        r_squared=r2,
        ci95=(beta - half, beta + half),
        dof=dof,
        slope_stderr=se_slope,
        n_points=n,
    )


@dataclass(frozen=True)
class ProtocolConfig:
    """Timing, estimator and search settings for one protocol execution."""

    record_gamma_t: float = 20.0
    discard_gamma_t: float = 3.0
    seeds_per_point: int = 1
    master_seed: int = 0
    run_index_offset: int = 0
    dt: float | None = None
    scheme: str = "heun_drift"
    welch_segment: float = 5.0
    welch_overlap: float = 2.0
    window: str = "blackman"
    peak_method: str = "parabolic"
    search_halfwidth: float = 60.0  # units of gamma_bar around the dark eigenfrequency
    exclusion_bins: int = 5  # carrier-line exclusion half-width, in bins
    keep_spectra: bool = False


def _integrator_for(params: SystemParams, cfg: ProtocolConfig) -> IntegratorConfig:
    gamma = params.gamma_bar
    t_discard = cfg.discard_gamma_t / gamma
    t_total = t_discard + cfg.record_gamma_t / gamma
    dt = cfg.dt if cfg.dt is not None else 0.999 * dt_bound(params, "full")
    band_max = abs(params.omega_bar - params.delta2) + (cfg.search_halfwidth + 20.0) * gamma
    band_max = max(band_max, 30.0 * gamma)
    max_rec_dt = 0.45 * math.pi / band_max
    stride = strobe_stride(dt, params.delta2, max_rec_dt)
    return IntegratorConfig(
        dt=dt,
        t_total=t_total,
        t_discard=t_discard,
        scheme=cfg.scheme,
        record_stride=stride,
        record_cavity=False,
    )


def _analyze_run(traj, params: SystemParams, cfg: ProtocolConfig):
    # offsets are skipped: protocol records are strobe-sampled, and the static
    # displacement folds to the excluded near-DC bins of the dark spectrum
    slow = slow_amplitudes(traj, estimate_offsets=False)
    amp = time_avg_amplitude(slow.times, slow.ab)
    rec_dt = slow.times[1] - slow.times[0]
    wcfg = WelchConfig(
        segment_length=cfg.welch_segment,
        overlap=cfg.welch_overlap,
        window=cfg.window,
        detrend="mean",
        gamma=params.gamma_bar,
    )
    spec = welch_spectrum(slow.ad, rec_dt, wcfg, carrier_freq=params.delta2)
    gamma = params.gamma_bar
    center = params.omega_bar
    band = (center - cfg.search_halfwidth * gamma, center + cfg.search_halfwidth * gamma)
    binw = spec.bin_width
    excl = (params.delta2 - cfg.exclusion_bins * binw, params.delta2 + cfg.exclusion_bins * binw)
    peak = find_peak(spec, band=band, method=cfg.peak_method, exclude=[excl])
    return amp, peak, spec


def run_protocol(
    params_base: SystemParams,
    power_grid,
    cfg: ProtocolConfig = ProtocolConfig(),
    drive_c: float | None = None,
):
    """Execute the power sweep and fit the peak-shift line.

    ``power_grid`` holds dimensionless pump amplitudes for the modulated
    tone (drive_h); ``drive_c`` optionally overrides the carrier amplitude.
    Returns (ScatterSet, FitResult); runs that leave the stable regime are
    excluded with a warning.
    """
    power_grid = list(power_grid)
    if len(power_grid) < 3:
        raise ProtocolError("need at least 3 drive values")
    base = params_base if drive_c is None else params_base.replace(drive_c=drive_c)
    runs = []
    for ip, eh in enumerate(power_grid):
        for s in range(cfg.seeds_per_point):
            runs.append((ip, s, base.replace(drive_h=float(eh))))
    integ = _integrator_for(base, cfg)
    noise = NoiseSettings(seed=cfg.master_seed)
    indices = [cfg.run_index_offset + i for i in range(len(runs))]
    params_list = [r[2] for r in runs]

    failures: list[int] = []
    try:
        trajs = simulate_batch(params_list, integ, noise, run_indices=indices)
    except DivergenceError:
        # isolate the unstable runs without losing the batch
        trajs = []
        for i, p in enumerate(params_list):
            try:
                trajs.append(simulate_batch([p], integ, noise, run_indices=[indices[i]])[0])
            except DivergenceError as exc:
                warnings.warn(
                    f"run {indices[i]} (drive {p.drive_h:g}) diverged and was excluded: {exc}",
                    stacklevel=2,
                )
                trajs.append(None)
                failures.append(i)

    amps, peaks, sigmas, prov, spectra = [], [], [], [], []
    for i, ((ip, s, p), traj) in enumerate(zip(runs, trajs)):
        if traj is None:
            continue
        amp, peak, spec = _analyze_run(traj, p, cfg)
        amps.append(amp * amp)
        peaks.append(peak.omega_peak)
        sigmas.append(peak.uncertainty)
        prov.append({"power": p.drive_h, "seed": s, "run_index": indices[i]})
        if cfg.keep_spectra:
            spectra.append(spec)

    if len(amps) < 3:
        raise ProtocolError(
            f"only {len(amps)} usable runs remain after exclusions; need at least 3"
        )
    scatter = ScatterSet(
        amp_sq=np.array(amps), omega_peak=np.array(peaks), sigma=np.array(sigmas),
        provenance=prov,
    )
    fit = linear_fit(scatter, omega_bar=base.omega_bar)
    if cfg.keep_spectra:
        return scatter, fit, spectra
    return scatter, fit


@dataclass
class SweepResult:
    beta_lim: float
    crossed: bool
    boundary: str | None
    betas: np.ndarray
    r_squared: np.ndarray
    fits: list[FitResult]


def _sweep_point(args):
    params, power_grid, sub_cfg = args
    _, fit = run_protocol(params, power_grid, sub_cfg)
    return fit


def resolution_sweep(
    params_base: SystemParams,
    beta_grid,
    power_grid,
    threshold: float = 0.1,
    cfg: ProtocolConfig = ProtocolConfig(),
    workers: int = 1,
) -> SweepResult:
    """R^2 against preset beta_nl; the resolution limit is the threshold crossing.

    Returns the smallest beta whose R^2 reaches ``threshold``, with
    log-linear interpolation between the bracketing grid points.  If the
    grid never (or always) clears the threshold the corresponding edge is
    returned with a boundary flag.  Grid points are independent; with
    ``workers > 1`` they run in separate processes and merge by index.
    """
    betas = np.asarray(sorted(beta_grid), dtype=float)
    if len(betas) < 2 or np.any(betas <= 0):
        raise ProtocolError("beta grid must hold at least two positive values")
    power_grid = list(power_grid)
    n_runs = len(power_grid) * cfg.seeds_per_point
    jobs = [
        (
            params_base.replace(beta_nl=float(b)),
            power_grid,
            replace(cfg, run_index_offset=cfg.run_index_offset + i * n_runs, keep_spectra=False),
        )
        for i, b in enumerate(betas)
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(_sweep_point, jobs))
    else:
        fits = [_sweep_point(job) for job in jobs]
    r2s = np.array([f.r_squared for f in fits])

    above = np.nonzero(r2s >= threshold)[0]
    if len(above) == 0:
        return SweepResult(float(betas[-1]), False, "not_reached", betas, r2s, fits)
    i = int(above[0])
    if i == 0:
        return SweepResult(float(betas[0]), True, "at_lower_edge", betas, r2s, fits)
    lb0, lb1 = math.log10(betas[i - 1]), math.log10(betas[i])
    r0, r1 = r2s[i - 1], r2s[i]
    frac = (threshold - r0) / (r1 - r0)
    return SweepResult(10.0 ** (lb0 + frac * (lb1 - lb0)), True, None, betas, r2s, fits)


def scatter_to_csv(path, scatter: ScatterSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("amp_sq [dimensionless],omega_peak [omega_bar],sigma_omega [omega_bar],power,seed\n")
        for i in range(len(scatter)):
            p = scatter.provenance[i] if i < len(scatter.provenance) else {}
            fh.write(
                f"{scatter.amp_sq[i]:.17g},{scatter.omega_peak[i]:.17g},"
                f"{scatter.sigma[i]:.17g},{p.get('power', float('nan')):.17g},"
                f"{p.get('seed', -1)}\n"
            )


def fit_to_csv(path, fit: FitResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("slope [omega_bar],beta_nl_est,r2,ci_low,ci_high,n_points\n")
        fh.write(
            f"{fit.slope:.17g},{fit.beta_nl_est:.17g},{fit.r_squared:.17g},"
            f"{fit.ci95[0]:.17g},{fit.ci95[1]:.17g},{fit.n_points}\n"
        )
