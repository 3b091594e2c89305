"""Stochastic integration of the semiclassical cavity/two-resonator dynamics.

The full model couples one cavity field a to two mechanical modes b1, b2:

    da/dt  = {i[-delta1 + sum_j g_j (b_j + b_j*)] - kappa} a
             + E_h exp(-i delta2 t) + E_c + sqrt(2 kappa) a_in
    db_j/dt = (-i omega_bj - gamma_j) b_j
             + i omega_bj (beta_nl/3) (b_j - b_j*)^3
             + i g_j |a|^2 + sqrt(2 gamma_j) b_in,j

with delta-correlated complex noises <a_in* a_in> = 1/2 and
<b_in,j* b_in,j> = (nbar_j + 1/2).  The single-oscillator reduction drops
the cavity and drive terms.  Trajectories are reproducible: every run and
channel draws from its own counter-based stream derived from
(master seed, run index, channel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DivergenceError, DomainError
from .params import SystemParams

__all__ = [
    "NoiseSettings",
    "IntegratorConfig",
    "Trajectory",
    "StabilityReport",
    "gen_complex_white_noise",
    "step_single_oscillator",
    "step_full_system",
    "simulate",
    "simulate_batch",
    "simulate_single_oscillator",
    "simulate_single_batch",
    "assess_stability",
]

CH_CAVITY, CH_B1, CH_B2, CH_INIT = 0, 1, 2, 3
_SCHEMES = {"euler_maruyama": kernels.EULER, "heun_drift": kernels.HEUN}
_DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class NoiseSettings:
    """Noise stream identity and per-channel occupancies.

    ``nbar1``/``nbar2`` default to the values carried by the system
    parameters; the cavity channel is always at vacuum (occupancy 1/2 in the
    increment variance).  Same seed and step count give a bit-identical
    stream.
    """

    seed: int = 0
    enabled: bool = True
    nbar1: float | None = None
    nbar2: float | None = None

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    def occupancy(self, index: int, params: SystemParams) -> float:
        own = self.nbar1 if index == 1 else self.nbar2
        return float(own if own is not None else getattr(params, f"nbar{index}"))


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size, duration, transient cut and recording policy.

    ``record_stride`` counts integration steps between retained samples;
    ``None`` keeps at least 16 samples per drive period.  The step must
    resolve the fastest rates: dt <= min(0.1/kappa, 0.05/max(omega_bj,
    delta2)).
    """

    dt: float
    t_total: float
    t_discard: float = 0.0
    scheme: str = "heun_drift"
    record_stride: int | None = None
    record_cavity: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if not self.t_discard < self.t_total:
            raise ConfigError("t_discard must be smaller than t_total")
        if self.scheme not in _SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; use one of {sorted(_SCHEMES)}")
        if self.record_stride is not None and self.record_stride < 1:
            raise ConfigError("record_stride must be a positive integer")

    def validate_for(self, params: SystemParams, system: str = "full") -> None:
        bound = dt_bound(params, system)
        if self.dt > bound * (1.0 + 1e-12):
            raise ConfigError(
                f"dt={self.dt:g} does not resolve the fastest scale (need dt <= {bound:g})"
            )

    def resolved_stride(self, params: SystemParams) -> int:
        if self.record_stride is not None:
            return self.record_stride
        period = 2.0 * math.pi / params.delta2
        return max(1, int(period / (16.0 * self.dt)))


def dt_bound(params: SystemParams, system: str = "full") -> float:
    """Largest step that resolves the fastest rate of the given system."""
    fastest = max(params.omega_b1, params.omega_b2, params.delta2)
    bound = 0.05 / fastest
    if system == "full":
        bound = min(bound, 0.1 / params.kappa)
    return bound


def strobe_stride(dt: float, delta2: float, max_record_dt: float) -> int:
    """Record stride closest to an integer number of drive periods.

    Sampling near integer multiples of 2*pi/delta2 folds the static carrier
    leftover into the near-DC bins of the demodulated series, keeping the
    analysis band clean at coarse record rates.
    """
    period = 2.0 * math.pi / delta2
    k = max(1, int(max_record_dt / period))
    return max(1, int(round(k * period / dt)))


@dataclass
class Trajectory:
    """Uniformly sampled complex records with RNG provenance."""

    times: np.ndarray
    a: np.ndarray | None
    b1: np.ndarray
    b2: np.ndarray | None
    params: SystemParams
    noise: NoiseSettings
    config: IntegratorConfig
    run_index: int = 0

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def record_dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def save(self, path) -> None:
        from .container import write_trajectory

        write_trajectory(path, self)

    def to_csv(self, path) -> None:
        from .container import trajectory_to_csv

        trajectory_to_csv(path, self)


@dataclass(frozen=True)
class StabilityReport:
    converged: bool
    residual: float
    window: float


def _channel_rng(seed: int, run_index: int, channel: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(run_index), int(channel)))
    return np.random.Generator(np.random.Philox(ss))


def gen_complex_white_noise(
    settings: NoiseSettings,
    dt: float,
    occupancy: float,
    n: int = 1,
    run_index: int = 0,
    channel: int = CH_B1,
) -> np.ndarray:
    """Complex white-noise samples eta with <eta* eta> = (occupancy + 1/2)/dt.

    Real and imaginary parts are independent zero-mean Gaussians; distinct
    (run_index, channel) pairs give independent streams.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    if occupancy < 0:
        raise DomainError("occupancy must be non-negative")
    rng = _channel_rng(settings.seed, run_index, channel)
    z = rng.standard_normal((n, 2))
    scale = math.sqrt((occupancy + 0.5) / (2.0 * dt))
    return scale * (z[:, 0] + 1j * z[:, 1])


def _increment_scale(rate: float, occupancy: float, dt: float) -> float:
    # complex increment sqrt(rate*(occ+1/2)*dt)*(x+iy) == sqrt(2*rate)*eta*dt
    return math.sqrt(rate * (occupancy + 0.5) * dt)


def _mech_drift(b, omega, gamma, beta, rad):
    v = b - np.conj(b)
    return (-1j * omega - gamma) * b + (1j * (omega * beta / 3.0)) * (v * v * v) + 1j * rad


def step_single_oscillator(b, params: SystemParams, noise, dt, t=0.0, scheme="heun_drift"):
    """One integration step of the single-oscillator reduction (mode 1 fields).

    ``noise`` is a complex sample with <|noise|^2> = (nbar + 1/2)/dt, or None.
    """
    k1 = _mech_drift(b, params.omega_b1, params.gamma1, params.beta_nl, 0.0)
    if scheme == "heun_drift":
        bp = b + dt * k1
        k2 = _mech_drift(bp, params.omega_b1, params.gamma1, params.beta_nl, 0.0)
        out = b + 0.5 * dt * (k1 + k2)
    elif scheme == "euler_maruyama":
        out = b + dt * k1
    else:
        raise ConfigError(f"unknown scheme {scheme!r}")
    if noise is not None:
        out = out + math.sqrt(2.0 * params.gamma1) * noise * dt
    if not (math.isfinite(out.real) and math.isfinite(out.imag)):
        raise DivergenceError("single-oscillator state became non-finite", step=None)
    return out


def step_full_system(state, params: SystemParams, noises, dt, t=0.0, scheme="heun_drift"):
    """One step of the coupled cavity/two-resonator system.

    ``state`` is (a, b1, b2); ``noises`` is (eta_a, eta_b1, eta_b2) with the
    same convention as :func:`gen_complex_white_noise`, or None.
    """
    a, b1, b2 = state
    p = params

    def drift(a_, b1_, b2_, t_):
        aa = a_.real * a_.real + a_.imag * a_.imag
        ka = (1j * (-p.delta1 + 2.0 * (p.g1 * b1_.real + p.g2 * b2_.real)) - p.kappa) * a_ \
            + p.drive_h * np.exp(-1j * p.delta2 * t_) + p.drive_c
        kb1 = _mech_drift(b1_, p.omega_b1, p.gamma1, p.beta_nl, p.g1 * aa)
        kb2 = _mech_drift(b2_, p.omega_b2, p.gamma2, p.beta_nl, p.g2 * aa)
        return ka, kb1, kb2

    k1 = drift(a, b1, b2, t)
    if scheme == "heun_drift":
        ap, b1p, b2p = a + dt * k1[0], b1 + dt * k1[1], b2 + dt * k1[2]
        k2 = drift(ap, b1p, b2p, t + dt)
        a = a + 0.5 * dt * (k1[0] + k2[0])
        b1 = b1 + 0.5 * dt * (k1[1] + k2[1])
        b2 = b2 + 0.5 * dt * (k1[2] + k2[2])
    elif scheme == "euler_maruyama":
        a, b1, b2 = a + dt * k1[0], b1 + dt * k1[1], b2 + dt * k1[2]
    else:
        raise ConfigError(f"unknown scheme {scheme!r}")
    if noises is not None:
        ea, e1, e2 = noises
        a = a + math.sqrt(2.0 * p.kappa) * ea * dt
        b1 = b1 + math.sqrt(2.0 * p.gamma1) * e1 * dt
        b2 = b2 + math.sqrt(2.0 * p.gamma2) * e2 * dt
    for x in (a, b1, b2):
        if not (math.isfinite(x.real) and math.isfinite(x.imag)):
            raise DivergenceError("full-system state became non-finite", step=None)
    return a, b1, b2


def _grid(config: IntegratorConfig):
    n_total = int(round(config.t_total / config.dt))
    n_discard = int(round(config.t_discard / config.dt))
    if n_total <= n_discard:
        raise ConfigError("no steps remain after the transient cut")
    return n_total, n_discard


def _thermal_initial(rng: np.random.Generator, occupancy: float) -> complex:
    z = rng.standard_normal(2)
    s = math.sqrt((occupancy + 0.5) / 2.0)
    return complex(s * z[0], s * z[1])


def _chunk_steps(batch: int) -> int:
    return max(512, 2_000_000 // max(batch, 1))


def simulate_batch(
    params_list,
    config: IntegratorConfig,
    noise: NoiseSettings,
    run_indices=None,
    initial_states=None,
):
    """Integrate a batch of independent full-system runs with shared timing.

    Every run has its own parameters and its own noise streams derived from
    (noise.seed, run_index); results do not depend on batch composition.
    """
    params_list = list(params_list)
    nb = len(params_list)
    if nb == 0:
        raise ConfigError("empty batch")
    if run_indices is None:
        run_indices = list(range(nb))
    for p in params_list:
        config.validate_for(p, system="full")

    n_total, n_discard = _grid(config)
    stride = max(config.resolved_stride(p) for p in params_list)
    n_rec = 0 if n_total - 1 < n_discard else (n_total - 1 - n_discard) // stride + 1

    dt = config.dt
    scheme = _SCHEMES[config.scheme]
    want_a = config.record_cavity

    def arr(attr):
        return np.array([getattr(p, attr) for p in params_list], dtype=float)

    om1, om2 = arr("omega_b1"), arr("omega_b2")
    gm1, gm2 = arr("gamma1"), arr("gamma2")
    g1, g2 = arr("g1"), arr("g2")
    kap, d1, d2 = arr("kappa"), arr("delta1"), arr("delta2")
    eh, ec, beta = arr("drive_h"), arr("drive_c"), arr("beta_nl")
    occ1 = np.array([noise.occupancy(1, p) for p in params_list])
    occ2 = np.array([noise.occupancy(2, p) for p in params_list])

    a = np.zeros(nb, dtype=np.complex128)
    b1 = np.zeros(nb, dtype=np.complex128)
    b2 = np.zeros(nb, dtype=np.complex128)
    if noise.enabled:
        for r in range(nb):
            rng0 = _channel_rng(noise.seed, run_indices[r], CH_INIT)
            b1[r] = _thermal_initial(rng0, occ1[r])
            b2[r] = _thermal_initial(rng0, occ2[r])
    if initial_states is not None:
        for r, st in enumerate(initial_states):
            if st is not None:
                a[r], b1[r], b2[r] = st

    rec_a = np.zeros((n_rec, nb), dtype=np.complex128) if want_a else np.zeros((1, 1), dtype=np.complex128)
    rec_b1 = np.zeros((n_rec, nb), dtype=np.complex128)
    rec_b2 = np.zeros((n_rec, nb), dtype=np.complex128)
    rec_t = np.zeros(max(n_rec, 1), dtype=float)

    rngs = None
    scale_a = np.sqrt(kap * 0.5 * dt)
    scale_1 = np.sqrt(gm1 * (occ1 + 0.5) * dt)
    scale_2 = np.sqrt(gm2 * (occ2 + 0.5) * dt)
    if noise.enabled:
        rngs = {
            ch: [_channel_rng(noise.seed, run_indices[r], ch) for r in range(nb)]
            for ch in (CH_CAVITY, CH_B1, CH_B2)
        }

    chunk = _chunk_steps(nb)
    div_limit = np.full(nb, np.inf)
    snap_hist = []
    done = 0
    rec_pos = 0
    empty = np.zeros((1, nb), dtype=np.complex128)
    while done < n_total:
        n = min(chunk, n_total - done)
        if noise.enabled:
            na = np.empty((n, nb), dtype=np.complex128)
            nb1_arr = np.empty((n, nb), dtype=np.complex128)
            nb2_arr = np.empty((n, nb), dtype=np.complex128)
            for r in range(nb):
                z = rngs[CH_CAVITY][r].standard_normal((n, 2))
                na[:, r] = scale_a[r] * (z[:, 0] + 1j * z[:, 1])
                z = rngs[CH_B1][r].standard_normal((n, 2))
                nb1_arr[:, r] = scale_1[r] * (z[:, 0] + 1j * z[:, 1])
                z = rngs[CH_B2][r].standard_normal((n, 2))
                nb2_arr[:, r] = scale_2[r] * (z[:, 0] + 1j * z[:, 1])
        else:
            na = nb1_arr = nb2_arr = empty

        snap_stride = max(1, n // 8)
        snap = np.zeros((n // snap_stride + 1, nb), dtype=float)
        out = kernels.full_chunk(
            a, b1, b2, om1, om2, gm1, gm2, g1, g2, kap, d1, d2, eh, ec, beta,
            done * dt, dt, n, scheme,
            na, nb1_arr, nb2_arr, noise.enabled,
            rec_a, rec_b1, rec_b2, rec_t, want_a,
            stride, n_discard, done, rec_pos,
            div_limit, snap, snap_stride,
        )
        rec_pos, bad_step, bad_run, code, snap_count = out[3], out[4], out[5], out[6], out[7]
        if code == 1:
            raise DivergenceError(
                f"non-finite state at step {bad_step} (run index {run_indices[bad_run]})",
                step=bad_step,
            )
        if code == 2:
            raise DivergenceError(
                f"cavity amplitude exceeded {_DIVERGENCE_FACTOR:g} x running median at "
                f"step {bad_step} (run index {run_indices[bad_run]}); the operating point "
                "is outside the stable regime",
                step=bad_step,
            )
        snap_hist.append(snap[:snap_count])
        med = np.median(np.concatenate(snap_hist, axis=0), axis=0)
        div_limit = np.maximum(_DIVERGENCE_FACTOR * med, 1e-12)
        done += n

    out = []
    for r in range(nb):
        out.append(
            Trajectory(
                times=rec_t[:rec_pos].copy(),
                a=rec_a[:rec_pos, r].copy() if want_a else None,
                b1=rec_b1[:rec_pos, r].copy(),
                b2=rec_b2[:rec_pos, r].copy(),
                params=params_list[r],
                noise=noise,
                config=config,
                run_index=run_indices[r],
            )
        )
    return out


def simulate(
    params: SystemParams,
    config: IntegratorConfig,
    noise: NoiseSettings,
    run_index: int = 0,
    initial_state=None,
) -> Trajectory:
    """Integrate one full-system trajectory (see :func:`simulate_batch`)."""
    return simulate_batch(
        [params], config, noise, run_indices=[run_index],
        initial_states=None if initial_state is None else [initial_state],
    )[0]


def simulate_single_batch(
    params_list,
    config: IntegratorConfig,
    noise: NoiseSettings,
    run_indices=None,
    initial_states=None,
):
    """Integrate a batch of single-oscillator runs (mode-1 fields, channel b1)."""
    params_list = list(params_list)
    nb = len(params_list)
    if nb == 0:
        raise ConfigError("empty batch")
    if run_indices is None:
        run_indices = list(range(nb))
    for p in params_list:
        config.validate_for(p, system="single")

    n_total, n_discard = _grid(config)
    stride = max(config.resolved_stride(p) for p in params_list)
    n_rec = 0 if n_total - 1 < n_discard else (n_total - 1 - n_discard) // stride + 1
    dt = config.dt
    scheme = _SCHEMES[config.scheme]

    om = np.array([p.omega_b1 for p in params_list])
    gm = np.array([p.gamma1 for p in params_list])
    beta = np.array([p.beta_nl for p in params_list])
    occ = np.array([noise.occupancy(1, p) for p in params_list])

    b = np.zeros(nb, dtype=np.complex128)
    if noise.enabled:
        for r in range(nb):
            rng0 = _channel_rng(noise.seed, run_indices[r], CH_INIT)
            b[r] = _thermal_initial(rng0, occ[r])
    if initial_states is not None:
        for r, st in enumerate(initial_states):
            if st is not None:
                b[r] = st

    rec_b = np.zeros((n_rec, nb), dtype=np.complex128)
    rec_t = np.zeros(max(n_rec, 1), dtype=float)
    scale = np.sqrt(gm * (occ + 0.5) * dt)
    rngs = [_channel_rng(noise.seed, run_indices[r], CH_B1) for r in range(nb)] if noise.enabled else None

    chunk = _chunk_steps(nb)
    done = 0
    rec_pos = 0
    empty = np.zeros((1, nb), dtype=np.complex128)
    while done < n_total:
        n = min(chunk, n_total - done)
        if noise.enabled:
            nb_arr = np.empty((n, nb), dtype=np.complex128)
            for r in range(nb):
                z = rngs[r].standard_normal((n, 2))
                nb_arr[:, r] = scale[r] * (z[:, 0] + 1j * z[:, 1])
        else:
            nb_arr = empty
        out = kernels.single_chunk(
            b, om, gm, beta, done * dt, dt, n, scheme, nb_arr, noise.enabled,
            rec_b, rec_t, stride, n_discard, done, rec_pos,
        )
        rec_pos, bad_step, bad_run, code = out[1], out[2], out[3], out[4]
        if code != 0:
            raise DivergenceError(
                f"non-finite state at step {bad_step} (run index {run_indices[bad_run]})",
                step=bad_step,
            )
        done += n

    return [
        Trajectory(
            times=rec_t[:rec_pos].copy(),
            a=None,
            b1=rec_b[:rec_pos, r].copy(),
            b2=None,
            params=params_list[r],
            noise=noise,
            config=config,
            run_index=run_indices[r],
        )
        for r in range(nb)
    ]


def simulate_single_oscillator(
    params: SystemParams,
    config: IntegratorConfig,
    noise: NoiseSettings,
    run_index: int = 0,
    initial_b=None,
) -> Trajectory:
    return simulate_single_batch(
        [params], config, noise, run_indices=[run_index],
        initial_states=None if initial_b is None else [initial_b],
    )[0]


def assess_stability(traj: Trajectory, window: float) -> StabilityReport:
    """Check that per-period envelopes drift less than 1% over the final window.

    The envelope is the per-bin RMS amplitude (bins of one drive period,
    widened on coarse records), which stays well-behaved on noisy records;
    the drift is the fitted linear change across the window relative to the
    median envelope.  Variables resting at zero count as converged.
    """
    period = 2.0 * math.pi / traj.params.delta2
    if window < 10.0 * period:
        raise ConfigError("stability window must span at least 10 drive periods")
    if window >= traj.duration:
        raise ConfigError("stability window must be shorter than the trajectory")
    t = traj.times
    sel = t >= t[-1] - window
    tw = t[sel]
    residual = 0.0
    for series in (traj.a, traj.b1, traj.b2):
        if series is None:
            continue
        x = np.abs(series[sel])
        width = period
        # coarse records: widen envelope bins until they hold a few samples
        while width < window / 8 and np.sum(tw < tw[0] + width) < 4:
            width *= 2.0
        bins = np.floor((tw - tw[0]) / width).astype(int)
        nb = int(bins[-1]) + 1
        env = np.full(nb, np.nan)
        for k in range(nb):
            m = bins == k
            if m.any():
                env[k] = math.sqrt(float(np.mean(x[m] ** 2)))
        env = env[np.isfinite(env)]
        if len(env) < 3:
            raise ConfigError("too few envelope bins in the stability window")
        scale = float(np.median(env))
        peak = float(np.max(np.abs(series)))
        if scale == 0.0 or scale <= 1e-9 * peak:
            continue  # variable has fully relaxed to zero
        centers = np.arange(len(env), dtype=float)
        slope = np.polyfit(centers, env, 1)[0]
        drift = abs(slope) * len(env) / scale
        residual = max(residual, drift)
    return StabilityReport(converged=residual < 0.01, residual=residual, window=window)
