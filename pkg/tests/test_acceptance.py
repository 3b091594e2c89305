"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines.  All tolerances are fixed here; the desk-scale operating points are
the named scenario presets (see gupsim.scenarios for the preset rationale).
"""

import cmath
import math

import numpy as np
import pytest

from gupsim import (
    IntegratorConfig,
    NoiseSettings,
    ProtocolConfig,
    SystemParams,
    cavity_closed_form,
    dark_excitation_estimate,
    find_peak,
    gen_complex_white_noise,
    linear_fit,
    simulate,
    simulate_batch,
    simulate_single_oscillator,
    slow_amplitudes,
    steady_bright_amplitude,
    supermode_rates,
    time_avg_amplitude,
    welch_spectrum,
)
from gupsim.modes import supermode_transform
from gupsim.pipeline import ScatterSet, resolution_sweep, run_protocol
from gupsim.scenarios import (
    desk_fig2_drive_grid,
    desk_fig2_params,
    desk_fig3_drive_grid,
    desk_fig3_params,
    desk_fig4_drive_grid,
    desk_fig4_params,
    desk_fig5_params,
)
from gupsim.sde import simulate_single_batch
from gupsim.spectra import WelchConfig, autocorr_spectrum
from tests.conftest import lorentzian_fit

pytestmark = pytest.mark.acceptance


def report(num, name, ok, detail):
    print(f"\nACCEPTANCE {num:2d} ({name}): {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


class TestCriterion1:
    def test_frequency_shift_oracle(self):
        # omega_b = 1, gamma = 1e-6, beta = 1e-8, |b(0)| = 1e3 -> frequency 1.01
        p = SystemParams(gamma1=1e-6, gamma2=1e-6, beta_nl=1e-8)
        cfg = IntegratorConfig(dt=0.005, t_total=500.0, record_stride=20)
        tr = simulate_single_oscillator(p, cfg, NoiseSettings(seed=0, enabled=False),
                                        initial_b=1e3 + 0j)
        phase = np.unwrap(np.angle(tr.b1))
        freq = -np.polyfit(tr.times, phase, 1)[0]
        ok = abs(freq - 1.01) < 0.01 * 1.01
        report(1, "frequency-shift oracle", ok,
               f"phase-unwrapped frequency {freq:.6f} vs 1.01 (tol 1%)")


class TestCriterion2:
    def test_lorentzian_noise_spectrum(self):
        # beta = 0, gamma = 1e-3, nbar = 40, record gamma*t = 20, 8 seeds
        gamma, nbar = 1e-3, 40.0
        p = SystemParams(gamma1=gamma, gamma2=gamma, nbar1=nbar, nbar2=nbar)
        cfg = IntegratorConfig(dt=0.01, t_total=20.0 / gamma, record_stride=39)
        runs = simulate_single_batch([p] * 8, cfg, NoiseSettings(seed=12),
                                     run_indices=list(range(8)))
        rec_dt = runs[0].times[1] - runs[0].times[0]
        wcfg = WelchConfig(segment_length=5.0, overlap=2.0, gamma=gamma)
        peaks = []
        acc = None
        for tr in runs:
            spec = welch_spectrum(tr.b1, rec_dt, wcfg)
            est = find_peak(spec, band=(1.0 - 40 * gamma, 1.0 + 40 * gamma))
            peaks.append(est.omega_peak)
            raw = autocorr_spectrum(tr.b1, rec_dt)
            acc = raw.psd if acc is None else acc + raw.psd
        peak_mean = float(np.mean(peaks))
        raw_freqs = autocorr_spectrum(runs[0].b1, rec_dt).freqs
        sel = np.abs(raw_freqs - 1.0) < 12 * gamma
        _, center, hwhm = lorentzian_fit(raw_freqs[sel], acc[sel] / 8, 1.0, gamma)
        ok_peak = abs(peak_mean - 1.0) < 0.2 * gamma
        ok_width = abs(hwhm - gamma) < 0.15 * gamma
        report(2, "thermal Lorentzian line", ok_peak and ok_width,
               f"Welch peak offset {abs(peak_mean-1.0)/gamma:.3f} gamma (tol 0.2), "
               f"fitted HWHM/gamma {hwhm/gamma:.3f} (tol 15%)")


class TestCriterion3:
    def test_dark_mode_decoupling(self):
        # identical resonators, noise off, published couplings, desk drive
        p = SystemParams(
            gamma1=1e-3, gamma2=1e-3,
            g1=1.9047619047619048e-6, g2=1.9047619047619048e-6,
            drive_h=600.0, drive_c=600.0,
        )
        cfg = IntegratorConfig(dt=0.02, t_total=4000.0, t_discard=200.0, record_stride=8)
        tr = simulate(p, cfg, NoiseSettings(seed=0, enabled=False))
        slow = slow_amplitudes(tr, estimate_offsets=False)
        ratio = np.max(np.abs(slow.ad)) / np.max(np.abs(slow.ab))
        ok = ratio < 1e-6
        report(3, "dark-mode decoupling", ok,
               f"max|A_d|/max|A_b| = {ratio:.2e} (tol 1e-6)")


class TestCriterion4:
    def test_cavity_closed_form(self):
        p = SystemParams(gamma1=1e-4, gamma2=1e-4, g1=2e-4, g2=2e-4,
                         drive_h=100.0, drive_c=300.0)
        period = 2 * math.pi / p.delta2
        errs = {}
        for xi in (0.5, 3.0, 10.0):
            abs_ab = xi * p.delta2 / (2.0 * p.g_bright)
            theta = 0.7
            dt = period / 2000
            a = complex(cavity_closed_form(0.0, abs_ab, theta, p)[0])

            def f(t, a_):
                mech = 2.0 * (p.g1 + p.g2) * (abs_ab / math.sqrt(2.0)) * math.cos(
                    p.delta2 * t - theta)
                return ((1j * (-p.delta1 + mech) - p.kappa) * a_
                        + p.drive_h * cmath.exp(-1j * p.delta2 * t) + p.drive_c)

            ts, vals = [0.0], [a]
            t = 0.0
            for _ in range(int(round(65 * period / dt))):
                k1 = f(t, a)
                k2 = f(t + dt / 2, a + dt / 2 * k1)
                k3 = f(t + dt / 2, a + dt / 2 * k2)
                k4 = f(t + dt, a + dt * k3)
                a += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                t += dt
                ts.append(t)
                vals.append(a)
            ts = np.array(ts)
            vals = np.array(vals)
            sel = ts >= 15 * period  # compare the final 50 drive periods
            closed = cavity_closed_form(ts[sel], abs_ab, theta, p)
            errs[xi] = float(np.linalg.norm(vals[sel] - closed) / np.linalg.norm(closed))
        ok = all(e < 1e-3 for e in errs.values())
        report(4, "cavity closed form", ok,
               "relative L2 vs direct integration: "
               + ", ".join(f"xi={k:g}: {v:.2e}" for k, v in errs.items()) + " (tol 1e-3)")


class TestCriterion5:
    def test_slow_flow_fixed_point(self):
        # gamma = 1e-4, |A_b| ~ 1e3: stationary SDE amplitude vs fixed point.
        # The resonant response is set by Gamma_eff ~ gamma, so the step must
        # keep the discrete-rotation frequency offset omega^3 dt^2/6 well
        # below gamma (dt = 5e-3 puts it at 0.04 gamma).
        p = SystemParams(gamma1=1e-4, gamma2=1e-4, g1=2e-4, g2=2e-4,
                         drive_h=28.0, drive_c=600.0, nbar1=40.0, nbar2=40.0)
        predicted = abs(steady_bright_amplitude(p))
        cfg = IntegratorConfig(dt=0.005, t_total=1.1e5, t_discard=8e4, record_stride=64)
        tr = simulate(p, cfg, NoiseSettings(seed=5))
        slow = slow_amplitudes(tr, estimate_offsets=False)
        measured = time_avg_amplitude(slow.times, slow.ab)
        rel = abs(measured - predicted) / predicted
        ok = rel < 0.05
        report(5, "slow-flow consistency", ok,
               f"SDE |A_b| = {measured:.1f} vs fixed point {predicted:.1f} "
               f"({100*rel:.2f}%, tol 5%)")


class TestCriterion6:
    def test_end_to_end_protocol_and_null(self):
        beta = 1.5e-10
        params = desk_fig3_params(beta_nl=beta)
        grid = desk_fig3_drive_grid()
        gamma = params.gamma_bar
        cfg = ProtocolConfig(
            record_gamma_t=20.0, discard_gamma_t=3.0, seeds_per_point=5,
            master_seed=601, search_halfwidth=30.0,
        )
        scatter, fit = run_protocol(params, grid, cfg)
        span = (scatter.omega_peak.max() - scatter.omega_peak.min()) / gamma
        rel = abs(fit.beta_nl_est - beta) / beta
        ok_signal = fit.r_squared > 0.9 and rel < 0.15

        null_cfg = ProtocolConfig(
            record_gamma_t=20.0, discard_gamma_t=3.0, seeds_per_point=10,
            master_seed=602, run_index_offset=1000, search_halfwidth=30.0,
        )
        _, null_fit = run_protocol(params.replace(beta_nl=beta / 100.0), grid, null_cfg)
        ok_null = null_fit.r_squared < 0.1
        report(6, "end-to-end desk protocol", ok_signal and ok_null,
               f"beta_est/beta = {fit.beta_nl_est/beta:.3f} (tol 15%), "
               f"R2 = {fit.r_squared:.3f} (>0.9), span = {span:.1f} gamma; "
               f"beta/100 gives R2 = {null_fit.r_squared:.3f} (<0.1)")


class TestCriterion7:
    def test_record_length_lowers_resolution_limit(self):
        params = desk_fig4_params()
        grid = desk_fig4_drive_grid()
        betas = np.logspace(-11.0, -8.8, 6)
        common = dict(discard_gamma_t=3.0, seeds_per_point=4, master_seed=701,
                      search_halfwidth=40.0)
        short_cfg = ProtocolConfig(record_gamma_t=20.0, **common)
        long_cfg = ProtocolConfig(record_gamma_t=60.0, run_index_offset=10_000, **common)
        sweep_short = resolution_sweep(params, betas, grid, threshold=0.1, cfg=short_cfg)
        sweep_long = resolution_sweep(params, betas, grid, threshold=0.1, cfg=long_cfg)

        # R^2 must grow along the grid once it is clearly resolved; dips in
        # the noise-dominated region are logged, not failed
        for sweep in (sweep_short, sweep_long):
            r2 = sweep.r_squared
            for i in range(1, len(r2)):
                if r2[i] < r2[i - 1] - 1e-12 and min(r2[i], r2[i - 1]) >= 0.3:
                    pytest.fail(f"R^2 not monotone in the resolved region: {r2}")
                if r2[i] < r2[i - 1] and r2[i] < 0.3:
                    print(f"  (noise-region R^2 dip at beta={sweep.betas[i]:.2e}: "
                          f"{r2[i-1]:.3f} -> {r2[i]:.3f}; logged)")

        ok = (
            sweep_short.crossed and sweep_long.crossed
            and sweep_short.boundary is None and sweep_long.boundary is None
            and sweep_long.beta_lim < sweep_short.beta_lim
        )
        report(7, "record-length effect", ok,
               f"beta_lim({{gamma t=20}}) = {sweep_short.beta_lim:.2e}, "
               f"beta_lim({{gamma t=60}}) = {sweep_long.beta_lim:.2e} (strictly lower)")


class TestCriterion8:
    def test_mismatch_excitation_ratio(self):
        results = []
        seps = []
        for i, ratio in enumerate((0.002, 0.02)):
            p = desk_fig5_params(ratio).replace(drive_h=3000.0, drive_c=3000.0)
            gamma = p.gamma_bar
            rates = supermode_rates(p)
            cfg = IntegratorConfig(
                dt=0.02, t_total=23.0 / gamma, t_discard=3.0 / gamma, record_stride=300,
                record_cavity=False,
            )
            tr = simulate(p, cfg, NoiseSettings(seed=81), run_index=i)
            slow = slow_amplitudes(tr, estimate_offsets=False)
            ab_mean = time_avg_amplitude(slow.times, slow.ab)
            ad_mean = time_avg_amplitude(slow.times, slow.ad)
            measured = ad_mean / ab_mean
            expected = abs(dark_excitation_estimate(1.0 + 0j, rates.mu, rates.gamma_d))
            results.append((ratio, measured, expected))

            # bimodal separation: coherent line at the drive, noise peak at the
            # dark eigenfrequency
            rec_dt = slow.times[1] - slow.times[0]
            wcfg = WelchConfig(segment_length=5.0, overlap=2.0, gamma=gamma)
            spec = welch_spectrum(slow.ad, rec_dt, wcfg, carrier_freq=p.delta2)
            binw = spec.bin_width
            coherent = find_peak(spec, band=(p.delta2 - 10 * binw, p.delta2 + 10 * binw),
                                 method="argmax")
            noise_pk = find_peak(
                spec,
                band=(p.omega_bar - 20 * gamma, p.omega_bar + 20 * gamma),
                exclude=[(p.delta2 - 5 * binw, p.delta2 + 5 * binw)],
            )
            seps.append(abs(noise_pk.omega_peak - coherent.omega_peak) / binw)

        ok_ratio = all(abs(m - e) / e < 0.25 for _, m, e in results)
        ok_sep = all(s > 10.0 for s in seps)
        detail = ", ".join(
            f"delta/|Dp|={r:g}: |Ad|/|Ab| = {m:.5f} vs {e:.5f}" for r, m, e in results
        )
        report(8, "mismatch excitation ratio", ok_ratio and ok_sep,
               detail + f"; peak separations {seps[0]:.0f}, {seps[1]:.0f} bins (tol 25%)")


class TestCriterion9:
    def test_saturation_knee(self):
        params = desk_fig2_params()
        grid = desk_fig2_drive_grid()
        gamma = params.gamma_bar
        cfg = IntegratorConfig(
            dt=0.02, t_total=23.0 / gamma, t_discard=3.0 / gamma, record_stride=300,
            record_cavity=False,
        )
        runs = [params.replace(drive_h=float(e)) for e in grid]
        trajs = simulate_batch(runs, cfg, NoiseSettings(seed=91))
        amps = []
        for tr in trajs:
            slow = slow_amplitudes(tr, estimate_offsets=False)
            amps.append(time_avg_amplitude(slow.times, slow.ab))
        amps = np.array(amps)
        diffs = np.diff(amps)
        xi = 2.0 * params.g_bright * amps / params.delta2
        knee = int(np.argmax(xi > 1.0))
        ok_mono = bool(np.all(diffs > 0))
        ok_knee = bool(np.all(np.diff(diffs[max(knee - 1, 0):]) < 0))
        report(9, "drive saturation", ok_mono and ok_knee,
               f"|A_b| grid {np.round(amps,1).tolist()}; increments shrink beyond "
               f"xi=1 at point {knee} (monotone: {ok_mono})")


class TestCriterion10:
    def test_statistical_contracts(self):
        # noise-generator variance over 1e6 draws
        dt = 0.01
        eta = gen_complex_white_noise(NoiseSettings(seed=10), dt, 0.0, n=1_000_000)
        var = float(np.mean(np.abs(eta) ** 2))
        ok_noise = abs(var - 1.0 / (2 * dt)) < 0.01 / (2 * dt)

        # fluctuation-dissipation: stationary variance nbar + 1/2 within 3%.
        # |b|^2 decorrelates over 1/(2 gamma), so the run ensemble needs
        # ~1.5e4 correlation times for a ~1% estimator.
        nbar = 4.0
        p = SystemParams(gamma1=1e-2, gamma2=1e-2, nbar1=nbar, nbar2=nbar)
        cfg = IntegratorConfig(dt=0.02, t_total=6600.0, t_discard=600.0, record_stride=25)
        runs = simulate_single_batch([p] * 128, cfg, NoiseSettings(seed=101),
                                     run_indices=list(range(128)))
        var_b = float(np.mean(np.concatenate([np.abs(tr.b1) ** 2 for tr in runs])))
        ok_fd = abs(var_b - (nbar + 0.5)) < 0.03 * (nbar + 0.5)

        # regression CI coverage over 1000 synthetic repetitions
        rng = np.random.default_rng(202)
        n, reps = 10, 1000
        x = np.linspace(1.0, 5.0, n)
        k_true, sigma = 2e-3, 5e-3
        hits = 0
        for _ in range(reps):
            y = 1.0 + k_true * x + sigma * rng.standard_normal(n)
            fit = linear_fit(
                ScatterSet(amp_sq=x, omega_peak=y, sigma=np.full(n, sigma))
            )
            if fit.ci95[0] <= k_true <= fit.ci95[1]:
                hits += 1
        coverage = hits / reps
        ok_cov = 0.93 <= coverage <= 0.97

        report(10, "statistical contracts", ok_noise and ok_fd and ok_cov,
               f"noise var {var*2*dt:.4f}x nominal (tol 1%), "
               f"<|b|^2> = {var_b:.3f} vs {nbar+0.5} (tol 3%), "
               f"CI coverage {coverage:.3f} (95% +/- 2%)")