import math

import numpy as np
import pytest

from gupsim import FitResult, ProtocolConfig, ScatterSet, SystemParams, linear_fit
from gupsim.errors import FitError, ProtocolError
from gupsim.pipeline import fit_to_csv, resolution_sweep, run_protocol, scatter_to_csv


def make_scatter(x, y, sigma=None):
    x = np.asarray(x, dtype=float)
    if sigma is None:
        sigma = np.zeros_like(x)
    return ScatterSet(amp_sq=x, omega_peak=np.asarray(y, dtype=float),
                      sigma=np.asarray(sigma, dtype=float))


class TestLinearFit:
    def test_exact_line(self):
        x = np.linspace(1.0, 10.0, 8)
        k, w0 = 3.5e-9, 1.0
        fit = linear_fit(make_scatter(x, w0 + k * x))
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.slope == pytest.approx(k, rel=1e-12)
        assert fit.intercept == pytest.approx(w0, rel=1e-12)

    def test_beta_inversion(self):
        # synthetic points from the amplitude-shift law with beta = 1e-15
        from gupsim import predicted_shift

        beta, om = 1e-15, 1.0
        amps2 = np.linspace(1e9, 1e10, 10)
        y = [predicted_shift(om, beta, math.sqrt(a2)) for a2 in amps2]
        fit = linear_fit(make_scatter(amps2, y), omega_bar=om)
        assert fit.beta_nl_est == pytest.approx(beta, rel=1e-12)

    def test_ci_contains_estimate(self):
        rng = np.random.default_rng(0)
        x = np.linspace(0.0, 1.0, 12)
        y = 2.0 + 0.5 * x + 0.01 * rng.standard_normal(12)
        fit = linear_fit(make_scatter(x, y))
        assert fit.ci95[0] <= fit.beta_nl_est <= fit.ci95[1]

    def test_coverage(self):
        # 95% CI covers the true slope in ~95% of repetitions
        rng = np.random.default_rng(42)
        n, reps = 10, 1000
        x = np.linspace(1.0, 5.0, n)
        k_true, b_true, sigma = 2e-3, 1.0, 5e-3
        hits = 0
        for _ in range(reps):
            y = b_true + k_true * x + sigma * rng.standard_normal(n)
            fit = linear_fit(make_scatter(x, y, sigma=np.full(n, sigma)))
            if fit.ci95[0] <= k_true <= fit.ci95[1]:
                hits += 1
        assert 0.93 <= hits / reps <= 0.97

    def test_degenerate_abscissa(self):
        with pytest.raises(FitError):
            linear_fit(make_scatter([2.0, 2.0, 2.0, 2.0], [1.0, 1.1, 0.9, 1.0]))

    def test_too_few_points(self):
        with pytest.raises(FitError):
            linear_fit(make_scatter([1.0, 2.0], [1.0, 2.0]))

    def test_order_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(1.0, 9.0, 15)
        y = 0.3 + 0.7 * x + 0.05 * rng.standard_normal(15)
        s = rng.uniform(0.01, 0.1, 15)
        fit1 = linear_fit(make_scatter(x, y, s))
        perm = rng.permutation(15)
        fit2 = linear_fit(make_scatter(x[perm], y[perm], s[perm]))
        assert fit1.slope == pytest.approx(fit2.slope, rel=1e-12)
        assert fit1.r_squared == pytest.approx(fit2.r_squared, rel=1e-12)

    def test_affine_rescaling(self):
        rng = np.random.default_rng(2)
        x = np.linspace(1.0, 4.0, 9)
        y = 1.0 + 0.2 * x + 0.01 * rng.standard_normal(9)
        fit1 = linear_fit(make_scatter(x, y))
        c = 37.5
        fit2 = linear_fit(make_scatter(c * x, y))
        assert fit2.slope == pytest.approx(fit1.slope / c, rel=1e-12)
        assert fit2.r_squared == pytest.approx(fit1.r_squared, abs=1e-12)


@pytest.fixture
def fast_protocol_params():
    # small-Q detuned operating point that integrates in seconds
    gamma = 3e-3
    return SystemParams(
        gamma1=gamma, gamma2=gamma, g1=2e-4, g2=2e-4,
        delta2=1.0 - 30.0 * gamma,
        drive_h=4000.0, drive_c=4000.0, nbar1=10.0, nbar2=10.0,
    )


FAST_CFG = dict(record_gamma_t=12.0, discard_gamma_t=2.0, seeds_per_point=1,
                welch_segment=4.0, welch_overlap=1.0, search_halfwidth=50.0)


class TestRunProtocol:
    def test_null_case_slope_consistent_with_zero(self, fast_protocol_params):
        cfg = ProtocolConfig(master_seed=3, **FAST_CFG)
        grid = np.linspace(0.5, 1.0, 6) * fast_protocol_params.drive_h
        scatter, fit = run_protocol(fast_protocol_params, grid, cfg)
        assert len(scatter) == 6
        half = 0.5 * (fit.ci95[1] - fit.ci95[0])
        assert abs(fit.beta_nl_est) < 2.0 * half

    def test_deterministic(self, fast_protocol_params):
        cfg = ProtocolConfig(master_seed=4, **FAST_CFG)
        grid = np.linspace(0.5, 1.0, 4) * fast_protocol_params.drive_h
        _, fit1 = run_protocol(fast_protocol_params, grid, cfg)
        _, fit2 = run_protocol(fast_protocol_params, grid, cfg)
        assert fit1 == fit2

    def test_too_few_powers(self, fast_protocol_params):
        cfg = ProtocolConfig(master_seed=5, **FAST_CFG)
        with pytest.raises(ProtocolError):
            run_protocol(fast_protocol_params, [1.0, 2.0], cfg)

    def test_diverged_runs_excluded_with_warning(self, fast_protocol_params, monkeypatch):
        # force one drive value to "diverge": the batch falls back to per-run
        # integration, warns, and fits the surviving points
        import gupsim.pipeline as pl
        from gupsim.errors import DivergenceError

        real = pl.simulate_batch
        bad_drive = fast_protocol_params.drive_h  # the largest grid value

        def flaky(params_list, integ, noise, run_indices=None, **kw):
            if any(p.drive_h == bad_drive for p in params_list):
                raise DivergenceError("synthetic instability", step=7)
            return real(params_list, integ, noise, run_indices=run_indices, **kw)

        monkeypatch.setattr(pl, "simulate_batch", flaky)
        cfg = ProtocolConfig(master_seed=12, **FAST_CFG)
        grid = np.linspace(0.5, 1.0, 5) * fast_protocol_params.drive_h
        with pytest.warns(UserWarning, match="diverged"):
            scatter, fit = run_protocol(fast_protocol_params, grid, cfg)
        assert len(scatter) == 4
        assert all(p["power"] != bad_drive for p in scatter.provenance)

    def test_all_runs_diverged_is_protocol_error(self, fast_protocol_params, monkeypatch):
        import gupsim.pipeline as pl
        from gupsim.errors import DivergenceError

        def always_bad(*a, **kw):
            raise DivergenceError("synthetic instability", step=1)

        monkeypatch.setattr(pl, "simulate_batch", always_bad)
        cfg = ProtocolConfig(master_seed=13, **FAST_CFG)
        grid = np.linspace(0.5, 1.0, 4) * fast_protocol_params.drive_h
        with pytest.raises(ProtocolError), pytest.warns(UserWarning):
            run_protocol(fast_protocol_params, grid, cfg)

    def test_csv_round_trip(self, fast_protocol_params, tmp_path):
        cfg = ProtocolConfig(master_seed=6, **FAST_CFG)
        grid = np.linspace(0.5, 1.0, 4) * fast_protocol_params.drive_h
        scatter, fit = run_protocol(fast_protocol_params, grid, cfg)
        spath = tmp_path / "scatter.csv"
        fpath = tmp_path / "fit.csv"
        scatter_to_csv(spath, scatter)
        fit_to_csv(fpath, fit)
        srows = spath.read_text().strip().splitlines()
        assert srows[0].startswith("amp_sq")
        assert len(srows) == 1 + len(scatter)
        frow = fpath.read_text().strip().splitlines()[1].split(",")
        assert float(frow[1]) == pytest.approx(fit.beta_nl_est)


class TestSyntheticLorentzianInversion:
    def test_recovers_beta_from_shifted_lines(self):
        # bypass the dynamics entirely: synthetic noise-free Lorentzians whose
        # centers follow the amplitude-shift law must invert to beta_nl at the
        # 1e-3 level through the peak finder and the regression
        from gupsim import Spectrum, find_peak, lorentzian_spectrum, predicted_shift

        beta, om_bar, gamma = 1e-15, 1.0, 1e-3
        amps2 = np.linspace(2e9, 2e10, 9)
        binw = gamma / 10.0
        freqs = om_bar + np.arange(-400, 400) * binw
        xs, ys, ss = [], [], []
        for a2 in amps2:
            center = predicted_shift(om_bar, beta, math.sqrt(a2))
            psd = lorentzian_spectrum(freqs, center, gamma, 40.0)
            est = find_peak(Spectrum(freqs=freqs, psd=psd), method="parabolic")
            xs.append(a2)
            ys.append(est.omega_peak)
            ss.append(est.uncertainty)
        fit = linear_fit(make_scatter(xs, ys, ss), omega_bar=om_bar)
        assert fit.beta_nl_est == pytest.approx(beta, rel=1e-3)
        # every residual stays below the propagated peak-location uncertainty
        resid = np.abs(np.array(ys) - (fit.intercept + fit.slope * np.array(xs)))
        assert np.all(resid <= np.array(ss) + 1e-12)


class TestResolutionSweep:
    def test_boundary_flags(self, fast_protocol_params):
        cfg = ProtocolConfig(master_seed=7, **FAST_CFG)
        grid = np.linspace(0.5, 1.0, 4) * fast_protocol_params.drive_h
        betas = [1e-12, 1e-11]
        sweep_hi = resolution_sweep(fast_protocol_params, betas, grid,
                                    threshold=1.1, cfg=cfg)
        assert not sweep_hi.crossed
        assert sweep_hi.boundary == "not_reached"
        assert sweep_hi.beta_lim == pytest.approx(1e-11)
        sweep_lo = resolution_sweep(fast_protocol_params, betas, grid,
                                    threshold=-0.5, cfg=cfg)
        assert sweep_lo.crossed
        assert sweep_lo.boundary == "at_lower_edge"
        assert sweep_lo.beta_lim == pytest.approx(1e-12)

    def test_parallel_workers_match_serial(self, fast_protocol_params):
        cfg = ProtocolConfig(master_seed=9, **FAST_CFG)
        grid = np.linspace(0.5, 1.0, 4) * fast_protocol_params.drive_h
        betas = [1e-10, 1e-9]
        serial = resolution_sweep(fast_protocol_params, betas, grid, cfg=cfg, workers=1)
        parallel = resolution_sweep(fast_protocol_params, betas, grid, cfg=cfg, workers=2)
        assert np.array_equal(serial.r_squared, parallel.r_squared)
        assert serial.beta_lim == parallel.beta_lim

    def test_interpolated_crossing_between_grid_points(self, fast_protocol_params):
        # null R^2 follows Beta(1/2,(n-2)/2), so the low arm needs enough
        # scatter points (8 powers x 5 seeds) to sit below 0.1 dependably
        cfg = ProtocolConfig(master_seed=8, **{**FAST_CFG, "seeds_per_point": 5})
        grid = np.linspace(0.4, 1.0, 8) * fast_protocol_params.drive_h
        # bracket the transition: tiny beta -> noise, large beta -> clean line
        betas = [1e-11, 1e-8]
        sweep = resolution_sweep(fast_protocol_params, betas, grid, threshold=0.1, cfg=cfg)
        assert sweep.crossed and sweep.boundary is None
        assert betas[0] < sweep.beta_lim < betas[1]
        assert sweep.r_squared[0] < 0.1 < sweep.r_squared[1]