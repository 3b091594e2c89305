"""Command-line front end.

Subcommands: simulate, analyze, protocol, sweep, scenario, validate.
Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 partial failure.  GUPSIM_OUTPUT_DIR sets the default output directory.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .container import read_trajectory, write_slow_series, write_trajectory
from .errors import ConfigError, DivergenceError, NumericalError
from .modes import slow_amplitudes, time_avg_amplitude
from .params import load_config, params_from_config
from .pipeline import (
    ProtocolConfig,
    fit_to_csv,
    resolution_sweep,
    run_protocol,
    scatter_to_csv,
)
from .scenarios import SCALES, SCENARIOS, ScenarioConfig, run_scenario
from .sde import IntegratorConfig, NoiseSettings, dt_bound, simulate
from .spectra import WelchConfig, spectrum_to_csv, welch_spectrum

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_PARTIAL = 4


def _default_out() -> str:
    return os.environ.get("GUPSIM_OUTPUT_DIR", ".")


def _add_common(sub):
    sub.add_argument("--config", help="flat key = value parameter file")
    sub.add_argument("--seed", type=int, default=0, help="master seed")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")


def _load_params(args):
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    params, si = params_from_config(cfg)
    return params, si


def _echo_params(params):
    for name in params.__dataclass_fields__:
        print(f"  {name} = {getattr(params, name):.5g}")


def cmd_validate(args) -> int:
    params, si = _load_params(args)
    print("resolved dimensionless parameters:")
    _echo_params(params)
    if si is not None:
        print(f"  (SI context: omega_b = {si.omega_b_si:g} Hz, T = {si.temperature:g} K)")
    if params.kappa < 2.0 * max(params.omega_b1, params.omega_b2) and params.drive_h > 0:
        print("note: sideband-resolved regime; transient heating may be slow to settle")
    return EXIT_OK


def cmd_simulate(args) -> int:
    params, _ = _load_params(args)
    out = args.out or _default_out()
    os.makedirs(out, exist_ok=True)
    gamma = params.gamma_bar
    integ = IntegratorConfig(
        dt=0.99 * dt_bound(params),
        t_total=(args.gamma_t + args.discard_gamma_t) / gamma,
        t_discard=args.discard_gamma_t / gamma,
    )
    traj = simulate(params, integ, NoiseSettings(seed=args.seed))
    path = os.path.join(out, "trajectory.omg")
    write_trajectory(path, traj)
    if args.csv:
        traj.to_csv(os.path.join(out, "trajectory.csv"))
    print(f"wrote {path} ({len(traj.times)} samples)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    out = args.out or _default_out()
    os.makedirs(out, exist_ok=True)
    traj = read_trajectory(args.trajectory)
    slow = slow_amplitudes(traj, estimate_offsets=not args.no_offsets)
    spath = os.path.join(out, "slow_series.omg")
    write_slow_series(spath, slow)
    rec_dt = slow.times[1] - slow.times[0]
    gamma = traj.params.gamma_bar
    duration = slow.times[-1] - slow.times[0]
    seg = min(5.0, 0.25 * duration * gamma)
    wcfg = WelchConfig(segment_length=seg, overlap=0.4 * seg, gamma=gamma)
    spec = welch_spectrum(slow.ad, rec_dt, wcfg, carrier_freq=traj.params.delta2)
    cpath = os.path.join(out, "dark_spectrum.csv")
    spectrum_to_csv(cpath, spec)
    print(f"avg_abs_bright = {time_avg_amplitude(slow.times, slow.ab):.6g}")
    print(f"avg_abs_dark = {time_avg_amplitude(slow.times, slow.ad):.6g}")
    print(f"wrote {spath} and {cpath}")
    return EXIT_OK


def cmd_protocol(args) -> int:
    params, _ = _load_params(args)
    out = args.out or _default_out()
    os.makedirs(out, exist_ok=True)
    grid = np.linspace(args.drive_min, args.drive_max, args.n_powers) * params.drive_h
    cfg = ProtocolConfig(master_seed=args.seed, seeds_per_point=args.seeds_per_point)
    scatter, fit = run_protocol(params, grid, cfg)
    scatter_to_csv(os.path.join(out, "scatter.csv"), scatter)
    fit_to_csv(os.path.join(out, "fit.csv"), fit)
    print(f"beta_nl_est = {fit.beta_nl_est:.6g}  R2 = {fit.r_squared:.4f}")
    if len(scatter) < args.n_powers * args.seeds_per_point:
        print(f"warning: {args.n_powers * args.seeds_per_point - len(scatter)} runs excluded")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_sweep(args) -> int:
    params, _ = _load_params(args)
    out = args.out or _default_out()
    os.makedirs(out, exist_ok=True)
    betas = np.logspace(args.log_beta_min, args.log_beta_max, args.n_betas)
    grid = np.linspace(args.drive_min, args.drive_max, args.n_powers) * params.drive_h
    cfg = ProtocolConfig(master_seed=args.seed, seeds_per_point=args.seeds_per_point)
    sweep = resolution_sweep(params, betas, grid, threshold=args.threshold, cfg=cfg,
                             workers=args.workers)
    with open(os.path.join(out, "r2_vs_beta.csv"), "w", encoding="utf-8") as fh:
        fh.write("beta_nl,r2\n")
        for b, r in zip(sweep.betas, sweep.r_squared):
            fh.write(f"{b:.17g},{r:.17g}\n")
    print(f"beta_nl_lim = {sweep.beta_lim:.6g} (crossed={sweep.crossed}, boundary={sweep.boundary})")
    return EXIT_OK


def cmd_scenario(args) -> int:
    overrides = {}
    for item in args.set or []:
        key, _, val = item.partition("=")
        if not val:
            raise ConfigError(f"override {item!r} must look like key=value")
        overrides[key.strip()] = float(val)
    config_params = None
    if args.config:
        config_params, _ = params_from_config(load_config(args.config))
    cfg = ScenarioConfig(
        scenario=args.name,
        scale=args.scale,
        overrides=overrides,
        master_seed=args.seed,
        output_dir=args.out or _default_out(),
        workers=args.workers,
        allow_long=args.allow_long,
        config_params=config_params,
    )
    manifest = run_scenario(cfg)
    print(f"scenario {args.name} [{args.scale}]: {manifest['status']}")
    for path in manifest["outputs"]:
        print(f"  {path}")
    if manifest["failures"]:
        return EXIT_PARTIAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gupsim",
        description="two-resonator dark-mode simulator and nonlinearity estimation toolkit",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="parse a config file and echo resolved parameters")
    _add_common(v)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", help="integrate one trajectory and store it")
    _add_common(s)
    s.add_argument("--gamma-t", type=float, default=20.0, help="recorded duration in 1/gamma")
    s.add_argument("--discard-gamma-t", type=float, default=3.0)
    s.add_argument("--csv", action="store_true", help="also write a CSV copy")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="demodulate a stored trajectory and estimate spectra")
    _add_common(a)
    a.add_argument("trajectory", help="binary trajectory file")
    a.add_argument("--no-offsets", action="store_true", help="skip static offset estimation")
    a.set_defaults(func=cmd_analyze)

    p = sub.add_parser("protocol", help="run the drive sweep and fit the peak-shift line")
    _add_common(p)
    p.add_argument("--n-powers", type=int, default=8)
    p.add_argument("--drive-min", type=float, default=0.35, help="fraction of configured drive_h")
    p.add_argument("--drive-max", type=float, default=1.0)
    p.add_argument("--seeds-per-point", type=int, default=3)
    p.set_defaults(func=cmd_protocol)

    w = sub.add_parser("sweep", help="resolution sweep over preset beta_nl values")
    _add_common(w)
    w.add_argument("--n-powers", type=int, default=8)
    w.add_argument("--drive-min", type=float, default=0.35)
    w.add_argument("--drive-max", type=float, default=1.0)
    w.add_argument("--seeds-per-point", type=int, default=2)
    w.add_argument("--n-betas", type=int, default=6)
    w.add_argument("--log-beta-min", type=float, default=-11.0)
    w.add_argument("--log-beta-max", type=float, default=-8.5)
    w.add_argument("--threshold", type=float, default=0.1)
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("scenario", help="run a named scenario preset")
    _add_common(c)
    c.add_argument("--name", required=True, choices=SCENARIOS)
    c.add_argument("--scale", default="desk", choices=SCALES)
    c.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="parameter override (repeatable)")
    c.add_argument("--allow-long", action="store_true",
                   help="permit full-scale (very long) runs")
    c.set_defaults(func=cmd_scenario)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
