"""Command-line front end.

    nvtorque <subcommand> --config run.toml [--out DIR] [--format csv|json] [--seed N]

Each run writes one output file plus ``<name>.meta.json`` describing it.
Exit status: 0 success, 1 usage error, 2 configuration or output-path
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, SweepSection, load_config, parse_config
from .constants import TWO_PI
from .inverse import InverseError, TorqueModel, fit_field_from_dips, fit_polarized_spins
from .mech import added_mass, detection_limits, thermal_rms, thermal_spectrum
from .nvcore import InputError, eigensolve, eigenstate_torques, moment_change, odmr_spectrum
from .signal import (
    DriveConfig,
    displacement_response,
    fmmdmr_sweep,
    power_scan,
    quadratures_at_resonance,
    simulate_quadratures,
    transition_force,
)
from .spindyn import (
    IntegrationDiverged,
    SpinDynamicsError,
    gamma_tot,
    integrate_bloch,
    relaxation_rate,
    steady_state,
)
from .trace import SignalTrace, TraceError

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

DEFAULT_SWEEPS = {
    "odmr": SweepSection(abscissa="mw_frequency", start=2.5e9, stop=3.25e9, points=3001),
    "torque-map": SweepSection(abscissa="theta", start=0.0, stop=90.0, points=91),
    "fmmdmr": SweepSection(abscissa="mw_frequency", start=2.6e9, stop=3.15e9, points=1101),
    "power-scan": SweepSection(abscissa="power", start=-10.0, stop=35.0, points=50),
    "psd": SweepSection(abscissa="frequency", start=2000.0, stop=3700.0, points=1701),
    "fit-spins": SweepSection(abscissa="theta", start=5.0, stop=85.0, points=17),
}
ALLOWED_ABSCISSA = {
    "odmr": {"mw_frequency"},
    "torque-map": {"theta", "field"},
    "fmmdmr": {"mw_frequency"},
    "power-scan": {"power", "rabi"},
    "psd": {"frequency"},
    "fit-spins": {"theta", "field"},
}
ORACLE_TOLERANCE = 0.02


class NumericalFailure(RuntimeError):
    """A computation finished but failed its acceptance check."""

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


def _sweep(cfg: RunConfig, command: str) -> SweepSection:
    sweep = cfg.sweep or DEFAULT_SWEEPS[command]
    if sweep.abscissa not in ALLOWED_ABSCISSA[command]:
        allowed = ", ".join(sorted(ALLOWED_ABSCISSA[command]))
        raise ConfigError(f"sweep.abscissa: {command} accepts {allowed}, got {sweep.abscissa!r}")
    return sweep


def _field_at(cfg: RunConfig, amplitude_mT: float | None = None, theta_deg: float | None = None):
    f = cfg.field
    upd = {}
    if amplitude_mT is not None:
        upd["amplitude"] = float(amplitude_mT)
    if theta_deg is not None:
        upd["theta"] = float(theta_deg)
    return cfg.model_copy(update={"field": f.model_copy(update=upd)}).static_field()


# -- subcommands ---------------------------------------------------------------

def cmd_odmr(cfg: RunConfig):
    """Optically detected resonance spectrum versus microwave frequency."""
    grid = _sweep(cfg, "odmr").grid()
    return odmr_spectrum(cfg.nv_params(), cfg.static_field(), grid,
                         contrast=cfg.odmr.contrast, linewidth=cfg.odmr.linewidth)


def cmd_torque_map(cfg: RunConfig):
    """Eigenstate torques and driven torque changes versus field angle or amplitude."""
    sweep = _sweep(cfg, "torque-map")
    nv = cfg.nv_params()
    c = cfg.field.class_index
    names = ("tau_0", "tau_m1", "tau_p1", "dtau_minus", "dtau_plus")
    cols = {n: [] for n in names}
    for x in sweep.grid():
        field = _field_at(cfg, theta_deg=x) if sweep.abscissa == "theta" else _field_at(cfg, amplitude_mT=x)
        sol = eigensolve(nv, field, c)
        tq = eigenstate_torques(sol, field, nv.N_per_class)
        cols["tau_0"].append(tq.norms["0"])
        cols["tau_m1"].append(tq.norms["-1"])
        cols["tau_p1"].append(tq.norms["+1"])
        for tr in ("minus", "plus"):
            dt = nv.N_per_class * np.cross(moment_change(sol, tr), field.vector)
            cols[f"dtau_{tr}"].append(float(np.linalg.norm(dt)))
    unit = "deg" if sweep.abscissa == "theta" else "mT"
    return SignalTrace(sweep.abscissa, unit, sweep.grid(), cols, {n: "N m" for n in names},
                       {"class_index": str(c)})


def cmd_fmmdmr(cfg: RunConfig):
    """Lock-in X and Y quadratures of the FM-modulated resonance versus microwave frequency."""
    grid = _sweep(cfg, "fmmdmr").grid()
    rates = cfg.rate_set()
    if cfg.background.laser_off:
        rates = rates.with_(gamma_las=0.0)
    return fmmdmr_sweep(cfg.nv_params(), cfg.static_field(), rates, cfg.drive_config(),
                        cfg.cantilever_params(), grid, background=cfg.spurious_background())


def _force(cfg: RunConfig, drive: DriveConfig) -> float:
    return transition_force(cfg.nv_params(), cfg.static_field(), drive.class_index, drive.transition,
                            cfg.cantilever_params())


def cmd_quadratures(cfg: RunConfig):
    """Closed-form X and Y at the mechanical resonance for the configured drive."""
    drive = cfg.drive_config()
    cant = cfg.cantilever_params()
    rates = cfg.rate_set().with_(Omega=drive.rabi)
    f_y = _force(cfg, drive)
    q = quadratures_at_resonance(rates, drive, f_y, cant)
    dx = complex(displacement_response(drive.modulation(cant), rates, drive, f_y, cant))
    return {
        "F_y_N": f_y,
        "X_m": q.X,
        "Y_m": q.Y,
        "Y_over_X": q.Y / q.X if q.X else float("nan"),
        "gamma_tot_rad_s": gamma_tot(rates),
        "omega_m_rad_s": cant.omega_m,
        "response_X_m": dx.real,
        "response_Y_m": dx.imag,
    }


def cmd_power_scan(cfg: RunConfig):
    """X, Y and their ratio versus microwave power or Rabi frequency."""
    sweep = _sweep(cfg, "power-scan")
    drive = cfg.drive_config()
    grid = sweep.grid()
    if sweep.abscissa == "power":
        omega = drive.kappa * 10.0 ** (grid / 20.0)
        abscissa = ("power", "dBm", grid)
    else:
        omega = TWO_PI * grid
        abscissa = ("rabi", "Hz", grid)
    return power_scan(cfg.rate_set(), drive, omega, _force(cfg, drive), cfg.cantilever_params(),
                      abscissa=abscissa)


def cmd_psd(cfg: RunConfig):
    """Thermal displacement noise spectrum of the loaded cantilever."""
    return thermal_spectrum(cfg.cantilever_params(), _sweep(cfg, "psd").grid())


def cmd_fit_field(cfg: RunConfig):
    """Recover field amplitude and angle from a pair of resonance dips."""
    fit = cfg.fit
    if fit.f_minus is None or fit.f_plus is None:
        raise ConfigError("fit.f_minus and fit.f_plus are required for fit-field")
    r = fit_field_from_dips(fit.f_minus, fit.f_plus, cfg.nv_params(), tol=fit.tolerance)
    rec = {
        "B0_mT": r.B0 * 1e3,
        "theta_deg": math.degrees(r.theta),
        "residual_Hz": r.residual,
        "iterations": r.iterations,
        "converged": r.converged,
    }
    if not r.converged:
        raise NumericalFailure(f"field fit did not converge (residual {r.residual:.3e} Hz)", rec)
    return rec


def _read_trace(path: str) -> SignalTrace:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        return SignalTrace.from_json_text(text)
    return SignalTrace.from_csv_text(text)


def cmd_fit_spins(cfg: RunConfig):
    """Fit the polarized spin count to a torque curve."""
    fit = cfg.fit
    nv = cfg.nv_params()
    d = cfg.drive
    model = TorqueModel(nv, variable=fit.variable, amplitude=cfg.field.amplitude * 1e-3,
                        theta=math.radians(cfg.field.theta), class_index=cfg.field.class_index,
                        transition=d.transition, quantity=fit.quantity)
    if fit.data is not None:
        try:
            data = _read_trace(fit.data)
        except OSError as exc:
            raise ConfigError(f"fit.data: cannot read {fit.data!r}: {exc.strerror}") from None
        source = fit.data
    else:
        sweep = _sweep(cfg, "fit-spins")
        if (sweep.abscissa == "theta") != (fit.variable == "theta"):
            raise ConfigError("sweep.abscissa must match fit.variable")
        unit = "deg" if fit.variable == "theta" else "mT"
        grid = sweep.grid()
        clean = model.curve(grid, nv.N_per_class, unit)
        rng = np.random.default_rng(cfg.seed)
        noisy = clean + fit.noise * np.abs(clean).max() * rng.normal(size=clean.size)
        data = SignalTrace(fit.variable, unit, grid, {fit.channel: noisy}, {fit.channel: "N m"}, {})
        source = "synthetic"
    r = fit_polarized_spins(data, model, fit.channel)
    return {"N_fit": r.N_fit, "standard_error": r.standard_error, "residual_N_m": r.residual,
            "points": len(data), "source": source}


def cmd_sensitivity(cfg: RunConfig):
    """Thermally limited force and torque sensitivity."""
    cant = cfg.cantilever_params()
    f_min, tau_min = detection_limits(cant)
    print(f"F_min = {f_min:.6e} N/sqrt(Hz)")
    print(f"tau_min = {tau_min:.6e} N m/sqrt(Hz)")
    return {
        "F_min_N_per_rtHz": f_min,
        "tau_min_N_m_per_rtHz": tau_min,
        "thermal_rms_m": thermal_rms(cant),
        "added_mass_kg": added_mass(cant.f0, cant.fm, cant.me),
        "effective_length_m": cant.le,
    }


def cmd_oracle_check(cfg: RunConfig):
    """Analytic formulas against the integrators; fails above 2% mismatch."""
    nv = cfg.nv_params()
    cant = cfg.cantilever_params()
    base = cfg.drive_config()
    depth = min(base.fm_depth, nv.Gamma2star / (TWO_PI * 100.0))
    drive = DriveConfig(mw_center=base.mw_center, fm_depth=depth, mod_freq=base.mod_freq,
                        omega_rabi=base.omega_rabi, power_dbm=base.power_dbm, kappa=base.kappa,
                        transition=base.transition, class_index=base.class_index)
    rates = cfg.rate_set().with_(Omega=drive.rabi, Delta=nv.Gamma2star)
    f_y = _force(cfg, drive)
    analytic = quadratures_at_resonance(rates, drive, f_y, cant)
    sim = simulate_quadratures(rates, drive, f_y, cant)
    err_x = abs(sim.X / analytic.X - 1.0)
    err_y = abs(sim.Y / analytic.Y - 1.0)
    gt = gamma_tot(rates)
    traj = integrate_bloch(rates, t_span=(0.0, 20.0 / min(gt, relaxation_rate(rates))), record_every=1000)
    ss_err = abs(traj.rho_ee[-1] - steady_state(rates).rho_ee)
    rec = {
        "fm_depth_Hz": depth,
        "analytic_X_m": analytic.X,
        "analytic_Y_m": analytic.Y,
        "simulated_X_m": sim.X,
        "simulated_Y_m": sim.Y,
        "relative_error_X": err_x,
        "relative_error_Y": err_y,
        "steady_state_error": ss_err,
        "tolerance": ORACLE_TOLERANCE,
    }
    ok = err_x <= ORACLE_TOLERANCE and err_y <= ORACLE_TOLERANCE and ss_err <= 1e-6
    rec["passed"] = bool(ok)
    print(f"oracle-check: X {err_x:.2%}, Y {err_y:.2%}, steady state {ss_err:.1e} -> "
          f"{'PASS' if ok else 'FAIL'}")
    if not ok:
        raise NumericalFailure("analytic and time-domain results disagree", rec)
    return rec


COMMANDS = {
    "odmr": cmd_odmr,
    "torque-map": cmd_torque_map,
    "fmmdmr": cmd_fmmdmr,
    "quadratures": cmd_quadratures,
    "power-scan": cmd_power_scan,
    "psd": cmd_psd,
    "fit-field": cmd_fit_field,
    "fit-spins": cmd_fit_spins,
    "sensitivity": cmd_sensitivity,
    "oracle-check": cmd_oracle_check,
}


# -- output ----------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(payload, fmt: str, meta: dict) -> str:
    """Serialize a trace or a flat result record deterministically."""
    if isinstance(payload, SignalTrace):
        payload = SignalTrace(payload.abscissa_name, payload.abscissa_unit, payload.abscissa,
                              payload.channels, payload.units, {**payload.metadata, **meta})
        return payload.to_json_text() if fmt == "json" else payload.to_csv_text()
    if fmt == "json":
        return json.dumps({"metadata": dict(sorted(meta.items())), "record": payload},
                          indent=1, sort_keys=True) + "\n"
    lines = [f"# {k}={meta[k]}" for k in sorted(meta)]
    lines.append("quantity,value")
    lines += [f"{k},{_fmt(payload[k])}" for k in payload]
    return "\n".join(lines) + "\n"


def write_outputs(command: str, cfg: RunConfig, payload) -> Path:
    out_dir = Path(cfg.output.directory)
    fmt = cfg.output.format
    digest = cfg.sha256()
    meta = {"config_sha256": digest, "subcommand": command, "seed": str(cfg.seed)}
    text = render(payload, fmt, meta)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = command.replace("-", "_")
    path = out_dir / f"{stem}.{fmt}"
    path.write_bytes(text.encode("utf-8"))
    sidecar = {
        "config": cfg.resolved(),
        "config_sha256": digest,
        "format": fmt,
        "output_file": path.name,
        "output_sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        "seed": cfg.seed,
        "subcommand": command,
        "version": __version__,
    }
    (out_dir / f"{stem}.meta.json").write_bytes(
        (json.dumps(sidecar, indent=1, sort_keys=True) + "\n").encode("utf-8"))
    return path


# -- entry point -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nvtorque", description="NV ensemble spin-mechanics simulations")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().split("\n")[0].replace("%", "%%") or None)
        p.add_argument("--config", help="TOML run configuration (defaults if omitted)")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--format", choices=("csv", "json"), help="output format")
        p.add_argument("--seed", type=int, help="seed for stochastic channels")
    return parser


def resolve_config(args) -> RunConfig:
    if args.config:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc.strerror}") from None
    else:
        cfg = parse_config("")
    out = {}
    if args.out is not None:
        out["directory"] = args.out
    if args.format is not None:
        out["format"] = args.format
    upd = {}
    if out:
        upd["output"] = cfg.output.model_copy(update=out)
    if args.seed is not None:
        upd["seed"] = args.seed
    return cfg.model_copy(update=upd) if upd else cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        payload = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        if exc.payload is not None:
            try:
                write_outputs(args.command, cfg, exc.payload)
            except OSError:
                pass
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SpinDynamicsError, IntegrationDiverged, InverseError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, TraceError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        path = write_outputs(args.command, cfg, payload)
    except OSError as exc:
        print(f"cannot write output to {cfg.output.directory!r}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
