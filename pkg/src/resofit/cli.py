"""Command-line front end: ``resofit <command> [options]``.

Options can also come from a JSON config file (``--config``) whose keys are
the option names with underscores, e.g. ``{"command": "fano", "input":
"trace.s1p", "eps": 0.01}``. Flags given on the command line win over the
file.

Exit status: 0 success, 2 configuration error, 3 parse error, 4 fit
failure, 5 I/O error. Failures print a JSON error report on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import circlefit, model, photon, quasiparticle, traces
from .errors import (FitError, InputFileError, ManifestError, ModelError,
                     ParseError, ResofitError)

log = logging.getLogger("resofit")

EXIT_OK, EXIT_CONFIG, EXIT_PARSE, EXIT_FIT, EXIT_IO = 0, 2, 3, 4, 5
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}


class ConfigError(ResofitError):
    code = "cli.config"


class OutputError(ResofitError, OSError):
    code = "cli.io"


class _Parser(argparse.ArgumentParser):
    """Argument errors become ConfigError so they get the JSON error report."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _add_output(p):
    p.add_argument("--output", metavar="PATH",
                   help="write the report here instead of standard output")
    p.add_argument("--format", choices=("json", "csv"),
                   help="report format (default: json)")
    p.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                   help="JSON file supplying defaults for any option")


def _add_trace_input(p):
    p.add_argument("--input", metavar="PATH",
                   help="reflection trace: Touchstone .s1p or CSV freq_hz,re,im")
    p.add_argument("--input-format", choices=("auto", "touchstone", "csv"),
                   help="trace file format (default: auto, from the file extension)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="resofit",
        description="Fit single-port resonator reflection data.")
    parser.add_argument("--config", metavar="PATH", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("fit", help="fit one reflection trace")
    _add_trace_input(p)
    _add_output(p)

    p = sub.add_parser("fano", help="Q_i uncertainty envelope from a leakage background")
    _add_trace_input(p)
    p.add_argument("--eps", type=float, metavar="AMPL",
                   help="background amplitude relative to the off-resonant "
                        "level (dimensionless, required)")
    p.add_argument("--n-phases", type=int, metavar="N",
                   help="background phases tried, at least 8 (default: 16)")
    _add_output(p)

    p = sub.add_parser("sweep", help="Q_i versus photon number from a sweep manifest")
    p.add_argument("--manifest", metavar="PATH",
                   help="JSON manifest listing traces with source power (dBm), "
                        "line attenuation (dB) and temperature (K)")
    p.add_argument("--eps", type=float, metavar="AMPL",
                   help="Fano background amplitude for the Q_i bounds "
                        "(dimensionless, required; 0 disables the bounds)")
    p.add_argument("--n-phases", type=int, metavar="N",
                   help="background phases tried, at least 8 (default: 16)")
    p.add_argument("--workers", type=int, metavar="N",
                   help="parallel fitting processes (default: CPU count)")
    _add_output(p)

    p = sub.add_parser("tempfit", help="quasi-particle fit of a temperature sweep")
    p.add_argument("--input", metavar="PATH",
                   help="CSV with columns temperature_k (K), delta_f_hz (Hz), q_i")
    p.add_argument("--f0-hz", type=float, metavar="HZ",
                   help="resonance frequency at base temperature (Hz, required)")
    p.add_argument("--t-cutoff-k", type=float, metavar="K",
                   help="ignore points above this temperature (K, default: none)")
    p.add_argument("--tc-init-k", type=float, metavar="K",
                   help="starting critical temperature (K)")
    p.add_argument("--alpha-init", type=float, metavar="FRAC",
                   help="starting kinetic inductance fraction (dimensionless)")
    p.add_argument("--a-qp-init", type=float, metavar="A",
                   help="starting quasi-particle loss scale (dimensionless)")
    p.add_argument("--q-other-init", type=float, metavar="Q",
                   help="starting residual quality factor (dimensionless)")
    _add_output(p)

    p = sub.add_parser("synth", help="write a synthetic Touchstone trace")
    p.add_argument("--f0-hz", type=float, metavar="HZ", help="resonance frequency (Hz)")
    p.add_argument("--q-total", type=float, metavar="Q", help="loaded quality factor")
    p.add_argument("--q-c", type=float, metavar="Q", help="coupling quality factor")
    p.add_argument("--delay-s", type=float, metavar="S", help="cable delay (s, default 0)")
    p.add_argument("--amp", type=float, metavar="A",
                   help="off-resonant amplitude (dimensionless, default 1)")
    p.add_argument("--phase-rad", type=float, metavar="RAD",
                   help="global phase offset (rad, default 0)")
    p.add_argument("--fano-eps", type=float, metavar="AMPL",
                   help="leakage background amplitude (dimensionless, default 0)")
    p.add_argument("--fano-phase-rad", type=float, metavar="RAD",
                   help="leakage background phase (rad, default 0)")
    p.add_argument("--noise-sigma", type=float, metavar="SIGMA",
                   help="Gaussian noise per quadrature (dimensionless, default 0)")
    p.add_argument("--seed", type=int, metavar="INT", help="noise seed (default 0)")
    p.add_argument("--n-points", type=int, metavar="N",
                   help="number of frequency points (default 1001)")
    p.add_argument("--span-linewidths", type=float, metavar="X",
                   help="span in units of f0/q_total, centred on f0 (default 10)")
    p.add_argument("--unit", choices=tuple(traces.FREQ_UNITS),
                   help="Touchstone frequency unit (default GHZ)")
    p.add_argument("--touchstone-format", choices=traces.SAMPLE_FORMATS,
                   help="Touchstone sample format (default RI)")
    p.add_argument("--output", metavar="PATH",
                   help="write the .s1p here instead of standard output")
    p.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                   help="JSON file supplying defaults for any option")

    p = sub.add_parser("lumped", help="resonance frequency of the lumped L-(C1+C2) circuit")
    p.add_argument("--l-h", type=float, metavar="H", help="inductance (H)")
    p.add_argument("--c1-f", type=float, metavar="F", help="first capacitance (F)")
    p.add_argument("--c2-f", type=float, metavar="F", help="second capacitance (F)")
    _add_output(p)
    return parser


DEFAULTS = {
    "format": "json", "input_format": "auto", "n_phases": 16, "delay_s": 0.0,
    "amp": 1.0, "phase_rad": 0.0, "fano_eps": 0.0, "fano_phase_rad": 0.0,
    "noise_sigma": 0.0, "seed": 0, "n_points": 1001, "span_linewidths": 10.0,
    "unit": "GHZ", "touchstone_format": "RI",
}


def resolve_config(argv):
    """Merge built-in defaults, the config file and explicit flags."""
    parser = build_parser()
    if _leading_command(argv) is None:
        # the command may come from the config file; parse the flags with
        # that command's options once it is known
        pre = _Parser(add_help=False)
        pre.add_argument("--config")
        config_path = pre.parse_known_args(argv)[0].config
        file_cfg = _read_config(config_path)
        command = file_cfg.get("command")
        if command is None:
            raise ConfigError("no command given")
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r} in config")
        args = parser.parse_args([command] + list(argv))
    else:
        args = parser.parse_args(argv)
        command = args.command
        file_cfg = _read_config(getattr(args, "config", None))
        if file_cfg.get("command", command) != command:
            raise ConfigError(
                f"config is for {file_cfg['command']!r}, command line asks for {command!r}")

    known = set(vars(args)) - {"command", "config"}
    unknown = set(file_cfg) - known - {"command"}
    if unknown:
        raise ConfigError(f"unknown option(s) in config: {', '.join(sorted(unknown))}")
    cfg = {k: v for k, v in DEFAULTS.items() if k in known}
    cfg.update({k: v for k, v in file_cfg.items() if k != "command"})
    cfg.update({k: v for k, v in vars(args).items() if v is not None and k in known})
    cfg["command"] = command
    return cfg


def _leading_command(argv):
    i = 0
    while i < len(argv):
        token = argv[i]
        if token == "--config":
            i += 2
        elif token.startswith("--config="):
            i += 1
        else:
            return token if token in COMMANDS else None
    return None


def _read_config(path):
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputFileError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _require(cfg, *names):
    missing = [n for n in names if cfg.get(n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ConfigError(f"{cfg['command']}: missing required option(s) {flags}")


def _read(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputFileError(f"cannot read {path}: {exc.strerror}") from None


def _load_trace(cfg):
    _require(cfg, "input")
    path = cfg["input"]
    fmt = cfg.get("input_format", "auto")
    if fmt == "auto":
        fmt = "csv" if str(path).lower().endswith(".csv") else "touchstone"
    return traces.PARSERS[fmt](_read(path))


def _cmd_fit(cfg):
    return traces.emit_results(circlefit.fit_reflection(_load_trace(cfg)), cfg["format"])


def _cmd_fano(cfg):
    _require(cfg, "eps")
    env = circlefit.fano_envelope(_load_trace(cfg), float(cfg["eps"]), int(cfg["n_phases"]))
    return traces.emit_results(env, cfg["format"])


def _cmd_sweep(cfg):
    _require(cfg, "manifest", "eps")
    manifest = Path(cfg["manifest"])
    records = traces.load_manifest(_read(manifest), base_dir=manifest.parent)
    if not records:
        raise FitError("manifest lists no records")
    workers = int(cfg.get("workers") or os.cpu_count() or 1)
    points, failures = photon.sweep_points(
        records, float(cfg["eps"]), int(cfg["n_phases"]), workers)
    for fail in failures:
        log.warning("record %d (%s) failed [%s]: %s",
                    fail.index, fail.label, fail.code, fail.message)
    if not points:
        raise FitError("every record in the sweep failed: " +
                       "; ".join(f"[{f.index}] {f.message}" for f in failures))
    if cfg["format"] == "csv":
        return traces.emit_results(points, "csv")
    return traces.emit_results({"points": points, "failures": failures}, "json")


def _cmd_tempfit(cfg):
    _require(cfg, "input", "f0_hz")
    points = quasiparticle.parse_temperature_csv(_read(cfg["input"]))
    init_keys = ("tc_init_k", "alpha_init", "a_qp_init", "q_other_init")
    init = None
    if any(cfg.get(k) is not None for k in init_keys):
        base = quasiparticle.default_init(points)
        init = quasiparticle.QuasiparticleParams(
            cfg.get("tc_init_k") or base.t_c_k,
            cfg.get("alpha_init") or base.alpha,
            cfg.get("a_qp_init") or base.a_qp,
            cfg.get("q_other_init") or base.q_other)
    fit = quasiparticle.joint_fit(points, float(cfg["f0_hz"]), init, cfg.get("t_cutoff_k"))
    row = {
        "t_c_k": fit.params.t_c_k, "alpha": fit.params.alpha,
        "a_qp": fit.params.a_qp, "q_other": fit.params.q_other,
        "rms_delta_f_hz": fit.rms_delta_f_hz, "rms_log_q_i": fit.rms_log_q_i,
        "n_points": fit.n_points, "n_iter": fit.n_iter,
        "converged": fit.converged, "at_bound": ";".join(fit.at_bound),
    }
    return traces.emit_results(row, cfg["format"])


def _cmd_synth(cfg):
    _require(cfg, "f0_hz", "q_total", "q_c")
    params = model.ResonatorParams(float(cfg["f0_hz"]), float(cfg["q_total"]),
                                   float(cfg["q_c"]))
    env = model.EnvironmentParams(
        delay_s=float(cfg["delay_s"]), amp=float(cfg["amp"]),
        phase_rad=float(cfg["phase_rad"]), fano_eps=float(cfg["fano_eps"]),
        fano_phase_rad=float(cfg["fano_phase_rad"]),
        noise_sigma=float(cfg["noise_sigma"]), seed=int(cfg["seed"]))
    grid = model.linewidth_grid(params, int(cfg["n_points"]), float(cfg["span_linewidths"]))
    trace = model.synthesize(params, env, grid)
    comments = [f"synthetic trace: f0_hz={params.f0_hz!r} q_total={params.q_total!r} "
                f"q_c={params.q_c!r}",
                f"environment: delay_s={env.delay_s!r} amp={env.amp!r} "
                f"phase_rad={env.phase_rad!r} fano_eps={env.fano_eps!r} "
                f"fano_phase_rad={env.fano_phase_rad!r} "
                f"noise_sigma={env.noise_sigma!r} seed={env.seed}"]
    return traces.write_touchstone(trace, cfg["unit"], cfg["touchstone_format"],
                                   comments=comments)


def _cmd_lumped(cfg):
    _require(cfg, "l_h", "c1_f", "c2_f")
    elements = model.LumpedElements(float(cfg["l_h"]), float(cfg["c1_f"]),
                                    float(cfg["c2_f"]))
    row = {"l_h": elements.l_h, "c1_f": elements.c1_f, "c2_f": elements.c2_f,
           "f0_hz": float(model.lumped_f0(elements))}
    return traces.emit_results(row, cfg["format"])


COMMANDS = {"fit": _cmd_fit, "fano": _cmd_fano, "sweep": _cmd_sweep,
            "tempfit": _cmd_tempfit, "synth": _cmd_synth, "lumped": _cmd_lumped}


def _exit_status(exc):
    if isinstance(exc, (InputFileError, OSError)):
        return EXIT_IO
    if isinstance(exc, (ParseError, ManifestError)):
        return EXIT_PARSE
    if isinstance(exc, FitError):
        return EXIT_FIT
    return EXIT_CONFIG  # ConfigError, ModelError and bad option values


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = resolve_config(argv)
        report = COMMANDS[cfg["command"]](cfg)
        if cfg.get("output"):
            try:
                Path(cfg["output"]).write_text(report, encoding="utf-8")
            except OSError as exc:
                raise OutputError(
                    f"cannot write {cfg['output']}: {exc.strerror}") from None
        else:
            stdout.write(report)
        return EXIT_OK
    except (ResofitError, ModelError, ValueError, OSError) as exc:
        status = _exit_status(exc)
        code = getattr(exc, "code", "cli.config" if status == EXIT_CONFIG else "cli.io")
        err = {"status": "error", "exit_code": status, "code": code, "message": str(exc)}
        stderr.write(json.dumps(err) + "\n")
        return status


def main():
    level = os.environ.get("RESOFIT_LOG", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
