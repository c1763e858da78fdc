"""Command-line front end producing reproducible figure-data artifacts.

Each subcommand maps a library call onto flat output files: CSV tables for
curves and sweeps, JSON for scalar records, compressed grid dumps for
snapshots.  Every artifact embeds a `# key = value` header echoing the full
run configuration, and identical configurations produce byte-identical
tables.  Durations and snapshot strides accept pi-expressions like
`pi/12` or `2*pi`.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(conditioning, bracketing, norm drift, sector leakage), 4 I/O failure.
Failures print a single machine-readable JSON line to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import io_utils
from .dynamics import (
    BoundaryLeakError,
    GridSpec,
    NormDriftError,
    RampProtocol,
    SectorLeakageError,
    evolve,
    gaussian_packet,
    imaginary_time_ground,
)
from .observables import (
    QuadratureConvergenceError,
    RadialWavefunction,
    current_density,
    ground_velocity_sweep,
    velocity_expectation,
)
from .params import TrapParams, effective_potential
from .radial import (
    BasisConditioningError,
    BracketingError,
    find_crossing,
    ground_state_scan,
    solve_sector,
    spectrum_sweep,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

__all__ = ["RunConfig", "ConfigError", "parse_pi_expression", "main",
           "console_entry"]


class ConfigError(ValueError):
    """Invalid flags, config file, or parameter combination."""


# ---------------------------------------------------------------------------
# pi-expressions

_TOKEN = re.compile(r"\d+(?:\.\d*)?(?:e[+-]?\d+)?|\.\d+(?:e[+-]?\d+)?"
                    r"|pi|[()+\-*/]")


def parse_pi_expression(text: str) -> float:
    """Evaluate a constant arithmetic expression over numbers and pi.

    Supports + - * / and parentheses, e.g. '2*pi', 'pi/12', '1e-3'.
    """
    s = text.strip().lower()
    tokens = _TOKEN.findall(s)
    if not tokens or "".join(tokens) != s.replace(" ", ""):
        raise ConfigError(f"cannot parse numeric expression {text!r}")
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def advance():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        return tok

    def atom():
        tok = peek()
        if tok == "(":
            advance()
            val = expr()
            if peek() != ")":
                raise ConfigError(f"unbalanced parentheses in {text!r}")
            advance()
            return val
        if tok == "pi":
            advance()
            return math.pi
        if tok is None or tok in "+*/)":
            raise ConfigError(f"malformed expression {text!r}")
        if tok == "-":
            advance()
            return -atom()
        advance()
        return float(tok)

    def term():
        val = atom()
        while peek() in ("*", "/"):
            if advance() == "*":
                val *= atom()
            else:
                val /= atom()
        return val

    def expr():
        val = term()
        while peek() in ("+", "-"):
            if advance() == "+":
                val += term()
            else:
                val -= term()
        return val

    result = expr()
    if pos != len(tokens):
        raise ConfigError(f"trailing junk in expression {text!r}")
    return float(result)


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class RunConfig:
    """One fully resolved run; serializes to and from artifact headers."""

    command: str
    nu: float = 0.0
    b: float = 0.0
    m: tuple = (0,)
    m1: int = 0
    m2: int = 1
    m_range: tuple = (-3, 6)
    K: int = 30
    levels: int = 1
    N: int = 256
    L: float = 8.0
    dtau: float = 1e-3
    tau_end: float | None = None
    tau_ramp: float = 5.0
    ramp: str | None = None
    nu_grid: tuple | None = None
    nu_bracket: tuple = (0.0, 5.0)
    xi0: float = 4.0
    packet_width: float = 0.5
    snapshots: float | None = None
    tol: float = 1e-9
    seed: int = 0
    format: str = ""
    out: str | None = None

    def to_header(self) -> dict:
        header = {}
        for f in fields(self):
            header[f.name] = _FORMATTERS.get(f.name, io_utils.format_value)(
                getattr(self, f.name))
        return header

    @classmethod
    def from_header(cls, header: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, raw in header.items():
            if key in known:
                kwargs[key] = _coerce(key, raw)
        return cls(**kwargs)


def _fmt_ints(v):
    return ",".join(str(i) for i in v)


def _fmt_pair(v):
    return "none" if v is None else ":".join(io_utils.format_value(x) for x in v)


_FORMATTERS = {
    "m": _fmt_ints,
    "m_range": lambda v: f"{v[0]}:{v[1]}",
    "nu_grid": _fmt_pair,
    "nu_bracket": _fmt_pair,
}

_FLOAT_FIELDS = {"nu", "b", "L", "dtau", "tau_ramp", "xi0", "packet_width",
                 "tol"}
_OPTIONAL_FLOAT_FIELDS = {"tau_end", "snapshots"}
_INT_FIELDS = {"m1", "m2", "K", "levels", "N", "seed"}
_OPTIONAL_STR_FIELDS = {"ramp", "out"}


def _coerce(name: str, raw: str):
    raw = raw.strip()
    try:
        if name in _FLOAT_FIELDS:
            return parse_pi_expression(raw)
        if name in _OPTIONAL_FLOAT_FIELDS:
            return None if raw == "none" else parse_pi_expression(raw)
        if name in _INT_FIELDS:
            return int(raw)
        if name == "m":
            return tuple(int(p) for p in raw.split(","))
        if name == "m_range":
            lo, hi = raw.split(":")
            return (int(lo), int(hi))
        if name == "nu_grid":
            if raw == "none":
                return None
            lo, hi, step = raw.split(":")
            return (parse_pi_expression(lo), parse_pi_expression(hi),
                    parse_pi_expression(step))
        if name == "nu_bracket":
            lo, hi = raw.split(":")
            return (parse_pi_expression(lo), parse_pi_expression(hi))
        if name in _OPTIONAL_STR_FIELDS:
            return None if raw == "none" else raw
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {name}: {raw!r} ({exc})") from None
    return raw  # plain strings: command, format


_COMMON_FLAGS = ("seed", "out", "format")

_COMMAND_FLAGS = {
    "potential": ("nu", "b", "m"),
    "spectrum": ("b", "nu_grid", "m", "levels", "K"),
    "crossings": ("b", "m1", "m2", "nu_bracket", "K"),
    "groundstate": ("nu", "b", "m_range", "K"),
    "current": ("nu", "b", "m", "K"),
    "velocity-sweep": ("b", "nu_grid", "m_range", "K"),
    "evolve": ("nu", "b", "xi0", "packet_width", "N", "L", "dtau", "tau_end",
               "snapshots", "ramp", "tau_ramp"),
    "imag-time": ("nu", "b", "m", "N", "L", "dtau", "tol"),
    "ramp-compare": ("nu", "b", "tau_ramp", "tau_end", "dtau", "N", "L"),
}

_FLAG_HELP = {
    "nu": "cyclotron-to-trap frequency ratio (>= 0)",
    "b": "Coulomb coupling strength (>= 0)",
    "m": "angular momentum quantum number(s), comma separated",
    "m1": "first sector for the crossing search",
    "m2": "second sector for the crossing search",
    "m_range": "inclusive sector scan range lo:hi",
    "K": "radial basis size",
    "levels": "number of levels per sector",
    "N": "grid points per axis (power of two)",
    "L": "grid half extent",
    "dtau": "time step",
    "tau_end": "final time (pi-expressions allowed)",
    "tau_ramp": "ramp duration (pi-expressions allowed)",
    "ramp": "field switch-on profile",
    "nu_grid": "field sweep lo:hi:step",
    "nu_bracket": "crossing search bracket lo:hi",
    "xi0": "initial packet center on the xi axis",
    "packet_width": "Gaussian exponent coefficient a_pkt",
    "snapshots": "snapshot stride in tau (pi-expressions allowed)",
    "tol": "relaxation convergence: |dE/dtau| threshold",
    "seed": "seed echoed into headers for randomized studies",
    "out": "output path (default: derived from the command name)",
    "format": "output format override (csv | json | grid-dump)",
}


class _Parser(argparse.ArgumentParser):
    # argparse exits on its own; route everything through ConfigError instead
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="magtrap", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="key = value file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, names in _COMMAND_FLAGS.items():
        sp = sub.add_parser(command)
        # SUPPRESS so a subcommand-position --config does not clobber one
        # given before the subcommand with its default
        sp.add_argument("--config", default=argparse.SUPPRESS,
                        help="key = value file; flags override it")
        for name in names + _COMMON_FLAGS:
            kwargs = {"default": None, "help": _FLAG_HELP[name]}
            if name == "ramp":
                kwargs["choices"] = ("step", "linear", "smooth")
            sp.add_argument("--" + name.replace("_", "-"), dest=name, **kwargs)
    return parser


_DASH_VALUE_FLAGS = {"--m", "--m-range", "--nu-bracket"}


def _merge_negative_values(argv):
    """Join `--m-range -1:3` into `--m-range=-1:3`.

    Option parsing otherwise reads a leading-dash sector value as a new
    flag; only flags whose values can legitimately start with a minus are
    rewritten, so genuinely missing arguments still fail loudly.
    """
    merged = []
    skip = False
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if (tok in _DASH_VALUE_FLAGS and nxt and len(nxt) > 1
                and nxt[0] == "-" and nxt[1].isdigit()):
            merged.append(f"{tok}={nxt}")
            skip = True
        else:
            merged.append(tok)
    return merged


def read_config_file(path) -> dict:
    """Flat `key = value` file with the same keys as the flags."""
    values = {}
    known = {f.name for f in fields(RunConfig)} - {"command"}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if not eq or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = val.strip()
    return values


def resolve_config(args) -> RunConfig:
    file_vals = read_config_file(args.config) if args.config else {}
    kwargs = {"command": args.command}
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        raw = getattr(args, f.name, None)
        if raw is None:
            raw = file_vals.get(f.name)
        if raw is not None:
            kwargs[f.name] = _coerce(f.name, raw)
    if "dtau" not in kwargs and args.command == "imag-time":
        kwargs["dtau"] = 5e-3  # relaxation tolerates far coarser steps
    cfg = RunConfig(**kwargs)

    if cfg.nu < 0:
        raise ConfigError(
            "negative nu: energies obey E(-nu, m) = E(nu, -m); rerun with "
            "nu >= 0 and mirrored m")
    if cfg.b < 0:
        raise ConfigError("b must be >= 0")
    if cfg.K < 2:
        raise ConfigError("K must be at least 2")
    if cfg.levels < 1:
        raise ConfigError("levels must be at least 1")
    if cfg.format not in ("", "csv", "json", "grid-dump"):
        raise ConfigError(f"unknown format {cfg.format!r}")
    if cfg.command in ("spectrum", "velocity-sweep"):
        if cfg.nu_grid is None:
            raise ConfigError(f"{cfg.command} needs --nu-grid lo:hi:step")
        lo, hi, step = cfg.nu_grid
        if not (step > 0 and hi > lo and lo >= 0):
            raise ConfigError(f"bad nu grid {cfg.nu_grid}")
    if cfg.command == "current" and len(cfg.m) != 1:
        raise ConfigError("current takes exactly one m")
    if cfg.command == "crossings":
        lo, hi = cfg.nu_bracket
        if not (hi > lo >= 0):
            raise ConfigError(f"bad nu bracket {cfg.nu_bracket}")
    if cfg.snapshots is not None and cfg.snapshots <= 0:
        raise ConfigError("snapshot stride must be positive")
    return cfg


def _out_path(cfg: RunConfig, extension: str) -> Path:
    if cfg.out:
        path = Path(cfg.out)
    else:
        name = cfg.command.replace("-", "_") + extension
        path = io_utils.default_output_dir() / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _nu_values(grid) -> np.ndarray:
    lo, hi, step = grid
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def _tagged(path: Path, tag: str) -> Path:
    return path.with_name(path.stem + tag + path.suffix)


# ---------------------------------------------------------------------------
# commands

def _cmd_potential(cfg: RunConfig):
    tp = TrapParams(nu=cfg.nu, b=cfg.b)
    rho = np.linspace(0.02, 8.0, 1600)
    columns = {"rho": rho}
    for m in cfg.m:
        columns[f"V_m{m}"] = effective_potential(tp, m, rho)
    path = _out_path(cfg, ".csv")
    io_utils.write_table(path, columns, cfg.to_header())
    return [path]


def _cmd_spectrum(cfg: RunConfig):
    rows = spectrum_sweep(cfg.b, _nu_values(cfg.nu_grid), cfg.m,
                          size=cfg.K, n_levels=cfg.levels)
    data = np.array(rows, dtype=float)
    columns = {"nu": data[:, 0], "m": data[:, 1], "level": data[:, 2],
               "energy": data[:, 3]}
    path = _out_path(cfg, ".csv")
    io_utils.write_table(path, columns, cfg.to_header())
    return [path]


def _cmd_crossings(cfg: RunConfig):
    tp = TrapParams(nu=0.0, b=cfg.b)
    nu_star = find_crossing(tp, cfg.m1, cfg.m2, cfg.nu_bracket, size=cfg.K)
    at = TrapParams(nu=nu_star, b=cfg.b)
    e1 = solve_sector(at, cfg.m1, size=cfg.K).energies[0]
    e2 = solve_sector(at, cfg.m2, size=cfg.K).energies[0]
    result = {"m1": cfg.m1, "m2": cfg.m2, "nu_star": nu_star,
              "energy_m1": e1, "energy_m2": e2, "difference": e1 - e2}
    path = _out_path(cfg, ".json")
    io_utils.write_json_record(path, result, cfg.to_header())
    return [path]


def _cmd_groundstate(cfg: RunConfig):
    tp = TrapParams(nu=cfg.nu, b=cfg.b)
    record = ground_state_scan(tp, m_range=cfg.m_range, size=cfg.K)
    lo, hi = cfg.m_range
    sectors = [[m, solve_sector(tp, m, size=cfg.K).energies[0]]
               for m in range(lo, hi + 1)]
    result = {"m_star": record.m_star, "energy": record.energy,
              "sectors": sectors}
    path = _out_path(cfg, ".json")
    io_utils.write_json_record(path, result, cfg.to_header())
    return [path]


def _cmd_current(cfg: RunConfig):
    tp = TrapParams(nu=cfg.nu, b=cfg.b)
    m = cfg.m[0]
    wf = RadialWavefunction.from_solution(solve_sector(tp, m, size=cfg.K))
    rho = np.linspace(0.02, wf.rho_max, 1500)
    current = current_density(wf, tp, rho)
    columns = {"rho": rho, "current": current.J, "density": wf.density(rho)}
    path = _out_path(cfg, ".csv")
    header = cfg.to_header()
    header["velocity"] = velocity_expectation(wf, tp)
    io_utils.write_table(path, columns, header)
    return [path]


def _cmd_velocity_sweep(cfg: RunConfig):
    rows = ground_velocity_sweep(cfg.b, _nu_values(cfg.nu_grid),
                                 size=cfg.K, m_range=cfg.m_range)
    data = np.array(rows, dtype=float)
    columns = {"nu": data[:, 0], "m_star": data[:, 1], "energy": data[:, 2],
               "velocity": data[:, 3]}
    path = _out_path(cfg, ".csv")
    io_utils.write_table(path, columns, cfg.to_header())
    return [path]


def _evolve_header(cfg: RunConfig, spec: GridSpec) -> dict:
    header = cfg.to_header()
    header["epsilon"] = spec.coulomb_epsilon
    header["time_convention"] = "tau = omega_t * t"
    return header


def _cmd_evolve(cfg: RunConfig):
    spec = GridSpec(n=cfg.N, half_extent=cfg.L)
    tp = TrapParams(nu=cfg.nu, b=cfg.b)
    ramp = None
    if cfg.ramp is not None:
        ramp = RampProtocol(cfg.ramp, nu_final=cfg.nu,
                            tau_ramp=0.0 if cfg.ramp == "step" else cfg.tau_ramp)
    tau_end = 2.0 * math.pi if cfg.tau_end is None else cfg.tau_end
    snapshot_times = []
    if cfg.snapshots:
        count = int(math.floor(tau_end / cfg.snapshots + 1e-9))
        snapshot_times = [j * cfg.snapshots for j in range(1, count + 1)]
    state0 = gaussian_packet(spec, cfg.xi0, cfg.packet_width)
    result = evolve(state0, tp, cfg.dtau, tau_end, ramp,
                    snapshot_times=snapshot_times)
    path = _out_path(cfg, ".csv")
    header = _evolve_header(cfg, spec)
    io_utils.write_table(path, result.as_columns(), header)
    written = [path]
    for j, snap in enumerate(result.snapshots, 1):
        snap_path = _tagged(path, f"_snap{j:03d}").with_suffix(".npz")
        st = snap.state
        io_utils.write_grid_dump(
            snap_path, st.amplitudes, spec.axis(),
            {**header, "tau": st.tau, "requested_tau": snap.requested_tau,
             "frame": st.frame, "theta": st.theta})
        written.append(snap_path)
    if cfg.format == "grid-dump":
        final = result.final_lab()
        final_path = _tagged(path, "_final").with_suffix(".npz")
        io_utils.write_grid_dump(
            final_path, final.amplitudes, spec.axis(),
            {**header, "tau": final.tau, "frame": final.frame,
             "theta": final.theta})
        written.append(final_path)
    return written


def _cmd_imag_time(cfg: RunConfig):
    spec = GridSpec(n=cfg.N, half_extent=cfg.L)
    tp = TrapParams(nu=cfg.nu, b=cfg.b)
    energies = []
    for m in cfg.m:
        energy, _ = imaginary_time_ground(spec, tp, m, dtau=cfg.dtau,
                                          tol=cfg.tol)
        energies.append([m, energy])
    best = min(energies, key=lambda pair: pair[1])
    result = {"energies": energies, "m_star": best[0], "energy": best[1]}
    path = _out_path(cfg, ".json")
    io_utils.write_json_record(path, result, cfg.to_header())
    return [path]


def _cmd_ramp_compare(cfg: RunConfig):
    spec = GridSpec(n=cfg.N, half_extent=cfg.L)
    tp = TrapParams(nu=cfg.nu, b=cfg.b)
    rest = TrapParams(nu=0.0, b=cfg.b)
    # relax under the same softcore interaction evolve steps, else the
    # prepared state radiates from the origin cells
    _, state0 = imaginary_time_ground(spec, rest, 0, tol=cfg.tol,
                                      coulomb="softcore")
    tau_end = 2.0 * cfg.tau_ramp + 10.0 if cfg.tau_end is None else cfg.tau_end
    base = _out_path(cfg, ".csv")
    written = []
    for kind in ("step", "smooth"):
        ramp = RampProtocol(kind, nu_final=cfg.nu,
                            tau_ramp=0.0 if kind == "step" else cfg.tau_ramp)
        result = evolve(state0, tp, cfg.dtau, tau_end, ramp)
        path = _tagged(base, f"_{kind}")
        header = _evolve_header(cfg, spec)
        header["ramp"] = kind
        io_utils.write_table(path, result.as_columns(), header)
        written.append(path)
    return written


_COMMANDS = {
    "potential": _cmd_potential,
    "spectrum": _cmd_spectrum,
    "crossings": _cmd_crossings,
    "groundstate": _cmd_groundstate,
    "current": _cmd_current,
    "velocity-sweep": _cmd_velocity_sweep,
    "evolve": _cmd_evolve,
    "imag-time": _cmd_imag_time,
    "ramp-compare": _cmd_ramp_compare,
}

_NUMERICAL_ERRORS = (BasisConditioningError, BracketingError,
                     QuadratureConvergenceError, NormDriftError,
                     BoundaryLeakError, SectorLeakageError,
                     FloatingPointError)


def _fail(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc),
               "exit_code": code}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = parser.parse_args(_merge_negative_values(list(argv)))
        cfg = resolve_config(args)
        for path in _COMMANDS[cfg.command](cfg):
            print(path)
        return EXIT_OK
    except _NUMERICAL_ERRORS as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except ValueError as exc:
        return _fail(exc, EXIT_CONFIG)
    except RuntimeError as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except OSError as exc:
        return _fail(exc, EXIT_IO)


def console_entry() -> None:
    sys.exit(main(sys.argv[1:]))
