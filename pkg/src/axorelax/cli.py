"""Command-line interface.

Subcommands: ``validate`` (structural assumptions), ``certify``
(stability certificate), ``steady`` (boundary-layer profile table),
``simulate`` (inflow march with diagnostics), ``decay`` (march plus
decay-time summary) and ``catalog`` (write a named reference system as a
configuration file).

Exit codes: 0 success, 1 assumption failure, 2 compatibility failure in
strict mode, 3 numerical failure, 4 configuration or I/O failure.  Every
failure prints a single machine-parsable reason line to standard error
of the form ``error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import ast
import re
import sys
from pathlib import Path

import numpy as np

from . import ibvp_solver, relaxation_analysis, steady_state, system_model
from .errors import (
    AssumptionError,
    CompatibilityError,
    ConfigError,
    NumericalError,
)
from .ibvp_solver import SchemeConfig, decay_time, make_grid, run
from .relaxation_analysis import StabilityCertificate, certify
from .steady_state import steady_profile, steady_residual
from .system_model import (
    InitialData,
    RateMatrix,
    SystemSpec,
    VelocityMatrix,
    catalog,
    validate_assumptions,
)

__all__ = ["main", "run_command", "parse_spec_file"]


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _fmt_vector(v) -> str:
    return " ".join(_fmt(x) for x in np.asarray(v).reshape(-1))


# --- configuration files ------------------------------------------------

_ASSIGN_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")
_KNOWN_KEYS = ("r", "lambda", "K", "epsilon", "boundary")


def _load_config(path: str) -> dict:
    """Read a flat ``name = value`` configuration file.

    Values are Python literals (numbers or nested lists of numbers) and
    may continue over following indented or bare lines until the next
    assignment; ``#`` starts a comment.  Errors carry file and line
    context.
    """
    text = Path(path).read_text()
    entries: dict[str, tuple[int, str]] = {}
    key = None
    start = 0
    buf: list[str] = []

    def flush():
        if key is not None:
            entries[key] = (start, " ".join(buf).strip())

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        m = _ASSIGN_RE.match(line)
        if m:
            flush()
            if m.group(1) in entries:
                raise ConfigError(f"{path}:{lineno}: duplicate field {m.group(1)!r}")
            key, start, buf = m.group(1), lineno, [m.group(2)]
        else:
            if key is None:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'name = value', got {line.strip()!r}"
                )
            buf.append(line.strip())
    flush()

    out: dict = {}
    for name, (lineno, literal) in entries.items():
        if name not in _KNOWN_KEYS:
            known = ", ".join(_KNOWN_KEYS)
            raise ConfigError(f"{path}:{lineno}: unknown field {name!r} (known: {known})")
        try:
            value = ast.literal_eval(literal)
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(
                f"{path}:{lineno}: field {name!r}: cannot parse value: {exc}"
            ) from None
        if not _is_numeric(value):
            raise ConfigError(
                f"{path}:{lineno}: field {name!r}: expected a number or a "
                f"nested list of numbers"
            )
        out[name] = value
    return out


def _is_numeric(value) -> bool:
    if isinstance(value, bool):
        return False
    if isinstance(value, (int, float)):
        return True
    if isinstance(value, (list, tuple)):
        return all(_is_numeric(v) for v in value)
    return False


def _build_system(config: dict, path: str) -> tuple[SystemSpec, np.ndarray | None]:
    for required in ("lambda", "K"):
        if required not in config:
            raise ConfigError(f"{path}: missing required field {required!r}")
    try:
        lam = VelocityMatrix(np.asarray(config["lambda"], dtype=float))
        rates = RateMatrix(np.asarray(config["K"], dtype=float))
        spec = SystemSpec(lam, rates, epsilon=config.get("epsilon", 1.0))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if "r" in config and int(config["r"]) != spec.r:
        raise ConfigError(
            f"{path}: field 'r' = {config['r']} but the system has {spec.r} species"
        )
    boundary = None
    if "boundary" in config:
        boundary = np.asarray(config["boundary"], dtype=float).reshape(-1)
        if boundary.size != spec.r:
            raise ConfigError(
                f"{path}: boundary has {boundary.size} components, "
                f"system has {spec.r}"
            )
    return spec, boundary


def parse_spec_file(path: str) -> SystemSpec:
    """Parse a configuration file into a system, with dimension checks."""
    return _build_system(_load_config(path), path)[0]


def _default_boundary(spec: SystemSpec, boundary: np.ndarray | None) -> np.ndarray:
    if boundary is not None:
        return boundary
    b0 = np.zeros(spec.r)
    b0[0] = 1.0
    return b0


def format_config(spec: SystemSpec) -> str:
    """Render a system as configuration-file text."""
    rows = ",\n     ".join(
        "[" + ", ".join(_fmt(v) for v in row) + "]" for row in spec.rates.entries
    )
    return (
        f"r = {spec.r}\n"
        f"lambda = [{', '.join(_fmt(v) for v in spec.lam.diag)}]\n"
        f"K = [{rows}]\n"
        f"epsilon = {_fmt(spec.epsilon)}\n"
    )


# --- initial data descriptors -------------------------------------------


def _parse_floats(text: str, n: int, what: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != n:
        raise ConfigError(f"{what} needs {n} comma-separated numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{what}: cannot parse numbers from {text!r}") from None


def _load_table(path: str) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p for p in re.split(r"[,\s]+", line) if p]
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            if lineno == 1 or not rows:
                continue  # header line
            raise ConfigError(f"{path}:{lineno}: cannot parse row {line!r}") from None
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    widths = {len(row) for row in rows}
    if len(widths) != 1:
        raise ConfigError(f"{path}: rows have inconsistent column counts {sorted(widths)}")
    data = np.asarray(rows, dtype=float)
    if data.shape[1] < 2:
        raise ConfigError(f"{path}: need an x column plus at least one component")
    return data[:, 0], data[:, 1:]


def build_initial_data(descriptor: str, spec: SystemSpec, profile) -> InitialData:
    """Build initial data from a descriptor string.

    Supported forms: ``steady`` (the steady profile itself),
    ``bump:A,x0,sigma`` (steady profile plus
    ``A x^2 exp(-((x-x0)/sigma)^2)`` in the first component, which
    vanishes to second order at the inflow so compatibility is
    preserved), ``kernel-scaled:s`` (the constant state ``s * xi``) and
    ``file:PATH`` (sampled columns ``x, u_1, ..., u_r``).
    """
    name, _, payload = descriptor.partition(":")
    if name == "steady":
        return InitialData.from_callable(
            spec.r, fn=lambda xs: profile(np.atleast_1d(xs)), dfn=lambda xs: profile.derivative(np.atleast_1d(xs))
        )
    if name == "bump":
        amp, x0, sigma = _parse_floats(payload, 3, "bump descriptor")
        if sigma <= 0.0:
            raise ConfigError(f"bump width must be positive, got {sigma:g}")
        direction = np.zeros(spec.r)
        direction[0] = 1.0

        def bump(xs):
            xs = np.atleast_1d(xs)
            return amp * xs**2 * np.exp(-(((xs - x0) / sigma) ** 2))

        def dbump(xs):
            xs = np.atleast_1d(xs)
            g = np.exp(-(((xs - x0) / sigma) ** 2))
            return amp * g * (2.0 * xs - xs**2 * 2.0 * (xs - x0) / sigma**2)

        return InitialData.from_callable(
            spec.r,
            fn=lambda xs: profile(np.atleast_1d(xs)) + bump(xs)[:, None] * direction[None, :],
            dfn=lambda xs: profile.derivative(np.atleast_1d(xs))
            + dbump(xs)[:, None] * direction[None, :],
        )
    if name == "kernel-scaled":
        (scale,) = _parse_floats(payload, 1, "kernel-scaled descriptor")
        xi = relaxation_analysis.kernel_vector(
            system_model.scaled_rates(spec).entries
        ).xi
        value = scale * xi
        return InitialData.from_callable(
            spec.r,
            fn=lambda xs: np.tile(value, (np.atleast_1d(xs).size, 1)),
            dfn=lambda xs: np.zeros((np.atleast_1d(xs).size, spec.r)),
        )
    if name == "file":
        if not payload:
            raise ConfigError("file descriptor needs a path: file:PATH")
        xs, values = _load_table(payload)
        if values.shape[1] != spec.r:
            raise ConfigError(
                f"{payload}: table has {values.shape[1]} components, "
                f"system has {spec.r}"
            )
        try:
            return InitialData.from_samples(xs, values)
        except ValueError as exc:
            raise ConfigError(f"{payload}: {exc}") from None
    raise ConfigError(
        f"unknown initial-data descriptor {descriptor!r} "
        f"(known: steady, bump:A,x0,sigma, kernel-scaled:s, file:PATH)"
    )


# --- output writers ------------------------------------------------------


def write_delimited(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def certificate_text(cert: StabilityCertificate) -> str:
    """Render a certificate as a deterministic plain-text document."""
    lines = [
        "stability certificate",
        "=====================",
        f"species: {cert.r}",
        f"epsilon: {_fmt(cert.epsilon)}",
        f"velocities: {_fmt_vector(cert.lam)}",
        "scaled rates:",
    ]
    lines += [f"  {_fmt_vector(row)}" for row in cert.k_eff]
    lines += [
        f"kernel direction: {_fmt_vector(cert.xi)}",
        f"reduction determinant: {_fmt(cert.schur.det_k2)}",
        f"reduction spectral abscissa: {_fmt(cert.schur.spectral_abscissa_k2)}",
        f"symmetrizer weights: {_fmt_vector(cert.symmetrizer.a0)}",
        f"dissipative rates: {_fmt_vector(cert.split.s)}",
        "detailed balance: "
        + ("yes" if cert.balance.symmetric else "no")
        + f" (max asymmetry {_fmt(cert.balance.max_asymmetry)})",
        f"compensating margin: {_fmt(cert.c)}",
        "compensating matrix:",
    ]
    lines += [f"  {_fmt_vector(row)}" for row in cert.compensating.h]
    lines += [
        f"dissipation ratio: {_fmt(cert.dissipation_ratio)}",
        "verified identities (relative residuals):",
    ]
    for key in sorted(cert.residuals):
        lines.append(f"  {key}: {_fmt(cert.residuals[key])}")
    lines += [
        f"construction tolerance: {_fmt(cert.construction_tol)}",
        f"verification tolerance: {_fmt(cert.verification_tol)}",
        "verdict: certified",
    ]
    return "\n".join(lines) + "\n"


# --- subcommands ----------------------------------------------------------


def _cmd_validate(args) -> int:
    spec = parse_spec_file(args.config)
    report = validate_assumptions(spec, tol=args.tol)
    print(report.summary())
    if not report.passed:
        failed = report.failed_names
        raise AssumptionError(failed, f"{report[failed[0]].witness}")
    return 0


def _cmd_certify(args) -> int:
    spec = parse_spec_file(args.config)
    cert = certify(
        spec,
        construction_tol=args.tol_construction,
        verification_tol=args.tol_verification,
    )
    out = args.out or Path(args.config).stem + ".cert.txt"
    Path(out).write_text(certificate_text(cert))
    balance = "yes" if cert.balance.symmetric else "no"
    print(
        f"certified: r={cert.r} epsilon={_fmt(cert.epsilon)} "
        f"c={_fmt(cert.c)} kappa={_fmt(cert.dissipation_ratio)} "
        f"detailed_balance={balance}"
    )
    print(f"wrote {out}")
    return 0


def _cmd_steady(args) -> int:
    spec, boundary = _build_system(_load_config(args.config), args.config)
    b0 = _default_boundary(spec, boundary)
    profile = steady_profile(spec, b0)
    x_max = args.xmax if args.xmax is not None else 10.0 * profile.layer_width
    if x_max <= 0.0:
        raise ConfigError(f"--xmax must be positive, got {x_max}")
    if args.samples < 2:
        raise ConfigError(f"--samples must be at least 2, got {args.samples}")
    xs = np.linspace(0.0, x_max, args.samples)
    b = profile(xs)
    out = args.out or Path(args.config).stem + ".steady.csv"
    header = ["x"] + [f"B_{i + 1}" for i in range(spec.r)]
    write_delimited(out, header, np.column_stack([xs, b]))
    print(f"layer width: {_fmt(profile.layer_width)}")
    print(f"far field: {_fmt_vector(profile.far_field)}")
    print(f"residual on the sample grid: {_fmt(steady_residual(profile, xs))}")
    print(f"wrote {out}")
    if args.figures:
        from . import figures

        fig_path = str(Path(out).with_suffix(".png"))
        figures.save_profile_figure(fig_path, xs, b, profile)
        print(f"wrote {fig_path}")
    return 0


def _simulation_pieces(args):
    spec, boundary = _build_system(_load_config(args.config), args.config)
    b0 = _default_boundary(spec, boundary)
    cert = certify(spec)
    profile = steady_profile(spec, b0)
    grid = make_grid(args.xmax, args.nx, spec)
    config = SchemeConfig(
        cfl=args.cfl, scheme=args.scheme, t_end=args.tmax, output_stride=args.stride
    )
    u0 = build_initial_data(args.ic, spec, profile)
    series, final = run(
        spec,
        u0,
        grid,
        config,
        cert,
        profile,
        strict=not args.permissive,
        compat_tol=args.compat_tol,
    )
    return spec, cert, profile, grid, series, final


_DIAG_HEADER = ["t", "l2", "h1", "h2", "sup", "energy", "diss_rate", "cum_diss", "gn_ratio"]


def _write_simulation_outputs(args, spec, profile, grid, series, final) -> None:
    prefix = args.out or Path(args.config).stem
    diag_path = f"{prefix}_diagnostics.csv"
    rows = [
        [s.t, s.l2, s.h1, s.h2, s.sup, s.energy, s.diss_rate, s.cum_diss, s.gn_ratio]
        for s in series.samples
    ]
    write_delimited(diag_path, _DIAG_HEADER, rows)
    state_path = f"{prefix}_state.csv"
    header = ["x"] + [f"u_{i + 1}" for i in range(spec.r)]
    write_delimited(state_path, header, np.column_stack([grid.xs, final.u]))
    print(f"wrote {diag_path}")
    print(f"wrote {state_path}")
    if args.figures:
        from . import figures

        diag_fig = f"{prefix}_diagnostics.png"
        figures.save_diagnostics_figure(diag_fig, series)
        state_fig = f"{prefix}_state.png"
        figures.save_state_figure(state_fig, grid.xs, np.asarray(final.u), profile(grid.xs))
        print(f"wrote {diag_fig}")
        print(f"wrote {state_fig}")


def _print_run_summary(series) -> None:
    first, last = series.samples[0], series.samples[-1]
    print(f"steps: {series.n_steps} dt: {_fmt(series.dt)}")
    print(f"steady truncation floor: {_fmt(series.steady_floor)}")
    print(f"sup vs steady profile: initial {_fmt(first.sup)} final {_fmt(last.sup)}")
    print(
        "sup vs discrete steady state: "
        f"initial {_fmt(series.sup_discrete[0])} final {_fmt(series.sup_discrete[-1])}"
    )
    print(
        f"energy violations: {series.energy_violations} "
        f"(discrete reference: {series.energy_violations_discrete})"
    )


def _cmd_simulate(args) -> int:
    spec, cert, profile, grid, series, final = _simulation_pieces(args)
    _print_run_summary(series)
    _write_simulation_outputs(args, spec, profile, grid, series, final)
    return 0


def _cmd_decay(args) -> int:
    spec, cert, profile, grid, series, final = _simulation_pieces(args)
    _print_run_summary(series)
    t_decay = decay_time(series, args.tol)
    print(f"decay tolerance: {_fmt(args.tol)}")
    if t_decay is None:
        print("decay time: not reached")
    else:
        print(f"decay time: {_fmt(t_decay)}")
    for decade in sorted(series.decade_times):
        print(f"decade {decade}: t = {_fmt(series.decade_times[decade])}")
    if args.out:
        _write_simulation_outputs(args, spec, profile, grid, series, final)
    return 0


def _cmd_catalog(args) -> int:
    params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--param needs key=value, got {item!r}")
        try:
            params[key.strip()] = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError):
            raise ConfigError(f"--param {item!r}: cannot parse value") from None
    if args.seed is not None:
        params["seed"] = args.seed
    spec = catalog(args.name, epsilon=args.epsilon, **params)
    text = format_config(spec)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# --- parser and entry point -----------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise ConfigError(message)


def _add_simulation_arguments(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("config", help="system configuration file")
    sub.add_argument("--tmax", type=float, default=40.0, help="final time")
    sub.add_argument("--nx", type=int, default=2000, help="number of cells")
    sub.add_argument("--xmax", type=float, default=20.0, help="domain length")
    sub.add_argument("--cfl", type=float, default=0.9, help="advective Courant number")
    sub.add_argument(
        "--scheme", choices=("imex", "explicit"), default="imex", help="reaction update"
    )
    sub.add_argument(
        "--ic",
        default="steady",
        help="initial data: steady | bump:A,x0,sigma | kernel-scaled:s | file:PATH",
    )
    sub.add_argument("--stride", type=int, default=50, help="steps between samples")
    sub.add_argument(
        "--permissive",
        action="store_true",
        help="march incompatible initial data instead of failing",
    )
    sub.add_argument(
        "--compat-tol", type=float, default=1e-8, help="compatibility tolerance"
    )
    sub.add_argument(
        "--figures",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="render figures next to the delimited outputs",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="axorelax",
        description="Relaxation-structure certificates and boundary-layer "
        "diagnostics for linear reaction-hyperbolic systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the structural assumptions H1-H5")
    p.add_argument("config", help="system configuration file")
    p.add_argument("--tol", type=float, default=0.0, help="sign/sum tolerance")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("certify", help="build and write a stability certificate")
    p.add_argument("config", help="system configuration file")
    p.add_argument("--out", help="certificate path (default: <config>.cert.txt)")
    p.add_argument("--tol-construction", type=float, default=1e-12)
    p.add_argument("--tol-verification", type=float, default=1e-10)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("steady", help="tabulate the steady boundary layer")
    p.add_argument("config", help="system configuration file")
    p.add_argument("--xmax", type=float, default=None, help="table extent (default: 10 layer widths)")
    p.add_argument("--samples", type=int, default=400, help="number of table rows")
    p.add_argument("--out", help="output table path (default: <config>.steady.csv)")
    p.add_argument(
        "--figures",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="render a profile figure next to the table",
    )
    p.set_defaults(func=_cmd_steady)

    p = sub.add_parser("simulate", help="march the inflow problem and export diagnostics")
    _add_simulation_arguments(p)
    p.add_argument("--out", help="output prefix (default: config stem)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("decay", help="march and report decay times")
    _add_simulation_arguments(p)
    p.add_argument("--tol", type=float, default=1e-3, help="decay threshold")
    p.add_argument("--out", help="optional output prefix for tables/figures")
    p.set_defaults(func=_cmd_decay)

    p = sub.add_parser("catalog", help="write a named reference system")
    p.add_argument(
        "name",
        help="counterexample_4x4 | two_state | three_state | random_valid",
    )
    p.add_argument(
        "--param",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="catalog parameter (repeatable)",
    )
    p.add_argument("--seed", type=int, default=None, help="seed for random_valid")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--out", help="write the configuration here instead of stdout")
    p.set_defaults(func=_cmd_catalog)
    return parser


def run_command(argv=None) -> int:
    """Run one CLI invocation, mapping failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except AssumptionError as exc:
        category = exc.failed[0] if exc.failed else "assumptions"
        print(f"error: {category}: {exc}", file=sys.stderr)
        return 1
    except CompatibilityError as exc:
        print(f"error: compatibility: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 4
    except (OSError, ValueError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(run_command())
