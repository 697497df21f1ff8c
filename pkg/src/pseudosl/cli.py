"""Command-line surface for the package.

Subcommands
-----------
spectrum        eigenvalue table as CSV
pseudomode      quasimode certification grid as CSV, optional mode profiles
resolvent-grid  resolvent-norm estimates over a rectangular grid as CSV
sv-decay        singular values of the zero-energy inverse plus a slope fit
bessel-check    special-function identity suite as a JSON report

Exit codes: 0 success, 2 invariant failure, 3 configuration error.

Every run resolves its configuration from built-in defaults, then an
optional flat key/value config file (``--config``), then command-line
flags, in that order of precedence.  The resolved configuration is
written next to the outputs as ``run_config.txt`` so any run can be
reproduced from that single file.  All CSV numbers use 17-significant-
digit scientific notation and rows are emitted in deterministic order,
so identical configuration and seed give byte-identical files.

The eigenvalue table reports E in the normal-form spectral scale
(4 m E, the square of the frequency parameter), in which the first
nonzero eigenvalue of the default field reads 47.8853i; all other
subcommands work directly with the operator's spectral parameter.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .coefficients import build_field, build_transformed_problem
from .pseudomodes import (
    build_periodiser,
    build_pseudomode,
    energy_from_lambda,
    eval_chi,
)
from .resolvent import fit_level_line, pseudospectrum_grid, sv_decay_summary
from .solutions import build_regular_solution
from .special_functions import bessel_identity_report
from .spectrum import find_eigenvalues

EXIT_PASS = 0
EXIT_FAIL = 2
EXIT_CONFIG = 3

_LN10 = math.log(10.0)


class ConfigError(Exception):
    """Raised for any problem that makes the requested run ill-posed."""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings of one CLI run.

    ``nodes`` is the discretization-size knob of the active command:
    eigenfunction samples for spectrum, profile samples for pseudomode,
    basis size for resolvent-grid, quadrature nodes for sv-decay.
    """

    epsilon: float = 0.25
    r_coeffs: tuple = ()
    out: str = "."
    nodes: int = 0  # 0 = per-command default
    seed: int = 0
    jobs: int = 1
    # spectrum
    s_max: float = 60.0
    max_count: int = 64
    # pseudomode
    lam_values: tuple = (30.0, 50.0, 80.0, 120.0)
    theta_values: tuple = (math.pi / 16, math.pi / 8, 3 * math.pi / 16)
    export_profile: bool = False
    general_constant: float = 0.0  # 0 = none configured
    # resolvent-grid
    re_range: tuple = ()
    im_range: tuple = ()
    n_re: int = 64
    n_im: int = 64
    levels: tuple = ()
    # bessel-check
    n_samples: int = 100
    order: float = 2.0

    def to_text(self, command: str) -> str:
        lines = [f"command = {command}"]
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                body = ", ".join(_fmt_cfg(v) for v in val)
                lines.append(f"{f.name} = [{body}]")
            else:
                lines.append(f"{f.name} = {_fmt_cfg(val)}")
        return "\n".join(lines) + "\n"


def _fmt_cfg(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_scalar(token: str):
    token = token.strip()
    low = token.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    return token


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        if not inner:
            return ()
        return tuple(_parse_scalar(t) for t in inner.split(","))
    return _parse_scalar(raw)


def parse_config_text(text: str) -> dict:
    """Parse the flat ``key = value`` format with ``[a, b, c]`` arrays."""
    out = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {ln}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        out[key.strip()] = _parse_value(raw)
    return out


_KEY_ALIASES = {"r": "r_coeffs", "lam": "lam_values", "theta": "theta_values"}
_TUPLE_KEYS = {
    "r_coeffs",
    "lam_values",
    "theta_values",
    "re_range",
    "im_range",
    "levels",
}


def _coerce(key: str, value) -> object:
    if key in _TUPLE_KEYS:
        if isinstance(value, tuple):
            return tuple(float(v) for v in value)
        if isinstance(value, str):
            inner = value.strip().strip("[]")
            return tuple(
                float(t) for t in inner.split(",") if t.strip()
            )
        return (float(value),)
    return value


def resolve_config(config_path: str | None, overrides: dict) -> RunConfig:
    valid = {f.name for f in fields(RunConfig)}
    merged: dict = {}
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {config_path}")
        for key, value in parse_config_text(path.read_text()).items():
            key = _KEY_ALIASES.get(key, key)
            if key == "command":
                continue
            if key not in valid:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value)
    for key, value in overrides.items():
        if value is None:
            continue
        key = _KEY_ALIASES.get(key, key)
        merged[key] = _coerce(key, value)
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _build_problem(cfg: RunConfig):
    try:
        return build_transformed_problem(build_field(cfg.epsilon, cfg.r_coeffs))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _fmt(x: float) -> str:
    return f"{float(x):.16e}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [c if isinstance(c, str) else _fmt(c) for c in row]
            fh.write(",".join(cells) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _banner(tag: str, **kv) -> None:
    body = " ".join(f"{k}={v}" for k, v in kv.items())
    print(f"[{tag}] {body}")


def _prepare_out(cfg: RunConfig, command: str) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.txt").write_text(cfg.to_text(command))
    return out


def cmd_spectrum(cfg: RunConfig) -> int:
    tp = _build_problem(cfg)
    out = _prepare_out(cfg, "spectrum")
    n_samples = cfg.nodes or 201
    records = find_eigenvalues(
        tp, cfg.s_max, cfg.max_count, jobs=cfg.jobs, n_samples=n_samples
    )
    # report eigenvalues in the normal-form spectral scale 4 m E
    scale = 4.0 * tp.field.m
    rows = [
        [str(i), scale * rec.E.real, scale * rec.E.imag,
         rec.mismatch_residual, rec.imag_purity]
        for i, rec in enumerate(records)
    ]
    csv_path = out / "spectrum.csv"
    _write_csv(
        csv_path, ["index", "Re E", "Im E", "mismatch_residual", "imag_purity"], rows
    )
    worst = max((rec.imag_purity for rec in records[1:]), default=0.0)
    _banner(
        "spectrum",
        epsilon=cfg.epsilon,
        n_eigenvalues=len(records),
        max_imag_purity=_fmt(worst),
        out=csv_path,
    )
    if worst > 1e-8:
        bad = max(range(1, len(records)), key=lambda i: records[i].imag_purity)
        _banner(
            "spectrum",
            status="fail",
            reason="imaginary-purity violation",
            index=bad,
            imag_purity=_fmt(records[bad].imag_purity),
        )
        return EXIT_FAIL
    _banner("spectrum", status="pass")
    return EXIT_PASS


def _export_profile(tp, E, pm, n_points: int, path: Path) -> None:
    """Sample the unit-norm mode on a uniform grid and write it as CSV."""
    sol = build_regular_solution(tp, E, method="integrated")
    per = build_periodiser(tp, E, solution=sol)
    xs = np.linspace(-1.0, 1.0, n_points)
    chi, _, _ = eval_chi(per, xs)
    vals = chi * sol.eval(xs)
    vals = vals * math.exp(-pm.log_norm_u)
    rows = [
        [x, v.real, v.imag, abs(v)] for x, v in zip(xs, vals)
    ]
    _write_csv(path, ["x", "Re u", "Im u", "|u|"], rows)


def cmd_pseudomode(cfg: RunConfig) -> int:
    for theta in cfg.theta_values:
        if not 0.0 < theta < math.pi / 4:
            raise ConfigError(
                f"theta {theta!r} outside the open sector (0, pi/4)"
            )
    for lam in cfg.lam_values:
        if lam < 2.0:
            raise ConfigError(f"|lambda| {lam!r} below the minimum 2")
    tp = _build_problem(cfg)
    out = _prepare_out(cfg, "pseudomode")
    gen_c = cfg.general_constant if cfg.general_constant > 0 else None
    rows, violations = [], 0
    profile_index = 0
    for lam in cfg.lam_values:
        for theta in cfg.theta_values:
            E = energy_from_lambda(tp.field.m, lam, theta)
            pm = build_pseudomode(tp, E, general_constant=gen_c)
            log10_ratio = pm.log_ratio / _LN10
            log10_bound = (
                math.log10(pm.bound_rhs)
                if math.isfinite(pm.bound_rhs) and pm.bound_rhs > 0
                else math.nan
            )
            rows.append(
                [lam, theta, E.real, E.imag,
                 pm.log_norm_u / _LN10, pm.log_norm_residual / _LN10,
                 log10_ratio, log10_bound, -log10_ratio]
            )
            if math.isfinite(log10_bound) and log10_ratio > log10_bound:
                violations += 1
            if cfg.export_profile:
                n_points = cfg.nodes or 4001
                _export_profile(
                    tp, E, pm, n_points,
                    out / f"pseudomode_profile_{profile_index:02d}.csv",
                )
            profile_index += 1
    csv_path = out / "pseudomode.csv"
    _write_csv(
        csv_path,
        ["|lambda|", "theta", "Re E", "Im E", "log10 norm_u",
         "log10 norm_residual", "log10 ratio", "log10 bound_rhs",
         "log10 resolvent_lower"],
        rows,
    )
    _banner(
        "pseudomode",
        points=len(rows),
        bound_violations=violations,
        out=csv_path,
    )
    if violations:
        _banner("pseudomode", status="fail", reason="ratio above certified bound")
        return EXIT_FAIL
    _banner("pseudomode", status="pass")
    return EXIT_PASS


def _symmetry_defect(ests, n_re: int, n_im: int, partner) -> float:
    worst = 0.0
    for i in range(n_re):
        for j in range(n_im):
            a = ests[i * n_im + j]
            b = ests[partner(i, j)]
            if a.masked or b.masked:
                continue
            if not (math.isfinite(a.norm_estimate) and math.isfinite(b.norm_estimate)):
                continue
            worst = max(worst, abs(a.norm_estimate - b.norm_estimate) / a.norm_estimate)
    return worst


def cmd_resolvent_grid(cfg: RunConfig) -> int:
    if len(cfg.re_range) != 2 or len(cfg.im_range) != 2:
        raise ConfigError(
            "resolvent-grid needs re_range = [lo, hi] and im_range = [lo, hi]"
        )
    tp = _build_problem(cfg)
    out = _prepare_out(cfg, "resolvent-grid")
    n_basis = cfg.nodes or 64
    ests = pseudospectrum_grid(
        tp, cfg.re_range, cfg.im_range, cfg.n_re, cfg.n_im,
        n_basis=n_basis, jobs=cfg.jobs,
    )
    rows = [
        [e.E.real, e.E.imag,
         math.log10(e.norm_estimate) if e.norm_estimate > 0 else math.nan,
         str(int(e.converged)), str(int(e.masked))]
        for e in ests
    ]
    csv_path = out / "resolvent_grid.csv"
    _write_csv(
        csv_path,
        ["Re E", "Im E", "log10 norm_estimate", "converged", "masked"],
        rows,
    )
    n_masked = sum(e.masked for e in ests)
    n_conv = sum(e.converged for e in ests)
    _banner(
        "resolvent-grid",
        points=len(ests),
        converged=n_conv,
        masked=n_masked,
        out=csv_path,
    )

    if cfg.levels:
        fits = []
        for level in cfg.levels:
            try:
                fit = fit_level_line(ests, cfg.n_re, cfg.n_im, level)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            fits.append(
                {
                    "level_log10": level,
                    "exponent": fit.exponent,
                    "r_squared": fit.r_squared,
                    "n_points": int(len(fit.points)),
                }
            )
            _banner(
                "resolvent-grid",
                level=level,
                exponent=_fmt(fit.exponent),
                r_squared=_fmt(fit.r_squared),
            )
        _write_json(out / "level_lines.json", {"levels": fits})

    re_sym = math.isclose(cfg.re_range[0], -cfg.re_range[1])
    im_sym = math.isclose(cfg.im_range[0], -cfg.im_range[1])
    if re_sym and im_sym:
        defect = _symmetry_defect(
            ests, cfg.n_re, cfg.n_im,
            lambda i, j: (cfg.n_re - 1 - i) * cfg.n_im + (cfg.n_im - 1 - j),
        )
        _banner("resolvent-grid", symmetry="negation", max_rel_defect=_fmt(defect))
        if defect > 0.02:
            _banner("resolvent-grid", status="fail", reason="negation symmetry")
            return EXIT_FAIL
    if im_sym:
        defect = _symmetry_defect(
            ests, cfg.n_re, cfg.n_im,
            lambda i, j: i * cfg.n_im + (cfg.n_im - 1 - j),
        )
        _banner("resolvent-grid", symmetry="conjugation", max_rel_defect=_fmt(defect))
        if defect > 0.02:
            _banner("resolvent-grid", status="fail", reason="conjugation symmetry")
            return EXIT_FAIL
    _banner("resolvent-grid", status="pass")
    return EXIT_PASS


def cmd_sv_decay(cfg: RunConfig) -> int:
    tp = _build_problem(cfg)
    out = _prepare_out(cfg, "sv-decay")
    n_nodes = cfg.nodes or 1024
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            summary = sv_decay_summary(tp, n_nodes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    for w in caught:
        _banner("sv-decay", warning=f'"{w.message}"')
    rows = [
        [str(i + 1), sigma] for i, sigma in enumerate(summary.sigmas)
    ]
    csv_path = out / "sv_decay.csv"
    _write_csv(csv_path, ["n", "sigma_n"], rows)
    half_width = 1.96 * summary.slope_stderr
    payload = {
        "n_nodes": n_nodes,
        "n_converged": summary.n_converged,
        "fit_start": summary.fit_start,
        "slope": summary.slope,
        "slope_stderr": summary.slope_stderr,
        "slope_ci_95": [summary.slope - half_width, summary.slope + half_width],
        "sigma_1": float(summary.sigmas[0]),
    }
    _write_json(out / "sv_decay_summary.json", payload)
    _banner(
        "sv-decay",
        n_nodes=n_nodes,
        n_converged=summary.n_converged,
        slope=_fmt(summary.slope) if math.isfinite(summary.slope) else "nan",
        out=csv_path,
    )
    if not summary.slope <= -1.3:
        _banner("sv-decay", status="fail", reason="decay slope above -1.3")
        return EXIT_FAIL
    _banner("sv-decay", status="pass")
    return EXIT_PASS


def cmd_bessel_check(cfg: RunConfig) -> int:
    out = _prepare_out(cfg, "bessel-check")
    report = bessel_identity_report(
        seed=cfg.seed, n_samples=cfg.n_samples, order=cfg.order
    )
    all_pass = all(v for k, v in report.items() if k.endswith("_pass"))
    report["all_pass"] = bool(all_pass)
    json_path = out / "bessel_check.json"
    _write_json(json_path, report)
    _banner(
        "bessel-check",
        order=cfg.order,
        seed=cfg.seed,
        all_pass=str(all_pass).lower(),
        out=json_path,
    )
    if not all_pass:
        _banner("bessel-check", status="fail", reason="identity defect above tolerance")
        return EXIT_FAIL
    _banner("bessel-check", status="pass")
    return EXIT_PASS


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors map to the config exit code."""

    def error(self, message):
        raise ConfigError(message)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key/value config file")
    sub.add_argument("--epsilon", type=float, help="field parameter in (0, 1)")
    sub.add_argument(
        "--r", help="comma-separated odd-part coefficients, e.g. '1.0' or '1.0,0.5'"
    )
    sub.add_argument("--out", help="output directory (default: current)")
    sub.add_argument(
        "--nodes", type=int, help="discretization size for the active command"
    )
    sub.add_argument("--seed", type=int, help="seed for randomized checks")
    sub.add_argument("--jobs", type=int, help="worker processes for grid sweeps")


def build_parser() -> _Parser:
    parser = _Parser(prog="pseudosl", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("spectrum", help="eigenvalue table")
    _add_common(p)
    p.add_argument("--s-max", dest="s_max", type=float, help="scan ceiling for |E|")
    p.add_argument(
        "--max-count", dest="max_count", type=int, help="eigenvalue count cap"
    )
    p.set_defaults(handler=cmd_spectrum)

    p = subs.add_parser("pseudomode", help="quasimode certification grid")
    _add_common(p)
    p.add_argument("--lam", help="comma-separated |lambda| values")
    p.add_argument("--theta", help="comma-separated sector angles in (0, pi/4)")
    p.add_argument(
        "--export-profile",
        dest="export_profile",
        action="store_const",
        const=True,
        help="write unit-norm mode samples per grid point",
    )
    p.add_argument(
        "--general-constant",
        dest="general_constant",
        type=float,
        help="calibrated envelope constant for nonlinear fields",
    )
    p.set_defaults(handler=cmd_pseudomode)

    p = subs.add_parser("resolvent-grid", help="resolvent-norm sweep")
    _add_common(p)
    p.add_argument("--re-range", dest="re_range", help="Re E window as 'lo,hi'")
    p.add_argument("--im-range", dest="im_range", help="Im E window as 'lo,hi'")
    p.add_argument("--n-re", dest="n_re", type=int, help="grid points along Re")
    p.add_argument("--n-im", dest="n_im", type=int, help="grid points along Im")
    p.add_argument(
        "--levels", help="comma-separated log10 levels to trace and fit"
    )
    p.set_defaults(handler=cmd_resolvent_grid)

    p = subs.add_parser("sv-decay", help="singular-value decay probe")
    _add_common(p)
    p.set_defaults(handler=cmd_sv_decay)

    p = subs.add_parser("bessel-check", help="special-function identity suite")
    _add_common(p)
    p.add_argument(
        "--samples", dest="n_samples", type=int, help="draws per identity"
    )
    p.add_argument("--order", type=float, help="function order under test")
    p.set_defaults(handler=cmd_bessel_check)

    return parser


_COMMON_KEYS = ("epsilon", "r", "out", "nodes", "seed", "jobs")
_EXTRA_KEYS = (
    "s_max", "max_count", "lam", "theta", "export_profile", "general_constant",
    "re_range", "im_range", "n_re", "n_im", "levels", "n_samples", "order",
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {
            key: getattr(args, key)
            for key in _COMMON_KEYS + _EXTRA_KEYS
            if hasattr(args, key)
        }
        cfg = resolve_config(args.config, overrides)
        return args.handler(cfg)
    except ConfigError as exc:
        print(f"[config] error={exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
