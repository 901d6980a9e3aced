"""Command-line entry point: ``poincare`` and ``sweep`` subcommands."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import harness, reports
from .measure import MeasureError, build_grid_measure, check_uniform_convexity, potential_from_spec
from .spectral import HypothesisError, SpectralError, poincare_spectrum
from .stein import SteinError
from .transport import TransportError

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_HYPOTHESIS = 2
EXIT_CERTIFICATE = 3
EXIT_USAGE = 64

EXPERIMENTS = ("poincare-stability", "coordinate-variant", "lsi-stability", "herbst", "tail")
FAMILIES = ("gaussian", "gaussian-scaled", "quartic", "tilted", "bimodal", "bimodal-rescaled")
DEFAULT_DELTAS = (0.01, 0.02, 0.05, 0.1, 0.2)


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class ExperimentConfig:
    command: str = "sweep"
    experiment: Optional[str] = None
    family: str = "gaussian"
    variance: float = 1.0
    delta: Optional[float] = None
    a: float = 2.0
    s: float = 0.5
    shift: float = 0.0
    values: Optional[List[float]] = None
    k: int = 1
    dim: int = 1
    theta: float = 0.0
    p_grid: List[float] = (0.5, 1.0)
    F: str = "linear"
    L: float = 1.0
    t: List[float] = (1.0, 2.0, 3.0)
    n_eigs: int = 3
    n_test_functions: int = 0
    seed: int = 0
    grid_points: int = 2001
    domain_halfwidth: Optional[float] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("p_grid", "t", "values"):
            if d[key] is not None:
                d[key] = [float(v) for v in d[key]]
        return d


CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}


def _float(key, raw):
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    return v


def _int(key, raw):
    v = _float(key, raw)
    if v != int(v):
        raise ConfigError(key, f"expected an integer, got {raw!r}")
    return int(v)


def parse_grid(key: str, raw) -> List[float]:
    """``lo:hi:n`` (inclusive linspace) or a comma-separated list."""
    if isinstance(raw, (list, tuple)):
        return [_float(key, v) for v in raw]
    text = str(raw).strip()
    if text.count(":") == 2:
        lo, hi, n = text.split(":")
        n = _int(key, n)
        if n < 1:
            raise ConfigError(key, "grid needs at least one point")
        return [float(v) for v in np.linspace(_float(key, lo), _float(key, hi), n)]
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError(key, "empty list")
    return [_float(key, p) for p in parts]


_CONVERTERS = {
    "variance": _float, "delta": _float, "a": _float, "s": _float, "shift": _float, "theta": _float, "L": _float,
    "domain_halfwidth": _float, "k": _int, "dim": _int, "n_eigs": _int, "n_test_functions": _int, "seed": _int,
    "grid_points": _int, "values": parse_grid, "p_grid": parse_grid, "t": parse_grid,
    "experiment": lambda k, v: str(v), "family": lambda k, v: str(v), "F": lambda k, v: str(v),
    "command": lambda k, v: str(v),
}
_ALIASES = {"deltas": "values", "lambda": "shift", "c": "shift"}


def _canonical_key(key: str) -> str:
    key = key.strip().replace("-", "_")
    if key in ("f",):
        key = "F"
    if key in ("l",):
        key = "L"
    return _ALIASES.get(key, key)


def build_config(settings: dict) -> ExperimentConfig:
    """Validate raw key/value settings into an :class:`ExperimentConfig`."""
    cfg = ExperimentConfig()
    for raw_key, raw in settings.items():
        key = _canonical_key(raw_key)
        if key not in CONFIG_KEYS:
            raise ConfigError(raw_key, "unknown key")
        if raw is None:
            continue
        setattr(cfg, key, _CONVERTERS[key](key, raw))
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    cfg.family = cfg.family.lower().replace("_", "-")
    if cfg.family not in FAMILIES:
        raise ConfigError("family", f"unknown family {cfg.family!r}")
    if cfg.experiment is not None:
        cfg.experiment = cfg.experiment.lower().replace("_", "-")
        if cfg.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"unknown experiment {cfg.experiment!r}")
    if cfg.variance <= 0:
        raise ConfigError("variance", "must be positive")
    if cfg.s <= 0:
        raise ConfigError("s", "must be positive")
    if cfg.family == "quartic":
        vals = ([cfg.delta] if cfg.delta is not None else []) + list(cfg.values or [])
        if any(v < 0 for v in vals):
            raise ConfigError("delta", "quartic needs delta >= 0 (negative values are not convex)")
    if cfg.family == "gaussian-scaled":
        vals = ([cfg.delta] if cfg.delta is not None else []) + list(cfg.values or [])
        if any(not 0 <= v < 1 for v in vals):
            raise ConfigError("delta", "gaussian-scaled needs 0 <= delta < 1")
    if cfg.grid_points < 101 or cfg.grid_points % 2 == 0:
        raise ConfigError("grid_points", "must be odd and at least 101")
    if cfg.domain_halfwidth is not None and cfg.domain_halfwidth <= 0:
        raise ConfigError("domain_halfwidth", "must be positive")
    if cfg.dim not in (1, 2):
        raise ConfigError("dim", "must be 1 or 2")
    if cfg.k not in (1, 2):
        raise ConfigError("k", "must be 1 or 2")
    if cfg.L <= 0:
        raise ConfigError("L", "must be positive")
    if cfg.n_eigs < 1:
        raise ConfigError("n_eigs", "must be at least 1")
    if cfg.n_test_functions < 0:
        raise ConfigError("n_test_functions", "must be nonnegative")
    if any(t <= 0 for t in cfg.t):
        raise ConfigError("t", "must be positive")
    if cfg.F not in ("linear", "abs"):
        raise ConfigError("F", "choose linear or abs")


def read_config_file(path) -> dict:
    """Flat ``key = value`` text, or a JSON report whose ``config`` block is reused."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        block = data.get("config", data)
        if not isinstance(block, dict):
            raise ConfigError("config", "config block must be an object")
        return dict(block)
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def _common(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="key=value file or a JSON report to re-run")
    p.add_argument("--seed", default=S)
    p.add_argument("--grid-points", dest="grid_points", default=S)
    p.add_argument("--domain-halfwidth", dest="domain_halfwidth", default=S)
    p.add_argument("--out", default=S, help="JSON report path")
    p.add_argument("--family", default=S, help=", ".join(FAMILIES))
    p.add_argument("--variance", default=S)
    p.add_argument("--delta", default=S)
    p.add_argument("--a", default=S)
    p.add_argument("--s", default=S)
    p.add_argument("--shift", "--lambda", dest="shift", default=S, help="tilt c in x^2/2 + c x")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="be-stability-lab", description="Stability experiments for Gaussian functional inequalities.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    p = sub.add_parser("poincare", help="Poincare constant and low spectrum of one measure")
    _common(p)
    p.add_argument("--n-eigs", dest="n_eigs", default=argparse.SUPPRESS)
    p.add_argument("--csv", default=argparse.SUPPRESS, help="eigenfunction CSV path")
    s = sub.add_parser("sweep", help="run a stability experiment over a family")
    _common(s)
    s.add_argument("--experiment", default=argparse.SUPPRESS, help=", ".join(EXPERIMENTS))
    s.add_argument("--deltas", "--values", dest="values", default=argparse.SUPPRESS, help="lo:hi:n or a,b,c")
    s.add_argument("--k", default=argparse.SUPPRESS)
    s.add_argument("--dim", default=argparse.SUPPRESS)
    s.add_argument("--theta", default=argparse.SUPPRESS)
    s.add_argument("--p-grid", dest="p_grid", default=argparse.SUPPRESS)
    s.add_argument("--F", dest="F", default=argparse.SUPPRESS)
    s.add_argument("--L", dest="L", default=argparse.SUPPRESS)
    s.add_argument("--t", default=argparse.SUPPRESS)
    s.add_argument("--n-test-functions", dest="n_test_functions", default=argparse.SUPPRESS)
    s.add_argument("--csv", default=argparse.SUPPRESS, help="flat CSV path (defaults next to --out)")
    s.add_argument("--check", action="store_true", help="exit 3 when a certificate row fails")
    return parser


OUTPUT_KEYS = ("config", "out", "csv", "check")


def resolve(argv: Sequence[str]):
    """Parse ``argv`` into ``(config, outputs)``; flags override file settings."""
    ns = vars(make_parser().parse_args(list(argv)))
    command = ns.pop("command", None)
    if command is None:
        raise ConfigError("command", "choose poincare or sweep")
    outputs = {k: ns.pop(k) for k in OUTPUT_KEYS if k in ns}
    settings = {}
    if "config" in outputs:
        try:
            settings.update(read_config_file(outputs["config"]))
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
    settings.update(ns)
    settings["command"] = command
    cfg = build_config(settings)
    if command == "sweep" and cfg.experiment is None:
        raise ConfigError("experiment", "sweep needs --experiment")
    return cfg, outputs


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _grid(cfg: ExperimentConfig) -> harness.GridOptions:
    return harness.GridOptions(cfg.grid_points, cfg.domain_halfwidth)


def _single_potential(cfg: ExperimentConfig):
    fam = cfg.family
    if fam in ("bimodal", "bimodal-rescaled"):
        pot = potential_from_spec("mixture", a=cfg.a, s=cfg.s)
        if fam == "bimodal-rescaled":
            from .measure import scaled

            pot = scaled(pot, harness.unit_poincare_scale(pot, _grid(cfg)))
        return pot
    if fam == "quartic":
        return potential_from_spec("quartic", delta=cfg.delta if cfg.delta is not None else 0.0)
    if fam == "tilted":
        return potential_from_spec("tilted", lam=cfg.shift)
    if fam == "gaussian-scaled":
        return potential_from_spec("gaussian", variance=1.0 - (cfg.delta or 0.0))
    return potential_from_spec("gaussian", variance=cfg.variance)


def cmd_poincare(cfg: ExperimentConfig, outputs: dict) -> int:
    m = _grid(cfg).build(_single_potential(cfg))
    result = poincare_spectrum(m, cfg.n_eigs)
    margin = check_uniform_convexity(m)
    print(f"C_P = {result.poincare_constant:.3f}")
    print("eigenvalues = " + ", ".join(f"{v:.6f}" for v in result.eigenvalues))
    print(f"uniform = {str(margin.passed).lower()}  (convexity margin {margin.margin:.3e})")
    report = {
        "command": "poincare",
        "config": cfg.to_dict(),
        "spectrum": result.to_dict(),
        "uniform": margin.passed,
        "convexity_margin": margin.margin,
    }
    if "out" in outputs:
        reports.write_json(outputs["out"], report)
    if "csv" in outputs:
        reports.write_spectrum_csv(outputs["csv"], result)
    return EXIT_OK


def run_experiment(cfg: ExperimentConfig) -> harness.StabilityReport:
    grid = _grid(cfg)
    exp = cfg.experiment
    fam_name = "bimodal-rescaled" if cfg.family == "bimodal" else cfg.family
    if exp in ("herbst", "tail"):
        m = grid.build(_single_potential(cfg))
        desc = {"name": cfg.family, **_single_potential(cfg).describe()}
        if exp == "herbst":
            return harness.herbst_report(cfg.F, m, cfg.L, desc)
        return harness.tail_report(m, cfg.t, desc)
    if fam_name == "bimodal-rescaled":
        values = cfg.values or [cfg.a]
        family = harness.make_family(fam_name, values, grid=grid, s=cfg.s)
    else:
        default = {"gaussian": [cfg.variance], "tilted": [cfg.shift]}.get(fam_name, list(DEFAULT_DELTAS))
        if cfg.delta is not None and cfg.values is None:
            default = [cfg.delta]
        family = harness.make_family(fam_name, cfg.values or default, dim=cfg.dim, theta=cfg.theta, grid=grid)
    if exp == "poincare-stability":
        return harness.run_poincare_stability(family, cfg.k, cfg.seed, cfg.n_test_functions)
    if exp == "coordinate-variant":
        return harness.run_coordinate_variant(family, cfg.k)
    return harness.run_lsi_stability(family, cfg.p_grid)


def cmd_sweep(cfg: ExperimentConfig, outputs: dict) -> int:
    report = run_experiment(cfg)
    payload = {"command": "sweep", "config": cfg.to_dict(), **report.to_dict()}
    for row in report.rows:
        status = "skipped" if row.get("skipped") else ("ok" if row.get("certificate", True) else "FAIL")
        eps = row.get("eps")
        w1 = row.get("w1")
        print(
            f"{report.experiment} {report.family.get('name')} param={row.get('param')} "
            f"eps={'-' if eps is None else f'{eps:.4g}'} w1={'-' if w1 is None else f'{w1:.4g}'} {status}"
        )
    if report.exponent is not None:
        e = report.exponent
        print(f"exponent = {e.slope:.4f} [{e.ci_low:.4f}, {e.ci_high:.4f}]")
    if "out" in outputs:
        reports.write_json(outputs["out"], payload)
        csv_path = outputs.get("csv") or str(Path(outputs["out"]).with_suffix(".csv"))
        reports.write_csv(csv_path, reports.SWEEP_COLUMNS, report.csv_rows())
    elif "csv" in outputs:
        reports.write_csv(outputs["csv"], reports.SWEEP_COLUMNS, report.csv_rows())
    if outputs.get("check") and not report.passed:
        return EXIT_CERTIFICATE
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg, outputs = resolve(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if cfg.command == "poincare":
            return cmd_poincare(cfg, outputs)
        return cmd_sweep(cfg, outputs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HypothesisError as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (SpectralError, TransportError, SteinError, harness.HarnessError, MeasureError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
