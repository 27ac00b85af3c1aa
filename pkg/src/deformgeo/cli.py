"""Command-line driver.

    deformgeo evaluate CONFIG
    deformgeo verify SCENARIO [--resolution N] [--param KEY=VALUE ...]
    deformgeo recover GBAR G [--grid N]
    deformgeo list-scenarios

Common flags: --scheme {analytic,central,richardson}, --step H, --out PATH,
--format {csv,json}.  Exit codes: 0 ok, 1 verification failure, 2 config
error, 3 numerical error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from . import scenarios as scn
from .chart_fields import AnalyticPartialUnavailable, Chart, DifferentiationScheme, MatrixField, StencilError
from .deformation import (
    DeformationError, DeformationField, RecoveryError, recover_deformation,
    recovered_deformation_field,
)
from .exprlang import DomainError, ExprError, parse
from .metric_geometry import MetricError
from .pipeline import QUANTITIES, DeformedGeometry

__all__ = ["ConfigError", "GeometryConfig", "load_config", "run_evaluate", "run_verify",
           "run_recover", "flatten", "write_report", "main"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
ILL_CONDITIONED = 1e12
RECOVERY_RESIDUAL_TOL = 1e-9


class ConfigError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

class GeometryConfig:
    """Parsed geometry definition: chart, ḡ, P (or a metric to recover it from)."""

    def __init__(self, chart: Chart, gbar: MatrixField, deformation: Optional[MatrixField],
                 recover_from: Optional[MatrixField], scheme: DifferentiationScheme,
                 outputs: Sequence[str], points: np.ndarray, validation_resolution: int = 11,
                 source_hash: str = ""):
        self.chart = chart
        self.gbar = gbar
        self.deformation = deformation
        self.recover_from = recover_from
        self.scheme = scheme
        self.outputs = list(outputs)
        self.points = points
        self.validation_resolution = validation_resolution
        self.source_hash = source_hash


class _Source:
    """Loaded YAML document that can point back at file lines for error messages."""

    def __init__(self, path):
        self.path = str(path)
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
        try:
            self.node = yaml.compose(raw.decode("utf-8"), Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(raw)
        except (yaml.YAMLError, UnicodeDecodeError) as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
            problem = getattr(exc, "problem", None) or str(exc)
            raise ConfigError(f"{where}: {problem}") from None
        if not isinstance(self.data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        self.digest = hashlib.sha256(raw).hexdigest()

    def where(self, *keys) -> str:
        """``file:line: key[0][1]`` for the deepest node that exists along `keys`."""
        node, line = self.node, 1
        for key in keys:
            child = None
            if isinstance(node, yaml.MappingNode):
                for k, v in node.value:
                    if k.value == key:
                        child = v
                        break
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                child = node.value[key]
            if child is None:
                break
            node = child
        if node is not None:
            line = node.start_mark.line + 1
        label = "".join(f"[{k}]" if isinstance(k, int) else (f".{k}" if i else k)
                        for i, k in enumerate(keys))
        return f"{self.path}:{line}: {label}" if label else f"{self.path}:{line}"

    def error(self, message: str, *keys) -> ConfigError:
        return ConfigError(f"{self.where(*keys)}: {message}")


def _require(src: _Source, data: dict, key: str, *parent):
    if not isinstance(data, dict) or key not in data:
        raise src.error(f"missing key {key!r}", *parent)
    return data[key]


def _parse_chart(src: _Source) -> Chart:
    section = _require(src, src.data, "chart")
    if not isinstance(section, dict):
        raise src.error("must be a mapping", "chart")
    names = _require(src, section, "coordinates", "chart")
    box = _require(src, section, "box", "chart")
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise src.error("must be a list of names", "chart", "coordinates")
    try:
        if isinstance(box, dict):
            intervals = [box[n] for n in names]
        else:
            intervals = list(box)
        lower = [float(iv[0]) for iv in intervals]
        upper = [float(iv[1]) for iv in intervals]
        excluded = section.get("excluded", []) or []
        return Chart(names, lower, upper, [(e[0], e[1]) for e in excluded])
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise src.error(f"invalid box ({exc})", "chart", "box") from None


def _parse_matrix(src: _Source, key: str, chart: Chart) -> MatrixField:
    value = src.data[key]
    n = chart.dim
    if not (isinstance(value, list) and len(value) == n
            and all(isinstance(r, list) and len(r) == n for r in value)):
        raise src.error(f"must be a {n}x{n} array of expressions", key)
    rows = []
    for i, row in enumerate(value):
        out = []
        for j, item in enumerate(row):
            text = str(item) if isinstance(item, (int, float)) else item
            if not isinstance(text, str):
                raise src.error("expected an expression string", key, i, j)
            try:
                out.append(parse(text, chart.names))
            except (ExprError, ValueError) as exc:
                raise src.error(str(exc), key, i, j) from None
        rows.append(out)
    return MatrixField.from_exprs(rows, chart)


def _parse_scheme(src: _Source) -> DifferentiationScheme:
    section = src.data.get("scheme", {}) or {}
    try:
        return DifferentiationScheme(str(section.get("mode", "analytic")),
                                     float(section.get("step", 1e-5)),
                                     int(section.get("levels", 2)))
    except (ValueError, TypeError, AttributeError) as exc:
        raise src.error(str(exc), "scheme") from None


def _parse_points(src: _Source, chart: Chart, scheme: DifferentiationScheme) -> np.ndarray:
    grid = src.data.get("grid", {}) or {}
    if not isinstance(grid, dict):
        raise src.error("must be a mapping", "grid")
    if "points" in grid:
        try:
            pts = np.array(grid["points"], dtype=float).reshape(-1, chart.dim)
        except (ValueError, TypeError) as exc:
            raise src.error(str(exc), "grid", "points") from None
        for i, p in enumerate(pts):
            if not chart.contains(p):
                raise src.error(f"{p.tolist()} outside the chart box", "grid", "points", i)
        return pts
    try:
        resolution = int(grid.get("resolution", 11))
        margin = grid.get("margin")
        margin = scheme.stencil_margin(chart) if margin is None else float(margin)
        return chart.grid(resolution, margin)
    except (ValueError, TypeError) as exc:
        raise src.error(str(exc), "grid") from None


def load_config(path, scheme_override: Optional[DifferentiationScheme] = None) -> GeometryConfig:
    """Read a YAML geometry definition (see README for the schema)."""
    src = _Source(path)
    data = src.data
    chart = _parse_chart(src)
    _require(src, data, "reference_metric")
    gbar = _parse_matrix(src, "reference_metric", chart)
    has_p = "deformation" in data
    has_g = "recover_from" in data
    if has_p == has_g:
        raise src.error("give exactly one of 'deformation' or 'recover_from'")
    P = _parse_matrix(src, "deformation", chart) if has_p else None
    G = _parse_matrix(src, "recover_from", chart) if has_g else None
    scheme = scheme_override or _parse_scheme(src)
    outputs = data.get("outputs", ["g", "Lbar", "L", "Lambda", "Gamma"])
    if not isinstance(outputs, list) or any(o not in QUANTITIES for o in outputs):
        raise src.error(f"choose from {', '.join(QUANTITIES)}", "outputs")
    if "K" in outputs and chart.dim != 2:
        raise src.error("K is only defined for 2-dimensional charts", "outputs")
    points = _parse_points(src, chart, scheme)
    try:
        vres = int(data.get("validation_resolution", 11))
    except (TypeError, ValueError):
        raise src.error("must be an integer", "validation_resolution") from None
    return GeometryConfig(chart, gbar, P, G, scheme, outputs, points, vres, src.digest)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

def flatten(name: str, value) -> Dict[str, float]:
    """Row-major flattening with index-suffixed column names (Gamma_0_1_1)."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return {name: float(arr)}
    return {"_".join([name, *map(str, idx)]): float(arr[idx]) for idx in np.ndindex(arr.shape)}


def _scheme_dict(scheme: DifferentiationScheme) -> dict:
    return {"mode": scheme.mode, "step": scheme.step, "levels": scheme.levels}


def _report(kind: str, coords: Sequence[str], records: List[dict], checks: List[dict],
            scheme: DifferentiationScheme, source_hash: str, extra: Optional[dict] = None) -> dict:
    passed = all(c["passed"] for c in checks)
    report = {
        "kind": kind,
        "coordinates": list(coords),
        "points": records,
        "summary": {"passed": passed, "checks": checks},
        "provenance": {
            "config_hash": source_hash,
            "scheme": _scheme_dict(scheme),
            "tool_version": __version__,
            "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        },
    }
    if extra:
        report.update(extra)
    return report


def report_body(report: dict) -> str:
    """Canonical JSON text of the report without the timestamp."""
    body = json.loads(json.dumps(report))
    body["provenance"].pop("generated_at", None)
    return json.dumps(body, sort_keys=True, indent=2)


def to_csv(report: dict) -> str:
    buf = io.StringIO()
    records = report["points"]
    columns = list(report["coordinates"])
    if records:
        columns += list(records[0]["values"])
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        writer.writerow([repr(float(v)) for v in rec["coords"]]
                        + [repr(float(v)) for v in rec["values"].values()])
    return buf.getvalue()


def write_report(report: dict, fmt: str, out: Optional[str]) -> None:
    if fmt == "json":
        text = json.dumps(report, indent=2) + "\n"
    else:
        text = to_csv(report)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    if fmt == "csv" or out:
        for c in report["summary"]["checks"]:
            status = "PASS" if c["passed"] else "FAIL"
            sys.stderr.write(f"{status} {c['name']}: max {c['max_residual']:.3e} "
                             f"(tol {c['tolerance']:.0e}, expected {c['expectation']})\n")


# --------------------------------------------------------------------------
# verbs
# --------------------------------------------------------------------------

def run_evaluate(config: GeometryConfig) -> dict:
    """Evaluate the requested quantities at every configured point."""
    chart = config.chart
    checks: Dict[str, scn.CheckTracker] = {}

    def track(name, tol):
        return checks.setdefault(name, scn.CheckTracker(name, tol))

    if config.deformation is not None:
        P = DeformationField(config.deformation, config.gbar)
        P.validate(config.validation_resolution)
        P.validate(points=config.points)
        geo = DeformedGeometry(config.gbar, P, config.scheme)
    else:
        P = recovered_deformation_field(config.gbar, config.recover_from)
        geo = DeformedGeometry(config.gbar, P, config.scheme, g=config.recover_from)
    need_curv = "K" in config.outputs
    records = []
    roundtrip = scn.CheckTracker("recovery_roundtrip", RECOVERY_RESIDUAL_TOL)
    for p in config.points:
        pg = geo.at(p, curvature=need_curv)
        values: Dict[str, float] = {}
        if config.recover_from is not None:
            values.update(flatten("P", pg.P))
            g_target = config.recover_from(p)
            roundtrip.add(np.max(np.abs(pg.P.T @ config.gbar(p) @ pg.P - g_target))
                          / np.max(np.abs(g_target)), p)
        for name in config.outputs:
            values.update(flatten(name, pg.quantity(name)))
        records.append({"coords": [float(c) for c in p], "values": values})
        scn.structural_checks(pg, geo, track)
    results = [t.result().as_dict() for t in checks.values()]
    if config.recover_from is not None:
        results.insert(0, roundtrip.result().as_dict())
    return _report("evaluate", chart.names, records, results, config.scheme,
                   config.source_hash)


def run_verify(scenario_name: str, resolution: int = 21,
               scheme: Optional[DifferentiationScheme] = None, params: Optional[dict] = None) -> dict:
    """Run every closed-form and structural check of a built-in scenario."""
    try:
        sc = scn.by_name(scenario_name, **(params or {}))
    except (ValueError, TypeError, ExprError) as exc:
        raise ConfigError(f"scenario {scenario_name!r}: {exc}") from None
    scheme = scheme or DifferentiationScheme()
    results = scn.verify_scenario(sc, resolution, scheme)
    digest = hashlib.sha256(json.dumps(
        {"scenario": scenario_name, "resolution": resolution, "params": params or {}},
        sort_keys=True).encode()).hexdigest()
    return _report("verify", sc.chart.names, [], [r.as_dict() for r in results], scheme, digest,
                   {"scenario": scenario_name, "resolution": resolution,
                    "parameters": params or {}})


def _load_metric_file(path) -> tuple:
    src = _Source(path)
    chart = _parse_chart(src)
    _require(src, src.data, "metric")
    return chart, _parse_matrix(src, "metric", chart), src.digest


def run_recover(gbar_file, g_file, grid: int = 11) -> dict:
    """Pointwise P with PᵀḡP = g on a grid, plus the roundtrip residual."""
    chart_a, gbar, ha = _load_metric_file(gbar_file)
    chart_b, g, hb = _load_metric_file(g_file)
    if chart_a.names != chart_b.names or chart_a.lower != chart_b.lower or chart_a.upper != chart_b.upper:
        raise ConfigError(f"{gbar_file} and {g_file} declare different charts")
    scheme = DifferentiationScheme()
    tracker = scn.CheckTracker("recovery_roundtrip", RECOVERY_RESIDUAL_TOL)
    records = []
    for p in chart_a.grid(grid):
        gb, gg = gbar(p), g(p)
        try:
            P = recover_deformation(gb, gg)
        except RecoveryError as exc:
            raise NumericalError(f"at {p.tolist()}: {exc}") from None
        cond = float(np.linalg.cond(gb) * np.linalg.cond(gg))
        if cond > ILL_CONDITIONED:
            raise NumericalError(f"at {p.tolist()}: metric pair ill-conditioned "
                                 f"(condition number {cond:.3e} > {ILL_CONDITIONED:.0e})")
        res = float(np.max(np.abs(P.T @ gb @ P - gg)) / np.max(np.abs(gg)))
        tracker.add(res, p)
        values = flatten("P", P)
        values["residual"] = res
        records.append({"coords": [float(c) for c in p], "values": values})
    digest = hashlib.sha256((ha + hb).encode()).hexdigest()
    return _report("recover", chart_a.names, records, [tracker.result().as_dict()], scheme, digest)


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def _param(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, float(value)
    except ValueError:
        return key, value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scheme", choices=["analytic", "central", "richardson"], default=None)
    common.add_argument("--step", type=float, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--format", choices=["csv", "json"], default="json")

    parser = argparse.ArgumentParser(prog="deformgeo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    ev = sub.add_parser("evaluate", parents=[common], help="evaluate a geometry config")
    ev.add_argument("config")
    ve = sub.add_parser("verify", parents=[common], help="run a built-in scenario's checks")
    ve.add_argument("scenario")
    ve.add_argument("--resolution", type=int, default=21)
    ve.add_argument("--param", type=_param, action="append", default=[],
                    help="scenario parameter, e.g. --param R=2 --param phi=0.4")
    re_ = sub.add_parser("recover", parents=[common], help="recover P from two metric files")
    re_.add_argument("gbar")
    re_.add_argument("g")
    re_.add_argument("--grid", type=int, default=11)
    sub.add_parser("list-scenarios", help="print built-in scenario names")
    return parser


def _scheme_from_args(args) -> Optional[DifferentiationScheme]:
    if args.scheme is None and args.step is None:
        return None
    return DifferentiationScheme(args.scheme or "analytic", args.step or 1e-5)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "list-scenarios":
        for name in scn.SCENARIO_NAMES:
            print(name)
        return EXIT_OK
    try:
        scheme = _scheme_from_args(args)
        if args.verb == "evaluate":
            report = run_evaluate(load_config(args.config, scheme))
        elif args.verb == "verify":
            if args.resolution < 1:
                raise ConfigError("--resolution must be positive")
            report = run_verify(args.scenario, args.resolution, scheme, dict(args.param))
        else:
            report = run_recover(args.gbar, args.g, args.grid)
    except (ConfigError, KeyError, DeformationError, TypeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        sys.stderr.write(f"config error: {msg}\n")
        return EXIT_CONFIG
    except (NumericalError, MetricError, RecoveryError, StencilError, DomainError,
            AnalyticPartialUnavailable, np.linalg.LinAlgError, ArithmeticError) as exc:
        sys.stderr.write(f"numerical error: {exc}\n")
        return EXIT_NUMERIC
    write_report(report, args.format, args.out)
    return EXIT_OK if report["summary"]["passed"] else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
