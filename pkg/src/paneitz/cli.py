"""Command-line front end.

    paneitz <command> [--dim N] [--radius R|half-space] [--alpha A] [--eps E ...]
                      [--kappa K ...] [--grid n] [--tol t] [--out-dir DIR]
                      [--config FILE.json] [--expand] [--svg]

Each command writes ``<command>.json`` and, where there is a table,
``<command>.csv`` into the output directory. Numbers are rendered with 17
significant digits and no timestamps are written, so identical runs produce
identical bytes.

Exit codes: 0 success, 1 usage error, 2 accuracy check failed,
3 non-convergence or bracket failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from paneitz import __version__
from paneitz.ball import (
    BallProblem,
    BracketError,
    Classification,
    balance_check,
    bubble_init,
    linear_stability_alpha,
    minimize_quotient,
    perturbed_constant_init,
    threshold_scan,
)
from paneitz.bubble import BubbleParams, bubble_pde_residual
from paneitz.chart import (
    CurvatureModel,
    inverse_jacobian_error,
    jacobian_expansion_error,
    phi_jacobian,
)
from paneitz.constants import (
    DomainError,
    alpha_bar,
    ball_volume,
    beta_closed_form,
    dimension_params,
)
from paneitz.quadrature import (
    angular_moments,
    beta_reduction_factor,
    chart_critical_norm,
    curvature_slopes,
    i_terms,
    j_integrals,
)
from paneitz.rayleigh import (
    FitModel,
    asymptotic_fit,
    constant_quotient,
    fit_window,
    halfspace_bubble_quotient,
    halfspace_constant,
    secondary_norm_orders,
)

SCHEMA_VERSION = "1"
COMMANDS = ("constants", "bubble-residual", "jintegrals", "asymptotics", "geometry-check", "minimize", "threshold")
HALF_SPACE = "HALF_SPACE"

EXIT_OK, EXIT_USAGE, EXIT_ACCURACY, EXIT_NONCONVERGENCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    N: int = 6
    domain: Any = 1.0
    alpha: Optional[float] = None
    eps_list: list = field(default_factory=list)
    kappas: list = field(default_factory=list)
    grid: int = 512
    tol: Optional[float] = None
    out_dir: str = "."
    expand: bool = False
    svg: bool = False

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 5:
            raise UsageError(f"--dim must be an integer N >= 5, got {self.N}")
        self.N = int(self.N)
        if self.domain != HALF_SPACE:
            if not (isinstance(self.domain, (int, float)) and self.domain > 0 and math.isfinite(self.domain)):
                raise UsageError(f"--radius must be positive or 'half-space', got {self.domain}")
            self.domain = float(self.domain)
        if self.alpha is not None and not self.alpha > 0:
            raise UsageError(f"--alpha must be positive, got {self.alpha}")
        if any(not (e > 0) for e in self.eps_list):
            raise UsageError("--eps values must be positive")
        if self.kappas and len(self.kappas) != self.N - 1:
            raise UsageError(f"--kappa must be given N-1={self.N - 1} times")
        if int(self.grid) != self.grid or self.grid < 16:
            raise UsageError(f"--grid must be an integer >= 16, got {self.grid}")
        self.grid = int(self.grid)
        if self.tol is not None and not self.tol > 0:
            raise UsageError("--tol must be positive")
        if self.command in ("minimize", "threshold") and self.domain == HALF_SPACE:
            raise UsageError(f"{self.command} needs a finite --radius")
        return self


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _radius(text: str):
    if text.lower() in ("half-space", "half_space", "halfspace"):
        return HALF_SPACE
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a radius: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="paneitz", description="Bubble, curvature and ball-minimization checks.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--dim", type=int, dest="N")
    p.add_argument("--radius", type=_radius, dest="domain")
    p.add_argument("--alpha", type=float)
    p.add_argument("--eps", type=float, action="append", dest="eps_list")
    p.add_argument("--kappa", type=float, action="append", dest="kappas")
    p.add_argument("--grid", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--config")
    p.add_argument("--expand", action="store_true", default=None)
    p.add_argument("--svg", action="store_true", default=None)
    p.add_argument("--version", action="version", version=__version__)
    return p


_FILE_KEYS = {
    "dim": "N", "N": "N", "radius": "domain", "alpha": "alpha", "eps": "eps_list",
    "kappa": "kappas", "grid": "grid", "tol": "tol", "out_dir": "out_dir",
    "expand": "expand", "svg": "svg",
}


def _file_values(path: str, command: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    merged = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    merged.update(doc.get(command, {}))
    out = {}
    for k, v in merged.items():
        if k not in _FILE_KEYS:
            raise UsageError(f"unknown config key {k!r}")
        key = _FILE_KEYS[k]
        if key == "domain" and isinstance(v, str):
            v = _radius(v)
        if key in ("eps_list", "kappas") and not isinstance(v, list):
            v = [v]
        out[key] = v
    return out


def parse_config(argv) -> RunConfig:
    """Flags override config-file values, which override defaults."""
    ns = build_parser().parse_args(argv)
    values = _file_values(ns.config, ns.command) if ns.config else {}
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = v
    values["command"] = ns.command
    try:
        return RunConfig(**values).validate()
    except TypeError as exc:
        raise UsageError(str(exc))


# --- rendering ----------------------------------------------------------------


def fmt(x) -> str:
    return format(float(x), ".17g")


def _to_json(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_to_json(v, indent + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _to_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    return json.dumps(str(obj))


def write_json(path: Path, payload: dict) -> None:
    path.write_text(_to_json(payload) + "\n")


def write_csv(path: Path, header: list, rows: list) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) and not isinstance(v, bool) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_svg(path: Path, xs, ys, title: str, logx: bool = False) -> None:
    """Minimal line chart; axes are autoscaled to the data."""
    xs = np.log10(np.asarray(xs, float)) if logx else np.asarray(xs, float)
    ys = np.asarray(ys, float)
    W, H, m = 480, 320, 40

    def sc(v, lo, hi, a, b):
        return a + (b - a) * (0.5 if hi == lo else (v - lo) / (hi - lo))

    pts = " ".join(
        f"{sc(x, xs.min(), xs.max(), m, W - m):.3f},{sc(y, ys.min(), ys.max(), H - m, m):.3f}" for x, y in zip(xs, ys)
    )
    path.write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">\n'
        f'<rect x="{m}" y="{m}" width="{W - 2 * m}" height="{H - 2 * m}" fill="none" stroke="#999"/>\n'
        f'<text x="{m}" y="{m - 10}" font-size="12">{title}</text>\n'
        f'<polyline points="{pts}" fill="none" stroke="#1f4e8c" stroke-width="1.5"/>\n</svg>\n'
    )


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PANEITZ_THREADS", "1")))
    except ValueError:
        return 1


def _sweep(fun, items):
    """Map in parallel threads; output order follows input order."""
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(fun, items))


# --- commands -------------------------------------------------------------------


@dataclass
class Outcome:
    status: int
    results: dict
    provenance: dict
    tables: dict = field(default_factory=dict)
    charts: dict = field(default_factory=dict)


def _volume(cfg: RunConfig) -> float:
    return math.inf if cfg.domain == HALF_SPACE else ball_volume(cfg.N, cfg.domain)


def cmd_constants(cfg: RunConfig) -> Outcome:
    d = dimension_params(cfg.N)
    res = {
        "N": d.N,
        "two_star": d.two_star,
        "gamma_N": d.gamma_N,
        "S": d.S,
        "d_N": d.d_N,
        "bubble_energy": d.bubble_energy,
        "halfspace_constant": halfspace_constant(d),
        "beta_closed_form": beta_closed_form(cfg.N),
        "alpha_bar": alpha_bar(cfg.N, _volume(cfg)),
    }
    prov = {k: "paneitz.constants.dimension_params" for k in ("N", "two_star", "gamma_N", "S", "d_N", "bubble_energy")}
    prov.update(
        halfspace_constant="paneitz.rayleigh.halfspace_constant",
        beta_closed_form="paneitz.constants.beta_closed_form",
        alpha_bar="paneitz.constants.alpha_bar",
    )
    return Outcome(EXIT_OK, res, prov)


def cmd_bubble_residual(cfg: RunConfig) -> Outcome:
    eps_list = cfg.eps_list or [0.5, 1.0]
    tol = cfg.tol if cfg.tol is not None else 1e-8
    r = np.geomspace(1e-3, 10.0, 200)
    rows = []
    worst = 0.0
    for e in eps_list:
        bp = BubbleParams.of(cfg.N, e)
        an = np.asarray(bubble_pde_residual(bp, r))
        fd = np.asarray(bubble_pde_residual(bp, r, method="fd"))
        worst = max(worst, float(np.max(np.abs(an))))
        rows += [(e, ri, a, f) for ri, a, f in zip(r, an, fd)]
    res = {"max_abs_residual": worst, "tol": tol, "passed": worst <= tol, "eps": list(eps_list)}
    prov = {
        "max_abs_residual": "paneitz.bubble.bubble_pde_residual",
        "tol": "paneitz.cli.parse_config",
        "passed": "paneitz.cli.cmd_bubble_residual",
        "eps": "paneitz.cli.parse_config",
    }
    return Outcome(
        EXIT_OK if worst <= tol else EXIT_ACCURACY,
        res,
        prov,
        {"": (["eps", "r", "residual_analytic", "residual_fd"], rows)},
    )


def cmd_jintegrals(cfg: RunConfig) -> Outcome:
    J = j_integrals(cfg.N)
    predicted = beta_reduction_factor(cfg.N) * beta_closed_form(cfg.N)
    res = {
        "J1": J.J1, "J2": J.J2, "J3": J.J3, "J2_divergent": J.J2_divergent,
        "beta_N": J.beta_N, "beta_closed_form": predicted,
        "relative_difference": abs(J.beta_N - predicted) / predicted,
    }
    prov = {k: "paneitz.quadrature.j_integrals" for k in ("J1", "J2", "J3", "J2_divergent", "beta_N")}
    prov["beta_closed_form"] = "paneitz.quadrature.beta_reduction_factor"
    prov["relative_difference"] = "paneitz.cli.cmd_jintegrals"
    row = (cfg.N, J.J1, "" if J.J2 is None else J.J2, J.J3, J.beta_N, predicted)
    return Outcome(EXIT_OK, res, prov, {"": (["N", "J1", "J2", "J3", "beta_N", "beta_closed_form"], [row])})


def _model(cfg: RunConfig) -> CurvatureModel:
    return CurvatureModel.from_kappas(cfg.kappas) if cfg.kappas else CurvatureModel.uniform(cfg.N)


def cmd_asymptotics(cfg: RunConfig) -> Outcome:
    d = dimension_params(cfg.N)
    model = _model(cfg)
    eps = sorted(cfg.eps_list) if cfg.eps_list else list(fit_window())
    r0 = 1.0
    alpha = cfg.alpha if cfg.alpha is not None else 1.0
    jint = j_integrals(cfg.N)
    terms = _sweep(lambda e: i_terms(d, e, r0, model, jint=jint), eps)
    crit = _sweep(lambda e: chart_critical_norm(d, e, r0, model), eps)
    half = _sweep(lambda e: halfspace_bubble_quotient(d, alpha, e), [e for e in eps if e <= 0.25])
    slopes = curvature_slopes(d, model, jint)

    i1 = asymptotic_fit([(t.eps, t.I1) for t in terms], FitModel.LINEAR)
    i23 = asymptotic_fit([(t.eps, t.I2 + t.I3) for t in terms], FitModel.LINEAR)
    lp = asymptotic_fit(list(zip(eps, crit)), FitModel.LINEAR)
    res = {
        "r0": r0,
        "H": model.H,
        "I1_intercept": i1.intercept,
        "I1_intercept_predicted": 0.5 * d.bubble_energy,
        "I23_slope": i23.slope,
        "I23_slope_predicted": slopes.lap_i23,
        "critical_slope": lp.slope,
        "critical_slope_predicted": slopes.critical,
    }
    if cfg.N >= 6:
        i4 = asymptotic_fit([(t.eps, t.I4) for t in terms], FitModel.LINEAR)
        res["I4_slope"] = i4.slope
        res["I4_slope_predicted"] = slopes.lap_i4
    else:
        i4 = asymptotic_fit([(t.eps, t.I4) for t in terms], FitModel.LINEAR_LOG, extra_linear=True)
        res["I4_log_coefficient"] = i4.slope
        res["I4_log_coefficient_predicted"] = slopes.lap_i4_log
    if all(e < 0.1 * r0 for e in eps):
        orders = secondary_norm_orders(d, eps, r0)
        res["grad2_exponent"] = orders.grad2.exponent
        res["grad2_log_corrected"] = orders.grad2.log_corrected
        res["l2_exponent"] = orders.l2.exponent
        res["l2_log_corrected"] = orders.l2.log_corrected
    res["halfspace_constant"] = halfspace_constant(d)
    prov = {k: "paneitz.rayleigh.asymptotic_fit" for k in res if not k.endswith("predicted")}
    prov.update({k: "paneitz.quadrature.curvature_slopes" for k in res if k.endswith("predicted")})
    prov["I1_intercept_predicted"] = "paneitz.constants.dimension_params"
    prov["r0"] = prov["H"] = "paneitz.cli.cmd_asymptotics"
    for k in ("grad2_exponent", "grad2_log_corrected", "l2_exponent", "l2_log_corrected"):
        if k in res:
            prov[k] = "paneitz.rayleigh.secondary_norm_orders"
    prov["halfspace_constant"] = "paneitz.rayleigh.halfspace_constant"
    tables = {
        "": (
            ["eps", "I1", "I2", "I3", "I4", "remainder", "critical_norm"],
            [(t.eps, t.I1, t.I2, t.I3, t.I4, t.remainder, c) for t, c in zip(terms, crit)],
        ),
        "_halfspace": (
            ["eps", "lap2", "grad2", "l2", "lp", "Q"],
            [(e, b.lap2, b.grad2, b.l2, b.lp, b.Q) for e, b in zip([e for e in eps if e <= 0.25], half)],
        ),
    }
    charts = {"": (eps, [t.I2 + t.I3 + t.I4 for t in terms], "I2+I3+I4 against eps")}
    return Outcome(EXIT_OK, res, prov, tables, charts)


def cmd_geometry_check(cfg: RunConfig) -> Outcome:
    model = _model(cfg)
    N = cfg.N
    direction = np.ones(N) / math.sqrt(N)
    ts = np.geomspace(1e-3, 1e-1, 9) * min(1.0, model.chart_radius / 0.1)
    det_err = [jacobian_expansion_error(model, t * direction) for t in ts]
    inv_err = [inverse_jacobian_error(model, t * direction) for t in ts]
    slope = float(np.polyfit(np.log(ts), np.log(det_err), 1)[0])
    inv_slope = float(np.polyfit(np.log(ts), np.log(inv_err), 1)[0])
    ident = float(np.max(np.abs(phi_jacobian(model, np.zeros(N)) - np.eye(N))))
    ok = abs(slope - 2.0) <= 0.1 and ident <= 1e-14
    res = {"H": model.H, "det_error_slope": slope, "inverse_error_slope": inv_slope, "identity_error": ident, "passed": ok}
    prov = {
        "H": "paneitz.chart.mean_curvature",
        "det_error_slope": "paneitz.chart.jacobian_expansion_error",
        "inverse_error_slope": "paneitz.chart.inverse_jacobian_error",
        "identity_error": "paneitz.chart.phi_jacobian",
        "passed": "paneitz.cli.cmd_geometry_check",
    }
    rows = list(zip(ts, det_err, inv_err))
    return Outcome(
        EXIT_OK if ok else EXIT_ACCURACY, res, prov,
        {"": (["t", "det_error", "inverse_error"], rows)},
        {"": (ts, det_err, "determinant expansion error")},
    )


def _ball(cfg: RunConfig, alpha: float) -> BallProblem:
    return BallProblem.create(cfg.N, alpha, R=cfg.domain, n=cfg.grid)


def cmd_minimize(cfg: RunConfig) -> Outcome:
    vol = _volume(cfg)
    alpha = cfg.alpha if cfg.alpha is not None else alpha_bar(cfg.N, vol)
    problem = _ball(cfg, alpha)
    tol = cfg.tol if cfg.tol is not None else 1e-10
    init = bubble_init(problem, cfg.eps_list[0]) if cfg.eps_list else perturbed_constant_init(problem)
    r = minimize_quotient(problem, init, tol=tol)
    bal = balance_check(r, problem)
    res = {
        "alpha": alpha,
        "Q": r.breakdown.Q,
        "J": r.breakdown.J,
        "lap2": r.breakdown.lap2,
        "grad2": r.breakdown.grad2,
        "l2": r.breakdown.l2,
        "lp": r.breakdown.lp,
        "constant_Q": constant_quotient(problem.dims, alpha, problem.R),
        "classification": r.classification.value,
        "deviation": r.deviation,
        "converged": r.converged,
        "iterations": r.iterations,
        "residual": r.residual,
        "balance_defect": bal.defect if bal.applicable else None,
        "balance_slack": bal.slack if bal.applicable else None,
    }
    prov = {k: "paneitz.ball.minimize_quotient" for k in res}
    prov["alpha"] = "paneitz.constants.alpha_bar" if cfg.alpha is None else "paneitz.cli.parse_config"
    prov["constant_Q"] = "paneitz.rayleigh.constant_quotient"
    prov["balance_defect"] = prov["balance_slack"] = "paneitz.ball.balance_check"
    rows = list(zip(r.field.grid.nodes, r.field.values))
    return Outcome(
        EXIT_OK if r.converged else EXIT_NONCONVERGENCE, res, prov,
        {"_profile": (["r", "u"], rows)},
        {"_profile": (r.field.grid.nodes, r.field.values, "radial profile")},
    )


def cmd_threshold(cfg: RunConfig) -> Outcome:
    problem = _ball(cfg, 1.0)
    a_lin = linear_stability_alpha(problem)
    abar = alpha_bar(cfg.N, problem.volume)
    lo = 1e-2 * a_lin
    res = {"alpha_lin": a_lin, "alpha_bar": abar, "alpha_lo": lo}
    prov = {
        "alpha_lin": "paneitz.ball.linear_stability_alpha",
        "alpha_bar": "paneitz.constants.alpha_bar",
        "alpha_lo": "paneitz.cli.cmd_threshold",
        "alpha_star_bracket": "paneitz.ball.threshold_scan",
        "within_alpha_bar": "paneitz.ball.threshold_scan",
        "bracket_error": "paneitz.ball.threshold_scan",
    }
    try:
        t = threshold_scan(problem, lo, abar, bisection_tol=cfg.tol, expand=cfg.expand)
    except BracketError as exc:
        res.update(alpha_star_bracket=None, within_alpha_bar=None, bracket_error=str(exc))
        return Outcome(EXIT_NONCONVERGENCE, res, prov)
    res.update(alpha_star_bracket=list(t.alpha_star_bracket), within_alpha_bar=t.within_alpha_bar, bracket_error=None)
    rows = [tuple(e) for e in t.evaluations]
    return Outcome(EXIT_OK, res, prov, {"": (["alpha", "classification", "deviation", "Q", "converged"], rows)})


HANDLERS = {
    "constants": cmd_constants,
    "bubble-residual": cmd_bubble_residual,
    "jintegrals": cmd_jintegrals,
    "asymptotics": cmd_asymptotics,
    "geometry-check": cmd_geometry_check,
    "minimize": cmd_minimize,
    "threshold": cmd_threshold,
}


def _config_record(cfg: RunConfig) -> dict:
    rec = asdict(cfg)
    rec.pop("out_dir")
    return rec


def run(cfg: RunConfig) -> int:
    out = HANDLERS[cfg.command](cfg)
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = cfg.command.replace("-", "_")
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "config": _config_record(cfg),
        "results": out.results,
        "provenance": out.provenance,
        "exit_status": out.status,
    }
    write_json(outdir / f"{stem}.json", payload)
    for suffix, (header, rows) in out.tables.items():
        write_csv(outdir / f"{stem}{suffix}.csv", header, rows)
    if cfg.svg:
        for suffix, (xs, ys, title) in out.charts.items():
            write_svg(outdir / f"{stem}{suffix}.svg", xs, ys, title, logx=cfg.command == "asymptotics")
    return out.status


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"paneitz: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(cfg)
    except DomainError as exc:
        print(f"paneitz: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
