"""Batch front end.

Exit codes: 0 ok, 1 invariant failure, 2 config error, 3 numeric
non-convergence, 4 resource guard.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, InvariantViolation, NumericDomainError, ResourceLimitError
from .fock import DEFAULT_LAMBDA_GRID, run_oracle
from .kernel import KernelFamily
from .lattice import as_momentum, build_fermi_ball, excitation_gap, norm2, outside_points
from .observables import (
    IntegralFamily,
    QuadratureConfig,
    continuum_probe_q,
    loglog_slope,
    n_exchange,
    n_rpa_continuum,
    n_rpa_integral,
    n_rpa_matrix,
    n_rpa_series,
    shifts_for,
)
from .potential import parse_potential

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_RESOURCE = 0, 1, 2, 3, 4

CSV_COLUMNS = (
    "shell_cap",
    "kf",
    "qx",
    "qy",
    "qz",
    "norm_q",
    "e_q",
    "n_rpa_matrix",
    "n_rpa_integral",
    "n_ex",
    "n_total",
)


class ConfigError(ValueError):
    def __init__(self, name: str, message: str):
        super().__init__(f"config field '{name}': {message}")
        self.field = name


@dataclass
class RunConfig:
    shell_cap: int = 1
    potential: str = "coulomb:g=1"
    coupling_scale: float = 1.0
    q: list | None = None
    q_max_norm2: int | None = None
    route: str = "matrix"
    abs_tol: float = 1e-12
    rel_tol: float = 1e-9
    max_subdivisions: int = 2000
    shift_cutoff: int | None = None
    exchange_sign: int = 1
    oracle_cutoff: int = 1
    oracle_cap: int = 6
    oracle_tol: float = 1e-13
    lambda_grid: list = field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    max_dim: int = 2_000_000
    shell_caps: list | None = None
    coupling_scales: list | None = None
    direction: list = field(default_factory=lambda: [1.0, 0.0, 0.0])
    route_tol: float | None = None
    output: str | None = None
    format: str = "csv"
    cache_dir: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        return cls.from_dict(data)

    def validate(self) -> None:
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(name, msg)

        def is_int(x):
            return isinstance(x, int) and not isinstance(x, bool)

        def is_num(x):
            return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)

        need(is_int(self.shell_cap) and self.shell_cap >= 0, "shell_cap", f"must be an integer >= 0, got {self.shell_cap!r}")
        need(isinstance(self.potential, str), "potential", "must be a string like coulomb:g=1")
        try:
            parse_potential(self.potential)
        except (ValueError, TypeError) as exc:
            raise ConfigError("potential", str(exc)) from None
        need(is_num(self.coupling_scale) and self.coupling_scale >= 0, "coupling_scale", "must be a real >= 0")
        if self.q is not None:
            need(isinstance(self.q, list) and len(self.q) > 0, "q", "must be a non-empty list of [x, y, z]")
            for item in self.q:
                need(isinstance(item, (list, tuple)) and len(item) == 3 and all(is_int(c) for c in item), "q", f"bad momentum {item!r}")
        if self.q_max_norm2 is not None:
            need(is_int(self.q_max_norm2) and self.q_max_norm2 >= 0, "q_max_norm2", "must be an integer >= 0")
        r = self.route
        need(
            r in ("matrix", "integral", "all") or (r.startswith("series:") and r[7:].isdigit() and int(r[7:]) >= 2 and int(r[7:]) % 2 == 0),
            "route",
            f"must be matrix|integral|series:<even n>=2>|all, got {r!r}",
        )
        need(is_num(self.abs_tol) and self.abs_tol > 0, "abs_tol", "must be > 0")
        need(is_num(self.rel_tol) and self.rel_tol > 0, "rel_tol", "must be > 0")
        need(is_int(self.max_subdivisions) and self.max_subdivisions >= 1, "max_subdivisions", "must be an integer >= 1")
        if self.shift_cutoff is not None:
            need(is_int(self.shift_cutoff) and self.shift_cutoff >= 1, "shift_cutoff", "must be an integer >= 1")
        need(self.exchange_sign in (1, -1), "exchange_sign", "must be 1 or -1")
        need(is_int(self.oracle_cutoff) and self.oracle_cutoff >= 1, "oracle_cutoff", "must be an integer >= 1")
        need(is_int(self.oracle_cap) and self.oracle_cap >= 0 and self.oracle_cap % 2 == 0, "oracle_cap", f"must be an even integer >= 0, got {self.oracle_cap!r}")
        need(is_num(self.oracle_tol) and self.oracle_tol > 0, "oracle_tol", "must be > 0")
        need(
            isinstance(self.lambda_grid, list) and self.lambda_grid and all(is_num(x) and 0 <= x <= 1 for x in self.lambda_grid),
            "lambda_grid",
            "must be a non-empty list of reals in [0, 1]",
        )
        need(is_int(self.max_dim) and self.max_dim >= 1, "max_dim", "must be an integer >= 1")
        if self.shell_caps is not None:
            need(isinstance(self.shell_caps, list) and self.shell_caps and all(is_int(x) and x >= 1 for x in self.shell_caps), "shell_caps", "must be a non-empty list of integers >= 1")
        if self.coupling_scales is not None:
            need(isinstance(self.coupling_scales, list) and self.coupling_scales and all(is_num(x) and x > 0 for x in self.coupling_scales), "coupling_scales", "must be a non-empty list of reals > 0")
        need(
            isinstance(self.direction, list) and len(self.direction) == 3 and all(is_num(x) for x in self.direction) and any(self.direction),
            "direction",
            "must be a nonzero 3-vector",
        )
        if self.route_tol is not None:
            need(is_num(self.route_tol) and self.route_tol > 0, "route_tol", "must be > 0")
        need(self.format in ("csv", "json"), "format", "must be csv or json")

    # derived objects

    def spec(self, scale: float | None = None):
        return parse_potential(self.potential).scaled(self.coupling_scale if scale is None else scale)

    def quadrature(self) -> QuadratureConfig:
        return QuadratureConfig(self.abs_tol, self.rel_tol, self.max_subdivisions)

    def select_q(self, ball) -> list:
        if self.q is not None:
            return [as_momentum(q) for q in self.q]
        cap = self.q_max_norm2 if self.q_max_norm2 is not None else 4 * max(ball.shell_cap, 1)
        qs = outside_points(ball, cap)
        if not qs:
            raise ConfigError("q_max_norm2", f"q-selector |q|^2 <= {cap} contains no point outside the ball")
        return qs


def thread_count() -> int:
    raw = os.environ.get("FERMIGAS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("FERMIGAS_THREADS", f"not an integer: {raw!r}") from None
    if n < 1:
        raise ConfigError("FERMIGAS_THREADS", "must be >= 1")
    return n


# --- output -----------------------------------------------------------------


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _to_json(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    floats = []

    def walk(o):
        if isinstance(o, dict):
            return {str(k): walk(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [walk(v) for v in o]
        if isinstance(o, (bool, np.bool_)):
            return bool(o)
        if isinstance(o, (int, np.integer)):
            return int(o)
        if isinstance(o, (float, np.floating)):
            floats.append(f"{float(o):.17g}" if math.isfinite(o) else "null")
            return f"@@F{len(floats) - 1}@@"
        return o

    text = json.dumps(walk(obj), indent=1)
    for i, f in enumerate(floats):
        text = text.replace(f'"@@F{i}@@"', f, 1)
    return text


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _meta(cfg: RunConfig, **extra) -> dict:
    meta = {
        "potential": cfg.spec().fingerprint,
        "tolerances": {"abs_tol": cfg.abs_tol, "rel_tol": cfg.rel_tol, "max_subdivisions": cfg.max_subdivisions},
        "git_describe": _git_describe(),
    }
    meta.update(extra)
    return meta


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _emit_table(cfg: RunConfig, columns, rows, meta: dict, summary: dict | None = None) -> None:
    if cfg.format == "json":
        doc = {"meta": meta, "rows": rows}
        if summary is not None:
            doc["summary"] = summary
        _emit(cfg, _to_json(doc))
    else:
        _emit(cfg, _csv_text(columns, rows))
        if summary:
            for k, v in summary.items():
                print(f"{k} {fmt(v) if not isinstance(v, (dict, list)) else json.dumps(v)}", file=sys.stderr)


# --- subcommands ------------------------------------------------------------


def cmd_ball(cfg: RunConfig) -> int:
    ball = build_fermi_ball(cfg.shell_cap)
    doc = {
        "shell_cap": ball.shell_cap,
        "N": ball.n_particles,
        "kf": ball.kf,
        "min_outside_norm2": ball.min_outside_norm2,
        "points": [list(p) for p in ball.momenta()],
    }
    _emit(cfg, _to_json(doc))
    return EXIT_OK


def _base_row(ball, q) -> dict:
    return {
        "shell_cap": ball.shell_cap,
        "kf": ball.kf,
        "qx": q[0],
        "qy": q[1],
        "qz": q[2],
        "norm_q": math.sqrt(norm2(q)),
        "e_q": float(excitation_gap(ball, q)),
    }


def cmd_rpa(cfg: RunConfig) -> int:
    ball = build_fermi_ball(cfg.shell_cap)
    spec = cfg.spec()
    qs = cfg.select_q(ball)
    route = cfg.route
    kernels = KernelFamily(ball, spec, shift_cutoff=cfg.shift_cutoff, cache_dir=cfg.cache_dir)
    integrals = IntegralFamily(ball, spec, cfg.quadrature(), shift_cutoff=cfg.shift_cutoff)
    if route in ("matrix", "all") or route.startswith("series:"):
        shifts = set()
        for q in qs:
            shifts.update(shifts_for(ball, q, cfg.shift_cutoff))
        kernels.prefetch(shifts, threads=thread_count())
    rows = []
    worst = 0.0
    for q in qs:
        row = _base_row(ball, q)
        m = n_rpa_matrix(ball, kernels, q).n_rpa if route in ("matrix", "all") else None
        i = n_rpa_integral(ball, spec, q, family=integrals).n_rpa if route in ("integral", "all") else None
        s = None
        if route.startswith("series:"):
            s = n_rpa_series(ball, kernels, q, int(route[7:])).n_rpa
            row["n_rpa_series"] = s
        if m is not None and i is not None:
            worst = max(worst, abs(m - i))
        rpa = next(v for v in (m, i, s) if v is not None)
        ex = cfg.exchange_sign * n_exchange(ball, spec, q, shift_cutoff=cfg.shift_cutoff).n_ex
        row.update(
            n_rpa_matrix=m,
            n_rpa_integral=i,
            n_ex=ex,
            n_total=1.0 - rpa - ex if ball.contains(q) else rpa + ex,
        )
        rows.append(row)
    summary = {"max_route_discrepancy": worst} if route == "all" else None
    _emit_table(cfg, CSV_COLUMNS, rows, _meta(cfg, route=route, exchange_sign=cfg.exchange_sign), summary)
    return EXIT_OK


def cmd_exchange(cfg: RunConfig) -> int:
    ball = build_fermi_ball(cfg.shell_cap)
    qs = cfg.select_q(ball)
    scales = cfg.coupling_scales or [cfg.coupling_scale]
    rows = []
    for s in scales:
        spec = cfg.spec(s)
        kernels = KernelFamily(ball, spec, shift_cutoff=cfg.shift_cutoff)
        for q in qs:
            ex = n_exchange(ball, spec, q, kernels=kernels, shift_cutoff=cfg.shift_cutoff)
            rows.append(
                {
                    "shell_cap": ball.shell_cap,
                    "coupling_scale": s,
                    "qx": q[0],
                    "qy": q[1],
                    "qz": q[2],
                    "n_ex": ex.n_ex,
                    "n_ex_m1": ex.n_ex_m1,
                    "difference": ex.difference,
                }
            )
    summary = None
    if len(scales) >= 2:
        summary = {}
        for q in qs:
            sel = [r for r in rows if (r["qx"], r["qy"], r["qz"]) == q]
            if all(r["n_ex"] > 0 for r in sel) and all(r["difference"] != 0 for r in sel):
                key = ",".join(map(str, q))
                summary[f"slope_n_ex[{key}]"] = loglog_slope(scales, [r["n_ex"] for r in sel])
                summary[f"slope_difference[{key}]"] = loglog_slope(scales, [r["difference"] for r in sel])
    cols = ("shell_cap", "coupling_scale", "qx", "qy", "qz", "n_ex", "n_ex_m1", "difference")
    _emit_table(cfg, cols, rows, _meta(cfg), summary)
    return EXIT_OK


def cmd_continuum(cfg: RunConfig) -> int:
    spec = cfg.spec()
    rows = []
    for sc in cfg.shell_caps or [cfg.shell_cap]:
        ball = build_fermi_ball(sc)
        if ball.kf == 0:
            raise ConfigError("shell_cap", "continuum comparison needs shell_cap >= 1")
        q = continuum_probe_q(ball, cfg.direction) if cfg.q is None else as_momentum(cfg.q[0])
        fam = IntegralFamily(ball, spec, cfg.quadrature(), use_symmetry=spec.cubic_symmetric)
        disc = n_rpa_integral(ball, spec, q, family=fam).n_rpa
        r = math.sqrt(norm2(q))
        cont = n_rpa_continuum(spec, ball.kf, np.asarray(q, float) / r, r)
        row = _base_row(ball, q)
        row.update(
            n_discrete_kf2=disc * ball.kf**2,
            n_continuum_kf2=cont * ball.kf**2,
            relative_gap=abs(disc - cont) / cont if cont else None,
        )
        rows.append(row)
    summary = None
    if len(rows) >= 2 and rows[0]["relative_gap"] and rows[-1]["relative_gap"] is not None:
        summary = {"gap_shrink": 1.0 - rows[-1]["relative_gap"] / rows[0]["relative_gap"]}
    cols = ("shell_cap", "kf", "qx", "qy", "qz", "norm_q", "e_q", "n_discrete_kf2", "n_continuum_kf2", "relative_gap")
    _emit_table(cfg, cols, rows, _meta(cfg, direction=cfg.direction), summary)
    return EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    ball = build_fermi_ball(cfg.shell_cap)
    scales = cfg.coupling_scales or [cfg.coupling_scale]
    qs = [as_momentum(q) for q in cfg.q] if cfg.q is not None else None
    reports = []
    for s in scales:
        rep = run_oracle(
            ball,
            cfg.spec(s),
            shift_cutoff=cfg.oracle_cutoff,
            cap=cfg.oracle_cap,
            tol=cfg.oracle_tol,
            lambda_grid=cfg.lambda_grid,
            qs=qs,
            max_dim=cfg.max_dim,
        )
        reports.append(rep)
    if len(scales) == 1:
        doc = reports[0].as_dict()
    else:
        slopes = {}
        for k, entry in enumerate(reports[0].per_q):
            key = ",".join(map(str, entry["q"]))
            res = [r.per_q[k]["residual"] for r in reports]
            alt = [r.per_q[k]["residual_minus"] for r in reports]
            if all(x != 0 for x in res):
                slopes[f"residual[{key}]"] = loglog_slope(scales, res)
            if all(x != 0 for x in alt):
                slopes[f"residual_minus[{key}]"] = loglog_slope(scales, alt)
        doc = {"runs": [dict(coupling_scale=s, **r.as_dict()) for s, r in zip(scales, reports)], "slopes": slopes}
    _emit(cfg, _to_json(doc))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    caps = cfg.shell_caps or [cfg.shell_cap]
    scales = cfg.coupling_scales or [cfg.coupling_scale]
    balls = {sc: build_fermi_ball(sc) for sc in caps}
    selections = {sc: cfg.select_q(balls[sc]) for sc in caps}

    def work(item):
        sc, s = item
        ball = balls[sc]
        spec = cfg.spec(s)
        fam = IntegralFamily(ball, spec, cfg.quadrature(), shift_cutoff=cfg.shift_cutoff, use_symmetry=spec.cubic_symmetric)
        out = []
        for q in selections[sc]:
            n = n_rpa_integral(ball, spec, q, family=fam).n_rpa
            row = _base_row(ball, q)
            row.update(coupling_scale=s, n_rpa=n, n_rpa_e_kf=n * row["e_q"] * ball.kf)
            out.append(row)
        return out

    items = [(sc, s) for sc in caps for s in scales]
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        chunks = list(pool.map(work, items))
    rows = [r for chunk in chunks for r in chunk]

    summary = {}
    for s in scales:
        per_cap = {sc: max(r["n_rpa_e_kf"] for r in rows if r["shell_cap"] == sc and r["coupling_scale"] == s) for sc in caps}
        for sc, v in per_cap.items():
            summary[f"max_n_e_kf[shell_cap={sc},s={fmt(s)}]"] = v
        if len(caps) >= 2 and min(per_cap.values()) > 0:
            summary[f"max_over_min[s={fmt(s)}]"] = max(per_cap.values()) / min(per_cap.values())
    if len(scales) >= 2:
        for sc in caps:
            for q in selections[sc]:
                ys = [r["n_rpa"] for r in rows if r["shell_cap"] == sc and (r["qx"], r["qy"], r["qz"]) == q]
                if all(y > 0 for y in ys):
                    summary[f"slope_n_rpa[shell_cap={sc},q={','.join(map(str, q))}]"] = loglog_slope(scales, ys)
    cols = ("shell_cap", "coupling_scale", "kf", "qx", "qy", "qz", "norm_q", "e_q", "n_rpa", "n_rpa_e_kf")
    _emit_table(cfg, cols, rows, _meta(cfg), summary)
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    from .verify import run_checks

    results = run_checks(cfg)
    if cfg.format == "json":
        _emit(cfg, _to_json({"checks": [r.__dict__ for r in results], "passed": all(r.passed for r in results)}))
    else:
        lines = [f"{'PASS' if r.passed else 'FAIL'} {r.name} value={fmt(r.value)} limit={fmt(r.limit)}" for r in results]
        _emit(cfg, "\n".join(lines) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT


COMMANDS = {
    "ball": cmd_ball,
    "rpa": cmd_rpa,
    "exchange": cmd_exchange,
    "continuum": cmd_continuum,
    "oracle": cmd_oracle,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


# --- argument parsing -------------------------------------------------------


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _momentum(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return [int(p) for p in parts]


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    common.add_argument("--shell-cap", dest="shell_cap", type=int)
    common.add_argument("--potential", help="coulomb:g=1 or yukawa:g=1,p=2")
    common.add_argument("--coupling-scale", dest="coupling_scale", type=float)
    common.add_argument("--q", dest="q", type=_momentum, action="append", help="momentum x,y,z (repeatable)")
    common.add_argument("--q-max-norm2", dest="q_max_norm2", type=int, help="all q outside the ball with |q|^2 <= this")
    common.add_argument("--route", help="matrix | integral | series:<n> | all")
    common.add_argument("--abs-tol", dest="abs_tol", type=float)
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument("--max-subdivisions", dest="max_subdivisions", type=int)
    common.add_argument("--shift-cutoff", dest="shift_cutoff", type=int, help="cap on |l|^2 in shift sums")
    common.add_argument("--exchange-sign", dest="exchange_sign", type=int, choices=(1, -1))
    common.add_argument("--oracle-cutoff", dest="oracle_cutoff", type=int)
    common.add_argument("--cap", dest="oracle_cap", type=int, help="oracle particle cap (even)")
    common.add_argument("--oracle-tol", dest="oracle_tol", type=float)
    common.add_argument("--lambda-grid", dest="lambda_grid", type=_float_list)
    common.add_argument("--max-dim", dest="max_dim", type=int)
    common.add_argument("--shell-caps", dest="shell_caps", type=_int_list)
    common.add_argument("--coupling-scales", dest="coupling_scales", type=_float_list)
    common.add_argument("--direction", type=_float_list)
    common.add_argument("--route-tol", dest="route_tol", type=float)
    common.add_argument("--output", "-o")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--cache-dir", dest="cache_dir")
    common.add_argument("--dump-config", dest="dump_config", action="store_true", help="print the resolved config and exit")

    parser = argparse.ArgumentParser(prog="fermigas", description="RPA momentum distribution of the lattice Fermi gas")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    data = {}
    if getattr(ns, "config", None):
        try:
            text = Path(ns.config).read_text()
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
        data = RunConfig.from_json(text).to_dict()
    for f in fields(RunConfig):
        if hasattr(ns, f.name):
            data[f.name] = getattr(ns, f.name)
    cfg = RunConfig.from_dict(data)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = resolve_config(ns)
        if getattr(ns, "dump_config", False):
            _emit(cfg, cfg.to_json())
            return EXIT_OK
        return COMMANDS[ns.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ConvergenceError as exc:
        where = f" (shift {exc.shift})" if exc.shift is not None else ""
        print(f"no convergence{where}: {exc}; residual={exc.residual}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ResourceLimitError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ValueError, NumericDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
