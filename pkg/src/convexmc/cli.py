"""Command-line front end: body specs, experiment configs, reports, sweeps.

Exit codes: 0 for EqualityWithinTolerance / StrictInequality / plain
estimates, 2 for Violation, 3 for Inconclusive, 1 for configuration or
runtime errors.  Reports are JSON (canonical, floats with 17 significant
digits, lossless round trip) with CSV as a projection; output is
byte-deterministic given (argv, seed) — wall time is only included when
--timing is passed.
"""

from __future__ import annotations

import argparse
import io
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, estimators, mathkernel
from ._kernels import active_backend
from .bodies import Ball, Box, ConvexBody, Ellipsoid, Simplex, load_hpolytope
from .estimators import (
    AffineIdentityResult,
    InequalityReport,
    MCEstimate,
    Verdict,
)
from .mathkernel import MomentParams
from .sampling import fold_seed

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "theorem",
    "body",
    "d",
    "k",
    "p",
    "n",
    "lhs",
    "lhs_se",
    "rhs",
    "rhs_se",
    "ratio",
    "ratio_se",
    "verdict",
    "error",
]


class CLIError(ValueError):
    pass


class BodySpecError(CLIError):
    def __init__(self, spec: str, pos: int, message: str):
        super().__init__(f"body spec error at position {pos}: {message} (in {spec!r})")
        self.pos = pos


# ---------------------------------------------------------------------------
# deterministic JSON with 17-significant-digit floats


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return f"{x:.17g}"


def _emit(obj, out: list, indent: int) -> None:
    pad = "  " * indent
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(
            '"'
            + obj.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
            + '"'
        )
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_fmt_float(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, val) in enumerate(obj.items()):
            out.append(f'{pad}  "{key}": ')
            _emit(val, out, indent + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not len(obj):
            out.append("[]")
            return
        out.append("[\n")
        for i, val in enumerate(obj):
            out.append(pad + "  ")
            _emit(val, out, indent + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    out: list[str] = []
    _emit(obj, out, 0)
    return "".join(out)


# ---------------------------------------------------------------------------
# body specs


def _parse_float(text: str, spec: str, pos: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise BodySpecError(spec, pos, f"not a number: {text!r}") from None


def _split_kv(part: str, spec: str, pos: int) -> tuple[str, str]:
    if "=" not in part:
        raise BodySpecError(spec, pos, "expected key=value")
    key, _, val = part.partition("=")
    return key, val


def parse_body_spec(spec: str, d: int) -> ConvexBody:
    """Grammar: ball[:r=<r>] | ellipsoid:axes=a1,..,ad | box:half=<h> |
    box:bounds=l1,u1;..;ld,ud | simplex | polytope:file=<path>."""
    name, sep, rest = spec.partition(":")
    pos = len(name) + len(sep)
    if name == "ball":
        if not rest:
            return Ball(np.zeros(d), 1.0)
        key, val = _split_kv(rest, spec, pos)
        if key != "r":
            raise BodySpecError(spec, pos, f"unknown key {key!r} for ball")
        r = _parse_float(val, spec, pos + 2)
        if r <= 0:
            raise BodySpecError(spec, pos + 2, "radius must be positive")
        return Ball(np.zeros(d), r)
    if name == "ellipsoid":
        key, val = _split_kv(rest, spec, pos)
        if key != "axes":
            raise BodySpecError(spec, pos, f"unknown key {key!r} for ellipsoid")
        axes = [_parse_float(t, spec, pos) for t in val.split(",") if t]
        if len(axes) != d:
            raise BodySpecError(spec, pos, f"need {d} axes, got {len(axes)}")
        return Ellipsoid.from_semiaxes(axes)
    if name == "box":
        key, val = _split_kv(rest, spec, pos)
        if key == "half":
            h = _parse_float(val, spec, pos)
            if h <= 0:
                raise BodySpecError(spec, pos, "half width must be positive")
            return Box.centered(h, d)
        if key == "bounds":
            pairs = [t for t in val.split(";") if t]
            if len(pairs) != d:
                raise BodySpecError(spec, pos, f"need {d} bound pairs, got {len(pairs)}")
            lo, hi = [], []
            for pair in pairs:
                nums = pair.split(",")
                if len(nums) != 2:
                    raise BodySpecError(spec, pos, f"bad bound pair {pair!r}")
                lo.append(_parse_float(nums[0], spec, pos))
                hi.append(_parse_float(nums[1], spec, pos))
            return Box(lo, hi)
        raise BodySpecError(spec, pos, f"unknown key {key!r} for box")
    if name == "simplex":
        if rest:
            raise BodySpecError(spec, pos, "simplex takes no arguments")
        return Simplex.standard(d)
    if name == "polytope":
        key, val = _split_kv(rest, spec, pos)
        if key != "file":
            raise BodySpecError(spec, pos, f"unknown key {key!r} for polytope")
        body = load_hpolytope(val)
        if body.d != d:
            raise BodySpecError(spec, pos, f"polytope is {body.d}-dimensional, not {d}")
        return body
    raise BodySpecError(spec, 0, f"unknown body kind {name!r}")


def parse_seed(text: str) -> int:
    """Seeds are decimal or 0x-prefixed hex."""
    text = text.strip()
    try:
        return int(text, 16) if text.lower().startswith("0x") else int(text)
    except ValueError:
        raise CLIError(f"invalid seed {text!r} (decimal or 0x-hex)") from None


def default_seed() -> int:
    env = os.environ.get("CONVEXMC_SEED")
    return parse_seed(env) if env else 0


# ---------------------------------------------------------------------------
# configs and documents


@dataclass
class ExperimentConfig:
    command: str
    theorem: str | None = None
    body_spec: str | None = None
    d: int = 3
    k: int = 1
    p: float = 0.0
    n: int = 10000
    n_inner: int = 1000
    seed: int = 0
    workers: int = 1
    eq_tol: float = estimators.DEFAULT_EQ_TOL
    fmt: str = "json"
    timing: bool = False
    bodies: list[str] = field(default_factory=list)
    k_grid: list[int] = field(default_factory=list)
    p_grid: list[float] = field(default_factory=list)
    family: str | None = None

    def echo(self) -> dict:
        doc = {
            "command": self.command,
            "seed": self.seed,
            "workers": self.workers,
        }
        if self.theorem:
            doc["theorem"] = self.theorem
        if self.family:
            doc["family"] = self.family
        if self.body_spec:
            doc["body"] = self.body_spec
        doc.update({"d": self.d})
        if self.command not in ("crofton",):
            doc["p"] = self.p
        if self.command not in ("identity",):
            doc["k"] = self.k
        if self.command != "constants":
            doc["n"] = self.n
        if self.command == "bp-check":
            doc["n_inner"] = self.n_inner
        if self.command in ("verify", "identity", "bp-check", "sweep"):
            doc["eq_tol"] = self.eq_tol
        if self.bodies:
            doc["bodies"] = list(self.bodies)
        if self.k_grid:
            doc["k_grid"] = list(self.k_grid)
        if self.p_grid:
            doc["p_grid"] = list(self.p_grid)
        return doc


def estimate_to_dict(est: MCEstimate) -> dict:
    return {
        "mean": est.mean,
        "std_error": est.std_error,
        "n": est.n,
        "seed": est.seed,
        "minimum": est.minimum,
        "maximum": est.maximum,
        "tail_share": est.tail_share,
    }


def report_to_dict(rep: InequalityReport) -> dict:
    return {
        "theorem": rep.theorem,
        "body": rep.body,
        "d": rep.params.d,
        "k": rep.params.k,
        "p": rep.params.p,
        "constant": rep.constant,
        "lhs": estimate_to_dict(rep.lhs),
        "rhs": estimate_to_dict(rep.rhs),
        "ratio": rep.ratio,
        "ratio_std_error": rep.ratio_std_error,
        "verdict": rep.verdict.value,
        "notes": list(rep.notes),
    }


def adjudication_to_dict(res: AffineIdentityResult) -> dict:
    doc = report_to_dict(res.report)
    doc["adjudication"] = {
        "fitted_constant": res.fitted_constant,
        "fitted_std_error": res.fitted_std_error,
        "printed_constant": res.printed_constant,
        "doubled_constant": res.doubled_constant,
        "printed_z": res.printed_z,
        "doubled_z": res.doubled_z,
        "consistent": res.consistent,
    }
    return doc


def _report_csv_row(rep: InequalityReport) -> dict:
    return {
        "theorem": rep.theorem,
        "body": rep.body,
        "d": rep.params.d,
        "k": rep.params.k,
        "p": _fmt_float(rep.params.p),
        "n": rep.lhs.n,
        "lhs": _fmt_float(rep.lhs.mean),
        "lhs_se": _fmt_float(rep.lhs.std_error),
        "rhs": _fmt_float(rep.rhs.mean),
        "rhs_se": _fmt_float(rep.rhs.std_error),
        "ratio": _fmt_float(rep.ratio),
        "ratio_se": _fmt_float(rep.ratio_std_error),
        "verdict": rep.verdict.value,
        "error": "",
    }


def rows_to_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        out.write(",".join(str(row.get(col, "")) for col in CSV_COLUMNS) + "\n")
    return out.getvalue()


def _wrap_document(config: ExperimentConfig, result: dict | None, error=None, wall=None) -> dict:
    return {
        "tool": "convexmc",
        "version": __version__,
        "schema": SCHEMA_VERSION,
        "backend": active_backend(),
        "config": config.echo(),
        "wall_time_s": wall,
        "error": error,
        "result": result,
    }


# ---------------------------------------------------------------------------
# command execution


def _constants_payload(params: MomentParams) -> dict:
    doc = {
        "thm1_constant": mathkernel.thm1_constant(params),
        "thm2_constant": mathkernel.thm2_constant(params),
    }
    if params.k < params.d:
        linear, affine = mathkernel.prob_constants(params)
        doc["prob_linear_constant"] = linear
        doc["prob_affine_constant"] = affine
    if params.k == 1:
        doc["identity_linear_constant"] = mathkernel.linear_identity_constant(
            params.d, params.p
        )
        printed, doubled = mathkernel.affine_identity_constants(params.d, params.p)
        doc["identity_affine_printed"] = printed
        doc["identity_affine_doubled"] = doubled
    doc["kappa_d"] = mathkernel.kappa(params.d)
    doc["kappa_k"] = mathkernel.kappa(params.k)
    return doc


def _verdict_exit(verdict: Verdict) -> int:
    if verdict in (Verdict.EQUALITY, Verdict.STRICT):
        return 0
    if verdict is Verdict.VIOLATION:
        return 2
    return 3


def run(config: ExperimentConfig) -> tuple[dict, int, str | None]:
    """Execute a config; returns (document, exit_code, csv_text_or_None)."""
    t0 = time.perf_counter()
    csv_text = None
    try:
        if config.command == "constants":
            params = MomentParams(config.d, config.k, config.p)
            result = _constants_payload(params)
            code = 0
            if config.fmt == "csv":
                csv_text = "name,value\n" + "".join(
                    f"{k},{_fmt_float(v)}\n" for k, v in result.items()
                )
        elif config.command == "verify":
            params = MomentParams(config.d, config.k, config.p)
            body = parse_body_spec(config.body_spec, config.d)
            rep = estimators.verify(
                config.theorem,
                body,
                params,
                config.n,
                config.seed,
                config.eq_tol,
                config.workers,
            )
            result = report_to_dict(rep)
            code = _verdict_exit(rep.verdict)
            if config.fmt == "csv":
                csv_text = rows_to_csv([_report_csv_row(rep)])
        elif config.command == "identity":
            body = parse_body_spec(config.body_spec, config.d)
            res = estimators.identity_check(
                config.family,
                body,
                config.d,
                config.p,
                config.n,
                config.seed,
                config.eq_tol,
                config.workers,
            )
            if isinstance(res, AffineIdentityResult):
                result = adjudication_to_dict(res)
                rep = res.report
            else:
                result = report_to_dict(res)
                rep = res
            code = _verdict_exit(rep.verdict)
            if config.fmt == "csv":
                csv_text = rows_to_csv([_report_csv_row(rep)])
        elif config.command == "bp-check":
            body = parse_body_spec(config.body_spec, config.d)
            rep = estimators.bp_check(
                config.family,
                body,
                config.k,
                config.p,
                config.n,
                config.n_inner,
                config.seed,
                config.eq_tol,
                config.workers,
            )
            result = report_to_dict(rep)
            code = _verdict_exit(rep.verdict)
            if config.fmt == "csv":
                csv_text = rows_to_csv([_report_csv_row(rep)])
        elif config.command == "crofton":
            body = parse_body_spec(config.body_spec, config.d)
            est = estimators.crofton_intrinsic(
                body, config.k, config.n, config.seed, config.workers
            )
            result = {"intrinsic_volume_order": config.d - config.k}
            result.update(estimate_to_dict(est))
            code = 0
            if config.fmt == "csv":
                csv_text = rows_to_csv(
                    [
                        {
                            "theorem": "crofton",
                            "body": config.body_spec,
                            "d": config.d,
                            "k": config.k,
                            "p": "",
                            "n": est.n,
                            "lhs": _fmt_float(est.mean),
                            "lhs_se": _fmt_float(est.std_error),
                            "verdict": "",
                            "error": "",
                        }
                    ]
                )
        elif config.command == "sweep":
            result, csv_text = _run_sweep(config)
            code = 0
        else:
            raise CLIError(f"unknown command {config.command!r}")
    except Exception as exc:  # structured error, exit 1
        wall = time.perf_counter() - t0 if config.timing else None
        doc = _wrap_document(
            config, None, error={"type": type(exc).__name__, "message": str(exc)}, wall=wall
        )
        return doc, 1, None
    wall = time.perf_counter() - t0 if config.timing else None
    return _wrap_document(config, result, wall=wall), code, csv_text


def _run_sweep(config: ExperimentConfig):
    cells = [
        (spec, k, p)
        for spec in config.bodies
        for k in config.k_grid
        for p in config.p_grid
    ]
    if len(cells) > 200:
        raise CLIError(f"sweep grid has {len(cells)} cells; at most 200 supported")
    rows = []
    payload = []
    for idx, (spec, k, p) in enumerate(cells):
        cell_seed = fold_seed(config.seed, idx)
        try:
            params = MomentParams(config.d, k, p)
            body = parse_body_spec(spec, config.d)
            rep = estimators.verify(
                config.theorem,
                body,
                params,
                config.n,
                cell_seed,
                config.eq_tol,
                config.workers,
            )
            row = _report_csv_row(rep)
            row["body"] = spec  # echo the round-trippable spec string
            rows.append(row)
            payload.append(report_to_dict(rep))
        except Exception as exc:
            rows.append(
                {
                    "theorem": config.theorem,
                    "body": spec,
                    "d": config.d,
                    "k": k,
                    "p": _fmt_float(float(p)),
                    "n": config.n,
                    "verdict": "",
                    "error": f"{type(exc).__name__}: {exc}".replace(",", ";"),
                }
            )
            payload.append(
                {
                    "body": spec,
                    "k": k,
                    "p": p,
                    "error": {"type": type(exc).__name__, "message": str(exc)},
                }
            )
    return {"cells": payload}, rows_to_csv(rows)


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


def _add_common(p: _Parser, body=True, n=True):
    if body:
        p.add_argument("--body", required=True, help="body spec, e.g. ball or box:half=1")
    p.add_argument("--d", type=int, required=True, help="ambient dimension")
    if n:
        p.add_argument("--n", type=int, default=10000, help="sample count")
    p.add_argument("--seed", type=str, default=None, help="decimal or 0x-hex seed")
    p.add_argument("--workers", type=int, default=1, help="worker threads")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", type=str, default=None, help="write report to file")
    p.add_argument("--eq-tol", type=float, default=estimators.DEFAULT_EQ_TOL)
    p.add_argument("--timing", action="store_true", help="include wall time in the report")


def build_parser() -> _Parser:
    parser = _Parser(prog="convexmc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", parents=[], help="closed-form constants")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", type=str, default=None)
    p.add_argument("--timing", action="store_true")

    p = sub.add_parser("verify", help="verify a moment comparison")
    p.add_argument(
        "--theorem",
        required=True,
        choices=estimators.LINEAR_THEOREMS + estimators.AFFINE_THEOREMS,
    )
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    _add_common(p)

    p = sub.add_parser("identity", help="k=1 chord-moment identity check")
    p.add_argument("--family", required=True, choices=("linear", "affine"))
    p.add_argument("--p", type=float, required=True)
    _add_common(p)

    p = sub.add_parser("bp-check", help="nested decomposition equality check")
    p.add_argument("--kind", required=True, choices=("linear", "affine"))
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--p", type=float, default=0.0)
    p.add_argument("--n-inner", type=int, default=1000)
    _add_common(p)

    p = sub.add_parser("crofton", help="intrinsic volume via flat measure")
    p.add_argument("--k", type=int, required=True, help="flat dimension")
    _add_common(p)

    p = sub.add_parser("sweep", help="grid of verify runs, CSV output")
    p.add_argument(
        "--theorem",
        required=True,
        choices=estimators.LINEAR_THEOREMS + estimators.AFFINE_THEOREMS,
    )
    p.add_argument("--bodies", required=True, help="semicolon-separated body specs")
    p.add_argument("--k-grid", required=True, help="comma-separated k values")
    p.add_argument("--p-grid", required=True, help="comma-separated p values")
    _add_common(p, body=False)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig(command=args.command)
    cfg.timing = getattr(args, "timing", False)
    cfg.fmt = getattr(args, "format", "json")
    cfg.d = args.d
    if hasattr(args, "seed"):
        cfg.seed = parse_seed(args.seed) if args.seed is not None else default_seed()
    if hasattr(args, "k"):
        cfg.k = args.k
    if hasattr(args, "p") and args.p is not None:
        cfg.p = args.p
    if hasattr(args, "n"):
        cfg.n = args.n
    if hasattr(args, "n_inner"):
        cfg.n_inner = args.n_inner
    if hasattr(args, "workers"):
        cfg.workers = args.workers
    if hasattr(args, "eq_tol"):
        cfg.eq_tol = args.eq_tol
    if hasattr(args, "body"):
        cfg.body_spec = args.body
    if hasattr(args, "theorem"):
        cfg.theorem = args.theorem
    if hasattr(args, "family"):
        cfg.family = args.family
    if hasattr(args, "kind"):
        cfg.family = args.kind
    if args.command == "sweep":
        cfg.bodies = [s for s in args.bodies.split(";") if s]
        try:
            cfg.k_grid = [int(t) for t in args.k_grid.split(",") if t]
            cfg.p_grid = [float(t) for t in args.p_grid.split(",") if t]
        except ValueError as exc:
            raise CLIError(f"bad grid value: {exc}") from None
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = config_from_args(args)
    except CLIError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    doc, code, csv_text = run(config)
    text = csv_text if (config.fmt == "csv" and csv_text is not None) else dumps(doc) + "\n"
    output = getattr(args, "output", None)
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
