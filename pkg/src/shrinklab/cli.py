"""Command-line front end: ``shrink check-fn | solve | flow | slice | quantities | sweep``.

Settings resolve as command-line flags over ``--config`` JSON keys over
built-in defaults.  Every artifact embeds the resolved config, and runs are
deterministic for a fixed config and seed.  Failures print one JSON object
on stderr; exit code 2 means a spec or config error, 1 a failed check or a
solver that did not converge.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import io
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _svg
from .battery import battery_passed, run_battery
from .hypersurface import (
    EUCLIDEAN,
    HEMISPHERE,
    AxiConvexBody,
    AxiGraphHemisphere,
    ConvexityError,
    read_profile,
    write_profile,
)
from .quantities import write_quantity_csv
from .solver import (
    BlowUpError,
    ConvergenceError,
    FlowRun,
    ShrinkerProblem,
    perturbed_body,
    residual,
    run_flow,
    slice_radius,
    solve_shrinker,
    sphere_radius,
    write_jsonl,
)
from .symfun import SpecError, parse_spec

COMMANDS = ("check-fn", "solve", "flow", "slice", "quantities", "sweep")
_DEFAULT_GRID = {"flow": 32}


class ConfigError(ValueError):
    pass


class CheckFailure(RuntimeError):
    def __init__(self, msg, detail=None):
        super().__init__(msg)
        self.detail = detail or {}


@dataclass
class RunConfig:
    command: str = "solve"
    fn: str = "ek_root:2"
    n: int = 3
    alpha: float = 2.0
    ambient: str = "euclid"
    grid: int | None = None
    seed: int = 0
    samples: int = 10_000
    perturb: float = 0.2
    mode: str = "p2"
    out: str | None = None
    jobs: int = 1
    tol: float = 1e-11
    offset: float = 0.0
    body: str | None = None
    alphas: list = field(default_factory=lambda: [1.0, 1.5, 2.0, 3.0])
    cfl: float = 0.2
    normalization: str = "inner_radius"
    roundness: float = 1.001
    max_steps: int = 200_000
    max_iter: int = 60
    record_every: int = 100
    svg_timestamp: bool = False
    runs: list | None = None
    vary: dict | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def header(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def m(self) -> int:
        return self.grid if self.grid is not None else _DEFAULT_GRID.get(self.command, 128)

    @property
    def outdir(self) -> Path:
        return Path(self.out)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_INT = {"n", "grid", "seed", "samples", "jobs", "max_steps", "max_iter", "record_every"}
_FLOAT = {"alpha", "perturb", "tol", "offset", "cfl", "roundness"}


def _coerce(key, val):
    if val is None:
        return None
    try:
        if key in _INT:
            if isinstance(val, float) and not val.is_integer():
                raise ValueError
            return int(val)
        if key in _FLOAT:
            return float(val)
        if key == "alphas":
            return [float(a) for a in val]
        if key == "svg_timestamp":
            if not isinstance(val, bool):
                raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key!r}: {val!r}") from None
    return val


def resolve_config(flags: dict, file_cfg: dict | None = None, base: dict | None = None) -> RunConfig:
    """Merge ``base`` (defaults), then ``file_cfg``, then ``flags``; validate."""
    merged = {}
    for layer in (base or {}, file_cfg or {}, flags):
        for key, val in layer.items():
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            if val is not None:
                merged[key] = _coerce(key, val)
    cfg = RunConfig(**merged)
    if cfg.out is None:
        cfg.out = os.environ.get("SHRINK_OUT") or "out"
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    if cfg.ambient not in ("euclid", "hemisphere"):
        raise ConfigError(f"ambient must be euclid or hemisphere, got {cfg.ambient!r}")
    checks = [
        (cfg.n >= 2, "n must be >= 2"),
        (cfg.alpha >= 1 and math.isfinite(cfg.alpha), "alpha must be >= 1"),
        (cfg.grid is None or cfg.grid >= 4, "grid must be >= 4"),
        (cfg.samples >= 1, "samples must be >= 1"),
        (cfg.jobs >= 1, "jobs must be >= 1"),
        (cfg.tol > 0, "tol must be positive"),
        (cfg.offset <= 0, "offset C must be <= 0"),
        (0 <= cfg.perturb < 1, "perturb must lie in [0, 1)"),
        (cfg.cfl > 0, "cfl must be positive"),
        (cfg.roundness > 1, "roundness tolerance must exceed 1"),
        (cfg.normalization in ("inner_radius", "mean_width"), "normalization must be inner_radius or mean_width"),
        (all(a >= 1 for a in cfg.alphas), "alphas must all be >= 1"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    parse_spec(cfg.fn)
    _modes(cfg)


def _modes(cfg: RunConfig):
    """Legendre modes and weights for the initial perturbation.

    ``p2`` or ``p2+p4`` give unit weights; ``random`` draws normal weights on
    P2..P6 from the seed.
    """
    if cfg.mode == "random":
        rng = np.random.default_rng(cfg.seed)
        return (2, 3, 4, 5, 6), rng.standard_normal(5)
    modes = []
    for tok in cfg.mode.split("+"):
        tok = tok.strip().lower()
        if not (tok.startswith("p") and tok[1:].isdigit() and int(tok[1:]) >= 1):
            raise ConfigError(f"bad mode {cfg.mode!r}; use p2, p2+p4 or random")
        modes.append(int(tok[1:]))
    return tuple(modes), None


# ---------------------------------------------------------------------------
# artifacts


def _svg_comment(cfg):
    text = "config: " + cfg.header()
    if cfg.svg_timestamp:
        text += " generated: " + time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return text


def _prepare_out(cfg) -> Path:
    out = cfg.outdir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _problem(cfg, f, ambient=None):
    return ShrinkerProblem(f, cfg.alpha, n=cfg.n, ambient=ambient or EUCLIDEAN, C=cfg.offset, m=cfg.m,
                           tol=cfg.tol, max_iter=cfg.max_iter)


def _require_euclid(cfg):
    if cfg.ambient != "euclid":
        raise ConfigError(f"{cfg.command} runs in the Euclidean ambient only; use 'slice' for the hemisphere")


# ---------------------------------------------------------------------------
# commands


def cmd_check_fn(cfg: RunConfig) -> dict:
    f = parse_spec(cfg.fn)
    rows = run_battery(f, cfg.n, samples=cfg.samples, seed=cfg.seed, alphas=tuple(cfg.alphas))
    out = _prepare_out(cfg)
    buf = io.StringIO()
    buf.write(f"# config: {cfg.header()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "status", "declared", "required", "min_margin", "witness"])
    for r in rows:
        w.writerow([r.check, r.status, int(r.declared), int(r.required), repr(r.min_margin),
                    json.dumps(r.witness, sort_keys=True)])
    (out / "margins.csv").write_text(buf.getvalue())
    width = max(len(r.check) for r in rows)
    for r in rows:
        print(f"{r.check:<{width}}  {r.status:<20} min margin {r.min_margin:.6e}")
    summary = {"fn": f.spec(), "n": cfg.n, "passed": battery_passed(rows), "margins": str(out / "margins.csv")}
    if not summary["passed"]:
        failed = [{"check": r.check, "witness": r.witness} for r in rows if not r.ok]
        raise CheckFailure(f"{len(failed)} required or declared inequalities failed for {f.spec()}",
                           {"failed": failed, "margins": summary["margins"]})
    return summary


def cmd_solve(cfg: RunConfig) -> dict:
    _require_euclid(cfg)
    f = parse_spec(cfg.fn)
    problem = _problem(cfg, f)
    r_star = sphere_radius(f, cfg.n, cfg.alpha, cfg.offset)
    modes, weights = _modes(cfg)
    initial, amp = perturbed_body(cfg.n, cfg.m, r_star, cfg.perturb, modes, weights)
    out = _prepare_out(cfg)
    try:
        body, report = solve_shrinker(problem, initial)
    except ConvergenceError as exc:
        if exc.report is not None:
            write_jsonl(out / "solve.jsonl", exc.report.history, cfg.to_dict())
        raise
    dev = float(np.max(np.abs(body.values - r_star)))
    write_jsonl(out / "solve.jsonl", report.history, cfg.to_dict())
    write_profile(out / "final.profile", body, ["config: " + cfg.header()])
    _svg.line_plot(out / "profile.svg", [(initial.theta, initial.values, "initial"), (body.theta, body.values, "final")],
                   title=f"support profile, {f.spec()}, alpha={cfg.alpha:g}", xlabel="theta", ylabel="s",
                   comment=_svg_comment(cfg))
    its = [h["iter"] for h in report.history]
    _svg.line_plot(out / "residual.svg", [(its, [h["residual_sup"] for h in report.history], "sup residual")],
                   title="Newton residual", xlabel="iteration", ylabel="sup |F^a + C - s|", logy=True,
                   comment=_svg_comment(cfg))
    summary = {"converged": report.converged, "iterations": report.iterations,
               "residual_sup": report.residual_sup, "anisotropy": report.anisotropy, "r_star": r_star,
               "deviation_from_sphere": dev, "amplitude_used": amp, "quadratic_constant": report.quadratic_constant}
    print(f"converged in {report.iterations} iterations: residual {report.residual_sup:.3e}, "
          f"anisotropy {report.anisotropy:.3e}, sup|s - r*| {dev:.3e} (r* = {r_star!r})")
    return summary


def cmd_flow(cfg: RunConfig) -> dict:
    _require_euclid(cfg)
    f = parse_spec(cfg.fn)
    problem = _problem(cfg, f)
    modes, weights = _modes(cfg)
    initial, amp = perturbed_body(cfg.n, cfg.m, 1.0, cfg.perturb, modes, weights)
    run = FlowRun(initial, cfl=cfg.cfl, normalization=cfg.normalization, roundness_tol=cfg.roundness,
                  max_steps=cfg.max_steps, record_every=cfg.record_every)
    trace = run_flow(run, problem)
    out = _prepare_out(cfg)
    write_jsonl(out / "flow.jsonl", trace.records, cfg.to_dict())
    write_profile(out / "final.profile", trace.body, ["config: " + cfg.header()])
    _svg.line_plot(out / "roundness.svg", [(trace.column("time"), trace.column("roundness") - 1.0, "roundness - 1")],
                   title=f"roundness, {f.spec()}, alpha={cfg.alpha:g}", xlabel="time", ylabel="r_max/r_min - 1",
                   logy=True, comment=_svg_comment(cfg))
    _svg.line_plot(out / "profile.svg", [(initial.theta, initial.values, "initial"),
                                         (trace.body.theta, trace.body.values, "final (normalized)")],
                   title="support profile", xlabel="theta", ylabel="s", comment=_svg_comment(cfg))
    last = trace.records[-1]
    summary = {"steps": trace.steps, "time": trace.time, "scale": trace.scale, "roundness": last["roundness"],
               "reached_round": trace.reached_round, "amplitude_used": amp}
    print(f"{trace.steps} steps, time {trace.time:.6g}, roundness {last['roundness']:.6f}")
    if not trace.reached_round:
        raise CheckFailure(f"roundness {last['roundness']:.6f} above {cfg.roundness} after {trace.steps} steps",
                           summary)
    return summary


def cmd_slice(cfg: RunConfig) -> dict:
    f = parse_spec(cfg.fn)
    r0 = slice_radius(f, cfg.n, cfg.alpha)
    c = f.unit_value(cfg.n)
    subst = abs((c / math.tan(r0)) ** cfg.alpha - math.sin(r0))
    graph = AxiGraphHemisphere.slice(cfg.n, cfg.m, r0)
    disc = float(np.max(np.abs(residual(graph, _problem(cfg, f, HEMISPHERE)))))
    out = _prepare_out(cfg)
    write_profile(out / "slice.profile", graph, ["config: " + cfg.header()])
    summary = {"r0": r0, "cos_r0": math.cos(r0), "substitution_residual": subst, "discrete_residual_sup": disc}
    (out / "slice.json").write_text(json.dumps({"config": cfg.to_dict(), "result": summary}, sort_keys=True) + "\n")
    print(f"r0 = {r0!r}")
    print(f"substitution residual |(f(1..1) cot r0)^alpha - sin r0| = {subst:.3e}")
    print(f"discrete residual sup on m={cfg.m} = {disc:.3e}")
    return summary


def cmd_quantities(cfg: RunConfig) -> dict:
    f = parse_spec(cfg.fn)
    if cfg.body:
        body = read_profile(cfg.body)
        cfg.n = body.n  # the profile's dimension wins
    elif cfg.ambient == "hemisphere":
        body = AxiGraphHemisphere.slice(cfg.n, cfg.m, slice_radius(f, cfg.n, cfg.alpha))
    else:
        body = AxiConvexBody.sphere(cfg.n, cfg.m, sphere_radius(f, cfg.n, cfg.alpha, cfg.offset))
    out = _prepare_out(cfg)
    header = {"config": cfg.header(), "representation": body.representation}
    tab = write_quantity_csv(out / "quantities.csv", body, f, cfg.alpha, header)
    _svg.line_plot(out / "quantities.svg", [(body.theta, tab["Z"], "Z"), (body.theta, tab["W"], "W")],
                   title=f"Z and W, {f.spec()}, alpha={cfg.alpha:g}", xlabel="theta", ylabel="value",
                   comment=_svg_comment(cfg))
    summary = {"beta_star": tab["beta_star"], "max_W": tab["max_W"], "agreement": tab["agreement"],
               "max_Z": float(np.max(tab["Z"]))}
    print(f"beta* = {tab['beta_star']!r}, max W = {tab['max_W']!r}, agreement: {tab['agreement']}")
    return summary


def _expand_sweep(cfg: RunConfig) -> list[dict]:
    if cfg.runs is None and cfg.vary is None:
        raise ConfigError("sweep needs 'runs' (list of overrides) or 'vary' (key -> list) in the config")
    runs = list(cfg.runs or [{}])
    if cfg.vary:
        keys = sorted(cfg.vary)
        for key in keys:
            if not isinstance(cfg.vary[key], list):
                raise ConfigError(f"vary[{key!r}] must be a list")
        combos = [dict(zip(keys, vals)) for vals in itertools.product(*(cfg.vary[k] for k in keys))]
        runs = [r | c for r in runs for c in combos]
    base = {k: v for k, v in cfg.to_dict().items() if k not in ("runs", "vary", "jobs", "out")}
    base["command"] = "solve"
    jobs = []
    for i, over in enumerate(runs):
        if not isinstance(over, dict):
            raise ConfigError("each sweep run must be an object of overrides")
        job = base | over | {"out": str(cfg.outdir / f"job-{i:03d}")}
        if job["command"] == "sweep":
            raise ConfigError("sweeps cannot nest")
        resolve_config({}, job)
        jobs.append(job)
    return jobs


def _run_job(job: dict) -> dict:
    cfg = resolve_config({}, job)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    log, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(log), contextlib.redirect_stderr(err):
        code, summary = execute(cfg)
    (Path(cfg.out) / "log.txt").write_text(log.getvalue() + err.getvalue())
    return {"out": cfg.out, "command": cfg.command, "exit": code, "summary": summary}


def cmd_sweep(cfg: RunConfig) -> dict:
    jobs = _expand_sweep(cfg)
    out = _prepare_out(cfg)
    if cfg.jobs == 1:
        results = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_job, jobs))
    write_jsonl(out / "sweep.jsonl", results, cfg.to_dict())
    bad = [r for r in results if r["exit"] != 0]
    for r in results:
        print(f"{r['out']}: {r['command']} exit {r['exit']}")
    summary = {"jobs": len(results), "failed": len(bad)}
    if bad:
        raise CheckFailure(f"{len(bad)} of {len(results)} sweep jobs failed", {"failed": [r["out"] for r in bad]})
    return summary


_COMMANDS = {
    "check-fn": cmd_check_fn,
    "solve": cmd_solve,
    "flow": cmd_flow,
    "slice": cmd_slice,
    "quantities": cmd_quantities,
    "sweep": cmd_sweep,
}


def _error(kind, exc, code, detail=None):
    obj = {"error": kind, "message": str(exc), "exit": code}
    if detail:
        obj["detail"] = detail
    print(json.dumps(obj, sort_keys=True, default=str), file=sys.stderr)
    return code, obj


def execute(cfg: RunConfig) -> tuple[int, dict]:
    """Run one resolved config; returns ``(exit_code, summary_or_error)``."""
    try:
        return 0, _COMMANDS[cfg.command](cfg)
    except (SpecError, ConfigError) as exc:
        return _error(type(exc).__name__, exc, 2)
    except CheckFailure as exc:
        return _error("CheckFailure", exc, 1, exc.detail)
    except ConvergenceError as exc:
        detail = None
        if exc.report is not None:
            detail = {"iterations": exc.report.iterations, "residual_sup": exc.report.residual_sup}
        return _error("ConvergenceError", exc, 1, detail)
    except ConvexityError as exc:
        return _error("ConvexityError", exc, 1, {"node": exc.node})
    except BlowUpError as exc:
        return _error("BlowUpError", exc, 1)
    except (ValueError, OSError) as exc:
        return _error(type(exc).__name__, exc, 2)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file of config keys (flags override it)")
    common.add_argument("--fn", help="speed function spec, e.g. quotient:2,1")
    common.add_argument("--n", type=int, help="dimension of the hypersurface")
    common.add_argument("--alpha", type=float, help="power of the speed, >= 1")
    common.add_argument("--ambient", choices=("euclid", "hemisphere"))
    common.add_argument("--grid", type=int, help="number of grid intervals m on [0, pi]")
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int, help="sample count for check-fn")
    common.add_argument("--perturb", type=float, help="initial perturbation amplitude")
    common.add_argument("--mode", help="perturbation modes: p2, p2+p4, or random")
    common.add_argument("--out", help="output directory (default $SHRINK_OUT or ./out)")
    common.add_argument("--jobs", type=int, help="concurrent sweep jobs")
    common.add_argument("--tol", type=float, help="Newton residual tolerance")
    common.add_argument("--offset", type=float, help="constant C <= 0 in F^a + C = s")
    common.add_argument("--body", help="profile file for quantities")
    common.add_argument("--cfl", type=float)
    common.add_argument("--normalization", choices=("inner_radius", "mean_width"))
    common.add_argument("--roundness", type=float, help="flow stops once r_max/r_min is below this")
    common.add_argument("--max-steps", dest="max_steps", type=int)
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--record-every", dest="record_every", type=int)
    common.add_argument("--svg-timestamp", dest="svg_timestamp", action="store_true")
    p = argparse.ArgumentParser(prog="shrink", description="Curvature-function checks, shrinker solves and flows.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        with contextlib.redirect_stderr(io.StringIO()) as err:
            args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            return 0
        msg = err.getvalue().strip().splitlines()
        return _error("UsageError", msg[-1] if msg else "bad arguments", 2)[0]
    flags = vars(args)
    cfg_path = flags.pop("config", None)
    try:
        file_cfg = None
        if cfg_path is not None:
            try:
                file_cfg = json.loads(Path(cfg_path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {cfg_path}: {exc}") from None
            if not isinstance(file_cfg, dict):
                raise ConfigError("config file must hold a JSON object")
            file_cfg.pop("command", None)
        cfg = resolve_config(flags, file_cfg)
    except (ConfigError, SpecError) as exc:
        return _error(type(exc).__name__, exc, 2)[0]
    return execute(cfg)[0]


if __name__ == "__main__":
    sys.exit(main())
