"""Self-similar shrinkers: radius finders, Newton solver and normalized flow.

On a Euclidean support profile the flow ``dX/dt = -F^a nu`` becomes the
scalar equation ``ds/dt = -F^a`` and the self-similar equation reads
``F^a + C = s``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .hypersurface import (
    EUCLIDEAN,
    Ambient,
    AxiConvexBody,
    AxiGraphHemisphere,
    ConvexityError,
    cosine_operators,
    grid,
    legendre,
)
from .symfun import SpeedFunction, derivs, eval

log = logging.getLogger(__name__)

__all__ = [
    "ConvergenceError",
    "BlowUpError",
    "ShrinkerProblem",
    "SolveReport",
    "FlowRun",
    "FlowTrace",
    "sphere_radius",
    "slice_radius",
    "homothetic_radius",
    "residual",
    "jacobian",
    "anisotropy",
    "solve_shrinker",
    "perturbed_body",
    "run_flow",
    "write_jsonl",
]


class ConvergenceError(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class BlowUpError(RuntimeError):
    pass


@dataclass
class ShrinkerProblem:
    f: SpeedFunction
    alpha: float
    n: int = 3
    ambient: Ambient = EUCLIDEAN
    C: float = 0.0
    m: int = 128
    tol: float = 1e-11
    max_iter: int = 60
    max_halvings: int = 20

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.C > 0:
            raise ValueError("offset C must be <= 0")
        if self.n < 2:
            raise ValueError("n must be >= 2")

    @property
    def unit_value(self) -> float:
        return self.f.unit_value(self.n)


def sphere_radius(f: SpeedFunction, n: int, alpha: float, C: float = 0.0) -> float:
    """Radius of the round solution of (f(1..1)/r)^a = r - C."""
    if C > 0:
        raise ValueError("offset C must be <= 0")
    c = f.unit_value(n)

    def g(r):
        return (c / r) ** alpha - r + C

    lo, hi = 1e-3, 1.0
    while g(lo) <= 0:
        lo /= 10
    while g(hi) >= 0:
        hi *= 2
    return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def slice_radius(f: SpeedFunction, n: int, alpha: float) -> float:
    """r0 in (0, pi/2) with (f(1..1) cot r0)^a = sin r0.

    The left side decreases and the right side increases, so the root is unique.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    c = f.unit_value(n)

    def g(r):
        return (c / math.tan(r)) ** alpha - math.sin(r)

    eps = 1e-12
    return brentq(g, eps, math.pi / 2 - eps, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def homothetic_radius(t, T, alpha, r_hat):
    """((a+1)(T-t))^(1/(a+1)) r_hat."""
    return ((alpha + 1.0) * (T - np.asarray(t, float))) ** (1.0 / (alpha + 1.0)) * r_hat


def residual(body, problem: ShrinkerProblem) -> np.ndarray:
    """F^a + C - <X, nu> (Euclidean) or F^a - g(lambda d_r, nu) (hemisphere)."""
    F = np.asarray(eval(problem.f, body.curvatures()))
    if isinstance(body, AxiGraphHemisphere):
        return F**problem.alpha - body.pairing()
    return F**problem.alpha + problem.C - body.values


def anisotropy(body) -> float:
    """max kappa / min kappa - 1 over the whole body."""
    k = body.curvatures()
    return float(k.max() / k.min() - 1.0)


def _speed_derivative(body: AxiConvexBody, f: SpeedFunction, alpha: float):
    """F^a and its derivative coefficients with respect to the two radii.

    Returns ``(Fa, c1, c2)`` with ``d(F^a) = -c1 d(r1) - c2 d(r2)``.
    """
    k = body.curvatures()
    b = derivs(f, k)
    F = b.value
    dFa = alpha * F ** (alpha - 1.0)
    c1 = dFa * b.grad[:, 0] * k[:, 0] ** 2
    c2 = dFa * b.grad[:, 1:].sum(axis=1) * k[:, 1] ** 2
    return F**alpha, c1, c2


def jacobian(body: AxiConvexBody, problem: ShrinkerProblem) -> np.ndarray:
    """Exact linearization of the Euclidean residual with respect to s."""
    _, D2, Dc = cosine_operators(body.m)
    _, c1, c2 = _speed_derivative(body, problem.f, problem.alpha)
    eye = np.eye(body.m + 1)
    return -(c1[:, None] * (D2 + eye)) - (c2[:, None] * (Dc + eye)) - eye


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_sup: float
    anisotropy: float
    history: list = field(default_factory=list)
    quadratic_constant: float | None = None

    def records(self):
        return self.history


def _record(it, res, body, scale):
    return {"iter": it, "residual_sup": float(res), "anisotropy": anisotropy(body), "scale": float(scale)}


def solve_shrinker(problem: ShrinkerProblem, initial: AxiConvexBody):
    """Damped Newton iteration for F^a + C = s on a support profile.

    A step is accepted when it keeps the body strictly convex and strictly
    decreases the residual sup-norm; otherwise it is halved, at most
    ``problem.max_halvings`` times.  Returns ``(body, report)``.
    """
    if problem.ambient is not EUCLIDEAN:
        raise ValueError("Newton solving is only available for the Euclidean ambient")
    if initial.n != problem.n:
        raise ValueError(f"body has n={initial.n}, problem has n={problem.n}")
    body = initial
    R = residual(body, problem)
    res = float(np.max(np.abs(R)))
    history = [_record(0, res, body, body.values.min())]
    it = 0
    while res > problem.tol:
        if it >= problem.max_iter:
            report = SolveReport(False, it, res, anisotropy(body), history)
            raise ConvergenceError(f"no convergence after {it} Newton iterations (residual {res:.3e})", report)
        it += 1
        step = np.linalg.solve(jacobian(body, problem), -R)
        t = 1.0
        for _ in range(problem.max_halvings + 1):
            try:
                trial = AxiConvexBody(body.n, body.values + t * step)
                R_trial = residual(trial, problem)
                res_trial = float(np.max(np.abs(R_trial)))
                if res_trial < res:
                    break
            except ConvexityError:
                pass
            t *= 0.5
        else:
            report = SolveReport(False, it, res, anisotropy(body), history)
            raise ConvergenceError(f"line search failed at iteration {it} (residual {res:.3e})", report)
        body, R, res = trial, R_trial, res_trial
        history.append(_record(it, res, body, body.values.min()) | {"step": t})
        log.debug("newton %d: residual %.3e step %.3g", it, res, t)
    report = SolveReport(True, it, res, anisotropy(body), history, _quadratic_constant(history))
    return body, report


def _quadratic_constant(history):
    """Fitted K in r_{k+1} <= K r_k^2 over the tail where r_k < 1e-3."""
    rs = [h["residual_sup"] for h in history]
    ks = [b / a**2 for a, b in zip(rs, rs[1:]) if a < 1e-3 and b > 1e-11]
    return max(ks) if ks else None


def perturbed_body(n: int, m: int, radius: float, amplitude: float, modes=(2,), weights=None,
                   shrink: float = 0.8, max_tries: int = 40) -> tuple[AxiConvexBody, float]:
    """radius * (1 + amp * sum w_l P_l(cos theta)), shrinking amp until convex.

    Returns the body and the amplitude actually used.
    """
    th = grid(m)
    w = np.ones(len(modes)) if weights is None else np.asarray(weights, float)
    shape = sum(wi * legendre(ell, np.cos(th)) for wi, ell in zip(w, modes))
    shape = shape / np.max(np.abs(shape))
    amp = float(amplitude)
    for _ in range(max_tries):
        try:
            return AxiConvexBody(n, radius * (1.0 + amp * shape)), amp
        except ConvexityError:
            amp *= shrink
    raise ConvexityError("could not find a convex perturbation")


# ---------------------------------------------------------------------------
# flow


@dataclass
class FlowRun:
    """Configuration of a normalized contracting-flow run.

    ``normalization`` is ``"inner_radius"`` (min support value held at
    ``target``) or ``"mean_width"`` (mean support value over the sphere held
    at ``target``).
    """

    initial: AxiConvexBody
    cfl: float = 0.2
    normalization: str = "inner_radius"
    target: float | None = None
    roundness_tol: float = 1.001
    max_steps: int = 200_000
    max_time: float | None = None
    record_every: int = 100
    max_halvings: int = 20
    blowup: float = 1e6
    stop_when_round: bool = True
    stiffness_every: int = 10

    def __post_init__(self):
        if self.normalization not in ("inner_radius", "mean_width"):
            raise ValueError(f"unknown normalization {self.normalization!r}")


@dataclass
class FlowTrace:
    records: list
    body: AxiConvexBody
    time: float
    scale: float
    steps: int
    reached_round: bool

    def column(self, key):
        return np.array([r[key] for r in self.records])


def _sphere_weights(m: int, n: int) -> np.ndarray:
    th = grid(m)
    w = np.sin(th) ** (n - 1)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w / w.sum()


def _size(s, mode, weights):
    return float(s.min()) if mode == "inner_radius" else float(weights @ s)


def _stiffness(body: AxiConvexBody, f, alpha):
    Fa, c1, c2 = _speed_derivative(body, f, alpha)
    return Fa, float(np.max(c1 + c2)) * body.m**2


def _flow_record(step, t, scale, body, Fa, f):
    k = body.curvatures()
    radii = scale / k
    s = body.values
    defect = float(np.max(np.abs(Fa / Fa.mean() - s / s.mean())))
    return {
        "iter": step,
        "time": t,
        "scale": scale,
        "residual_sup": defect,
        "anisotropy": float(k.max() / k.min() - 1.0),
        "r_min": float(radii.min()),
        "r_max": float(radii.max()),
        "roundness": float(radii.max() / radii.min()),
        "F_min": float(Fa.min()),
        "F_max": float(Fa.max()),
    }


def run_flow(flow: FlowRun, problem: ShrinkerProblem) -> FlowTrace:
    """Integrate ds/dt = -F^a with SSP-RK3 and rescale after every step.

    The stored body is normalized; ``scale`` maps it back to physical size
    and ``time`` is physical time (a rescale by k changes the flow's time
    unit by k^(a+1)).  Records hold physical radii.  ``F_min``/``F_max`` in
    the records are ranges of F^a on the normalized body.
    """
    if problem.ambient is not EUCLIDEAN:
        raise ValueError("flows are only available for the Euclidean ambient")
    f, a = problem.f, problem.alpha
    body = flow.initial
    weights = _sphere_weights(body.m, body.n)
    target = flow.target if flow.target is not None else _size(body.values, flow.normalization, weights)
    scale = _size(body.values, flow.normalization, weights) / target
    body = AxiConvexBody(body.n, body.values / scale)
    t = 0.0
    Fa, lam = _stiffness(body, f, a)
    records = [_flow_record(0, t, scale, body, Fa, f)]
    reached = records[-1]["roundness"] <= flow.roundness_tol
    step = 0

    def speed(b):
        return np.asarray(eval(f, b.curvatures())) ** a

    while step < flow.max_steps and not (reached and flow.stop_when_round):
        if flow.max_time is not None and t >= flow.max_time:
            break
        if Fa.max() / Fa.min() > flow.blowup:
            raise BlowUpError(f"speed range exceeded {flow.blowup:g} at step {step}")
        dt = flow.cfl / lam
        if flow.max_time is not None:
            dt = min(dt, (flow.max_time - t) / scale ** (a + 1))
        s0 = body.values
        for _ in range(flow.max_halvings + 1):
            try:
                s1 = s0 - dt * Fa
                s2 = 0.75 * s0 + 0.25 * (s1 - dt * speed(AxiConvexBody(body.n, s1)))
                s3 = s0 / 3.0 + 2.0 / 3.0 * (s2 - dt * speed(AxiConvexBody(body.n, s2)))
                new = AxiConvexBody(body.n, s3)
                break
            except ConvexityError:
                dt *= 0.5
        else:
            raise ConvexityError(f"flow lost convexity at step {step} after {flow.max_halvings} halvings")
        t += dt * scale ** (a + 1)
        k = _size(new.values, flow.normalization, weights) / target
        scale *= k
        body = AxiConvexBody(body.n, new.values / k)
        step += 1
        if step % flow.stiffness_every == 0:
            Fa, lam = _stiffness(body, f, a)
        else:
            Fa = speed(body)
        rec = None
        if step % flow.record_every == 0:
            rec = _flow_record(step, t, scale, body, Fa, f)
            records.append(rec)
            reached = rec["roundness"] <= flow.roundness_tol
        elif flow.stop_when_round:
            k_ = body.curvatures()
            reached = k_.max() / k_.min() <= flow.roundness_tol
            if reached:
                records.append(_flow_record(step, t, scale, body, Fa, f))
    if records[-1]["iter"] != step:
        records.append(_flow_record(step, t, scale, body, Fa, f))
    return FlowTrace(records, body, t, scale, step, records[-1]["roundness"] <= flow.roundness_tol)


def write_jsonl(path_or_buf, records, header: dict | None = None) -> None:
    """One JSON object per line; an optional first line carries the config."""
    lines = []
    if header is not None:
        lines.append(json.dumps({"config": header}, sort_keys=True))
    lines += [json.dumps(r, sort_keys=True) for r in records]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)
