"""Symmetric curvature functions on the positive cone.

Every speed function is symmetric, positive and homogeneous of degree one in
the principal curvatures.  All evaluators are batched: ``kappa`` may have
shape ``(n,)`` or ``(..., n)`` and results broadcast over the leading axes.

The catalog carries metadata flags recording which structural properties a
builder is known to have, so that the testers below can assert the right
direction of each inequality:

``concave``
    f is concave on the positive cone.
``inverse_concave``
    the dual ``x -> 1/f(1/x)`` is concave.
``log_convex``
    ``x -> log f(exp x)`` is convex (the quadratic-form condition checked by
    :func:`check_condition2`).
``log_concave``
    ``x -> log f(exp x)`` is concave.  Used only to propagate ``log_convex``
    through :func:`dual`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

__all__ = [
    "DomainError",
    "SpecError",
    "DerivBundle",
    "Report",
    "SpeedFunction",
    "Quotient",
    "PowerMean",
    "Combo",
    "GeoMean",
    "Dual",
    "ek_root",
    "quotient",
    "power_mean",
    "combo",
    "scaled",
    "normalized",
    "geomean",
    "dual",
    "parse_spec",
    "elementary_symmetric",
    "as_kappa",
    "sample_kappa",
    "sample_y",
    "eval",
    "derivs",
    "check_condition1",
    "check_condition2",
    "check_inverse_concavity",
    "check_pairwise_ic",
    "check_ic_lower_bound",
    "check_concave_bounds",
    "check_fk_kappa_monotone",
    "divided_difference",
    "DEGENERATE_GAP",
]

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_TERM = re.compile(r"\s*" + _NUM + r"\s*\*")

_FLAGS = ("concave", "inverse_concave", "log_convex", "log_concave")

# relative gap below which (f_k - f_l)/(k_k - k_l) switches to its limit
DEGENERATE_GAP = 1e-7


class DomainError(ValueError):
    """Curvature vector (or spectrum) outside the open positive cone."""


class SpecError(ValueError):
    """Malformed speed-function construction or spec string."""


def as_kappa(kappa) -> np.ndarray:
    k = np.asarray(kappa, dtype=float)
    if k.ndim == 0 or k.shape[-1] < 2:
        raise DomainError("curvature vectors need n >= 2 entries")
    if not np.all(np.isfinite(k)) or np.any(k <= 0):
        raise DomainError("curvature vector has a non-positive entry")
    return k


@dataclass(frozen=True)
class DerivBundle:
    """Value, gradient and Hessian of f at a (batch of) curvature vector(s)."""

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


# ---------------------------------------------------------------------------
# elementary symmetric polynomials


def elementary_symmetric(kappa, kmax: int) -> np.ndarray:
    """sigma_0 .. sigma_kmax of ``kappa`` along the last axis.

    Uses the product-expansion recurrence ``e_j <- e_j + x * e_{j-1}``; on the
    positive cone every term is positive so there is no cancellation.
    Returns an array of shape ``kappa.shape[:-1] + (kmax + 1,)``.
    """
    x = np.asarray(kappa, dtype=float)
    e = np.zeros(x.shape[:-1] + (kmax + 1,))
    e[..., 0] = 1.0
    for i in range(x.shape[-1]):
        xi = x[..., i, None]
        e[..., 1:] = e[..., 1:] + xi * e[..., :-1]
    return e


def _sigma_with_removed(x: np.ndarray, kmax: int):
    """sigma_j(x | i) for every i, and sigma_j(x | i, l) for every pair.

    Shapes: ``(..., n, kmax+1)`` and ``(..., n, n, kmax+1)`` (diagonal of the
    second array is left at zero).
    """
    n = x.shape[-1]
    lead = x.shape[:-1]
    one = np.zeros(lead + (n, kmax + 1))
    two = np.zeros(lead + (n, n, kmax + 1))
    idx = np.arange(n)
    for i in range(n):
        one[..., i, :] = elementary_symmetric(x[..., idx != i], kmax)
    if n >= 3:
        for i, j in combinations(range(n), 2):
            keep = (idx != i) & (idx != j)
            e = elementary_symmetric(x[..., keep], kmax)
            two[..., i, j, :] = e
            two[..., j, i, :] = e
    else:
        # removing both entries of a 2-vector leaves the empty product
        two[..., 0, 1, 0] = two[..., 1, 0, 0] = 1.0
    return one, two


def _log_esym_derivs(x: np.ndarray, k: int):
    """log E_k with its gradient and Hessian (E_k = sigma_k / C(n, k))."""
    n = x.shape[-1]
    if k == 0:
        lead = x.shape[:-1]
        return np.zeros(lead), np.zeros(lead + (n,)), np.zeros(lead + (n, n))
    s = elementary_symmetric(x, k)[..., k]
    one, two = _sigma_with_removed(x, k)
    g = one[..., k - 1]
    h = two[..., k - 2] if k >= 2 else np.zeros(x.shape[:-1] + (n, n))
    if k >= 2:
        h = h * (1.0 - np.eye(n))
    sn = s[..., None]
    lg = g / sn
    lh = h / sn[..., None] - lg[..., :, None] * lg[..., None, :]
    return np.log(s / comb(n, k)), lg, lh


def _exp_bundle(logf, lgrad, lhess) -> DerivBundle:
    f = np.exp(logf)
    grad = f[..., None] * lgrad
    hess = f[..., None, None] * (lhess + lgrad[..., :, None] * lgrad[..., None, :])
    return DerivBundle(f, grad, hess)


# ---------------------------------------------------------------------------
# catalog


class SpeedFunction:
    """Base class of the speed-function catalog.

    Subclasses implement ``_derivs`` on validated, batched curvature arrays.
    """

    def __call__(self, kappa):
        return eval(self, kappa)

    def flags(self, n: int) -> dict:
        """Structural properties known to hold in dimension n."""
        raise NotImplementedError

    def _value(self, k: np.ndarray) -> np.ndarray:
        return self._derivs(k).value

    def _derivs(self, k: np.ndarray) -> DerivBundle:
        raise NotImplementedError

    def spec(self) -> str:
        raise NotImplementedError

    def unit_value(self, n: int) -> float:
        """f(1, ..., 1)."""
        return float(eval(self, np.ones(n)))

    def __repr__(self):
        return f"<SpeedFunction {self.spec()}>"

    def __eq__(self, other):
        return isinstance(other, SpeedFunction) and self.spec() == other.spec()

    def __hash__(self):
        return hash(self.spec())


@dataclass(frozen=True, eq=False, repr=False)
class Quotient(SpeedFunction):
    """(E_k / E_l)^(1/(k-l)); ``l == 0`` gives E_k^(1/k)."""

    k: int
    l: int = 0

    def __post_init__(self):
        if not (0 <= self.l < self.k):
            raise SpecError(f"quotient needs 0 <= l < k, got k={self.k}, l={self.l}")

    def flags(self, n):
        # (E_n/E_l)^(1/(n-l)) is the dual of E_(n-l)^(1/(n-l))
        return dict(concave=True, inverse_concave=True,
                    log_convex=self.l == 0, log_concave=self.k == n)

    def _derivs(self, x):
        n = x.shape[-1]
        if self.k > n:
            raise DomainError(f"E_{self.k} undefined for n={n}")
        lk, gk, hk = _log_esym_derivs(x, self.k)
        ll, gl, hl = _log_esym_derivs(x, self.l)
        p = 1.0 / (self.k - self.l)
        return _exp_bundle(p * (lk - ll), p * (gk - gl), p * (hk - hl))

    def _value(self, x):
        n = x.shape[-1]
        if self.k > n:
            raise DomainError(f"E_{self.k} undefined for n={n}")
        e = elementary_symmetric(x, self.k)
        ek = e[..., self.k] / comb(n, self.k)
        el = e[..., self.l] / comb(n, self.l)
        return (ek / el) ** (1.0 / (self.k - self.l))

    def spec(self):
        if self.l == 0:
            return f"ek_root:{self.k}"
        return f"quotient:{self.k},{self.l}"


@dataclass(frozen=True, eq=False, repr=False)
class PowerMean(SpeedFunction):
    """H_r = (sum kappa_i^r)^(1/r), r != 0 (not divided by n)."""

    r: float

    def __post_init__(self):
        if self.r == 0 or not np.isfinite(self.r):
            raise SpecError("power_mean needs a finite r != 0")

    def flags(self, n):
        r = self.r
        return dict(concave=r <= 1, inverse_concave=r >= -1,
                    log_convex=r > 0, log_concave=r < 0)

    def _derivs(self, x):
        r = self.r
        xr = x**r
        S = xr.sum(axis=-1)
        lg = x ** (r - 1) / S[..., None]
        n = x.shape[-1]
        lh = np.eye(n) * ((r - 1) * x ** (r - 2) / S[..., None])[..., None, :]
        lh = lh - r * lg[..., :, None] * lg[..., None, :]
        return _exp_bundle(np.log(S) / r, lg, lh)

    def _value(self, x):
        return (x**self.r).sum(axis=-1) ** (1.0 / self.r)

    def spec(self):
        return f"power_mean:{_fmt(self.r)}"


def _fmt(x: float) -> str:
    return repr(float(x)).removesuffix(".0") if float(x).is_integer() else repr(float(x))


def _part_spec(p: SpeedFunction) -> str:
    # composites nested in a weighted list are parenthesized so the split is unambiguous
    if isinstance(p, (Quotient, PowerMean)):
        return p.spec()
    return f"({p.spec()})"


def _check_weights(weights, parts, need_unit_sum):
    w = tuple(float(v) for v in weights)
    if len(w) != len(parts) or not parts:
        raise SpecError("weights and parts must be non-empty and of equal length")
    if any(not (v > 0 and np.isfinite(v)) for v in w):
        raise SpecError("weights must be positive")
    if need_unit_sum and abs(sum(w) - 1.0) > 1e-12:
        raise SpecError("geometric-mean weights must sum to 1")
    return w


@dataclass(frozen=True, eq=False, repr=False)
class Combo(SpeedFunction):
    """Positive linear combination sum w_i f_i."""

    weights: tuple
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "weights", _check_weights(self.weights, self.parts, False))
        object.__setattr__(self, "parts", tuple(self.parts))

    def flags(self, n):
        fs = [p.flags(n) for p in self.parts]
        out = {key: all(f[key] for f in fs) for key in _FLAGS}
        # sums of log-convex functions stay log-convex, not so for log-concave
        out["log_concave"] = len(fs) == 1 and fs[0]["log_concave"]
        return out

    def _derivs(self, x):
        bs = [p._derivs(x) for p in self.parts]
        return DerivBundle(
            sum(w * b.value for w, b in zip(self.weights, bs)),
            sum(w * b.grad for w, b in zip(self.weights, bs)),
            sum(w * b.hess for w, b in zip(self.weights, bs)),
        )

    def _value(self, x):
        return sum(w * p._value(x) for w, p in zip(self.weights, self.parts))

    def spec(self):
        return "combo:" + "+".join(f"{_fmt(w)}*{_part_spec(p)}" for w, p in zip(self.weights, self.parts))


@dataclass(frozen=True, eq=False, repr=False)
class GeoMean(SpeedFunction):
    """Weighted geometric mean prod f_i^w_i with sum w_i = 1."""

    weights: tuple
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "weights", _check_weights(self.weights, self.parts, True))
        object.__setattr__(self, "parts", tuple(self.parts))

    def flags(self, n):
        fs = [p.flags(n) for p in self.parts]
        return {key: all(f[key] for f in fs) for key in _FLAGS}

    def _derivs(self, x):
        bs = [p._derivs(x) for p in self.parts]
        logf = sum(w * np.log(b.value) for w, b in zip(self.weights, bs))
        lg = sum(w * b.grad / b.value[..., None] for w, b in zip(self.weights, bs))
        lh = 0.0
        for w, b in zip(self.weights, bs):
            g = b.grad / b.value[..., None]
            lh = lh + w * (b.hess / b.value[..., None, None] - g[..., :, None] * g[..., None, :])
        return _exp_bundle(logf, lg, lh)

    def _value(self, x):
        return np.exp(sum(w * np.log(p._value(x)) for w, p in zip(self.weights, self.parts)))

    def spec(self):
        return "geomean:" + ",".join(f"{_fmt(w)}*{_part_spec(p)}" for w, p in zip(self.weights, self.parts))


@dataclass(frozen=True, eq=False, repr=False)
class Dual(SpeedFunction):
    """f_*(x) = 1 / f(1/x)."""

    inner: SpeedFunction

    def flags(self, n):
        f = self.inner.flags(n)
        return dict(concave=f["inverse_concave"], inverse_concave=f["concave"],
                    log_convex=f["log_concave"], log_concave=f["log_convex"])

    def _derivs(self, x):
        y = 1.0 / x
        b = self.inner._derivs(y)
        f = b.value[..., None]
        y2 = y**2
        grad = b.grad * y2 / f**2
        hess = (
            2.0 * (b.grad * y2)[..., :, None] * (b.grad * y2)[..., None, :] / f[..., None] ** 3
            - b.hess * y2[..., :, None] * y2[..., None, :] / f[..., None] ** 2
        )
        n = x.shape[-1]
        hess = hess - 2.0 * np.eye(n) * (b.grad * y**3 / f**2)[..., None, :]
        return DerivBundle(1.0 / b.value, grad, hess)

    def _value(self, x):
        return 1.0 / self.inner._value(1.0 / x)

    def spec(self):
        return f"dual:{self.inner.spec()}"


# ---------------------------------------------------------------------------
# builders


def ek_root(k: int) -> Quotient:
    return Quotient(int(k), 0)


def quotient(k: int, l: int) -> Quotient:
    return Quotient(int(k), int(l))


def power_mean(r: float) -> PowerMean:
    return PowerMean(float(r))


def combo(weights, parts) -> Combo:
    return Combo(tuple(weights), tuple(parts))


def scaled(c: float, f: SpeedFunction) -> SpeedFunction:
    """c * f as a one-term combination."""
    return Combo((float(c),), (f,))


def normalized(f: SpeedFunction, n: int) -> SpeedFunction:
    """f / f(1, ..., 1) so that the result equals 1 at the unit vector."""
    return scaled(1.0 / f.unit_value(n), f)


def geomean(weights, parts) -> GeoMean:
    return GeoMean(tuple(weights), tuple(parts))


def dual(f: SpeedFunction) -> SpeedFunction:
    return Dual(f)


def _split_top(text: str, sep: str) -> list[str]:
    """Split on ``sep`` outside parentheses, only where a ``WEIGHT*`` term follows.

    The lookahead keeps ``quotient:2,1`` intact inside a geomean list.
    """
    out, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise SpecError(f"unbalanced parentheses in {text!r}")
        elif ch == sep and depth == 0 and _TERM.match(text, i + 1):
            if sep == "+" and re.search(r"\d[eE]$", text[start:i]):
                continue
            out.append(text[start:i])
            start = i + 1
    if depth:
        raise SpecError(f"unbalanced parentheses in {text!r}")
    out.append(text[start:])
    return out


def _wrapped(s: str) -> bool:
    """True if the outermost parentheses of s enclose all of it."""
    if not (s.startswith("(") and s.endswith(")")):
        return False
    depth = 0
    for i, ch in enumerate(s):
        depth += (ch == "(") - (ch == ")")
        if depth == 0 and i < len(s) - 1:
            return False
    return True


def _weighted_terms(body: str, sep: str):
    weights, parts = [], []
    for term in _split_top(body, sep):
        w, star, sub = term.partition("*")
        if not star:
            raise SpecError(f"expected WEIGHT*SPEC, got {term!r}")
        try:
            weights.append(float(w))
        except ValueError:
            raise SpecError(f"bad weight {w!r}") from None
        parts.append(parse_spec(sub))
    return weights, parts


def parse_spec(text: str) -> SpeedFunction:
    """Parse a speed-function spec string.

    Grammar::

        ek_root:K | quotient:K,L | power_mean:R
        combo:W*SPEC+W*SPEC+...   geomean:W*SPEC,W*SPEC,...   dual:SPEC

    Nested combinations may be wrapped in parentheses, e.g.
    ``geomean:0.5*(combo:0.5*ek_root:2+0.5*power_mean:1),0.5*ek_root:3``.
    """
    s = text.strip()
    while _wrapped(s):
        s = s[1:-1].strip()
    head, colon, body = s.partition(":")
    if not colon:
        raise SpecError(f"missing ':' in spec {text!r}")
    head = head.strip().lower()
    body = body.strip()
    if head == "ek_root":
        if not re.fullmatch(r"\d+", body):
            raise SpecError(f"ek_root needs an integer, got {body!r}")
        return ek_root(int(body))
    if head == "quotient":
        m = re.fullmatch(r"(\d+)\s*,\s*(\d+)", body)
        if not m:
            raise SpecError(f"quotient needs K,L, got {body!r}")
        return quotient(int(m[1]), int(m[2]))
    if head == "power_mean":
        if not re.fullmatch(_NUM, body):
            raise SpecError(f"power_mean needs a number, got {body!r}")
        return power_mean(float(body))
    if head == "combo":
        return combo(*_weighted_terms(body, "+"))
    if head == "geomean":
        return geomean(*_weighted_terms(body, ","))
    if head == "dual":
        return dual(parse_spec(body))
    raise SpecError(f"unknown speed function {head!r}")


# ---------------------------------------------------------------------------
# evaluation


def eval(f: SpeedFunction, kappa) -> np.ndarray | float:
    k = as_kappa(kappa)
    v = f._value(k)
    return float(v) if np.ndim(v) == 0 else v


def derivs(f: SpeedFunction, kappa) -> DerivBundle:
    k = as_kappa(kappa)
    b = f._derivs(k)
    hess = 0.5 * (b.hess + np.swapaxes(b.hess, -1, -2))
    return DerivBundle(b.value, b.grad, hess)


# ---------------------------------------------------------------------------
# sampling


def sample_kappa(rng: np.random.Generator, size: int, n: int, lo=0.1, hi=10.0) -> np.ndarray:
    """Log-uniform curvature vectors on [lo, hi]^n."""
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=(size, n)))


def sample_y(rng: np.random.Generator, size: int, n: int) -> np.ndarray:
    return rng.standard_normal((size, n))


# ---------------------------------------------------------------------------
# testers


@dataclass
class Report:
    """Worst-case margins of the structural conditions over a sample set."""

    spec: str
    n: int
    samples: int
    min_value: float
    min_grad: float
    max_homogeneity_defect: float
    worst: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.min_value > 0 and self.min_grad > 0 and self.max_homogeneity_defect < 1e-12


def check_condition1(f: SpeedFunction, n: int, rng: np.random.Generator | None = None,
                     samples: int = 10_000) -> Report:
    """Sampled positivity, monotonicity and degree-1 homogeneity of f."""
    rng = np.random.default_rng(0) if rng is None else rng
    k = sample_kappa(rng, samples, n)
    scale = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=samples))
    b = derivs(f, k)
    fk = eval(f, k * scale[:, None])
    defect = np.abs(fk - scale * b.value) / np.abs(fk)
    return Report(
        spec=f.spec(),
        n=n,
        samples=samples,
        min_value=float(b.value.min()),
        min_grad=float(b.grad.min()),
        max_homogeneity_defect=float(defect.max()),
        worst={
            "min_grad_kappa": k[np.argmin(b.grad.min(axis=-1))].tolist(),
            "max_defect_kappa": k[np.argmax(defect)].tolist(),
        },
    )


def check_condition2(f: SpeedFunction, kappa, y) -> np.ndarray | float:
    """sum (1/k_i) d_i log f y_i^2 + sum d_ij log f y_i y_j."""
    k = as_kappa(kappa)
    y = np.asarray(y, dtype=float)
    b = derivs(f, k)
    fv = np.asarray(b.value)[..., None]
    lg = b.grad / fv
    lh = b.hess / fv[..., None] - lg[..., :, None] * lg[..., None, :]
    m = np.sum(lg / k * y**2, axis=-1) + np.einsum("...i,...ij,...j->...", y, lh, y)
    return _out(m)


def check_inverse_concavity(f: SpeedFunction, kappa, y) -> np.ndarray | float:
    """sum f^kl y_k y_l + 2 sum f^k y_k^2 / k_k - 2 (sum f^k y_k)^2 / f."""
    k = as_kappa(kappa)
    y = np.asarray(y, dtype=float)
    b = derivs(f, k)
    quad = np.einsum("...i,...ij,...j->...", y, b.hess, y)
    lin = np.sum(b.grad * y, axis=-1)
    m = quad + 2.0 * np.sum(b.grad * y**2 / k, axis=-1) - 2.0 * lin**2 / b.value
    return _out(m)


def divided_difference(grad, hess, kappa, gap=DEGENERATE_GAP) -> np.ndarray:
    """Matrix of (f^k - f^l)/(k_k - k_l), with the symmetric limit
    (f^kk + f^ll)/2 - f^kl where the two curvatures nearly coincide.

    Diagonal entries are filled with the same limit formula.
    """
    k = np.asarray(kappa, dtype=float)
    dk = k[..., :, None] - k[..., None, :]
    dg = grad[..., :, None] - grad[..., None, :]
    d = np.diagonal(hess, axis1=-2, axis2=-1)
    limit = 0.5 * (d[..., :, None] + d[..., None, :]) - hess
    tol = gap * np.max(np.abs(k), axis=-1)[..., None, None]
    near = np.abs(dk) < tol
    safe = np.where(near, 1.0, dk)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(near, limit, dg / safe)


def _pair_mask(n):
    return ~np.eye(n, dtype=bool)


def _out(m):
    m = np.asarray(m)
    return float(m) if m.ndim == 0 else m


def check_pairwise_ic(f: SpeedFunction, kappa):
    """Worst pairwise margins of the two inverse-concavity consequences.

    Returns ``(m1, m2)`` with ``m1 = min_{k!=l} (f^k-f^l)/(k_k-k_l) + f^k/k_l + f^l/k_k``
    and ``m2 = min_{k!=l} (f^k k_k^2 - f^l k_l^2)(k_k - k_l)``.
    """
    k = as_kappa(kappa)
    b = derivs(f, k)
    n = k.shape[-1]
    mask = _pair_mask(n)
    dd = divided_difference(b.grad, b.hess, k)
    t1 = dd + b.grad[..., :, None] / k[..., None, :] + b.grad[..., None, :] / k[..., :, None]
    q = b.grad * k**2
    t2 = (q[..., :, None] - q[..., None, :]) * (k[..., :, None] - k[..., None, :])
    m1 = np.min(t1[..., mask], axis=-1)
    m2 = np.min(t2[..., mask], axis=-1)
    return _out(m1), _out(m2)


def check_ic_lower_bound(f: SpeedFunction, kappa):
    """sum f^k k_k^2 - f^2 / f(1,...,1)."""
    k = as_kappa(kappa)
    b = derivs(f, k)
    c = f.unit_value(k.shape[-1])
    return _out(np.sum(b.grad * k**2, axis=-1) - b.value**2 / c)


def check_concave_bounds(f: SpeedFunction, kappa):
    """(sum f^i - f(1,...,1), f(1,...,1)/n sum k_i - f)."""
    k = as_kappa(kappa)
    b = derivs(f, k)
    n = k.shape[-1]
    c = f.unit_value(n)
    return _out(np.sum(b.grad, axis=-1) - c), _out(c / n * np.sum(k, axis=-1) - b.value)


def check_fk_kappa_monotone(f: SpeedFunction, kappa):
    """min_{k != l} (f^k k_k - f^l k_l)(k_k - k_l)."""
    k = as_kappa(kappa)
    b = derivs(f, k)
    q = b.grad * k
    t = (q[..., :, None] - q[..., None, :]) * (k[..., :, None] - k[..., None, :])
    return _out(np.min(t[..., _pair_mask(k.shape[-1])], axis=-1))
