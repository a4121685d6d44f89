"""Maximum-principle quantities evaluated pointwise on discrete hypersurfaces.

With ``mu = 1/kappa`` the eigenvalues of the inverse second fundamental form
``b``, the curvature test function is ``G(b) = |b|^2 / tr b``.  Per node:

* ``Z = F^a G - (a-1)/a Phi``
* ``W = F^a / kappa_min - (a-1)/a Phi``
* ``T`` in direction ``e_i``: ``F^a / kappa_i - (a-1)/a Phi - beta``

``Phi`` is the warping potential (``|X|^2/2`` in Euclidean space).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .hypersurface import EUCLIDEAN, Ambient
from .symfun import DomainError, SpeedFunction, as_kappa, derivs, eval

__all__ = [
    "QuantityField",
    "G_value",
    "G_sigma_form",
    "dG_diag",
    "F_values",
    "Z_field",
    "W_field",
    "L1_margin",
    "L1_terms",
    "fg_minus_trace",
    "fg_minus_trace_pairwise",
    "T_normalization",
    "normalized_Z_inequality",
    "quantity_table",
    "write_quantity_csv",
]


@dataclass
class QuantityField:
    """Per-node values of a named quantity."""

    name: str
    values: np.ndarray
    spec: str
    alpha: float
    ambient: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError(f"{self.name} is not finite at every node")

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.values))

    def max(self) -> float:
        return float(np.max(self.values))


def G_value(kappa):
    """|b|^2 / tr b with b = diag(1/kappa)."""
    mu = 1.0 / as_kappa(kappa)
    out = np.sum(mu**2, axis=-1) / np.sum(mu, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def G_sigma_form(kappa):
    """sigma_1(b) - 2 sigma_2(b)/sigma_1(b), an equivalent convex form of G."""
    mu = 1.0 / as_kappa(kappa)
    s1 = np.sum(mu, axis=-1)
    s2 = 0.5 * (s1**2 - np.sum(mu**2, axis=-1))
    out = s1 - 2.0 * s2 / s1
    return float(out) if np.ndim(out) == 0 else out


def dG_diag(mu):
    """dG/db^ii = (2 mu_i tr b - |b|^2) / (tr b)^2 at diagonal b."""
    tr = np.sum(mu, axis=-1, keepdims=True)
    sq = np.sum(mu**2, axis=-1, keepdims=True)
    return (2.0 * mu * tr - sq) / tr**2


def fg_minus_trace(f: SpeedFunction, kappa):
    """F G - sum_i f^i, evaluated directly."""
    k = as_kappa(kappa)
    b = derivs(f, k)
    return b.value * G_value(k) - np.sum(b.grad, axis=-1)


def fg_minus_trace_pairwise(f: SpeedFunction, kappa):
    """(1/tr b) sum_{i>j} k_i^-2 k_j^-2 (f^i k_i^2 - f^j k_j^2)(k_i - k_j).

    Equal to :func:`fg_minus_trace` by homogeneity; every summand is
    non-negative for inverse-concave f.
    """
    k = as_kappa(kappa)
    b = derivs(f, k)
    q = b.grad * k**2
    w = k**-2
    t = (w[..., :, None] * w[..., None, :] * (q[..., :, None] - q[..., None, :])
         * (k[..., :, None] - k[..., None, :]))
    n = k.shape[-1]
    lower = np.tril(np.ones((n, n), dtype=bool), k=-1)
    return np.sum(t[..., lower], axis=-1) / np.sum(1.0 / k, axis=-1)


def L1_terms(f: SpeedFunction, kappa, alpha: float, ambient: Ambient = EUCLIDEAN, r=None):
    """The three non-negative summands of L1 (before summation)."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    if ambient.epsilon not in (0, 1):
        raise ValueError("L1 is only defined here for epsilon in {0, 1}")
    k = as_kappa(kappa)
    b = derivs(f, k)
    F = b.value
    mu = 1.0 / k
    G = np.sum(mu**2, axis=-1) / np.sum(mu, axis=-1)
    dG = dG_diag(mu)
    tr_f = np.sum(b.grad, axis=-1)
    if ambient.epsilon == 0:
        dlam = 1.0
    else:
        if r is None:
            raise ValueError("hemisphere L1 needs the radial coordinate r")
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0) or np.any(r >= ambient.r_max):
            raise DomainError("r outside the ambient's radial range")
        dlam = ambient.dlam(r)
    a = alpha
    t1 = dlam * (a - 1) * F ** (a - 1) * (F * G - tr_f)
    t2 = (a - 1) * F ** (2 * a) * (1.0 - np.sum(dG, axis=-1))
    t3 = ambient.epsilon * a * F ** (2 * a - 1) * (F * np.sum(dG * mu**2, axis=-1) - G * tr_f)
    return t1, t2, t3


def L1_margin(f: SpeedFunction, kappa, alpha: float, ambient: Ambient = EUCLIDEAN, r=None):
    t1, t2, t3 = L1_terms(f, kappa, alpha, ambient, r)
    out = t1 + t2 + t3
    return float(out) if np.ndim(out) == 0 else out


def normalized_Z_inequality(f: SpeedFunction, kappa):
    """f(kappa) G(kappa) / f(1,...,1) - 1, non-negative for inverse-concave f."""
    k = as_kappa(kappa)
    c = f.unit_value(k.shape[-1])
    out = eval(f, k) / c * G_value(k) - 1.0
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# fields on bodies


def _ambient_of(body) -> Ambient:
    return getattr(body, "ambient", EUCLIDEAN)


def F_values(body, f: SpeedFunction) -> tuple[np.ndarray, np.ndarray]:
    k = body.curvatures()
    return k, np.asarray(eval(f, k))


def _coef(alpha):
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    return (alpha - 1.0) / alpha


def Z_field(body, f: SpeedFunction, alpha: float) -> QuantityField:
    c = _coef(alpha)
    k, F = F_values(body, f)
    vals = F**alpha * G_value(k) - c * body.phi()
    return QuantityField("Z", vals, f.spec(), alpha, _ambient_of(body).kind)


def W_field(body, f: SpeedFunction, alpha: float) -> QuantityField:
    c = _coef(alpha)
    k, F = F_values(body, f)
    kmin = k.min(axis=-1)
    vals = F**alpha / kmin - c * body.phi()
    j = int(np.argmax(vals))
    meta = {"argmax": j, "anisotropy_at_max": float(k[j].max() / k[j].min())}
    return QuantityField("W", vals, f.spec(), alpha, _ambient_of(body).kind, meta)


def T_normalization(body, f: SpeedFunction, alpha: float):
    """Smallest beta making T non-positive everywhere, with where it is attained.

    Returns ``(beta_star, node, direction)``; ties resolve to the lowest node
    and the lowest direction index.
    """
    c = _coef(alpha)
    k, F = F_values(body, f)
    per_dir = (F**alpha)[:, None] / k - c * body.phi()[:, None]
    flat = int(np.argmax(per_dir))
    node, direction = divmod(flat, k.shape[1])
    return float(per_dir[node, direction]), node, direction


# ---------------------------------------------------------------------------
# CSV dump


def quantity_table(body, f: SpeedFunction, alpha: float) -> dict:
    k, F = F_values(body, f)
    Z = Z_field(body, f, alpha)
    W = W_field(body, f, alpha)
    beta, node, direction = T_normalization(body, f, alpha)
    return {
        "theta": body.theta,
        "kappa": k,
        "F": F,
        "Z": Z.values,
        "W": W.values,
        "Tmax": W.values - beta,
        "beta_star": beta,
        "beta_node": node,
        "beta_direction": direction,
        "max_W": W.max(),
    }


def write_quantity_csv(path_or_buf, body, f: SpeedFunction, alpha: float, header: dict) -> dict:
    """Write ``theta, kappa_1..kappa_n, F, Z, W, Tmax`` rows.

    ``header`` entries become leading ``# key: value`` comment lines; a
    trailing comment records the beta* = max W agreement.
    """
    tab = quantity_table(body, f, alpha)
    buf = io.StringIO()
    for key, val in header.items():
        buf.write(f"# {key}: {val}\n")
    w = csv.writer(buf, lineterminator="\n")
    n = tab["kappa"].shape[1]
    w.writerow(["theta"] + [f"kappa_{i + 1}" for i in range(n)] + ["F", "Z", "W", "Tmax"])
    for j in range(len(tab["theta"])):
        row = [tab["theta"][j], *tab["kappa"][j], tab["F"][j], tab["Z"][j], tab["W"][j], tab["Tmax"][j]]
        w.writerow([repr(float(v)) for v in row])
    diff = abs(tab["beta_star"] - tab["max_W"])
    agree = diff <= 1e-12 * max(1.0, abs(tab["max_W"]))
    buf.write(f"# beta_star: {tab['beta_star']!r} at node {tab['beta_node']} direction {tab['beta_direction']}\n")
    buf.write(f"# max_W: {tab['max_W']!r}  agreement: {'yes' if agree else 'NO'} (|diff|={diff:.3e})\n")
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)
    tab["agreement"] = bool(agree)
    return tab

