"""Axisymmetric convex hypersurfaces sampled on a uniform polar grid.

Euclidean bodies are stored by their support function ``s(theta)`` where
``theta`` is the angle between the outward normal and the symmetry axis.
Hemisphere hypersurfaces are radial graphs ``r(theta)`` over the equatorial
sphere.  Derivatives use Fourier-cosine (even-extension) collocation on the
nodes ``theta_j = j*pi/m``, ``j = 0..m``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.fft import dct

from .symfun import DomainError

__all__ = [
    "ConvexityError",
    "Ambient",
    "EUCLIDEAN",
    "HEMISPHERE",
    "HYPERBOLIC",
    "ambient",
    "grid",
    "cosine_operators",
    "AxiConvexBody",
    "AxiGraphHemisphere",
    "curvatures_euclid",
    "position_pairing",
    "curvatures_hemisphere",
    "legendre",
    "write_profile",
    "read_profile",
]


class ConvexityError(DomainError):
    """Profile is not strictly convex at some node."""

    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


@dataclass(frozen=True)
class Ambient:
    """Space form written as a warped product dr^2 + lambda(r)^2 sigma."""

    kind: str
    lam: Callable
    dlam: Callable
    phi: Callable
    epsilon: int
    r_max: float

    def __repr__(self):
        return f"Ambient({self.kind})"


EUCLIDEAN = Ambient("euclid", lambda r: r, lambda r: np.ones_like(np.asarray(r, float)),
                    lambda r: 0.5 * np.asarray(r, float) ** 2, 0, math.inf)
HEMISPHERE = Ambient("hemisphere", np.sin, np.cos, lambda r: 1.0 - np.cos(r), 1, math.pi / 2)
HYPERBOLIC = Ambient("hyperbolic", np.sinh, np.cosh, lambda r: np.cosh(r) - 1.0, -1, math.inf)

_AMBIENTS = {"euclid": EUCLIDEAN, "euclidean": EUCLIDEAN, "hemisphere": HEMISPHERE,
             "hyperbolic": HYPERBOLIC}


def ambient(name: str) -> Ambient:
    try:
        return _AMBIENTS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown ambient {name!r}") from None


def grid(m: int) -> np.ndarray:
    return np.arange(m + 1) * (math.pi / m)


@lru_cache(maxsize=16)
def cosine_operators(m: int):
    """Collocation matrices ``(D1, D2, Dc)`` on ``m + 1`` nodes.

    For ``u = sum_k a_k cos(k theta)`` they return ``u'``, ``u''`` and
    ``u' cot(theta)`` at the nodes.  The last operator is evaluated through
    ``sin(k theta)/sin(theta) = U_{k-1}(cos theta)``, so at the poles it
    reproduces the axis limit ``u''`` exactly.  Matrices are read-only.
    """
    th = grid(m)
    k = np.arange(m + 1)
    C = np.cos(np.outer(th, k))
    # DCT-I gives the interpolating cosine coefficients a = Cinv @ u
    Cinv = dct(np.eye(m + 1), type=1, axis=0) / m
    Cinv[0] /= 2
    Cinv[-1] /= 2
    S = -np.sin(np.outer(th, k)) * k
    S[:, -1] = 0.0  # sin(m theta_j) vanishes at every node
    C2 = -C * k**2
    U = np.empty_like(C)
    inner = slice(1, m)
    U[inner] = np.sin(np.outer(th[inner], k)) / np.sin(th[inner])[:, None]
    U[0] = k
    U[m] = k * (-1.0) ** (k - 1)
    Cc = -(k * U) * np.cos(th)[:, None]
    D1, D2, Dc = S @ Cinv, C2 @ Cinv, Cc @ Cinv
    for d in (D1, D2, Dc):
        d.setflags(write=False)
    return D1, D2, Dc


def _derivatives(u: np.ndarray):
    m = len(u) - 1
    D1, D2, Dc = cosine_operators(m)
    # derivative operators annihilate constants; subtracting u[0] keeps
    # constant profiles exactly stationary
    v = u - u[0]
    return D1 @ v, D2 @ v, Dc @ v


def legendre(ell: int, x):
    """Legendre polynomial P_ell(x)."""
    c = np.zeros(ell + 1)
    c[ell] = 1.0
    return np.polynomial.legendre.legval(x, c)


class AxiConvexBody:
    """Axisymmetric convex body in R^(n+1) given by its support function.

    Principal radii are ``s'' + s`` (meridian) and ``s' cot(theta) + s``
    (rotational, multiplicity n-1).
    """

    representation = "support-euclid"

    def __init__(self, n: int, s, check: bool = True):
        self.n = int(n)
        if self.n < 2:
            raise ValueError("n must be >= 2")
        s = np.array(s, dtype=float)
        if s.ndim != 1 or len(s) < 3:
            raise ValueError("support values must be a 1-D array with >= 3 nodes")
        s.setflags(write=False)
        self.values = s
        if check:
            self.check_convex()

    @classmethod
    def from_function(cls, n: int, m: int, fn: Callable, check: bool = True):
        return cls(n, fn(grid(m)), check=check)

    @classmethod
    def sphere(cls, n: int, m: int, radius: float = 1.0):
        return cls(n, np.full(m + 1, float(radius)))

    @property
    def m(self) -> int:
        return len(self.values) - 1

    @property
    def theta(self) -> np.ndarray:
        return grid(self.m)

    @cached_property
    def _derivs(self):
        return _derivatives(self.values)

    @property
    def ds(self) -> np.ndarray:
        return self._derivs[0]

    @property
    def d2s(self) -> np.ndarray:
        return self._derivs[1]

    @cached_property
    def radii(self):
        """(meridian, rotational) principal radii per node."""
        _, d2, dc = self._derivs
        return d2 + self.values, dc + self.values

    def check_convex(self):
        r1, r2 = self.radii
        bad = np.flatnonzero((r1 <= 0) | (r2 <= 0) | ~np.isfinite(r1) | ~np.isfinite(r2))
        if bad.size:
            j = int(bad[0])
            raise ConvexityError(
                f"not strictly convex at node {j} (theta={self.theta[j]:.6g}): "
                f"radii {r1[j]:.6g}, {r2[j]:.6g}", node=j)

    def curvatures(self) -> np.ndarray:
        """Principal curvatures per node, shape ``(m+1, n)``.

        Column 0 is the meridian curvature; the rotational curvature fills
        the remaining n-1 columns.
        """
        self.check_convex()
        r1, r2 = self.radii
        k = np.empty((self.m + 1, self.n))
        k[:, 0] = 1.0 / r1
        k[:, 1:] = (1.0 / r2)[:, None]
        return k

    def pairing(self) -> np.ndarray:
        """<X, nu> per node, which is the support value itself."""
        return self.values

    def position_sq(self) -> np.ndarray:
        return self.values**2 + self.ds**2

    def phi(self) -> np.ndarray:
        """|X|^2 / 2."""
        return 0.5 * self.position_sq()

    def points(self) -> np.ndarray:
        """Meridian-plane boundary points ``X = s nu + s' nu_theta``.

        Column 0 is the axis coordinate, column 1 the distance from the axis.
        """
        th = self.theta
        s, ds = self.values, self.ds
        return np.column_stack([s * np.cos(th) - ds * np.sin(th), s * np.sin(th) + ds * np.cos(th)])

    def scaled(self, c: float) -> "AxiConvexBody":
        return AxiConvexBody(self.n, c * self.values, check=False)

    def __repr__(self):
        return f"AxiConvexBody(n={self.n}, m={self.m})"


class AxiGraphHemisphere:
    """Axisymmetric radial graph ``r(theta)`` over S^n inside the upper hemisphere.

    Geometry is computed in the totally geodesic S^2 containing the symmetry
    axis: the meridian curve is ``P = (cos r, sin r cos t, sin r sin t)``.
    """

    representation = "radial-hemisphere"
    ambient = HEMISPHERE

    def __init__(self, n: int, r, check: bool = True):
        self.n = int(n)
        if self.n < 2:
            raise ValueError("n must be >= 2")
        r = np.array(r, dtype=float)
        if r.ndim != 1 or len(r) < 3:
            raise ValueError("radial values must be a 1-D array with >= 3 nodes")
        if np.any(r <= 0) or np.any(r >= math.pi / 2):
            raise DomainError("radial graph must stay inside (0, pi/2)")
        r.setflags(write=False)
        self.values = r
        if check:
            self.check_convex()

    @classmethod
    def slice(cls, n: int, m: int, r0: float):
        return cls(n, np.full(m + 1, float(r0)))

    @classmethod
    def from_function(cls, n: int, m: int, fn: Callable, check: bool = True):
        return cls(n, fn(grid(m)), check=check)

    @property
    def m(self) -> int:
        return len(self.values) - 1

    @property
    def theta(self) -> np.ndarray:
        return grid(self.m)

    @cached_property
    def _geometry(self):
        r = self.values
        dr, d2r, _ = _derivatives(r)
        t = self.theta
        sr, cr = np.sin(r), np.cos(r)
        st, ct = np.sin(t), np.cos(t)
        # meridian curve in R^3 and its first two derivatives
        P = np.stack([cr, sr * ct, sr * st], axis=-1)
        P1 = np.stack([-sr * dr, dr * cr * ct - sr * st, dr * cr * st + sr * ct], axis=-1)
        P2 = np.stack([
            -cr * dr**2 - sr * d2r,
            (d2r * cr - dr**2 * sr) * ct - 2 * dr * cr * st - sr * ct,
            (d2r * cr - dr**2 * sr) * st + 2 * dr * cr * ct - sr * st,
        ], axis=-1)
        N = np.cross(P, P1)
        N /= np.linalg.norm(N, axis=-1)[:, None]
        d_r = np.stack([-sr, cr * ct, cr * st], axis=-1)
        N *= np.sign(np.sum(N * d_r, axis=-1))[:, None]
        speed2 = np.sum(P1 * P1, axis=-1)
        k1 = -np.sum(N * P2, axis=-1) / speed2
        k2 = np.empty_like(k1)
        k2[1:-1] = N[1:-1, 2] / (sr[1:-1] * st[1:-1])
        # axis points are umbilic
        k2[0], k2[-1] = k1[0], k1[-1]
        v = np.sqrt(1.0 + dr**2 / sr**2)
        return k1, k2, v

    @property
    def slope_factor(self) -> np.ndarray:
        return self._geometry[2]

    def check_convex(self):
        k1, k2, _ = self._geometry
        bad = np.flatnonzero((k1 <= 0) | (k2 <= 0) | ~np.isfinite(k1) | ~np.isfinite(k2))
        if bad.size:
            j = int(bad[0])
            raise ConvexityError(
                f"not strictly convex at node {j} (theta={self.theta[j]:.6g}): "
                f"curvatures {k1[j]:.6g}, {k2[j]:.6g}", node=j)

    def curvatures(self) -> np.ndarray:
        self.check_convex()
        k1, k2, _ = self._geometry
        k = np.empty((self.m + 1, self.n))
        k[:, 0] = k1
        k[:, 1:] = k2[:, None]
        return k

    def pairing(self) -> np.ndarray:
        """g(lambda d_r, nu) = sin(r) / v."""
        return np.sin(self.values) / self.slope_factor

    def phi(self) -> np.ndarray:
        return 1.0 - np.cos(self.values)

    def __repr__(self):
        return f"AxiGraphHemisphere(n={self.n}, m={self.m})"


def curvatures_euclid(body: AxiConvexBody) -> np.ndarray:
    return body.curvatures()


def position_pairing(body: AxiConvexBody):
    """(<X, nu>, |X|^2, Phi) per node."""
    return body.pairing(), body.position_sq(), body.phi()


def curvatures_hemisphere(graph: AxiGraphHemisphere):
    return graph.curvatures(), graph.pairing()


# ---------------------------------------------------------------------------
# profile files

_HEADER = re.compile(r"^(support-euclid|radial-hemisphere)\s+n=(\d+)\s*$")


def write_profile(path, body, comments=()) -> None:
    """Write ``theta value`` rows under a ``<representation> n=<n>`` header.

    Each entry of ``comments`` becomes a ``#`` line after the header; the
    reader skips them.
    """
    lines = [f"{body.representation} n={body.n}"]
    lines += ["# " + c.replace("\n", " ") for c in comments]
    lines += [f"{t!r} {v!r}" for t, v in zip(body.theta.tolist(), body.values.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_profile(path):
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValueError(f"{path}: empty profile file")
    m = _HEADER.match(text[0].strip())
    if not m:
        raise ValueError(f"{path}: bad header {text[0]!r}")
    rows = [ln.split() for ln in text[1:] if ln.strip() and not ln.lstrip().startswith("#")]
    if any(len(r) != 2 for r in rows):
        raise ValueError(f"{path}: expected two columns per row")
    theta = np.array([float(r[0]) for r in rows])
    vals = np.array([float(r[1]) for r in rows])
    if len(vals) < 3 or np.max(np.abs(theta - grid(len(vals) - 1))) > 1e-12:
        raise ValueError(f"{path}: nodes are not the uniform grid on [0, pi]")
    cls = AxiConvexBody if m[1] == "support-euclid" else AxiGraphHemisphere
    return cls(int(m[2]), vals)
