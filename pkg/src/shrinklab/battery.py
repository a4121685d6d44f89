"""Sampled inequality battery for a speed function.

Each row reports the worst margin of one inequality over a seeded sample of
the positive cone, with the sample that attains it.  A row is *required*
when it belongs to the admissibility hypotheses (positivity, monotonicity,
homogeneity, inverse concavity and its consequences); otherwise it is only
asserted when the catalog declares the corresponding property.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import symfun as sf
from .hypersurface import EUCLIDEAN, HEMISPHERE
from .quantities import L1_margin, normalized_Z_inequality

__all__ = ["SLACK", "Row", "run_battery", "battery_passed"]

SLACK = -1e-10


@dataclass
class Row:
    check: str
    declared: bool
    required: bool
    min_margin: float
    witness: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.min_margin >= SLACK

    @property
    def status(self) -> str:
        if self.holds:
            return "pass" if (self.declared or self.required) else "holds (undeclared)"
        if self.declared or self.required:
            return "fail"
        return "violated (expected)"

    @property
    def ok(self) -> bool:
        return self.holds or not (self.declared or self.required)


def _row(check, margins, declared, required, **arrays):
    margins = np.asarray(margins, float)
    j = int(np.argmin(margins))
    witness = {k: np.asarray(v)[j].tolist() for k, v in arrays.items()}
    witness["margin"] = float(margins[j])
    return Row(check, bool(declared), bool(required), float(margins[j]), witness)


def run_battery(f: sf.SpeedFunction, n: int, samples: int = 10_000, seed: int = 0,
                alphas=(1.0, 1.5, 2.0, 3.0)) -> list[Row]:
    rng = np.random.default_rng(seed)
    flags = f.flags(n)
    k = sf.sample_kappa(rng, samples, n)
    y = sf.sample_y(rng, samples, n)
    r = rng.uniform(1e-3, np.pi / 2 - 1e-3, size=samples)
    rows = []

    rep = sf.check_condition1(f, n, rng=np.random.default_rng(seed + 1), samples=samples)
    rows.append(Row("condition1_positive", True, True, rep.min_value, {}))
    rows.append(Row("condition1_monotone", True, True, rep.min_grad, {"kappa": rep.worst["min_grad_kappa"]}))
    rows.append(Row("condition1_homogeneity", True, True, 1e-12 - rep.max_homogeneity_defect,
                    {"kappa": rep.worst["max_defect_kappa"]}))

    rows.append(_row("condition2", sf.check_condition2(f, k, y), flags["log_convex"], False, kappa=k, y=y))
    m1, m2 = sf.check_concave_bounds(f, k)
    rows.append(_row("concave_sum_grad", m1, flags["concave"], False, kappa=k))
    rows.append(_row("concave_mean_bound", m2, flags["concave"], False, kappa=k))
    rows.append(_row("inverse_concavity", sf.check_inverse_concavity(f, k, y), flags["inverse_concave"], True,
                     kappa=k, y=y))
    p1, p2 = sf.check_pairwise_ic(f, k)
    rows.append(_row("pairwise_ic_divided", p1, flags["inverse_concave"], True, kappa=k))
    rows.append(_row("pairwise_ic_squared", p2, flags["inverse_concave"], True, kappa=k))
    rows.append(_row("ic_lower_bound", sf.check_ic_lower_bound(f, k), flags["inverse_concave"], True, kappa=k))
    rows.append(_row("fk_kappa_monotone", sf.check_fk_kappa_monotone(f, k), flags["log_convex"], False, kappa=k))
    for a in alphas:
        rows.append(_row(f"L1_euclid_alpha={a:g}", L1_margin(f, k, a, EUCLIDEAN), flags["inverse_concave"], True,
                         kappa=k))
        rows.append(_row(f"L1_hemisphere_alpha={a:g}", L1_margin(f, k, a, HEMISPHERE, r),
                         flags["inverse_concave"], True, kappa=k, r=r))
    rows.append(_row("normalized_fG", normalized_Z_inequality(f, k), flags["inverse_concave"], True, kappa=k))
    return rows


def battery_passed(rows) -> bool:
    return all(r.ok for r in rows)
