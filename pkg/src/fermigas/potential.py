"""Interaction potentials in momentum space and their hypothesis checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .lattice import Momentum, as_momentum, lattice_points, norm2

DECAY_CLASSES = ("coulomb_like", "summable", "alpha_square_summable")


@dataclass(frozen=True)
class PotentialSpec:
    """Fourier coefficients V̂(ℓ) on Z^3 minus the origin.

    ``tail_exponent`` is the declared decay V̂(ℓ) ~ |ℓ|^(-tail_exponent); it
    decides the infinite-sum hypotheses that no finite scan can settle.
    """

    name: str
    func: Callable[[Momentum], float] = field(compare=False)
    decay_class: str
    tail_exponent: float
    coupling_scale: float = 1.0
    radial_profile: Callable[[float], float] | None = field(default=None, compare=False)
    cubic_symmetric: bool = False
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.decay_class not in DECAY_CLASSES:
            raise ValueError(f"unknown decay class {self.decay_class!r}")

    def evaluate(self, ell) -> float:
        ell = as_momentum(ell)
        if ell == (0, 0, 0):
            raise ValueError("V̂ is not defined at ℓ = 0")
        return self.coupling_scale * self.func(ell)

    __call__ = evaluate

    def radial(self, r: float) -> float:
        if self.radial_profile is None:
            raise ValueError(f"potential {self.name!r} has no radial profile")
        return self.coupling_scale * self.radial_profile(r)

    def scaled(self, s: float) -> "PotentialSpec":
        return replace(self, coupling_scale=self.coupling_scale * s)

    @property
    def is_zero(self) -> bool:
        return self.coupling_scale == 0 or dict(self.params).get("g", 1.0) == 0

    @property
    def fingerprint(self) -> str:
        args = ",".join(f"{k}={v!r}" for k, v in self.params)
        return f"{self.name}:{args};scale={self.coupling_scale!r}"


def coulomb(g: float = 1.0) -> PotentialSpec:
    if g < 0:
        raise ValueError(f"coulomb coupling g must be >= 0, got {g}")
    g = float(g)
    return PotentialSpec(
        name="coulomb",
        func=lambda ell: g / norm2(ell),
        decay_class="coulomb_like",
        tail_exponent=2.0,
        radial_profile=lambda r: g / (r * r),
        cubic_symmetric=True,
        params=(("g", g),),
    )


def yukawa_like(g: float = 1.0, decay_power: float = 2.0) -> PotentialSpec:
    """V̂(ℓ) = g |ℓ|^(-2 decay_power); summable for decay_power > 3/2."""
    if g < 0:
        raise ValueError(f"yukawa coupling g must be >= 0, got {g}")
    if not decay_power > 1.5:
        raise ValueError(f"decay_power must exceed 3/2, got {decay_power}")
    g, p = float(g), float(decay_power)
    return PotentialSpec(
        name="yukawa",
        func=lambda ell: g * norm2(ell) ** (-p),
        decay_class="summable",
        tail_exponent=2.0 * p,
        radial_profile=lambda r: g * r ** (-2.0 * p),
        cubic_symmetric=True,
        params=(("g", g), ("p", p)),
    )


def skewed_coulomb(g: float = 1.0, eps: float = 0.1) -> PotentialSpec:
    """Coulomb tilted along x; deliberately violates V̂(ℓ) = V̂(-ℓ)."""
    g, eps = float(g), float(eps)
    return PotentialSpec(
        name="skewed",
        func=lambda ell: g / norm2(ell) * (1.0 + eps * ell[0] / math.sqrt(norm2(ell))),
        decay_class="coulomb_like",
        tail_exponent=2.0,
        params=(("g", g), ("eps", eps)),
    )


FAMILIES = {
    "coulomb": (coulomb, {"g": "g"}),
    "yukawa": (yukawa_like, {"g": "g", "p": "decay_power"}),
    "skewed": (skewed_coulomb, {"g": "g", "eps": "eps"}),
}


def parse_potential(desc: str) -> PotentialSpec:
    """Parse ``coulomb:g=1`` or ``yukawa:g=1,p=2``."""
    name, _, rest = desc.strip().partition(":")
    if name not in FAMILIES:
        raise ValueError(f"unknown potential family {name!r} (known: {', '.join(FAMILIES)})")
    factory, names = FAMILIES[name]
    kwargs = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq or key not in names:
            raise ValueError(f"bad parameter {item!r} for potential {name!r}")
        kwargs[names[key]] = float(val)
    return factory(**kwargs)


@dataclass
class HypothesisReport:
    range_cap: int
    coulomb_like: bool
    summable: bool
    alpha_square_summable: bool
    alpha_sup: float
    checked: dict[str, bool]
    declared: dict[str, object]
    violations: list[tuple[str, Momentum]]

    @property
    def all_pass(self) -> bool:
        return self.coulomb_like and self.summable and self.alpha_square_summable


def verify_hypotheses(spec: PotentialSpec, range_cap: int) -> HypothesisReport:
    """Scan |ℓ| <= range_cap exhaustively; take the tail from the declared decay."""
    if range_cap < 1:
        raise ValueError("range_cap must be >= 1")
    pts = lattice_points(range_cap * range_cap)
    pts = pts[np.any(pts != 0, axis=1)]
    values = {as_momentum(p): spec.evaluate(p) for p in pts}
    violations: list[tuple[str, Momentum]] = []

    for ell, v in values.items():
        if not (v >= 0 and math.isfinite(v)):
            violations.append(("nonnegative", ell))
        if ell > (-ell[0], -ell[1], -ell[2]) and not math.isclose(
            v, values[(-ell[0], -ell[1], -ell[2])], rel_tol=1e-14, abs_tol=0.0
        ):
            violations.append(("even", ell))

    # radial and decreasing are judged in |ℓ| (shell by shell)
    shells: dict[int, list[tuple[Momentum, float]]] = {}
    for ell, v in values.items():
        shells.setdefault(norm2(ell), []).append((ell, v))
    prev_min = math.inf
    for n2 in sorted(shells):
        vals = [v for _, v in shells[n2]]
        lo, hi = min(vals), max(vals)
        if not math.isclose(lo, hi, rel_tol=1e-14, abs_tol=0.0):
            violations.append(("radial", max(shells[n2], key=lambda t: t[1])[0]))
        if hi > prev_min * (1 + 1e-14):
            violations.append(("decreasing", max(shells[n2], key=lambda t: t[1])[0]))
        prev_min = min(prev_min, lo)

    kinds = {k for k, _ in violations}
    checked = {k: k not in kinds for k in ("nonnegative", "even", "radial", "decreasing")}
    tail = spec.tail_exponent
    bound_const = max((v * norm2(ell) for ell, v in values.items()), default=0.0)
    alpha_sup = min(2.0 * tail - 3.0, 2.0)
    declared = {
        "tail_exponent": tail,
        "sup_|l|^2_V_on_range": bound_const,
        "coulomb_tail": tail >= 2.0,
        "summable_tail": tail > 3.0,
        "alpha_sup": alpha_sup,
    }
    coulomb_like = (
        checked["nonnegative"] and checked["radial"] and checked["decreasing"] and tail >= 2.0
    )
    summable = checked["nonnegative"] and tail > 3.0
    alpha_ok = checked["nonnegative"] and checked["even"] and alpha_sup > 0
    return HypothesisReport(
        range_cap=range_cap,
        coulomb_like=coulomb_like,
        summable=summable,
        alpha_square_summable=alpha_ok,
        alpha_sup=alpha_sup,
        checked=checked,
        declared=declared,
        violations=violations,
    )
