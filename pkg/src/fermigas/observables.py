"""Momentum-distribution observables.

n^RPA(q) is available through three routes: the spectral form
1/2 Σ_ℓ (cosh 2K(ℓ) - 1)_{qq}, the scalar t-integral obtained from it by
Sherman-Morrison, and the truncated even cosh series.  The exchange terms
are double sums over pairs of shifts; q' = ℓ + ℓ₁ - q denotes the second
particle of the exchanged configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ConvergenceError, InvariantViolation
from .kernel import KernelFamily, coupling_constant
from .lattice import (
    FermiBall,
    Momentum,
    apply_transform,
    as_momentum,
    canonical_transform,
    is_sum_of_three_squares,
    lattice_points,
    norm2,
    relevant_shifts,
)
from .potential import PotentialSpec

VARIABLE_MAP = "t = u/(1-u)"


def default_inside_cutoff(shell_cap: int) -> int:
    """|ℓ|² cap for inside-ball shift sums: |ℓ| <= 2 k_F + 2."""
    return int(math.ceil((2.0 * math.sqrt(shell_cap) + 2.0) ** 2))


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-9
    max_subdivisions: int = 2000
    variable_map: str = field(default=VARIABLE_MAP, init=False)

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


@dataclass
class RpaResult:
    q: Momentum
    inside_ball: bool
    n_rpa: float
    route: str
    per_shift_breakdown: list[tuple[Momentum, float]]


@dataclass
class ExchangeResult:
    q: Momentum
    n_ex: float
    n_ex_m1: float | None
    difference: float | None = None

    def __post_init__(self):
        if self.n_ex_m1 is not None and self.difference is None:
            self.difference = self.n_ex - self.n_ex_m1


def _result(q, inside, route, parts) -> RpaResult:
    return RpaResult(
        q=q,
        inside_ball=inside,
        n_rpa=math.fsum(v for _, v in parts),
        route=route,
        per_shift_breakdown=parts,
    )


def _paired_momentum(ball: FermiBall, q: Momentum, shift: Momentum) -> Momentum:
    """The lens point carrying q: q itself outside the ball, q + ℓ inside."""
    if ball.contains(q):
        return (q[0] + shift[0], q[1] + shift[1], q[2] + shift[2])
    return q


def shifts_for(ball: FermiBall, q: Momentum, shift_cutoff: int | None) -> list[Momentum]:
    if ball.contains(q) and shift_cutoff is None:
        shift_cutoff = default_inside_cutoff(ball.shell_cap)
    return relevant_shifts(ball, q, shift_cutoff)


# --- spectral and series routes ---------------------------------------------


def n_rpa_matrix(ball: FermiBall, kernels: KernelFamily, q) -> RpaResult:
    q = as_momentum(q)
    parts = [
        (ell, kernels.pair_occupation(ell, _paired_momentum(ball, q, ell)))
        for ell in shifts_for(ball, q, kernels.shift_cutoff)
    ]
    return _result(q, ball.contains(q), "matrix", parts)


def n_rpa_series(ball: FermiBall, kernels: KernelFamily, q, order: int) -> RpaResult:
    """1/2 Σ_ℓ Σ_{m even <= order} ((2K)^m)_{qq} / m!.

    Each even power is taken as |(2K)^{m/2} e_q|², so every term is >= 0.
    """
    if order < 2 or order % 2:
        raise ValueError(f"series order must be an even integer >= 2, got {order}")
    q = as_momentum(q)
    parts = []
    for ell in shifts_for(ball, q, kernels.shift_cutoff):
        p = _paired_momentum(ball, q, ell)
        if kernels.use_symmetry:
            t = canonical_transform(ell)
            ell_c, p = apply_transform(t, ell), apply_transform(t, p)
        else:
            ell_c = ell
        kd = kernels.kernel(ell_c)
        two_k = 2.0 * kd.K
        v = np.zeros(len(kd))
        v[kd.index(p)] = 1.0
        terms = []
        for j in range(1, order // 2 + 1):
            v = two_k @ v
            terms.append((v @ v) / math.factorial(2 * j))
        parts.append((ell, 0.5 * math.fsum(terms)))
    return _result(q, ball.contains(q), f"series({order})", parts)


def series_increments(ball: FermiBall, kernels: KernelFamily, q, order: int) -> list[float]:
    """Increments n_series(m + 2) - n_series(m) for m = 2, 4, ..., order - 2."""
    q = as_momentum(q)
    acc = np.zeros(order // 2)
    for ell in shifts_for(ball, q, kernels.shift_cutoff):
        p = _paired_momentum(ball, q, ell)
        kd = kernels.kernel(ell)
        two_k = 2.0 * kd.K
        v = np.zeros(len(kd))
        v[kd.index(p)] = 1.0
        for j in range(1, order // 2 + 1):
            v = two_k @ v
            acc[j - 1] += 0.5 * (v @ v) / math.factorial(2 * j)
    return list(acc[1:])


# --- integral route ---------------------------------------------------------


def lambda_profile(ball: FermiBall, shift) -> tuple[np.ndarray, np.ndarray]:
    """Distinct 2λ_{ℓ,p} over the lens of ℓ and their multiplicities."""
    ell = np.asarray(as_momentum(shift), dtype=np.int64)
    cand = ball.points + ell
    n2 = np.einsum("ij,ij->i", cand, cand)
    out = n2 > ball.shell_cap
    lam2 = n2[out] - np.einsum("ij,ij->i", ball.points[out], ball.points[out])
    return np.unique(lam2, return_counts=True)


def rpa_integrals(items, cfg: QuadratureConfig) -> np.ndarray:
    """Batch of (g, λ_q, distinct λ, counts) → (1/π) ∫_0^∞ integrand dt.

    The integrand g(t²-a²)/(t²+a²)² / D integrates to the same value after
    subtracting its D = 1 counterpart, whose integral is exactly zero:

        -(g/π) ∫ (t²-a²)/(t²+a²)² · (D-1)/D dt,   D - 1 = 2g Σ_p λ_p/(t²+λ_p²).

    This removes the cancellation between the two halves of the t-range.
    """
    items = list(items)
    if not items:
        return np.zeros(0)
    n = len(items)
    m = max(len(it[2]) for it in items)
    g = np.array([it[0] for it in items], dtype=float)
    a2 = np.array([it[1] for it in items], dtype=float) ** 2
    lam = np.ones((n, m))
    cnt = np.zeros((n, m))
    for i, (_, _, lu, cu) in enumerate(items):
        lam[i, : len(lu)] = lu
        cnt[i, : len(cu)] = cu
    lam_sq = lam * lam
    weight = cnt * lam

    def f(u):
        if u >= 1.0:
            return np.zeros(n)
        t = u / (1.0 - u)
        t2 = t * t
        dm1 = 2.0 * g * np.sum(weight / (t2 + lam_sq), axis=1)
        core = (t2 - a2) / (t2 + a2) ** 2
        return -g * core * (dm1 / (1.0 + dm1)) / (1.0 - u) ** 2

    val, err, info = integrate.quad_vec(
        f,
        0.0,
        1.0,
        epsabs=cfg.abs_tol,
        epsrel=cfg.rel_tol,
        limit=cfg.max_subdivisions,
        norm="max",
        full_output=True,
    )
    if not info.success:
        raise ConvergenceError(f"t-integral did not converge: {info.message}", residual=float(err))
    return val / np.pi


class IntegralFamily:
    """Cached per-shift t-integrals, keyed by (shift, 2λ_{ℓ,q}).

    The integrand depends on q only through λ_{ℓ,q}, so one value serves
    every lens point with that energy.
    """

    def __init__(
        self,
        ball: FermiBall,
        spec: PotentialSpec,
        cfg: QuadratureConfig | None = None,
        shift_cutoff: int | None = None,
        use_symmetry: bool = False,
        batch_size: int = 256,
    ):
        if use_symmetry and not spec.cubic_symmetric:
            raise ValueError(f"potential {spec.name!r} is not cubic symmetric")
        self.ball = ball
        self.spec = spec
        self.cfg = cfg or QuadratureConfig()
        self.shift_cutoff = shift_cutoff
        self.use_symmetry = use_symmetry
        self.batch_size = batch_size
        self._profiles: dict[Momentum, tuple[np.ndarray, np.ndarray]] = {}
        self._values: dict[tuple[Momentum, int], float] = {}

    def _key(self, shift) -> Momentum:
        shift = as_momentum(shift)
        return apply_transform(canonical_transform(shift), shift) if self.use_symmetry else shift

    def profile(self, shift):
        key = self._key(shift)
        prof = self._profiles.get(key)
        if prof is None:
            prof = self._profiles[key] = lambda_profile(self.ball, key)
        return prof

    def request(self, pairs) -> None:
        """Evaluate every missing (shift, 2λ) pair in batches."""
        todo = []
        seen = set()
        for shift, lam2 in pairs:
            k = (self._key(shift), int(lam2))
            if k not in self._values and k not in seen:
                seen.add(k)
                todo.append(k)
        for start in range(0, len(todo), self.batch_size):
            chunk = todo[start : start + self.batch_size]
            items = []
            for shift, lam2 in chunk:
                lu, cu = self.profile(shift)
                items.append((coupling_constant(self.ball, self.spec, shift), lam2 / 2.0, lu / 2.0, cu))
            try:
                vals = rpa_integrals(items, self.cfg)
            except ConvergenceError as exc:
                worst = self._worst(items, chunk)
                raise ConvergenceError(str(exc), shift=worst, residual=exc.residual) from None
            for k, v in zip(chunk, vals):
                self._values[k] = float(v)

    def _worst(self, items, chunk) -> Momentum:
        worst, worst_err = chunk[0][0], -1.0
        for item, (shift, _) in zip(items, chunk):
            try:
                rpa_integrals([item], self.cfg)
            except ConvergenceError as exc:
                if (exc.residual or 0.0) > worst_err:
                    worst, worst_err = shift, exc.residual or 0.0
        return worst

    def value(self, shift, lam2: int) -> float:
        k = (self._key(shift), int(lam2))
        if k not in self._values:
            self.request([k])
        return self._values[k]

    def request_lenses(self, shifts) -> None:
        """Prefetch every lens energy of the given shifts."""
        pairs = []
        for s in shifts:
            lu, _ = self.profile(s)
            pairs.extend((s, int(v)) for v in lu)
        self.request(pairs)


def _pair_energy_twice(q: Momentum, shift: Momentum) -> int:
    return norm2(q) - norm2((q[0] - shift[0], q[1] - shift[1], q[2] - shift[2]))


def n_rpa_integral(
    ball: FermiBall,
    spec: PotentialSpec,
    q,
    cfg: QuadratureConfig | None = None,
    *,
    family: IntegralFamily | None = None,
    shift_cutoff: int | None = None,
) -> RpaResult:
    q = as_momentum(q)
    if family is None:
        family = IntegralFamily(ball, spec, cfg, shift_cutoff=shift_cutoff)
    shifts = shifts_for(ball, q, family.shift_cutoff)
    keys = [(ell, _pair_energy_twice(_paired_momentum(ball, q, ell), ell)) for ell in shifts]
    family.request(keys)
    parts = [(ell, family.value(ell, lam2)) for ell, lam2 in keys]
    return _result(q, ball.contains(q), "integral", parts)


# --- exchange ---------------------------------------------------------------


def _exchange_pairs(ball: FermiBall, q: Momentum, shift_cutoff: int | None):
    """(ℓ, ℓ₁, second momentum, shifted indices, 2·pair energy) for one q.

    Outside the ball the four lens indicators reduce to ℓ, ℓ₁ ∈ q - B_F and
    q' = ℓ + ℓ₁ - q ∉ B_F.  Inside the ball (hole h) they become
    h + ℓ ∉ B_F, h + ℓ₁ ∉ B_F and h + ℓ + ℓ₁ ∈ B_F.  In both cases the two
    kernel denominators equal the energy of the same two-pair configuration.
    """
    qa = np.asarray(q, dtype=np.int64)
    inside = ball.contains(q)
    if inside:
        cutoff = shift_cutoff if shift_cutoff is not None else default_inside_cutoff(ball.shell_cap)
        cand = lattice_points(cutoff)
        cand = cand[np.any(cand != 0, axis=1)]
        moved = cand + qa
        shifts = cand[np.einsum("ij,ij->i", moved, moved) > ball.shell_cap]
    else:
        shifts = np.array(relevant_shifts(ball, q, shift_cutoff), dtype=np.int64).reshape(-1, 3)
    if len(shifts) == 0:
        return []
    s1 = shifts[:, None, :]
    s2 = shifts[None, :, :]
    if inside:
        third = qa + s1 + s2
        keep = np.einsum("ijk,ijk->ij", third, third) <= ball.shell_cap
        p1 = qa + s1 + 0 * s2
        p2 = qa + s2 + 0 * s1
        energy2 = (
            np.einsum("ijk,ijk->ij", p1, p1)
            + np.einsum("ijk,ijk->ij", p2, p2)
            - norm2(q)
            - np.einsum("ijk,ijk->ij", third, third)
        )
    else:
        third = s1 + s2 - qa
        keep = np.einsum("ijk,ijk->ij", third, third) > ball.shell_cap
        k1 = qa - s1 + 0 * s2
        k2 = qa - s2 + 0 * s1
        energy2 = (
            norm2(q)
            + np.einsum("ijk,ijk->ij", third, third)
            - np.einsum("ijk,ijk->ij", k1, k1)
            - np.einsum("ijk,ijk->ij", k2, k2)
        )
    ii, jj = np.nonzero(keep)
    out = []
    for i, j in zip(ii, jj):
        ell, ell1 = as_momentum(shifts[i]), as_momentum(shifts[j])
        if inside:
            # K(ℓ)_{h+ℓ, -h-ℓ₁} K(ℓ₁)_{h+ℓ₁, -h-ℓ}
            idx = (
                (q[0] + ell[0], q[1] + ell[1], q[2] + ell[2]),
                (-q[0] - ell1[0], -q[1] - ell1[1], -q[2] - ell1[2]),
                (q[0] + ell1[0], q[1] + ell1[1], q[2] + ell1[2]),
                (-q[0] - ell[0], -q[1] - ell[1], -q[2] - ell[2]),
            )
        else:
            qp = as_momentum(third[i, j])
            idx = (q, qp, q, qp)
        out.append((ell, ell1, idx, int(energy2[i, j])))
    return out


def n_exchange(
    ball: FermiBall,
    spec: PotentialSpec,
    q,
    kernels: KernelFamily | None = None,
    shift_cutoff: int | None = None,
) -> ExchangeResult:
    """n^ex(q) from leading-kernel entries and, given kernels, 1/4 n^{ex,1}(q).

    The anticommutator {K, P^q} in n^{ex,1} has two terms that coincide
    after the relabeling r -> ℓ + ℓ₁ - r of the summation set, so
    1/4 n^{ex,1}(q) = Σ K(ℓ)_{q,q'} K(ℓ₁)_{q,q'} over the same pairs as n^ex.
    """
    q = as_momentum(q)
    if kernels is not None and shift_cutoff is None:
        shift_cutoff = kernels.shift_cutoff
    pairs = _exchange_pairs(ball, q, shift_cutoff)
    g_cache: dict[Momentum, float] = {}

    def g(ell):
        if ell not in g_cache:
            g_cache[ell] = coupling_constant(ball, spec, ell)
        return g_cache[ell]

    lead = [g(ell) * g(ell1) / (0.5 * e2) ** 2 for ell, ell1, _, e2 in pairs]
    m1 = None
    if kernels is not None:
        m1 = math.fsum(
            kernels.entry(ell, a, b) * kernels.entry(ell1, c, d) for ell, ell1, (a, b, c, d), _ in pairs
        )
    return ExchangeResult(q=q, n_ex=math.fsum(lead), n_ex_m1=m1)


# --- assembled distribution -------------------------------------------------

BOUND_SLACK = 1e-9


def momentum_distribution(
    ball: FermiBall,
    kernels: KernelFamily,
    spec: PotentialSpec,
    q,
    include_exchange: bool = True,
    exchange_sign: int = 1,
) -> float:
    """n^RPA + n^ex outside the ball, 1 - n^RPA - n^ex inside.

    ``exchange_sign = -1`` flips the exchange term; the exact Fock-space
    reference agrees with that sign (see the oracle residuals).
    """
    if exchange_sign not in (1, -1):
        raise ValueError("exchange_sign must be +1 or -1")
    q = as_momentum(q)
    rpa = n_rpa_matrix(ball, kernels, q).n_rpa
    ex = 0.0
    if include_exchange:
        ex = exchange_sign * n_exchange(ball, spec, q, shift_cutoff=kernels.shift_cutoff).n_ex
    value = 1.0 - rpa - ex if ball.contains(q) else rpa + ex
    if not (-BOUND_SLACK <= value <= 1.0 + BOUND_SLACK):
        raise InvariantViolation(f"n{q} = {value!r} left [0, 1]")
    return value


def particle_hole_sums(ball: FermiBall, kernels: KernelFamily) -> tuple[float, float]:
    """(Σ_{q ∉ B_F} n^RPA(q), Σ_{h ∈ B_F} n^RPA_inside(h)) over a truncated shift family.

    Both sides are enumerated pointwise through n_rpa_matrix; they agree
    because each pair occupation is counted once at its particle and once
    at its hole.
    """
    if kernels.shift_cutoff is None:
        raise ValueError("sum rule needs a family with a shift cutoff")
    particles = set()
    for ell in kernels.shifts():
        particles.update(kernels.lens(ell).momenta())
    outside = math.fsum(n_rpa_matrix(ball, kernels, q).n_rpa for q in sorted(particles))
    inside = math.fsum(n_rpa_matrix(ball, kernels, h).n_rpa for h in ball.momenta())
    return outside, inside


# --- continuum comparison ---------------------------------------------------


def continuum_q_factor(spec_value: float, mu):
    """Q_ℓ(μ) = V̂(ℓ)(2π)^{-2} (1 - μ arctan(1/μ)); Q(0) = V̂(2π)^{-2}."""
    mu = np.asarray(mu, dtype=float)
    with np.errstate(divide="ignore"):
        tail = np.where(mu > 0, mu * np.arctan(1.0 / np.where(mu > 0, mu, 1.0)), 0.0)
    return spec_value / (2.0 * np.pi) ** 2 * (1.0 - tail)


def _mu_integral(c: float, v: float, cfg: QuadratureConfig) -> float:
    """∫_0^∞ (μ²-c²)(μ²+c²)^{-2} / (1 + Q(μ)) dμ, written with the zero-integral part removed."""

    def f(u):
        if u >= 1.0:
            return 0.0
        mu = u / (1.0 - u)
        qv = float(continuum_q_factor(v, mu))
        return -(mu * mu - c * c) / (mu * mu + c * c) ** 2 * qv / (1.0 + qv) / (1.0 - u) ** 2

    brk = [c / (1.0 + c)] if c > 0 else None
    val, err = integrate.quad(f, 0.0, 1.0, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=cfg.max_subdivisions, points=brk)
    if not math.isfinite(val) or err > max(cfg.abs_tol, cfg.rel_tol * abs(val)) * 100:
        raise ConvergenceError("continuum μ-integral did not converge", residual=err)
    return val


def n_rpa_continuum(
    spec: PotentialSpec,
    kf: float,
    q_direction,
    q_radius: float,
    cfg: QuadratureConfig | None = None,
) -> float:
    """Continuum-limit n^RPA(q) for a radial potential.

    In coordinates ρ = |ℓ|, x = cos∠(ℓ, q̂) the lens condition |q - ℓ| <= k_F
    reads x >= (|q|² + ρ² - k_F²)/(2|q|ρ), so only ρ ∈ [|q| - k_F, |q| + k_F]
    contributes.  The result does not depend on q_direction for a radial V̂.
    """
    cfg = cfg or QuadratureConfig(abs_tol=1e-13, rel_tol=1e-8)
    d = np.asarray(q_direction, dtype=float)
    if not np.isclose(np.linalg.norm(d), 1.0):
        raise ValueError("q_direction must be a unit vector")
    if not q_radius > kf:
        raise ValueError(f"q_radius {q_radius} must exceed k_F {kf}")
    if spec.is_zero:
        return 0.0
    q = float(q_radius)

    def inner(rho):
        v = spec.radial(rho)
        x0 = (q * q + rho * rho - kf * kf) / (2.0 * q * rho)
        if x0 >= 1.0:
            return 0.0
        val, err = integrate.quad(
            lambda x: _mu_integral(abs(x), v, cfg),
            x0,
            1.0,
            epsabs=cfg.abs_tol,
            epsrel=cfg.rel_tol,
            limit=cfg.max_subdivisions,
        )
        return 2.0 * np.pi * rho * rho * v / ((2.0 * np.pi) ** 4 * rho) * val

    val, err = integrate.quad(
        inner, q - kf, q + kf, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=cfg.max_subdivisions
    )
    if not math.isfinite(val):
        raise ConvergenceError("continuum ρ-integral did not converge", residual=err)
    return val / (kf * kf)


def continuum_probe_q(ball: FermiBall, direction=(1.0, 0.0, 0.0)) -> Momentum:
    """Lattice q with e(q) closest to k_F, then closest in angle to direction.

    Ties go to the smaller shell and to canonical order.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    target = ball.min_outside_norm2 - 0.5 + ball.kf
    hi = int(math.ceil(target)) + 8
    shells = [n for n in range(ball.shell_cap + 1, hi) if is_sum_of_three_squares(n)]
    n = min(shells, key=lambda s: (abs(s - target), s))
    pts = lattice_points(n)
    pts = pts[np.einsum("ij,ij->i", pts, pts) == n]
    return as_momentum(pts[int(np.argmax(pts @ d))])


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log|y| against log x."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.abs(np.asarray(ys, dtype=float)))
    return float(np.polyfit(x, y, 1)[0])
