"""Exact reference on a truncated fermionic Fock space.

Configurations are int64 bitmasks over a fixed mode order.  Creation
operators pick up the Jordan-Wigner sign (-1)^(set bits below the mode).
The generator is S = C^T - C with

    C = 1/2 Σ_ℓ Σ_{r,s ∈ L_ℓ} K(ℓ)_{r,s} a*_{-s} a*_{-s+ℓ} a*_r a*_{r-ℓ},

restricted to the configurations reachable from the vacuum below a particle
cap, so the projected S stays exactly antisymmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import ConvergenceError, ResourceLimitError
from .kernel import KernelFamily
from .lattice import (
    FermiBall,
    Momentum,
    as_momentum,
    build_lens,
    canonical_order,
    lattice_points,
    neg,
    sub,
)

MAX_MODES = 62


@dataclass(frozen=True, eq=False)
class ModeSet:
    modes: list[Momentum]
    index_of: dict[Momentum, int]
    shift_cutoff: int
    shell_cap: int
    is_hole: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def n_particle_modes(self) -> int:
        return int(np.count_nonzero(~self.is_hole))

    @property
    def n_hole_modes(self) -> int:
        return int(np.count_nonzero(self.is_hole))


def build_mode_set(ball: FermiBall, shift_cutoff: int) -> ModeSet:
    """Union over |ℓ|² <= cutoff of the lens points and their hole partners."""
    if shift_cutoff < 1:
        raise ValueError(f"shift_cutoff must be >= 1, got {shift_cutoff}")
    pts = set()
    for ell in lattice_points(shift_cutoff):
        if not ell.any():
            continue
        ell = as_momentum(ell)
        for p in build_lens(ball, ell).momenta():
            pts.add(p)
            pts.add(sub(p, ell))
    ordered = [as_momentum(p) for p in canonical_order(np.array(sorted(pts), dtype=np.int64).reshape(-1, 3))]
    if len(ordered) > MAX_MODES:
        raise ResourceLimitError(f"{len(ordered)} modes exceed the {MAX_MODES}-bit configuration word")
    return ModeSet(
        modes=ordered,
        index_of={p: i for i, p in enumerate(ordered)},
        shift_cutoff=shift_cutoff,
        shell_cap=ball.shell_cap,
        is_hole=np.array([ball.contains(p) for p in ordered], dtype=bool),
    )


def estimate_dimension(modes: ModeSet, cap: int) -> int:
    """Upper bound: configurations with equally many particles and holes, 2j each, 4j <= cap."""
    np_, nh = modes.n_particle_modes, modes.n_hole_modes
    return sum(math.comb(np_, 2 * j) * math.comb(nh, 2 * j) for j in range(cap // 4 + 1))


# --- bit helpers ------------------------------------------------------------


def _popcount(x: np.ndarray) -> np.ndarray:
    return np.bitwise_count(x.astype(np.uint64)).astype(np.int64)


def _create(states: np.ndarray, sign: np.ndarray, mode: int):
    """Apply a*_mode; returns (new states, new signs, mask of nonzero results)."""
    bit = np.int64(1) << np.int64(mode)
    ok = (states & bit) == 0
    below = states & (bit - np.int64(1))
    flip = (_popcount(below) & 1) == 1
    return states | bit, np.where(flip, -sign, sign), ok


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    basis: np.ndarray
    matrix: sp.csr_matrix
    cap: int
    nnz: int
    n_terms: int
    modes: ModeSet = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def antisymmetry_residual(self) -> float:
        d = (self.matrix + self.matrix.T).tocoo()
        return float(np.abs(d.data).max()) if d.nnz else 0.0


def _generator_terms(modes: ModeSet, kernels: KernelFamily):
    """(coefficient, four mode indices in application order)."""
    terms = []
    for ell in kernels.shifts():
        kd = kernels.kernel(ell)
        if kd.is_empty:
            continue
        pts = kd.lens.momenta()
        try:
            r_idx = [(modes.index_of[r], modes.index_of[sub(r, ell)]) for r in pts]
            s_idx = [(modes.index_of[neg(s)], modes.index_of[sub(neg(s), neg(ell))]) for s in pts]
        except KeyError as exc:
            raise ValueError(f"lens point {exc.args[0]} of shift {ell} is missing from the mode set") from None
        for i, (r, rh) in enumerate(r_idx):
            for j, (s, sh) in enumerate(s_idx):
                coef = 0.5 * kd.K[i, j]
                if coef == 0.0 or len({r, rh, s, sh}) < 4:
                    continue
                # a*_{-s} a*_{-s+ℓ} a*_r a*_{r-ℓ}: rightmost acts first
                terms.append((coef, (rh, r, sh, s)))
    return terms


def _apply_terms(terms, states: np.ndarray):
    """All (target, source index, value) produced by C on the given states."""
    tgt, src, val = [], [], []
    idx = np.arange(len(states))
    for coef, seq in terms:
        x = states
        sgn = np.ones(len(states))
        alive = np.ones(len(states), dtype=bool)
        for m in seq:
            x, sgn, ok = _create(x, sgn, m)
            alive &= ok
        if alive.any():
            tgt.append(x[alive])
            src.append(idx[alive])
            val.append(coef * sgn[alive])
    if not tgt:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    return np.concatenate(tgt), np.concatenate(src), np.concatenate(val)


def _remove_terms(terms, states: np.ndarray) -> np.ndarray:
    """Configurations reached by C^T (annihilating the four modes of a term)."""
    out = []
    for _, seq in terms:
        mask = np.int64(0)
        for m in seq:
            mask |= np.int64(1) << np.int64(m)
        hit = (states & mask) == mask
        if hit.any():
            out.append(states[hit] & ~mask)
    return np.concatenate(out) if out else np.zeros(0, np.int64)


def build_generator(
    modes: ModeSet,
    kernels: KernelFamily,
    restrict_even_cap: int = 6,
    max_dim: int = 2_000_000,
) -> GeneratorMatrix:
    if restrict_even_cap < 0 or restrict_even_cap % 2:
        raise ValueError(f"particle cap must be an even integer >= 0, got {restrict_even_cap}")
    est = estimate_dimension(modes, restrict_even_cap)
    if est > max_dim:
        raise ResourceLimitError(f"estimated basis size {est} exceeds limit {max_dim}")
    terms = _generator_terms(modes, kernels)
    cap = restrict_even_cap

    # closure of the vacuum under C and C^T below the cap
    basis = np.zeros(1, np.int64)
    frontier = basis
    while len(frontier):
        grow = frontier[_popcount(frontier) + 4 <= cap]
        up, _, _ = _apply_terms(terms, grow)
        down = _remove_terms(terms, frontier)
        new = np.setdiff1d(np.unique(np.concatenate([up, down])), basis)
        basis = np.union1d(basis, new)
        frontier = new

    grow = np.nonzero(_popcount(basis) + 4 <= cap)[0]
    tgt, src, val = _apply_terms(terms, basis[grow])
    rows = np.searchsorted(basis, tgt)
    cols = grow[src]
    n = len(basis)
    c = sp.coo_matrix((val, (rows, cols)), shape=(n, n)).tocsr()
    c.sum_duplicates()
    s = (c.T - c).tocsr()
    s.eliminate_zeros()
    return GeneratorMatrix(basis=basis, matrix=s, cap=cap, nnz=int(s.nnz), n_terms=len(terms), modes=modes)


# --- exponential action -----------------------------------------------------


@dataclass
class ExpvReport:
    error_estimate: float
    steps: int
    rejections: int
    norm_deviation: float


def expv(a, v: np.ndarray, t: float, tol: float = 1e-12, m: int = 30, max_rejects: int = 50):
    """w ≈ exp(t A) v by restarted Arnoldi with a posteriori step control.

    The local error of each step is estimated from the augmented Hessenberg
    matrix (the corrected scheme of Sidje's expokit); the step size adapts
    so that the summed estimates stay below tol · |t|.
    """
    n = v.shape[0]
    w = np.array(v, dtype=float)
    beta = float(np.linalg.norm(w))
    empty = a.nnz == 0 if sp.issparse(a) else not np.any(a)
    if t == 0.0 or beta == 0.0 or empty:
        return w, ExpvReport(0.0, 0, 0, abs(beta - np.linalg.norm(v)))
    m = min(m, n)
    anorm = float(abs(a).sum(axis=0).max())
    btol = 1e-14 * max(anorm, 1.0)
    gamma, delta = 0.9, 1.2
    sgn = 1.0 if t > 0 else -1.0
    t_out = abs(t)
    t_now = 0.0
    fact = ((m + 1) / math.e) ** (m + 1) * math.sqrt(2 * math.pi * (m + 1))
    tau = min(t_out, (1.0 / anorm) * ((fact * tol) / (4.0 * beta * anorm)) ** (1.0 / m))
    err_total = 0.0
    steps = rejects = 0
    while t_now < t_out:
        steps += 1
        tau = min(t_out - t_now, tau)
        V = np.zeros((n, m + 1))
        H = np.zeros((m + 2, m + 2))
        V[:, 0] = w / beta
        k1, mb = 2, m
        for j in range(m):
            p = a @ V[:, j]
            for i in range(j + 1):
                H[i, j] = V[:, i] @ p
                p -= H[i, j] * V[:, i]
            s = float(np.linalg.norm(p))
            if s < btol:
                k1, mb = 0, j + 1
                tau = t_out - t_now
                break
            H[j + 1, j] = s
            V[:, j + 1] = p / s
        if k1:
            H[m + 1, m] = 1.0
            avnorm = float(np.linalg.norm(a @ V[:, m]))
        while True:
            mx = mb + k1
            F = scipy.linalg.expm(sgn * tau * H[:mx, :mx])
            if k1 == 0:
                err_loc, xm = btol, 1.0 / m
                break
            phi1 = abs(beta * F[m, 0])
            phi2 = abs(beta * F[m + 1, 0] * avnorm)
            if phi1 > 10.0 * phi2:
                err_loc, xm = phi2, 1.0 / m
            elif phi1 > phi2:
                err_loc, xm = phi1 * phi2 / (phi1 - phi2), 1.0 / m
            else:
                err_loc, xm = phi1, 1.0 / (m - 1)
            if err_loc <= delta * tau * tol:
                break
            rejects += 1
            if rejects > max_rejects:
                raise ConvergenceError("exponential action: step rejected too often", residual=err_loc)
            tau = gamma * tau * (tau * tol / err_loc) ** xm
        mx = mb + max(0, k1 - 1)
        w = V[:, :mx] @ (beta * F[:mx, 0])
        beta = float(np.linalg.norm(w))
        t_now += tau
        err_total += err_loc
        if k1:
            tau = gamma * tau * (tau * tol / max(err_loc, 1e-300)) ** xm
    if err_total > tol * max(t_out, 1.0) * 10:
        raise ConvergenceError("exponential action exceeded its error budget", residual=err_total)
    return w, ExpvReport(err_total, steps, rejects, abs(beta - np.linalg.norm(v)))


@dataclass
class FockStateVector:
    basis: np.ndarray
    amplitudes: np.ndarray
    particle_cap: int
    modes: ModeSet = field(repr=False)
    lam: float = 0.0
    report: ExpvReport | None = None

    def as_dict(self) -> dict[int, float]:
        return {int(b): float(a) for b, a in zip(self.basis, self.amplitudes)}

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def odd_weight(self) -> float:
        odd = (_popcount(self.basis) & 1) == 1
        return float(np.sum(self.amplitudes[odd] ** 2))


def vacuum(gen: GeneratorMatrix) -> FockStateVector:
    amp = np.zeros(gen.dim)
    amp[np.searchsorted(gen.basis, 0)] = 1.0
    return FockStateVector(gen.basis, amp, gen.cap, gen.modes)


def apply_exp_generator(gen: GeneratorMatrix, lam: float, tol: float = 1e-12, krylov_dim: int = 30) -> FockStateVector:
    """e^{-λS} Ω on the capped sector."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"λ must lie in [0, 1], got {lam}")
    omega = vacuum(gen)
    if lam == 0.0:
        return omega
    w, rep = expv(gen.matrix, omega.amplitudes, -lam, tol=tol, m=krylov_dim)
    return FockStateVector(gen.basis, w, gen.cap, gen.modes, lam=lam, report=rep)


def flow(gen: GeneratorMatrix, lams, tol: float = 1e-12) -> list[FockStateVector]:
    return [apply_exp_generator(gen, float(x), tol) for x in lams]


# --- measurements -----------------------------------------------------------


def raw_occupation(state: FockStateVector, mode: int) -> float:
    bit = np.int64(1) << np.int64(mode)
    occ = (state.basis & bit) != 0
    return float(np.sum(state.amplitudes[occ] ** 2))


def occupation_expectation(state: FockStateVector, q) -> tuple[float, bool]:
    """Fermion occupation of q in R ξ, with a flag saying whether q is a mode.

    Holes are particle-hole transformed: n(h) = 1 - <ξ, a*_h a_h ξ>.
    Momenta outside the mode set keep their free value.
    """
    q = as_momentum(q)
    i = state.modes.index_of.get(q)
    inside = q[0] ** 2 + q[1] ** 2 + q[2] ** 2 <= state.modes.shell_cap
    if i is None:
        return (1.0 if inside else 0.0), False
    raw = raw_occupation(state, i)
    return (1.0 - raw if inside else raw), True


def number_moment(state: FockStateVector, m: int) -> float:
    """<(𝒩 + 1)^m>."""
    if m not in range(1, 6):
        raise ValueError(f"moment order must be in 1..5, got {m}")
    w = state.amplitudes**2
    return float(np.sum(w * (_popcount(state.basis) + 1.0) ** m))


def particle_hole_numbers(state: FockStateVector) -> tuple[float, float]:
    parts = sum(raw_occupation(state, i) for i in range(len(state.modes)) if not state.modes.is_hole[i])
    holes = sum(raw_occupation(state, i) for i in range(len(state.modes)) if state.modes.is_hole[i])
    return parts, holes


def bootstrap_sup(states, modes: ModeSet | None = None) -> float:
    """Ξ: sup over states and modes of the raw <a*_q a_q>."""
    states = list(states)
    if not states:
        raise ValueError("λ-grid is empty")
    modes = modes or states[0].modes
    best = 0.0
    for st in states:
        for i in range(len(modes)):
            best = max(best, raw_occupation(st, i))
    return best


# --- truncated comparison ---------------------------------------------------

DEFAULT_LAMBDA_GRID = tuple(round(0.1 * i, 10) for i in range(11))


@dataclass
class OracleReport:
    modes: int
    dim: int
    nnz: int
    cap: int
    tol: float
    per_q: list[dict]
    moments: list[dict]
    xi: float
    antisymmetry_residual: float = 0.0

    def as_dict(self) -> dict:
        return {
            "modes": self.modes,
            "dim": self.dim,
            "nnz": self.nnz,
            "cap": self.cap,
            "tol": self.tol,
            "per_q": self.per_q,
            "moments": self.moments,
            "xi": self.xi,
        }


def run_oracle(
    ball: FermiBall,
    spec,
    shift_cutoff: int = 1,
    cap: int = 6,
    tol: float = 1e-13,
    lambda_grid=DEFAULT_LAMBDA_GRID,
    qs=None,
    max_dim: int = 2_000_000,
) -> OracleReport:
    """Exact e^{-S}Ω against the analytic pieces on the same shift family.

    ``residual`` follows n = n^RPA + 1/4 n^{ex,1} (outside) and
    n = 1 - n^RPA - 1/4 n^{ex,1} (inside); ``residual_minus`` is the same
    comparison with the exchange term entering with the opposite sign.
    """
    from .observables import n_exchange, n_rpa_matrix

    modes = build_mode_set(ball, shift_cutoff)
    fam = KernelFamily(ball, spec, shift_cutoff=shift_cutoff)
    gen = build_generator(modes, fam, cap, max_dim=max_dim)
    grid = sorted(set(float(x) for x in lambda_grid) | {1.0})
    states = {x: apply_exp_generator(gen, x, tol) for x in grid}
    final = states[1.0]

    per_q = []
    for q in qs if qs is not None else modes.modes:
        q = as_momentum(q)
        n_exact, in_modes = occupation_expectation(final, q)
        rpa = n_rpa_matrix(ball, fam, q).n_rpa
        ex = n_exchange(ball, spec, q, kernels=fam)
        raw = raw_occupation(final, modes.index_of[q]) if in_modes else 0.0
        sign = -1.0 if ball.contains(q) else 1.0
        # outside: raw - (rpa + ex);  inside: (1 - raw) - (1 - rpa - ex) = rpa + ex - raw
        per_q.append(
            {
                "q": list(q),
                "in_modes": in_modes,
                "n_exact": n_exact,
                "n_rpa_trunc": rpa,
                "n_ex_trunc": ex.n_ex_m1,
                "n_ex_leading_trunc": ex.n_ex,
                "residual": sign * (raw - rpa - ex.n_ex_m1),
                "residual_minus": sign * (raw - rpa + ex.n_ex_m1),
            }
        )
    moments = []
    for x in grid:
        st = states[x]
        moments.append(
            {
                "lambda": x,
                "norm": st.norm,
                "odd_weight": st.odd_weight(),
                "error_estimate": st.report.error_estimate if st.report else 0.0,
                "moments": [number_moment(st, m) for m in range(1, 6)],
            }
        )
    xi = bootstrap_sup([states[x] for x in grid], modes)
    return OracleReport(
        modes=len(modes),
        dim=gen.dim,
        nnz=gen.nnz,
        cap=cap,
        tol=tol,
        per_q=per_q,
        moments=moments,
        xi=xi,
        antisymmetry_residual=gen.antisymmetry_residual(),
    )
