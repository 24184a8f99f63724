"""Integer-lattice geometry of the discrete Fermi ball.

Momenta are plain ``(x, y, z)`` integer tuples.  Point lists are stored as
``(n, 3)`` int64 arrays in canonical order: by squared norm, then
lexicographically.  Excitation energies are half-integers and are kept as
their integer doubles (``lambdas_twice``) so that membership and gap tests
never touch floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import isqrt
from typing import Iterable

import numpy as np

Momentum = tuple[int, int, int]


def norm2(p: Iterable[int]) -> int:
    x, y, z = p
    return int(x) * int(x) + int(y) * int(y) + int(z) * int(z)


def as_momentum(p: Iterable[int]) -> Momentum:
    x, y, z = (int(c) for c in p)
    return (x, y, z)


def neg(p: Momentum) -> Momentum:
    return (-p[0], -p[1], -p[2])


def add(p: Momentum, q: Momentum) -> Momentum:
    return (p[0] + q[0], p[1] + q[1], p[2] + q[2])


def sub(p: Momentum, q: Momentum) -> Momentum:
    return (p[0] - q[0], p[1] - q[1], p[2] - q[2])


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Sort an ``(n, 3)`` array by (norm², x, y, z)."""
    points = np.asarray(points, dtype=np.int64).reshape(-1, 3)
    n2 = np.einsum("ij,ij->i", points, points)
    order = np.lexsort((points[:, 2], points[:, 1], points[:, 0], n2))
    return points[order]


def is_sum_of_three_squares(n: int) -> bool:
    # Legendre: n is a sum of three squares unless n = 4^a (8b + 7).
    if n < 0:
        return False
    if n == 0:
        return True
    while n % 4 == 0:
        n //= 4
    return n % 8 != 7


def lattice_points(max_norm2: int) -> np.ndarray:
    """All points of Z^3 with norm² <= max_norm2, canonically ordered."""
    r = isqrt(max(max_norm2, 0))
    axis = np.arange(-r, r + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    keep = np.einsum("ij,ij->i", grid, grid) <= max_norm2
    return canonical_order(grid[keep])


@dataclass(frozen=True, eq=False)
class FermiBall:
    shell_cap: int
    points: np.ndarray
    n_particles: int
    kf: float
    min_outside_norm2: int
    index_of: dict[Momentum, int] = field(repr=False)

    def contains(self, p: Iterable[int]) -> bool:
        return norm2(p) <= self.shell_cap

    def momenta(self) -> list[Momentum]:
        return [as_momentum(p) for p in self.points]


def build_fermi_ball(shell_cap: int) -> FermiBall:
    if shell_cap < 0:
        raise ValueError(f"shell_cap must be >= 0, got {shell_cap}")
    pts = lattice_points(shell_cap)
    pts.setflags(write=False)
    outside = shell_cap + 1
    while not is_sum_of_three_squares(outside):
        outside += 1
    index = {as_momentum(p): i for i, p in enumerate(pts)}
    return FermiBall(
        shell_cap=shell_cap,
        points=pts,
        n_particles=len(pts),
        kf=float(np.sqrt(shell_cap)),
        min_outside_norm2=outside,
        index_of=index,
    )


@dataclass(frozen=True, eq=False)
class LensData:
    """The lens of a shift: particle momenta p outside the ball with p - shift inside."""

    shift: Momentum
    points: np.ndarray
    lambdas_twice: np.ndarray
    index_of: dict[Momentum, int] = field(repr=False)

    @property
    def lambdas(self) -> np.ndarray:
        return self.lambdas_twice / 2.0

    def __len__(self) -> int:
        return len(self.points)

    def __contains__(self, p) -> bool:
        return as_momentum(p) in self.index_of

    def lambda_of(self, p: Momentum) -> Fraction:
        return Fraction(int(self.lambdas_twice[self.index_of[as_momentum(p)]]), 2)

    def momenta(self) -> list[Momentum]:
        return [as_momentum(p) for p in self.points]


def _lens_from_points(shift: Momentum, points: np.ndarray) -> LensData:
    points = canonical_order(points)
    ell = np.asarray(shift, dtype=np.int64)
    holes = points - ell
    lam2 = np.einsum("ij,ij->i", points, points) - np.einsum("ij,ij->i", holes, holes)
    points.setflags(write=False)
    lam2.setflags(write=False)
    index = {as_momentum(p): i for i, p in enumerate(points)}
    return LensData(shift=as_momentum(shift), points=points, lambdas_twice=lam2, index_of=index)


def build_lens(ball: FermiBall, shift: Iterable[int]) -> LensData:
    shift = as_momentum(shift)
    if shift == (0, 0, 0):
        raise ValueError("lens shift must be nonzero")
    cand = ball.points + np.asarray(shift, dtype=np.int64)
    outside = np.einsum("ij,ij->i", cand, cand) > ball.shell_cap
    return _lens_from_points(shift, cand[outside])


def empty_lens(shift: Iterable[int]) -> LensData:
    return _lens_from_points(as_momentum(shift), np.zeros((0, 3), dtype=np.int64))


def excitation_gap(ball: FermiBall, q: Iterable[int]) -> Fraction:
    """| |q|² - min outside norm² + 1/2 |, a positive half-integer."""
    return abs(Fraction(2 * (norm2(q) - ball.min_outside_norm2) + 1, 2))


def pair_energy_twice(shift: Momentum, p: Momentum) -> int:
    """2·λ_{shift,p} = |p|² - |p - shift|²."""
    return norm2(p) - norm2(sub(p, shift))


def relevant_shifts(
    ball: FermiBall, q: Iterable[int], shift_cutoff: int | None = None
) -> list[Momentum]:
    """Shifts whose lens carries q (outside the ball) or q + shift (inside).

    Outside the ball this is the finite set q - B_F.  Inside the ball every
    shift with |q + shift| > k_F qualifies, so a cutoff on |shift|² is
    mandatory there.
    """
    q = as_momentum(q)
    qa = np.asarray(q, dtype=np.int64)
    if not ball.contains(q):
        cand = canonical_order(qa - ball.points)
    else:
        if shift_cutoff is None:
            raise ValueError("inside-ball shift set is infinite; pass shift_cutoff")
        cand = lattice_points(shift_cutoff)
        cand = cand[np.any(cand != 0, axis=1)]
        moved = cand + qa
        cand = cand[np.einsum("ij,ij->i", moved, moved) > ball.shell_cap]
        return [as_momentum(c) for c in cand]
    if shift_cutoff is not None:
        cand = cand[np.einsum("ij,ij->i", cand, cand) <= shift_cutoff]
    return [as_momentum(c) for c in cand]


def outside_points(ball: FermiBall, max_norm2: int) -> list[Momentum]:
    pts = lattice_points(max_norm2)
    keep = np.einsum("ij,ij->i", pts, pts) > ball.shell_cap
    return [as_momentum(p) for p in pts[keep]]


# Cubic point group (48 signed permutations).  A radial potential makes every
# lattice quantity invariant under it, which the sweeps use to cut work.

def canonical_transform(m: Iterable[int]) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
    """(perm, signs) with apply_transform(m) = (x >= y >= z >= 0)."""
    m = as_momentum(m)
    signs = tuple(-1 if c < 0 else 1 for c in m)
    absm = [abs(c) for c in m]
    perm = tuple(sorted(range(3), key=lambda i: (-absm[i], i)))
    return perm, signs  # type: ignore[return-value]


def apply_transform(transform, p: Iterable[int]) -> Momentum:
    perm, signs = transform
    v = [s * int(c) for s, c in zip(signs, p)]
    return (v[perm[0]], v[perm[1]], v[perm[2]])


def canonical_representative(m: Iterable[int]) -> Momentum:
    return apply_transform(canonical_transform(m), m)


def is_canonical(m: Momentum) -> bool:
    return m[0] >= m[1] >= m[2] >= 0


def orbit(m: Iterable[int]) -> set[Momentum]:
    x, y, z = as_momentum(m)
    out = set()
    for a, b, c in ((x, y, z), (x, z, y), (y, x, z), (y, z, x), (z, x, y), (z, y, x)):
        for sa in (1, -1):
            for sb in (1, -1):
                for sc in (1, -1):
                    out.add((sa * a, sb * b, sc * c))
    return out
