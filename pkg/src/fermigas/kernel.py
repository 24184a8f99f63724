"""Per-shift Bogoliubov kernels.

For a shift ℓ with lens L_ℓ the one-body data are the diagonal energies
h = diag(λ_{ℓ,p}) and the rank-one coupling P = |v><v| with constant
entries v_p = sqrt(g_ℓ).  The kernel is

    K = -1/2 log( h^{-1/2} (h^{1/2} (h + 2P) h^{1/2})^{1/2} h^{-1/2} ),

evaluated through two symmetric eigendecompositions.  K is negative
semidefinite for V̂ >= 0; its leading order in the coupling is
-g_ℓ / (λ_r + λ_s).
"""

from __future__ import annotations

import hashlib
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericDomainError
from .lattice import (
    FermiBall,
    LensData,
    Momentum,
    apply_transform,
    as_momentum,
    build_lens,
    canonical_transform,
    empty_lens,
    lattice_points,
)
from .potential import PotentialSpec

TWO_PI_CUBED = (2.0 * np.pi) ** 3


def coupling_constant(ball: FermiBall, spec: PotentialSpec, shift) -> float:
    """g_ℓ = k_F^{-1} V̂(ℓ) / (2 (2π)^3)."""
    v = spec.evaluate(shift)
    if not np.isfinite(v):
        raise NumericDomainError(f"V̂{as_momentum(shift)} is not finite: {v}")
    if v == 0.0:
        return 0.0
    if ball.kf == 0.0:
        raise NumericDomainError("coupling k_F^-1 is undefined for shell_cap = 0")
    return v / (ball.kf * 2.0 * TWO_PI_CUBED)


def spd_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = 0.5 * (a + a.T)
    w, u = np.linalg.eigh(a)
    if w.size and not w[0] > 0:
        raise NumericDomainError(f"matrix is not positive definite (min eigenvalue {w[0]:.3e})")
    return w, u


def spd_function(a: np.ndarray, f) -> np.ndarray:
    """f(A) for symmetric positive definite A via eigendecomposition."""
    w, u = spd_eigh(a)
    out = (u * f(w)) @ u.T
    return 0.5 * (out + out.T)


def inner_matrix(lambdas: np.ndarray, g: float) -> np.ndarray:
    """h^{1/2} (h + 2P) h^{1/2} = h^2 + 2 w w^T with w = sqrt(g λ)."""
    w = np.sqrt(g * lambdas)
    return np.diag(lambdas * lambdas) + 2.0 * np.outer(w, w)


@dataclass(frozen=True, eq=False)
class KernelData:
    shift: Momentum
    lens: LensData
    g: float
    v: np.ndarray
    h_diag: np.ndarray
    K: np.ndarray
    eigvals: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.lens)

    @property
    def is_empty(self) -> bool:
        return len(self.lens) == 0

    def index(self, q) -> int:
        try:
            return self.lens.index_of[as_momentum(q)]
        except KeyError:
            raise ValueError(f"{as_momentum(q)} is not in the lens of {self.shift}") from None

    def pair_occupations(self) -> np.ndarray:
        """1/2 diag(cosh 2K - 1) = diag(sinh^2 K), one entry per lens point."""
        return (self.eigvecs**2) @ np.sinh(self.eigvals) ** 2


def _kernel_from_matrix(shift, lens, g, K) -> KernelData:
    lam = lens.lambdas
    mu, u = np.linalg.eigh(K) if len(lens) else (np.zeros(0), np.zeros((0, 0)))
    return KernelData(
        shift=as_momentum(shift),
        lens=lens,
        g=g,
        v=np.full(len(lens), np.sqrt(g)),
        h_diag=lam,
        K=K,
        eigvals=mu,
        eigvecs=u,
    )


def assemble_kernel(ball: FermiBall, lens: LensData, spec: PotentialSpec) -> KernelData:
    g = coupling_constant(ball, spec, lens.shift)
    n = len(lens)
    lam = lens.lambdas
    if n == 0 or g == 0.0:
        return KernelData(
            shift=lens.shift,
            lens=lens,
            g=g,
            v=np.full(n, np.sqrt(g)),
            h_diag=lam,
            K=np.zeros((n, n)),
            eigvals=np.zeros(n),
            eigvecs=np.eye(n),
        )
    # sqrt of the inner SPD matrix, then congruence by h^{-1/2}
    root = spd_function(inner_matrix(lam, g), np.sqrt)
    s = 1.0 / np.sqrt(lam)
    m = root * np.outer(s, s)
    w, u = spd_eigh(m)
    mu = -0.5 * np.log(w)
    K = (u * mu) @ u.T
    K = 0.5 * (K + K.T)
    return KernelData(
        shift=lens.shift,
        lens=lens,
        g=g,
        v=np.full(n, np.sqrt(g)),
        h_diag=lam,
        K=K,
        eigvals=mu,
        eigvecs=u,
    )


@dataclass(frozen=True, eq=False)
class LeadingKernel:
    shift: Momentum
    lens: LensData
    g: float
    matrix: np.ndarray


def leading_kernel(ball: FermiBall, lens: LensData, spec: PotentialSpec) -> LeadingKernel:
    """Entries g_ℓ / (λ_r + λ_s); the first-order size of |K(ℓ)|."""
    g = coupling_constant(ball, spec, lens.shift)
    lam = lens.lambdas
    return LeadingKernel(lens.shift, lens, g, g / (lam[:, None] + lam[None, :]))


def matrix_power_diag(kd: KernelData, m: int, q, method: str = "multiply") -> float:
    """((2K)^m)_{qq}."""
    if m < 0:
        raise ValueError("power must be >= 0")
    i = kd.index(q)
    if m == 0:
        return 1.0
    if method == "eigen":
        return float(kd.eigvecs[i] ** 2 @ (2.0 * kd.eigvals) ** m)
    if method != "multiply":
        raise ValueError(f"unknown method {method!r}")
    two_k = 2.0 * kd.K
    row = two_k[i].copy()
    for _ in range(m - 1):
        row = row @ two_k
    return float(row[i])


def cosh_diag_minus_one(kd: KernelData, q) -> float:
    """(cosh 2K - 1)_{qq}, written as 2 sinh^2 to avoid cancellation."""
    i = kd.index(q)
    return float(2.0 * (kd.eigvecs[i] ** 2 @ np.sinh(kd.eigvals) ** 2))


# --- integral representations -------------------------------------------


def _mapped_quad(f, shape, abs_tol: float, rel_tol: float, limit: int = 2000):
    """∫_0^∞ f(t) dt through t = u/(1-u)."""
    from scipy.integrate import quad_vec

    def g(u):
        if u >= 1.0:
            return np.zeros(shape)
        t = u / (1.0 - u)
        return f(t) / (1.0 - u) ** 2

    val, err, info = quad_vec(g, 0.0, 1.0, epsabs=abs_tol, epsrel=rel_tol, limit=limit, norm="max", full_output=True)
    if not info.success:
        from .errors import ConvergenceError

        raise ConvergenceError(f"quadrature did not converge: {info.message}", residual=err)
    return val


def sqrt_via_integral(a: np.ndarray, abs_tol: float = 1e-14, rel_tol: float = 1e-12) -> np.ndarray:
    """A^{1/2} = (2/π) ∫_0^∞ (1 - t² (A + t²)^{-1}) dt = (2/π) ∫ A (A + t²)^{-1} dt."""
    n = a.shape[0]
    eye = np.eye(n)
    val = _mapped_quad(lambda t: np.linalg.solve(a + t * t * eye, a), (n, n), abs_tol, rel_tol)
    return (2.0 / np.pi) * 0.5 * (val + val.T)


def inv_sqrt_via_integral(a: np.ndarray, abs_tol: float = 1e-14, rel_tol: float = 1e-12) -> np.ndarray:
    """A^{-1/2} = (2/π) ∫_0^∞ (A + t²)^{-1} dt."""
    n = a.shape[0]
    eye = np.eye(n)
    val = _mapped_quad(lambda t: np.linalg.inv(a + t * t * eye), (n, n), abs_tol, rel_tol)
    return (2.0 / np.pi) * 0.5 * (val + val.T)


def sherman_morrison_inverse(a_inv: np.ndarray, c: float, w: np.ndarray) -> np.ndarray:
    """(A + c|w><w|)^{-1} from A^{-1}."""
    aw = a_inv @ w
    denom = 1.0 + c * (w @ aw)
    if denom == 0.0:
        raise NumericDomainError("Sherman-Morrison denominator vanishes")
    return a_inv - (c / denom) * np.outer(aw, w @ a_inv)


# --- binary cache -----------------------------------------------------------

_MAGIC = b"FGKC"
_VERSION = 1
_HEADER = struct.Struct("<4sIq3qQI")


def save_kernel(path, kd: KernelData, shell_cap: int, fingerprint: str) -> None:
    fp = fingerprint.encode()
    n = len(kd)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, shell_cap, *kd.shift, n, len(fp)))
        fh.write(fp)
        fh.write(np.ascontiguousarray(kd.K, dtype="<f8").tobytes())


def load_kernel(path, ball: FermiBall, spec: PotentialSpec) -> KernelData:
    with open(path, "rb") as fh:
        magic, version, shell_cap, x, y, z, n, fp_len = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC or version != _VERSION:
            raise ValueError(f"{path}: not a kernel cache file (version {version})")
        fp = fh.read(fp_len).decode()
        data = np.frombuffer(fh.read(8 * n * n), dtype="<f8")
    if shell_cap != ball.shell_cap or fp != spec.fingerprint:
        raise ValueError(f"{path}: cache key mismatch")
    lens = build_lens(ball, (x, y, z))
    if len(lens) != n or data.size != n * n:
        raise ValueError(f"{path}: truncated or inconsistent payload")
    K = data.reshape(n, n).astype(float)
    return _kernel_from_matrix((x, y, z), lens, coupling_constant(ball, spec, (x, y, z)), K)


def cache_path(cache_dir, shell_cap: int, shift, fingerprint: str) -> Path:
    digest = hashlib.sha1(fingerprint.encode()).hexdigest()[:12]
    x, y, z = shift
    return Path(cache_dir) / f"k{shell_cap}_{x}_{y}_{z}_{digest}.fgk"


# --- families ---------------------------------------------------------------


class KernelFamily:
    """Lazily built kernels {K(ℓ)} for one ball and potential.

    ``shift_cutoff`` restricts every shift sum to |ℓ|² <= cutoff; it is
    required for inside-ball quantities, whose shift sets are infinite.
    With ``use_symmetry`` (radial potentials only) pair occupations are
    read off the cubic-canonical shift.
    """

    def __init__(
        self,
        ball: FermiBall,
        spec: PotentialSpec,
        shift_cutoff: int | None = None,
        use_symmetry: bool = False,
        cache_dir=None,
    ):
        if use_symmetry and not spec.cubic_symmetric:
            raise ValueError(f"potential {spec.name!r} is not cubic symmetric")
        self.ball = ball
        self.spec = spec
        self.shift_cutoff = shift_cutoff
        self.use_symmetry = use_symmetry
        self.cache_dir = cache_dir
        self._lenses: dict[Momentum, LensData] = {}
        self._kernels: dict[Momentum, KernelData] = {}
        self._occ: dict[Momentum, np.ndarray] = {}
        self._lock = threading.Lock()

    def admits(self, shift) -> bool:
        if self.shift_cutoff is None:
            return True
        x, y, z = shift
        return x * x + y * y + z * z <= self.shift_cutoff

    def shifts(self) -> list[Momentum]:
        if self.shift_cutoff is None:
            raise ValueError("family has no shift cutoff; the shift set is infinite")
        pts = lattice_points(self.shift_cutoff)
        return [as_momentum(p) for p in pts if any(p)]

    def coupling(self, shift) -> float:
        return coupling_constant(self.ball, self.spec, shift)

    def lens(self, shift) -> LensData:
        shift = as_momentum(shift)
        lens = self._lenses.get(shift)
        if lens is None:
            lens = build_lens(self.ball, shift) if shift != (0, 0, 0) else empty_lens(shift)
            with self._lock:
                self._lenses[shift] = lens
        return lens

    def kernel(self, shift) -> KernelData:
        shift = as_momentum(shift)
        kd = self._kernels.get(shift)
        if kd is not None:
            return kd
        kd = None
        if self.cache_dir is not None:
            path = cache_path(self.cache_dir, self.ball.shell_cap, shift, self.spec.fingerprint)
            if path.exists():
                kd = load_kernel(path, self.ball, self.spec)
        if kd is None:
            kd = assemble_kernel(self.ball, self.lens(shift), self.spec)
            if self.cache_dir is not None:
                Path(self.cache_dir).mkdir(parents=True, exist_ok=True)
                save_kernel(path, kd, self.ball.shell_cap, self.spec.fingerprint)
        with self._lock:
            self._kernels[shift] = kd
        return kd

    def occupations(self, shift) -> np.ndarray:
        shift = as_momentum(shift)
        occ = self._occ.get(shift)
        if occ is None:
            occ = self.kernel(shift).pair_occupations()
            with self._lock:
                self._occ[shift] = occ
        return occ

    def pair_occupation(self, shift, p) -> float:
        """1/2 (cosh 2K(ℓ) - 1)_{pp} for p in the lens of ℓ."""
        shift, p = as_momentum(shift), as_momentum(p)
        if self.use_symmetry:
            t = canonical_transform(shift)
            shift, p = apply_transform(t, shift), apply_transform(t, p)
        lens = self.lens(shift)
        i = lens.index_of.get(p)
        if i is None:
            raise ValueError(f"{p} is not in the lens of {shift}")
        return float(self.occupations(shift)[i])

    def entry(self, shift, p, r) -> float:
        """K(ℓ)_{p,r}."""
        shift, p, r = as_momentum(shift), as_momentum(p), as_momentum(r)
        if self.use_symmetry:
            t = canonical_transform(shift)
            shift, p, r = apply_transform(t, shift), apply_transform(t, p), apply_transform(t, r)
        kd = self.kernel(shift)
        return float(kd.K[kd.index(p), kd.index(r)])

    def prefetch(self, shifts, threads: int = 1) -> None:
        todo = {as_momentum(s) for s in shifts}
        if self.use_symmetry:
            todo = {apply_transform(canonical_transform(s), s) for s in todo}
        todo = sorted(todo - self._occ.keys())
        if threads <= 1:
            for s in todo:
                self.occupations(s)
            return
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(self.occupations, todo))
