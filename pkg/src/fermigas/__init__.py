"""Momentum distribution of the bosonized Fermi-gas trial state on Z^3."""

from .errors import ConvergenceError, InvariantViolation, NumericDomainError, ResourceLimitError
from .kernel import KernelData, KernelFamily, LeadingKernel, assemble_kernel, leading_kernel
from .lattice import FermiBall, LensData, build_fermi_ball, build_lens, excitation_gap, relevant_shifts
from .observables import (
    ExchangeResult,
    IntegralFamily,
    QuadratureConfig,
    RpaResult,
    momentum_distribution,
    n_exchange,
    n_rpa_continuum,
    n_rpa_integral,
    n_rpa_matrix,
    n_rpa_series,
)
from .potential import PotentialSpec, coulomb, parse_potential, verify_hypotheses, yukawa_like

__version__ = "0.1.0"
