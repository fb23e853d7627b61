"""Centralized numerical tolerances and reduction options."""

from dataclasses import dataclass, field, asdict


@dataclass
class Tolerances:
    # Cholesky pivot failure threshold, relative to the largest diagonal entry.
    pivot_delta: float = 1e-12
    # Maximum fraction of internal nodes that may be promoted into the port
    # block before the reduction aborts.
    promotion_fraction: float = 0.25
    # Allowed relative symmetry drift when symmetrizing congruence results.
    symmetry_drift: float = 1e-13
    # Passivity check: smallest eigenvalue must be >= -passivity_tol * norm.
    passivity_tol: float = 1e-10
    # Relative tolerance for moment/verification comparisons.
    verify_tol: float = 1e-8
    # Block Arnoldi deflation threshold, relative to the initial column norm.
    deflation_tol: float = 1e-10

    def to_dict(self):
        return asdict(self)


@dataclass
class ReduceConfig:
    tolerances: Tolerances = field(default_factory=Tolerances)
    cholesky_ordering: str = "fill_reducing"

    def to_dict(self):
        return {
            "tolerances": self.tolerances.to_dict(),
            "cholesky_ordering": self.cholesky_ordering,
        }


DEFAULT_CONFIG = ReduceConfig()
