"""Dataclasses describing the values passed between ergolab modules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0

Interval = Tuple[float, float]


@dataclass(frozen=True, slots=True)
class ErgodicSystem:
    """An ergodic transformation together with its seed.

    ``kind`` is one of ``doubling``, ``skew-shift``, ``iid`` or ``rotation``.
    ``dimension`` is only read for the skew-shift, ``law`` only for iid systems.
    """

    kind: str
    alpha: float = GOLDEN_MEAN
    dimension: int = 2
    law: str = "uniform"
    seed: int = 0


@dataclass(frozen=True, slots=True)
class SamplingFunction:
    """A bounded sampling function f applied along an orbit."""

    kind: str
    bound: float = 1.0
    table_x: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    table_y: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True, slots=True)
class PotentialWindow:
    """A finite potential ``values[n] = coupling * f(T^n omega)``."""

    values: np.ndarray = field(compare=False, repr=False)
    coupling: float
    origin: Dict[str, Any] = field(default_factory=dict)

    @property
    def N(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True, slots=True)
class NondegeneracyProfile:
    F: float
    alpha: float
    epsilon_grid: np.ndarray = field(compare=False, repr=False)
    measured_tails: np.ndarray = field(compare=False, repr=False)
    fit_residual: float
    slack: float = 0.0
    degenerate: bool = False


@dataclass(frozen=True, slots=True)
class OperatorWindow:
    """Dirichlet restriction of H to the sites ``interval[0]..interval[1]``."""

    potential: PotentialWindow
    interval: Tuple[int, int]

    @property
    def diagonal(self) -> np.ndarray:
        a, b = self.interval
        return self.potential.values[a : b + 1]

    @property
    def size(self) -> int:
        return self.interval[1] - self.interval[0] + 1


@dataclass(frozen=True, slots=True)
class GreenQuery:
    E: float
    x: int
    y: int


@dataclass(frozen=True, slots=True)
class ResonanceWitness:
    """The subinterval whose spectrum enters ``bracket``."""

    interval: Tuple[int, int]
    eigenvalue: float
    bracket: Interval


@dataclass(frozen=True, slots=True)
class TransferProduct:
    """A 2x2 transfer matrix stored as unit-norm entries and a log scale.

    ``log_det`` is the logarithm of the determinant of the unscaled product,
    tracked without cancellation; it vanishes in exact arithmetic.
    """

    entries: np.ndarray = field(compare=False, repr=False)
    log_scale: float
    N: int
    E: float
    convention: str = "e-minus-v"
    log_det: float = 0.0

    def growth(self) -> float:
        """Return ``(1/N) log ||A||``."""
        norm = float(np.linalg.norm(self.entries, 2))
        return (self.log_scale + math.log(norm)) / max(self.N, 1)


@dataclass(frozen=True, slots=True)
class PruferTrajectory:
    kappa: float
    theta: float
    zeta: np.ndarray = field(compare=False, repr=False)
    log_rho: np.ndarray = field(compare=False, repr=False)
    phi: np.ndarray = field(compare=False, repr=False)

    @property
    def N(self) -> int:
        return int(self.zeta.shape[0]) - 1


@dataclass(frozen=True, slots=True)
class LDTParams:
    sigma2: float
    sigma4: float
    coupling: float
    kappa: float
    N: int
    gamma1: float
    cond_n1: bool
    cond_lam1: bool
    law: str = "uniform"


@dataclass(frozen=True, slots=True)
class LyapunovEstimate:
    E: float
    value: float
    stderr: float
    N: int
    samples: int


@dataclass(frozen=True, slots=True)
class RandomWindowReport:
    """Outcome of the random-window goodness test at one energy."""

    M: int
    good: bool
    green_left: float
    green_right: float
    green_bound: float
    resolvent_norm: float
    resolvent_bound: float
    gamma: float
    good2: bool
    epsilon_log: float
    gamma_tilde: float


@dataclass(frozen=True, slots=True)
class CriticalityWitness:
    """Partition points and bad blocks of a critical potential."""

    delta: float
    sigma: float
    L: int
    energies: Interval
    k: Tuple[int, ...]
    badset: Tuple[int, ...]
    grid: int = 8

    @property
    def bad_fraction(self) -> float:
        return len(self.badset) / self.L if self.L else 1.0

    @property
    def is_critical(self) -> bool:
        return self.L >= 1 and len(self.badset) <= self.sigma * self.L


@dataclass(frozen=True, slots=True)
class ScaleSchedule:
    sigma0: float
    delta0: float
    L0: int
    N: int
    M: Tuple[int, ...]
    sigmas: Tuple[float, ...]
    deltas: Tuple[float, ...]
    Ls: Tuple[int, ...]
    eps: Tuple[float, ...]
    Ks: Tuple[int, ...]
    j_max: int
    base: int = 100
    brackets: Dict[str, Tuple[bool, ...]] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class EnergySubdivision:
    parent: Interval
    Q: int
    children: Tuple[Interval, ...]
    indices: Tuple[int, ...]


@dataclass(frozen=True, slots=True)
class StepOutcome:
    variant: str
    M: int
    delta: float
    sigma: float
    L: int
    coarse: Tuple[int, ...]
    children: Tuple[CriticalityWitness, ...]
    eliminated: Tuple[int, ...]
    resonance_counts: Dict[int, int]
    Q: int
    q_bound: float
    diagnostics: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class InductionResult:
    surviving: Tuple[Interval, ...]
    surviving_fraction: float
    certified_rate: float
    gamma: float
    K: int
    hypotheses: Dict[str, bool]
    steps: Tuple[StepOutcome, ...]


@dataclass(frozen=True, slots=True)
class IDSTable:
    M: int
    energies: np.ndarray = field(compare=False, repr=False)
    values: np.ndarray = field(compare=False, repr=False)
    stderr: np.ndarray = field(compare=False, repr=False)
    samples: int = 1
    coupling: float = 0.0
    origin: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class WegnerParams:
    C: float
    beta: float
    rho_exp: float

    @property
    def exponents_ok(self) -> bool:
        return 3 * self.beta + 3 - self.rho_exp <= 0


@dataclass(slots=True)
class RunConfig:
    """Flat experiment configuration; every field is a scalar."""

    subcommand: str = ""
    system: str = "iid"
    alpha: float = GOLDEN_MEAN
    dimension: int = 2
    law: str = "uniform"
    f: str = "coordinate"
    table: str = ""
    coupling: float = 0.25
    energies: str = "0.8"
    n: int = 10000
    samples: int = 16
    trials: int = 100
    seed: int = 0
    kappa: float = math.pi / 3
    theta: float = 0.0
    eps: str = "1e-5"
    block: int = 0
    gamma: float = 0.0
    sigma: float = 0.25
    coarse: int = 0
    q_max: int = 1000000
    variant: str = "eliminate"
    grid: int = 8
    rho_exp: float = 1.0
    wegner_c: float = 1.0
    wegner_beta: float = 0.0
    workers: int = 1
    output: str = ""
    strict: bool = False
