"""Orbits of ergodic transformations, sampled potentials and non-degeneracy profiles."""

from __future__ import annotations

import logging
import math
from typing import Any, Dict, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .config import FUNCTION_KINDS, LAWS, SYSTEM_KINDS, ConfigError
from .models import GOLDEN_MEAN, ErgodicSystem, NondegeneracyProfile, PotentialWindow, SamplingFunction

DOUBLING_EXACT_STEPS = 48
DEFAULT_E_POINTS = 64
ATOM_RATIO = 0.5

_MANTISSA_BITS = 53
_CHUNK = 1024
_MOMENTS = {
    # (mean, sigma2, sigma4) of the normalized law on [-1, 1]
    "uniform": (0.0, 1.0 / 3.0, 4.0 / 45.0),
    "bernoulli": (0.0, 1.0, 0.0),
}

Point = Union[float, int, Sequence[float], np.ndarray]


class NonDegeneracyViolation(RuntimeError):
    """Raised when a sampling function has an atom, so its tails do not vanish."""


class OrbitGenerator(Protocol):
    """Common interface of the four transformations."""

    def orbit(self, omega: Point, n_steps: int) -> np.ndarray:
        """Return ``(omega, T omega, ..., T^{n_steps-1} omega)``."""


class DoublingMap:
    """``T x = 2x mod 1`` on a 64-bit dyadic expansion.

    Orbits of up to ``DOUBLING_EXACT_STEPS + 1`` points are exact. Longer orbits
    extend omega by fair bits drawn from a counter-based stream keyed by the seed
    and the mantissa of omega (the simulated tail): every bit below the last
    mantissa bit of omega is random. Iterates are truncated to 53 significant bits,
    so the first point is omega whenever omega is a multiple of 2**-64.
    """

    def __init__(self, seed: int) -> None:
        self.seed = seed

    def orbit(self, omega: Point, n_steps: int) -> np.ndarray:
        x0 = _scalar_point(omega, "doubling")
        m0 = min(int(x0 * 2.0**64), 2**64 - 1)
        n_words = (n_steps + 63) // 64 + 2
        words = np.zeros(n_words, dtype=np.uint64)
        words[0] = np.uint64(m0)
        if n_steps > DOUBLING_EXACT_STEPS + 1:
            tail = substream(self.seed, m0).integers(
                0, 2**64 - 1, size=n_words, dtype=np.uint64, endpoint=True
            )
            free_bits = max(m0.bit_length() - _MANTISSA_BITS, 0)
            if free_bits:
                mask = (1 << free_bits) - 1
                words[0] = np.uint64(m0 | (int(tail[0]) & mask))
            words[1:] = tail[1:]
            logging.debug("doubling orbit of %d steps uses a simulated tail below bit %d", n_steps, free_bits)
        n = np.arange(n_steps, dtype=np.int64)
        q = n // 64
        s = (n % 64).astype(np.uint64)
        head = words[q] << s
        safe = np.where(s == 0, np.uint64(1), np.uint64(64) - s)
        carry = np.where(s == 0, np.uint64(0), words[q + 1] >> safe)
        return _truncate_to_float(head | carry) * 2.0**-64


class Rotation:
    """``T x = x + alpha mod 1``."""

    def __init__(self, alpha: float) -> None:
        self.alpha = alpha

    def orbit(self, omega: Point, n_steps: int) -> np.ndarray:
        x0 = _scalar_point(omega, "rotation")
        return _cumsum_mod1(np.full(n_steps - 1, self.alpha), x0)


class SkewShift:
    """The K-dimensional skew-shift ``(w1 + a, w1 + w2, ..., w_{K-1} + w_K)``."""

    def __init__(self, alpha: float, dimension: int) -> None:
        self.alpha = alpha
        self.dimension = dimension

    def orbit(self, omega: Point, n_steps: int) -> np.ndarray:
        point = np.atleast_1d(np.asarray(omega, dtype=float))
        if point.shape != (self.dimension,):
            raise ConfigError(
                f"skew-shift point must have {self.dimension} coordinates, got shape {point.shape}"
            )
        _check_unit(point, "skew-shift")
        out = np.empty((n_steps, self.dimension))
        out[:, 0] = _cumsum_mod1(np.full(n_steps - 1, self.alpha), point[0])
        for k in range(1, self.dimension):
            out[:, k] = _cumsum_mod1(out[:-1, k - 1], point[k])
        return out

    def step(self, points: np.ndarray) -> np.ndarray:
        new = np.empty_like(points)
        new[:, 0] = points[:, 0] + self.alpha
        new[:, 1:] = points[:, 1:] + points[:, :-1]
        return np.mod(new, 1.0)


class IIDSource:
    """Independent draws of a law on [-1, 1]; omega is the trial index."""

    def __init__(self, law: str, seed: int) -> None:
        self.law = law
        self.seed = seed

    def orbit(self, omega: Point, n_steps: int) -> np.ndarray:
        if isinstance(omega, (bool, np.bool_)) or not isinstance(omega, (int, np.integer)) or omega < 0:
            raise ConfigError(f"iid points are non-negative trial indices, got {omega!r}")
        return draw_law(self.law, substream(self.seed, int(omega)), n_steps)


def make_system(
    kind: str,
    alpha: Optional[float] = None,
    dimension: int = 2,
    law: str = "uniform",
    seed: int = 0,
) -> ErgodicSystem:
    if kind not in SYSTEM_KINDS:
        raise ConfigError(f"Unknown system kind: {kind}")
    if law not in LAWS:
        raise ConfigError(f"Unknown law: {law}")
    alpha = GOLDEN_MEAN if alpha is None else float(alpha)
    if kind in ("skew-shift", "rotation") and not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if kind == "skew-shift" and dimension < 1:
        raise ConfigError("skew-shift dimension must be positive")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    return ErgodicSystem(kind=kind, alpha=alpha, dimension=int(dimension), law=law, seed=int(seed))


def make_function(
    kind: str, table_x: Optional[np.ndarray] = None, table_y: Optional[np.ndarray] = None
) -> SamplingFunction:
    if kind not in FUNCTION_KINDS:
        raise ConfigError(f"Unknown sampling function: {kind}")
    if kind != "table":
        return SamplingFunction(kind=kind, bound=1.0)
    if table_x is None or table_y is None:
        raise ConfigError("table sampling function requires samples")
    xs = np.asarray(table_x, dtype=float)
    ys = np.asarray(table_y, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise ConfigError("table needs two equally long columns with at least two rows")
    if np.any(np.diff(xs) <= 0) or xs[0] < 0.0 or xs[-1] >= 1.0:
        raise ConfigError("table abscissae must be sorted ascending in [0, 1)")
    return SamplingFunction(kind="table", bound=float(np.max(np.abs(ys))), table_x=xs, table_y=ys)


def get_generator(system: ErgodicSystem) -> OrbitGenerator:
    """Return the orbit generator for ``system.kind``."""

    if system.kind == "doubling":
        return DoublingMap(system.seed)
    if system.kind == "rotation":
        return Rotation(system.alpha)
    if system.kind == "skew-shift":
        return SkewShift(system.alpha, system.dimension)
    if system.kind == "iid":
        return IIDSource(system.law, system.seed)
    raise ConfigError(f"Unknown system kind: {system.kind}")


def substream(seed: int, trial: int) -> np.random.Generator:
    """Counter-based generator for one trial; independent of scheduling order."""

    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(trial)])))


def sample_omega(system: ErgodicSystem, trial: int) -> Point:
    if system.kind == "iid":
        return int(trial)
    rng = substream(system.seed, trial)
    if system.kind == "skew-shift":
        return rng.random(system.dimension)
    return float(rng.random())


def orbit(system: ErgodicSystem, omega: Point, n_steps: int) -> np.ndarray:
    if n_steps < 1:
        raise ConfigError("n_steps must be positive")
    return get_generator(system).orbit(omega, n_steps)


def evaluate(f: SamplingFunction, points: np.ndarray) -> np.ndarray:
    """Apply ``f``; on torus points it reads the last coordinate."""

    x = np.asarray(points, dtype=float)
    if x.ndim == 2:
        x = x[:, -1]
    if f.kind == "cosine":
        return np.cos(2.0 * np.pi * x)
    if f.kind == "linear-centered":
        return 2.0 * (x - 0.5)
    if f.kind == "coordinate":
        return x.copy()
    if f.kind == "table":
        return np.interp(x, f.table_x, f.table_y, period=1.0)
    raise ConfigError(f"Unknown sampling function: {f.kind}")


def potential(
    system: ErgodicSystem, f: SamplingFunction, lam: float, omega: Point, N: int
) -> PotentialWindow:
    if lam < 0:
        raise ConfigError("coupling must be non-negative")
    samples = evaluate(f, orbit(system, omega, N))
    values = lam * samples
    values.setflags(write=False)
    return PotentialWindow(values=values, coupling=float(lam), origin=_origin(system, f, omega, samples))


def potential_batch(
    system: ErgodicSystem, f: SamplingFunction, lam: float, trials: Sequence[int], N: int
) -> np.ndarray:
    """Stack the windows of several trials as rows."""

    out = np.empty((len(trials), N))
    for row, trial in enumerate(trials):
        out[row] = lam * evaluate(f, orbit(system, sample_omega(system, trial), N))
    return out


def draw_law(law: str, rng: np.random.Generator, size: Union[int, Tuple[int, ...]]) -> np.ndarray:
    if law == "uniform":
        return rng.uniform(-1.0, 1.0, size)
    if law == "bernoulli":
        return 2.0 * rng.integers(0, 2, size).astype(float) - 1.0
    raise ConfigError(f"Unknown law: {law}")


def law_moments(law: str) -> Tuple[float, float, float]:
    try:
        return _MOMENTS[law]
    except KeyError as exc:
        raise ConfigError(f"Unknown law: {law}") from exc


def invariant_samples(system: ErgodicSystem, samples: int, seed: int) -> np.ndarray:
    """Draw points from the invariant measure of ``system``."""

    rng = substream(seed, 0)
    if system.kind == "iid":
        return draw_law(system.law, rng, samples)
    if system.kind == "skew-shift":
        return rng.random((samples, system.dimension))
    return rng.random(samples)


def estimate_nondegeneracy(
    f: SamplingFunction,
    system: ErgodicSystem,
    E_grid: Optional[Sequence[float]],
    eps_grid: Sequence[float],
    samples: int,
    seed: Optional[int] = None,
) -> NondegeneracyProfile:
    eps = np.asarray(eps_grid, dtype=float)
    if eps.size < 2 or np.any(np.diff(eps) >= 0) or eps[0] >= 1.0 or eps[-1] <= 0.0:
        raise ConfigError("eps_grid must be strictly decreasing inside (0, 1)")
    if samples < 1000:
        raise ConfigError("at least 1000 samples are needed for a tail fit")
    values = np.sort(evaluate(f, invariant_samples(system, samples, system.seed if seed is None else seed)))
    if E_grid is None:
        E_grid = np.linspace(values[0], values[-1], DEFAULT_E_POINTS)
    energies = np.asarray(E_grid, dtype=float)

    upper = np.searchsorted(values, energies[:, None] + eps[None, :], side="right")
    lower = np.searchsorted(values, energies[:, None] - eps[None, :], side="left")
    tails = (upper - lower).max(axis=0) / samples
    logging.debug("non-degeneracy tails %s at eps %s", tails, eps)

    if tails[-1] > 0 and eps[-1] / eps[0] <= 0.1 and tails[-1] / tails[0] >= ATOM_RATIO:
        raise NonDegeneracyViolation(
            f"tail {tails[-1]:.3g} does not vanish as eps -> {eps[-1]:.3g}: f has an atom"
        )
    positive = tails > 0
    if positive.sum() < 2:
        return NondegeneracyProfile(
            F=0.0, alpha=math.inf, epsilon_grid=eps, measured_tails=tails,
            fit_residual=0.0, slack=0.0, degenerate=True,
        )
    log_eps = np.log(eps[positive])
    log_tail = np.log(tails[positive])
    alpha, log_F = np.polyfit(log_eps, log_tail, 1)
    residual = log_tail - (log_F + alpha * log_eps)
    return NondegeneracyProfile(
        F=float(math.exp(log_F)),
        alpha=float(alpha),
        epsilon_grid=eps,
        measured_tails=tails,
        fit_residual=float(np.sqrt(np.mean(residual**2))),
        slack=float(max(0.0, math.expm1(residual.max()))),
    )


def k_independence_statistics(system: ErgodicSystem, samples: int, seed: int) -> Dict[str, Any]:
    """KS distances and maximal correlation of ``(w_K, (Tw)_K, ..., (T^{K-1}w)_K)``."""

    if system.kind != "skew-shift":
        raise ConfigError("K-independence is a skew-shift property")
    shift = SkewShift(system.alpha, system.dimension)
    points = substream(seed, 0).random((samples, system.dimension))
    columns = np.empty((samples, system.dimension))
    for j in range(system.dimension):
        columns[:, j] = points[:, -1]
        points = shift.step(points)
    ks = [float(stats.kstest(columns[:, j], "uniform").statistic) for j in range(system.dimension)]
    if system.dimension > 1:
        corr = np.corrcoef(columns.T)
        max_corr = float(np.max(np.abs(corr - np.eye(system.dimension))))
    else:
        max_corr = 0.0
    return {"ks": ks, "max_corr": max_corr}


def _origin(system: ErgodicSystem, f: SamplingFunction, omega: Point, samples: np.ndarray) -> Dict[str, Any]:
    if isinstance(omega, np.ndarray):
        omega = [float(v) for v in omega]
    return {
        "kind": system.kind,
        "seed": system.seed,
        "alpha": system.alpha,
        "dimension": system.dimension,
        "law": system.law,
        "f": f.kind,
        "omega": omega,
        "mean_f": float(np.mean(samples)),
    }


def _scalar_point(omega: Point, kind: str) -> float:
    if isinstance(omega, (list, tuple, np.ndarray)) and np.ndim(omega) != 0:
        raise ConfigError(f"{kind} points are scalars in [0, 1)")
    x = float(omega)
    _check_unit(np.array([x]), kind)
    return x


def _check_unit(point: np.ndarray, kind: str) -> None:
    if np.any(point < 0.0) or np.any(point >= 1.0) or not np.all(np.isfinite(point)):
        raise ConfigError(f"{kind} points must lie in [0, 1)")


def _cumsum_mod1(increments: np.ndarray, start: float) -> np.ndarray:
    """Return ``start + cumsum(increments) mod 1`` with the running sum kept small."""

    out = np.empty(increments.shape[0] + 1)
    out[0] = start
    carry = start
    for lo in range(0, increments.shape[0], _CHUNK):
        chunk = carry + np.cumsum(increments[lo : lo + _CHUNK])
        out[lo + 1 : lo + 1 + chunk.shape[0]] = chunk
        carry = chunk[-1] % 1.0
    return np.mod(out, 1.0)


def _bit_length(words: np.ndarray) -> np.ndarray:
    length = np.zeros(words.shape, dtype=np.uint64)
    rest = words.copy()
    for shift in (32, 16, 8, 4, 2, 1):
        big = rest >= np.uint64(1 << shift)
        rest = np.where(big, rest >> np.uint64(shift), rest)
        length += big.astype(np.uint64) * np.uint64(shift)
    return length + (rest > 0).astype(np.uint64)


def _truncate_to_float(words: np.ndarray) -> np.ndarray:
    """Exact float64 values of ``words`` with all but the top 53 significant bits cleared."""

    drop = np.maximum(_bit_length(words), np.uint64(_MANTISSA_BITS)) - np.uint64(_MANTISSA_BITS)
    return ((words >> drop) << drop).astype(np.float64)
