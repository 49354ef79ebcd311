"""Integrated density of states and Wegner-type estimates."""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .config import ConfigError
from .dynamics import evaluate, make_function, orbit, potential_batch
from .models import ErgodicSystem, IDSTable, PotentialWindow, SamplingFunction, WegnerParams
from .operators import is_resonant, sturm_counts

CHUNK_SAMPLES = 4096


def ids_counts(
    system: ErgodicSystem,
    f: SamplingFunction,
    lam: float,
    M: int,
    grid: Sequence[float],
    trials: Sequence[int],
) -> np.ndarray:
    """Eigenvalue counts strictly below each grid energy, one row per trial."""

    trials = list(trials)
    out = np.empty((len(trials), len(grid)), dtype=np.int64)
    for lo in range(0, len(trials), CHUNK_SAMPLES):
        chunk = trials[lo : lo + CHUNK_SAMPLES]
        out[lo : lo + len(chunk)] = sturm_counts(potential_batch(system, f, lam, chunk, M), grid)
    return out


def ids_table(
    counts: np.ndarray, M: int, grid: Sequence[float], lam: float, origin: Optional[Dict[str, Any]] = None
) -> IDSTable:
    fractions = counts / M
    samples = counts.shape[0]
    stderr = np.std(fractions, axis=0, ddof=1) / math.sqrt(samples) if samples > 1 else np.zeros(len(grid))
    return IDSTable(
        M=M,
        energies=np.asarray(grid, dtype=float),
        values=fractions.mean(axis=0),
        stderr=stderr,
        samples=samples,
        coupling=float(lam),
        origin=dict(origin or {}),
    )


def ids(
    system: ErgodicSystem,
    f: SamplingFunction,
    lam: float,
    M: int,
    grid: Sequence[float],
    samples: int,
    seed: Optional[int] = None,
) -> IDSTable:
    """Monte Carlo estimate of ``k_M(E)`` on ``grid``."""

    if M < 1 or samples < 1:
        raise ConfigError("M and samples must be positive")
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ConfigError("IDS grid must be increasing")
    if seed is not None:
        system = replace(system, seed=int(seed))
    logging.info("ids: M=%d, %d energies, %d samples", M, grid.size, samples)
    counts = ids_counts(system, f, lam, M, grid, range(samples))
    return ids_table(counts, M, grid, lam, {"system": system.kind, "f": f.kind, "seed": system.seed})


def near_spectrum(diagonals: np.ndarray, E: float, eps: float) -> np.ndarray:
    """Per row, whether some eigenvalue lies in ``[E - eps, E + eps]``."""

    counts = sturm_counts(diagonals, [E - eps, math.nextafter(E + eps, math.inf)])
    return counts[..., 1] > counts[..., 0]


def wegner_probability(
    system: ErgodicSystem,
    f: SamplingFunction,
    lam: float,
    M: int,
    E: float,
    eps: float,
    samples: int,
    seed: Optional[int] = None,
) -> float:
    """Empirical probability that ``dist(spectrum of H_[0,M-1], E) <= eps``."""

    if eps <= 0:
        raise ConfigError("eps must be positive")
    if seed is not None:
        system = replace(system, seed=int(seed))
    hits = 0
    for lo in range(0, samples, CHUNK_SAMPLES):
        chunk = range(lo, min(lo + CHUNK_SAMPLES, samples))
        hits += int(np.count_nonzero(near_spectrum(potential_batch(system, f, lam, chunk, M), E, eps)))
    return hits / samples


def loghoelder_constant(alpha: float, rho: float) -> float:
    return math.exp(-rho) * (rho / alpha) ** rho


def toy_wegner_bound(lam: float, N: int, eps: float) -> float:
    return 7.0 * max(1.0, 1.0 / lam) * N * N * eps


def skew_wegner_bound(lam: float, M: int, eps: float, rho: float) -> float:
    return 14.0 * max(1.0, 1.0 / lam) * rho**rho * M**4 / abs(math.log(eps)) ** rho


def wegner_to_resonance_bound(params: WegnerParams, M: int, eps: float) -> float:
    """Bound on the probability that some block of ``[0, M-1]`` is ``eps/2``-resonant."""

    if not 0 < eps < 0.5:
        raise ConfigError("eps must lie in (0, 1/2)")
    return params.C * M ** (2.0 + params.beta) / abs(math.log(eps)) ** params.rho_exp


def subinterval_resonance_frequency(
    system: ErgodicSystem,
    f: SamplingFunction,
    lam: float,
    M: int,
    E: float,
    eps: float,
    samples: int,
    seed: Optional[int] = None,
) -> float:
    if seed is not None:
        system = replace(system, seed=int(seed))
    values = potential_batch(system, f, lam, range(samples), M)
    hits = 0
    for row in values:
        resonant, _ = is_resonant(PotentialWindow(values=row, coupling=lam), (0, M - 1), (E, E), 0.5 * eps)
        hits += int(resonant)
    return hits / samples


def skewshift_wegner_check(
    lam: float,
    alpha: float,
    K: int,
    N: int,
    eps_list: Sequence[float],
    E_grid: Sequence[float],
    samples: int,
    seed: int = 0,
    rho: float = 1.0,
    trials: Optional[Sequence[int]] = None,
    holder_alpha: float = 1.0,
) -> Dict[str, Any]:
    """Compare measured IDS increments and spectral proximity with both Wegner bounds."""

    if N < 10:
        raise ConfigError("the skew-shift Wegner check needs N >= 10")
    system = ErgodicSystem(kind="skew-shift", alpha=alpha, dimension=K, seed=seed)
    f = make_function("linear-centered")
    trials = list(range(samples)) if trials is None else list(trials)
    counts = skewshift_counts(system, f, lam, N, eps_list, E_grid, trials)
    return skewshift_report(counts, lam, N, eps_list, E_grid, rho, holder_alpha)


def skewshift_counts(
    system: ErgodicSystem,
    f: SamplingFunction,
    lam: float,
    N: int,
    eps_list: Sequence[float],
    E_grid: Sequence[float],
    trials: Sequence[int],
) -> Dict[str, np.ndarray]:
    """Per-trial increments and near-spectrum hits, shaped ``(trials, energies, eps)``."""

    E = np.asarray(E_grid, dtype=float)
    eps = np.asarray(eps_list, dtype=float)
    trials = list(trials)
    increments = np.empty((len(trials), E.size, eps.size), dtype=np.int64)
    near = np.empty((len(trials), E.size, eps.size), dtype=bool)
    upper = (E[:, None] + eps[None, :]).ravel()
    lower = (E[:, None] - eps[None, :]).ravel()
    closed = np.nextafter(upper, np.inf)
    for lo in range(0, len(trials), CHUNK_SAMPLES):
        chunk = trials[lo : lo + CHUNK_SAMPLES]
        values = potential_batch(system, f, lam, chunk, N)
        at_E = sturm_counts(values, E)
        at_up = sturm_counts(values, upper).reshape(len(chunk), E.size, eps.size)
        at_low = sturm_counts(values, lower).reshape(len(chunk), E.size, eps.size)
        at_closed = sturm_counts(values, closed).reshape(len(chunk), E.size, eps.size)
        increments[lo : lo + len(chunk)] = at_up - at_E[:, :, None]
        near[lo : lo + len(chunk)] = at_closed > at_low
    return {"increments": increments, "near": near}


def skewshift_report(
    counts: Dict[str, np.ndarray],
    lam: float,
    N: int,
    eps_list: Sequence[float],
    E_grid: Sequence[float],
    rho: float = 1.0,
    holder_alpha: float = 1.0,
) -> Dict[str, Any]:
    """Per (E, eps) rows against both Wegner bounds; ``holder_alpha`` is the non-degeneracy exponent of f."""

    increments = counts["increments"] / N
    near = counts["near"]
    samples = increments.shape[0]
    rows: List[Dict[str, Any]] = []
    violations: List[str] = []
    for i, E in enumerate(E_grid):
        for j, eps in enumerate(eps_list):
            column = increments[:, i, j]
            measured = float(column.mean())
            stderr = float(column.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
            toy = toy_wegner_bound(lam, N, eps)
            probability = float(near[:, i, j].mean())
            p_err = math.sqrt(probability * (1.0 - probability) / samples)
            skew = skew_wegner_bound(lam, N, eps, rho) if 0 < eps < 1 else math.inf
            row = {
                "E": float(E),
                "eps": float(eps),
                "increment": measured,
                "stderr": stderr,
                "toy_bound": toy,
                "toy_ok": measured <= toy + 3.0 * stderr,
                "probability": probability,
                "skew_bound": skew,
                "skew_ok": probability <= skew + 3.0 * p_err,
            }
            if not row["toy_ok"]:
                violations.append(f"idstoy at E={E:.6g} eps={eps:.3g}")
            if not row["skew_ok"]:
                violations.append(f"idsskew at E={E:.6g} eps={eps:.3g}")
            rows.append(row)
    return {
        "rows": rows,
        "violations": violations,
        "samples": samples,
        "holder_alpha": holder_alpha,
        "loghoelder_C": loghoelder_constant(holder_alpha, rho),
    }


def rank_one_count_gap(potential: PotentialWindow, site: int, new_value: float, energies: Sequence[float]) -> int:
    """Largest change of the eigenvalue count below E when one site of the potential changes."""

    values = np.array(potential.values, dtype=float)
    if not 0 <= site < values.size:
        raise ConfigError(f"site {site} is outside the window")
    changed = values.copy()
    changed[site] = new_value
    counts = sturm_counts(np.stack([values, changed]), energies)
    return int(np.max(np.abs(counts[0] - counts[1]))) if len(energies) else 0


def skew_shift_one_wrap_gap(
    system: ErgodicSystem, f: SamplingFunction, lam: float, omega: np.ndarray, N: int, energies: Sequence[float]
) -> int:
    """Count gap after moving the last coordinate of omega so exactly one site wraps.

    For ``linear-centered`` the moved potential equals the original shifted by
    ``2 lam t`` plus a rank-one change at the wrapping site, so counts are
    compared at the shifted energies.
    """

    if system.kind != "skew-shift" or f.kind != "linear-centered":
        raise ConfigError("one-wrap comparison needs a skew-shift with the linear-centered function")
    points = orbit(system, omega, N)
    last = np.sort(points[:, -1])
    top = float(last[-1])
    runner_up = float(last[-2]) if N > 1 else 0.0
    if N > 1 and top == runner_up:
        raise ConfigError("the largest last coordinate is not unique")
    t = 1.0 - 0.5 * (top + runner_up)
    moved = np.array(omega, dtype=float)
    moved[-1] = (moved[-1] + t) % 1.0
    base = lam * evaluate(f, points)
    shifted = lam * evaluate(f, orbit(system, moved, N)) - 2.0 * lam * t
    E = np.asarray(energies, dtype=float)
    if E.size == 0:
        return 0
    gaps = np.abs(np.diff(sturm_counts(np.stack([base, shifted]), E), axis=0))
    logging.debug("one-wrap shift t=%.6g, largest gap %d", t, gaps.max())
    return int(gaps.max())
