"""Finite Dirichlet restrictions H_Lambda: spectra, Green's functions and resonances."""

from __future__ import annotations

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .models import GreenQuery, Interval, OperatorWindow, PotentialWindow, ResonanceWitness

SINGULAR_TOL = 1e-12
AGREEMENT_RTOL = 1e-8
SLACK_FRACTION = 0.1
MAX_GRID = 4097

_PIVMIN = 1e-280
# below this an entry may be subnormal in one method and zero in the other
_UNDERFLOW = float(np.finfo(float).tiny) * 1e8


class NearSingular(RuntimeError):
    """Raised when the energy is within SINGULAR_TOL of the window spectrum."""


class ConsistencyFailure(RuntimeError):
    """Raised when two independent computations of the same quantity disagree."""


class Unverifiable(RuntimeError):
    """Raised when the energy grid cannot control the resolvent slack."""


class WindowTooShort(RuntimeError):
    """Raised when a requested interval leaves the potential window."""


def window(potential: PotentialWindow, a: int, b: int) -> OperatorWindow:
    if not 0 <= a <= b < potential.N:
        raise WindowTooShort(f"interval [{a}, {b}] is not inside [0, {potential.N - 1}]")
    return OperatorWindow(potential=potential, interval=(int(a), int(b)))


def eigenvalues(op: OperatorWindow) -> np.ndarray:
    d = np.asarray(op.diagonal, dtype=float)
    if d.size == 1:
        return d.copy()
    return np.sort(eigh_tridiagonal(d, np.ones(d.size - 1), eigvals_only=True))


def sturm_counts(diagonals: np.ndarray, energies: Sequence[float]) -> np.ndarray:
    """Count eigenvalues strictly below each energy, batched over leading axes.

    ``diagonals`` has shape ``(..., n)``; the result has shape ``(..., len(energies))``.
    """

    d = np.asarray(diagonals, dtype=float)
    E = np.asarray(energies, dtype=float)
    q = d[..., 0, None] - E
    q = np.where(q == 0.0, _PIVMIN, q)
    count = (q < 0).astype(np.int64)
    for i in range(1, d.shape[-1]):
        q = d[..., i, None] - E - 1.0 / q
        q = np.where(q == 0.0, _PIVMIN, q)
        count += q < 0
    return count


def eigen_count_below(op: OperatorWindow, E: float) -> int:
    return _count_below(op.diagonal.tolist(), float(E))


def subinterval_counts(diagonal: np.ndarray, thresholds: Sequence[float]) -> np.ndarray:
    """``out[a, b, t]`` counts eigenvalues of the block ``a..b`` below ``thresholds[t]``.

    Entries with ``b < a`` are zero. The Sturm pivots of ``a..b`` are a prefix of the
    pivots of ``a..n-1``, so one sweep per site serves every left endpoint.
    """

    d = np.asarray(diagonal, dtype=float)
    thr = np.asarray(thresholds, dtype=float)
    n = d.size
    q = np.zeros((n, thr.size))
    neg = np.zeros((n, thr.size), dtype=np.int32)
    out = np.zeros((n, n, thr.size), dtype=np.int32)
    for i in range(n):
        if i:
            q[:i] = d[i] - thr - 1.0 / q[:i]
        q[i] = d[i] - thr
        q[: i + 1] = np.where(q[: i + 1] == 0.0, _PIVMIN, q[: i + 1])
        neg[: i + 1] += q[: i + 1] < 0
        out[: i + 1, i] = neg[: i + 1]
    return out


def first_resonant_end(diagonal: np.ndarray, brackets: Sequence[Interval]) -> np.ndarray:
    """``out[a, j]`` is the smallest ``b`` such that block ``a..b`` has an eigenvalue in
    the closed bracket ``j``, or ``len(diagonal)`` when there is none.
    """

    d = np.asarray(diagonal, dtype=float)
    thresholds: List[float] = []
    for lo, hi in brackets:
        thresholds.extend((lo, math.nextafter(hi, math.inf)))
    thr = np.asarray(thresholds, dtype=float)
    n = d.size
    q = np.zeros((n, thr.size))
    neg = np.zeros((n, thr.size), dtype=np.int64)
    out = np.full((n, len(brackets)), n, dtype=np.int64)
    for i in range(n):
        if i:
            q[:i] = d[i] - thr - 1.0 / q[:i]
        q[i] = d[i] - thr
        q[: i + 1] = np.where(q[: i + 1] == 0.0, _PIVMIN, q[: i + 1])
        neg[: i + 1] += q[: i + 1] < 0
        hit = (neg[: i + 1, 1::2] - neg[: i + 1, 0::2]) > 0
        fresh = hit & (out[: i + 1] == n)
        out[: i + 1][fresh] = i
    return out


def window_resonant(first_end: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Per bracket, whether some block inside ``start..stop`` (relative sites) is resonant."""

    return np.any(first_end[start : stop + 1] <= stop, axis=0)


def is_resonant(
    potential: PotentialWindow, I: Tuple[int, int], energies: Interval, eps: float
) -> Tuple[bool, Optional[ResonanceWitness]]:
    """Decide ``(I, energies, eps)``-resonance by enumerating every subinterval of ``I``."""

    if eps <= 0:
        raise ValueError("eps must be positive")
    a, b = I
    diag = window(potential, a, b).diagonal
    lo, hi = energies[0] - eps, energies[1] + eps
    counts = subinterval_counts(diag, [lo, math.nextafter(hi, math.inf)])
    inside = counts[..., 1] - counts[..., 0]
    starts, stops = np.nonzero(inside > 0)
    if starts.size == 0:
        return False, None
    order = np.lexsort((starts, stops - starts))
    s, t = int(starts[order[0]]), int(stops[order[0]])
    eig = eigenvalues(window(potential, a + s, a + t))
    hit = eig[(eig >= lo) & (eig <= hi)]
    eigenvalue = float(hit[0]) if hit.size else float(eig[np.argmin(np.abs(eig - 0.5 * (lo + hi)))])
    return True, ResonanceWitness(interval=(a + s, a + t), eigenvalue=eigenvalue, bracket=(lo, hi))


def spectral_distance(op: OperatorWindow, E: float) -> float:
    """Distance from ``E`` to the spectrum by bisection on Sturm counts."""

    d = op.diagonal.tolist()
    n = len(d)
    E = float(E)
    lower = min(d) - 3.0
    upper = max(d) + 3.0
    tol = 1e-13 * (1.0 + max(abs(lower), abs(upper)))
    c = _count_below(d, E)
    best = math.inf
    if c > 0:
        lo, hi = lower, E
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _count_below(d, mid) <= c - 1:
                lo = mid
            else:
                hi = mid
        best = min(best, E - 0.5 * (lo + hi))
    if c < n:
        lo, hi = E, upper
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _count_below(d, mid) >= c + 1:
                hi = mid
            else:
                lo = mid
        best = min(best, 0.5 * (lo + hi) - E)
    return max(best, 0.0)


def resolvent_norm(op: OperatorWindow, E: float) -> float:
    dist = float(np.min(np.abs(eigenvalues(op) - E)))
    return math.inf if dist == 0.0 else 1.0 / dist


def green(op: OperatorWindow, q: GreenQuery) -> float:
    """The resolvent entry ``<e_x, (H_Lambda - E)^{-1} e_y>``, cross-checked two ways."""

    a, b = op.interval
    if not (a <= q.x <= b and a <= q.y <= b):
        raise WindowTooShort(f"sites {q.x}, {q.y} are not inside [{a}, {b}]")
    d = op.diagonal.tolist()
    if _count_below(d, q.E + SINGULAR_TOL) != _count_below(d, q.E - SINGULAR_TOL):
        raise NearSingular(f"E={q.E!r} is within {SINGULAR_TOL} of the spectrum of [{a}, {b}]")
    x, y = q.x - a, q.y - a
    column = _solve_column(op.diagonal, q.E, y)
    by_solve = float(column[x])
    sign, logabs = green_log(op.diagonal, np.array([q.E]), x, y)
    by_cramer = float(sign[0] * math.exp(logabs[0])) if np.isfinite(logabs[0]) else 0.0
    scale = max(abs(by_solve), abs(by_cramer), _UNDERFLOW)
    if abs(by_solve - by_cramer) > AGREEMENT_RTOL * scale:
        raise ConsistencyFailure(
            f"Green's function G({q.E!r}, {q.x}, {q.y}) disagrees: solve={by_solve!r}, "
            f"determinants={by_cramer!r}"
        )
    return by_cramer


def green_log(diagonal: np.ndarray, energies: np.ndarray, x: int, y: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sign and log-magnitude of ``G(E, x, y)`` from boundary determinants, for many E.

    Sites are relative to the start of ``diagonal``.
    """

    if x > y:
        x, y = y, x
    d = np.asarray(diagonal, dtype=float)
    left_sign, left_log = _log_minors(d[:x], energies)
    right_sign, right_log = _log_minors(d[y + 1 :][::-1], energies)
    full_sign, full_log = _log_minors(d, energies)
    parity = -1.0 if (x + y) % 2 else 1.0
    with np.errstate(invalid="ignore"):
        sign = parity * left_sign * right_sign * full_sign
        logabs = left_log + right_log - full_log
    return sign, logabs


def log_determinant(op: OperatorWindow, E: float) -> Tuple[float, float]:
    sign, logabs = _log_minors(np.asarray(op.diagonal, dtype=float), np.array([E]))
    return float(sign[0]), float(logabs[0])


def log_hadamard_resolvent_bound(op: OperatorWindow, E: float) -> float:
    """Log of ``M (4 + 2C)^{M/2} / |det(H - E)|`` with C the largest ``(V - E)^2``."""

    d = np.asarray(op.diagonal, dtype=float)
    C = float(np.max((d - E) ** 2))
    _, logdet = log_determinant(op, E)
    return math.log(d.size) + 0.5 * d.size * math.log(4.0 + 2.0 * C) - logdet


def combes_thomas(delta: float) -> Tuple[float, float]:
    if delta <= 0:
        raise ValueError("delta must be positive")
    gamma = 0.5 * math.log1p(delta / 4.0)
    return gamma, math.log(4.0 / (3.0 * delta)) / gamma


def combes_thomas_ratio(op: OperatorWindow, E: float, delta: float) -> float:
    """Largest ``|G(E,k,l)| / (e^{-gamma|k-l|}/2)`` over ``|k-l| >= max(K, 1)``."""

    gamma, K = combes_thomas(delta)
    n = op.size
    ab = _banded(op.diagonal, E)
    inverse = solve_banded((1, 1), ab, np.eye(n))
    distance = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    mask = distance >= max(K, 1.0)
    if not mask.any():
        return 0.0
    ratio = np.abs(inverse[mask]) / (0.5 * np.exp(-gamma * distance[mask]))
    return float(ratio.max())


def is_good(
    potential: PotentialWindow,
    a: int,
    K: int,
    gamma: float,
    energies: Interval,
    grid: int = 8,
) -> bool:
    """Whether ``[a-K, a+K]`` is ``(gamma, energies)``-good.

    Raises ``Unverifiable`` when no admissible grid controls the slack.
    """

    if K < 1 or a - K < 0 or a + K >= potential.N:
        raise WindowTooShort(f"[{a - K}, {a + K}] is not inside [0, {potential.N - 1}]")
    return certify_decay(potential, a - K, a + K, a, -math.log(2.0) - gamma * K, energies, grid)


def certify_decay(
    potential: PotentialWindow,
    lo: int,
    hi: int,
    center: int,
    log_threshold: float,
    energies: Interval,
    grid: int = 8,
) -> bool:
    """Check ``|G_[lo,hi](E, center, lo)|`` and ``|G_[lo,hi](E, center, hi)|`` on an energy grid.

    Between grid points the determinants of the three blocks entering the Cramer
    formula move by at most the factor ``prod(1 + r_j)`` (numerators) or
    ``prod(1 - r_j)`` (denominator), ``r_j = (h/2)/|lambda_j - E_i|``; the grid is
    refined until that slack is below ``SLACK_FRACTION`` of the threshold.
    """

    if grid < 2:
        raise ValueError("grid must have at least two points")
    op = window(potential, lo, hi)
    diag = np.asarray(op.diagonal, dtype=float)
    c = center - lo
    full_eigs = eigenvalues(op)
    left_eigs = eigenvalues(window(potential, lo, center - 1)) if center > lo else np.empty(0)
    right_eigs = eigenvalues(window(potential, center + 1, hi)) if center < hi else np.empty(0)
    E0, E1 = float(energies[0]), float(energies[1])
    log_slack_cap = math.log(SLACK_FRACTION) + log_threshold

    points = grid
    while True:
        Es = np.linspace(E0, E1, points) if E1 > E0 else np.array([E0])
        h = (E1 - E0) / (points - 1) if E1 > E0 else 0.0
        targets = [(c, 0, right_eigs), (c, diag.size - 1, left_eigs)]
        worst_slack = -math.inf
        for x, y, numerator_eigs in targets:
            _, logabs = green_log(diag, Es, x, y)
            if np.any(logabs > log_threshold):
                logging.debug("decay fails on [%d, %d] at E=%s", lo, hi, Es[np.argmax(logabs)])
                return False
            growth = _log_slack_factor(Es, h, numerator_eigs, full_eigs)
            with np.errstate(divide="ignore", invalid="ignore"):
                slack = logabs + np.log(np.expm1(np.minimum(growth, 700.0)))
            slack = np.where(np.isinf(growth), math.inf, slack)
            worst_slack = max(worst_slack, float(np.nanmax(slack)))
        if worst_slack <= log_slack_cap:
            _spot_check(op, Es[len(Es) // 2], center, full_eigs)
            return True
        if points >= MAX_GRID:
            raise Unverifiable(
                f"slack on [{lo}, {hi}] is not controlled with {points} grid points "
                f"(log slack {worst_slack:.3g} > {log_slack_cap:.3g})"
            )
        points = 2 * points - 1
        logging.debug("refining grid on [%d, %d] to %d points", lo, hi, points)


def _log_slack_factor(Es: np.ndarray, h: float, numerator_eigs: np.ndarray, denominator_eigs: np.ndarray) -> np.ndarray:
    if h == 0.0:
        return np.zeros(Es.size)
    half = 0.5 * h
    with np.errstate(divide="ignore"):
        r_num = half / np.abs(numerator_eigs[None, :] - Es[:, None]) if numerator_eigs.size else np.zeros((Es.size, 0))
        r_den = half / np.abs(denominator_eigs[None, :] - Es[:, None])
    grow = np.log1p(r_num).sum(axis=1)
    shrink = np.where(r_den < 1.0, np.log1p(-np.where(r_den < 1.0, r_den, 0.0)), -math.inf)
    total = grow - shrink.sum(axis=1)
    return np.where(np.isfinite(total), total, math.inf)


def _spot_check(op: OperatorWindow, E: float, center: int, eigs: np.ndarray) -> None:
    if eigs.size and np.min(np.abs(eigs - E)) < 1e-9:
        return
    a, b = op.interval
    green(op, GreenQuery(E=float(E), x=center, y=b))


def _count_below(d: List[float], E: float) -> int:
    count = 0
    q = 1.0
    first = True
    for v in d:
        q = v - E if first else v - E - 1.0 / q
        first = False
        if q == 0.0:
            q = _PIVMIN
        if q < 0.0:
            count += 1
    return count


def _log_minors(d: np.ndarray, energies: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sign and log of ``det(H - E)`` on ``d`` via the scaled three-term recurrence."""

    E = np.atleast_1d(np.asarray(energies, dtype=float))
    p = np.ones(E.shape)
    q = np.zeros(E.shape)
    log_scale = np.zeros(E.shape)
    for value in d:
        p, q = (value - E) * p - q, p
        s = np.maximum(np.abs(p), np.abs(q))
        p = p / s
        q = q / s
        log_scale += np.log(s)
    with np.errstate(divide="ignore"):
        return np.sign(p), np.log(np.abs(p)) + log_scale


def _banded(diagonal: np.ndarray, E: float) -> np.ndarray:
    n = len(diagonal)
    ab = np.zeros((3, n))
    ab[0, 1:] = 1.0
    ab[1] = np.asarray(diagonal, dtype=float) - E
    ab[2, :-1] = 1.0
    return ab


def _solve_column(diagonal: np.ndarray, E: float, y: int) -> np.ndarray:
    rhs = np.zeros(len(diagonal))
    rhs[y] = 1.0
    return solve_banded((1, 1), _banded(diagonal, E), rhs)
