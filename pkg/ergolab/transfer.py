"""Transfer matrices, Lyapunov exponents, Pruefer variables and large deviations."""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ConfigError
from .dynamics import draw_law, law_moments, potential_batch, substream
from .models import (
    ErgodicSystem,
    GreenQuery,
    LDTParams,
    LyapunovEstimate,
    PotentialWindow,
    PruferTrajectory,
    RandomWindowReport,
    SamplingFunction,
    TransferProduct,
)
from .operators import NearSingular, green, log_determinant, resolvent_norm, window

STRIDE = 16
ZETA_RENORM = 64
THETA_GRID = 16
CHUNK_TRIALS = 32
CONVENTIONS = ("e-minus-v", "v-minus-e")

_LN2 = math.log(2.0)
_log = np.vectorize(math.log, otypes=[float])


class StepTooLarge(RuntimeError):
    """Raised when the Pruefer step size makes the recursion denominators unsafe."""


class NotGood(RuntimeError):
    """Raised when no candidate window of the random-goodness test is usable."""


def one_step(v: float, E: float, convention: str = "e-minus-v") -> np.ndarray:
    if convention == "e-minus-v":
        return np.array([[E - v, -1.0], [1.0, 0.0]])
    if convention == "v-minus-e":
        return np.array([[v - E, -1.0], [1.0, 0.0]])
    raise ConfigError(f"Unknown sign convention: {convention}")


def transfer_product(
    potential: PotentialWindow,
    E: float,
    N: int,
    stride: int = STRIDE,
    convention: str = "e-minus-v",
) -> TransferProduct:
    """``A(N-1) ... A(0)`` with ``A(n) = [[E - V(n), -1], [1, 0]]``.

    The product is carried as ``Q R`` with Q a rotation and R upper triangular;
    the diagonal of R is accumulated as mantissa and binary exponent, renormalized
    every ``stride`` steps.
    """

    if convention not in CONVENTIONS:
        raise ConfigError(f"Unknown sign convention: {convention}")
    if not 1 <= N <= potential.N:
        raise ConfigError(f"N={N} must lie in [1, {potential.N}]")
    sweep = _qr_sweep(potential.values[None, :N], np.array([float(E)]), stride)
    c, s = sweep["c"][0, 0], sweep["s"][0, 0]
    upper = np.array([[1.0, sweep["qhat"][0, 0]], [0.0, sweep["that"][0, 0]]])
    rotation = np.array([[c, -s], [s, c]])
    matrix = rotation @ upper
    if convention == "v-minus-e":
        flip = np.diag([1.0, -1.0])
        matrix = (-1.0) ** N * (flip @ matrix @ flip)
    fro = float(np.linalg.norm(matrix))
    log11 = float(sweep["log11"][0, 0])
    return TransferProduct(
        entries=matrix / fro,
        log_scale=log11 + math.log(fro),
        N=N,
        E=float(E),
        convention=convention,
        log_det=log11 + float(sweep["log22"][0, 0]),
    )


def determinant_drift(product: TransferProduct) -> float:
    """``|det(unscaled product) - 1|``."""

    return abs(math.expm1(product.log_det))


def growth_rates(values: np.ndarray, energies: Sequence[float], stride: int = STRIDE) -> np.ndarray:
    """``(1/N) log ||A(E, N)||`` for each row of ``values`` and each energy."""

    rows = np.atleast_2d(np.asarray(values, dtype=float))
    sweep = _qr_sweep(rows, np.asarray(energies, dtype=float), stride)
    q, t = sweep["qhat"], sweep["that"]
    a = 1.0 + q * q + t * t
    top = np.sqrt(0.5 * (a + np.sqrt(np.maximum(a * a - 4.0 * t * t, 0.0))))
    return (sweep["log11"] + _log(top)) / rows.shape[1]


def free_growth(E: float) -> float:
    """Lyapunov exponent of the free operator."""

    E = abs(float(E))
    if E <= 2.0:
        return 0.0
    return math.log(0.5 * (E + math.sqrt(E * E - 4.0)))


def growth_table(
    system: ErgodicSystem,
    f: SamplingFunction,
    lam: float,
    energies: Sequence[float],
    N: int,
    trials: Sequence[int],
) -> np.ndarray:
    """Growth rates with one row per trial, computed in fixed-size trial chunks."""

    trials = list(trials)
    out = np.empty((len(trials), len(energies)))
    for lo in range(0, len(trials), CHUNK_TRIALS):
        chunk = trials[lo : lo + CHUNK_TRIALS]
        values = potential_batch(system, f, lam, chunk, N)
        out[lo : lo + len(chunk)] = growth_rates(values, energies)
    return out


def summarize_growth(energies: Sequence[float], table: np.ndarray, N: int) -> List[LyapunovEstimate]:
    samples = table.shape[0]
    estimates = []
    for col, E in enumerate(energies):
        column = table[:, col]
        stderr = float(np.std(column, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
        estimates.append(LyapunovEstimate(E=float(E), value=float(np.mean(column)), stderr=stderr, N=N, samples=samples))
    return estimates


def lyapunov_scan(
    system: ErgodicSystem,
    f: SamplingFunction,
    lam: float,
    energies: Sequence[float],
    N: int,
    samples: int,
    seed: Optional[int] = None,
) -> List[LyapunovEstimate]:
    if samples < 1:
        raise ConfigError("samples must be positive")
    if seed is not None:
        system = replace(system, seed=int(seed))
    logging.info("lyapunov scan: %d energies, N=%d, samples=%d", len(energies), N, samples)
    table = growth_table(system, f, lam, energies, N, range(samples))
    return summarize_growth(energies, table, N)


def lyapunov_estimate(
    system: ErgodicSystem,
    f: SamplingFunction,
    lam: float,
    E: float,
    N: int,
    samples: int,
    seed: Optional[int] = None,
) -> LyapunovEstimate:
    if N < 1000:
        raise ConfigError("lyapunov estimates need N >= 1000")
    return lyapunov_scan(system, f, lam, [E], N, samples, seed)[0]


def prufer_evolve(potential: PotentialWindow, kappa: float, theta: float = 0.0) -> PruferTrajectory:
    _check_kappa(kappa)
    t = np.asarray(potential.values, dtype=float) / math.sin(kappa)
    step = 3.0 * float(np.max(np.abs(potential.values), initial=0.0)) / abs(math.sin(kappa))
    if step > 0.5:
        raise StepTooLarge(f"3 max|V| / |sin kappa| = {step:.4g} exceeds 1/2")
    zeta, log_rho, phi = _prufer_sweep(t[None, :], kappa, theta, keep=True)
    return PruferTrajectory(kappa=float(kappa), theta=float(theta), zeta=zeta[:, 0], log_rho=log_rho[:, 0], phi=phi[:, 0])


def reconstruct_solution(traj: PruferTrajectory) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(u(n-1), u(n))`` for ``n = 0..N``."""

    rho = np.exp(traj.log_rho)
    s = math.sin(traj.kappa)
    previous = rho * np.sin(traj.phi) / s
    current = rho * np.cos(traj.phi) + math.cos(traj.kappa) * previous
    return previous, current


def recurrence_residual(traj: PruferTrajectory, potential: PotentialWindow) -> float:
    """Largest relative defect of ``u(n+1) = (E - V(n)) u(n) - u(n-1)`` along the trajectory."""

    previous, current = reconstruct_solution(traj)
    N = traj.N
    E = 2.0 * math.cos(traj.kappa)
    coeff = E - np.asarray(potential.values[:N], dtype=float)
    predicted = coeff * current[:N] - previous[:N]
    scale = np.abs(coeff * current[:N]) + np.abs(previous[:N]) + np.abs(current[1:])
    defect = np.abs(current[1:] - predicted) / np.where(scale > 0, scale, 1.0)
    return float(defect.max(initial=0.0))


def prufer_functionals(
    traj: PruferTrajectory, potential: PotentialWindow, kappa: float
) -> Tuple[float, float, float, float, float]:
    """Return ``(F1, F2, F3, F4, |log(rho_N)/N - (F1 + F2 + F3 + F4)|)``."""

    N = traj.N
    t = np.asarray(potential.values[:N], dtype=float) / math.sin(kappa)
    psi = traj.phi[:N] + kappa
    F1 = float(np.sum(t * t / 8.0) / N)
    F2 = float(np.sum(-0.5 * t * np.sin(2.0 * psi)) / N)
    F3 = float(-np.sum(0.25 * t * t * np.cos(2.0 * psi)) / N)
    F4 = float(np.sum(t * t / 8.0 * np.cos(4.0 * psi)) / N)
    gap = abs(float(traj.log_rho[N]) / N - (F1 + F2 + F3 + F4))
    return F1, F2, F3, F4, gap


def azuma_increments(traj: PruferTrajectory, potential: PotentialWindow, kappa: float) -> np.ndarray:
    """Summands of ``N * F2``; a martingale difference sequence for mean-zero laws."""

    N = traj.N
    t = np.asarray(potential.values[:N], dtype=float) / math.sin(kappa)
    return -0.5 * t * np.sin(2.0 * (traj.phi[:N] + kappa))


def zeta_sums(traj: PruferTrajectory) -> Tuple[float, float]:
    z = traj.zeta[1:]
    return float(abs(np.sum(z))), float(abs(np.sum(z * z)))


def zeta_sum_bound(sigma2: float, N: int) -> float:
    return N / (172.0 * sigma2)


def theta_grid(points: int = THETA_GRID) -> np.ndarray:
    return np.arange(points) * (math.pi / points)


def ldt_params(law: str, lam: float, kappa: float, N: int) -> LDTParams:
    _check_kappa(kappa)
    _, sigma2, sigma4 = law_moments(law)
    s, c = math.sin(kappa), math.cos(kappa)
    spread = abs(s * c) * min(1.0, 2.0 * abs(c * c - s * s))
    cond_n1 = spread > 0 and N >= 344.0 * sigma2 / spread
    cond_lam1 = lam <= abs(s) * min(sigma2 / 7000.0, spread / (1032.0 * sigma2))
    return LDTParams(
        sigma2=sigma2,
        sigma4=sigma4,
        coupling=float(lam),
        kappa=float(kappa),
        N=int(N),
        gamma1=sigma2 * lam * lam / (8.0 * s * s),
        cond_n1=bool(cond_n1),
        cond_lam1=bool(cond_lam1),
        law=law,
    )


def ldt_bound(params: LDTParams) -> float:
    return 2400.0 / params.N * params.sigma4 / params.sigma2**2 + 3.0 * math.exp(
        -params.gamma1**2 * params.N / 80000.0
    )


def ldt_rates(params: LDTParams, trials: Sequence[int], seed: int, theta: float = 0.0) -> np.ndarray:
    """``(1/N) log rho_N(theta)`` for the given trial indices."""

    s = math.sin(params.kappa)
    if params.coupling / abs(s) >= 1.0:
        raise StepTooLarge(f"lambda / |sin kappa| = {params.coupling / abs(s):.4g} is not below 1")
    trials = list(trials)
    out = np.empty(len(trials))
    for lo in range(0, len(trials), CHUNK_TRIALS):
        chunk = trials[lo : lo + CHUNK_TRIALS]
        values = np.stack([draw_law(params.law, substream(seed, trial), params.N) for trial in chunk])
        _, log_rho, _ = _prufer_sweep(params.coupling * values / s, params.kappa, theta, keep=False)
        out[lo : lo + len(chunk)] = log_rho[-1] / params.N
    return out


def deviation_probability(params: LDTParams, rates: np.ndarray) -> float:
    if params.gamma1 == 0.0:
        return 0.0
    return float(np.mean(np.abs(rates - params.gamma1) >= params.gamma1 / 6.0))


def ldt_experiment(params: LDTParams, trials: int, seed: int, theta: float = 0.0) -> Tuple[float, float]:
    """Return the empirical deviation probability and the large-deviation bound."""

    if trials < 100:
        raise ConfigError("ldt experiments need at least 100 trials")
    logging.info("ldt: N=%d lambda=%s kappa=%s trials=%d", params.N, params.coupling, params.kappa, trials)
    if params.gamma1 == 0.0:
        return 0.0, ldt_bound(params)
    rates = ldt_rates(params, range(trials), seed, theta)
    return deviation_probability(params, rates), ldt_bound(params)


def random_parameter_flags(E: float, lam: float, K: int, sigma2: float, sigma4: float) -> Dict[str, object]:
    width = math.sqrt(4.0 - E * E)
    A_stated = min(1.0, E * E - 2.0)
    A = min(1.0, abs(E * E - 2.0))
    if A > 0:
        k_min = max(2800.0 * sigma2 / (abs(E) * width * A), 4608.0 * sigma4 / sigma2**2)
        lam_max = 0.5 * width * min(sigma2 / 7000.0, abs(E) * width * A / (4400.0 * sigma2))
    else:
        k_min, lam_max = math.inf, 0.0
    return {
        "A": A,
        "A_discrepancy": A_stated != A,
        "K_min": k_min,
        "lambda_max": lam_max,
        "K_ok": K >= k_min,
        "lambda_ok": lam <= lam_max,
        "lambda2K_ok": lam * lam * K >= 150000.0 * (4.0 - E * E) / sigma2,
    }


def corollary_epsilon(E: float, gamma: float, K: int) -> Tuple[float, float]:
    """Return ``(log eps, gamma_tilde)`` of the shrunk energy window."""

    half = 1.0 - abs(E) / 2.0
    gamma_tilde = gamma - (0.5 * math.log(half) + _LN2) / K
    log_eps = -(gamma_tilde + (10.0 / 3.0) * gamma + math.log(6.0)) * K - math.log(16.0 * math.sqrt(half) * K)
    return log_eps, gamma_tilde


def random_window_goodness(
    V: PotentialWindow, lam: float, E: float, K: int, sigma2: float = 1.0 / 3.0
) -> RandomWindowReport:
    """Goodness of a random window with sites ``1..2K-2`` stored at ``0..2K-3``."""

    if not (-2.0 < E < 2.0 and E != 0.0):
        raise ConfigError("E must lie in (-2, 0) or (0, 2)")
    if K < 4:
        raise ConfigError("K must be at least 4")
    if V.N < 2 * K - 2:
        raise ConfigError(f"window needs {2 * K - 2} sites, got {V.N}")
    gamma = lam * lam * sigma2 / (4.0 * (4.0 - E * E))
    half = 1.0 - abs(E) / 2.0

    candidates = []
    for M in (2 * K - 3, 2 * K - 2):
        _, logdet = log_determinant(window(V, 0, M - 1), E)
        candidates.append((logdet, M))
    candidates.sort(reverse=True)
    diagnostics = []
    for logdet, M in candidates:
        op = window(V, 0, M - 1)
        try:
            left = green(op, GreenQuery(E=E, x=0, y=K - 1))
            right = green(op, GreenQuery(E=E, x=M - 1, y=K - 1))
        except NearSingular as exc:
            diagnostics.append(f"M={M}: {exc}")
            continue
        break
    else:
        raise NotGood("; ".join(diagnostics))

    log_green_bound = 0.5 * math.log(half) - _LN2 - gamma * K
    log_resolvent_bound = 0.5 * math.log(half) + math.log(2.0 * K) + ((10.0 / 3.0) * gamma + math.log(6.0)) * K
    norm = resolvent_norm(op, E)
    log_norm = math.log(norm) if norm > 0 else -math.inf
    good = (
        _log_abs(left) <= log_green_bound
        and _log_abs(right) <= log_green_bound
        and log_norm <= log_resolvent_bound
    )

    log_eps, gamma_tilde = corollary_epsilon(E, gamma, K)
    reach = log_eps + log_norm
    good2 = False
    if reach < 0:
        slack = log_eps + 2.0 * log_norm - math.log1p(-math.exp(reach))
        worst = max(_log_abs(left), _log_abs(right))
        good2 = bool(np.logaddexp(worst, slack) <= -_LN2 - gamma_tilde * K)
    logging.debug("random window M=%d good=%s good2=%s", M, good, good2)
    return RandomWindowReport(
        M=M,
        good=bool(good),
        green_left=float(left),
        green_right=float(right),
        green_bound=_safe_exp(log_green_bound),
        resolvent_norm=float(norm),
        resolvent_bound=_safe_exp(log_resolvent_bound),
        gamma=gamma,
        good2=good2,
        epsilon_log=log_eps,
        gamma_tilde=gamma_tilde,
    )


def random_goodness_rate(
    law: str, lam: float, E: float, K: int, windows: int, seed: int
) -> Dict[str, float]:
    """Empirical success rate against ``15/16`` with a 3-sigma binomial slack."""

    _, sigma2, _ = law_moments(law)
    successes = 0
    for trial in range(windows):
        values = lam * draw_law(law, substream(seed, trial), 2 * K - 2)
        try:
            report = random_window_goodness(PotentialWindow(values=values, coupling=lam), lam, E, K, sigma2)
        except NotGood:
            continue
        successes += int(report.good)
    target = 15.0 / 16.0
    slack = 3.0 * math.sqrt(target * (1.0 - target) / windows)
    rate = successes / windows
    return {"rate": rate, "successes": successes, "windows": windows, "lower": target - slack, "passed": rate >= target - slack}


def _qr_sweep(values: np.ndarray, energies: np.ndarray, stride: int) -> Dict[str, np.ndarray]:
    if stride < 1:
        raise ConfigError("stride must be positive")
    shape = (values.shape[0], energies.size)
    c = np.ones(shape)
    s = np.zeros(shape)
    qhat = np.zeros(shape)
    that = np.ones(shape)
    m11 = np.ones(shape)
    m22 = np.ones(shape)
    e11 = np.zeros(shape, dtype=np.int64)
    e22 = np.zeros(shape, dtype=np.int64)
    for n in range(values.shape[1]):
        x = energies[None, :] - values[:, n, None]
        v1x = x * c - s
        v2x = -x * s - c
        r11 = np.sqrt(v1x * v1x + c * c)
        c_new = v1x / r11
        s_new = c / r11
        r12 = c_new * v2x - s_new * s
        r22 = -s_new * v2x - c_new * s
        qhat = qhat + (r12 / r11) * that
        that = that * (r22 / r11)
        that[np.abs(that) < 1e-300] = 0.0
        c, s = c_new, s_new
        m11 *= r11
        m22 *= r22
        if (n + 1) % stride == 0:
            m11, e = np.frexp(m11)
            e11 += e
            m22, e = np.frexp(m22)
            e22 += e
    m11, e = np.frexp(m11)
    e11 += e
    m22, e = np.frexp(m22)
    e22 += e
    return {
        "c": c,
        "s": s,
        "qhat": qhat,
        "that": that,
        "log11": _log(m11) + e11 * _LN2,
        "log22": _log(m22) + e22 * _LN2,
    }


def _prufer_sweep(
    t: np.ndarray, kappa: float, theta: float, keep: bool
) -> Tuple[Optional[np.ndarray], np.ndarray, Optional[np.ndarray]]:
    """Run the zeta and rho recursions for each row of ``t = V / sin(kappa)``.

    With ``keep`` the full histories (rows ``n = 0..N``) are returned, including
    the continuous phase phi; otherwise only the final ``log rho``.
    """

    S, N = t.shape
    mr, mi = math.cos(2.0 * kappa), math.sin(2.0 * kappa)
    zr = np.full(S, math.cos(2.0 * theta))
    zi = np.full(S, math.sin(2.0 * theta))
    log_rho = np.zeros(S)
    phi = np.full(S, float(theta))
    if keep:
        zeta_hist = np.empty((N + 1, S), dtype=complex)
        rho_hist = np.empty((N + 1, S))
        phi_hist = np.empty((N + 1, S))
        zeta_hist[0] = zr + 1j * zi
        rho_hist[0] = 0.0
        phi_hist[0] = phi
    for n in range(N):
        tn = t[:, n]
        ar = mr * zr - mi * zi
        ai = mr * zi + mi * zr
        log_rho = log_rho + 0.5 * np.log1p(-tn * ai + tn * tn * 0.5 * (1.0 - ar))
        h = 0.5 * tn
        nr = ar - h * ai
        ni = ai + h * (ar - 1.0)
        dr = 1.0 - h * ai
        di = h * (ar - 1.0)
        den = dr * dr + di * di
        zr = (nr * dr + ni * di) / den
        zi = (ni * dr - nr * di) / den
        if (n + 1) % ZETA_RENORM == 0:
            modulus = np.sqrt(zr * zr + zi * zi)
            zr = zr / modulus
            zi = zi / modulus
        if keep:
            psi = phi + kappa
            sp, cp = np.sin(psi), np.cos(psi)
            phi = np.mod(psi + np.arctan2(tn * sp * sp, 1.0 - tn * sp * cp), 2.0 * math.pi)
            zeta_hist[n + 1] = zr + 1j * zi
            rho_hist[n + 1] = log_rho
            phi_hist[n + 1] = phi
    if keep:
        return zeta_hist, rho_hist, phi_hist
    return None, log_rho[None, :], None


def _check_kappa(kappa: float) -> None:
    if not 0.0 < kappa < math.pi or abs(kappa - 0.5 * math.pi) < 1e-12:
        raise ConfigError("kappa must lie in (0, pi) and differ from pi/2")


def _log_abs(value: float) -> float:
    return math.log(abs(value)) if value != 0.0 else -math.inf


def _safe_exp(value: float) -> float:
    try:
        return math.exp(value)
    except OverflowError:
        return math.inf
