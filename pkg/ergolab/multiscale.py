"""Criticality witnesses, the scale schedule and the multiscale induction."""

from __future__ import annotations

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ConfigError
from .models import (
    CriticalityWitness,
    EnergySubdivision,
    GreenQuery,
    InductionResult,
    Interval,
    PotentialWindow,
    ScaleSchedule,
    StepOutcome,
    WegnerParams,
)
from .operators import (
    ConsistencyFailure,
    NearSingular,
    Unverifiable,
    WindowTooShort,
    certify_decay,
    first_resonant_end,
    green,
    window,
    window_resonant,
)
from .transfer import transfer_product

Q_MAX = 1_000_000
SCALE_BASE = 100
DEFAULT_GRID = 8
VARIANTS = ("eliminate", "wegner")

_LN2 = math.log(2.0)
_Q_SLACK = 1e-12


class HypothesisViolated(RuntimeError):
    """Raised when a hypothesis of a certification step does not hold."""


class ConditionViolated(HypothesisViolated):
    """Raised when a multiscale step's counting condition fails."""


class InfeasibleScales(HypothesisViolated):
    """Raised when not even the first scale of the schedule is admissible."""


class QCapExceeded(HypothesisViolated):
    """Raised when an energy subdivision would exceed the configured cap."""


class MissingBound(HypothesisViolated):
    """Raised when a Green's function bound needed for a conversion is absent."""


class ReverificationFailure(ConsistencyFailure):
    """Raised when a surviving block fails the direct Green's function check."""


def initlarge_parameters(lam: float, sigma: float, F: float, alpha: float, E0: float) -> Tuple[int, float, Interval]:
    """Block length, decay rate and energy window for large coupling."""

    if lam <= 36.0:
        raise HypothesisViolated(f"large coupling needs lambda > 36, got {lam}")
    K = int(math.floor(sigma * lam ** (alpha / 2.0) / F))
    if K < 1:
        raise HypothesisViolated(f"block length floor(sigma lambda^(alpha/2) / F) = {K} is below 1")
    return K, math.log(lam) / 5.0, (E0 - 1.0, E0 + 1.0)


def classify_blocks(
    potential: PotentialWindow,
    k: Sequence[int],
    delta: float,
    energies: Interval,
    grid: int = DEFAULT_GRID,
    skip: Sequence[int] = (),
) -> Tuple[int, ...]:
    """Indices ``l`` in ``1..L`` whose block fails the ``e^{-delta}/2`` decay check."""

    log_threshold = -_LN2 - delta
    skipped = set(skip)
    bad = []
    for l in range(1, len(k) - 1):
        if l in skipped:
            continue
        try:
            ok = certify_decay(potential, k[l - 1] + 1, k[l + 1] - 1, k[l], log_threshold, energies, grid)
        except Unverifiable as exc:
            logging.debug("block %d unverifiable: %s", l, exc)
            ok = False
        if not ok:
            bad.append(l)
    return tuple(bad)


def initial_criticality(
    potential: PotentialWindow,
    K: int,
    gamma: float,
    energies: Interval,
    sigma: float,
    grid: int = DEFAULT_GRID,
) -> CriticalityWitness:
    """Partition ``k_j = jK`` with ``delta = gamma K``; check ``is_critical`` on the result."""

    if K < 1:
        raise ConfigError("K must be positive")
    if not 0 < sigma <= 0.25:
        raise ConfigError("sigma must lie in (0, 1/4]")
    L = potential.N // K - 1
    if L < 1:
        raise WindowTooShort(f"a window of {potential.N} sites holds no block of length {K}")
    k = tuple(j * K for j in range(L + 2))
    delta = gamma * K
    badset = classify_blocks(potential, k, delta, energies, grid)
    witness = CriticalityWitness(delta=delta, sigma=sigma, L=L, energies=tuple(energies), k=k, badset=badset, grid=grid)
    logging.info("initial criticality: L=%d bad=%d fraction=%.4f", L, len(badset), witness.bad_fraction)
    return witness


def verify_witness(potential: PotentialWindow, witness: CriticalityWitness) -> bool:
    """Re-run the decay checks for every block outside the stored bad set."""

    if not witness.is_critical:
        return False
    failing = classify_blocks(
        potential, witness.k, witness.delta, witness.energies, witness.grid, skip=witness.badset
    )
    return not failing


def product_of_scales(j: int, base: int = SCALE_BASE) -> int:
    return math.prod(base ** (i + 1) for i in range(j + 1))


def scale_schedule(delta: float, sigma: float, L: int, N: int, base: int = SCALE_BASE) -> ScaleSchedule:
    if not 0 < sigma <= 0.25:
        raise ConfigError("sigma must lie in (0, 1/4]")
    if delta <= 0 or L < 1:
        raise ConfigError("delta must be positive and L at least 1")
    if base < 3:
        raise ConfigError("scale base must be at least 3")
    sigmas, deltas, Ls = [sigma], [float(delta)], [int(L)]
    Ms: List[int] = []
    eps: List[float] = []
    Ks: List[int] = []
    j = 0
    while True:
        M = base ** (j + 1)
        if sigmas[j] * Ls[j] < 2 * M:
            break
        Ms.append(M)
        eps.append(3.0 * math.exp(-sigmas[j] * deltas[j]))
        Ks.append(math.ceil(16.0 * N * (M + 1) / (sigmas[j] * Ls[j])))
        deltas.append((1.0 - 2.0 * sigmas[j]) * M * deltas[j])
        Ls.append(Ls[j] // (M + 1))
        sigmas.append(sigmas[j] / 2.0)
        j += 1
    j_max = j - 1
    if j_max < 0:
        raise InfeasibleScales(f"sigma L = {sigma * L:g} is below 2 M_0 = {2 * base}")

    lower = math.exp(-4.0 * sigma)
    products = [product_of_scales(i, base) for i in range(j_max + 1)]
    for i, prod in enumerate(products):
        if base == 100 and prod != 10 ** ((i + 1) * (i + 2)):
            raise ConsistencyFailure(f"product of scales at j={i} is {prod}")
        if prod != math.prod(Ms[: i + 1]):
            raise ConsistencyFailure(f"product of scales at j={i} disagrees with the schedule")
    delta_ok = tuple(deltas[i + 1] >= lower * products[i] * delta for i in range(j_max + 1))
    L_upper = tuple(Ls[i + 1] <= L / products[i] for i in range(j_max + 1))
    L_lower = tuple(Ls[i + 1] >= lower * math.exp(-1.0 / 99.0) * L / products[i] for i in range(j_max + 1))
    if not all(L_upper):
        raise ConsistencyFailure("realized L_j exceeds L / prod(M_k)")
    if not all(delta_ok):
        logging.warning("delta_j lower bracket fails at j=%s", [i for i, ok in enumerate(delta_ok) if not ok])
    logging.info("scale schedule: j_max=%d M=%s", j_max, Ms)
    return ScaleSchedule(
        sigma0=sigma,
        delta0=float(delta),
        L0=int(L),
        N=int(N),
        M=tuple(Ms),
        sigmas=tuple(sigmas),
        deltas=tuple(deltas),
        Ls=tuple(Ls),
        eps=tuple(eps),
        Ks=tuple(Ks),
        j_max=j_max,
        base=base,
        brackets={"delta_lower": delta_ok, "L_upper": L_upper, "L_lower": L_lower},
    )


def subdivide_energy(
    parent: Interval,
    sigma: float,
    delta: float,
    q_max: int = Q_MAX,
    audit: Optional[Sequence[int]] = None,
) -> EnergySubdivision:
    """Split ``parent`` into ``Q = ceil(|parent| e^{sigma delta})`` equal children.

    Beyond ``q_max`` only the ``audit`` children are materialized.
    """

    E0, E1 = float(parent[0]), float(parent[1])
    if E1 < E0:
        raise ConfigError("energy interval must satisfy E0 <= E1")
    x = (E1 - E0) * math.exp(sigma * delta)
    Q = max(1, math.ceil(x - _Q_SLACK * x))
    if Q > q_max:
        if audit is None:
            raise QCapExceeded(f"Q={Q} exceeds the cap {q_max}; select children to audit")
        indices = tuple(sorted({int(q) for q in audit}))
        if not indices or indices[0] < 0 or indices[-1] >= Q:
            raise ConfigError(f"audit indices must lie in [0, {Q - 1}]")
    else:
        indices = tuple(range(Q))
    q = np.asarray(indices, dtype=float)
    left = E0 + (E1 - E0) * (q / Q)
    right = E0 + (E1 - E0) * ((q + 1.0) / Q)
    right[np.asarray(indices) == Q - 1] = E1
    children = tuple((float(a), float(b)) for a, b in zip(left, right))
    return EnergySubdivision(parent=(E0, E1), Q=Q, children=children, indices=indices)


def choose_coarse(witness: CriticalityWitness, M: int) -> Tuple[Tuple[int, ...], int]:
    """Greedy coarse points: each gap holds exactly ``M`` good fine indices."""

    if M < 1:
        raise ConfigError("M must be positive")
    if not witness.is_critical:
        raise ConditionViolated(f"witness is not critical (bad fraction {witness.bad_fraction:.4f})")
    if witness.sigma * witness.L / M < 2:
        raise ConditionViolated(f"sigma L / M = {witness.sigma * witness.L / M:g} is below 2")
    bad = set(witness.badset)
    coarse = [witness.k[0]]
    count = 0
    l = 1
    while l <= witness.L:
        if l not in bad:
            count += 1
            if count == M:
                # k_{l+1} becomes the next coarse point and is not counted again
                coarse.append(witness.k[l + 1])
                count = 0
                l += 2
                continue
        l += 1
    L_new = len(coarse) - 2
    if L_new < 1:
        raise ConditionViolated("fewer than two coarse blocks could be formed")
    return tuple(coarse), L_new


def multiscale_step(
    potential: PotentialWindow,
    witness: CriticalityWitness,
    M: int,
    variant: str = "eliminate",
    q_max: int = Q_MAX,
    audit: Optional[Sequence[int]] = None,
) -> StepOutcome:
    if variant not in VARIANTS:
        raise ConfigError(f"Unknown variant: {variant}")
    sigma, delta, L, N = witness.sigma, witness.delta, witness.L, potential.N
    coarse, L_new = choose_coarse(witness, M)
    if not (1.0 - 2.0 * sigma) * L / (M + 1) <= L_new <= L / (M + 1):
        raise ConsistencyFailure(f"coarse count {L_new} leaves [(1-2 sigma) L/(M+1), L/(M+1)]")
    sigma_new = sigma / 2.0
    delta_new = (1.0 - 2.0 * sigma) * M * delta
    tolerance = 2.0 * math.exp(-sigma * delta)
    stop = min(coarse[-1], N - 1)
    offset = coarse[0]
    diagnostics: Dict[str, object] = {
        "tolerance": tolerance,
        "resolvent_iterations": M,
        "coarse_gaps": [b - a for a, b in zip(coarse, coarse[1:])],
    }
    logging.info("multiscale step (%s): M=%d L=%d -> %d delta=%g -> %g", variant, M, L, L_new, delta, delta_new)

    if variant == "eliminate":
        sub = subdivide_energy(witness.energies, sigma, delta, q_max, audit)
        brackets = [(a - tolerance, b + tolerance) for a, b in sub.children]
        first_end = first_resonant_end(potential.values[offset : stop + 1], brackets)
        resonant = _coarse_resonance(first_end, coarse, L_new, offset, stop)
        q_bound = (2.0**15 / sigma_new) * ((M + 1) * N / (sigma * L)) ** 3
        counts: Dict[int, int] = {}
        eliminated: List[int] = []
        children: List[CriticalityWitness] = []
        for col, (q, child) in enumerate(zip(sub.indices, sub.children)):
            bad_l = tuple(int(l) for l in np.nonzero(resonant[:, col])[0] + 1)
            counts[q] = len(bad_l)
            logging.debug("q=%d resonant blocks=%s", q, bad_l)
            if len(bad_l) > sigma_new * L_new:
                eliminated.append(q)
                continue
            _reverify(potential, coarse, bad_l, delta_new, child, witness.grid)
            children.append(
                CriticalityWitness(
                    delta=delta_new, sigma=sigma_new, L=L_new, energies=child, k=coarse, badset=bad_l, grid=witness.grid
                )
            )
        if len(eliminated) > q_bound:
            raise ConsistencyFailure(f"{len(eliminated)} eliminated children exceed the bound {q_bound:g}")
        diagnostics["audited"] = sub.Q > len(sub.indices)
        return StepOutcome(
            variant=variant,
            M=M,
            delta=delta_new,
            sigma=sigma_new,
            L=L_new,
            coarse=coarse,
            children=tuple(children),
            eliminated=tuple(eliminated),
            resonance_counts=counts,
            Q=sub.Q,
            q_bound=q_bound,
            diagnostics=diagnostics,
        )

    length = wegner_window(N, M, sigma, L)
    limit = sigma / 4.0 * (1.0 - 2.0 * sigma) * L / (M + 1)
    E0, E1 = witness.energies
    first_end = first_resonant_end(potential.values, [(E0 - tolerance, E1 + tolerance)])
    fine_resonant = sum(
        int(window_resonant(first_end, witness.k[l], min(witness.k[l] + length, N - 1))[0])
        for l in range(0, L + 1)
        if witness.k[l] < N
    )
    diagnostics.update({"window_length": length, "resonant_windows": fine_resonant, "limit": limit})
    if fine_resonant > limit:
        raise ConditionViolated(
            f"{fine_resonant} resonant windows of length {length} exceed (sigma/4)(1-2 sigma)L/(M+1) = {limit:g}"
        )
    long_blocks = {l for l in range(1, L_new + 1) if coarse[l + 1] - coarse[l - 1] >= length}
    resonant = _coarse_resonance(first_end, coarse, L_new, 0, stop)
    bad_l = tuple(sorted(long_blocks | {int(l) + 1 for l in np.nonzero(resonant[:, 0])[0]}))
    children = []
    if len(bad_l) <= sigma_new * L_new:
        _reverify(potential, coarse, bad_l, delta_new, witness.energies, witness.grid)
        children.append(
            CriticalityWitness(
                delta=delta_new,
                sigma=sigma_new,
                L=L_new,
                energies=witness.energies,
                k=coarse,
                badset=bad_l,
                grid=witness.grid,
            )
        )
    return StepOutcome(
        variant=variant,
        M=M,
        delta=delta_new,
        sigma=sigma_new,
        L=L_new,
        coarse=coarse,
        children=tuple(children),
        eliminated=(),
        resonance_counts={0: len(bad_l)},
        Q=1,
        q_bound=0.0,
        diagnostics=diagnostics,
    )


def wegner_window(N: int, M: int, sigma: float, L: int) -> int:
    return math.ceil(16.0 * N * (M + 1) / (sigma * L))


def run_induction(
    potential: PotentialWindow,
    witness: CriticalityWitness,
    schedule: ScaleSchedule,
    variant: str = "eliminate",
    q_max: int = Q_MAX,
    audit: Optional[Sequence[int]] = None,
    strict: bool = False,
) -> InductionResult:
    """Run the multiscale steps ``j = 0..j_max`` breadth first over surviving children."""

    if not witness.is_critical:
        raise HypothesisViolated(
            f"initial witness is not critical: bad fraction {witness.bad_fraction:.4f} > sigma {witness.sigma}"
        )
    N = potential.N
    K = witness.k[1] - witness.k[0]
    gamma = witness.delta / K
    hypotheses = induction_hypotheses(witness.delta, witness.sigma, witness.L, N, witness.energies, schedule.M[0])
    main = main_hypotheses(gamma, K, witness.sigma, witness.energies, witness.L)
    hypotheses.update({"asA1": main["asA1"], "asA2": main["asA2"]})
    failing = [name for name, ok in hypotheses.items() if not ok]
    if failing:
        if strict:
            raise HypothesisViolated(f"inductive hypotheses fail: {', '.join(failing)}")
        logging.warning("continuing at demonstration scale; failing hypotheses: %s", ", ".join(failing))

    frontier = [witness]
    steps: List[StepOutcome] = []
    for j in range(schedule.j_max + 1):
        M = schedule.M[j]
        next_frontier: List[CriticalityWitness] = []
        for current in frontier:
            outcome = multiscale_step(potential, current, M, variant, q_max, audit)
            steps.append(outcome)
            next_frontier.extend(outcome.children)
        frontier = next_frontier
        logging.info("scale j=%d: %d surviving energy intervals", j, len(frontier))
        if not frontier:
            break

    surviving = tuple(w.energies for w in frontier)
    width = witness.energies[1] - witness.energies[0]
    fraction = sum(b - a for a, b in surviving) / width if width > 0 else float(bool(surviving))
    if main["asA1"] and main["asA2"] and fraction < main["measure_bound"]:
        raise ConsistencyFailure(
            f"surviving fraction {fraction:.6g} is below 1 - exp(-(8/25) sigma gamma K) = {main['measure_bound']:.6g}"
        )
    return InductionResult(
        surviving=surviving,
        surviving_fraction=fraction,
        certified_rate=main["certified_rate"],
        gamma=gamma,
        K=K,
        hypotheses=hypotheses,
        steps=tuple(steps),
    )


def induction_hypotheses(
    delta: float, sigma: float, L: int, N: int, energies: Interval, M0: int = SCALE_BASE
) -> Dict[str, bool]:
    width = energies[1] - energies[0]
    cond3_lhs = 17 * _LN2 + 12.0 * sigma - 4.0 * math.log(sigma) + 3.0 * math.log(N / L)
    return {
        "cond1": sigma * L / M0 >= 2,
        "cond2": width > 0 and width >= math.exp(-sigma * delta / 25.0),
        "cond3": cond3_lhs <= 8.0 / 25.0 * math.exp(-4.0 * sigma) * sigma * delta,
    }


def main_hypotheses(gamma: float, K: int, sigma: float, energies: Interval, L: int = 1) -> Dict[str, float]:
    width = energies[1] - energies[0]
    gk = gamma * K
    as_a1 = width > 0 and gk >= max(1.0 / sigma, 25.0 / sigma * math.log(1.0 / width))
    as_a2 = 8.0 / 75.0 * sigma * gk - 3.0 * math.log(K) >= 17 * _LN2 + 3.0 - 4.0 * math.log(sigma)
    return {
        "asA1": bool(as_a1),
        "asA2": bool(as_a2),
        "measure_bound": -math.expm1(-8.0 / 25.0 * sigma * gk),
        "certified_rate": math.exp(-8.0 * sigma - 1.0 / 99.0) * gamma - math.sqrt(2.0) / (L * K),
    }


def numresonant_bound(N: int, K0: int, params: WegnerParams, K_j: int, eps_j: float) -> float:
    return 2.0 * N / K0 * params.C * K_j**params.beta / abs(math.log(eps_j)) ** params.rho_exp


def numresonant_count(potential: PotentialWindow, K0: int, K_j: int, E: float, eps_j: float) -> int:
    """Windows ``[l K0, l K0 + K_j]`` that are resonant at the single energy ``E``."""

    N = potential.N
    first_end = first_resonant_end(potential.values, [(E - eps_j, E + eps_j)])
    return sum(
        int(window_resonant(first_end, l * K0, min(l * K0 + K_j, N - 1))[0]) for l in range(N // K0 + 1) if l * K0 < N
    )


def wegner_energy_window(E: float, sigma_j: float, delta_j: float) -> Interval:
    half = 2.0 * math.exp(-sigma_j * delta_j)
    return E - half, E + half


def wegner_theorem_conditions(params: WegnerParams, gamma: float, K: int, sigma: float) -> Dict[str, bool]:
    lhs = params.rho_exp * math.log(gamma) + (params.rho_exp - params.beta) * math.log(K) + (
        params.rho_exp - 1.0
    ) * math.log(sigma)
    rhs = (
        math.log(4.0)
        + (params.beta + params.rho_exp) * _LN2
        + (params.beta + 1.0) * (4.0 * sigma + 1.0 / 99.0)
        + math.log(params.C)
    )
    return {"exponents": params.exponents_ok, "getresonant": lhs >= rhs}


def lyapunov_lower_bound(gamma: float, N: int) -> float:
    return gamma - math.log(math.sqrt(2.0)) / N


def greens_to_lyapunov(potential: PotentialWindow, gamma: float, E: float, N: int, k0: int = 1) -> float:
    """Turn Green's function decay on ``[0, N]`` and ``[1, N]`` into a growth bound.

    The bound is checked against the transfer product over sites ``0..N``.
    """

    if potential.N < N + 1:
        raise WindowTooShort(f"need {N + 1} sites, got {potential.N}")
    if not 1 <= k0 <= N:
        raise ConfigError("k0 must lie in [1, N]")
    threshold = -gamma * N
    for lo in (0, 1):
        op = window(potential, lo, N)
        for k in (k0 - 1, k0):
            if k < lo:
                continue
            try:
                value = green(op, GreenQuery(E=E, x=k, y=N))
            except NearSingular as exc:
                raise MissingBound(str(exc)) from exc
            if value != 0.0 and math.log(abs(value)) > threshold:
                raise MissingBound(f"|G_[{lo},{N}](E, {k}, {N})| = {abs(value):.3g} exceeds exp(-gamma N)")
    bound = lyapunov_lower_bound(gamma, N)
    product = transfer_product(potential, E, N + 1)
    measured = (product.log_scale + math.log(float(np.linalg.norm(product.entries, 2)))) / N
    if measured < bound - 1e-9:
        raise ConsistencyFailure(f"transfer growth {measured:.6g} is below the certified bound {bound:.6g}")
    return bound


def _coarse_resonance(first_end: np.ndarray, coarse: Sequence[int], L_new: int, offset: int, stop: int) -> np.ndarray:
    rows = []
    for l in range(1, L_new + 1):
        a = coarse[l - 1] - offset
        b = min(coarse[l + 1], stop) - offset
        rows.append(window_resonant(first_end, a, b))
    return np.array(rows, dtype=bool).reshape(L_new, first_end.shape[1])


def _reverify(
    potential: PotentialWindow,
    coarse: Sequence[int],
    bad: Sequence[int],
    delta: float,
    energies: Interval,
    grid: int,
) -> None:
    skipped = set(bad)
    log_threshold = -_LN2 - delta
    for l in range(1, len(coarse) - 1):
        if l in skipped:
            continue
        lo, hi = coarse[l - 1] + 1, min(coarse[l + 1] - 1, potential.N - 1)
        try:
            ok = certify_decay(potential, lo, hi, coarse[l], log_threshold, energies, grid)
        except Unverifiable as exc:
            raise ReverificationFailure(f"block {l} on {energies}: {exc}") from exc
        if not ok:
            raise ReverificationFailure(f"block {l} on {energies} fails |G| <= exp(-{delta:g})/2")
