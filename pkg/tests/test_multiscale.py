import math

import numpy as np

from ergolab import multiscale
from ergolab.config import ConfigError
from ergolab.dynamics import make_function, make_system, potential
from ergolab.models import CriticalityWitness, PotentialWindow, WegnerParams

GAMMA = math.log(100.0) / 5.0


def _bernoulli_window(N=50, lam=100.0):
    system = make_system("iid", law="bernoulli", seed=0)
    return potential(system, make_function("coordinate"), lam, 0, N)


def _witness(badset=(), L=24, K=2):
    k = tuple(j * K for j in range(L + 2))
    return CriticalityWitness(delta=GAMMA * K, sigma=0.25, L=L, energies=(-1.0, 1.0), k=k, badset=tuple(badset))


def test_product_of_scales_identity():
    for j in range(7):
        assert multiscale.product_of_scales(j) == 10 ** ((j + 1) * (j + 2))


def test_scale_schedule_stops_at_first_infeasible_scale():
    schedule = multiscale.scale_schedule(2.0, 0.25, 1_000_000, 2_000_000)
    assert schedule.j_max == 0
    assert schedule.M == (100,)
    assert schedule.Ls == (1_000_000, 9900)
    assert schedule.sigmas == (0.25, 0.125)
    assert schedule.deltas[1] == 0.5 * 100 * 2.0
    assert all(schedule.brackets["L_upper"])
    assert all(schedule.brackets["delta_lower"])


def test_scale_schedule_infeasible():
    try:
        multiscale.scale_schedule(2.0, 0.25, 10, 100)
    except multiscale.InfeasibleScales:
        pass
    else:
        raise AssertionError("Expected InfeasibleScales")
    assert issubclass(multiscale.InfeasibleScales, multiscale.HypothesisViolated)


def test_subdivide_energy_tiles_parent():
    sub = multiscale.subdivide_energy((0.0, 1.0), 1.0, math.log(10.0))
    assert sub.Q == 10
    assert len(sub.children) == 10
    assert sub.children[0][0] == 0.0
    assert sub.children[-1][1] == 1.0
    for left, right in zip(sub.children, sub.children[1:]):
        assert left[1] == right[0]


def test_subdivide_energy_cap_and_audit():
    try:
        multiscale.subdivide_energy((0.0, 1.0), 1.0, math.log(10.0), q_max=5)
    except multiscale.QCapExceeded:
        pass
    else:
        raise AssertionError("Expected QCapExceeded")

    sub = multiscale.subdivide_energy((0.0, 1.0), 1.0, math.log(10.0), q_max=5, audit=[9, 0])
    assert sub.Q == 10
    assert sub.indices == (0, 9)
    assert sub.children[1] == (0.9, 1.0)

    try:
        multiscale.subdivide_energy((0.0, 1.0), 1.0, math.log(10.0), q_max=5, audit=[10])
    except ConfigError:
        pass
    else:
        raise AssertionError("Expected ConfigError for an audit index outside [0, Q)")


def test_choose_coarse_without_bad_blocks():
    coarse, L_new = multiscale.choose_coarse(_witness(), 3)
    assert coarse == (0, 8, 16, 24, 32, 40, 48)
    assert L_new == 5


def test_choose_coarse_counts_good_indices_per_gap():
    witness = _witness(badset=(2, 11))
    coarse, L_new = multiscale.choose_coarse(witness, 3)
    assert list(coarse) == sorted(set(coarse))
    fine = {value: l for l, value in enumerate(witness.k)}
    for left, right in zip(coarse, coarse[1:]):
        inside = [l for l in range(fine[left] + 1, fine[right]) if l not in witness.badset]
        assert len(inside) == 3
    assert L_new == len(coarse) - 2


def test_choose_coarse_conditions():
    cases = [
        (lambda: multiscale.choose_coarse(_witness(), 4), multiscale.ConditionViolated),
        (lambda: multiscale.choose_coarse(_witness(badset=range(1, 8)), 3), multiscale.ConditionViolated),
        (lambda: multiscale.choose_coarse(_witness(), 0), ConfigError),
    ]
    for case, error in cases:
        try:
            case()
        except error:
            pass
        else:
            raise AssertionError(f"Expected {error.__name__}")


def test_initlarge_parameters():
    K, gamma, energies = multiscale.initlarge_parameters(100.0, 0.25, 1.0, 1.0, 0.0)
    assert K == 2
    assert math.isclose(gamma, GAMMA)
    assert energies == (-1.0, 1.0)

    try:
        multiscale.initlarge_parameters(36.0, 0.25, 1.0, 1.0, 0.0)
    except multiscale.HypothesisViolated:
        pass
    else:
        raise AssertionError("Expected HypothesisViolated for lambda <= 36")


def test_large_coupling_witness_is_critical_and_replayable():
    window = _bernoulli_window()
    witness = multiscale.initial_criticality(window, 2, GAMMA, (-1.0, 1.0), 0.25)
    assert witness.L == 24
    assert witness.k[:3] == (0, 2, 4)
    assert witness.badset == ()
    assert witness.is_critical
    assert multiscale.verify_witness(window, witness)


def test_eliminate_step_keeps_every_child_at_large_coupling():
    window = _bernoulli_window()
    witness = multiscale.initial_criticality(window, 2, GAMMA, (-1.0, 1.0), 0.25)
    outcome = multiscale.multiscale_step(window, witness, 3)
    assert outcome.Q == 4
    assert outcome.eliminated == ()
    assert len(outcome.children) == 4
    assert outcome.L == 5
    assert math.isclose(outcome.delta, 0.5 * 3 * witness.delta)
    assert all(child.sigma == 0.125 for child in outcome.children)
    assert set(outcome.resonance_counts.values()) == {0}


def test_wegner_step_keeps_the_whole_interval():
    window = _bernoulli_window()
    witness = multiscale.initial_criticality(window, 2, GAMMA, (-1.0, 1.0), 0.25)
    outcome = multiscale.multiscale_step(window, witness, 3, variant="wegner")
    assert len(outcome.children) == 1
    assert outcome.children[0].energies == (-1.0, 1.0)
    assert outcome.diagnostics["resonant_windows"] == 0


def test_run_induction_at_demonstration_scale():
    window = _bernoulli_window()
    witness = multiscale.initial_criticality(window, 2, GAMMA, (-1.0, 1.0), 0.25)
    schedule = multiscale.scale_schedule(witness.delta, 0.25, witness.L, window.N, base=3)
    assert schedule.j_max == 0

    result = multiscale.run_induction(window, witness, schedule)
    assert abs(result.surviving_fraction - 1.0) < 1e-12
    assert len(result.surviving) == 4
    assert result.K == 2
    assert not all(result.hypotheses.values())

    try:
        multiscale.run_induction(window, witness, schedule, strict=True)
    except multiscale.HypothesisViolated:
        pass
    else:
        raise AssertionError("Expected HypothesisViolated in strict mode")


def test_free_potential_is_not_critical():
    free = PotentialWindow(values=np.zeros(50), coupling=0.0)
    witness = multiscale.initial_criticality(free, 2, GAMMA, (-1.0, 1.0), 0.25)
    assert not witness.is_critical
    assert not multiscale.verify_witness(free, witness)
    schedule = multiscale.scale_schedule(witness.delta, 0.25, witness.L, free.N, base=3)
    try:
        multiscale.run_induction(free, witness, schedule)
    except multiscale.HypothesisViolated:
        pass
    else:
        raise AssertionError("Expected HypothesisViolated for a non-critical witness")


def test_greens_to_lyapunov():
    free = PotentialWindow(values=np.zeros(12), coupling=0.0)
    try:
        multiscale.greens_to_lyapunov(free, 1.0, 0.5, 10)
    except multiscale.MissingBound:
        pass
    else:
        raise AssertionError("Expected MissingBound without Green's function decay")

    bound = multiscale.greens_to_lyapunov(_bernoulli_window(), GAMMA, 0.0, 20)
    assert math.isclose(bound, GAMMA - math.log(math.sqrt(2.0)) / 20)
    assert math.isclose(multiscale.lyapunov_lower_bound(0.1, 1000), 0.1 - math.log(math.sqrt(2.0)) / 1000)


def test_wegner_parameters_and_resonance_counts():
    assert WegnerParams(C=1.0, beta=0.0, rho_exp=3.0).exponents_ok
    assert not WegnerParams(C=1.0, beta=0.0, rho_exp=1.0).exponents_ok
    conditions = multiscale.wegner_theorem_conditions(WegnerParams(1.0, 0.0, 3.0), GAMMA, 2, 0.25)
    assert conditions["exponents"]
    assert set(conditions) == {"exponents", "getresonant"}

    params = WegnerParams(C=1.0, beta=0.0, rho_exp=1.0)
    assert math.isclose(multiscale.numresonant_bound(100, 2, params, 10, math.exp(-2.0)), 50.0)
    assert multiscale.numresonant_count(_bernoulli_window(), 2, 10, 0.0, 0.1) == 0
    free = PotentialWindow(values=np.zeros(20), coupling=0.0)
    assert multiscale.numresonant_count(free, 2, 10, 0.0, 0.1) == 10

    lo, hi = multiscale.wegner_energy_window(0.5, 0.25, 4.0)
    assert math.isclose(hi - lo, 4.0 * math.exp(-1.0))


def test_classify_blocks_respects_skip():
    window = _bernoulli_window()
    k = tuple(j * 2 for j in range(26))
    assert multiscale.classify_blocks(window, k, GAMMA * 2, (-1.0, 1.0)) == ()

    free = PotentialWindow(values=np.zeros(50), coupling=0.0)
    assert multiscale.classify_blocks(free, k, GAMMA * 2, (-1.0, 1.0), skip=range(1, 25)) == ()


def test_main_and_induction_hypotheses():
    report = multiscale.main_hypotheses(GAMMA, 2, 0.25, (-1.0, 1.0), L=24)
    assert report["asA1"] is False
    assert 0.0 < report["measure_bound"] < 1.0
    expected = math.exp(-2.0 - 1.0 / 99.0) * GAMMA - math.sqrt(2.0) / 48.0
    assert math.isclose(report["certified_rate"], expected)

    hypotheses = multiscale.induction_hypotheses(GAMMA * 2, 0.25, 24, 50, (-1.0, 1.0), M0=3)
    assert hypotheses == {"cond1": True, "cond2": True, "cond3": False}
