import math

import numpy as np

from ergolab import ids
from ergolab.config import ConfigError
from ergolab.dynamics import make_function, make_system, potential_batch, sample_omega
from ergolab.models import PotentialWindow, WegnerParams
from ergolab.operators import spectral_distance, window


def test_free_ids_counts_eigenvalues_below():
    system = make_system("rotation")
    table = ids.ids(system, make_function("cosine"), 0.0, 3, [-3.0, 0.0, 3.0], samples=4)
    assert np.allclose(table.values, [0.0, 1.0 / 3.0, 1.0])
    assert not np.any(table.stderr)
    assert table.samples == 4
    assert table.M == 3


def test_ids_is_monotone_and_bounded():
    system = make_system("iid", seed=4)
    grid = np.linspace(-3.0, 3.0, 25)
    table = ids.ids(system, make_function("coordinate"), 1.0, 20, grid, samples=200)
    assert np.all(np.diff(table.values) >= 0.0)
    assert table.values[0] == 0.0
    assert table.values[-1] == 1.0
    assert np.all(table.stderr >= 0.0)


def test_ids_rejects_bad_arguments():
    system = make_system("iid")
    f = make_function("coordinate")
    for args in ((0, [0.0], 4), (3, [1.0, 0.0], 4), (3, [0.0], 0)):
        try:
            ids.ids(system, f, 1.0, *args)
        except ConfigError:
            pass
        else:
            raise AssertionError(f"Expected ConfigError for {args}")


def test_ids_counts_do_not_depend_on_trial_grouping():
    system = make_system("iid", law="bernoulli", seed=1)
    f = make_function("coordinate")
    grid = [-1.0, 0.0, 1.0]
    together = ids.ids_counts(system, f, 2.0, 6, grid, range(10))
    split = np.vstack([ids.ids_counts(system, f, 2.0, 6, grid, chunk) for chunk in (range(4), range(4, 10))])
    assert np.array_equal(together, split)


def test_wegner_probability_free_cases():
    system = make_system("rotation")
    f = make_function("cosine")
    assert ids.wegner_probability(system, f, 0.0, 3, 0.0, 0.01, samples=8) == 1.0
    assert ids.wegner_probability(system, f, 0.0, 3, 0.5, 0.01, samples=8) == 0.0

    try:
        ids.wegner_probability(system, f, 0.0, 3, 0.5, 0.0, samples=8)
    except ConfigError:
        pass
    else:
        raise AssertionError("Expected ConfigError for eps <= 0")


def test_wegner_probability_agrees_with_spectral_distance():
    system = make_system("iid", seed=6)
    f = make_function("coordinate")
    samples, M, E, eps = 300, 8, 0.3, 0.05
    probability = ids.wegner_probability(system, f, 1.0, M, E, eps, samples)
    rows = potential_batch(system, f, 1.0, range(samples), M)
    oracle = np.mean(
        [spectral_distance(window(PotentialWindow(values=row, coupling=1.0), 0, M - 1), E) <= eps for row in rows]
    )
    assert abs(probability - oracle) <= 1.0 / samples


def test_bound_formulas():
    assert math.isclose(ids.loghoelder_constant(1.0, 1.0), math.exp(-1.0))
    assert math.isclose(ids.toy_wegner_bound(1.0, 20, 2e-3), 5.6)
    assert math.isclose(ids.toy_wegner_bound(2.0, 20, 2e-5), 0.056)
    assert math.isclose(ids.toy_wegner_bound(0.5, 20, 2e-5), 0.112)

    params = WegnerParams(C=1.0, beta=0.0, rho_exp=1.0)
    assert math.isclose(ids.wegner_to_resonance_bound(params, 10, math.exp(-10.0)), 10.0)
    params = WegnerParams(C=2.0, beta=1.0, rho_exp=2.0)
    assert math.isclose(ids.wegner_to_resonance_bound(params, 2, math.exp(-4.0)), 1.0)
    for eps in (0.0, 0.5):
        try:
            ids.wegner_to_resonance_bound(params, 2, eps)
        except ConfigError:
            pass
        else:
            raise AssertionError(f"Expected ConfigError for eps={eps}")


def test_skew_shift_wegner_check_passes_at_moderate_coupling():
    report = ids.skewshift_wegner_check(0.5, make_system("skew-shift").alpha, 3, 20, [1e-5], [-1.0, 0.0, 1.0], 2000)
    assert report["violations"] == []
    assert report["samples"] == 2000
    assert len(report["rows"]) == 3
    assert all(row["toy_ok"] and row["skew_ok"] for row in report["rows"])
    assert math.isclose(report["loghoelder_C"], math.exp(-1.0))

    try:
        ids.skewshift_wegner_check(0.5, 0.3, 3, 9, [1e-5], [0.0], 10)
    except ConfigError:
        pass
    else:
        raise AssertionError("Expected ConfigError for N < 10")


def test_rank_one_change_moves_counts_by_at_most_one():
    rng = np.random.default_rng(7)
    values = rng.uniform(-2.0, 2.0, 30)
    energies = np.linspace(-4.0, 4.0, 81)
    gap = ids.rank_one_count_gap(PotentialWindow(values=values, coupling=2.0), 11, 5.0, energies)
    assert gap <= 1


def test_one_wrap_of_the_skew_shift_is_rank_one():
    system = make_system("skew-shift", dimension=2, seed=0)
    f = make_function("linear-centered")
    omega = np.asarray(sample_omega(system, 0))
    gap = ids.skew_shift_one_wrap_gap(system, f, 0.5, omega, 20, np.linspace(-3.0, 3.0, 31))
    assert gap <= 1

    try:
        ids.skew_shift_one_wrap_gap(make_system("rotation"), f, 0.5, 0.1, 20, [0.0])
    except ConfigError:
        pass
    else:
        raise AssertionError("Expected ConfigError outside the skew-shift")


def test_skew_wegner_bound_value():
    assert math.isclose(ids.skew_wegner_bound(1.0, 2, math.exp(-2.0), 1.0), 112.0)
    assert ids.skew_wegner_bound(0.5, 2, math.exp(-2.0), 1.0) > ids.skew_wegner_bound(1.0, 2, math.exp(-2.0), 1.0)


def test_subinterval_resonance_frequency_for_the_free_operator():
    system = make_system("iid", seed=1)
    f = make_function("coordinate")
    assert ids.subinterval_resonance_frequency(system, f, 0.0, 3, 0.0, 0.1, samples=5) == 1.0
    assert ids.subinterval_resonance_frequency(system, f, 0.0, 3, 1.5, 0.01, samples=5) == 0.0


def test_skewshift_report_uses_the_given_holder_exponent():
    counts = {"increments": np.zeros((4, 1, 1)), "near": np.zeros((4, 1, 1), dtype=bool)}
    report = ids.skewshift_report(counts, 0.5, 20, [1e-5], [0.0], rho=1.0, holder_alpha=0.5)
    assert report["holder_alpha"] == 0.5
    assert math.isclose(report["loghoelder_C"], 2.0 * math.exp(-1.0))
    assert report["violations"] == []
