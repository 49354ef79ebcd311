import math

import numpy as np

from ergolab import operators
from ergolab.models import GreenQuery, PotentialWindow


def _window(values):
    return PotentialWindow(values=np.asarray(values, dtype=float), coupling=1.0)


def _matrix(diagonal, E=0.0):
    d = np.asarray(diagonal, dtype=float)
    return np.diag(d - E) + np.diag(np.ones(d.size - 1), 1) + np.diag(np.ones(d.size - 1), -1)


def test_free_eigenvalues():
    op = operators.window(_window(np.zeros(3)), 0, 2)
    assert np.allclose(operators.eigenvalues(op), [-math.sqrt(2.0), 0.0, math.sqrt(2.0)])
    assert operators.eigen_count_below(op, 0.0) == 1

    op = operators.window(_window(np.zeros(50)), 0, 49)
    expected = np.sort(2.0 * np.cos(np.pi * np.arange(1, 51) / 51.0))
    assert np.allclose(operators.eigenvalues(op), expected)


def test_window_outside_potential_raises():
    try:
        operators.window(_window(np.zeros(4)), 2, 4)
    except operators.WindowTooShort:
        pass
    else:
        raise AssertionError("Expected WindowTooShort")


def test_sturm_counts_match_dense_eigenvalues():
    rng = np.random.default_rng(0)
    diagonals = rng.uniform(-3.0, 3.0, size=(6, 12))
    energies = np.linspace(-4.5, 4.5, 19)
    counts = operators.sturm_counts(diagonals, energies)
    for row, d in enumerate(diagonals):
        eigs = np.linalg.eigvalsh(_matrix(d))
        assert list(counts[row]) == [int(np.sum(eigs < E)) for E in energies]


def test_green_matches_dense_inverse():
    rng = np.random.default_rng(1)
    values = rng.uniform(-2.0, 2.0, 8)
    op = operators.window(_window(values), 2, 7)
    inverse = np.linalg.inv(_matrix(values[2:8], 0.3))
    for x, y in ((2, 7), (4, 4), (6, 3)):
        value = operators.green(op, GreenQuery(E=0.3, x=x, y=y))
        assert math.isclose(value, inverse[x - 2, y - 2], rel_tol=1e-9, abs_tol=1e-12)
    assert operators.green(op, GreenQuery(E=0.3, x=3, y=6)) == operators.green(op, GreenQuery(E=0.3, x=6, y=3))


def test_green_small_cases():
    op = operators.window(_window([3.0, 2.0]), 0, 1)
    assert math.isclose(operators.green(op, GreenQuery(E=0.0, x=0, y=1)), -0.2)

    op = operators.window(_window([2.5]), 0, 0)
    assert math.isclose(operators.green(op, GreenQuery(E=0.5, x=0, y=0)), 0.5)


def _bernoulli_diagonal(N=300, size=5.0):
    return size * np.random.default_rng(3).choice([-1.0, 1.0], N)


def test_green_corner_entry_agrees_with_determinants():
    values = _bernoulli_diagonal()
    op = operators.window(_window(values), 0, 299)
    value = operators.green(op, GreenQuery(E=0.3, x=0, y=299))
    sign, logabs = operators.green_log(values, np.array([0.3]), 0, 299)
    assert 0.0 < abs(value) < 1e-100
    assert math.isclose(value, sign[0] * math.exp(logabs[0]), rel_tol=1e-12)


def test_green_rejects_disagreement_in_tiny_entries(monkeypatch):
    op = operators.window(_window(_bernoulli_diagonal()), 0, 299)
    solve = operators._solve_column
    monkeypatch.setattr(operators, "_solve_column", lambda d, E, y: solve(d, E, y) + 1e-20)
    try:
        operators.green(op, GreenQuery(E=0.3, x=0, y=299))
    except operators.ConsistencyFailure:
        pass
    else:
        raise AssertionError("Expected ConsistencyFailure for a corner entry off by 1e-20")


def test_green_at_an_eigenvalue_is_near_singular():
    op = operators.window(_window(np.zeros(3)), 0, 2)
    try:
        operators.green(op, GreenQuery(E=0.0, x=0, y=2))
    except operators.NearSingular:
        pass
    else:
        raise AssertionError("Expected NearSingular at an eigenvalue")


def test_spectral_distance_and_resolvent_norm():
    op = operators.window(_window(np.zeros(3)), 0, 2)
    assert abs(operators.spectral_distance(op, 1.0) - (math.sqrt(2.0) - 1.0)) < 1e-10
    assert math.isclose(operators.resolvent_norm(op, 1.0), 1.0 / (math.sqrt(2.0) - 1.0), rel_tol=1e-9)


def test_is_resonant_reports_shortest_witness():
    potential = _window(np.zeros(3))
    resonant, witness = operators.is_resonant(potential, (0, 2), (0.9, 1.1), 0.05)
    assert resonant
    assert witness.interval == (0, 1)
    assert math.isclose(witness.eigenvalue, 1.0)
    assert math.isclose(witness.bracket[0], 0.85)
    assert math.isclose(witness.bracket[1], 1.15)

    resonant, witness = operators.is_resonant(potential, (0, 2), (0.3, 0.4), 0.05)
    assert not resonant
    assert witness is None

    try:
        operators.is_resonant(potential, (0, 2), (0.3, 0.4), 0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("Expected ValueError for eps <= 0")


def _brute_first_end(values, lo, hi):
    n = len(values)
    out = np.full(n, n)
    for a in range(n):
        for b in range(a, n):
            eigs = np.linalg.eigvalsh(_matrix(values[a : b + 1]))
            if np.any((eigs >= lo) & (eigs <= hi)):
                out[a] = b
                break
    return out


def test_resonance_search_agrees_with_brute_force():
    rng = np.random.default_rng(2)
    values = 2.0 * rng.uniform(-1.0, 1.0, 9)
    brackets = [(0.2, 0.5), (-1.0, -0.9), (5.0, 6.0)]
    first_end = operators.first_resonant_end(values, brackets)
    for j, (lo, hi) in enumerate(brackets):
        assert list(first_end[:, j]) == list(_brute_first_end(values, lo, hi))

    potential = _window(values)
    resonant, _ = operators.is_resonant(potential, (1, 7), (0.3, 0.4), 0.1)
    brute = _brute_first_end(values[1:8], 0.2, 0.5)
    assert resonant == bool(np.any(brute < 7))


def test_combes_thomas_constants():
    gamma, K = operators.combes_thomas(0.4)
    assert math.isclose(gamma, 0.5 * math.log(1.1))
    assert abs(gamma - 0.0476551) < 1e-6
    assert abs(K - 25.264) < 1e-2

    _, K = operators.combes_thomas(4.0)
    assert K < 0

    try:
        operators.combes_thomas(0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("Expected ValueError for delta <= 0")


def test_combes_thomas_bound_holds_at_large_coupling():
    rng = np.random.default_rng(3)
    values = 100.0 * (2.0 * rng.integers(0, 2, 20) - 1.0)
    op = operators.window(_window(values), 0, 19)
    assert operators.combes_thomas_ratio(op, 0.0, 4.0) <= 1.0


def test_hadamard_bound_dominates_resolvent_norm():
    rng = np.random.default_rng(4)
    values = rng.uniform(-3.0, 3.0, 10)
    op = operators.window(_window(values), 0, 9)
    for E in (-1.3, 0.2, 2.7):
        assert math.log(operators.resolvent_norm(op, E)) <= operators.log_hadamard_resolvent_bound(op, E)


def test_is_good_cases():
    free = _window(np.zeros(60))
    assert not operators.is_good(free, 30, 25, 0.1, (0.4, 0.6))

    strong = _window([50.0, -60.0, 70.0, -80.0, 90.0])
    assert operators.is_good(strong, 2, 2, math.log(100.0) / 5.0, (-1.0, 1.0))
    assert not operators.is_good(strong, 2, 1, 50.0, (-1.0, 1.0))

    try:
        operators.is_good(strong, 1, 2, 1.0, (-1.0, 1.0))
    except operators.WindowTooShort:
        pass
    else:
        raise AssertionError("Expected WindowTooShort for a window leaving the potential")
