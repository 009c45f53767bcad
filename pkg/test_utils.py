import json
import math

import numpy as np

from utils import (ConfigError, LoopIntError, compositions_one_two, cumulative_integral, dumps_report,
                   permutation_sign, rng_stream, signed_permutations, simplex_gauss_rule, simplex_qmc_rule,
                   sort_with_sign, stable_hash)


def test_error_hierarchy():
    assert issubclass(ConfigError, LoopIntError)
    assert issubclass(LoopIntError, ValueError)


def test_permutation_signs():
    assert permutation_sign([0, 1, 2]) == 1
    assert permutation_sign([1, 0, 2]) == -1
    assert permutation_sign([1, 2, 0]) == 1
    assert sum(s for s, _ in signed_permutations(4)) == 0
    assert sort_with_sign((2, 0, 1)) == (1, (0, 1, 2))
    assert sort_with_sign((1, 0)) == (-1, (0, 1))
    assert sort_with_sign((1, 1)) == (0, ())


def test_compositions():
    assert compositions_one_two(0) == [[0]]
    assert compositions_one_two(3) == [[0, 1, 2, 3], [0, 1, 3], [0, 2, 3]]
    # 斐波那契计数
    assert len(compositions_one_two(6)) == 13


def test_simplex_rules():
    for dim in (1, 2, 3, 4):
        points, weights = simplex_gauss_rule(dim, 6)
        assert np.isclose(weights.sum(), 1.0 / math.factorial(dim))
        assert np.all(np.diff(points, axis=1) >= 0)
        # ∫_Δ τ_dim = dim/(dim+1)!
        assert np.isclose(weights @ points[:, -1], dim / math.factorial(dim + 1))
        qpts, qw = simplex_qmc_rule(dim, 1024, seed=1)
        assert np.isclose(qw.sum(), 1.0 / math.factorial(dim))
        assert np.all(np.diff(qpts, axis=1) >= 0)


def test_rng_stream_independent_of_order():
    a = rng_stream(42, 7).normal(size=3)
    rng_stream(42, 3).normal(size=100)
    b = rng_stream(42, 7).normal(size=3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, rng_stream(42, 8).normal(size=3))


def test_cumulative_integral():
    grid = np.linspace(0, 1, 101)
    values = np.exp(1j * grid)
    out = cumulative_integral(values, grid)
    assert out[0] == 0
    assert np.isclose(out[-1], (np.exp(1j) - 1) / 1j, atol=1e-8)


def test_report_is_deterministic():
    payload = {'b': 1 + 2j, 'a': np.arange(3), 'c': np.float64(0.5)}
    text = dumps_report(payload)
    assert text == dumps_report(dict(reversed(list(payload.items()))))
    assert json.loads(text)['b'] == [1.0, 2.0]
    assert stable_hash(payload) == stable_hash(dict(payload))


if __name__ == "__main__":
    test_error_hierarchy()
    test_permutation_signs()
    test_compositions()
    test_simplex_rules()
    test_rng_stream_independent_of_order()
    test_cumulative_integral()
    test_report_is_deterministic()
    print("✅ utils 测试全部通过")
