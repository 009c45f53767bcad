import numpy as np

import operators
from forms import FlatTorus, ScalarForm
from operators import (BundleModel, build_dirac_flat, build_dirac_magnetic, heat_semigroup, mckean_singer,
                       mult_operator, simplex_operator_integral, spectral_truncation_error, str_op,
                       twist_model)
from utils import LoopIntError, TruncationOverflowError, UnsupportedCombinationError

T2 = FlatTorus(2)
HEAT_TIMES = (0.5, 1.0, 2.0)


def test_mckean_singer_flux():
    for k in (-2, -1, 1, 2):
        m = build_dirac_magnetic(k, levels=40)
        for t in HEAT_TIMES:
            assert abs(mckean_singer(m, t) - k) <= 1e-8


def test_mckean_singer_untwisted():
    m = build_dirac_flat(T2, cutoff=2)
    for t in HEAT_TIMES:
        assert abs(mckean_singer(m, t)) <= 1e-8


def test_model_invariants():
    for m in (build_dirac_flat(T2, cutoff=2), build_dirac_magnetic(1, levels=10), build_dirac_flat(FlatTorus(4), cutoff=1)):
        report = m.check_invariants()
        assert report['ok']
        assert report['min_H_eigenvalue'] > -1e-10


def test_potential_twist_keeps_index():
    a = ScalarForm(T2, {((0,), (0, 1)): 0.25j, ((0,), (0, -1)): 0.25j})
    bundle = BundleModel.trivial(T2, potential=[[a]])
    m = build_dirac_flat(T2, cutoff=2, bundle=bundle)
    assert m.check_invariants()['ok']
    assert abs(mckean_singer(m, 1.0)) <= 1e-8
    twisted = twist_model(build_dirac_flat(T2, cutoff=2), [[a]])
    assert np.allclose(twisted.D, m.D)


def test_potential_outside_cutoff():
    a = ScalarForm(T2, {((0,), (0, 3)): 0.5j, ((0,), (0, -3)): 0.5j})
    try:
        build_dirac_flat(T2, cutoff=2, bundle=BundleModel.trivial(T2, potential=[[a]]))
    except TruncationOverflowError:
        return
    raise AssertionError("超出截断的位势应当报错")


def test_twist_rejects_even_operator():
    m = build_dirac_flat(T2, cutoff=1)
    try:
        twist_model(m, ScalarForm.constant(T2, 1.0))
    except UnsupportedCombinationError:
        return
    raise AssertionError("偶次扭曲项应当报错")


def test_heat_semigroup():
    m = build_dirac_magnetic(1, levels=6)
    assert np.allclose(heat_semigroup(m, 0.0), np.eye(m.dim))
    P = heat_semigroup(m, 0.7)
    assert np.isclose(str_op(m, P), mckean_singer(m, 0.7))
    try:
        heat_semigroup(m, -1.0)
    except LoopIntError:
        return
    raise AssertionError("负时间应当报错")


def test_magnetic_multiplier_constant_only():
    m = build_dirac_magnetic(1, levels=6)
    c = mult_operator(m, ScalarForm.monomial(T2, (0,)))
    assert c.shape == (m.dim, m.dim)
    try:
        mult_operator(m, ScalarForm.monomial(T2, (0,), mode=(1, 0)))
    except UnsupportedCombinationError:
        return
    raise AssertionError("磁模型上的非常系数形式应当报错")


def test_simplex_integral_methods_agree():
    m = build_dirac_magnetic(1, levels=5)
    cx = mult_operator(m, ScalarForm.monomial(T2, (0,)))
    cy = mult_operator(m, ScalarForm.monomial(T2, (1,)))
    exact = simplex_operator_integral(m, [cx, cy], method='expm')
    gauss = simplex_operator_integral(m, [cx, cy], method='gauss', order=12)
    assert abs(exact - gauss) <= 1e-5
    qmc = simplex_operator_integral(m, [cx, cy], method='qmc', n_samples=4096, seed=1)
    assert abs(exact - qmc) <= 5e-2
    # N = 1 时 ∫ Str(e^{−H}) = McKean-Singer
    one = simplex_operator_integral(m, [np.eye(m.dim)])
    assert np.isclose(one, mckean_singer(m, 1.0))


def test_auto_matches_gauss_three_factors():
    m = build_dirac_magnetic(1, levels=5)
    cx = mult_operator(m, ScalarForm.monomial(T2, (0,)))
    cy = mult_operator(m, ScalarForm.monomial(T2, (1,)))
    factors = [cx, cy, cx @ cy]
    auto = simplex_operator_integral(m, factors)
    gauss = simplex_operator_integral(m, factors, method='gauss', order=12)
    assert abs(auto - gauss) <= 1e-4


def test_auto_falls_back_to_quadrature():
    m = build_dirac_magnetic(1, levels=5)
    cx = mult_operator(m, ScalarForm.monomial(T2, (0,)))
    cy = mult_operator(m, ScalarForm.monomial(T2, (1,)))
    saved = operators.EXPM_BLOCK_LIMIT
    operators.EXPM_BLOCK_LIMIT = 0
    try:
        assert simplex_operator_integral(m, [cx, cy], order=6) == \
            simplex_operator_integral(m, [cx, cy], method='gauss', order=6)
        assert simplex_operator_integral(m, [cx, cy, cx], seed=3) == \
            simplex_operator_integral(m, [cx, cy, cx], method='qmc', seed=3)
    finally:
        operators.EXPM_BLOCK_LIMIT = saved


def test_truncation_error_tiny():
    assert spectral_truncation_error(build_dirac_magnetic(1, levels=40)) < 1e-100
    assert spectral_truncation_error(build_dirac_flat(T2, cutoff=2)) < 1e-70


if __name__ == "__main__":
    test_mckean_singer_flux()
    test_mckean_singer_untwisted()
    test_model_invariants()
    test_potential_twist_keeps_index()
    test_potential_outside_cutoff()
    test_twist_rejects_even_operator()
    test_heat_semigroup()
    test_magnetic_multiplier_constant_only()
    test_simplex_integral_methods_agree()
    test_auto_matches_gauss_three_factors()
    test_auto_falls_back_to_quadrature()
    test_truncation_error_tiny()
    print("✅ operators 测试全部通过")
