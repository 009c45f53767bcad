import numpy as np

from forms import (FlatTorus, ScalarForm, TForm, a_hat, chern_weil_ch, d_T, dumps_form, exterior_d,
                   integrate_top, loads_form, tform_product, wedge)
from utils import InvalidDegreeError, NonSkewError, TruncationOverflowError

T2 = FlatTorus(2)
T4 = FlatTorus(4)


def _random_form(base, rng, degree, terms=3, cutoff=3):
    coeffs = {}
    for _ in range(terms):
        idx = tuple(sorted(rng.choice(base.n, size=degree, replace=False)))
        mode = tuple(int(m) for m in rng.integers(-1, 2, size=base.n))
        coeffs[(idx, mode)] = complex(rng.normal(), rng.normal())
    return ScalarForm(base, coeffs, cutoff=cutoff)


def test_d_squared_zero():
    rng = np.random.default_rng(1)
    for degree in range(3):
        a = _random_form(T4, rng, degree)
        assert exterior_d(exterior_d(a)).is_zero(1e-10)


def test_d_T_squared_zero():
    rng = np.random.default_rng(2)
    for p in range(1, 4):
        v = TForm(_random_form(T4, rng, p), _random_form(T4, rng, p - 1), degree=p)
        assert d_T(d_T(v)).is_zero(1e-10)


def test_wedge_graded_commutative():
    dx = ScalarForm.monomial(T2, (0,))
    dy = ScalarForm.monomial(T2, (1,))
    assert (wedge(dx, dy) + wedge(dy, dx)).is_zero()
    assert wedge(dx, dx).is_zero()
    # 乱序指标自动带符号
    assert (ScalarForm.monomial(T2, (1, 0)) + wedge(dx, dy)).is_zero()


def test_exterior_d_of_mode():
    f = ScalarForm.monomial(T2, (), mode=(1, 0))
    df = exterior_d(f)
    assert np.isclose(df.coeffs[((0,), (1, 0))], 2j * np.pi)
    # 仿射部分: d(x_1 dx^2) = dx^1∧dx^2
    g = ScalarForm.affine(T2, (1,), 0, coef=1.0)
    assert np.isclose(integrate_top(exterior_d(g)), 1.0)


def test_evaluate_determinant_convention():
    vol = ScalarForm.monomial(T2, (0, 1), coef=1.0)
    value = vol.evaluate(np.array([0.2, 0.7]), [np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    assert np.isclose(value, 1.0)
    swapped = vol.evaluate(np.array([0.2, 0.7]), [np.array([0.0, 1.0]), np.array([1.0, 0.0])])
    assert np.isclose(swapped, -1.0)


def test_chern_weil_flux():
    for k in (-2, -1, 1, 2):
        R = [[ScalarForm.monomial(T2, (0, 1), coef=2j * np.pi * k)]]
        ch = chern_weil_ch(R, rank=1)
        assert np.isclose(integrate_top(ch) / (2 * np.pi), k)


def test_a_hat_flat_is_one():
    zero = ScalarForm.zero(T4)
    ahat = a_hat([[zero] * 4 for _ in range(4)])
    assert np.isclose(ahat.coeffs[((), (0, 0, 0, 0))], 1.0)
    assert len(ahat.coeffs) == 1


def test_a_hat_rejects_non_skew():
    one = ScalarForm.monomial(T4, (0, 1))
    zero = ScalarForm.zero(T4)
    try:
        a_hat([[one, zero], [zero, zero]])
    except NonSkewError:
        return
    raise AssertionError("非反对称曲率应当报错")


def test_truncation_and_degree_errors():
    try:
        ScalarForm.monomial(T2, (0,), mode=(5, 0), cutoff=4)
    except TruncationOverflowError:
        pass
    else:
        raise AssertionError("超出截断应当报错")
    try:
        TForm(ScalarForm.monomial(T2, (0,)), ScalarForm.monomial(T2, (0,)), degree=1)
    except InvalidDegreeError:
        pass
    else:
        raise AssertionError("次数标注不符应当报错")


def test_tform_product_degree():
    a = TForm(ScalarForm.monomial(T2, (0,)), ScalarForm.constant(T2, 1.0), degree=1)
    b = TForm(ScalarForm.monomial(T2, (1,)), ScalarForm.constant(T2, 2.0), degree=1)
    ab = tform_product(a, b)
    assert ab.degree == 2
    # (dx + dt)(dy + 2dt) 的 dt 分量为 −2dx + dy
    assert np.isclose(ab.dprime.coeffs[((0,), (0, 0))], -2.0)
    assert np.isclose(ab.dprime.coeffs[((1,), (0, 0))], 1.0)


def test_serialization_roundtrip():
    rng = np.random.default_rng(3)
    v = TForm(_random_form(T2, rng, 2), _random_form(T2, rng, 1), degree=2)
    w = loads_form(dumps_form(v))
    assert (w - v).is_zero()
    assert w.degree == 2


if __name__ == "__main__":
    test_d_squared_zero()
    test_d_T_squared_zero()
    test_wedge_graded_commutative()
    test_exterior_d_of_mode()
    test_evaluate_determinant_convention()
    test_chern_weil_flux()
    test_a_hat_flat_is_one()
    test_a_hat_rejects_non_skew()
    test_truncation_and_degree_errors()
    test_tform_product_degree()
    test_serialization_roundtrip()
    print("✅ forms 测试全部通过")
