import numpy as np

from clifford import STR_NORMALIZER, build_spinor_rep, clifford_mult, supertrace
from utils import DimensionMismatchError, UnsupportedDimensionError


def test_clifford_relations():
    for n in (2, 4, 6, 8):
        rep = build_spinor_rep(n)
        eye = np.eye(rep.dim)
        for i in range(n):
            for j in range(n):
                anti = rep.gamma[i] @ rep.gamma[j] + rep.gamma[j] @ rep.gamma[i]
                expected = -2.0 * eye if i == j else 0.0 * eye
                assert np.allclose(anti, expected, atol=1e-14)
            # γ 反自伴，且与分次算子反交换
            assert np.allclose(rep.gamma[i].conj().T, -rep.gamma[i])
            assert np.allclose(rep.grading @ rep.gamma[i], -rep.gamma[i] @ rep.grading)


def test_unsupported_dimensions():
    for n in (0, 1, 3, 10):
        try:
            build_spinor_rep(n)
        except UnsupportedDimensionError:
            continue
        raise AssertionError(f"n={n} 应当报错")


def test_supertrace_values():
    rep = build_spinor_rep(2)
    assert STR_NORMALIZER == -1
    assert abs(supertrace(rep, np.eye(2))) < 1e-15
    assert abs(supertrace(rep, rep.gamma[0])) < 1e-15
    assert np.isclose(supertrace(rep, rep.gamma[0] @ rep.gamma[1]), 2j)


def test_supertrace_shape_check():
    rep = build_spinor_rep(2)
    try:
        supertrace(rep, np.eye(4))
    except DimensionMismatchError:
        return
    raise AssertionError("形状不符应当报错")


def test_clifford_mult_forms():
    rep = build_spinor_rep(4)
    v = np.array([0.3, -1.2, 0.5, 2.0])
    cv = clifford_mult(rep, v)
    assert np.allclose(cv @ cv, -np.dot(v, v) * np.eye(rep.dim))
    # 乱序指标带符号
    assert np.allclose(clifford_mult(rep, {(1, 0): 1.0}), -rep.gamma[0] @ rep.gamma[1])
    assert np.allclose(clifford_mult(rep, {(0, 0): 1.0}), 0.0)
    assert np.allclose(clifford_mult(rep, {(): 2.0}), 2.0 * np.eye(rep.dim))


if __name__ == "__main__":
    test_clifford_relations()
    test_unsupported_dimensions()
    test_supertrace_values()
    test_supertrace_shape_check()
    test_clifford_mult_forms()
    print("✅ clifford 测试全部通过")
