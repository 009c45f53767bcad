import numpy as np

from clifford import build_spinor_rep
from forms import FlatTorus, ScalarForm
from iterated import make_smooth_loop
from topdegree import (SkewForm, berezin_top, exterior_top_bruteforce, monodromy_relative_error, pfaffian,
                       pfaffian_bruteforce, q_eval, zeta_det_monodromy)
from utils import KernelDegenerateError, NonSkewError, NonSmoothLoopError, UnsupportedDimensionError


def _random_skew(rng, dim):
    B = rng.normal(size=(dim, dim))
    return B - B.T


def test_berezin_matches_bruteforce():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        dim = int(rng.choice([2, 4, 6, 8]))
        A = _random_skew(rng, dim)
        N = int(rng.choice([n for n in (0, 2, 4) if n <= dim]))
        covectors = [rng.normal(size=dim) for _ in range(N)]
        fast = berezin_top(A, covectors)
        slow = exterior_top_bruteforce(A, covectors)
        assert abs(fast - slow) <= 1e-9 * max(abs(slow), 1.0)


def test_berezin_odd_and_degenerate():
    rng = np.random.default_rng(1)
    A = _random_skew(rng, 4)
    assert berezin_top(A, [rng.normal(size=4)]) == 0.0
    try:
        berezin_top(np.zeros((4, 4)), [rng.normal(size=4), rng.normal(size=4)])
    except KernelDegenerateError:
        return
    raise AssertionError("退化情形应当报错")


def test_pfaffian_square_is_det():
    rng = np.random.default_rng(7)
    for dim in (2, 4, 6, 8, 10):
        for _ in range(10):
            A = _random_skew(rng, dim)
            assert abs(pfaffian(A) ** 2 - np.linalg.det(A)) <= 1e-10 * max(1.0, abs(np.linalg.det(A)))


def test_pfaffian_convention_and_oracle():
    assert pfaffian(np.array([[0.0, 3.0], [-3.0, 0.0]])) == 3.0
    rng = np.random.default_rng(3)
    A = _random_skew(rng, 6) + 1j * _random_skew(rng, 6)
    assert np.isclose(pfaffian(A), pfaffian_bruteforce(A))


def test_skew_checks():
    try:
        SkewForm(np.eye(2))
    except NonSkewError:
        pass
    else:
        raise AssertionError("对称矩阵应当报错")
    try:
        pfaffian(np.zeros((3, 3)))
    except UnsupportedDimensionError:
        return
    raise AssertionError("奇数维应当报错")


def test_q_eval_constant_forms():
    T2 = FlatTorus(2)
    rep = build_spinor_rep(2)
    loop = make_smooth_loop(T2, M=256, winding=(1, 0), seed=9)
    dx = ScalarForm.monomial(T2, (0,))
    dy = ScalarForm.monomial(T2, (1,))
    assert abs(q_eval(rep, loop, [])) < 1e-14
    assert abs(q_eval(rep, loop, [dx])) < 1e-14
    assert np.isclose(q_eval(rep, loop, [dx, dy]), 1j)
    assert np.isclose(q_eval(rep, loop, [dy, dx]), -1j)


def test_q_eval_rejects_rough_loop():
    T2 = FlatTorus(2)
    loop = make_smooth_loop(T2, M=32)
    loop.smooth = False
    try:
        q_eval(build_spinor_rep(2), loop, [])
    except NonSmoothLoopError:
        return
    raise AssertionError("非光滑回路应当报错")


def test_zeta_det_monodromy():
    for mu in (0.5, -1.2, 0.3 + 0.8j):
        assert monodromy_relative_error(mu, modes=4000) < 1e-4
    # 标量系数只依赖 ∫A
    varying = zeta_det_monodromy(lambda t: 0.7 * (1 + 0.3 * np.cos(2 * np.pi * t)))
    assert np.isclose(varying, zeta_det_monodromy(0.7), atol=1e-8)
    try:
        zeta_det_monodromy(np.zeros((2, 2)))
    except KernelDegenerateError:
        return
    raise AssertionError("有核时应当报错")


if __name__ == "__main__":
    test_berezin_matches_bruteforce()
    test_berezin_odd_and_degenerate()
    test_pfaffian_square_is_det()
    test_pfaffian_convention_and_oracle()
    test_skew_checks()
    test_q_eval_constant_forms()
    test_q_eval_rejects_rough_loop()
    test_zeta_det_monodromy()
    print("✅ topdegree 测试全部通过")
