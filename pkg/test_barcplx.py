import math

import numpy as np

from barcplx import (BarChain, apply_codifferential, bar_bprime, bar_d, codifferential, cyclic_project,
                     cyclic_rotate, dumps_chain, exp_chain, growth_diagnostic, loads_chain,
                     random_chain, random_multilinear_cochain, total_differential)
from forms import FlatTorus, ScalarForm, TForm

T2 = FlatTorus(2)
TOL = 1e-12


def _chains(seed, count=40):
    rng = np.random.default_rng(seed)
    return [random_chain(T2, rng) for _ in range(count)]


def test_differentials_square_to_zero():
    for c in _chains(0, count=200):
        assert bar_d(bar_d(c)).max_abs_coordinate() <= TOL
        assert bar_bprime(bar_bprime(c)).max_abs_coordinate() <= TOL
        assert (bar_d(bar_bprime(c)) + bar_bprime(bar_d(c))).max_abs_coordinate() <= TOL
        assert total_differential(total_differential(c)).max_abs_coordinate() <= TOL


def test_cyclic_projection():
    for c in _chains(1, count=20):
        cyc = cyclic_project(c)
        again = cyclic_project(BarChain(cyc.terms))
        assert (again - cyc).max_abs_coordinate() <= TOL
        image = total_differential(cyc)
        assert (cyclic_project(BarChain(image.terms)) - image).max_abs_coordinate() <= TOL


def test_cyclic_rotation_sign():
    # 两个 2 次槽位的移位次数都是 1，轮换带负号
    slot = TForm(ScalarForm.monomial(T2, (0, 1)), ScalarForm.monomial(T2, (0,)), degree=2)
    coef, word = cyclic_rotate(1.0, (slot, slot))
    assert coef == -1.0
    assert len(word) == 2


def test_codifferential_squares_to_zero():
    L = random_multilinear_cochain(seed=7)
    dL = codifferential(L)
    for c in _chains(2, count=10):
        assert abs(apply_codifferential(dL, c)) <= 1e-8


def test_exp_chain_lengths():
    a = TForm(ScalarForm.monomial(T2, (0,)), degree=1)
    b = TForm(ScalarForm.monomial(T2, (1,)), degree=1)
    seq = exp_chain([(0.5, a), (2.0, b)], max_len=3)
    assert len(seq) == 4
    assert seq[0].lengths() == [0]
    assert len(seq[2]) == 4
    # 只保留不含第二个槽位的词
    only_a = exp_chain([(0.5, a), (2.0, b)], max_len=3, keep=lambda ids: 1 not in ids)
    assert len(only_a[3]) == 1
    assert np.isclose(only_a[3].terms[0][0], 0.125)


def test_growth_diagnostic():
    entire = growth_diagnostic(None, norms=[1.0 / math.factorial(N) for N in range(9)])
    assert entire['convergent']
    wild = growth_diagnostic(None, norms=[float(math.factorial(N)) for N in range(9)])
    assert not wild['convergent']


def test_chain_text_roundtrip():
    c = cyclic_project(_chains(3, count=1)[0])
    d = loads_chain(dumps_chain(c))
    assert d.cyclic
    assert (d - c).max_abs_coordinate() <= TOL


def test_simplify_merges_and_drops():
    a = TForm(ScalarForm.monomial(T2, (0,)), degree=1)
    b = TForm(ScalarForm.monomial(T2, (1,), coef=2.0), degree=1)
    c = BarChain([(1.0, (a, b)), (2.0, (b,)), (0.5, (a, b)), (-2.0, (b,)), (1.0, (b, a))])
    s = c.simplify()
    assert len(s) == 2
    assert [len(w) for _, w in s.terms] == [2, 2]
    assert np.isclose(s.terms[0][0], 1.5)
    assert (s - c).max_abs_coordinate() <= TOL
    assert len(BarChain([(1.0, (a,)), (1e-14, (b,))]).simplify(tol=1e-12)) == 1
    for chain in _chains(4, count=10):
        doubled = (chain + chain).simplify()
        assert len(doubled) <= len(chain)
        assert (doubled - 2.0 * chain).max_abs_coordinate() <= TOL
    assert cyclic_project(_chains(5, count=1)[0]).simplify().cyclic


if __name__ == "__main__":
    test_differentials_square_to_zero()
    test_cyclic_projection()
    test_cyclic_rotation_sign()
    test_codifferential_squares_to_zero()
    test_exp_chain_lengths()
    test_growth_diagnostic()
    test_chain_text_roundtrip()
    test_simplify_merges_and_drops()
    print("✅ barcplx 测试全部通过")
