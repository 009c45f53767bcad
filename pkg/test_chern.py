import numpy as np

from barcplx import BarChain, cyclic_project, random_chain
from chern import (F_one, F_two, chen_normalization_residual, chern_character, chern_report, coclosedness_report,
                   coclosedness_residual, integral_map_one_forms, mu0)
from forms import FlatTorus, ScalarForm, TForm
from metrics import is_monotone_decreasing
from operators import build_dirac_flat, build_dirac_magnetic, mckean_singer
from utils import QuadratureBudgetError

T2 = FlatTorus(2)


def _dt(form):
    """纯 dt 槽位 dt∧θ"""
    return TForm(None, form, degree=form.degrees()[0] + 1)


def test_empty_word_is_mckean_singer():
    m = build_dirac_magnetic(1, levels=12)
    assert np.isclose(chern_character(m, BarChain.word()), mckean_singer(m, 1.0))


def test_pure_dt_words_match_integral_map():
    m = build_dirac_flat(T2, cutoff=1)
    a = ScalarForm.monomial(T2, (0,), coef=0.7)
    b = ScalarForm(T2, {((1,), (1, 0)): 0.4, ((0,), (0, 0)): -0.3j})
    chain = BarChain([(1.0, (_dt(a), _dt(b))), (-1.0, (_dt(b), _dt(a)))])
    assert np.isclose(chern_character(m, chain), integral_map_one_forms(m, [a, b]), atol=1e-10)


def test_chern_report_entry():
    m = build_dirac_flat(T2, cutoff=1)
    a = ScalarForm.monomial(T2, (0,), coef=0.5)
    chain = BarChain.word(_dt(a))
    entry = chern_report(m, chain, order=6, method='gauss')
    value = chern_character(m, chain, order=6, method='gauss')
    assert np.isclose(complex(*entry['value']), value)
    assert entry['model'] == m.cache_key()
    assert len(entry['chain']) == 16
    assert 0.0 < entry['estimated_error'] < 1e-10


def test_F_one_two_slot_structure():
    m = build_dirac_flat(T2, cutoff=1)
    f = TForm(ScalarForm.monomial(T2, (), mode=(1, 0)), degree=0)
    # 0 次槽位: F[f] = [D, c(f)] − c(df) = 0
    assert np.abs(F_one(m, f)).max() < 1e-10
    dx = TForm(ScalarForm.monomial(T2, (0,)), degree=1)
    # 常系数 1-形式: c(dx)c(dx) − c(dx∧dx) = −1
    assert np.allclose(F_two(m, dx, dx), np.eye(m.dim))


def test_coclosed_random_cyclic_chains():
    m = build_dirac_flat(T2, cutoff=2)
    rng = np.random.default_rng(0)
    for _ in range(100):
        c = cyclic_project(random_chain(T2, rng, n_terms=1, max_len=3, max_degree=2, slot_terms=1))
        assert coclosedness_report(m, c)['relative'] <= 1e-6


def test_coclosed_quadrature_convergence():
    m = build_dirac_magnetic(1, levels=6)
    dx = TForm(ScalarForm.monomial(T2, (0,), coef=0.5), ScalarForm.constant(T2, 0.3), degree=1)
    dy = TForm(ScalarForm.monomial(T2, (1,), coef=-0.4), ScalarForm.constant(T2, 0.2j), degree=1)
    c = cyclic_project(BarChain.word(dx, dy, dx))
    residuals = [coclosedness_residual(m, c, order=q, method='gauss') for q in (4, 8, 12)]
    assert is_monotone_decreasing(residuals)
    assert coclosedness_residual(m, c, method='expm') <= 1e-10


def test_chen_normalized():
    m = build_dirac_flat(T2, cutoff=1)
    rng = np.random.default_rng(5)
    c = random_chain(T2, rng, n_terms=2, max_len=2, max_degree=2, slot_terms=1)
    assert chen_normalization_residual(m, c) <= 1e-12


def test_mu0_constant_two_form():
    dx = _dt(ScalarForm.monomial(T2, (0,)))
    dy = _dt(ScalarForm.monomial(T2, (1,)))
    value = mu0(BarChain.word(dx, dy))
    assert np.isclose(value, 1.0 / (4 * np.pi))
    assert np.isclose(mu0(BarChain.word(), base=T2), 0.0)


def test_integral_map_word_limit():
    m = build_dirac_flat(T2, cutoff=1)
    dx = ScalarForm.monomial(T2, (0,))
    try:
        integral_map_one_forms(m, [dx] * 5)
    except QuadratureBudgetError:
        return
    raise AssertionError("N > 4 应当报错")


if __name__ == "__main__":
    test_empty_word_is_mckean_singer()
    test_pure_dt_words_match_integral_map()
    test_chern_report_entry()
    test_F_one_two_slot_structure()
    test_coclosed_random_cyclic_chains()
    test_coclosed_quadrature_convergence()
    test_chen_normalized()
    test_mu0_constant_two_form()
    test_integral_map_word_limit()
    print("✅ chern 测试全部通过")
