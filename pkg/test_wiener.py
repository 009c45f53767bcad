import numpy as np

from chern import integral_map_one_forms
from clifford import build_spinor_rep
from forms import FlatTorus, ScalarForm
from iterated import DiscreteLoop
from operators import BundleModel, build_dirac_flat
from utils import LoopIntError, QuadratureBudgetError, StepTooCoarseError
from wiener import (CylinderFunction, _magnetic_phase, cylinder_integral, cylinder_mc, heat_kernel,
                    heat_kernel_dual, integral_I_mc, loop_heat_trace, q_tilde, sample_brownian_loop,
                    stochastic_parallel_transport, two_sided_pvalue)

T2 = FlatTorus(2)
TWO_PI = 2 * np.pi


def _cos(j):
    return lambda x: np.cos(TWO_PI * x[..., j])


def _sin(j):
    return lambda x: np.sin(TWO_PI * x[..., j])


# 十个柱函数面板，时间点落在 1/8 的倍数上
CYLINDER_PANELS = [
    CylinderFunction((0.0,), factors=[lambda x: np.ones(np.shape(x)[:-1])]),
    CylinderFunction((0.0, 0.5), factors=[_cos(0), _cos(0)]),
    CylinderFunction((0.0, 0.25), factors=[lambda x: np.exp(1j * TWO_PI * x[..., 1]),
                                           lambda x: np.exp(-1j * TWO_PI * x[..., 1])]),
    CylinderFunction((0.125, 0.5, 0.75), factors=[_cos(0), _cos(1), lambda x: np.cos(TWO_PI * (x[..., 0] + x[..., 1]))]),
    CylinderFunction((0.0,), factors=[lambda x: np.cos(TWO_PI * x[..., 0]) ** 2]),
    CylinderFunction((0.0, 0.375), factors=[_sin(0), _sin(0)]),
    CylinderFunction((0.0, 0.25), f=lambda x, y: np.cos(TWO_PI * (x[..., 0] - y[..., 0])) * np.cos(TWO_PI * (x[..., 1] - y[..., 1]))),
    CylinderFunction((0.0, 0.25, 0.5, 0.75), factors=[_cos(0)] * 4),
    CylinderFunction((0.5,), factors=[lambda x: np.exp(1j * TWO_PI * (x[..., 0] + x[..., 1]))]),
    CylinderFunction((0.0, 0.625), factors=[lambda x: 1 + np.cos(TWO_PI * x[..., 1]),
                                            lambda x: 1 + np.sin(TWO_PI * x[..., 0])]),
]


def test_heat_kernel_poisson_duality():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(50, 2))
    y = rng.uniform(size=(50, 2))
    for t in (0.05, 0.3, 1.0, 2.0):
        assert np.abs(heat_kernel(t, x, y, T2) - heat_kernel_dual(t, x, y, T2)).max() <= 1e-10


def test_heat_kernel_rejects_nonpositive_time():
    for t in (0.0, -1.0):
        try:
            heat_kernel(t, np.zeros(2), np.zeros(2), T2)
        except LoopIntError:
            continue
        raise AssertionError("t ≤ 0 应当报错")


def test_loop_heat_trace():
    Z = loop_heat_trace(T2)
    assert np.isclose(Z, heat_kernel(1.0, np.zeros(2), np.zeros(2), T2))
    assert np.isclose(cylinder_integral(CYLINDER_PANELS[0], T2), Z, atol=1e-12)


def test_cylinder_exact_values():
    Z = loop_heat_trace(T2)
    assert np.isclose(cylinder_integral(CYLINDER_PANELS[4], T2), 0.5 * Z, atol=1e-10)
    assert abs(cylinder_integral(CYLINDER_PANELS[8], T2)) < 1e-12


def test_cylinder_budget():
    big = CylinderFunction((0.0, 0.2, 0.4, 0.6), f=lambda a, b, c, d: np.ones(np.broadcast_shapes(a.shape, d.shape)[:-1]))
    try:
        cylinder_integral(big, T2, grid=32)
    except QuadratureBudgetError:
        return
    raise AssertionError("超出求积点预算应当报错")


def test_cylinder_mc_agrees():
    for i, F in enumerate(CYLINDER_PANELS):
        exact = cylinder_integral(F, T2, grid=16)
        estimate, stderr = cylinder_mc(F, T2, S=20000, M=64, seed=100 + i)
        assert abs(estimate - exact) <= 3 * stderr + 1e-10, (i, estimate, exact, stderr)


def test_sampler_reproducible():
    a = sample_brownian_loop(T2, M=32, seed=5, stream=17)
    b = sample_brownian_loop(T2, M=32, seed=5, stream=17)
    c = sample_brownian_loop(T2, M=32, seed=5, stream=18)
    assert np.array_equal(a.loop.points, b.loop.points)
    assert not np.array_equal(a.loop.points, c.loop.points)
    assert not a.loop.smooth
    assert np.all(np.abs(a.winding) <= 8)


def test_magnetic_phase_lift_invariant():
    sample = sample_brownian_loop(T2, M=1024, seed=3, stream=0)
    closed = sample.loop.closed_points()
    for k in (1, -1):
        base = _magnetic_phase(k, closed)
        assert np.isclose(abs(base), 1.0)
        for shift in ((1.0, 0.0), (0.0, -1.0), (1.0, 1.0)):
            assert np.isclose(_magnetic_phase(k, closed + np.array(shift)), base, atol=1e-9)


def test_magnetic_phase_small_circle():
    M, r, k = 256, 0.1, 1
    tau = np.arange(M) / M
    points = 0.5 + r * np.stack([np.cos(TWO_PI * tau), np.sin(TWO_PI * tau)], axis=1)
    loop = DiscreteLoop(T2, tau, points, smooth=True)
    U = stochastic_parallel_transport(BundleModel.magnetic(k), loop)
    area = 0.5 * M * r ** 2 * np.sin(TWO_PI / M)
    assert np.isclose(U[0, 0], np.exp(-TWO_PI * 1j * k * area), atol=1e-12)


def test_transport_flat_and_potential():
    sample = sample_brownian_loop(T2, M=256, seed=1)
    assert np.allclose(stochastic_parallel_transport(BundleModel.trivial(T2), sample), np.eye(1))
    a = ScalarForm(T2, {((0,), (0, 1)): 0.25j, ((0,), (0, -1)): 0.25j})
    U = stochastic_parallel_transport(BundleModel.trivial(T2, potential=[[a]]), sample)
    assert np.isclose(abs(U[0, 0]), 1.0)
    strong = ScalarForm.monomial(T2, (0,), coef=500j)
    try:
        stochastic_parallel_transport(BundleModel.trivial(T2, potential=[[strong]]), sample_brownian_loop(T2, M=8, seed=2))
    except StepTooCoarseError:
        return
    raise AssertionError("步长过粗应当报错")


def test_q_tilde_constant_forms():
    rep = build_spinor_rep(2)
    sample = sample_brownian_loop(T2, M=128, seed=4)
    dx = ScalarForm.monomial(T2, (0,))
    dy = ScalarForm.monomial(T2, (1,))
    assert np.isclose(q_tilde(rep, sample, [dx, dy]), 1j)


def test_integral_I_constant_panel():
    rep = build_spinor_rep(2)
    dx = ScalarForm.monomial(T2, (0,))
    dy = ScalarForm.monomial(T2, (1,))
    est = integral_I_mc(rep, T2, [dx, dy], S=1000, M=32, seed=0)
    m = build_dirac_flat(T2, cutoff=2)
    assert not est.inconclusive
    assert est.z_score(integral_map_one_forms(m, [dx, dy])) <= 3.0


def test_integral_I_mode_panel():
    rep = build_spinor_rep(2)
    a = ScalarForm(T2, {((0,), (0, 1)): 0.5, ((0,), (0, -1)): 0.5}, cutoff=2)
    b = ScalarForm(T2, {((1,), (1, 0)): 1.0, ((1,), (0, 0)): 0.5}, cutoff=2)
    est = integral_I_mc(rep, T2, [a, b], S=20000, M=256, seed=11)
    reference = integral_map_one_forms(build_dirac_flat(T2, cutoff=2), [a, b])
    assert est.z_score(reference) <= 3.0
    assert two_sided_pvalue(est.z_score(reference)) >= 0.0027


def test_integral_I_under_budget_and_determinism():
    rep = build_spinor_rep(2)
    a = ScalarForm(T2, {((0,), (0, 1)): 0.5, ((0,), (0, -1)): 0.5}, cutoff=2)
    dy = ScalarForm.monomial(T2, (1,))
    first = integral_I_mc(rep, T2, [a, dy], S=100, M=64, seed=9)
    second = integral_I_mc(rep, T2, [a, dy], S=100, M=64, seed=9)
    assert first.inconclusive
    assert first.estimate == second.estimate and first.stderr == second.stderr


if __name__ == "__main__":
    test_heat_kernel_poisson_duality()
    test_heat_kernel_rejects_nonpositive_time()
    test_loop_heat_trace()
    test_cylinder_exact_values()
    test_cylinder_budget()
    test_cylinder_mc_agrees()
    test_sampler_reproducible()
    test_magnetic_phase_lift_invariant()
    test_magnetic_phase_small_circle()
    test_transport_flat_and_potential()
    test_q_tilde_constant_forms()
    test_integral_I_constant_panel()
    test_integral_I_mode_panel()
    test_integral_I_under_budget_and_determinism()
    print("✅ wiener 测试全部通过")
