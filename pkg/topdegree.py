"""
有限维 Pfaffian / Berezin 积分、光滑回路上的顶次泛函 q，以及 ∇_γ̇ 的 ζ 正规化行列式（实验性）
"""
import logging
import math

import numpy as np
from pfapack.pfaffian import pfaffian as pfapack_pfaffian
from scipy.linalg import expm

from clifford import supertrace
from forms import ScalarForm
from utils import (DimensionMismatchError, KernelDegenerateError, NonSkewError, NonSmoothLoopError,
                   QuadratureBudgetError, UnsupportedDimensionError, cumulative_integral,
                   signed_permutations, sort_with_sign)

logger = logging.getLogger(__name__)

SKEW_TOL = 1e-12
MONODROMY_STEPS = 2000


def _check_skew(A, tol=SKEW_TOL):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"需要方阵，收到形状 {A.shape}")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A + A.T).max(initial=0.0) > tol * scale:
        raise NonSkewError("矩阵不是反对称的")
    if A.shape[0] % 2:
        raise UnsupportedDimensionError(f"Pfaffian 需要偶数维，收到 {A.shape[0]}")
    return A


class SkewForm:
    """ω[v,w] = ⟨v, Aw⟩，A 反对称，维数为偶数"""

    def __init__(self, A):
        self.A = _check_skew(np.array(A, dtype=complex if np.iscomplexobj(A) else float))

    @property
    def dim(self):
        return self.A.shape[0]

    def __call__(self, v, w):
        return np.asarray(v) @ self.A @ np.asarray(w)


def pfaffian(A):
    """
    参数:
    A: 偶数维反对称矩阵

    返回:
    pf(A)，约定 pf([[0,a],[−a,0]]) = a
    """
    A = _check_skew(A)
    if A.shape[0] == 0:
        return 1.0
    A = np.array(A, dtype=complex if np.iscomplexobj(A) else float)
    # pfapack 要求严格反对称
    A = 0.5 * (A - A.T)
    return pfapack_pfaffian(A, method='P')


def pfaffian_bruteforce(A):
    """沿第一行的递归展开，只用于小矩阵的对照"""
    A = np.asarray(A)
    n = A.shape[0]
    if n == 0:
        return 1.0
    if n % 2:
        return 0.0
    total = 0.0
    for j in range(1, n):
        keep = [i for i in range(n) if i not in (0, j)]
        sign = 1.0 if j % 2 == 1 else -1.0
        total += sign * A[0, j] * pfaffian_bruteforce(A[np.ix_(keep, keep)])
    return total


# ---------------------------------------------------------------------------
# Berezin 顶次系数
# ---------------------------------------------------------------------------

def berezin_top(omega, covectors):
    """
    [e^ω ∧ ϑ_1 ∧ ⋯ ∧ ϑ_N]_top = pf(A) · pf(G)，G_ab = ⟨A^{−1}ϑ_a, ϑ_b⟩

    参数:
    omega: SkewForm（A 可逆）
    covectors: N 个长度为 dim 的余向量

    返回:
    标量；N 为奇数时为 0
    """
    if not isinstance(omega, SkewForm):
        omega = SkewForm(omega)
    N = len(covectors)
    if N > omega.dim:
        raise DimensionMismatchError(f"余向量个数 {N} 超过维数 {omega.dim}")
    if N % 2:
        return 0.0
    if abs(np.linalg.det(omega.A)) < 1e-14:
        raise KernelDegenerateError("A 不可逆：退化情形需要核分裂公式，尚未实现")
    if N == 0:
        return pfaffian(omega.A)
    theta = np.array([np.asarray(c) for c in covectors])
    inv = np.linalg.inv(omega.A)
    gram = (inv @ theta.T).T @ theta.T
    gram = 0.5 * (gram - gram.T)
    return pfaffian(omega.A) * pfaffian(gram)


def _ext_wedge(a, b):
    out = {}
    for I, x in a.items():
        for J, y in b.items():
            sign, K = sort_with_sign(I + J)
            if sign:
                out[K] = out.get(K, 0) + sign * x * y
    return out


def exterior_top_bruteforce(A, covectors):
    """在外代数中直接展开 e^ω ∧ ϑ_1 ∧ ⋯ ∧ ϑ_N 并取顶次系数（dim ≤ 8）"""
    A = np.asarray(A)
    d = A.shape[0]
    if d > 8:
        raise UnsupportedDimensionError("外代数暴力展开只支持 dim ≤ 8")
    omega = {(i, j): A[i, j] for i in range(d) for j in range(i + 1, d) if A[i, j] != 0}
    expo = {(): 1.0}
    power = {(): 1.0}
    for k in range(1, d // 2 + 1):
        power = {K: v / k for K, v in _ext_wedge(power, omega).items()}
        for K, v in power.items():
            expo[K] = expo.get(K, 0) + v
    result = expo
    for c in covectors:
        result = _ext_wedge(result, {(i,): c[i] for i in range(d) if c[i] != 0})
    return result.get(tuple(range(d)), 0.0)


# ---------------------------------------------------------------------------
# 回路上的顶次泛函
# ---------------------------------------------------------------------------

def covector_samples(theta, loop):
    """1-形式或现成的余向量样本 -> 闭网格上的 (M+1, n) 数组"""
    if isinstance(theta, ScalarForm):
        n = loop.base.n
        points = loop.closed_points()
        basis = np.eye(n)
        cols = [theta.evaluate(points, [np.broadcast_to(basis[j], points.shape)]) for j in range(n)]
        return np.stack(cols, axis=1)
    arr = np.asarray(theta)
    if arr.shape == (loop.M, loop.base.n):
        arr = np.vstack([arr, arr[:1]])
    if arr.shape != (loop.M + 1, loop.base.n):
        raise DimensionMismatchError(f"余向量样本形状 {arr.shape} 与回路不符")
    return arr


def ordered_clifford_integral(rep, samples, grid):
    """∫_{Δ_N} c(θ_1(τ_1)) ⋯ c(θ_N(τ_N)) dτ 的矩阵值，逐层累积求积，较早的时间在左"""
    d = rep.dim
    K = len(grid)
    running = np.broadcast_to(np.eye(d, dtype=complex), (K, d, d)).copy()
    for theta in samples:
        cliff = np.einsum('tj,jab->tab', theta, np.asarray(rep.gamma))
        running = cumulative_integral(np.einsum('tab,tbc->tac', running, cliff), grid)
    return running[-1]


def q_eval(rep, loop, thetas):
    """
    q(θ_N∧⋯∧θ_1) = 2^{−N/2} Σ_σ sgn(σ) ∫_{Δ_N} str(Π c(θ_{σ_a}(τ_a))) dτ

    平坦环面上平凡自旋结构下旋量平行移动为恒等

    参数:
    rep: SpinorRep
    loop: 光滑 DiscreteLoop
    thetas: N 个 1-形式（ScalarForm）或余向量样本
    """
    if not loop.smooth:
        raise NonSmoothLoopError("q 只在光滑回路上定义，布朗样本请用 wiener.q_tilde")
    if rep.n != loop.base.n:
        raise DimensionMismatchError("旋量表示维数与环面维数不符")
    N = len(thetas)
    if N > 4:
        raise QuadratureBudgetError(f"N={N} 超过上限 4")
    grid = loop.closed_grid()
    samples = [covector_samples(t, loop) for t in thetas]
    total = 0.0 + 0.0j
    for sign, perm in signed_permutations(N):
        total += sign * supertrace(rep, ordered_clifford_integral(rep, [samples[i] for i in perm], grid))
    return complex(2.0 ** (-N / 2) * total)


# ---------------------------------------------------------------------------
# ζ 正规化行列式（实验性）
# ---------------------------------------------------------------------------

def monodromy(A, steps=MONODROMY_STEPS):
    """时间有序指数 U(1)，dU/dt = A(t)U，中点 Magnus 格式；A 可为常矩阵或 t -> 矩阵的函数"""
    if not callable(A):
        const = np.atleast_2d(np.asarray(A, dtype=complex))
        return expm(const)
    h = 1.0 / steps
    first = np.atleast_2d(np.asarray(A(0.5 * h), dtype=complex))
    U = np.eye(first.shape[0], dtype=complex)
    for k in range(steps):
        U = expm(h * np.atleast_2d(np.asarray(A((k + 0.5) * h), dtype=complex))) @ U
    return U


def zeta_det_monodromy(A, steps=MONODROMY_STEPS, tol=1e-10):
    """
    det(Id − M)，M 为单值化矩阵；不额外乘指数前因子

    参数:
    A: 常矩阵（可为标量）或 t -> 矩阵 的函数
    steps: 时间步数

    返回:
    复数
    """
    M = monodromy(A, steps)
    eigs = np.linalg.eigvals(M)
    if np.min(np.abs(eigs - 1.0)) < tol:
        raise KernelDegenerateError("单值化矩阵有本征值 1，∇_γ̇ 有核")
    return complex(np.linalg.det(np.eye(M.shape[0]) - M))


def monodromy_product_oracle(A, modes=1000):
    """
    常系数 A 的对称截断乘积: Π_μ e^{μ/2}(−μ)Π_{k=1}^{K}(1 + μ²/(2πk)²)

    当 K → ∞ 时收敛到 det(Id − e^A)
    """
    mus = np.linalg.eigvals(np.atleast_2d(np.asarray(A, dtype=complex)))
    k = np.arange(1, modes + 1)
    total = 1.0 + 0.0j
    for mu in mus:
        partial = np.prod(1.0 + mu ** 2 / (2 * np.pi * k) ** 2)
        total *= np.exp(mu / 2) * (-mu) * partial
    return complex(total)


def monodromy_relative_error(A, modes=1000):
    exact = zeta_det_monodromy(A)
    approx = monodromy_product_oracle(A, modes)
    return abs(approx - exact) / max(abs(exact), math.ulp(1.0))
