"""
Bismut-Chern 特征: 回路上的直接求值、迭代积分链表示，以及指标与局部化两条流水线

约定: 沿光滑回路的平行移动 P(s,t) 满足 ∂_t P = −P·A(γ̇)，较早的时间在左；
Ch_N(v_1,…,v_2N) = (−1)^N 2^{−N} Σ_σ sgn(σ) ∫_{Δ_N} tr(P(0,τ_1) R(v_σ1,v_σ2)(τ_1) P(τ_1,τ_2) ⋯ P(τ_N,1)) dτ。
链一侧每个联络槽 (A, 0) 与曲率槽 (0, R) 的系数均为 −1，于是 Σ_N Ch_D[c_N] 恰是 Str(e^{−(D+c(A))²/2}) 的 Duhamel 展开。
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.linalg import expm

from barcplx import BarChain, exp_chain, growth_diagnostic, total_differential
from chern import MAX_WORD_LENGTH, chern_character
from forms import (FlatTorus, ScalarForm, TForm, a_hat, chern_weil_ch, integrate_top, matrix_curvature,
                   wedge)
from iterated import block_distributions
from operators import DEFAULT_QUAD_ORDER, BundleModel, mckean_singer, twist_model
from utils import (BaseMismatchError, DimensionMismatchError, InvalidDegreeError, NonSmoothLoopError,
                   TangentCountError, UnsupportedCombinationError, cumulative_integral)

logger = logging.getLogger(__name__)


@dataclass
class BismutData:
    """
    参数:
    bundle: BundleModel
    N_max: 截断阶数
    probe: 磁模型上配对用的常系数位势（1×1 的 1-形式矩阵），None 表示不加
    """
    bundle: BundleModel
    N_max: int = 3
    probe: list = None

    def __post_init__(self):
        if self.N_max < 0:
            raise InvalidDegreeError(f"N_max 必须非负，收到 {self.N_max}")


def magnetic_potential(flux):
    """基本区域上的规范 A = iπk(x dy − y dx)，曲率 2πik dx∧dy"""
    base = FlatTorus(2)
    a = ScalarForm.affine(base, (1,), 0, 1j * np.pi * flux) + ScalarForm.affine(base, (0,), 1, -1j * np.pi * flux)
    return [[a]]


def wave_potential(base, eps=0.5, cutoff=2):
    """
    平凡线丛上的非平坦位势 A = iε(−sin(2πx₂)dx¹ + (sin(2πx₁) + sin(2π(x₁+x₂)))dx²)

    曲率 F = 2πiε(cos 2πx₁ + cos 2πx₂ + cos 2π(x₁+x₂))dx¹∧dx²，三个模之和为零，
    所以 Duhamel 展开的三阶项（一个或三个曲率槽）不为零而彼此抵消。维数为 1 时退化为平坦的 iε sin(2πx₁)dx¹

    返回:
    1×1 的 1-形式矩阵
    """
    n = base.n

    def mode(*ks):
        return tuple(list(ks) + [0] * (n - len(ks)))

    half = 0.5 * eps
    if n < 2:
        coeffs = {((0,), mode(1)): half, ((0,), mode(-1)): -half}
    else:
        coeffs = {
            ((0,), mode(0, 1)): -half, ((0,), mode(0, -1)): half,
            ((1,), mode(1, 0)): half, ((1,), mode(-1, 0)): -half,
            ((1,), mode(1, 1)): half, ((1,), mode(-1, -1)): -half,
        }
    return [[ScalarForm(base, coeffs, cutoff=cutoff)]]


def bundle_connection(b):
    """返回 (联络 1-形式矩阵或 None, 曲率 2-形式矩阵或 None)"""
    if b.kind == 'magnetic':
        A = magnetic_potential(b.flux)
        return A, matrix_curvature(A)
    if b.potential is None:
        return None, None
    return b.potential, matrix_curvature(b.potential)


# ---------------------------------------------------------------------------
# 直接求值
# ---------------------------------------------------------------------------

def _connection_along(A, loop, points, velocity):
    r = len(A)
    out = np.zeros((len(points), r, r), dtype=complex)
    for i in range(r):
        for j in range(r):
            if not A[i][j].is_zero():
                out[:, i, j] = A[i][j].evaluate(points, [velocity])
    return out


def _transport_from_start(a, grid):
    """P(0, τ) 在闭网格上的取值"""
    K, r, _ = a.shape
    if r == 1:
        return np.exp(-cumulative_integral(a[:, 0, 0], grid))[:, None, None]
    P = np.empty((K, r, r), dtype=complex)
    P[0] = np.eye(r)
    for k in range(K - 1):
        P[k + 1] = P[k] @ expm(-0.5 * (a[k] + a[k + 1]) * (grid[k + 1] - grid[k]))
    return P


def _branch_correction(b, loop):
    if b.kind != 'magnetic':
        return 1.0
    m = loop.winding
    x0 = loop.points[0]
    return np.exp(1j * np.pi * b.flux * (m[0] * x0[1] - m[1] * x0[0]))


# Ch_N 在回路上的直接求值
def bismut_form_direct(b, loop, tangents, N=None):
    """
    参数:
    b: BundleModel
    loop: 光滑 DiscreteLoop
    tangents: 2N 个 TangentField
    N: 分量阶数，缺省时取 len(tangents)/2

    返回:
    复数 Ch_N(v_1,…,v_2N)
    """
    if not loop.smooth:
        raise NonSmoothLoopError("直接求值需要光滑回路，布朗样本请使用 wiener.stochastic_parallel_transport")
    if b.base != loop.base:
        raise BaseMismatchError("丛与回路不在同一环面上")
    p = len(tangents)
    if N is None:
        if p % 2:
            raise TangentCountError(f"切向量个数 {p} 必须为偶数")
        N = p // 2
    if p != 2 * N:
        raise TangentCountError(f"Ch_{N} 需要 {2 * N} 个切向量，收到 {p}")
    A, R = bundle_connection(b)
    r = b.rank
    grid = loop.closed_grid()
    points = loop.closed_points()
    vel = loop.velocity()
    velocity = np.vstack([vel, vel[:1]])
    if A is None:
        P = np.broadcast_to(np.eye(r, dtype=complex), (len(grid), r, r))
    else:
        P = _transport_from_start(_connection_along(A, loop, points, velocity), grid)
    correction = _branch_correction(b, loop)
    if N == 0:
        return complex(correction * np.trace(P[-1]))
    if R is None:
        return 0.0 + 0.0j
    P_inv = np.linalg.inv(P)
    vecs = [t.closed_vectors() for t in tangents]
    total = 0.0 + 0.0j
    for sign, blocks in block_distributions(p, [2] * N):
        running = np.broadcast_to(np.eye(r, dtype=complex), (len(grid), r, r)).copy()
        for block in blocks:
            Rv = np.zeros((len(grid), r, r), dtype=complex)
            for i in range(r):
                for j in range(r):
                    if not R[i][j].is_zero():
                        Rv[:, i, j] = R[i][j].evaluate(points, [vecs[block[0]], vecs[block[1]]])
            conj = np.einsum('tab,tbc,tcd->tad', P, Rv, P_inv)
            running = cumulative_integral(np.einsum('tab,tbc->tac', running, conj), grid)
        total += sign * np.trace(running[-1] @ P[-1])
    return complex((-1) ** N * correction * total)


def bismut_form_total(b, loop, tangents):
    """完整的非齐次形式 Σ_N Ch_N 在 p 个切向量上的值；只有 2N = p 的分量有贡献"""
    if len(tangents) % 2:
        return 0.0 + 0.0j
    return bismut_form_direct(b, loop, tangents, len(tangents) // 2)


# ---------------------------------------------------------------------------
# 链表示
# ---------------------------------------------------------------------------

def _connection_chain(A, R, rank, N, max_len):
    """联络槽与曲率槽（系数 −1）沿闭合指标路径展开的词，恰含 N 个曲率槽"""
    base = (A or R)[0][0].base if (A or R) else None
    mixture = []
    labels = []
    if A is not None:
        for i in range(rank):
            for j in range(rank):
                if not A[i][j].is_zero():
                    mixture.append((-1.0, TForm(A[i][j], degree=1)))
                    labels.append(('A', i, j))
    if R is not None:
        for i in range(rank):
            for j in range(rank):
                if not R[i][j].is_zero():
                    mixture.append((-1.0, TForm(ScalarForm.zero(base, R[i][j].cutoff), R[i][j], degree=3)))
                    labels.append(('R', i, j))

    def keep(ids):
        if not ids:
            return N == 0
        if sum(labels[k][0] == 'R' for k in ids) != N:
            return False
        path = [labels[k] for k in ids]
        if any(a[2] != b[1] for a, b in zip(path, path[1:])):
            return False
        return path[-1][2] == path[0][1]

    if not mixture:
        return BarChain([(rank, ())]) if N == 0 else BarChain()
    total = exp_chain(mixture, max_len, keep).total()
    return BarChain([(coef * rank if not word else coef, word) for coef, word in total.terms])


# Bismut-Chern 特征第 N 个分量的迭代积分链
def bismut_chain(b, N, max_len=MAX_WORD_LENGTH):
    """
    参数:
    b: BundleModel；磁线丛使用基本区域上的仿射规范
    N: 曲率槽个数，ρ(c_N) 是 2N 次形式
    max_len: 最大词长，联络的时间有序指数在此截断

    返回:
    BarChain c_N
    """
    if N < 0:
        raise InvalidDegreeError(f"N 必须非负，收到 {N}")
    if b.kind not in ('trivial', 'magnetic'):
        raise UnsupportedCombinationError(f"不支持的丛类型 {b.kind}")
    A, R = bundle_connection(b)
    return _connection_chain(A, R, b.rank, N, max_len)


def _pairing_chains(m, b, N_max, max_len, probe):
    """与谱模型配对的链：平凡丛用自身位势，磁线丛的联络已在模型中，只加常系数位势"""
    if b.kind == 'magnetic':
        if m.kind != 'magnetic' or m.meta.get('flux') != b.flux:
            raise UnsupportedCombinationError("磁线丛需要同一通量的 Landau 模型")
        A = probe
        R = matrix_curvature(probe) if probe is not None else None
        if R is not None and all(e.is_zero() for row in R for e in row):
            R = None
        return [_connection_chain(A, R, 1, N, max_len) for N in range(N_max + 1)]
    if m.kind != 'flat' or m.basis['rank'] != b.rank:
        raise DimensionMismatchError("平凡丛需要同秩的未扭曲平坦模型")
    return [bismut_chain(b, N, max_len) for N in range(N_max + 1)]


# 指标的路径积分表示 I[Ch(E,∇)]
def index_via_pathintegral(m, b, N_max=3, order=DEFAULT_QUAD_ORDER, method='auto',
                           max_len=MAX_WORD_LENGTH, probe=None):
    """
    参数:
    m: 未扭曲的 SpectralModel（平凡丛）或同通量的磁模型
    b: BundleModel
    N_max: 曲率槽个数上限
    probe: 磁模型上的常系数位势

    返回:
    dict: value（Σ_N Ch_D[c_N]），per_N 表，per_length 表，growth 诊断，tail_estimate，
    pairing（'landau_model' 表示联络已在磁模型中、链只含常系数位势，N ≥ 1 的链为空；
    'bundle_chain' 表示与丛自身的联络链配对）
    """
    if N_max < 0:
        raise InvalidDegreeError(f"N_max 必须非负，收到 {N_max}")
    chains = _pairing_chains(m, b, N_max, max_len, probe)
    pairing = 'landau_model' if b.kind == 'magnetic' else 'bundle_chain'
    if pairing == 'landau_model':
        logger.info("磁模型已含联络，路径积分值即 N=0 项（常系数位势的词），N ≥ 1 的链为空")
    rows = []
    by_length = {}
    total = 0.0 + 0.0j
    for N, chain in enumerate(chains):
        value = 0.0 + 0.0j
        for coef, word in chain.terms:
            term = chern_character(m, BarChain([(coef, word)]), order=order, method=method)
            value += term
            by_length[len(word)] = by_length.get(len(word), 0.0) + term
        rows.append({'N': N, 'words': len(chain), 'value_re': value.real, 'value_im': value.imag,
                     'norm': chain.norm()})
        total += value
        logger.debug("N=%d: %d 个词, 贡献 %s", N, len(chain), value)
    per_N = pd.DataFrame(rows, columns=['N', 'words', 'value_re', 'value_im', 'norm'])
    per_length = pd.DataFrame([{'length': L, 'value_re': v.real, 'value_im': v.imag}
                               for L, v in sorted(by_length.items())],
                              columns=['length', 'value_re', 'value_im'])
    growth = growth_diagnostic(None, norms=list(per_N['norm']))
    tail = float(abs(complex(per_length['value_re'].iloc[-1], per_length['value_im'].iloc[-1]))) if len(per_length) else 0.0
    return {'value': complex(total), 'per_N': per_N, 'per_length': per_length, 'growth': growth,
            'tail_estimate': tail, 'pairing': pairing}


def twisted_reference(m, b, probe=None):
    """同一截断下扭曲算子的 McKean-Singer 值，作为指标流水线的对照"""
    if b.kind == 'magnetic':
        return mckean_singer(twist_model(m, probe) if probe is not None else m, 1.0)
    if b.potential is None:
        return mckean_singer(m, 1.0)
    return mckean_singer(twist_model(m, b.potential), 1.0)


# 局部化公式右端
def localization_rhs(b):
    """
    参数:
    b: BundleModel

    返回:
    (2π)^{−n/2} ∫_X Â ∧ ch(E)，平坦环面上 Â = 1
    """
    base = b.base
    n = base.n
    _, R = bundle_connection(b)
    if R is None:
        ch = ScalarForm.constant(base, float(b.rank))
    else:
        ch = chern_weil_ch(R, rank=b.rank)
    zero = ScalarForm.zero(base)
    ahat = a_hat([[zero for _ in range(n)] for _ in range(n)])
    return complex(integrate_top(wedge(ahat, ch)) / (2 * np.pi) ** (n / 2))


def closedness_residual(m, b, max_len=MAX_WORD_LENGTH, order=DEFAULT_QUAD_ORDER, method='auto', probe=None):
    """
    |Ch_D[(d + b')c]|，c 为词长 ≤ L 的全部链分量，L = 1..max_len

    返回:
    DataFrame(length, residual)；完整链序列是闭的，残差只来自词长截断
    """
    rows = []
    for L in range(1, max_len + 1):
        N_max = L
        chains = _pairing_chains(m, b, N_max, L, probe)
        chain = BarChain()
        for c in chains:
            chain = chain + c
        residual = abs(chern_character(m, total_differential(chain.simplify()), order=order, method=method))
        rows.append({'length': L, 'residual': residual})
    return pd.DataFrame(rows, columns=['length', 'residual'])
