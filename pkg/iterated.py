"""
离散回路上扩展迭代积分映射 ρ 的逐点求值，以及链映射性质的有限差分检验

ρ(ϑ_1,…,ϑ_N) = ∫_{Δ_N} (ι_Kϑ_1'(τ_1) + ϑ_1''(τ_1)) ∧ ⋯ ∧ (ι_Kϑ_N'(τ_N) + ϑ_N''(τ_N)) dτ，K = γ̇。
单纯形积分按 Chen 的方式在时间网格上逐层累积求积。
"""
import logging
from itertools import combinations

import numpy as np
from scipy.integrate import trapezoid

from barcplx import cyclic_project, prefix_shifts, total_differential
from utils import (DimensionMismatchError, LoopIntError, NonSmoothLoopError, TangentCountError,
                   cumulative_integral, permutation_sign)

logger = logging.getLogger(__name__)

DEFAULT_GRID = 512
DEFAULT_STEP = 1e-3


class DiscreteLoop:
    """
    环面中的回路，时间网格 τ ∈ [0,1) 上采样

    参数:
    base: FlatTorus
    grid: M 个严格递增的时间点
    points: 形状 (M, n) 的提升坐标
    winding: 整数向量 w，γ(1) = γ(0) + w
    smooth: 光滑回路（确定性）为 True，布朗样本为 False
    """

    def __init__(self, base, grid, points, winding=None, smooth=True):
        grid = np.asarray(grid, dtype=float)
        points = np.asarray(points, dtype=float)
        if grid.ndim != 1 or np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] >= 1:
            raise LoopIntError("时间网格必须严格递增且位于 [0,1)")
        if points.shape != (len(grid), base.n):
            raise DimensionMismatchError(f"采样点形状 {points.shape} 应为 {(len(grid), base.n)}")
        winding = np.zeros(base.n) if winding is None else np.asarray(winding, dtype=float)
        if np.any(np.abs(winding - np.round(winding)) > 1e-12):
            raise LoopIntError(f"端点偏移 {winding} 不是整数向量")
        self.base = base
        self.grid = grid
        self.points = points
        self.winding = np.round(winding).astype(int)
        self.smooth = bool(smooth)

    @property
    def M(self):
        return len(self.grid)

    @property
    def is_uniform(self):
        return self.grid[0] == 0 and np.allclose(np.diff(self.grid), 1.0 / self.M, atol=1e-14)

    def closed_grid(self):
        return np.append(self.grid, 1.0)

    def closed_points(self):
        return np.vstack([self.points, self.points[0] + self.winding])

    def velocity(self):
        """γ̇：均匀网格上用 FFT 对周期部分求导，否则用二阶差分"""
        if self.is_uniform:
            periodic = self.points - np.outer(self.grid, self.winding)
            freqs = np.fft.fftfreq(self.M, d=1.0 / self.M)
            spectrum = np.fft.fft(periodic, axis=0)
            if self.M % 2 == 0:
                spectrum[self.M // 2] = 0.0
            deriv = np.fft.ifft(2j * np.pi * freqs[:, None] * spectrum, axis=0).real
            return deriv + self.winding[None, :]
        closed = self.closed_points()
        return np.gradient(closed, self.closed_grid(), axis=0)[:-1]

    def perturbed(self, field, h):
        """沿切向量场平移 γ + h·v（常值延拓）"""
        return DiscreteLoop(self.base, self.grid, self.points + h * field.vectors,
                            winding=self.winding, smooth=self.smooth)

    def energy(self):
        """S(γ) = ½∫|γ̇|² dτ"""
        vel = self.velocity()
        closed = np.vstack([vel, vel[:1]])
        return 0.5 * trapezoid(np.sum(closed ** 2, axis=1), self.closed_grid())

    def __repr__(self):
        return f"DiscreteLoop(n={self.base.n}, M={self.M}, winding={self.winding.tolist()}, smooth={self.smooth})"


class TangentField:
    """沿回路的切向量场 v ∈ C^∞(T, γ*TX)"""

    def __init__(self, loop, vectors):
        vectors = np.asarray(vectors, dtype=float)
        if vectors.shape != loop.points.shape:
            raise DimensionMismatchError(f"切向量形状 {vectors.shape} 与回路 {loop.points.shape} 不符")
        self.loop = loop
        self.vectors = vectors

    @classmethod
    def constant(cls, loop, v):
        return cls(loop, np.tile(np.asarray(v, dtype=float), (loop.M, 1)))

    @classmethod
    def random(cls, loop, rng, harmonics=2, scale=1.0):
        """低频随机切向量场"""
        n = loop.base.n
        vec = np.tile(rng.normal(size=n), (loop.M, 1))
        for m in range(1, harmonics + 1):
            a = rng.normal(size=n) / m
            b = rng.normal(size=n) / m
            vec += np.outer(np.cos(2 * np.pi * m * loop.grid), a) + np.outer(np.sin(2 * np.pi * m * loop.grid), b)
        return cls(loop, scale * vec)

    def closed_vectors(self):
        return np.vstack([self.vectors, self.vectors[:1]])


def make_smooth_loop(base, M=DEFAULT_GRID, winding=None, harmonics=3, amplitude=0.15, seed=0, start=None):
    """
    光滑测试回路 γ(τ) = x_0 + wτ + Σ_m (a_m cos 2πmτ + b_m sin 2πmτ)

    参数:
    base: FlatTorus
    M: 均匀网格点数
    winding: 绕数向量
    harmonics: 谐波个数
    amplitude: 第一谐波振幅，高阶按 1/m 衰减
    seed: 随机种子
    """
    rng = np.random.default_rng(seed)
    n = base.n
    grid = np.arange(M) / M
    winding = np.zeros(n, dtype=int) if winding is None else np.asarray(winding, dtype=int)
    x0 = rng.uniform(0.0, 1.0, size=n) if start is None else np.asarray(start, dtype=float)
    points = x0[None, :] + np.outer(grid, winding)
    for m in range(1, harmonics + 1):
        a = rng.normal(size=n) * amplitude / m
        b = rng.normal(size=n) * amplitude / m
        points = points + np.outer(np.cos(2 * np.pi * m * grid), a) + np.outer(np.sin(2 * np.pi * m * grid), b)
    return DiscreteLoop(base, grid, points, winding=winding, smooth=True)


def constant_loop(base, x, M=DEFAULT_GRID):
    grid = np.arange(M) / M
    return DiscreteLoop(base, grid, np.tile(np.asarray(x, dtype=float), (M, 1)), smooth=True)


# ---------------------------------------------------------------------------
# 柱形式
# ---------------------------------------------------------------------------

def trivial_lift(form, loop, tangents, index):
    """ϑ(τ)_γ[v_1,…] = ϑ_{γ(τ)}[v_1(τ),…]，τ 取第 index 个网格点"""
    return complex(form.evaluate(loop.points[index], [v.vectors[index] for v in tangents]))


def cylinder_lift(form, loop, tangents, weight=None):
    """ϑ̄_γ[v_1,…] = ∫_T φ(τ) ϑ_{γ(τ)}[v_1(τ),…] dτ，周期梯形公式"""
    values = form.evaluate(loop.points, [v.vectors for v in tangents])
    if weight is not None:
        values = values * np.asarray(weight)
    return complex(np.mean(values)) if loop.is_uniform else complex(
        trapezoid(np.append(values, values[0]), loop.closed_grid()))


# ---------------------------------------------------------------------------
# ρ 的求值
# ---------------------------------------------------------------------------

def block_distributions(p, sizes):
    """把 p 个切向量按顺序分配到大小为 sizes 的块，返回 (符号, 块列表)"""
    if not sizes:
        yield 1, []
        return
    first, rest = sizes[0], sizes[1:]
    for chosen in combinations(range(p), first):
        remaining = [i for i in range(p) if i not in chosen]
        for _, blocks in block_distributions(len(remaining), rest):
            mapped = [tuple(remaining[i] for i in block) for block in blocks]
            order = list(chosen) + [i for block in mapped for i in block]
            yield permutation_sign(order), [chosen] + mapped


def _slot_factor(slot, points, velocity, vectors):
    """(ι_Kϑ' + ϑ'')(v_block) 在闭网格上的取值"""
    values = slot.dprime.evaluate(points, vectors)
    if not slot.prime.is_zero():
        values = values + slot.prime.evaluate(points, [velocity] + list(vectors))
    return values


def _iterated_integral(factors, grid):
    running = np.ones_like(grid, dtype=complex)
    for f in factors:
        running = cumulative_integral(f * running, grid)
    return running[-1]


def _rho_word(word, loop, tangents):
    p = len(tangents)
    sizes = [slot.degree - 1 for slot in word]
    if sum(sizes) != p or any(s < 0 for s in sizes):
        return 0.0
    if not word:
        return 1.0
    grid = loop.closed_grid()
    points = loop.closed_points()
    vel = loop.velocity()
    velocity = np.vstack([vel, vel[:1]])
    vecs = [t.closed_vectors() for t in tangents]
    total = 0.0 + 0.0j
    for sign, blocks in block_distributions(p, sizes):
        factors = [_slot_factor(slot, points, velocity, [vecs[i] for i in block])
                   for slot, block in zip(word, blocks)]
        total += sign * _iterated_integral(factors, grid)
    return total


# 迭代积分映射 ρ(c)(v_1,…,v_p)
def rho_eval(c, loop, tangents, strict=True):
    """
    参数:
    c: BarChain
    loop: DiscreteLoop（必须光滑）
    tangents: TangentField 列表
    strict: 为 True 时任何词的次数 n_N 与切向量个数不符都报错；否则只计算次数相符的分量

    返回:
    复数
    """
    if not loop.smooth:
        raise NonSmoothLoopError("ρ 的确定性求值需要光滑回路，布朗样本请使用 wiener 模块")
    p = len(tangents)
    for t in tangents:
        if t.loop.M != loop.M:
            raise DimensionMismatchError("切向量场与回路的网格不一致")
    total = 0.0 + 0.0j
    for coef, word in c.terms:
        degree = prefix_shifts(word)[-1]
        if degree != p:
            if strict:
                raise TangentCountError(f"词的次数 {degree} 与切向量个数 {p} 不符")
            continue
        total += coef * _rho_word(word, loop, tangents)
    return complex(total)


def _rho_with_tangents(c, loop, tangents):
    return rho_eval(c, loop, tangents, strict=False)


def d_K_rho(c, loop, tangents, h=DEFAULT_STEP):
    """
    (d + ι_K)ρ(c) 在切向量上的值

    d 用常值延拓切向量与中心差分: dω(v_0,…,v_q) = Σ_i (−1)^i v_i[ω(…, v̂_i, …)]
    """
    q = len(tangents)
    exterior = 0.0 + 0.0j
    for i in range(q):
        others = tangents[:i] + tangents[i + 1:]
        plus = loop.perturbed(tangents[i], h)
        minus = loop.perturbed(tangents[i], -h)
        shifted_plus = [TangentField(plus, t.vectors) for t in others]
        shifted_minus = [TangentField(minus, t.vectors) for t in others]
        deriv = (_rho_with_tangents(c, plus, shifted_plus) - _rho_with_tangents(c, minus, shifted_minus)) / (2 * h)
        exterior += (-1) ** i * deriv
    K = TangentField(loop, loop.velocity())
    contraction = _rho_with_tangents(c, loop, [K] + list(tangents))
    return exterior + contraction


def chainmap_terms(c, loop, tangents, h=DEFAULT_STEP):
    """返回 d_Kρ(c)、ρ((d_T + b')c) 以及残差；链先做循环投影"""
    if not loop.smooth:
        raise NonSmoothLoopError("链映射检验需要光滑回路")
    cyc = cyclic_project(c)
    lhs = d_K_rho(cyc, loop, tangents, h)
    rhs = _rho_with_tangents(total_differential(cyc), loop, tangents)
    return {'d_K_rho': lhs, 'rho_of_differential': rhs, 'residual': abs(lhs + rhs)}


def chainmap_residual(c, loop, tangents, h=DEFAULT_STEP):
    """|d_Kρ(c) + ρ((d_T + b')c)|，在循环链上应为 O(h²) + 求积误差"""
    return chainmap_terms(c, loop, tangents, h)['residual']
