"""
平坦环面回路空间上的 Wiener 测度: 柱函数积分、布朗回路采样、随机平行移动、随机顶次泛函 q̃ 与蒙特卡洛积分 I

热核约定 ∂_t = ½Δ，对应能量 S(γ) = ½∫|γ̇|²。回路测度的总质量为 Z = Σ_k e^{−2π²|k|²}，
采样器给出归一化的概率测度，估计量统一乘回 Z。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy.linalg import circulant, expm
from scipy.stats import norm

from clifford import supertrace
from iterated import DiscreteLoop
from topdegree import covector_samples, ordered_clifford_integral
from utils import (DimensionMismatchError, LoopIntError, QuadratureBudgetError, StepTooCoarseError,
                   UnsupportedCombinationError, pairwise_sum, rng_stream, signed_permutations)

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 100000
DEFAULT_LOOP_GRID = 256
CYLINDER_GRID = 32
# 一般（不可分）柱函数的张量求积点数上限
CYLINDER_POINT_BUDGET = 2e7
WINDING_RANGE = 8
HEAT_KERNEL_TOL = 1e-16
UNITARITY_TOL = 1e-10
# 单步相位超过该值视为步长过粗
MAX_STEP_PHASE = 1.0
# 样本数不足或标准误超过阈值时结果不作结论
MIN_CONCLUSIVE_SAMPLES = 1000
DEFAULT_STDERR_LIMIT = 0.05


# ---------------------------------------------------------------------------
# 热核
# ---------------------------------------------------------------------------

def _lattice_radius(t, tol=HEAT_KERNEL_TOL):
    """使 e^{−(R−½)²/(2t)} < tol 的格点半径"""
    return int(math.ceil(math.sqrt(2.0 * t * math.log(1.0 / tol)) + 1.0))


def heat_kernel(t, x, y, torus):
    """
    环面热核 p_t(x, y) = Σ_m (2πt)^{−n/2} e^{−|x−y+m|²/(2t)}

    参数:
    t: 时间，t > 0
    x, y: 形状 (..., n) 的点
    torus: FlatTorus

    返回:
    形状 (...) 的实数组；格点和按维分解并自适应截断
    """
    if t <= 0:
        raise LoopIntError(f"热核时间必须为正，收到 t={t}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != torus.n or y.shape[-1] != torus.n:
        raise DimensionMismatchError("点坐标维数与环面维数不符")
    diff = np.mod(x - y + 0.5, 1.0) - 0.5
    R = _lattice_radius(t)
    shifts = np.arange(-R, R + 1, dtype=float)
    per_dim = np.exp(-(diff[..., None] + shifts) ** 2 / (2 * t)).sum(axis=-1) / math.sqrt(2 * np.pi * t)
    return np.prod(per_dim, axis=-1)


def heat_kernel_dual(t, x, y, torus, tol=HEAT_KERNEL_TOL):
    """Fourier 侧表示 Σ_j e^{−2π²|j|²t} e^{2πij·(x−y)}，与 heat_kernel 由 Poisson 求和公式相等"""
    if t <= 0:
        raise LoopIntError(f"热核时间必须为正，收到 t={t}")
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    K = int(math.ceil(math.sqrt(math.log(1.0 / tol) / (2 * np.pi ** 2 * t)))) + 1
    modes = np.arange(-K, K + 1, dtype=float)
    per_dim = (np.exp(-2 * np.pi ** 2 * modes ** 2 * t) * np.cos(2 * np.pi * diff[..., None] * modes)).sum(axis=-1)
    return np.prod(per_dim, axis=-1)


def loop_heat_trace(torus, t=1.0):
    """Z(t) = ∫_X p_t(x,x) dx = (Σ_k e^{−2π²k²t})^n，回路测度的总质量"""
    K = int(math.ceil(math.sqrt(math.log(1.0 / HEAT_KERNEL_TOL) / (2 * np.pi ** 2 * t)))) + 1
    modes = np.arange(-K, K + 1, dtype=float)
    return float(np.exp(-2 * np.pi ** 2 * modes ** 2 * t).sum() ** torus.n)


# ---------------------------------------------------------------------------
# 柱函数
# ---------------------------------------------------------------------------

@dataclass
class CylinderFunction:
    """
    F(γ) = f(γ(τ_1), …, γ(τ_N))

    参数:
    times: 0 ≤ τ_1 < … < τ_N < 1
    f: 接受 N 个形状 (..., n) 数组的向量化函数
    factors: 可分情形 f = Π_j f_j(x_j)，每个 f_j 接受 (..., n)；与 f 二选一
    """
    times: tuple
    f: Optional[Callable] = None
    factors: Optional[list] = None

    def __post_init__(self):
        self.times = tuple(float(t) for t in self.times)
        if not self.times:
            raise LoopIntError("柱函数至少需要一个时间点")
        if self.times[0] < 0 or self.times[-1] >= 1 or any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise LoopIntError(f"时间点必须严格递增且位于 [0,1)，收到 {self.times}")
        if (self.f is None) == (self.factors is None):
            raise UnsupportedCombinationError("f 与 factors 必须恰好给出一个")
        if self.factors is not None and len(self.factors) != len(self.times):
            raise DimensionMismatchError("因子个数与时间点个数不符")

    @property
    def N(self):
        return len(self.times)

    def evaluate(self, points):
        """points: N 个形状 (..., n) 的点"""
        if self.factors is not None:
            out = 1.0
            for fj, x in zip(self.factors, points):
                out = out * np.asarray(fj(x))
            return out
        return np.asarray(self.f(*points))

    def on_loop(self, loop):
        """沿分段线性回路在各时间点取值"""
        grid = loop.closed_grid()
        closed = loop.closed_points()
        points = [np.array([np.interp(t, grid, closed[:, j]) for j in range(loop.base.n)])
                  for t in self.times]
        return self.evaluate([loop.base.wrap(p) for p in points])


def _grid_points(torus, G):
    axis = np.arange(G) / G
    mesh = np.meshgrid(*([axis] * torus.n), indexing='ij')
    return np.stack(mesh, axis=-1).reshape(-1, torus.n)


def _discrete_semigroup(torus, G, dt):
    """网格上的带限热半群 P_dt，含求积权 1/G^n"""
    k = np.fft.fftfreq(G, d=1.0 / G)
    column = np.fft.ifft(np.exp(-2 * np.pi ** 2 * k ** 2 * dt)).real
    one_dim = circulant(column)
    P = one_dim
    for _ in range(torus.n - 1):
        P = np.kron(P, one_dim)
    return P


# Wiener 公式下柱函数的积分
def cylinder_integral(F, torus, grid=CYLINDER_GRID):
    """
    ∫ f(x_1,…,x_N) Π_j p_{τ_{j+1}−τ_j}(x_j, x_{j+1}) dx，τ_{N+1} = 1+τ_1，x_{N+1} = x_1

    参数:
    F: CylinderFunction，N ≤ 4
    torus: FlatTorus
    grid: 每维的均匀网格点数，周期梯形公式对带限被积函数精确

    返回:
    复数
    """
    N = F.N
    if N > 4:
        raise QuadratureBudgetError(f"柱函数时间点 N={N} 超过上限 4")
    gaps = [b - a for a, b in zip(F.times, F.times[1:])] + [1.0 + F.times[0] - F.times[-1]]
    points = _grid_points(torus, grid)
    P = len(points)
    semigroups = [_discrete_semigroup(torus, grid, dt) for dt in gaps]
    if F.factors is not None:
        prod = np.eye(P, dtype=complex)
        for fj, Pj in zip(F.factors, semigroups):
            prod = (prod * np.asarray(fj(points))[None, :]) @ Pj
        return complex(np.trace(prod))
    if float(P) ** N > CYLINDER_POINT_BUDGET:
        raise QuadratureBudgetError(
            f"一般柱函数需要 {float(P) ** N:.1e} 个求积点，超出预算 {CYLINDER_POINT_BUDGET:.0e}；请减小 grid 或给出可分因子")
    args = [points.reshape((1,) * j + (P,) + (1,) * (N - 1 - j) + (torus.n,)) for j in range(N)]
    values = np.broadcast_to(np.asarray(F.f(*args)), (P,) * N)
    letters = 'abcd'[:N]
    subscripts = letters + ',' + ','.join(letters[j] + letters[(j + 1) % N] for j in range(N))
    return complex(np.einsum(subscripts, values, *semigroups))


# ---------------------------------------------------------------------------
# 布朗回路采样
# ---------------------------------------------------------------------------

@dataclass
class LoopSample:
    """
    一条布朗回路样本

    参数:
    loop: DiscreteLoop（smooth=False），坐标为万有覆叠上的提升
    winding_log_prob: 绕数扇区的对数概率
    seed, stream: 随机流标识，(seed, stream) 可完全复现该样本
    """
    loop: DiscreteLoop
    winding_log_prob: float
    seed: int
    stream: int

    @property
    def winding(self):
        return self.loop.winding


def _winding_distribution():
    values = np.arange(-WINDING_RANGE, WINDING_RANGE + 1)
    weights = np.exp(-0.5 * values.astype(float) ** 2)
    return values, weights / weights.sum()


# 采样一条布朗回路
def sample_brownian_loop(torus, M=DEFAULT_LOOP_GRID, seed=0, stream=0):
    """
    起点在 X 上均匀分布，绕数 m 按 ∝ e^{−|m|²/2} 抽取，扇区内在覆叠上精确采样布朗桥

    参数:
    torus: FlatTorus
    M: 时间网格点数，M ≥ 2
    seed: 随机种子
    stream: 样本编号

    返回:
    LoopSample
    """
    if M < 2:
        raise LoopIntError(f"回路网格点数至少为 2，收到 M={M}")
    rng = rng_stream(seed, stream)
    n = torus.n
    values, probs = _winding_distribution()
    picks = rng.choice(len(values), size=n, p=probs)
    winding = values[picks]
    log_prob = float(np.log(probs[picks]).sum())
    x0 = rng.uniform(0.0, 1.0, size=n)
    increments = rng.normal(scale=math.sqrt(1.0 / M), size=(M, n))
    walk = np.vstack([np.zeros(n), np.cumsum(increments, axis=0)])
    tau = np.arange(M + 1) / M
    bridge = walk - np.outer(tau, walk[-1])
    points = x0[None, :] + np.outer(tau, winding) + bridge
    loop = DiscreteLoop(torus, tau[:-1], points[:-1], winding=winding, smooth=False)
    return LoopSample(loop=loop, winding_log_prob=log_prob, seed=int(seed), stream=int(stream))


def iter_samples(torus, S, M=DEFAULT_LOOP_GRID, seed=0, start=0):
    for s in range(start, start + S):
        yield sample_brownian_loop(torus, M, seed, s)


def _mean_and_stderr(values):
    values = np.asarray(values, dtype=complex)
    S = len(values)
    mean = pairwise_sum(values) / S
    if S < 2:
        return complex(mean), float('inf')
    var = (np.var(values.real, ddof=1) + np.var(values.imag, ddof=1)) / S
    return complex(mean), float(math.sqrt(var))


def cylinder_mc(F, torus, S=DEFAULT_SAMPLES, M=DEFAULT_LOOP_GRID, seed=0):
    """Z · E[F(γ)] 的蒙特卡洛估计，返回 (估计值, 标准误)"""
    Z = loop_heat_trace(torus)
    values = [F.on_loop(sample.loop) for sample in iter_samples(torus, S, M, seed)]
    mean, stderr = _mean_and_stderr(values)
    return Z * mean, Z * stderr


# ---------------------------------------------------------------------------
# 随机平行移动
# ---------------------------------------------------------------------------

def _magnetic_phase(flux, closed):
    """覆叠上 A = iπk(x dy − y dx) 的中点格式线积分，加上绕数扇区的转移函数修正"""
    mid = 0.5 * (closed[1:] + closed[:-1])
    step = np.diff(closed, axis=0)
    increments = 1j * np.pi * flux * (mid[:, 0] * step[:, 1] - mid[:, 1] * step[:, 0])
    if np.abs(increments).max(initial=0.0) > MAX_STEP_PHASE:
        raise StepTooCoarseError("单步相位过大，请加密回路网格")
    m = np.round(closed[-1] - closed[0])
    x0 = closed[0]
    correction = 1j * np.pi * flux * (m[0] * x0[1] - m[1] * x0[0])
    return np.exp(-pairwise_sum(increments) + correction)


def stochastic_parallel_transport(bundle, sample):
    """
    沿样本回路从 τ=0 到 τ=1 的平行移动 Π exp(−A(中点)·Δx)，较晚的步在左

    参数:
    bundle: BundleModel
    sample: LoopSample 或 DiscreteLoop

    返回:
    rank × rank 的酉矩阵
    """
    loop = sample.loop if isinstance(sample, LoopSample) else sample
    if bundle.base != loop.base:
        raise DimensionMismatchError("丛与回路不在同一环面上")
    closed = loop.closed_points()
    if bundle.kind == 'magnetic':
        U = np.array([[_magnetic_phase(bundle.flux, closed)]], dtype=complex)
    elif bundle.potential is None:
        return np.eye(bundle.rank, dtype=complex)
    else:
        r = bundle.rank
        mid = 0.5 * (closed[1:] + closed[:-1])
        step = np.diff(closed, axis=0)
        local = np.zeros((len(step), r, r), dtype=complex)
        for a in range(r):
            for b in range(r):
                local[:, a, b] = bundle.potential[a][b].evaluate(mid, [step])
        if np.abs(local).max(initial=0.0) > MAX_STEP_PHASE:
            raise StepTooCoarseError("单步联络增量过大，请加密回路网格")
        U = np.eye(r, dtype=complex)
        for k in range(len(step)):
            U = expm(-local[k]) @ U
    defect = float(np.abs(U.conj().T @ U - np.eye(U.shape[0])).max())
    if defect > UNITARITY_TOL:
        raise StepTooCoarseError(f"平行移动偏离酉性 {defect:.2e}")
    return U


# ---------------------------------------------------------------------------
# 随机顶次泛函与积分 I
# ---------------------------------------------------------------------------

def q_tilde(rep, sample, thetas, bundle=None):
    """
    在采样网格上求 q̃(θ_N∧⋯∧θ_1) = 2^{−N/2} Σ_σ sgn(σ) ∫_{Δ_N} str(Π c(θ_{σ_a}(γ(τ_a)))) dτ

    bundle 给出时乘以平行移动的迹（标量 1-形式与丛因子对易）

    参数:
    rep: SpinorRep
    sample: LoopSample
    thetas: N ≤ 4 个 1-形式
    """
    loop = sample.loop if isinstance(sample, LoopSample) else sample
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
    value = 2.0 ** (-N / 2) * total
    if bundle is not None:
        value *= np.trace(stochastic_parallel_transport(bundle, loop))
    return complex(value)


def scalar_curvature_weight(torus, sample):
    """exp(−⅛∫_0^1 scal(γ(τ)) dτ)；平坦环面上恒为 1"""
    return math.exp(-0.125 * torus.scalar_curvature)


@dataclass
class MCEstimate:
    estimate: complex
    stderr: float
    samples: int
    grid: int
    seed: int
    normalization: float
    inconclusive: bool
    log: Optional[pd.DataFrame] = field(default=None, repr=False)

    def z_score(self, reference):
        if self.stderr == 0:
            return 0.0 if abs(self.estimate - reference) < 1e-12 else float('inf')
        return float(abs(self.estimate - reference) / self.stderr)

    def to_record(self):
        return {
            'mean_re': self.estimate.real,
            'mean_im': self.estimate.imag,
            'stderr': self.stderr,
            'S': self.samples,
            'M': self.grid,
            'seed': self.seed,
            'inconclusive': self.inconclusive,
        }


# 蒙特卡洛路径积分 I[θ̄]
def integral_I_mc(rep, torus, thetas, S=DEFAULT_SAMPLES, M=DEFAULT_LOOP_GRID, seed=0,
                  stderr_limit=DEFAULT_STDERR_LIMIT, bundle=None, log_path=None):
    """
    参数:
    rep: SpinorRep
    torus: FlatTorus
    thetas: N ≤ 4 个有界 1-形式
    S: 样本数
    M: 回路网格点数
    seed: 随机种子
    stderr_limit: 标准误上限，超过即标记为不作结论
    log_path: 给出时把逐样本取值写成 CSV

    返回:
    MCEstimate，估计值 = Z · mean(q̃ · exp(−⅛∫scal))
    """
    if len(thetas) > 4:
        raise QuadratureBudgetError(f"N={len(thetas)} 超过上限 4")
    Z = loop_heat_trace(torus)
    rows = []
    values = np.empty(S, dtype=complex)
    for s, sample in enumerate(iter_samples(torus, S, M, seed)):
        q = q_tilde(rep, sample, thetas, bundle=bundle) * scalar_curvature_weight(torus, sample)
        values[s] = q
        if log_path is not None:
            rows.append({'stream': sample.stream, 'winding': sample.winding.tolist(),
                         'value_re': q.real, 'value_im': q.imag})
    mean, stderr = _mean_and_stderr(values)
    inconclusive = S < MIN_CONCLUSIVE_SAMPLES or Z * stderr > stderr_limit
    log = None
    if log_path is not None:
        log = pd.DataFrame(rows)
        log.to_csv(log_path, index=False)
        logger.info("✅ 样本日志已写入 %s", log_path)
    if inconclusive:
        logger.warning("⚠️ 蒙特卡洛结果不作结论: S=%d, 标准误=%.3e", S, Z * stderr)
    return MCEstimate(estimate=Z * mean, stderr=Z * stderr, samples=S, grid=M, seed=int(seed),
                      normalization=Z, inconclusive=bool(inconclusive), log=log)


def two_sided_pvalue(z):
    """|z| 对应的双侧正态 p 值"""
    return float(2 * norm.sf(abs(z)))
