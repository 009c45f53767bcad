import hashlib
import json
import logging
import math
import warnings
from itertools import permutations

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.special import roots_legendre
from scipy.stats import qmc

logger = logging.getLogger(__name__)

# 数值积分中的下溢警告不影响结果
warnings.filterwarnings("ignore", category=RuntimeWarning, message="underflow")


# ---------------------------------------------------------------------------
# 异常体系
# ---------------------------------------------------------------------------

class LoopIntError(ValueError):
    """所有数值前置条件错误的基类"""


class UnsupportedDimensionError(LoopIntError):
    pass


class InvalidDegreeError(LoopIntError):
    pass


class DimensionMismatchError(LoopIntError):
    pass


class BaseMismatchError(LoopIntError):
    pass


class TruncationOverflowError(LoopIntError):
    pass


class UnsupportedCombinationError(LoopIntError):
    pass


class TangentCountError(LoopIntError):
    pass


class NonSmoothLoopError(LoopIntError):
    pass


class KernelDegenerateError(LoopIntError):
    pass


class QuadratureBudgetError(LoopIntError):
    pass


class StepTooCoarseError(LoopIntError):
    pass


class NonSkewError(LoopIntError):
    pass


class ConfigError(LoopIntError):
    pass


# ---------------------------------------------------------------------------
# 组合工具
# ---------------------------------------------------------------------------

def permutation_sign(perm):
    """置换的符号，perm 为 0..n-1 的排列"""
    perm = list(perm)
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def signed_permutations(n):
    """生成 (符号, 排列) 对"""
    for perm in permutations(range(n)):
        yield permutation_sign(perm), perm


def compositions_one_two(n):
    """把 n 拆成大小为 1 或 2 的有序块，返回块边界序列 s_0=0<...<s_M=n"""
    if n == 0:
        return [[0]]
    result = []

    def _walk(prefix):
        last = prefix[-1]
        if last == n:
            result.append(list(prefix))
            return
        for step in (1, 2):
            if last + step <= n:
                prefix.append(last + step)
                _walk(prefix)
                prefix.pop()

    _walk([0])
    return result


# ---------------------------------------------------------------------------
# 有序单纯形求积
# ---------------------------------------------------------------------------

def simplex_gauss_rule(dim, order):
    """
    Duffy 映射的张量 Gauss-Legendre 规则，积分区域 0<τ1<...<τ_dim<1

    参数:
    dim: 单纯形维数
    order: 每个方向的节点数

    返回:
    (points, weights): points 形状 (K, dim)，每行单调递增
    """
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = roots_legendre(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([x] * dim), indexing='ij')
    wgrids = np.meshgrid(*([w] * dim), indexing='ij')
    u = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    # τ_dim = u_dim, τ_{j} = τ_{j+1} * u_j
    tau = np.empty_like(u)
    tau[:, dim - 1] = u[:, dim - 1]
    for j in range(dim - 2, -1, -1):
        tau[:, j] = tau[:, j + 1] * u[:, j]
    jac = np.ones(len(u))
    for j in range(1, dim):
        jac *= u[:, j] ** j
    return tau, weights * jac


def simplex_qmc_rule(dim, n_points, seed=0):
    """Sobol 点排序后得到有序单纯形上的等权规则"""
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    m = int(math.ceil(math.log2(max(n_points, 2))))
    pts = np.sort(sampler.random_base2(m), axis=1)
    weights = np.full(len(pts), 1.0 / (math.factorial(dim) * len(pts)))
    return pts, weights


# ---------------------------------------------------------------------------
# 哈希与随机流
# ---------------------------------------------------------------------------

def stable_hash(payload):
    """对可 JSON 化的对象求稳定的 sha256 摘要"""
    text = json.dumps(payload, sort_keys=True, default=_json_default)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return str(obj)


def rng_stream(seed, stream):
    """计数器型随机流：(seed, stream) 唯一确定，与并行顺序无关"""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1), counter=[0, 0, 0, int(stream)]))


def pairwise_sum(values):
    """成对求和，降低大样本均值的舍入误差"""
    values = np.asarray(values)
    n = len(values)
    if n <= 8:
        return values.sum(axis=0)
    half = n // 2
    return pairwise_sum(values[:half]) + pairwise_sum(values[half:])


def sort_with_sign(idx):
    """把多重指标排成升序，返回 (符号, 升序指标)；有重复指标时符号为 0"""
    idx = list(idx)
    if len(set(idx)) != len(idx):
        return 0, ()
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return sign, tuple(idx)


def cumulative_integral(values, grid):
    """沿 axis=0 的累积 Simpson 积分，支持复数和矩阵值被积函数，首项为 0"""
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return (cumulative_simpson(values.real, x=grid, axis=0, initial=0)
                + 1j * cumulative_simpson(values.imag, x=grid, axis=0, initial=0))
    return cumulative_simpson(values, x=grid, axis=0, initial=0)


def dumps_report(payload):
    """确定性的 JSON 文本：键排序，numpy 与复数统一转换"""
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False, default=_json_default)
