"""
算子型 Chern 特征上链 Ch_D、上链 μ₀、余闭性与 Chen 正规化检验，以及 1-形式的组合积分公式

权重约定: 2^{−n_N/2} 按槽位分配，等价于把 c 与 D 都换成 c/√2 与 D/√2（此时 H = D²/2 = (D/√2)²）。
次数为 p 的槽位中 ϑ'' 部分带 s^{p−1}，ϑ' 部分带 s^{p+1}，两槽块带 s^{p1+p2}，s = 2^{−1/2}。
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from barcplx import BarChain, dumps_chain, total_differential
from forms import FlatTorus, ScalarForm, TForm, exterior_d, integrate_top, wedge
from operators import (DEFAULT_QUAD_ORDER, mckean_singer, mult_operator, simplex_operator_integral,
                       spectral_truncation_error)
from utils import QuadratureBudgetError, compositions_one_two, signed_permutations, stable_hash

logger = logging.getLogger(__name__)

SLOT_SCALE = 2.0 ** -0.5
MAX_WORD_LENGTH = 4


@dataclass
class FCochainTerm:
    """F 上链在一个分块上的值；arity ≥ 3 恒为零，从不构造"""
    arity: int
    operator: np.ndarray
    start: int = 0


def _graded_commutator(D, C, parity):
    """[D, C] = DC − (−1)^{|C|} CD，D 为奇算子"""
    return D @ C - (-1) ** parity * (C @ D)


# 单槽 F[ϑ] = c(ϑ'') + [D, c(ϑ')] − c(dϑ')，方括号为分次交换子
def F_one(m, theta, scale=1.0):
    """
    参数:
    m: SpectralModel
    theta: TForm
    scale: 槽位权重 s；s=1 即字面公式

    返回:
    m.dim × m.dim 矩阵
    """
    out = np.zeros((m.dim, m.dim), dtype=complex)
    for part in theta.homogeneous_parts():
        p = part.degree
        if not part.dprime.is_zero():
            out += scale ** (p - 1) * mult_operator(m, part.dprime)
        if not part.prime.is_zero():
            c_prime = mult_operator(m, part.prime)
            c_dprime = mult_operator(m, exterior_d(part.prime))
            out += scale ** (p + 1) * (_graded_commutator(m.D, c_prime, p) - c_dprime)
    return out


# 双槽 F[ϑ1, ϑ2] = (−1)^{|ϑ1'|}(c(ϑ1')c(ϑ2') − c(ϑ1'∧ϑ2'))
def F_two(m, theta1, theta2, scale=1.0):
    out = np.zeros((m.dim, m.dim), dtype=complex)
    for part1 in theta1.homogeneous_parts():
        if part1.prime.is_zero():
            continue
        c1 = mult_operator(m, part1.prime)
        sign = -1.0 if part1.degree % 2 else 1.0
        for part2 in theta2.homogeneous_parts():
            if part2.prime.is_zero():
                continue
            c2 = mult_operator(m, part2.prime)
            c12 = mult_operator(m, wedge(part1.prime, part2.prime))
            out += scale ** (part1.degree + part2.degree) * sign * (c1 @ c2 - c12)
    return out


def f_cochain_terms(m, word, boundaries, scale=SLOT_SCALE, cache=None):
    """按分块边界 s_0 < … < s_M 生成 F 因子"""
    cache = {} if cache is None else cache
    terms = []
    for a in range(1, len(boundaries)):
        lo, hi = boundaries[a - 1], boundaries[a]
        key = (lo, hi)
        if key not in cache:
            if hi - lo == 1:
                cache[key] = F_one(m, word[lo], scale)
            else:
                cache[key] = F_two(m, word[lo], word[lo + 1], scale)
        terms.append(FCochainTerm(arity=hi - lo, operator=cache[key], start=lo))
    return terms


def _chern_word(m, word, order, method, scale):
    N = len(word)
    if N > MAX_WORD_LENGTH:
        raise QuadratureBudgetError(f"词长 N={N} 超过上限 {MAX_WORD_LENGTH}")
    cache = {}
    total = 0.0 + 0.0j
    for boundaries in compositions_one_two(N):
        terms = f_cochain_terms(m, word, boundaries, scale, cache)
        factors = [t.operator for t in terms]
        if any(not np.any(F) for F in factors):
            continue
        total += simplex_operator_integral(m, factors, order=order, method=method)
    return total


# Chern 特征 Ch_D[c]
def chern_character(m, c, order=DEFAULT_QUAD_ORDER, method='auto', scale=SLOT_SCALE):
    """
    参数:
    m: SpectralModel
    c: BarChain，词长 ≤ 4
    order: 单纯形求积阶数（method='gauss' 时生效）
    method: 传给 simplex_operator_integral
    scale: 槽位权重，默认 2^{−1/2}

    返回:
    复数 Σ_s ∫_{Δ_M} Str(e^{−τ_1 H} Π F[...] e^{−(τ_a−τ_{a−1})H}) dτ
    """
    total = 0.0 + 0.0j
    for coef, word in c.terms:
        total += coef * _chern_word(m, word, order, method, scale)
    return complex(total)


def chern_report(m, c, order=DEFAULT_QUAD_ORDER, method='auto'):
    """单次求值的报告条目"""
    value = chern_character(m, c, order=order, method=method)
    return {
        'model': m.cache_key(),
        'chain': stable_hash(dumps_chain(c))[:16],
        'value': [value.real, value.imag],
        'order': order,
        'method': method,
        'estimated_error': spectral_truncation_error(m),
    }


# 组合公式: 1-形式的积分映射
def integral_map_one_forms(m, one_forms, order=DEFAULT_QUAD_ORDER, method='auto'):
    """
    参数:
    m: SpectralModel
    one_forms: N 个 1-形式（ScalarForm），N ≤ 4

    返回:
    2^{−N/2} Σ_σ sgn(σ) ∫_{Δ_N} Str(e^{−τ_1 H} c(ϑ_{σ1}) ⋯ c(ϑ_{σN}) e^{−(1−τ_N)H}) dτ
    """
    N = len(one_forms)
    if N > MAX_WORD_LENGTH:
        raise QuadratureBudgetError(f"1-形式个数 N={N} 超过上限 {MAX_WORD_LENGTH}")
    if N == 0:
        return mckean_singer(m, 1.0)
    mats = [mult_operator(m, form) for form in one_forms]
    total = 0.0 + 0.0j
    for sign, perm in signed_permutations(N):
        total += sign * simplex_operator_integral(m, [mats[i] for i in perm], order=order, method=method)
    return complex(2.0 ** (-N / 2) * total)


# 有限维上链 μ₀
def mu0(c, ahat=None, base=None):
    """
    参数:
    c: BarChain
    ahat: Â 形式，None 表示平坦环面上的 1
    base: 空词时用于确定环面维数

    返回:
    Σ coef · (2π)^{−n/2}/N! ∫_X Â∧ϑ_1''∧⋯∧ϑ_N''
    """
    total = 0.0 + 0.0j
    for coef, word in c.terms:
        torus = ahat.base if ahat is not None else (word[0].base if word else base)
        if torus is None:
            torus = FlatTorus(2)
        n = torus.n
        form = ahat if ahat is not None else ScalarForm.constant(torus, 1.0)
        for slot in word:
            form = wedge(form, slot.dprime)
            if form.is_zero():
                break
        total += coef * integrate_top(form) / ((2 * np.pi) ** (n / 2) * math.factorial(len(word)))
    return complex(total)


def coclosedness_residual(m, c, order=DEFAULT_QUAD_ORDER, method='auto'):
    """|Ch_D[(d + b')c]|"""
    return abs(chern_character(m, total_differential(c), order=order, method=method))


def coclosedness_report(m, c, order=DEFAULT_QUAD_ORDER, method='auto'):
    """绝对残差以及相对于各项量级之和的相对残差"""
    image = total_differential(c)
    residual = abs(chern_character(m, image, order=order, method=method))
    reference = sum(abs(coef * _chern_word(m, word, order, method, SLOT_SCALE)) for coef, word in image.terms)
    relative = residual / reference if reference > 0 else 0.0
    return {'residual': residual, 'reference': reference, 'relative': relative}


def chen_normalization_residual(m, c, order=DEFAULT_QUAD_ORDER, method='auto'):
    """
    在每个位置插入单位 0-形式后 Ch_D 的最大模；ρ 在这些链上恒为零

    参数:
    m: SpectralModel
    c: BarChain，词长 ≤ 3
    """
    worst = 0.0
    for coef, word in c.terms:
        base = word[0].base if word else m.base
        unit = TForm(ScalarForm.constant(base, 1.0), degree=0)
        for k in range(len(word) + 1):
            padded = BarChain([(coef, word[:k] + (unit,) + word[k:])])
            worst = max(worst, abs(chern_character(m, padded, order=order, method=method)))
    return worst
