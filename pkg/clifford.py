"""
复 Clifford 代数在偶数维的旋量表示

约定: c(v)^2 = -|v|^2，γ_i 反自伴；分次算子 Γ = (-i)^{n/2} γ_0⋯γ_{n-1}，
在 Jordan-Wigner 构造下恰为对角阵 Z⊗⋯⊗Z。
"""
import logging
from dataclasses import dataclass, field
from functools import reduce
from itertools import combinations

import numpy as np

from utils import DimensionMismatchError, InvalidDegreeError, UnsupportedDimensionError, sort_with_sign

logger = logging.getLogger(__name__)

# 超迹归一化常数：由 flux=+1 模型的指标为 +1 一次性标定
STR_NORMALIZER = -1.0 + 0.0j

_PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
_PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_ID2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class SpinorRep:
    n: int
    gamma: tuple
    grading: np.ndarray
    str_normalizer: complex = STR_NORMALIZER
    # 升序多重指标 -> γ_{i1}⋯γ_{ip}
    products: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self):
        return self.grading.shape[0]


def _kron_all(mats):
    return reduce(np.kron, mats)


# 构造偶数维旋量表示
def build_spinor_rep(n):
    """
    参数:
    n: 偶数维数，2 ≤ n ≤ 8

    返回:
    SpinorRep，满足 Clifford 关系、分次反交换、γ 反自伴
    """
    if not isinstance(n, (int, np.integer)) or n % 2 != 0 or n < 2 or n > 8:
        raise UnsupportedDimensionError(f"不支持的维数 n={n}，需为 2..8 之间的偶数")
    m = n // 2
    gammas = []
    for k in range(m):
        for pauli in (_PAULI_X, _PAULI_Y):
            mats = [_PAULI_Z] * k + [pauli] + [_ID2] * (m - k - 1)
            gammas.append(1j * _kron_all(mats))
    grading = _kron_all([_PAULI_Z] * m)

    products = {(): np.eye(2 ** m, dtype=complex)}
    for p in range(1, n + 1):
        for idx in combinations(range(n), p):
            products[idx] = reduce(np.matmul, [gammas[i] for i in idx])
    rep = SpinorRep(n=n, gamma=tuple(gammas), grading=grading, products=products)
    logger.debug("旋量表示已构造: n=%d, dim=%d", n, rep.dim)
    return rep


# Clifford 乘法（常系数外形式的量子化映射）
def clifford_mult(rep, form):
    """
    参数:
    rep: SpinorRep
    form: 长度 n 的向量（1-形式），或 {指标元组: 系数} 字典（可混合次数）

    返回:
    rep.dim × rep.dim 复矩阵
    """
    if isinstance(form, dict):
        terms = form
    else:
        vec = np.asarray(form)
        if vec.shape != (rep.n,):
            raise DimensionMismatchError(f"1-形式长度 {vec.shape} 与维数 {rep.n} 不符")
        terms = {(i,): vec[i] for i in range(rep.n)}
    out = np.zeros((rep.dim, rep.dim), dtype=complex)
    for idx, coef in terms.items():
        if coef == 0:
            continue
        if len(idx) > rep.n:
            raise InvalidDegreeError(f"形式次数 {len(idx)} 超过维数 {rep.n}")
        if any(i < 0 or i >= rep.n for i in idx):
            raise InvalidDegreeError(f"非法指标 {idx}")
        sign, key = sort_with_sign(idx)
        if sign == 0:
            continue
        out += sign * coef * rep.products[key]
    return out


# 超迹 str(M) = 归一化常数 · tr(Γ M)
def supertrace(rep, M):
    M = np.asarray(M)
    if M.shape != (rep.dim, rep.dim):
        raise DimensionMismatchError(f"矩阵形状 {M.shape} 与旋量维数 {rep.dim} 不符")
    return rep.str_normalizer * np.trace(rep.grading @ M)
