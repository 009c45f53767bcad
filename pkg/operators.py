"""
平坦环面上（扭曲）Dirac 算子的有限谱模型、热半群、算子超迹与有序单纯形上的算子积分

两类模型:
- 平凡丛 + 位势: Fourier 模 |k|_∞ ≤ Λ ⊗ 旋量 ⊗ 丛指标，D = Σ_j c(e^j)(∂_j + A_j)
- 磁线丛（T², 通量 k）: Landau 能级 ⊗ 旋量，两个手征块能级数相差 1，避免截断产生的伪零模
"""
import hashlib
import logging
import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.linalg import eigh, expm

import spectral_cache
from clifford import build_spinor_rep, clifford_mult
from forms import FlatTorus, ScalarForm, dumps_form
from utils import (DimensionMismatchError, LoopIntError, NonSkewError, QuadratureBudgetError,
                   TruncationOverflowError, UnsupportedCombinationError, UnsupportedDimensionError,
                   simplex_gauss_rule, simplex_qmc_rule, stable_hash)

logger = logging.getLogger(__name__)

DEFAULT_FLAT_CUTOFF = 6
DEFAULT_LEVELS = 40
DEFAULT_QUAD_ORDER = 8
DEFAULT_QMC_SAMPLES = 20000
# Gauss/QMC 路径允许的最大浮点运算量
QUADRATURE_FLOP_BUDGET = 5e11
# auto 模式下块矩阵指数的最大维数 (N+1)·dim，超出时改用 Duffy Gauss（N ≤ 2）或 QMC（N ≥ 3）
EXPM_BLOCK_LIMIT = 4000


@dataclass
class BundleModel:
    """
    参数:
    kind: 'trivial'（平凡丛 + 联络位势）或 'magnetic'（T² 上通量为 flux 的线丛）
    base: FlatTorus
    rank: 丛的秩
    potential: r×r 的 1-形式矩阵（ScalarForm），None 表示 A = 0
    flux: 磁通量 k
    levels: Landau 能级数 L
    """
    kind: str
    base: FlatTorus
    rank: int = 1
    potential: list = None
    flux: int = 0
    levels: int = DEFAULT_LEVELS

    def __post_init__(self):
        if self.kind not in ('trivial', 'magnetic'):
            raise UnsupportedCombinationError(f"未知的丛类型 {self.kind}")
        if self.kind == 'magnetic':
            if self.base.n != 2:
                raise UnsupportedDimensionError("磁线丛模型只在 T² 上实现")
            if self.flux == 0:
                raise UnsupportedCombinationError("flux=0 请使用 build_dirac_flat")
            if self.levels < 2:
                raise UnsupportedCombinationError("Landau 能级数 L 至少为 2")
            self.rank = 1
        if self.potential is not None:
            self._check_potential()

    @classmethod
    def trivial(cls, base, rank=1, potential=None):
        return cls('trivial', base, rank=rank, potential=potential)

    @classmethod
    def magnetic(cls, flux, levels=DEFAULT_LEVELS):
        return cls('magnetic', FlatTorus(2), rank=1, flux=int(flux), levels=int(levels))

    def _check_potential(self, tol=1e-12):
        A = self.potential
        r = self.rank
        if len(A) != r or any(len(row) != r for row in A):
            raise DimensionMismatchError(f"位势矩阵应为 {r}×{r}")
        for i in range(r):
            for j in range(i, r):
                if any(p != 1 for p in A[i][j].degrees()):
                    raise UnsupportedCombinationError("联络位势的分量必须是 1-形式")
                if not (A[i][j] + A[j][i].conj()).is_zero(tol):
                    raise NonSkewError(f"位势在 ({i},{j}) 处不是反厄米的")

    def describe(self):
        if self.kind == 'magnetic':
            return {'kind': 'magnetic', 'flux': self.flux, 'levels': self.levels}
        pot = None
        if self.potential is not None:
            pot = [[dumps_form(a) for a in row] for row in self.potential]
        return {'kind': 'trivial', 'n': self.base.n, 'rank': self.rank, 'potential': pot}


class SpectralModel:
    """
    有限矩阵模型: D、分次 Γ、H = D²/2，本征分解惰性计算并可落盘缓存

    参数:
    kind: 'flat' 或 'magnetic'
    D: 自伴矩阵
    grading: 与 D 反交换的对合
    rep: SpinorRep
    basis: 基的描述（Fourier 模列表或 Landau 块大小）
    meta: 截断参数等
    multiplicity: 超迹的重数因子（磁模型为 |k|）
    """

    def __init__(self, kind, D, grading, rep, basis, meta, multiplicity=1, use_cache=False):
        self.kind = kind
        self.D = np.asarray(D, dtype=complex)
        self.grading = np.asarray(grading, dtype=complex)
        self.rep = rep
        self.basis = basis
        self.meta = dict(meta)
        self.multiplicity = int(multiplicity)
        self.use_cache = use_cache
        self.H = 0.5 * self.D @ self.D
        self._eigen = None

    @property
    def dim(self):
        return self.D.shape[0]

    @property
    def str_normalizer(self):
        return self.rep.str_normalizer

    @property
    def base(self):
        return FlatTorus(self.rep.n)

    def cache_key(self):
        digest = hashlib.sha256(np.ascontiguousarray(self.D).tobytes()).hexdigest()
        return stable_hash([self.kind, self.meta, digest])[:32]

    def eigen(self):
        """H 的本征分解 (λ, V)，λ 升序"""
        if self._eigen is not None:
            return self._eigen
        key = self.cache_key()
        if self.use_cache and spectral_cache.is_cache_valid(key):
            cached = spectral_cache.load_from_cache(key)
            if cached is not None and cached[1].shape == self.D.shape:
                self._eigen = (cached[0], cached[1])
                return self._eigen
        evals, evecs = eigh(self.H)
        evals = np.clip(evals, 0.0, None)
        self._eigen = (evals, evecs)
        if self.use_cache:
            spectral_cache.save_to_cache(key, evals, evecs, {'kind': self.kind, **self.meta})
        return self._eigen

    def dirac_spectrum(self):
        return np.linalg.eigvalsh(self.D)

    def check_invariants(self, tol=1e-10):
        """返回三条不变量的残差"""
        return {
            'self_adjoint': float(np.abs(self.D - self.D.conj().T).max()),
            'anticommute': float(np.abs(self.grading @ self.D + self.D @ self.grading).max()),
            'min_H_eigenvalue': float(np.linalg.eigvalsh(self.H).min()),
            'ok': bool(np.abs(self.D - self.D.conj().T).max() < tol and
                       np.abs(self.grading @ self.D + self.D @ self.grading).max() < tol),
        }

    def __repr__(self):
        return f"SpectralModel(kind={self.kind}, dim={self.dim}, meta={self.meta})"


# ---------------------------------------------------------------------------
# 平坦模型
# ---------------------------------------------------------------------------

def _mode_list(n, cutoff):
    return [tuple(k) for k in product(range(-cutoff, cutoff + 1), repeat=n)]


def _shift_matrix(modes, index, q):
    """(S_q)[k+q, k] = 1，超出截断的模被丢弃"""
    S = np.zeros((len(modes), len(modes)), dtype=complex)
    for col, k in enumerate(modes):
        target = tuple(a + b for a, b in zip(k, q))
        row = index.get(target)
        if row is not None:
            S[row, col] = 1.0
    return S


def _flat_multiplier(model, form, bundle_matrix):
    basis = model.basis
    modes, index = basis['modes'], basis['index']
    rep = model.rep
    out = np.zeros((model.dim, model.dim), dtype=complex)
    if form.linear:
        raise UnsupportedCombinationError("平坦模型不支持仿射系数的形式")
    shifts = {}
    for (idx, q), c in form.coeffs.items():
        if q not in shifts:
            shifts[q] = _shift_matrix(modes, index, q)
        out += c * np.kron(np.kron(shifts[q], clifford_mult(rep, {idx: 1.0})), bundle_matrix)
    return out


# 构造平凡丛（可带位势）上的 Dirac 算子
def build_dirac_flat(torus, cutoff=DEFAULT_FLAT_CUTOFF, bundle=None, rep=None, use_cache=False):
    """
    参数:
    torus: FlatTorus
    cutoff: Fourier 截断 Λ
    bundle: BundleModel(kind='trivial')，None 表示秩 1 平凡丛
    rep: SpinorRep，None 时按维数构造

    返回:
    SpectralModel，D = D_0 + c(A)
    """
    if bundle is None:
        bundle = BundleModel.trivial(torus)
    if bundle.kind != 'trivial':
        raise UnsupportedCombinationError("磁线丛请使用 build_dirac_magnetic")
    rep = rep or build_spinor_rep(torus.n)
    if rep.n != torus.n:
        raise DimensionMismatchError(f"旋量表示维数 {rep.n} 与环面维数 {torus.n} 不符")
    r = bundle.rank
    modes = _mode_list(torus.n, cutoff)
    index = {k: i for i, k in enumerate(modes)}
    mode_arr = np.array(modes, dtype=float)

    D = np.zeros((len(modes) * rep.dim * r,) * 2, dtype=complex)
    id_r = np.eye(r)
    for j in range(torus.n):
        deriv = np.diag(2j * np.pi * mode_arr[:, j])
        D += np.kron(np.kron(deriv, rep.gamma[j]), id_r)
    grading = np.kron(np.kron(np.eye(len(modes)), rep.grading), id_r)

    meta = {'n': torus.n, 'cutoff': int(cutoff), 'rank': r, 'bundle': bundle.describe(),
            'next_energy': 2 * np.pi ** 2 * (cutoff + 1) ** 2}
    basis = {'modes': modes, 'index': index, 'rank': r}
    model = SpectralModel('flat', D, grading, rep, basis, meta, use_cache=use_cache)

    if bundle.potential is not None:
        for row in bundle.potential:
            for a in row:
                if any(max(abs(m) for m in q) > cutoff for _, q in a.coeffs):
                    raise TruncationOverflowError(f"位势的 Fourier 支撑超出截断 Λ={cutoff}")
        model.D = model.D + mult_operator(model, bundle.potential)
        model.H = 0.5 * model.D @ model.D
    logger.debug("平坦 Dirac 模型: n=%d, Λ=%d, 秩=%d, 维数=%d", torus.n, cutoff, r, model.dim)
    return model


# ---------------------------------------------------------------------------
# 磁模型
# ---------------------------------------------------------------------------

# 构造 T² 上通量 k 线丛的 Landau 能级模型
def build_dirac_magnetic(k, levels=DEFAULT_LEVELS, rep=None, use_cache=False):
    """
    参数:
    k: 非零整数通量
    levels: 大块的能级数 L，小块为 L−1

    返回:
    SpectralModel，ker D 落在一个手征块中，超迹重数为 |k|
    """
    bundle = BundleModel.magnetic(k, levels)
    rep = rep or build_spinor_rep(2)
    if rep.n != 2:
        raise UnsupportedDimensionError("磁模型需要二维旋量表示")
    L = bundle.levels
    kk = abs(int(k))
    # 湮灭算子块: 大块能级 n -> 小块能级 n−1
    annihilate = np.zeros((L - 1, L), dtype=complex)
    for n_level in range(1, L):
        annihilate[n_level - 1, n_level] = math.sqrt(4 * np.pi * kk * n_level)
    if k > 0:
        sizes = (L - 1, L)
        upper_right = annihilate
    else:
        sizes = (L, L - 1)
        upper_right = annihilate.conj().T
    nu, nl = sizes
    D = np.zeros((nu + nl, nu + nl), dtype=complex)
    D[:nu, nu:] = upper_right
    D[nu:, :nu] = upper_right.conj().T
    grading = np.diag(np.concatenate([np.ones(nu), -np.ones(nl)])).astype(complex)
    # 两个块共有的能级之间的矩形单位阵
    bridge = np.eye(nu, nl, dtype=complex)
    meta = {'flux': int(k), 'levels': L, 'next_energy': 2 * np.pi * kk * L}
    basis = {'sizes': sizes, 'bridge': bridge}
    model = SpectralModel('magnetic', D, grading, rep, basis, meta, multiplicity=kk, use_cache=use_cache)
    logger.debug("磁 Dirac 模型: k=%d, L=%d, 维数=%d", k, L, model.dim)
    return model


def _magnetic_multiplier(model, form):
    if form.linear or any(any(q) for _, q in form.coeffs):
        raise UnsupportedCombinationError("磁模型只支持常系数形式的 Clifford 乘法")
    spin = clifford_mult(model.rep, {idx: c for (idx, _), c in form.coeffs.items()})
    nu, nl = model.basis['sizes']
    P = model.basis['bridge']
    out = np.zeros((model.dim, model.dim), dtype=complex)
    out[:nu, :nu] = spin[0, 0] * np.eye(nu)
    out[:nu, nu:] = spin[0, 1] * P
    out[nu:, :nu] = spin[1, 0] * P.T
    out[nu:, nu:] = spin[1, 1] * np.eye(nl)
    return out


# Clifford 乘法算子 c(ϑ)
def mult_operator(m, form):
    """
    参数:
    m: SpectralModel
    form: ScalarForm，或 r×r 的 ScalarForm 矩阵（丛值形式）

    返回:
    m.dim × m.dim 矩阵
    """
    if isinstance(form, ScalarForm):
        if m.kind == 'magnetic':
            return _magnetic_multiplier(m, form)
        return _flat_multiplier(m, form, np.eye(m.basis['rank']))
    if m.kind == 'magnetic':
        if len(form) != 1:
            raise DimensionMismatchError("磁模型的丛秩为 1")
        return _magnetic_multiplier(m, form[0][0])
    r = m.basis['rank']
    if len(form) != r or any(len(row) != r for row in form):
        raise DimensionMismatchError(f"丛值形式应为 {r}×{r}")
    out = np.zeros((m.dim, m.dim), dtype=complex)
    for a in range(r):
        for b in range(r):
            if form[a][b].is_zero():
                continue
            unit = np.zeros((r, r))
            unit[a, b] = 1.0
            out += _flat_multiplier(m, form[a][b], unit)
    return out


def twist_model(m, potential):
    """在已有模型上加常数（或 Fourier 截断）位势: D -> D + c(A)"""
    shift = mult_operator(m, potential)
    twisted = SpectralModel(m.kind, m.D + shift, m.grading, m.rep, m.basis,
                            {**m.meta, 'twist': hashlib.sha256(np.ascontiguousarray(shift).tobytes()).hexdigest()[:16]},
                            multiplicity=m.multiplicity, use_cache=m.use_cache)
    if np.abs(twisted.grading @ shift + shift @ twisted.grading).max() > 1e-10:
        raise UnsupportedCombinationError("扭曲项必须是奇算子（1-形式位势）")
    return twisted


# ---------------------------------------------------------------------------
# 热半群与超迹
# ---------------------------------------------------------------------------

def heat_semigroup(m, t):
    """e^{−tH}，经由本征分解"""
    if t < 0:
        raise LoopIntError(f"热半群时间必须非负，收到 t={t}")
    evals, evecs = m.eigen()
    return (evecs * np.exp(-t * evals)) @ evecs.conj().T


def str_op(m, M):
    """str_normalizer · 重数 · tr(Γ M)"""
    M = np.asarray(M)
    if M.shape != (m.dim, m.dim):
        raise DimensionMismatchError(f"矩阵形状 {M.shape} 与模型维数 {m.dim} 不符")
    return complex(m.str_normalizer * m.multiplicity * np.trace(m.grading @ M))


def mckean_singer(m, t=1.0):
    """Str(e^{−tD²/2})，与 t 无关"""
    if t <= 0:
        raise LoopIntError(f"McKean-Singer 需要 t > 0，收到 t={t}")
    evals, evecs = m.eigen()
    graded = np.einsum('ij,ji->i', evecs.conj().T, m.grading @ evecs)
    return complex(m.str_normalizer * m.multiplicity * np.sum(graded * np.exp(-t * evals)))


def spectral_truncation_error(m):
    """被截断的最大热权重 e^{−E}，E 为第一个未保留的 H 能量"""
    return float(math.exp(-m.meta['next_energy']))


# ---------------------------------------------------------------------------
# 有序单纯形上的算子积分
# ---------------------------------------------------------------------------

def _van_loan_integral(m, factors, t_total):
    """块上三角矩阵指数的右上块恰为整个单纯形积分"""
    N = len(factors)
    d = m.dim
    big = np.zeros(((N + 1) * d, (N + 1) * d), dtype=complex)
    for a in range(N + 1):
        big[a * d:(a + 1) * d, a * d:(a + 1) * d] = -t_total * m.H
    for a, F in enumerate(factors):
        big[a * d:(a + 1) * d, (a + 1) * d:(a + 2) * d] = F
    return expm(big)[:d, N * d:]


def _pointwise_integral(m, factors, t_total, points, weights):
    N = len(factors)
    d = m.dim
    flops = len(weights) * N * d ** 3
    if flops > QUADRATURE_FLOP_BUDGET:
        raise QuadratureBudgetError(f"求积代价 {flops:.2e} 超出预算 {QUADRATURE_FLOP_BUDGET:.0e}")
    evals, evecs = m.eigen()
    Vh = evecs.conj().T
    tilde = [Vh @ F @ evecs for F in factors]
    graded = Vh @ m.grading @ evecs
    total = 0.0 + 0.0j
    for tau, w in zip(points, weights):
        times = np.diff(np.concatenate([[0.0], tau, [1.0]])) * t_total
        prod = np.exp(-times[0] * evals)[:, None] * np.eye(d)
        for a in range(N):
            prod = (prod @ tilde[a]) * np.exp(-times[a + 1] * evals)[None, :]
        total += w * np.trace(graded @ prod)
    return total


def _auto_method(m, N):
    if (N + 1) * m.dim <= EXPM_BLOCK_LIMIT:
        return 'expm'
    return 'gauss' if N <= 2 else 'qmc'


def simplex_operator_integral(m, factors, t_total=1.0, order=DEFAULT_QUAD_ORDER, method='auto',
                              n_samples=DEFAULT_QMC_SAMPLES, seed=0):
    """
    ∫_{Δ_N} Str(e^{−τ_1 tH} F_1 e^{−(τ_2−τ_1) tH} ⋯ F_N e^{−(1−τ_N) tH}) dτ

    参数:
    m: SpectralModel
    factors: N 个矩阵，N ≤ 4
    t_total: 总热时间 t
    order: Gauss 路径每个方向的节点数
    method: 'expm'（块矩阵指数，精确）, 'gauss'（Duffy 映射）, 'qmc'（排序 Sobol 点）；
            'auto' 在块维数不超过 EXPM_BLOCK_LIMIT 时取 expm，否则 N ≤ 2 取 gauss、N ≥ 3 取 qmc

    返回:
    复数
    """
    N = len(factors)
    if N > 4:
        raise QuadratureBudgetError(f"单纯形维数 N={N} 超过上限 4")
    for F in factors:
        if np.shape(F) != (m.dim, m.dim):
            raise DimensionMismatchError(f"因子形状 {np.shape(F)} 与模型维数 {m.dim} 不符")
    if N == 0:
        return mckean_singer(m, t_total)
    if method == 'auto':
        method = _auto_method(m, N)
    if method == 'expm':
        block = _van_loan_integral(m, factors, t_total)
        return str_op(m, block)
    if method == 'gauss':
        points, weights = simplex_gauss_rule(N, order)
    elif method == 'qmc':
        points, weights = simplex_qmc_rule(N, n_samples, seed)
    else:
        raise UnsupportedCombinationError(f"未知的求积方法 {method}")
    raw = _pointwise_integral(m, factors, t_total, points, weights)
    return complex(m.str_normalizer * m.multiplicity * raw)
