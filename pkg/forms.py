"""
平坦环面 T^n = R^n / Z^n 上的 Fourier 截断微分形式，以及 Ω_T(X) 的元素 ϑ = ϑ' + dt∧ϑ''

系数以字典存储: (升序多重指标, Fourier 模 k) -> 复数，对应 c · e^{2πi k·x} dx^I。
另有一个仿射部分 (指标, j) -> 复数，对应 c · x_j dx^I，只用于磁场规范势。
"""
import logging
import math

import numpy as np

from utils import (BaseMismatchError, DimensionMismatchError, InvalidDegreeError, NonSkewError,
                   TruncationOverflowError, UnsupportedCombinationError, UnsupportedDimensionError,
                   sort_with_sign)

logger = logging.getLogger(__name__)

DEFAULT_CUTOFF = 4

# Chern-Weil 归一化 ch = tr exp(κR)，由 flux=k 模型指标为 k 标定
KAPPA = -1j

# log((x/2)/sinh(x/2)) 的偶次幂系数 x^2, x^4, x^6, x^8
AHAT_LOG_SERIES = (-1.0 / 24.0, 1.0 / 2880.0, -1.0 / 181440.0, 1.0 / 9676800.0)


class FlatTorus:
    """单位整格 Z^n 与标准度量下的平坦环面，体积为 1，数量曲率恒为 0"""

    def __init__(self, n):
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise UnsupportedDimensionError(f"环面维数必须为正整数，收到 {n}")
        self.n = int(n)

    volume = 1.0
    scalar_curvature = 0.0

    @property
    def lattice(self):
        return np.eye(self.n, dtype=int)

    @property
    def metric(self):
        return np.eye(self.n)

    def wrap(self, x):
        return np.mod(x, 1.0)

    def __eq__(self, other):
        return isinstance(other, FlatTorus) and other.n == self.n

    def __hash__(self):
        return hash(("FlatTorus", self.n))

    def __repr__(self):
        return f"FlatTorus(n={self.n})"


def _check_base(a, b):
    if a.base != b.base:
        raise BaseMismatchError(f"底空间不一致: {a.base} vs {b.base}")


def _add_entry(store, key, value):
    if value == 0:
        return
    total = store.get(key, 0) + value
    if total == 0:
        store.pop(key, None)
    else:
        store[key] = total


class ScalarForm:
    """
    Fourier 截断的复系数微分形式（可含多个次数）

    参数:
    base: FlatTorus
    coeffs: {(指标元组, 模元组): 系数}，指标可乱序，自动排序并带符号
    cutoff: 模截断 Λ，要求 |k|_∞ ≤ Λ
    linear: {(指标元组, j): 系数}，表示 c · x_j dx^I
    real: 是否标记为实形式（系数共轭对称）
    """

    def __init__(self, base, coeffs=None, cutoff=DEFAULT_CUTOFF, linear=None, real=False):
        self.base = base
        self.cutoff = int(cutoff)
        self.real = bool(real)
        self.coeffs = {}
        self.linear = {}
        n = base.n
        for (idx, mode), value in (coeffs or {}).items():
            mode = tuple(int(m) for m in mode)
            if len(mode) != n:
                raise DimensionMismatchError(f"Fourier 模 {mode} 的长度与维数 {n} 不符")
            if mode and max(abs(m) for m in mode) > self.cutoff:
                raise TruncationOverflowError(f"Fourier 模 {mode} 超出截断 Λ={self.cutoff}")
            sign, key = self._normalize(idx)
            if sign:
                _add_entry(self.coeffs, (key, mode), sign * complex(value))
        for (idx, j), value in (linear or {}).items():
            if not 0 <= j < n:
                raise InvalidDegreeError(f"仿射坐标 x_{j} 越界")
            sign, key = self._normalize(idx)
            if sign:
                _add_entry(self.linear, (key, int(j)), sign * complex(value))

    def _normalize(self, idx):
        idx = tuple(int(i) for i in idx)
        if len(idx) > self.base.n or any(i < 0 or i >= self.base.n for i in idx):
            raise InvalidDegreeError(f"非法的形式指标 {idx}（维数 {self.base.n}）")
        return sort_with_sign(idx)

    # ------------------------------------------------------------------
    # 构造
    # ------------------------------------------------------------------

    @classmethod
    def zero(cls, base, cutoff=DEFAULT_CUTOFF):
        return cls(base, cutoff=cutoff)

    @classmethod
    def constant(cls, base, value, cutoff=DEFAULT_CUTOFF):
        return cls(base, {((), (0,) * base.n): value}, cutoff=cutoff)

    @classmethod
    def monomial(cls, base, idx=(), mode=None, coef=1.0, cutoff=DEFAULT_CUTOFF):
        """coef · e^{2πi k·x} dx^{idx}"""
        mode = (0,) * base.n if mode is None else tuple(mode)
        return cls(base, {(tuple(idx), mode): coef}, cutoff=cutoff)

    @classmethod
    def affine(cls, base, idx, j, coef=1.0, cutoff=DEFAULT_CUTOFF):
        """coef · x_j dx^{idx}"""
        return cls(base, linear={(tuple(idx), j): coef}, cutoff=cutoff)

    def copy_with(self, coeffs=None, linear=None, cutoff=None, real=None):
        return ScalarForm(self.base,
                          self.coeffs if coeffs is None else coeffs,
                          cutoff=self.cutoff if cutoff is None else cutoff,
                          linear=self.linear if linear is None else linear,
                          real=self.real if real is None else real)

    # ------------------------------------------------------------------
    # 次数
    # ------------------------------------------------------------------

    def degrees(self):
        found = {len(idx) for idx, _ in self.coeffs}
        found |= {len(idx) for idx, _ in self.linear}
        return sorted(found)

    def homogeneous_degree(self):
        """齐次时返回次数，零形式或混合次数返回 None"""
        degs = self.degrees()
        return degs[0] if len(degs) == 1 else None

    def component(self, p):
        return ScalarForm(self.base,
                          {key: c for key, c in self.coeffs.items() if len(key[0]) == p},
                          cutoff=self.cutoff,
                          linear={key: c for key, c in self.linear.items() if len(key[0]) == p},
                          real=self.real)

    def is_zero(self, tol=0.0):
        return all(abs(c) <= tol for c in self.coeffs.values()) and \
            all(abs(c) <= tol for c in self.linear.values())

    @property
    def is_affine(self):
        return bool(self.linear)

    # ------------------------------------------------------------------
    # 线性运算
    # ------------------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, ScalarForm):
            return NotImplemented
        _check_base(self, other)
        coeffs = dict(self.coeffs)
        for key, c in other.coeffs.items():
            _add_entry(coeffs, key, c)
        linear = dict(self.linear)
        for key, c in other.linear.items():
            _add_entry(linear, key, c)
        return ScalarForm(self.base, coeffs, cutoff=max(self.cutoff, other.cutoff), linear=linear,
                          real=self.real and other.real)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        if not isinstance(other, ScalarForm):
            return NotImplemented
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, ScalarForm):
            return NotImplemented
        scalar = complex(scalar)
        real = self.real and scalar.imag == 0
        return ScalarForm(self.base,
                          {key: scalar * c for key, c in self.coeffs.items()},
                          cutoff=self.cutoff,
                          linear={key: scalar * c for key, c in self.linear.items()},
                          real=real)

    __rmul__ = __mul__

    def conj(self):
        """逐点复共轭: c e^{2πikx} -> conj(c) e^{-2πikx}"""
        coeffs = {(idx, tuple(-m for m in mode)): np.conj(c) for (idx, mode), c in self.coeffs.items()}
        linear = {key: np.conj(c) for key, c in self.linear.items()}
        return ScalarForm(self.base, coeffs, cutoff=self.cutoff, linear=linear, real=self.real)

    def is_real_symmetric(self, tol=1e-12):
        """检查系数共轭对称性 c(I,-k) = conj(c(I,k))"""
        diff = self - self.conj()
        return diff.is_zero(tol)

    # ------------------------------------------------------------------
    # 范数
    # ------------------------------------------------------------------

    def sup_norm(self):
        """系数数组的最大模"""
        values = list(self.coeffs.values()) + list(self.linear.values())
        return max((abs(c) for c in values), default=0.0)

    def l1_norm(self):
        """Σ|c|，是逐点 sup 范数的上界"""
        return float(sum(abs(c) for c in self.coeffs.values()))

    def hodge_norm(self):
        """平坦环面上的 L² 范数（Parseval）"""
        return math.sqrt(sum(abs(c) ** 2 for c in self.coeffs.values()))

    # ------------------------------------------------------------------
    # 求值
    # ------------------------------------------------------------------

    def evaluate(self, x, vectors=()):
        """
        在点 x 处把 p 次分量作用在 p 个切向量上（行列式约定）

        参数:
        x: 形状 (..., n) 的提升坐标
        vectors: p 个形状 (..., n) 的向量

        返回:
        形状 (...) 的复数组
        """
        x = np.asarray(x, dtype=float)
        n = self.base.n
        if x.shape[-1] != n:
            raise DimensionMismatchError(f"点坐标的最后一维 {x.shape[-1]} 与维数 {n} 不符")
        batch = x.shape[:-1]
        p = len(vectors)
        if p > n:
            return np.zeros(batch, dtype=complex)
        if p:
            V = np.stack([np.broadcast_to(np.asarray(v, dtype=float), batch + (n,)) for v in vectors],
                         axis=-2)
        minors = {}
        phases = {}

        def minor(idx):
            if p == 0:
                return 1.0
            if idx not in minors:
                minors[idx] = np.linalg.det(V[..., :, list(idx)])
            return minors[idx]

        out = np.zeros(batch, dtype=complex)
        for (idx, mode), c in self.coeffs.items():
            if len(idx) != p:
                continue
            if mode not in phases:
                phases[mode] = np.exp(2j * np.pi * (x @ np.asarray(mode, dtype=float)))
            out = out + c * phases[mode] * minor(idx)
        for (idx, j), c in self.linear.items():
            if len(idx) != p:
                continue
            out = out + c * x[..., j] * minor(idx)
        return out

    def __repr__(self):
        return (f"ScalarForm(n={self.base.n}, degrees={self.degrees()}, terms={len(self.coeffs)}, "
                f"affine={len(self.linear)}, Λ={self.cutoff})")


# ---------------------------------------------------------------------------
# 外积与外微分
# ---------------------------------------------------------------------------

def wedge(a, b):
    """
    外积 a∧b，乘积模截断回 max(Λ_a, Λ_b)

    仿射部分只允许与常系数形式相乘
    """
    _check_base(a, b)
    cutoff = max(a.cutoff, b.cutoff)
    coeffs = {}
    for (I, k), c in a.coeffs.items():
        for (J, l), e in b.coeffs.items():
            sign, K = sort_with_sign(I + J)
            if sign == 0:
                continue
            mode = tuple(ki + li for ki, li in zip(k, l))
            if mode and max(abs(m) for m in mode) > cutoff:
                continue
            _add_entry(coeffs, (K, mode), sign * c * e)

    linear = {}
    if a.linear and b.linear:
        raise UnsupportedCombinationError("两个仿射形式的乘积不是仿射的")
    for (I, j), c in a.linear.items():
        for (J, l), e in b.coeffs.items():
            if any(l):
                raise UnsupportedCombinationError("仿射部分只能与常系数形式相乘")
            sign, K = sort_with_sign(I + J)
            if sign:
                _add_entry(linear, (K, j), sign * c * e)
    for (I, k), c in a.coeffs.items():
        for (J, j), e in b.linear.items():
            if any(k):
                raise UnsupportedCombinationError("仿射部分只能与常系数形式相乘")
            sign, K = sort_with_sign(I + J)
            if sign:
                _add_entry(linear, (K, j), sign * c * e)
    return ScalarForm(a.base, coeffs, cutoff=cutoff, linear=linear, real=a.real and b.real)


def exterior_d(a):
    """外微分: 模 k 上添加 dx^j 时乘以 2πi k_j；d(x_j dx^I) = dx^j∧dx^I"""
    n = a.base.n
    zero_mode = (0,) * n
    coeffs = {}
    for (idx, mode), c in a.coeffs.items():
        for j in range(n):
            if mode[j] == 0 or j in idx:
                continue
            sign, key = sort_with_sign((j,) + idx)
            _add_entry(coeffs, (key, mode), sign * 2j * np.pi * mode[j] * c)
    for (idx, j), c in a.linear.items():
        if j in idx:
            continue
        sign, key = sort_with_sign((j,) + idx)
        _add_entry(coeffs, (key, zero_mode), sign * c)
    return ScalarForm(a.base, coeffs, cutoff=a.cutoff, real=a.real)


def integrate_top(a):
    """∫_X a：取顶次分量的零模系数（体积为 1）"""
    n = a.base.n
    top = tuple(range(n))
    if any(idx == top for idx, _ in a.linear):
        raise UnsupportedCombinationError("仿射顶次形式在环面上没有良定义的积分")
    return complex(a.coeffs.get((top, (0,) * n), 0.0))


# ---------------------------------------------------------------------------
# Ω_T(X) = Ω(X)[dt] 的元素
# ---------------------------------------------------------------------------

class TForm:
    """
    ϑ = ϑ' + dt∧ϑ''，齐次时总次数 |ϑ| = deg ϑ' = deg ϑ'' + 1

    参数:
    prime: ScalarForm ϑ'
    dprime: ScalarForm ϑ''
    degree: 总次数；缺省时由两部分推断，推断不出（混合次数）时为 None
    """

    def __init__(self, prime=None, dprime=None, degree=None):
        if prime is None and dprime is None:
            raise InvalidDegreeError("TForm 至少需要 ϑ' 或 ϑ'' 之一")
        ref = prime if prime is not None else dprime
        if prime is None:
            prime = ScalarForm.zero(ref.base, ref.cutoff)
        if dprime is None:
            dprime = ScalarForm.zero(ref.base, ref.cutoff)
        _check_base(prime, dprime)
        self.prime = prime
        self.dprime = dprime
        if degree is None:
            degree = self._infer_degree()
        else:
            degree = int(degree)
            if any(p != degree for p in prime.degrees()) or any(q != degree - 1 for q in dprime.degrees()):
                raise InvalidDegreeError(
                    f"次数标注 {degree} 与分量次数不符: ϑ'={prime.degrees()}, ϑ''={dprime.degrees()}")
        self.degree = degree

    def _infer_degree(self):
        candidates = set(self.prime.degrees()) | {q + 1 for q in self.dprime.degrees()}
        return candidates.pop() if len(candidates) == 1 else None

    @property
    def base(self):
        return self.prime.base

    @property
    def cutoff(self):
        return max(self.prime.cutoff, self.dprime.cutoff)

    @property
    def is_homogeneous(self):
        return self.degree is not None

    def homogeneous_parts(self):
        """按总次数拆成齐次分量"""
        if self.is_homogeneous:
            return [self]
        degs = sorted(set(self.prime.degrees()) | {q + 1 for q in self.dprime.degrees()})
        return [TForm(self.prime.component(p), self.dprime.component(p - 1), degree=p) for p in degs]

    def is_zero(self, tol=0.0):
        return self.prime.is_zero(tol) and self.dprime.is_zero(tol)

    def sup_norm(self):
        return max(self.prime.sup_norm(), self.dprime.sup_norm())

    def __add__(self, other):
        if not isinstance(other, TForm):
            return NotImplemented
        degree = self.degree if self.degree == other.degree else None
        return TForm(self.prime + other.prime, self.dprime + other.dprime, degree=degree)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, (TForm, ScalarForm)):
            return NotImplemented
        return TForm(self.prime * scalar, self.dprime * scalar, degree=self.degree)

    __rmul__ = __mul__

    def __repr__(self):
        return f"TForm(degree={self.degree}, prime={self.prime!r}, dprime={self.dprime!r})"


def d_T(v):
    """d_T = d − ι_{∂_t}: (ϑ', ϑ'') -> (dϑ' − ϑ'', −dϑ'')"""
    prime = exterior_d(v.prime) - v.dprime
    dprime = -exterior_d(v.dprime)
    return TForm(prime, dprime)


def tform_product(a, b):
    """Ω_T 中的乘积 (ϑ1' + dt∧ϑ1'')(ϑ2' + dt∧ϑ2'')"""
    if not a.is_homogeneous:
        parts = [tform_product(part, b) for part in a.homogeneous_parts()]
        if not parts:
            return TForm(ScalarForm.zero(a.base, a.cutoff))
        out = parts[0]
        for part in parts[1:]:
            out = out + part
        return out
    p1 = a.degree
    prime = wedge(a.prime, b.prime)
    dprime = (-1) ** p1 * wedge(a.prime, b.dprime) + wedge(a.dprime, b.prime)
    degree = p1 + b.degree if b.is_homogeneous else None
    return TForm(prime, dprime, degree=degree)


# ---------------------------------------------------------------------------
# 矩阵值形式（ScalarForm 的嵌套列表）
# ---------------------------------------------------------------------------

def _as_square(M):
    rows = [list(row) for row in M]
    r = len(rows)
    if r == 0 or any(len(row) != r for row in rows):
        raise DimensionMismatchError("矩阵值形式必须是非空方阵")
    return rows


def matrix_identity(base, rank, cutoff=DEFAULT_CUTOFF):
    return [[ScalarForm.constant(base, 1.0 if i == j else 0.0, cutoff) for j in range(rank)]
            for i in range(rank)]


def matrix_add(A, B):
    return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def matrix_scale(A, s):
    return [[a * s for a in row] for row in A]


def matrix_wedge(A, B):
    A = _as_square(A)
    B = _as_square(B)
    r = len(A)
    if len(B) != r:
        raise DimensionMismatchError(f"矩阵阶数不一致: {r} vs {len(B)}")
    out = []
    for i in range(r):
        row = []
        for j in range(r):
            acc = wedge(A[i][0], B[0][j])
            for m in range(1, r):
                acc = acc + wedge(A[i][m], B[m][j])
            row.append(acc)
        out.append(row)
    return out


def matrix_trace(A):
    A = _as_square(A)
    acc = A[0][0]
    for i in range(1, len(A)):
        acc = acc + A[i][i]
    return acc


def matrix_curvature(A):
    """联络 1-形式矩阵 A 的曲率 R = dA + A∧A；秩 1 时 A∧A = 0"""
    A = _as_square(A)
    dA = [[exterior_d(a) for a in row] for row in A]
    if len(A) == 1:
        return dA
    return matrix_add(dA, matrix_wedge(A, A))


def _exp_nilpotent(L, n):
    """exp(L)，L 为无零次分量的偶次形式，级数在次数 n 处自然截断"""
    result = ScalarForm.constant(L.base, 1.0, L.cutoff)
    term = result
    for m in range(1, n // 2 + 1):
        term = wedge(term, L) * (1.0 / m)
        if term.is_zero():
            break
        result = result + term
    return result


# Chern-Weil 陈特征形式
def chern_weil_ch(R, rank=None, kappa=KAPPA):
    """
    参数:
    R: r×r 的 2-形式矩阵（曲率）
    rank: 期望的秩 r，给出时校验
    kappa: 归一化常数 κ

    返回:
    tr exp(κR)，截断到次数 n，零次部分为 r
    """
    R = _as_square(R)
    r = len(R)
    if rank is not None and rank != r:
        raise DimensionMismatchError(f"曲率矩阵阶数 {r} 与秩 {rank} 不符")
    base = R[0][0].base
    n = base.n
    cutoff = max(entry.cutoff for row in R for entry in row)
    for row in R:
        for entry in row:
            if any(p != 2 for p in entry.degrees()):
                raise InvalidDegreeError(f"曲率分量必须是 2-形式，收到次数 {entry.degrees()}")
    X = matrix_scale(R, kappa)
    term = matrix_identity(base, r, cutoff)
    total = matrix_trace(term)
    for m in range(1, n // 2 + 1):
        term = matrix_scale(matrix_wedge(term, X), 1.0 / m)
        total = total + matrix_trace(term)
    return total


# Â 亏格的 Chern-Weil 代表元
def a_hat(R_riemann, kappa=KAPPA, tol=1e-12):
    """
    参数:
    R_riemann: 反对称的 2-形式矩阵（允许合成数据）
    kappa: 归一化常数 κ

    返回:
    det^{1/2}((κR/2)/sinh(κR/2)) 展开到次数 n 的偶次形式
    """
    R = _as_square(R_riemann)
    r = len(R)
    for i in range(r):
        for j in range(i, r):
            if not (R[i][j] + R[j][i]).is_zero(tol):
                raise NonSkewError(f"曲率矩阵在 ({i},{j}) 处不反对称")
    base = R[0][0].base
    n = base.n
    cutoff = max(entry.cutoff for row in R for entry in row)
    X = matrix_scale(R, kappa)
    X2 = matrix_wedge(X, X)
    # log Â = ½ Σ_k f_k tr(X^{2k})
    log_a = ScalarForm.zero(base, cutoff)
    power = X2
    for k, f_k in enumerate(AHAT_LOG_SERIES, start=1):
        if 4 * k > n:
            break
        log_a = log_a + matrix_trace(power) * (0.5 * f_k)
        power = matrix_wedge(power, X2)
    return _exp_nilpotent(log_a, n)


# ---------------------------------------------------------------------------
# 文本序列化: 每行一个系数 (部分, 类型, 指标, 模/坐标, 实部, 虚部)
# ---------------------------------------------------------------------------

def _fmt_tuple(values):
    return ",".join(str(v) for v in values) if values else "-"


def _parse_tuple(text):
    return () if text == "-" else tuple(int(v) for v in text.split(","))


def _scalar_lines(form, part):
    lines = []
    for (idx, mode), c in sorted(form.coeffs.items()):
        lines.append(f"{part} c {_fmt_tuple(idx)} {_fmt_tuple(mode)} {c.real!r} {c.imag!r}")
    for (idx, j), c in sorted(form.linear.items()):
        lines.append(f"{part} l {_fmt_tuple(idx)} {j} {c.real!r} {c.imag!r}")
    return lines


def dumps_form(form):
    """把 ScalarForm 或 TForm 序列化为文本"""
    if isinstance(form, TForm):
        degree = "-" if form.degree is None else form.degree
        header = (f"tform n={form.base.n} cutoff={form.cutoff} degree={degree} "
                  f"real={int(form.prime.real and form.dprime.real)}")
        lines = [header] + _scalar_lines(form.prime, "prime") + _scalar_lines(form.dprime, "dprime")
    else:
        header = f"scalarform n={form.base.n} cutoff={form.cutoff} real={int(form.real)}"
        lines = [header] + _scalar_lines(form, "form")
    return "\n".join(lines) + "\n"


def loads_form(text):
    """dumps_form 的逆"""
    lines = [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if not lines:
        raise InvalidDegreeError("空的形式文本")
    head = lines[0].split()
    kind = head[0]
    meta = dict(item.split("=", 1) for item in head[1:])
    base = FlatTorus(int(meta["n"]))
    cutoff = int(meta["cutoff"])
    real = meta.get("real", "0") == "1"
    parts = {}
    for line in lines[1:]:
        part, typ, idx, where, re_, im_ = line.split()
        store = parts.setdefault(part, ({}, {}))
        value = complex(float(re_), float(im_))
        if typ == "c":
            store[0][(_parse_tuple(idx), _parse_tuple(where))] = value
        else:
            store[1][(_parse_tuple(idx), int(where))] = value

    def build(part):
        coeffs, linear = parts.get(part, ({}, {}))
        return ScalarForm(base, coeffs, cutoff=cutoff, linear=linear, real=real)

    if kind == "scalarform":
        return build("form")
    if kind == "tform":
        degree = None if meta.get("degree", "-") == "-" else int(meta["degree"])
        return TForm(build("prime"), build("dprime"), degree=degree)
    raise InvalidDegreeError(f"未知的形式类型 {kind}")
