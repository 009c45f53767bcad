"""
Ω_T(X) 上的 bar 复形: 链、微分 d 与 b'、分次循环投影、上边缘算子与整函数型增长诊断

约定: 槽位 ϑ 的移位次数为 |ϑ| − 1，n_k = Σ_{i≤k} (|ϑ_i| − 1)。
"""
import logging
import math
from itertools import combinations

import numpy as np
import pandas as pd

from forms import ScalarForm, TForm, d_T, dumps_form, loads_form, tform_product
from utils import InvalidDegreeError, stable_hash

logger = logging.getLogger(__name__)

# 增长诊断: 后半段根式比前半段大出该倍数即判为超指数增长
GROWTH_RATIO_LIMIT = 2.0


def shifted_degree(slot):
    return slot.degree - 1


def prefix_shifts(word):
    """返回 [n_0, n_1, ..., n_N]"""
    out = [0]
    for slot in word:
        out.append(out[-1] + shifted_degree(slot))
    return out


def _expand_word(coef, word):
    """把非齐次槽位按多重线性展开成齐次词"""
    expanded = [(coef, ())]
    for slot in word:
        parts = [part for part in slot.homogeneous_parts() if not part.is_zero()]
        expanded = [(c, w + (part,)) for c, w in expanded for part in parts]
        if not expanded:
            break
    return expanded


class BarChain:
    """
    词的有限线性组合 Σ c·(ϑ_1,…,ϑ_N)

    参数:
    terms: [(系数, [TForm, ...]), ...]，每个槽位必须是齐次的
    cyclic: 是否已经做过分次循环对称化
    """

    def __init__(self, terms=(), cyclic=False):
        self.terms = []
        for coef, word in terms:
            word = tuple(word)
            for slot in word:
                if not slot.is_homogeneous:
                    raise InvalidDegreeError("链的槽位必须是带次数标注的齐次 TForm")
            if coef == 0 or any(slot.is_zero() for slot in word):
                continue
            self.terms.append((complex(coef), word))
        self.cyclic = bool(cyclic)

    @classmethod
    def _from_raw(cls, raw_terms, cyclic=False):
        terms = []
        for coef, word in raw_terms:
            terms.extend(_expand_word(coef, word))
        return cls(terms, cyclic=cyclic)

    @classmethod
    def word(cls, *slots, coef=1.0):
        return cls([(coef, slots)])

    def __add__(self, other):
        if not isinstance(other, BarChain):
            return NotImplemented
        return BarChain(self.terms + other.terms, cyclic=self.cyclic and other.cyclic)

    def __mul__(self, scalar):
        return BarChain([(scalar * c, w) for c, w in self.terms], cyclic=self.cyclic)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __len__(self):
        return len(self.terms)

    def lengths(self):
        return sorted({len(w) for _, w in self.terms})

    def coordinates(self):
        """张量坐标: 每个槽位展开成单项式后的 {键: 系数}"""
        coords = {}
        for coef, word in self.terms:
            partial = [(coef, ())]
            for slot in word:
                mons = _slot_monomials(slot)
                partial = [(c * m, key + (mk,)) for c, key in partial for mk, m in mons]
            for c, key in partial:
                coords[key] = coords.get(key, 0) + c
        return coords

    def max_abs_coordinate(self):
        return max((abs(v) for v in self.coordinates().values()), default=0.0)

    def is_zero(self, tol=1e-12):
        return self.max_abs_coordinate() <= tol

    def norm(self):
        """Σ|c|·Π sup_norm(ϑ_k)"""
        return float(sum(abs(c) * math.prod(slot.sup_norm() for slot in w) for c, w in self.terms))

    def simplify(self, tol=0.0):
        """合并槽位完全相同的词，丢弃 |系数| ≤ tol 的项；词的先后按首次出现保留"""
        merged = {}
        for coef, word in self.terms:
            key = tuple(dumps_form(slot) for slot in word)
            if key in merged:
                merged[key] = (merged[key][0] + coef, merged[key][1])
            else:
                merged[key] = (coef, word)
        return BarChain([(c, w) for c, w in merged.values() if abs(c) > tol], cyclic=self.cyclic)

    def __repr__(self):
        return f"BarChain(terms={len(self.terms)}, lengths={self.lengths()}, cyclic={self.cyclic})"


def _slot_monomials(slot):
    mons = []
    for (idx, mode), c in slot.prime.coeffs.items():
        mons.append((("p", idx, mode), c))
    for (idx, j), c in slot.prime.linear.items():
        mons.append((("pl", idx, j), c))
    for (idx, mode), c in slot.dprime.coeffs.items():
        mons.append((("pp", idx, mode), c))
    for (idx, j), c in slot.dprime.linear.items():
        mons.append((("ppl", idx, j), c))
    return mons


class ChainSequence:
    """按词长 N = 0..N_max 排列的链序列"""

    def __init__(self, components):
        self.components = list(components)

    @property
    def n_max(self):
        return len(self.components) - 1

    def __getitem__(self, N):
        return self.components[N]

    def __len__(self):
        return len(self.components)

    def total(self):
        out = BarChain()
        for comp in self.components:
            out = out + comp
        return out


# ---------------------------------------------------------------------------
# 微分
# ---------------------------------------------------------------------------

def bar_d(c):
    """d(ϑ_1,…,ϑ_N) = Σ_k (−1)^{n_{k−1}} (…, d_Tϑ_k, …)"""
    raw = []
    for coef, word in c.terms:
        shifts = prefix_shifts(word)
        for k, slot in enumerate(word):
            sign = -1 if shifts[k] % 2 else 1
            new_word = word[:k] + (d_T(slot),) + word[k + 1:]
            raw.append((sign * coef, new_word))
    return BarChain._from_raw(raw)


def bar_bprime(c):
    """b'(ϑ_1,…,ϑ_N) = −Σ_{k<N} (−1)^{n_k} (…, ϑ_kϑ_{k+1}, …)"""
    raw = []
    for coef, word in c.terms:
        shifts = prefix_shifts(word)
        for k in range(len(word) - 1):
            sign = 1 if shifts[k + 1] % 2 else -1
            merged = tform_product(word[k], word[k + 1])
            raw.append((sign * coef, word[:k] + (merged,) + word[k + 2:]))
    return BarChain._from_raw(raw)


def total_differential(c):
    return bar_d(c) + bar_bprime(c)


# ---------------------------------------------------------------------------
# 分次循环置换
# ---------------------------------------------------------------------------

def cyclic_rotate(coef, word):
    """(ϑ_1,…,ϑ_N) -> ±(ϑ_N, ϑ_1, …, ϑ_{N−1})，符号 (−1)^{(|ϑ_N|−1)·n_{N−1}}"""
    if len(word) < 2:
        return coef, word
    shifts = prefix_shifts(word)
    sign = -1 if (shifted_degree(word[-1]) * shifts[-2]) % 2 else 1
    return sign * coef, (word[-1],) + word[:-1]


def cyclic_project(c):
    """分次循环平均 (1/N) Σ_j t^j，幂等"""
    if c.cyclic:
        return c
    terms = []
    for coef, word in c.terms:
        N = len(word)
        if N < 2:
            terms.append((coef, word))
            continue
        current = (coef, word)
        for _ in range(N):
            terms.append((current[0] / N, current[1]))
            current = cyclic_rotate(*current)
    return BarChain(terms, cyclic=True)


# ---------------------------------------------------------------------------
# 上链与上边缘
# ---------------------------------------------------------------------------

def evaluate_cochain(L, c):
    """L 为定义在单个词上的多重线性泛函"""
    return complex(sum(coef * L(word) for coef, word in c.terms))


def codifferential(L):
    """(δL)(word) = −L[(d + b')word]"""
    def delta_L(word):
        return -evaluate_cochain(L, total_differential(BarChain([(1.0, word)])))
    return delta_L


def apply_codifferential(L, c):
    return -evaluate_cochain(L, total_differential(c))


def random_multilinear_cochain(seed=0):
    """随机多重线性上链: 每个单项式坐标给一个由哈希决定的随机权重，词上取乘积"""
    cache = {}

    def weight(key):
        if key not in cache:
            rng = np.random.default_rng(int(stable_hash([seed, key])[:12], 16))
            cache[key] = complex(rng.normal(), rng.normal())
        return cache[key]

    def L(word):
        value = 1.0 + 0j
        for position, slot in enumerate(word):
            value *= sum(c * weight((position, len(word)) + mk) for mk, c in _slot_monomials(slot))
        return value
    return L


# ---------------------------------------------------------------------------
# 随机链与张量指数
# ---------------------------------------------------------------------------

def _random_scalar(base, rng, degree, n_terms, mode_range, cutoff):
    index_sets = list(combinations(range(base.n), degree))
    coeffs = {}
    for _ in range(n_terms):
        idx = index_sets[rng.integers(len(index_sets))]
        mode = tuple(int(m) for m in rng.integers(-mode_range, mode_range + 1, size=base.n))
        coeffs[(idx, mode)] = coeffs.get((idx, mode), 0) + complex(rng.normal(), rng.normal())
    return ScalarForm(base, coeffs, cutoff=cutoff)


def random_tform(base, rng, degree, n_terms=2, mode_range=1, cutoff=4):
    """总次数为 degree 的随机齐次 TForm"""
    prime = _random_scalar(base, rng, degree, n_terms, mode_range, cutoff) if degree <= base.n else None
    dprime = _random_scalar(base, rng, degree - 1, n_terms, mode_range, cutoff) \
        if 1 <= degree <= base.n + 1 else None
    if prime is None:
        prime = ScalarForm.zero(base, cutoff)
    if dprime is None:
        dprime = ScalarForm.zero(base, cutoff)
    return TForm(prime, dprime, degree=degree)


def random_chain(base, rng, n_terms=2, max_len=4, max_degree=3, slot_terms=2, mode_range=1):
    """
    随机链，供性质测试使用

    截断取 mode_range·max_len，保证乘积不会被截断（截断乘积不满足结合律）
    """
    cutoff = mode_range * max(max_len, 1)
    terms = []
    for _ in range(n_terms):
        length = int(rng.integers(1, max_len + 1))
        word = [random_tform(base, rng, int(rng.integers(0, max_degree + 1)), slot_terms, mode_range, cutoff)
                for _ in range(length)]
        terms.append((complex(rng.normal(), rng.normal()), word))
    return BarChain(terms)


def exp_chain(mixture, max_len, keep=None):
    """
    槽位混合 θ = Σ c_i ϑ_i 的张量指数 Σ_N (θ,…,θ)，按词长分组

    参数:
    mixture: [(系数, TForm), ...]
    max_len: 最大词长
    keep: 可选谓词，参数为槽位在 mixture 中的下标元组，决定保留哪些词

    返回:
    ChainSequence
    """
    components = []
    layer = [((), 1.0 + 0j)]
    for N in range(max_len + 1):
        terms = []
        for ids, coef in layer:
            if keep is None or keep(ids):
                terms.append((coef, tuple(mixture[i][1] for i in ids)))
        components.append(BarChain(terms))
        layer = [(ids + (i,), coef * mixture[i][0]) for ids, coef in layer for i in range(len(mixture))]
    return ChainSequence(components)


# ---------------------------------------------------------------------------
# 增长诊断
# ---------------------------------------------------------------------------

def growth_diagnostic(s, norms=None):
    """
    参数:
    s: ChainSequence（或 None，此时直接使用 norms）
    norms: 可选的 N -> 范数 列表，用于检验人为构造的序列

    返回:
    dict: table（每个 N 的范数、norm·N!、(norm·N!)^{1/N}），convergent，verdict
    """
    if norms is None:
        norms = [comp.norm() for comp in s.components]
    rows = []
    for N, value in enumerate(norms):
        scaled = value * math.factorial(N)
        root = scaled ** (1.0 / N) if N > 0 and scaled > 0 else np.nan
        rows.append({'N': N, 'norm': value, 'scaled': scaled, 'root': root})
    table = pd.DataFrame(rows, columns=['N', 'norm', 'scaled', 'root'])

    roots = table['root'].dropna().to_numpy()
    convergent = True
    if len(roots) >= 2:
        half = len(roots) // 2
        head = roots[:max(half, 1)].max()
        tail = roots[half:].max()
        convergent = bool(tail <= GROWTH_RATIO_LIMIT * max(head, 1e-300))
    verdict = "收敛（整函数型增长）" if convergent else "发散（超指数增长）"
    if not convergent:
        logger.warning("⚠️ 链序列增长过快: %s", verdict)
    return {'table': table, 'convergent': convergent, 'verdict': verdict}


# ---------------------------------------------------------------------------
# 序列化: 每个词一条记录
# ---------------------------------------------------------------------------

def dumps_chain(c):
    records = [f"barchain cyclic={int(c.cyclic)}"]
    for coef, word in c.terms:
        records.append(f"=== word {coef.real!r} {coef.imag!r} {len(word)}")
        for slot in word:
            records.append("--- slot")
            records.append(dumps_form(slot).rstrip("\n"))
    return "\n".join(records) + "\n"


def loads_chain(text):
    lines = text.splitlines()
    if not lines or not lines[0].startswith("barchain"):
        raise InvalidDegreeError("不是链的文本格式")
    cyclic = lines[0].split("cyclic=")[1].strip() == "1"
    terms = []
    coef = None
    slots = []
    buffer = []

    def flush_slot():
        if buffer:
            slots.append(loads_form("\n".join(buffer)))
            buffer.clear()

    for line in lines[1:]:
        if line.startswith("=== word"):
            flush_slot()
            if coef is not None:
                terms.append((coef, list(slots)))
            _, _, re_, im_, _ = line.split()
            coef = complex(float(re_), float(im_))
            slots = []
        elif line.startswith("--- slot"):
            flush_slot()
        elif line.strip():
            buffer.append(line)
    flush_slot()
    if coef is not None:
        terms.append((coef, list(slots)))
    return BarChain(terms, cyclic=cyclic)
