"""
运行配置: 扁平 key=value 文本与 JSON 两种格式，以及命名测试面板的增删
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, fields

from forms import ScalarForm
from utils import ConfigError

logger = logging.getLogger(__name__)

PANELS_FILE = os.path.join('config', 'panels.json')
METHODS = ('auto', 'expm', 'gauss', 'qmc')

# 数值参数的允许范围（闭区间）
RANGES = {
    'torus_dim': (1, 4),
    'cutoff': (1, 8),
    'flux': (-8, 8),
    'levels': (2, 400),
    'potential_eps': (0.0, 2.0),
    'quad_order': (1, 16),
    'samples': (1, 10 ** 8),
    'loop_grid': (2, 8192),
    'seed': (0, 2 ** 64 - 1),
    'n_max': (0, 4),
    'max_len': (1, 4),
    'prop_chains': (1, 10000),
    'tol_index': (0.0, 1.0),
    'tol_pathintegral': (0.0, 1.0),
    'tol_props': (0.0, 1.0),
    'z_limit': (0.0, 100.0),
    'stderr_limit': (0.0, 10.0),
}


@dataclass
class RunConfig:
    """
    参数:
    torus_dim: 平坦模型的环面维数
    cutoff: Fourier 截断 Λ
    flux: 磁通量 k
    levels: Landau 能级数 L
    potential_eps: 非平坦秩 1 位势 bismut.wave_potential 的振幅 ε
    panel: config/panels.json 中的面板名
    quad_order / method: 单纯形求积
    samples / loop_grid / seed: 蒙特卡洛预算 S、回路网格 M、随机种子
    n_max / max_len: Bismut-Chern 链的截断
    prop_chains: 性质检验的随机链个数
    tol_*: 各项容差
    heat_times: McKean-Singer 检验的时间点
    out_dir: 报告输出目录
    """
    torus_dim: int = 2
    cutoff: int = 2
    flux: int = 1
    levels: int = 40
    potential_eps: float = 0.5
    panel: str = 'default'
    quad_order: int = 8
    method: str = 'auto'
    samples: int = 100000
    loop_grid: int = 256
    seed: int = 0
    n_max: int = 3
    max_len: int = 4
    prop_chains: int = 100
    tol_index: float = 1e-8
    tol_pathintegral: float = 1e-3
    tol_props: float = 1e-6
    z_limit: float = 3.0
    stderr_limit: float = 0.05
    heat_times: tuple = (0.5, 1.0, 2.0)
    out_dir: str = 'reports'
    use_cache: bool = False

    def __post_init__(self):
        self.heat_times = tuple(float(t) for t in self.heat_times)
        self.validate()

    def validate(self):
        for name, (lo, hi) in RANGES.items():
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise ConfigError(f"配置项 {name}={value} 超出范围 [{lo}, {hi}]")
        if self.method not in METHODS:
            raise ConfigError(f"未知的求积方法 {self.method}，可选 {METHODS}")
        if not self.heat_times or any(t <= 0 for t in self.heat_times):
            raise ConfigError("heat_times 必须是正数列表")
        return self

    def to_dict(self):
        out = asdict(self)
        out['heat_times'] = list(self.heat_times)
        return out

    def with_overrides(self, **overrides):
        values = self.to_dict()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return from_dict(values)


def _field_types():
    return {f.name: f.type for f in fields(RunConfig)}


def _coerce(name, raw):
    kind = _field_types()[name]
    try:
        if kind in (int, 'int'):
            return int(raw)
        if kind in (float, 'float'):
            return float(raw)
        if kind in (bool, 'bool'):
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text not in ('true', 'false', '1', '0', 'yes', 'no'):
                raise ValueError(raw)
            return text in ('true', '1', 'yes')
        if kind in (tuple, 'tuple'):
            if isinstance(raw, str):
                return tuple(float(v) for v in raw.split(',') if v.strip())
            return tuple(float(v) for v in raw)
        return str(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"配置项 {name} 的取值 {raw!r} 无法解析: {e}") from e


def from_dict(values):
    known = _field_types()
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"未知的配置项: {', '.join(unknown)}")
    return RunConfig(**{k: _coerce(k, v) for k, v in values.items()})


# ---------------------------------------------------------------------------
# key=value 文本
# ---------------------------------------------------------------------------

def dumps_kv(config):
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, list):
            value = ','.join(repr(v) for v in value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def loads_kv(text):
    """逐行解析 key=value；# 开头的注释和空行忽略"""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f"第 {lineno} 行缺少 '=': {line}")
        key, raw = line.split('=', 1)
        key = key.strip()
        if key in values:
            raise ConfigError(f"第 {lineno} 行重复的配置项 {key}")
        values[key] = raw.strip()
    return from_dict(values)


def load_config(path):
    """按扩展名读取 .json 或 key=value 文本"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"无法读取配置文件 {path}: {e}") from e
    if path.endswith('.json'):
        try:
            return from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"配置文件 {path} 不是合法的 JSON: {e}") from e
    return loads_kv(text)


def save_config(config, path):
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        if path.endswith('.json'):
            json.dump(config.to_dict(), f, indent=4, ensure_ascii=False, sort_keys=True)
        else:
            f.write(dumps_kv(config))


# ---------------------------------------------------------------------------
# 命名面板
# ---------------------------------------------------------------------------

def load_panels(path=PANELS_FILE):
    try:
        with open(path, 'r', encoding='utf-8-sig') as f:
            return json.load(f)
    except (FileNotFoundError, json.JSONDecodeError):
        return {}


def save_panels(panels, path=PANELS_FILE):
    try:
        os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(panels, f, indent=4, ensure_ascii=False)
    except Exception as e:
        logger.error(f"❌ 保存面板失败: {e}")


def add_panel(name, entries, path=PANELS_FILE):
    """
    entries: 面板条目列表，每条为 {'name': ..., 'forms': [1-形式描述, ...]}，
    1-形式描述为单项式列表 [{'idx': [j], 'mode': [...], 'coef': [re, im]}, ...]
    """
    panels = load_panels(path)
    panels[name] = entries
    save_panels(panels, path)


def delete_panel(name, path=PANELS_FILE):
    panels = load_panels(path)
    if name in panels:
        del panels[name]
        save_panels(panels, path)


def form_from_spec(base, spec, cutoff=4):
    """把单项式列表描述转成 ScalarForm"""
    coeffs = {}
    try:
        for term in spec:
            re, im = term.get('coef', [1.0, 0.0])
            key = (tuple(term['idx']), tuple(term.get('mode', [0] * base.n)))
            coeffs[key] = coeffs.get(key, 0) + complex(re, im)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"无法解析 1-形式描述 {spec!r}: {e}") from e
    return ScalarForm(base, coeffs, cutoff=cutoff)
