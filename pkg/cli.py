"""
命令行入口: index / props / mc-compare 三条流水线

退出码: 0 通过，2 超出容差，3 不作结论，64 用法或配置错误
"""
import argparse
import logging
import os
import sys
from datetime import datetime

import numpy as np
import pandas as pd

import metrics
from barcplx import BarChain, bar_bprime, bar_d, cyclic_project, random_chain, total_differential
from bismut import index_via_pathintegral, localization_rhs, twisted_reference, wave_potential
from chern import SLOT_SCALE, coclosedness_report, integral_map_one_forms
from clifford import STR_NORMALIZER, build_spinor_rep
from forms import KAPPA, FlatTorus, ScalarForm
from iterated import TangentField, chainmap_residual, make_smooth_loop
from operators import BundleModel, build_dirac_flat, build_dirac_magnetic, mckean_singer
from run_config import RunConfig, form_from_spec, load_config, load_panels
from topdegree import berezin_top, exterior_top_bruteforce, pfaffian
from utils import ConfigError, LoopIntError, dumps_report
from wiener import integral_I_mc

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_TOLERANCE = 2
EXIT_INCONCLUSIVE = 3
EXIT_USAGE = 64

STATUS_EXIT = {'pass': EXIT_OK, 'fail': EXIT_TOLERANCE, 'inconclusive': EXIT_INCONCLUSIVE}

# 代数恒等式的绝对容差
ALGEBRA_TOL = 1e-12
CHAINMAP_TOL = 1e-4
BEREZIN_TOL = 1e-9
PFAFFIAN_TOL = 1e-10
CONST_POTENTIAL_STRENGTH = 0.3
# props 中链映射与顶次分量的样例个数；余闭性链数为 prop_chains 的十分之一
CHAIN_MAP_CASES = 3
TOPDEGREE_CASES = 20

# 可注入符号错误的性质（负对照）
FAULTS = ('anticommute', 'pfaffian_square', 'berezin')

# 缺省的蒙特卡洛对照面板: N = 2，常系数与一阶模的 1-形式
DEFAULT_MC_PANEL = [
    {'name': 'const_dx1_dx2', 'forms': [[{'idx': [0], 'coef': [1.0, 0.0]}],
                                        [{'idx': [1], 'coef': [1.0, 0.0]}]]},
    {'name': 'const_mixed', 'forms': [[{'idx': [0], 'coef': [0.6, 0.0]}, {'idx': [1], 'coef': [-0.4, 0.0]}],
                                      [{'idx': [0], 'coef': [0.3, 0.0]}, {'idx': [1], 'coef': [0.9, 0.0]}]]},
    {'name': 'const_complex', 'forms': [[{'idx': [0], 'coef': [0.5, 0.5]}],
                                        [{'idx': [1], 'coef': [0.0, 1.0]}]]},
    {'name': 'cos_x2_dx1', 'forms': [[{'idx': [0], 'mode': [0, 1], 'coef': [0.5, 0.0]},
                                      {'idx': [0], 'mode': [0, -1], 'coef': [0.5, 0.0]}],
                                     [{'idx': [1], 'coef': [1.0, 0.0]}]]},
    {'name': 'wave_x1_dx2', 'forms': [[{'idx': [0], 'coef': [1.0, 0.0]}],
                                      [{'idx': [1], 'mode': [1, 0], 'coef': [1.0, 0.0]}]]},
    {'name': 'both_mode1', 'forms': [[{'idx': [0], 'mode': [0, 1], 'coef': [0.7, 0.0]}],
                                     [{'idx': [1], 'mode': [0, -1], 'coef': [0.7, 0.0]},
                                      {'idx': [1], 'coef': [0.5, 0.0]}]]},
]


class _Parser(argparse.ArgumentParser):
    """用法错误统一抛出 ConfigError，由 main 转成退出码 64"""

    def error(self, message):
        raise ConfigError(message)


def _timestamp():
    return datetime.now().isoformat(timespec='seconds')


def _records(table):
    return table.to_dict(orient='records')


def _calibration():
    return {'str_normalizer': STR_NORMALIZER, 'kappa': KAPPA, 'slot_scale': SLOT_SCALE}


# ---------------------------------------------------------------------------
# index
# ---------------------------------------------------------------------------

def cmd_index(config):
    """
    指标流水线: McKean-Singer（多个时间）、路径积分 Σ_N Ch_D[c_N]、局部化公式，逐项判定

    参数:
    config: RunConfig

    返回:
    (报告 dict, 状态字符串)
    """
    k = config.flux
    if k != 0:
        torus = FlatTorus(2)
        m = build_dirac_magnetic(k, config.levels, use_cache=config.use_cache)
        bundle = BundleModel.magnetic(k, config.levels)
        const_potential = [[ScalarForm.monomial(torus, (0,), coef=CONST_POTENTIAL_STRENGTH * 1j)]]
        expected = float(k)
    else:
        torus = FlatTorus(config.torus_dim)
        m = build_dirac_flat(torus, config.cutoff, use_cache=config.use_cache)
        potential = wave_potential(torus, config.potential_eps, cutoff=config.cutoff)
        bundle = BundleModel.trivial(torus, potential=potential)
        const_potential = None
        expected = 0.0

    twisted_value = twisted_reference(m, bundle, const_potential)
    spectral = {}
    checks = []
    for t in config.heat_times:
        value = mckean_singer(m, t)
        spectral[str(t)] = value
        checks.append(metrics.compare_values(f"mckean_singer_t={t}", value, expected, config.tol_index))

    path = index_via_pathintegral(m, bundle, config.n_max, order=config.quad_order, method=config.method,
                                  max_len=config.max_len, probe=const_potential)
    local = localization_rhs(bundle)
    checks.append(metrics.compare_values('pathintegral_vs_mckean_singer', path['value'], twisted_value,
                                         config.tol_pathintegral))
    checks.append(metrics.compare_values('pathintegral_vs_localization', path['value'], local,
                                         config.tol_pathintegral))
    summary = metrics.summarize_checks(checks)

    report = {
        'command': 'index',
        'config': config.to_dict(),
        'flux': k,
        'expected_index': expected,
        'mckean_singer': spectral,
        'twisted_mckean_singer': twisted_value,
        'index_via_pathintegral': path['value'],
        'pairing': path['pairing'],
        'per_N': _records(path['per_N']),
        'per_length': _records(path['per_length']),
        'growth': {'convergent': path['growth']['convergent'], 'verdict': path['growth']['verdict']},
        'tail_estimate': path['tail_estimate'],
        'localization_rhs': local,
        'calibration': _calibration(),
        'checks': summary['table'].to_dict(orient='records'),
        'status': summary['status'],
    }
    if summary['status'] == 'pass':
        logger.info("✅ 指标流水线通过: k=%d, 路径积分 %s", k, path['value'])
    else:
        logger.warning("❌ 指标流水线未通过: %d 项失败", summary['failed'])
    return report, summary['status']


# ---------------------------------------------------------------------------
# props
# ---------------------------------------------------------------------------

def _max_zero(chains, op):
    return max((op(c).max_abs_coordinate() for c in chains), default=0.0)


def _prop_algebra(chains, fault=None):
    """d² = b'² = db' + b'd = (d + b')² = 0，以及循环投影的幂等与交换"""
    anti_sign = -1.0 if fault == 'anticommute' else 1.0
    entries = [
        metrics.bound_check('d_squared', _max_zero(chains, lambda c: bar_d(bar_d(c))), ALGEBRA_TOL),
        metrics.bound_check('bprime_squared', _max_zero(chains, lambda c: bar_bprime(bar_bprime(c))), ALGEBRA_TOL),
        metrics.bound_check('anticommute', _max_zero(
            chains, lambda c: bar_d(bar_bprime(c)) + anti_sign * bar_bprime(bar_d(c))), ALGEBRA_TOL),
        metrics.bound_check('total_squared', _max_zero(
            chains, lambda c: total_differential(total_differential(c))), ALGEBRA_TOL),
    ]
    idem = 0.0
    preserved = 0.0
    for c in chains:
        cyc = cyclic_project(c)
        again = cyclic_project(BarChain(cyc.terms))
        idem = max(idem, (again - cyc).max_abs_coordinate())
        image = total_differential(cyc)
        preserved = max(preserved, (cyclic_project(BarChain(image.terms)) - image).max_abs_coordinate())
    entries.append(metrics.bound_check('cyclic_idempotent', idem, ALGEBRA_TOL))
    entries.append(metrics.bound_check('cyclic_preserved', preserved, ALGEBRA_TOL))
    return entries


def _sample_counts(config):
    return {'algebra_chains': config.prop_chains, 'coclosed_chains': max(1, config.prop_chains // 10),
            'chain_map_cases': CHAIN_MAP_CASES, 'topdegree_cases': TOPDEGREE_CASES}


def _prop_coclosed(config, torus, rng):
    """随机循环链上 Ch_D 的余闭性（相对残差）"""
    m = build_dirac_flat(torus, config.cutoff, use_cache=config.use_cache)
    worst = 0.0
    for _ in range(_sample_counts(config)['coclosed_chains']):
        c = cyclic_project(random_chain(torus, rng, n_terms=1, max_len=3, max_degree=2, slot_terms=1))
        report = coclosedness_report(m, c, order=config.quad_order, method=config.method)
        worst = max(worst, report['relative'])
    return metrics.bound_check('coclosed', worst, config.tol_props)


def _prop_chain_map(config, torus, rng):
    worst = 0.0
    for case in range(CHAIN_MAP_CASES):
        loop = make_smooth_loop(torus, M=512, seed=config.seed + case)
        c = random_chain(torus, rng, n_terms=1, max_len=2, max_degree=2, slot_terms=1)
        tangents = [TangentField.random(loop, rng) for _ in range(case)]
        try:
            worst = max(worst, chainmap_residual(c, loop, tangents))
        except LoopIntError as e:
            logger.debug("跳过链映射样例 %d: %s", case, e)
    return metrics.bound_check('chain_map', worst, CHAINMAP_TOL)


def _prop_topdegree(rng, fault=None):
    berezin_worst = 0.0
    pf_worst = 0.0
    for _ in range(TOPDEGREE_CASES):
        dim = int(rng.choice([2, 4, 6]))
        B = rng.normal(size=(dim, dim))
        A = B - B.T
        N = int(rng.choice([0, 2, 4])) if dim >= 4 else int(rng.choice([0, 2]))
        covectors = [rng.normal(size=dim) for _ in range(N)]
        fast = berezin_top(A, covectors)
        if fault == 'berezin':
            fast = -fast
        slow = exterior_top_bruteforce(A, covectors)
        berezin_worst = max(berezin_worst, abs(fast - slow) / max(abs(slow), 1e-300))
        pf = pfaffian(A)
        sign = -1.0 if fault == 'pfaffian_square' else 1.0
        det = np.linalg.det(A)
        pf_worst = max(pf_worst, abs(sign * pf ** 2 - det) / max(abs(det), 1.0))
    return [metrics.bound_check('berezin', berezin_worst, BEREZIN_TOL),
            metrics.bound_check('pfaffian_square', pf_worst, PFAFFIAN_TOL)]


def cmd_props(config, fault=None):
    """
    代数与分析性质检验套件，固定种子

    参数:
    config: RunConfig
    fault: 可选，向指定性质注入符号错误（负对照）

    返回:
    (报告 dict, 状态字符串)
    """
    if fault is not None and fault not in FAULTS:
        raise ConfigError(f"未知的故障注入项 {fault}，可选 {FAULTS}")
    rng = np.random.default_rng(config.seed)
    torus = FlatTorus(2)
    chains = [random_chain(torus, rng) for _ in range(config.prop_chains)]
    entries = _prop_algebra(chains, fault)
    entries.append(_prop_coclosed(config, torus, rng))
    entries.append(_prop_chain_map(config, torus, rng))
    entries.extend(_prop_topdegree(rng, fault))
    counts = _sample_counts(config)
    logger.info("⏳ 样本数: %s", counts)
    summary = metrics.summarize_checks(entries)
    report = {
        'command': 'props',
        'config': config.to_dict(),
        'fault': fault,
        'sample_counts': counts,
        'properties': {row['check']: bool(row['passed']) for row in entries},
        'checks': summary['table'].to_dict(orient='records'),
        'status': summary['status'],
    }
    for row in entries:
        if not row['passed']:
            logger.warning("❌ 性质 %s 未通过: %.3e > %.1e", row['check'], row['value'], row['tolerance'])
    return report, summary['status']


# ---------------------------------------------------------------------------
# mc-compare
# ---------------------------------------------------------------------------

def _panel_entries(config):
    if config.panel == 'default':
        return DEFAULT_MC_PANEL
    panels = load_panels()
    if config.panel not in panels:
        raise ConfigError(f"面板 {config.panel} 不存在，可选 {sorted(panels)}")
    return panels[config.panel]


def cmd_mc_compare(config, log_dir=None):
    """
    Wiener 测度上的蒙特卡洛积分与算子积分映射逐面板对照

    返回:
    (报告 dict, 状态字符串)
    """
    torus = FlatTorus(2)
    rep = build_spinor_rep(2)
    m = build_dirac_flat(torus, config.cutoff, use_cache=config.use_cache)
    rows = []
    entries = []
    for i, panel in enumerate(_panel_entries(config)):
        forms = [form_from_spec(torus, spec, cutoff=config.cutoff) for spec in panel['forms']]
        operator_value = integral_map_one_forms(m, forms, order=config.quad_order, method=config.method)
        log_path = os.path.join(log_dir, f"samples_{panel['name']}.csv") if log_dir else None
        est = integral_I_mc(rep, torus, forms, S=config.samples, M=config.loop_grid, seed=config.seed + i,
                            stderr_limit=config.stderr_limit, log_path=log_path)
        entry = metrics.z_score_entry(panel['name'], est.estimate, est.stderr, operator_value,
                                      z_limit=config.z_limit, inconclusive=est.inconclusive)
        entries.append(entry)
        rows.append({'panel': panel['name'], **est.to_record(),
                     'operator_re': complex(operator_value).real, 'operator_im': complex(operator_value).imag,
                     'z': entry['z']})
        logger.info("⏳ 面板 %s: 估计 %s, 算子值 %s, z=%.2f", panel['name'], est.estimate, operator_value, entry['z'])
    summary = metrics.summarize_checks(entries)
    report = {
        'command': 'mc-compare',
        'config': config.to_dict(),
        'panels': rows,
        'checks': summary['table'].to_dict(orient='records'),
        'status': summary['status'],
    }
    return report, summary['status']


# ---------------------------------------------------------------------------
# 入口
# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog='loopint', description='平坦环面上回路空间路径积分的数值检验')
    parser.add_argument('--config', help='配置文件（key=value 文本或 .json）')
    parser.add_argument('--seed', type=int, help='随机种子')
    parser.add_argument('--out', help='报告输出目录')
    parser.add_argument('--quad-order', type=int, dest='quad_order', help='单纯形求积阶数')
    parser.add_argument('--samples', type=int, help='蒙特卡洛样本数 S')
    parser.add_argument('--grid', type=int, dest='loop_grid', help='回路网格点数 M')
    parser.add_argument('--flux', type=int, help='磁通量 k')
    parser.add_argument('--lambda', type=int, dest='cutoff', help='Fourier 截断 Λ')
    parser.add_argument('--panel', help='mc-compare 使用的面板名')
    parser.add_argument('--json', action='store_true', help='把报告打印到标准输出')
    parser.add_argument('--verbose', '-v', action='store_true', help='输出调试日志')
    sub = parser.add_subparsers(dest='command')
    sub.add_parser('index', help='指标: McKean-Singer、路径积分与局部化公式')
    props = sub.add_parser('props', help='代数与分析性质套件')
    props.add_argument('--fault', choices=FAULTS, help='向指定性质注入符号错误')
    sub.add_parser('mc-compare', help='蒙特卡洛与算子积分映射对照')
    return parser


def _resolve_config(args):
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {'seed': args.seed, 'out_dir': args.out, 'quad_order': args.quad_order,
                 'samples': args.samples, 'loop_grid': args.loop_grid, 'flux': args.flux,
                 'cutoff': args.cutoff, 'panel': args.panel}
    return config.with_overrides(**overrides)


def _write_report(report, config, command):
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, f"{command}.json")
    with open(path, 'w', encoding='utf-8') as f:
        f.write(dumps_report(report))
    for key in ('per_N', 'per_length', 'panels'):
        if key in report:
            pd.DataFrame(report[key]).to_csv(os.path.join(config.out_dir, f"{command}_{key}.csv"), index=False)
    logger.info("✅ 报告已写入 %s", path)
    return path


def run(argv=None):
    """
    解析参数并执行子命令

    返回:
    退出码
    """
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError("缺少子命令: index / props / mc-compare")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format='%(asctime)s %(levelname)s %(name)s: %(message)s')
        config = _resolve_config(args)
    except ConfigError as e:
        print(f"❌ 用法错误: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == 'index':
            report, status = cmd_index(config)
        elif args.command == 'props':
            report, status = cmd_props(config, fault=args.fault)
        else:
            report, status = cmd_mc_compare(config, log_dir=config.out_dir)
    except ConfigError as e:
        print(f"❌ 配置错误: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LoopIntError as e:
        logger.error("❌ %s 失败: %s", args.command, e)
        report, status = {'command': args.command, 'config': config.to_dict(), 'error': str(e)}, 'fail'

    body = dumps_report(report)
    _write_report(dict(report, timestamp=_timestamp()), config, args.command)
    if args.json:
        print(body)
    return STATUS_EXIT[status]


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
