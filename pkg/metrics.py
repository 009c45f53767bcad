import math

import numpy as np
import pandas as pd


# 单项检验: 数值与参考值的绝对误差和相对误差
def compare_values(name, value, reference, tol, relative=False):
    """
    参数:
    name: 检验名
    value: 计算值（可为复数）
    reference: 参考值
    tol: 容差
    relative: True 时按相对误差判定

    返回:
    dict，passed 表示是否通过
    """
    value = complex(value)
    reference = complex(reference)
    error = abs(value - reference)
    rel = error / abs(reference) if reference != 0 else error
    measured = rel if relative else error
    return {
        'check': name,
        'value_re': value.real,
        'value_im': value.imag,
        'reference_re': reference.real,
        'reference_im': reference.imag,
        'abs_error': error,
        'rel_error': rel,
        'tolerance': tol,
        'passed': bool(measured <= tol),
    }


def bound_check(name, value, tol):
    """value ≤ tol 的单边检验（残差类性质）"""
    value = float(value)
    return {'check': name, 'value': value, 'tolerance': tol, 'passed': bool(value <= tol)}


def z_score_entry(name, estimate, stderr, reference, z_limit=3.0, inconclusive=False):
    """蒙特卡洛估计与参考值的 z 分数；inconclusive 的条目不计入通过或失败"""
    estimate = complex(estimate)
    reference = complex(reference)
    diff = abs(estimate - reference)
    if stderr > 0:
        z = diff / stderr
    else:
        z = 0.0 if diff < 1e-12 else math.inf
    return {
        'check': name,
        'estimate_re': estimate.real,
        'estimate_im': estimate.imag,
        'reference_re': reference.real,
        'reference_im': reference.imag,
        'stderr': float(stderr),
        'z': float(z),
        'z_limit': z_limit,
        'inconclusive': bool(inconclusive),
        'passed': bool(z <= z_limit) and not inconclusive,
    }


def is_monotone_decreasing(values, slack=0.0):
    values = np.asarray(values, dtype=float)
    return bool(np.all(values[1:] <= values[:-1] * (1.0 + slack) + 1e-300))


def observed_order(errors, ratio=2.0):
    """步长按 ratio 缩小时误差的观测收敛阶"""
    errors = np.asarray(errors, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        orders = np.log(errors[:-1] / errors[1:]) / np.log(ratio)
    return orders


# 汇总多项检验
def summarize_checks(entries):
    """
    返回:
    dict: table（DataFrame），passed，failed，inconclusive 计数，以及 status ∈ {'pass', 'fail', 'inconclusive'}
    """
    table = pd.DataFrame(entries)
    if table.empty:
        return {'table': table, 'passed': 0, 'failed': 0, 'inconclusive': 0, 'status': 'pass'}
    inconclusive = int(table['inconclusive'].fillna(False).astype(bool).sum()) if 'inconclusive' in table else 0
    passed = int(table['passed'].sum())
    failed = len(table) - passed - inconclusive
    if failed > 0:
        status = 'fail'
    elif inconclusive > 0:
        status = 'inconclusive'
    else:
        status = 'pass'
    return {'table': table, 'passed': passed, 'failed': failed, 'inconclusive': inconclusive, 'status': status}
