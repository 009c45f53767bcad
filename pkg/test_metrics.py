import math

import numpy as np

from metrics import (bound_check, compare_values, is_monotone_decreasing, observed_order, summarize_checks,
                     z_score_entry)


def test_compare_values():
    entry = compare_values('index', 1.0 + 1e-10j, 1.0, 1e-8)
    assert entry['passed']
    assert not compare_values('index', 1.1, 1.0, 0.05, relative=True)['passed']


def test_z_score_entry():
    assert z_score_entry('p', 1.02, 0.01, 1.0)['passed']
    assert not z_score_entry('p', 1.05, 0.01, 1.0)['passed']
    exact = z_score_entry('p', 2.0, 0.0, 2.0)
    assert exact['z'] == 0.0 and exact['passed']
    assert math.isinf(z_score_entry('p', 2.1, 0.0, 2.0)['z'])
    flagged = z_score_entry('p', 1.0, 0.5, 1.0, inconclusive=True)
    assert flagged['inconclusive'] and not flagged['passed']


def test_summarize_status():
    ok = [bound_check('a', 1e-14, 1e-12), compare_values('b', 1.0, 1.0, 1e-8)]
    assert summarize_checks(ok)['status'] == 'pass'
    failing = ok + [bound_check('c', 1.0, 1e-12)]
    summary = summarize_checks(failing)
    assert summary['status'] == 'fail' and summary['failed'] == 1
    unsure = [z_score_entry('p', 1.0, 0.5, 1.0, inconclusive=True), z_score_entry('q', 1.0, 0.1, 1.0)]
    summary = summarize_checks(unsure)
    assert summary['status'] == 'inconclusive' and summary['inconclusive'] == 1
    assert summarize_checks([])['status'] == 'pass'


def test_convergence_helpers():
    assert is_monotone_decreasing([1e-3, 1e-6, 1e-9])
    assert not is_monotone_decreasing([1e-3, 1e-2])
    orders = observed_order([4e-4, 1e-4, 2.5e-5])
    assert np.allclose(orders, 2.0)


if __name__ == "__main__":
    test_compare_values()
    test_z_score_entry()
    test_summarize_status()
    test_convergence_helpers()
    print("✅ metrics 测试全部通过")
