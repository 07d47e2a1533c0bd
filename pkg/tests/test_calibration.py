import math

import numpy as np
import pytest

from isvdchart.calibration import (ARLEstimate, CalibrationError, CalibrationSpec,
                                   estimate_arl, estimate_sigma0, find_control_limit,
                                   noise_edge)
from isvdchart.model import EmpiricalModel, process_model, sample_unit_sphere
from isvdchart.monitor import MonitorConfig, Sigma0Factors

_erfc = np.frompyfunc(math.erfc, 1, 1)


def tail_abs_product(H):
    """P(|x y| > H) for independent standard normals, by quadrature over x."""
    x = np.linspace(1e-9, 12.0, 200001)
    dens = 2 * np.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    f = dens * _erfc(H / (x * math.sqrt(2))).astype(float)
    return float(np.sum((f[1:] + f[:-1]) / 2 * np.diff(x)))


def exact_limit(arl):
    lo, hi = 0.0, 50.0
    for _ in range(80):
        mid = (lo + hi) / 2
        if 1 / tail_abs_product(mid) < arl:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def test_tail_oracle_sanity():
    assert tail_abs_product(0.0) == pytest.approx(1.0, abs=1e-6)
    rng = np.random.default_rng(0)
    z = np.abs(rng.standard_normal(400000) * rng.standard_normal(400000))
    assert tail_abs_product(1.0) == pytest.approx(np.mean(z > 1.0), abs=3e-3)


def test_spec_validation_and_default_horizon():
    assert CalibrationSpec(200).max_run_length == 2000
    for bad in (dict(target_arl0=0), dict(target_arl0=-1), dict(tolerance=0),
                dict(replications=0), dict(target_arl0=100, max_run_length=999)):
        with pytest.raises(ValueError):
            CalibrationSpec(**bad)


def test_memoryless_chart_matches_geometric_oracle():
    # lambda = 1 with p = q = m = 1 makes T_t = |x_t y_t| i.i.d., so the run
    # length is geometric and ARL(H) = 1 / P(|xy| > H).
    model = process_model(1, 1)
    cfg = MonitorConfig(1.0, 1, m=1)
    spec = CalibrationSpec(50, tolerance=0.01, replications=4000, seed=3)
    res = find_control_limit(model, cfg, spec)
    H_exact = exact_limit(50)
    assert abs(res.achieved_arl - 50) <= 0.5
    # slope dARL/dH converts the ARL standard error into an H tolerance
    slope = (1 / tail_abs_product(H_exact * 1.01) - 1 / tail_abs_product(H_exact)) / (0.01 * H_exact)
    assert abs(res.H - H_exact) <= 4 * res.std_error / slope

    est = estimate_arl(model, cfg.with_limit(H_exact), CalibrationSpec(50, replications=4000,
                                                                       seed=11))
    assert abs(est.mean - 50) <= 3 * est.std_error
    assert est.std_error == pytest.approx(math.sqrt(50 * 49 / 4000), rel=0.1)


def test_batched_and_sequential_engines_agree():
    rng = np.random.default_rng(4)
    model = process_model(4, 6, [(0.8, sample_unit_sphere(4, rng), sample_unit_sphere(6, rng))])
    cfg = MonitorConfig(0.1, 2, H=0.9, m=3)
    spec = CalibrationSpec(20, replications=30, seed=2)
    for method in ("isvd", "baseline"):
        a = estimate_arl(model, cfg, spec, method=method)
        b = estimate_arl(model, cfg, spec, method=method, engine="sequential")
        np.testing.assert_array_equal(a.run_lengths, b.run_lengths)


def test_calibration_is_reproducible_and_seed_dependent():
    model = process_model(3, 4)
    cfg = MonitorConfig(0.2, 2, m=2)
    a = find_control_limit(model, cfg, CalibrationSpec(30, replications=200, seed=1))
    b = find_control_limit(model, cfg, CalibrationSpec(30, replications=200, seed=1))
    c = find_control_limit(model, cfg, CalibrationSpec(30, replications=200, seed=2))
    assert a == b and a.H != c.H
    assert a.to_dict()["H"] == a.H


def test_calibration_rejects_out_of_control_model():
    model = process_model(3, 4, change=(1.0, np.eye(3)[0], np.eye(4)[0]), tau=1)
    with pytest.raises(ValueError):
        find_control_limit(model, MonitorConfig(0.2, 2), CalibrationSpec(20, replications=10))


def test_calibration_error_when_statistic_never_moves():
    zero = EmpiricalModel(np.zeros((10, 2)), np.zeros((10, 3)))
    with pytest.raises(CalibrationError):
        find_control_limit(zero, MonitorConfig(0.2, 1), CalibrationSpec(20, replications=10))


def test_infinite_limit_is_fully_censored():
    spec = CalibrationSpec(10, replications=5)
    est = estimate_arl(process_model(2, 2), MonitorConfig(0.5, 1), spec)
    assert est.censor_fraction == 1.0 and est.mean == spec.max_run_length


def test_arl_estimate_from_lengths():
    est = ARLEstimate.from_lengths([1, 2, 3, 10], [False, False, False, True])
    assert est.mean == 4.0 and est.censor_fraction == 0.25
    assert est.std_error == pytest.approx(np.std([1, 2, 3, 10], ddof=1) / 2)


def test_estimate_sigma0_recovers_population_factors():
    rng = np.random.default_rng(5)
    u, v = sample_unit_sphere(6, rng), sample_unit_sphere(8, rng)
    model = process_model(6, 8, [(1.2, u, v)])
    xs, ys = model.sample(np.random.default_rng(6), 1, 20000, 1)
    est = estimate_sigma0(xs[:, 0], ys[:, 0])
    assert est.J == 1
    assert est.s0_sq[0] == pytest.approx(1.44, rel=0.05)
    assert abs(est.U0[:, 0] @ u) > 0.99 and abs(est.V0[:, 0] @ v) > 0.99
    assert estimate_sigma0(xs[:, 0], ys[:, 0], J=3).J == 3


def test_estimate_sigma0_auto_keeps_nothing_for_independent_data():
    rng = np.random.default_rng(7)
    xs, ys = rng.standard_normal((2000, 10)), rng.standard_normal((2000, 20))
    assert estimate_sigma0(xs, ys).J == 0
    # the edge is the right order: top sample singular value sits just below it
    top = np.linalg.svd(xs.T @ ys / 2000, compute_uv=False)[0]
    assert 0.7 < top / noise_edge(xs, ys) < 1.2


def test_estimate_sigma0_input_checks():
    with pytest.raises(ValueError):
        estimate_sigma0(np.zeros((1, 2)), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        estimate_sigma0(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        estimate_sigma0(np.ones((5, 2)), np.ones((5, 2)), J=-1)


def test_empirical_sigma0_none_when_factor_free():
    s = Sigma0Factors.none(3, 4)
    assert s.J == 0 and np.all(s.dense() == 0)
