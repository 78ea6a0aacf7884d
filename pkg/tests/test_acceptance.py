"""Acceptance suite on the full moving-block benchmark.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary.  Tolerances are pinned in the constants below.  The two
20-trial ensembles dominate the runtime (about 7 minutes on one core).
"""

import dataclasses
import os
import warnings

import numpy as np
import pytest

from reprocs.assumptions import ModelViolation, h_star_upper
from reprocs.harness import benchmark_config, run_ensemble
from reprocs.models import gen_support_model3

TRIALS = 20
SUPPORT_EXACT_RATE = 0.95
REL_ERROR_MEAN_MAX = 1e-2
RUNTIME_MAX_S = 120.0
RANK_RATE = 0.95
SE_MONOTONE_RATE = 0.90

RESULTS: list[str] = []

pytestmark = pytest.mark.slow


def record(label: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
    RESULTS.append(line)
    print(line)


def _ensemble(mode):
    cfg = dataclasses.replace(benchmark_config(), mode=mode, trials=TRIALS,
                              jobs=max(1, min(TRIALS, os.cpu_count() or 1)))
    return cfg, run_ensemble(cfg)


@pytest.fixture(scope="module")
def rpca():
    return _ensemble("rpca")


@pytest.fixture(scope="module")
def mc():
    return _ensemble("mc")


def interval_means(cfg, trials):
    """Per-trial mean relative error on [t_j + K alpha, next change) for every j."""
    ct = list(cfg.signal.change_times) + [cfg.signal.t_max + 1]
    span = cfg.engine.K * cfg.engine.alpha
    out = np.full((len(trials), len(ct) - 1), np.nan)
    for i, tr in enumerate(trials):
        for j in range(len(ct) - 1):
            sel = (tr.t >= ct[j] + span) & (tr.t < ct[j + 1])
            out[i, j] = np.mean(tr.rel_error[sel])
    return out


def test_1a_support_recovery(rpca):
    cfg, s = rpca
    rate = s.rates["support_exact_rate"]
    ok = rate >= SUPPORT_EXACT_RATE
    record("1a support exact in every frame", ok,
           f"{rate:.0%} of {len(s.trials)} trials (need >= {SUPPORT_EXACT_RATE:.0%})")
    assert ok


def test_1b_relative_error_after_ppca(rpca):
    cfg, s = rpca
    m = interval_means(cfg, s.trials)
    ens = np.nanmean(m, axis=0)
    ok = bool(np.all(ens <= REL_ERROR_MEAN_MAX))
    record("1b mean rel error on [t_j + K alpha, next change)", ok,
           "per change " + ", ".join(f"{v:.3g}" for v in ens)
           + f"; worst trial {np.nanmax(m):.3g} (need <= {REL_ERROR_MEAN_MAX:g})")
    assert ok


def test_1c_runtime(rpca):
    cfg, s = rpca
    rt = np.array([tr.runtime for tr in s.trials])
    ok = bool(rt.max() <= RUNTIME_MAX_S)
    record("1c per-trial runtime", ok,
           f"max {rt.max():.1f} s, mean {rt.mean():.1f} s (need <= {RUNTIME_MAX_S:g} s)")
    assert ok


def test_2_detection_delay(rpca):
    cfg, s = rpca
    ct, a = cfg.signal.change_times, cfg.engine.alpha
    bad = [tr.trial for tr in s.trials
           if len(tr.t_hat) != len(ct) or not all(tj <= th <= tj + 2 * a for tj, th in zip(ct, tr.t_hat))]
    delays = s.rates["detection_delays"]
    ok = not bad
    record("2 detections inside [t_j, t_j + 2 alpha], none elsewhere", ok,
           f"delays min {min(delays)} max {max(delays)}; offending trials {bad}")
    assert ok


def test_3_rank_estimates(rpca):
    cfg, s = rpca
    want = {(j, k) for j in range(1, len(cfg.signal.change_times) + 1) for k in range(1, cfg.engine.K + 1)}
    good = [set(tr.r_hat) == want and all(v == cfg.signal.r_new for v in tr.r_hat.values()) for tr in s.trials]
    rate = float(np.mean(good))
    ok = rate >= RANK_RATE
    record("3 r_hat = 2 for every (j, k)", ok, f"{rate:.0%} of trials (need >= {RANK_RATE:.0%})")
    assert ok


def test_4_se_window_means_decrease(rpca):
    cfg, s = rpca
    a, K = cfg.engine.alpha, cfg.engine.K
    good = []
    for tr in s.trials:
        mono = len(tr.t_hat) == len(cfg.signal.change_times)
        for th in tr.t_hat:
            w = [tr.se[(tr.t > th + (k - 1) * a) & (tr.t <= th + k * a)].mean() for k in range(1, K + 1)]
            mono &= bool(np.all(np.diff(w) <= 0))
        good.append(mono)
    rate = float(np.mean(good))
    ok = rate >= SE_MONOTONE_RATE
    record("4 SE window means non-increasing over p-PCA windows", ok,
           f"{rate:.0%} of trials (need >= {SE_MONOTONE_RATE:.0%})")
    assert ok


def test_5_property_suites():
    import test_assumptions
    import test_linalg
    import test_sparse

    suites = {
        "ric = kappa^2 (200 instances)": test_linalg.test_ric_kappa_identity_200_instances,
        "block-banded bound (500 cases)": test_assumptions.test_blockbanded_500_random_compliant_cases,
        "CS error <= 7 xi, exact support (100 instances)": test_sparse.test_cs_error_and_exact_support_100_instances,
        "e_t closed form when support exact": test_sparse.test_error_identity_when_support_exact,
        "h* <= beta on model3 windows": test_assumptions.test_h_star_le_beta_on_model3_windows,
    }
    failed = []
    for name, fn in suites.items():
        try:
            fn()
        except Exception:  # noqa: BLE001
            failed.append(name)
    # benchmark support settings; at n = 256 the block wraps around within
    # every window, which leaves the support model, so the same generator is
    # run on a longer vector and every compliant window is checked
    cfg = benchmark_config()
    sup_cfg = dataclasses.replace(cfg.support, n=2048)
    a = cfg.engine.alpha
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sup = gen_support_model3(sup_cfg, cfg.signal.t_max, cfg.seed)
    checked = 0
    for start in range(0, len(sup) - a + 1, a):
        try:
            h = h_star_upper(sup[start:start + a], a, cfg.support.rho, sup_cfg.n)
        except ModelViolation:
            continue
        checked += 1
        if not np.all(h <= cfg.support.beta):
            failed.append(f"h* <= beta on benchmark-setting window starting at frame {start + 1}")
    ok = not failed
    record("5 property suites", ok, f"{len(suites) - sum(n in suites for n in failed)}/{len(suites)} suites pass"
           + f"; h* <= beta on {checked} compliant benchmark-setting windows"
           + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok


def test_6_mc_parity(mc):
    cfg, s = mc
    m = interval_means(cfg, s.trials)
    ens = np.nanmean(m, axis=0)
    ok = bool(np.all(ens <= REL_ERROR_MEAN_MAX)) and s.rates["failed_trials"] == 0
    record("6 mc mode mean rel error on [t_j + K alpha, next change)", ok,
           "per change " + ", ".join(f"{v:.3g}" for v in ens)
           + f"; worst trial {np.nanmax(m):.3g}; failed trials {s.rates['failed_trials']}"
           + f" (need <= {REL_ERROR_MEAN_MAX:g})")
    assert ok
