"""Config-driven experiments: scenario generation, trials, ensembles, artifacts.

Configuration is an INI file with sections ``[experiment]``, ``[signal]``,
``[support]``, ``[outliers]`` and ``[engine]``.  Every key is listed in
:data:`SCHEMA`; unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assumptions import ADVISORY, STRICT, AssumptionReport, check_scenario
from .engine import EngineParams, ReProCS, perturbed_basis, theorem_params, train_init, zeta_upper_bound
from .linalg import dif
from .matio import format_value
from .models import (
    STREAM_INIT,
    ScenarioTruth,
    SignalModelConfig,
    SupportModelConfig,
    make_rng,
    make_scenario,
)
from .sparse import SolverOptions

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Bad or unknown configuration key/value."""


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class OutlierSettings:
    x_lo: float = 2.0
    x_hi: float = 6.0
    random_sign: bool = False


@dataclass
class EngineSettings:
    alpha: int = 800
    K: int = 6
    xi: float | None = 0.1
    omega: float | None = 1.0
    thresh: float | None = None
    params: str = "explicit"  # or "theorem": xi, omega from the scenario truth
    zeta: float | None = None  # None: the largest admissible value
    init: str = "perturbed"  # or "train"
    init_noise: float = 1e-8
    rank_rule: str = "nonzero_eig"
    rank_r0: int | None = None
    energy_p: float | None = None
    lambda_train_minus: float | None = None  # None: from [signal] (perturbed) or estimated (train)
    max_iters: int = 100
    newton_iters: int = 60
    feas_tol: float = 1e-6
    opt_tol: float = 1e-6
    halt_on_error: bool = False


@dataclass
class ExperimentConfig:
    signal: SignalModelConfig
    support: SupportModelConfig
    outliers: OutlierSettings = field(default_factory=OutlierSettings)
    engine: EngineSettings = field(default_factory=EngineSettings)
    mode: str = "rpca"
    trials: int = 1
    seed: int = 0
    out: str | None = None
    cadence: int = 1
    jobs: int = 1
    assumption_mode: str = ADVISORY
    svg: bool = False

    def validate(self) -> None:
        if self.mode not in ("mc", "rpca"):
            raise ConfigError(f"mode must be mc or rpca, got {self.mode!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.cadence < 1:
            raise ConfigError("cadence must be at least 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.assumption_mode not in (STRICT, ADVISORY):
            raise ConfigError(f"assumption_mode must be {STRICT} or {ADVISORY}")
        e = self.engine
        if e.params not in ("explicit", "theorem"):
            raise ConfigError("engine.params must be explicit or theorem")
        if e.init not in ("perturbed", "train"):
            raise ConfigError("engine.init must be perturbed or train")
        if e.init == "train" and self.signal.t_train < 1:
            raise ConfigError("engine.init = train needs signal.t_train >= 1")
        if e.params == "explicit" and self.mode == "rpca" and (e.xi is None or e.omega is None):
            raise ConfigError("rpca mode with explicit parameters needs engine.xi and engine.omega")
        if self.support.n != self.signal.n:
            raise ConfigError("support.n must equal signal.n")
        try:
            self.signal.validate()
            self.support.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _opt(fn):
    def parse(s: str):
        s = s.strip()
        return None if s.lower() in ("", "none") else fn(s)
    parse.optional = True
    return parse


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple[int, ...]:
    s = s.strip()
    return tuple(int(x) for x in s.split(",")) if s else ()


def _int_or_ints(s: str):
    t = _ints(s)
    return t[0] if len(t) == 1 else t


def _float_or_floats(s: str):
    t = tuple(float(x) for x in s.split(","))
    return t[0] if len(t) == 1 else t


SCHEMA: dict[str, dict[str, callable]] = {
    "experiment": {
        "mode": str, "trials": int, "seed": int, "out": _opt(str), "cadence": int, "jobs": int,
        "assumption_mode": str, "svg": _bool,
    },
    "signal": {
        "n": int, "t_max": int, "r0": int, "change_times": _ints, "r_new": _int_or_ints,
        "q": _float_or_floats, "v": _float_or_floats, "lambda_train_minus": float, "gamma_star": float,
        "t_train": int, "d": _opt(int), "star_after_change": _bool, "compliance": _bool,
    },
    "support": {
        "variant": str, "s": int, "rho": float, "beta": int, "rho2": _opt(float), "dwell": _opt(int),
        "q": _opt(float), "sigma2": _opt(float), "m": _opt(int), "strict": _bool,
    },
    "outliers": {"x_lo": float, "x_hi": float, "random_sign": _bool},
    "engine": {
        "alpha": int, "K": int, "xi": _opt(float), "omega": _opt(float), "thresh": _opt(float),
        "params": str, "zeta": _opt(float), "init": str, "init_noise": float, "rank_rule": str,
        "rank_r0": _opt(int), "energy_p": _opt(float), "lambda_train_minus": _opt(float),
        "max_iters": int, "newton_iters": int, "feas_tol": float, "opt_tol": float, "halt_on_error": _bool,
    },
}

REQUIRED = {"signal": ("n", "t_max", "r0"), "support": ("variant", "s")}


def benchmark_config() -> ExperimentConfig:
    """The reference moving-block benchmark (n = 256, 15000 frames, two changes)."""
    sig = SignalModelConfig(
        n=256, t_max=15000, t_train=200, r0=10, change_times=(600, 8000), r_new=2,
        q=1.0, v=1.00017, lambda_train_minus=1.0, gamma_star=5.0, d=6400,
    )
    sup = SupportModelConfig(variant="model3", n=256, s=20, rho=2, beta=18, alpha=800, dwell=18)
    return ExperimentConfig(signal=sig, support=sup, mode="rpca", trials=20, seed=0, cadence=300)


def _set_fields(obj, values: dict):
    return dataclasses.replace(obj, **values)


def config_from_dict(sections: dict[str, dict[str, str]], base: ExperimentConfig | None = None) -> ExperimentConfig:
    unknown = set(sections) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    parsed: dict[str, dict] = {}
    for sec, items in sections.items():
        schema = SCHEMA[sec]
        out = {}
        for key, raw in items.items():
            if key not in schema:
                raise ConfigError(f"unknown key [{sec}] {key}")
            try:
                out[key] = schema[key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from exc
        parsed[sec] = out
    if base is None:
        for sec, keys in REQUIRED.items():
            missing = [k for k in keys if k not in parsed.get(sec, {})]
            if missing:
                raise ConfigError(f"[{sec}] missing required key(s) {missing}")
        sig = SignalModelConfig(**parsed.get("signal", {}))
        sup_kw = dict(parsed.get("support", {}))
        sup_kw.setdefault("n", sig.n)
        eng = EngineSettings(**parsed.get("engine", {}))
        sup_kw["alpha"] = eng.alpha
        sup = SupportModelConfig(**sup_kw)
        cfg = ExperimentConfig(signal=sig, support=sup, outliers=OutlierSettings(**parsed.get("outliers", {})),
                               engine=eng, **parsed.get("experiment", {}))
    else:
        sig = _set_fields(base.signal, parsed.get("signal", {}))
        eng = _set_fields(base.engine, parsed.get("engine", {}))
        sup = _set_fields(base.support, {**parsed.get("support", {}), "n": sig.n, "alpha": eng.alpha})
        cfg = dataclasses.replace(base, signal=sig, support=sup, engine=eng,
                                  outliers=_set_fields(base.outliers, parsed.get("outliers", {})),
                                  **parsed.get("experiment", {}))
    cfg.validate()
    return cfg


def load_config(path: str | os.PathLike, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    return config_from_dict(sections, base)


def config_to_ini(cfg: ExperimentConfig) -> str:
    objs = {
        "experiment": cfg, "signal": cfg.signal, "support": cfg.support,
        "outliers": cfg.outliers, "engine": cfg.engine,
    }
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for key in keys:
            val = getattr(objs[sec], key)
            lines.append(f"{key} = {'none' if val is None else format_value(val)}")
        lines.append("")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# trials
# --------------------------------------------------------------------------


@dataclass
class TrialResult:
    trial: int
    seed: int
    t: np.ndarray  # frames t_train+1 .. t_max
    rel_error: np.ndarray
    se: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    support_exact: np.ndarray
    converged: np.ndarray
    phase: list
    j_hat: np.ndarray
    k: np.ndarray
    t_hat: list[int]
    r_hat: dict
    report: AssumptionReport | None
    runtime: float
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def all_supports_exact(self) -> bool:
        return bool(self.support_exact.all() and self.converged.all()) and not self.failed

    def metrics_rows(self, cadence: int):
        for i, t in enumerate(self.t):
            if t % cadence == 0:
                yield {
                    "t": int(t), "rel_error": self.rel_error[i], "se": self.se[i],
                    "precision": self.precision[i], "recall": self.recall[i],
                    "support_exact": bool(self.support_exact[i]), "converged": bool(self.converged[i]),
                    "phase": self.phase[i], "j_hat": int(self.j_hat[i]), "k": int(self.k[i]),
                }


METRIC_FIELDS = ["t", "rel_error", "se", "precision", "recall", "support_exact", "converged", "phase", "j_hat", "k"]


def build_scenario(cfg: ExperimentConfig, seed: int, mode: str | None = None) -> ScenarioTruth:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return make_scenario(cfg.signal, cfg.support, mode or cfg.mode, seed,
                             (cfg.outliers.x_lo, cfg.outliers.x_hi), cfg.outliers.random_sign)


def initial_estimate(cfg: ExperimentConfig, truth: ScenarioTruth, seed: int):
    """Initial basis and the eigenvalue that sets the detection threshold."""
    e = cfg.engine
    if e.init == "perturbed":
        rng = make_rng(seed, STREAM_INIT)
        P = perturbed_basis(truth.signal.basis_at(1), e.init_noise, rng)
        lam = cfg.signal.lambda_train_minus
    else:
        P, lam = train_init(truth.L[:, : cfg.signal.t_train], e.rank_rule, e.rank_r0, e.energy_p)
    if e.lambda_train_minus is not None:
        lam = e.lambda_train_minus
    return P, lam


def default_zeta(truth: ScenarioTruth, lam: float) -> float:
    sig = truth.signal
    J = len(sig.change_times)
    r_new = max((sig.new_basis(j).r for j in range(1, J + 1)), default=0)
    r = sig.r0 + J * r_new
    return zeta_upper_bound(r, lam, float(np.max(sig.Lam)), sig.gamma())


def engine_params(cfg: ExperimentConfig, truth: ScenarioTruth, lam: float) -> EngineParams:
    e = cfg.engine
    opts = SolverOptions(max_iters=e.max_iters, newton_iters=e.newton_iters, feas_tol=e.feas_tol, opt_tol=e.opt_tol)
    xi, omega = e.xi, e.omega
    if e.params == "theorem":
        # xi and omega from the truth; alpha and K stay as configured (the prescribed ones are not runnable)
        zeta = e.zeta if e.zeta is not None else default_zeta(truth, lam)
        tp = theorem_params(truth, zeta, lam)
        xi, omega = tp.xi, tp.omega
    return EngineParams(alpha=e.alpha, K=e.K, xi=xi, omega=omega, thresh=e.thresh, solver=opts,
                        halt_on_error=e.halt_on_error)


def assumption_report(cfg: ExperimentConfig, truth: ScenarioTruth, P_init, lam: float,
                      params: EngineParams) -> AssumptionReport:
    zeta = cfg.engine.zeta if cfg.engine.zeta is not None else default_zeta(truth, lam)
    return check_scenario(truth, params, zeta, P_init, d=cfg.signal.horizon(), mode=cfg.assumption_mode,
                          lambda_train_minus=lam)


def run_trial(cfg: ExperimentConfig, trial_index: int = 0, out_dir=None, truth: ScenarioTruth | None = None) -> TrialResult:
    """One seeded trial; writes ``metrics_<i>.csv`` / ``detections_<i>.csv`` / ``assumptions_<i>.csv`` to ``out_dir``."""
    seed = cfg.seed + trial_index
    t0 = time.perf_counter()
    if truth is None:
        truth = build_scenario(cfg, seed)
    P_init, lam = initial_estimate(cfg, truth, seed)
    params = engine_params(cfg, truth, lam)
    report = assumption_report(cfg, truth, P_init, lam, params)
    t_train = cfg.signal.t_train
    frames = np.arange(t_train + 1, truth.t_max + 1)
    N = frames.size
    rel = np.full(N, np.nan)
    se = np.full(N, np.nan)
    prec = np.ones(N)
    rec_ = np.ones(N)
    exact = np.ones(N, dtype=bool)
    conv = np.ones(N, dtype=bool)
    phase = [""] * N
    jh = np.zeros(N, dtype=int)
    kk = np.zeros(N, dtype=int)
    error = None
    engine = ReProCS(P_init, lam, params, t_train=t_train)
    mc = truth.mode == "mc"
    se_cache = (None, None, np.nan)
    try:
        for i, t in enumerate(frames):
            T_true = truth.supports[t - 1]
            P_hat = engine.P_hat  # estimate used for this frame
            r_true = truth.signal.rank_at(t)
            if se_cache[0] is not P_hat or se_cache[1] != r_true:
                se_cache = (P_hat, r_true, dif(P_hat, truth.signal.P_all[:, :r_true]))
            r = engine.step(truth.M[:, t - 1], T_true if mc else None)
            l = truth.L[:, t - 1]
            nl = np.linalg.norm(l)
            rel[i] = np.linalg.norm(l - r.l_hat) / nl if nl > 0 else np.linalg.norm(r.l_hat)
            se[i] = se_cache[2]
            if not mc:
                inter = np.intersect1d(r.support, T_true).size
                prec[i] = inter / r.support.size if r.support.size else 1.0
                rec_[i] = inter / len(T_true) if len(T_true) else 1.0
                exact[i] = np.array_equal(r.support, np.asarray(T_true))
            conv[i] = r.converged
            phase[i] = r.phase
            jh[i] = r.j_hat
            kk[i] = r.k
    except Exception as exc:  # noqa: BLE001 - recorded, the ensemble continues
        error = f"{type(exc).__name__}: {exc}"
        log.error("trial %d failed: %s", trial_index, error)
    st = engine.state
    res = TrialResult(
        trial=trial_index, seed=seed, t=frames, rel_error=rel, se=se, precision=prec, recall=rec_,
        support_exact=exact, converged=conv, phase=phase, j_hat=jh, k=kk, t_hat=list(st.t_hat),
        r_hat=dict(st.r_hat), report=report, runtime=time.perf_counter() - t0, error=error,
    )
    if out_dir is not None:
        write_trial(res, out_dir, cfg.cadence)
    return res


def write_trial(res: TrialResult, out_dir, cadence: int) -> None:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / f"metrics_{res.trial}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        w.writeheader()
        for row in res.metrics_rows(cadence):
            w.writerow({k: format_value(v) for k, v in row.items()})
    with open(d / f"detections_{res.trial}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j_hat", "t_hat", "k", "r_hat"])
        for j, th in enumerate(res.t_hat, start=1):
            ks = sorted(k for (jj, k) in res.r_hat if jj == j)
            if not ks:
                w.writerow([j, th, "", ""])
            for k in ks:
                w.writerow([j, th, k, res.r_hat[(j, k)]])
    if res.report is not None:
        res.report.to_csv(d / f"assumptions_{res.trial}.csv")


# --------------------------------------------------------------------------
# ensembles
# --------------------------------------------------------------------------


@dataclass
class EnsembleSummary:
    t: np.ndarray
    rel_mean: np.ndarray
    rel_median: np.ndarray
    rel_max: np.ndarray
    se_mean: np.ndarray
    se_median: np.ndarray
    se_max: np.ndarray
    rates: dict
    trials: list[TrialResult]


def _trial_worker(args):
    cfg, i, out = args
    return run_trial(cfg, i, out)


def summarize(trials: list[TrialResult], cadence: int, change_times=(), alpha: int | None = None,
              r_new: int | None = None) -> EnsembleSummary:
    t = trials[0].t
    sel = t % cadence == 0
    R = np.vstack([tr.rel_error[sel] for tr in trials])
    S = np.vstack([tr.se[sel] for tr in trials])
    ok = [tr for tr in trials if not tr.failed]
    delays = []
    for tr in ok:
        for tj, th in zip(change_times, tr.t_hat):
            delays.append(th - tj)
    rates = {
        "trials": len(trials),
        "failed_trials": len(trials) - len(ok),
        "support_exact_rate": float(np.mean([tr.all_supports_exact for tr in trials])),
        "detections_per_trial_mean": float(np.mean([len(tr.t_hat) for tr in trials])),
        "detection_delays": delays,
    }
    if change_times:
        rates["r_hat_values"] = sorted({v for tr in trials for v in tr.r_hat.values()})
        if r_new is not None:
            J = len(change_times)
            rates["r_hat_correct_rate"] = float(np.mean([
                len(tr.t_hat) == J and bool(tr.r_hat) and all(v == r_new for v in tr.r_hat.values())
                for tr in trials]))
    if alpha is not None and change_times:
        hist_edges = np.arange(0, 2 * alpha + alpha // 2 + 1, alpha // 2)
        rates["delay_histogram_edges"] = hist_edges.tolist()
        rates["delay_histogram_counts"] = np.histogram(delays, bins=hist_edges)[0].tolist() if delays else []
    return EnsembleSummary(
        t=t[sel], rel_mean=R.mean(axis=0), rel_median=np.median(R, axis=0), rel_max=R.max(axis=0),
        se_mean=S.mean(axis=0), se_median=np.median(S, axis=0), se_max=S.max(axis=0), rates=rates, trials=trials,
    )


SUMMARY_FIELDS = ["t", "rel_error_mean", "rel_error_median", "rel_error_max", "se_mean", "se_median", "se_max"]


def write_summary(summary: EnsembleSummary, out_dir) -> None:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for i, t in enumerate(summary.t):
            w.writerow([int(t)] + [format_value(float(a[i])) for a in (
                summary.rel_mean, summary.rel_median, summary.rel_max,
                summary.se_mean, summary.se_median, summary.se_max)])
    with open(d / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        for k, v in summary.rates.items():
            w.writerow([k, format_value(v)])
    # wall-clock times are kept apart so the other outputs are reproducible byte for byte
    with open(d / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "runtime_s"])
        for tr in summary.trials:
            w.writerow([tr.trial, f"{tr.runtime:.3f}"])


def run_ensemble(cfg: ExperimentConfig, out_dir=None, progress=None) -> EnsembleSummary:
    """All trials of ``cfg``, optionally in parallel; writes per-trial files plus ``summary.csv``."""
    out = out_dir if out_dir is not None else cfg.out
    args = [(cfg, i, out) for i in range(cfg.trials)]
    if cfg.jobs > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            trials = list(ex.map(_trial_worker, args))
    else:
        trials = []
        for a in args:
            trials.append(_trial_worker(a))
            if progress:
                progress(trials[-1])
    rn = cfg.signal.r_new_list()
    summary = summarize(trials, cfg.cadence, cfg.signal.change_times, cfg.engine.alpha,
                        rn[0] if rn and len(set(rn)) == 1 else None)
    if out is not None:
        write_summary(summary, out)
        if trials[0].report is not None:
            trials[0].report.to_csv(Path(out) / "assumptions.csv")
        if cfg.svg:
            write_svg(Path(out) / "rel_error.svg", summary.t, {"ReProCS mean": summary.rel_mean})
    return summary


def read_metrics(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "t": np.array([int(r["t"]) for r in rows]),
        "rel_error": np.array([float(r["rel_error"]) for r in rows]),
        "se": np.array([float(r["se"]) for r in rows]),
    }


# --------------------------------------------------------------------------
# batch reference
# --------------------------------------------------------------------------


@dataclass
class OracleResult:
    rel_error: np.ndarray  # per frame, NaN where l_t = 0
    bases: list[np.ndarray]  # one per window
    se: np.ndarray  # per window; NaN without truth


def baseline_oracle(L, M, mode: str, r: int, alpha: int, supports=None, true_basis=None) -> OracleResult:
    """Non-causal batch reference.

    At the end of each window of ``alpha`` frames the top-``r`` left singular
    subspace of all observations so far is computed; every frame of that
    window is then fitted in it.  In mc mode, when ``supports`` are given, the
    fit uses the observed entries only.  ``true_basis`` is an array or a
    callable ``t -> basis`` used to report the subspace error per window.
    """
    L = np.asarray(L, dtype=float)
    M = np.asarray(M, dtype=float)
    n, T = M.shape
    if mode not in ("mc", "rpca"):
        raise ValueError("mode must be mc or rpca")
    rel = np.full(T, np.nan)
    bases = []
    ses = []
    G = np.zeros((n, n))
    for start in range(0, T, alpha):
        stop = min(start + alpha, T)
        blk = M[:, start:stop]
        G += blk @ blk.T
        w, V = np.linalg.eigh(G)
        U = V[:, np.argsort(w)[::-1][:r]]
        bases.append(U)
        for j in range(start, stop):
            m = M[:, j]
            if mode == "mc" and supports is not None:
                obs = np.ones(n, dtype=bool)
                obs[np.asarray(supports[j], dtype=np.intp)] = False
                a = np.linalg.lstsq(U[obs], m[obs], rcond=None)[0]
                lh = U @ a
            else:
                lh = U @ (U.T @ m)
            nl = np.linalg.norm(L[:, j])
            if nl > 0:
                rel[j] = np.linalg.norm(L[:, j] - lh) / nl
            elif np.linalg.norm(lh) == 0:
                rel[j] = 0.0
        if true_basis is None:
            ses.append(np.nan)
        else:
            P = true_basis(stop) if callable(true_basis) else true_basis
            ses.append(dif(U, P))
    return OracleResult(rel_error=rel, bases=bases, se=np.asarray(ses))


# --------------------------------------------------------------------------
# minimal SVG chart
# --------------------------------------------------------------------------


def write_svg(path, t, series: dict, width: int = 720, height: int = 360, title: str = "relative error") -> None:
    """Log-y line chart of one or more curves sharing the x values ``t``."""
    t = np.asarray(t, dtype=float)
    pad_l, pad_r, pad_t, pad_b = 60, 150, 30, 40
    vals = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    vals = vals[np.isfinite(vals) & (vals > 0)]
    lo = math.floor(math.log10(vals.min())) if vals.size else -1
    hi = math.ceil(math.log10(vals.max())) if vals.size else 0
    if hi <= lo:
        hi = lo + 1
    x0, x1 = (float(t.min()), float(t.max())) if t.size else (0.0, 1.0)
    if x1 <= x0:
        x1 = x0 + 1
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def X(x):
        return pad_l + (x - x0) / (x1 - x0) * pw

    def Y(y):
        return pad_t + (hi - math.log10(y)) / (hi - lo) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{pad_l}" y="18">{title}</text>',
           f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for e in range(lo, hi + 1):
        y = Y(10.0**e)
        out.append(f'<line x1="{pad_l}" y1="{y:.1f}" x2="{pad_l + pw}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{pad_l - 6}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>')
    for frac in (0, 0.25, 0.5, 0.75, 1):
        xv = x0 + frac * (x1 - x0)
        out.append(f'<text x="{X(xv):.1f}" y="{pad_t + ph + 16}" text-anchor="middle">{xv:.0f}</text>')
    for ci, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=float)
        pts = [f"{X(x):.1f},{Y(y):.1f}" for x, y in zip(t, ys) if np.isfinite(y) and y > 0]
        col = colors[ci % len(colors)]
        if pts:
            out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        ly = pad_t + 14 + 16 * ci
        out.append(f'<line x1="{pad_l + pw + 10}" y1="{ly - 4}" x2="{pad_l + pw + 30}" y2="{ly - 4}" stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{pad_l + pw + 36}" y="{ly}">{name}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
