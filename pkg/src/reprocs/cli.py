"""Command-line entry point.

Verbs: ``generate``, ``run``, ``ensemble``, ``check``, ``oracle``.

Exit codes: 0 success, 2 bad configuration or arguments, 3 a strict
assumption check failed, 4 a trial failed at runtime.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .assumptions import STRICT
from .harness import (
    ConfigError,
    assumption_report,
    baseline_oracle,
    benchmark_config,
    build_scenario,
    config_to_ini,
    engine_params,
    initial_estimate,
    load_config,
    run_ensemble,
    run_trial,
    write_svg,
)
from .matio import format_value

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("reprocs")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="reprocs", description="Online robust PCA / matrix completion experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, out=True):
        sp.add_argument("--config", help="INI file; defaults to the built-in benchmark")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--mode", choices=("mc", "rpca"))
        sp.add_argument("--strict-assumptions", action="store_true",
                        help="abort with exit code 3 if any assumption check fails")
        if out:
            sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("generate", help="write a scenario (L, M, X, supports, bases) to --out")
    common(sp)
    sp = sub.add_parser("run", help="run one trial")
    common(sp)
    sp = sub.add_parser("ensemble", help="run --trials seeded trials and summarize")
    common(sp)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--svg", action="store_true", help="also write a relative-error chart")
    sp = sub.add_parser("check", help="evaluate the model assumptions for a configuration")
    common(sp)
    sp = sub.add_parser("oracle", help="batch eigendecomposition reference on the same scenario")
    common(sp)
    sp.add_argument("--svg", action="store_true", help="also write a relative-error chart")
    sp = sub.add_parser("config", help="print the effective configuration as INI")
    common(sp, out=False)
    return p


def effective_config(args):
    cfg = load_config(args.config) if args.config else benchmark_config()
    upd = {}
    for key in ("seed", "mode", "out", "trials", "jobs"):
        val = getattr(args, key, None)
        if val is not None:
            upd[key] = val
    if getattr(args, "svg", False):
        upd["svg"] = True
    if args.strict_assumptions:
        upd["assumption_mode"] = STRICT
    cfg = dataclasses.replace(cfg, **upd)
    cfg.validate()
    return cfg


def _out_dir(cfg, verb) -> Path:
    d = Path(cfg.out or f"reprocs_{verb}")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _gate(cfg, truth, seed) -> int:
    """Assumption report; non-zero exit code if strict mode failed."""
    P, lam = initial_estimate(cfg, truth, seed)
    rep = assumption_report(cfg, truth, P, lam, engine_params(cfg, truth, lam))
    for c in rep.checks:
        log.info("%-16s %s measured=%s bound=%s", c.name, "ok" if c.passed else "FAIL",
                 format_value(c.measured), format_value(c.bound))
    if cfg.assumption_mode == STRICT and not rep.passed:
        print("assumption check failed: " + ", ".join(rep.failed()), file=sys.stderr)
        return EXIT_ASSUMPTION
    return EXIT_OK


def cmd_generate(cfg) -> int:
    out = _out_dir(cfg, "generate")
    truth = build_scenario(cfg, cfg.seed)
    code = _gate(cfg, truth, cfg.seed)
    if code:
        return code
    truth.save(out)
    (out / "config.ini").write_text(config_to_ini(cfg))
    print(f"scenario written to {out}")
    return EXIT_OK


def cmd_check(cfg) -> int:
    truth = build_scenario(cfg, cfg.seed)
    P, lam = initial_estimate(cfg, truth, cfg.seed)
    rep = assumption_report(cfg, truth, P, lam, engine_params(cfg, truth, lam))
    print(f"{'check':<16} {'pass':<5} {'measured':>14} {'bound':>14}")
    for c in rep.checks:
        print(f"{c.name:<16} {str(c.passed).lower():<5} {c.measured:>14.6g} {c.bound:>14.6g}")
    if cfg.out:
        out = _out_dir(cfg, "check")
        rep.to_csv(out / "assumptions.csv")
        rep.write_keyvalue(out / "assumptions.txt")
    if cfg.assumption_mode == STRICT and not rep.passed:
        return EXIT_ASSUMPTION
    return EXIT_OK


def cmd_run(cfg) -> int:
    out = _out_dir(cfg, "run")
    truth = build_scenario(cfg, cfg.seed)
    code = _gate(cfg, truth, cfg.seed)
    if code:
        return code
    res = run_trial(cfg, 0, out, truth=truth)
    (out / "config.ini").write_text(config_to_ini(cfg))
    if res.failed:
        print(f"trial failed: {res.error}", file=sys.stderr)
        return EXIT_RUNTIME
    fin = np.isfinite(res.rel_error)
    print(f"frames {res.t.size}  detections {res.t_hat}  r_hat {sorted(set(res.r_hat.values()))}  "
          f"support exact {int(res.support_exact.sum())}/{res.t.size}  "
          f"max rel error {np.max(res.rel_error[fin]) if fin.any() else float('nan'):.3g}  "
          f"runtime {res.runtime:.1f}s")
    return EXIT_OK


def cmd_ensemble(cfg) -> int:
    out = _out_dir(cfg, "ensemble")
    if cfg.assumption_mode == STRICT:
        code = _gate(cfg, build_scenario(cfg, cfg.seed), cfg.seed)
        if code:
            return code
    (out / "config.ini").write_text(config_to_ini(cfg))

    def progress(tr):
        log.info("trial %d done in %.1fs%s", tr.trial, tr.runtime, f" ({tr.error})" if tr.error else "")

    summ = run_ensemble(cfg, out, progress)
    for k, v in summ.rates.items():
        print(f"{k} = {format_value(v)}")
    return EXIT_RUNTIME if summ.rates["failed_trials"] else EXIT_OK


def cmd_oracle(cfg) -> int:
    out = _out_dir(cfg, "oracle")
    truth = build_scenario(cfg, cfg.seed)
    sig = truth.signal
    t0 = cfg.signal.t_train
    r = sig.P_all.shape[1]
    res = baseline_oracle(truth.L[:, t0:], truth.M[:, t0:], truth.mode, r, cfg.engine.alpha,
                          supports=truth.supports[t0:],
                          true_basis=lambda k: sig.P_all[:, : sig.rank_at(t0 + k)])
    t = np.arange(t0 + 1, truth.t_max + 1)
    with open(out / "oracle.csv", "w") as fh:
        fh.write("t,rel_error\n")
        for ti, e in zip(t, res.rel_error):
            if ti % cfg.cadence == 0:
                fh.write(f"{ti},{format_value(float(e))}\n")
    if cfg.svg:
        sel = t % cfg.cadence == 0
        write_svg(out / "oracle.svg", t[sel], {"batch reference": res.rel_error[sel]})
    fin = res.rel_error[np.isfinite(res.rel_error)]
    print(f"batch reference rank {r}: mean rel error {fin.mean():.3g}, max {fin.max():.3g}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = effective_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.verb == "config":
        print(config_to_ini(cfg), end="")
        return EXIT_OK
    handler = {"generate": cmd_generate, "run": cmd_run, "ensemble": cmd_ensemble,
               "check": cmd_check, "oracle": cmd_oracle}[args.verb]
    try:
        return handler(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
