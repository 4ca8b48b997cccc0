"""Command-line pipeline: verify certificates, compute budgets, build
symbolic models, synthesize safety controllers, and simulate closed loops.

Exit codes: 0 success, 2 validation or budget failure, 3 empty controller
domain, 4 safety-monitor violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from collections import defaultdict
from pathlib import Path

import numpy as np

from .abstraction import build_common_abstraction, build_dwell_abstraction
from .closedloop import dense_excursions, refine_and_run, safety_monitor
from .config import BudgetViolationError, ConfigError, ProblemConfig
from .lyapunov import compute_mu, min_dwell_time, verify_mode_certificate
from .synthesis import (
    SafetySpec,
    classification_map,
    dwell_projection_map,
    lazy_controller,
    maximal_safety_controller,
    write_grid_csv,
)
from .transys import FiniteTS, are_bisimilar

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_EMPTY_CONTROLLER = 3
EXIT_MONITOR_VIOLATION = 4

DOT_STATE_LIMIT = 20_000  # DOT export is for inspection, not bulk storage


def _load_config(path, eta=None, epsilon=None) -> ProblemConfig:
    cfg = ProblemConfig.load(path)
    if eta is not None or epsilon is not None:
        if eta is not None:
            cfg.eta = eta
        if epsilon is not None:
            cfg.epsilon = epsilon
        cfg.validate()
    return cfg


def _build_model(cfg: ProblemConfig, threads: int):
    eta, _ = cfg.resolve()
    if cfg.kind == "common":
        return build_common_abstraction(cfg.system, cfg.tau_s, eta, cfg.region, threads)
    return build_dwell_abstraction(cfg.system, cfg.tau_s, cfg.N, eta, cfg.region, threads)


def cmd_verify(args) -> int:
    cfg = _load_config(args.config)
    ch = cfg.chars()
    ok = True
    for p in range(1, cfg.system.m + 1):
        passed, margin = verify_mode_certificate(
            cfg.system.mode(p).A, cfg.cert.M[p - 1], cfg.cert.kappa
        )
        ok &= passed
        print(f"mode {p}: {'PASS' if passed else 'FAIL'} (margin {margin:.3e})")
    mu = compute_mu(cfg.cert)
    bound = min_dwell_time(mu, cfg.cert.kappa)
    print(f"a_lower={ch.a_lower:.6f} a_upper={ch.a_upper:.6f} g={ch.g:.6f}")
    print(f"kappa={cfg.cert.kappa} mu={mu:.6f} min_dwell={bound:.6f}")
    if cfg.tau_d is not None:
        clears = cfg.tau_d > bound
        ok &= clears
        print(f"tau_d={cfg.tau_d} {'>' if clears else '<='} log(mu)/kappa: "
              f"{'PASS' if clears else 'FAIL'}")
    print("certificates:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_budget(args) -> int:
    cfg = _load_config(args.config, eta=args.eta, epsilon=args.epsilon)
    if cfg.epsilon is not None:
        eta_max = cfg.eta_budget(cfg.epsilon)
        print(f"epsilon={cfg.epsilon} -> eta_max={eta_max!r} "
              f"(divisor {cfg.epsilon / eta_max:.4f})")
    if cfg.eta is not None:
        eps = cfg.epsilon_for_eta(cfg.eta)
        print(f"eta={cfg.eta!r} -> epsilon={eps!r}")
    return EXIT_OK


def cmd_abstract(args) -> int:
    cfg = _load_config(args.config, eta=args.eta, epsilon=args.epsilon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    model = _build_model(cfg, args.threads)
    dt = time.perf_counter() - t0
    dmin, dmax, dmean = model.degree_stats()
    print(f"kind={model.kind} states={model.state_count()} "
          f"points={model.n_points} build={dt:.2f}s")
    print(f"successors per (state,label): min={dmin} max={dmax} mean={dmean:.3f}")
    if not args.no_export:
        model.write_states_csv(out / "states.csv")
        model.write_transitions_csv(out / "transitions.csv")
        if model.state_count() <= DOT_STATE_LIMIT:
            model.write_dot(out / "model.dot")
        else:
            print(f"skipping DOT export ({model.state_count()} states "
                  f"> {DOT_STATE_LIMIT})")
    return EXIT_OK


def _synthesize(cfg: ProblemConfig, threads: int):
    if cfg.keep is None:
        raise ConfigError("spec.keep is required for synthesis")
    model = _build_model(cfg, threads)
    spec = SafetySpec(keep=cfg.keep, avoid=cfg.avoid)
    ctrl = maximal_safety_controller(model, spec)
    return model, spec, ctrl


def _write_synthesis_outputs(cfg, model, ctrl, out: Path) -> None:
    from . import plots

    ctrl.write_json(out / "controller.json")
    if model.lattice.n != 2:
        return
    if model.kind == "common":
        grid = classification_map(model, ctrl)
        write_grid_csv(grid, model, out / "class_grid.csv")
        plots.render_class_grid(grid, model, out / "class_grid.png")
    else:
        for p in range(1, model.m + 1):
            grid = dwell_projection_map(model, ctrl, p)
            write_grid_csv(grid, model, out / f"class_grid_mode{p}.csv")
            plots.render_class_grid(
                grid, model, out / f"class_grid_mode{p}.png",
                title=f"next-mode choices, current mode {p}, dwell elapsed",
            )


def cmd_synthesize(args) -> int:
    cfg = _load_config(args.config, eta=args.eta, epsilon=args.epsilon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    model, spec, ctrl = _synthesize(cfg, args.threads)
    dt = time.perf_counter() - t0
    dom = ctrl.domain_size()
    print(f"states={model.state_count()} controllable={dom} "
          f"synthesis+build={dt:.2f}s")
    _write_synthesis_outputs(cfg, model, ctrl, out)
    if dom == 0:
        print("controller domain is empty")
        return EXIT_EMPTY_CONTROLLER
    return EXIT_OK


def cmd_simulate(args) -> int:
    from . import plots
    from .transys import common_relation, dwell_relation

    cfg = _load_config(args.config, eta=args.eta, epsilon=args.epsilon)
    if cfg.x0 is None or cfg.horizon is None:
        print("config has no simulation section", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, spec, ctrl = _synthesize(cfg, args.threads)
    if ctrl.domain_size() == 0:
        print("controller domain is empty")
        return EXIT_EMPTY_CONTROLLER
    eta, epsilon = cfg.resolve()
    ch = cfg.chars()
    if cfg.kind == "common":
        rel = common_relation(cfg.cert, ch, epsilon, eta, cfg.tau_s)
    else:
        rel = dwell_relation(cfg.cert, ch, epsilon, eta, cfg.tau_s, cfg.N)
    lazy = lazy_controller(ctrl)
    trace = refine_and_run(cfg.system, model, lazy, ctrl, cfg.x0, cfg.horizon, rel)
    trace.write_csv(out / "trace.csv")
    plots.render_trajectory(trace, cfg.keep, cfg.avoid, epsilon, out / "trace.png")
    plots.render_signals(trace, out / "signals.png")
    report = safety_monitor(trace, spec, epsilon)
    excursions = dense_excursions(cfg.system, trace, spec, epsilon)
    lines = [
        f"steps: {len(trace.modes)}",
        f"mode switches: {len(trace.dwell_gaps())}",
        f"min dwell gap (samples): "
        f"{min(trace.dwell_gaps()) if trace.dwell_gaps() else 'n/a'}",
        f"max relation level observed: {trace.levels.max()!r}",
        f"monitor: {'PASS' if report['ok'] else 'FAIL'}",
    ]
    if not report["ok"]:
        lines.append(f"violation at step {report['step']}: {report['reason']} "
                     f"state={report['state']}")
    lines.append(f"inter-sample excursions (informational): {len(excursions)}")
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK if report["ok"] else EXIT_MONITOR_VIOLATION


def load_finite_ts(model_dir) -> FiniteTS:
    """Load a finite transition system from cmd_abstract's CSV exports."""
    model_dir = Path(model_dir)
    outputs = {}
    initials = set()
    with open(model_dir / "states.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    n = sum(1 for k in rows[0] if k.startswith("x"))
    for row in rows:
        sid = int(row["id"])
        outputs[sid] = np.array([float(row[f"x{i + 1}"]) for i in range(n)])
        if row["counter"] in ("", "0"):
            initials.add(sid)
    transitions = defaultdict(list)
    labels = set()
    with open(model_dir / "transitions.csv", newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            label = int(row["label"])
            labels.add(label)
            transitions[(int(row["src_id"]), label)].append(int(row["dst_id"]))
    return FiniteTS(
        states=sorted(outputs),
        labels=sorted(labels) or [1],
        transitions={k: tuple(v) for k, v in transitions.items()},
        outputs=outputs,
        initials=initials,
    )


def cmd_check_bisim(args) -> int:
    t1 = load_finite_ts(args.model_a)
    t2 = load_finite_ts(args.model_b)
    labels = sorted(set(t1.labels) | set(t2.labels))
    t1.labels = labels
    t2.labels = labels
    verdict = are_bisimilar(t1, t2, args.epsilon)
    print(f"approximately bisimilar with precision {args.epsilon}: "
          f"{'YES' if verdict else 'NO'}")
    return EXIT_OK if verdict else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="symswitch",
        description="Symbolic models and safe switching controllers for "
        "incrementally stable switched affine systems.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, out=False):
        sp.add_argument("--config", required=True, help="JSON problem config")
        sp.add_argument("--eta", type=float, default=None, help="override grid radius")
        sp.add_argument("--epsilon", type=float, default=None,
                        help="override precision")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for model construction")
        if out:
            sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("verify", help="verify Lyapunov certificates and dwell bound")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("budget", help="compute eta budget / achieved precision")
    add_common(sp)
    sp.set_defaults(func=cmd_budget)

    sp = sub.add_parser("abstract", help="build and export the symbolic model")
    add_common(sp, out=True)
    sp.add_argument("--no-export", action="store_true",
                    help="report statistics only, skip CSV/DOT files")
    sp.set_defaults(func=cmd_abstract)

    sp = sub.add_parser("synthesize", help="synthesize the maximal safety controller")
    add_common(sp, out=True)
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("simulate", help="run the refined closed loop and monitor it")
    add_common(sp, out=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("check-bisim",
                        help="check approximate bisimilarity of two exported models")
    sp.add_argument("model_a", help="directory written by `abstract`")
    sp.add_argument("model_b", help="directory written by `abstract`")
    sp.add_argument("--epsilon", type=float, required=True)
    sp.set_defaults(func=cmd_check_bisim)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BudgetViolationError as e:
        print(f"budget refusal: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
