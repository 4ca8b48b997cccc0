"""Controller refinement to the concrete switched system and monitoring.

The symbolic controller is carried over by tracking a companion abstract
state: at each period the concrete state flows under the current mode and
the companion moves to the admissible abstract successor minimizing the
certificate value, which keeps the pair inside the bisimulation relation.
Safety is therefore guaranteed (up to the precision epsilon) at every
sampling instant.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .abstraction import COMMON, Region, SymbolicModel, quantize
from .dynamics import SwitchedSystem, exact_affine_flow
from .lyapunov import v_eval
from .synthesis import (
    SAFE_TOL,
    LazyController,
    SafetyController,
    SafetySpec,
    UncontrollableStateError,
)
from .transys import RelationCertificate

LEVEL_RTOL = 1e-9  # slack on the relation-level assertion


class RelationViolationError(RuntimeError):
    """Companion state left the relation level set: parameter or build bug."""


@dataclass
class ClosedLoopTrace:
    """Concrete samples with their abstract companions and applied modes."""

    times: np.ndarray
    states: np.ndarray  # [K+1, n]
    abstract_ids: np.ndarray  # [K+1]
    modes: np.ndarray  # [K] mode applied during [k, k+1)
    levels: np.ndarray  # [K+1] certificate value V(x_k, companion_k)
    model: SymbolicModel = field(repr=False)

    def __len__(self) -> int:
        return len(self.times)

    def dwell_gaps(self) -> list[int]:
        """Sample counts between consecutive mode switches."""
        switches = [k for k in range(1, len(self.modes)) if self.modes[k] != self.modes[k - 1]]
        gaps = []
        prev = 0
        for k in switches:
            gaps.append(k - prev)
            prev = k
        return gaps

    def write_csv(self, path) -> None:
        n = self.states.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(
                ["t"] + [f"x{i + 1}" for i in range(n)] + ["mode", "abstract_id", "v_level"]
            )
            for k in range(len(self.times)):
                mode = int(self.modes[k]) if k < len(self.modes) else ""
                w.writerow(
                    [repr(float(self.times[k]))]
                    + [repr(float(v)) for v in self.states[k]]
                    + [mode, int(self.abstract_ids[k]), repr(float(self.levels[k]))]
                )


def _cert_matrix(rel: RelationCertificate, mode: int) -> np.ndarray:
    return rel.cert.M[0] if rel.kind == COMMON else rel.cert.M[mode - 1]


def _assert_level(v: float, level: float, k: int) -> None:
    if v > level * (1 + LEVEL_RTOL) + 1e-12:
        raise RelationViolationError(
            f"V={v} exceeds level {level} at step {k}; the grid radius likely "
            "violates the precision budget"
        )


def refine_and_run(
    system: SwitchedSystem,
    model: SymbolicModel,
    lazy: LazyController,
    ctrl: SafetyController,
    x0,
    horizon: int,
    rel: RelationCertificate,
) -> ClosedLoopTrace:
    """Run the refined controller for `horizon` sampling periods from x0."""
    x = np.asarray(x0, dtype=float).reshape(-1)
    q0 = quantize(x, model.lattice)
    pt = model.point_index(q0)
    if pt < 0:
        raise UncontrollableStateError("initial state quantizes outside the region")

    if model.kind == COMMON:
        state = pt
        if not ctrl.is_controllable(state):
            raise UncontrollableStateError("initial abstract state is uncontrollable")
        current = None
    else:
        state = None
        for p in range(1, model.m + 1):
            cand = model.state_id(pt, p, 0)
            if ctrl.is_controllable(cand):
                state = cand
                break
        if state is None:
            raise UncontrollableStateError("initial abstract state is uncontrollable")
        current = model.decode(state)[1]

    states = [x]
    ids = [state]
    applied = []
    v0 = v_eval(_cert_matrix(rel, current or 1), x, model.output(state))
    _assert_level(v0, rel.level(model.decode(state)[2]), 0)
    vs = [v0]

    for k in range(horizon):
        choice = lazy.choice(state, current)
        if model.kind == COMMON:
            flow_mode = choice
        else:
            flow_mode = model.decode(state)[1]  # switch takes effect next period
        x = exact_affine_flow(system.mode(flow_mode), x, model.tau_s)
        succs = model.successors(state, flow_mode)
        if model.kind != COMMON:
            succs = [s for s in succs if model.decode(s)[1] == choice]
        succs = [s for s in succs if ctrl.is_controllable(s)]
        if not succs:
            raise RelationViolationError(
                f"no controllable abstract successor at step {k}"
            )
        M = _cert_matrix(rel, choice)
        best = min(succs, key=lambda s: v_eval(M, x, model.output(s)))
        v = v_eval(M, x, model.output(best))
        _assert_level(v, rel.level(model.decode(best)[2]), k + 1)
        state = best
        current = choice
        applied.append(flow_mode)
        states.append(x)
        ids.append(state)
        vs.append(v)

    times = model.tau_s * np.arange(horizon + 1)
    return ClosedLoopTrace(
        times=times,
        states=np.array(states),
        abstract_ids=np.array(ids, dtype=np.int64),
        modes=np.array(applied, dtype=np.int64),
        levels=np.array(vs),
        model=model,
    )


def deflated_avoid(spec: SafetySpec, epsilon: float) -> Region | None:
    """Avoid box shrunk by epsilon, or None when it deflates to nothing."""
    if spec.avoid is None:
        return None
    lo = spec.avoid.lo + epsilon
    hi = spec.avoid.hi - epsilon
    if np.any(lo > hi):
        return None
    return Region(lo, hi)


def safety_monitor(trace: ClosedLoopTrace, spec: SafetySpec, epsilon: float) -> dict:
    """Verify every sampled state against the inflated keep box and, when an
    avoid box is present, its epsilon-deflated interior."""
    keep = spec.keep.inflate(epsilon)
    avoid = deflated_avoid(spec, epsilon)
    for k, x in enumerate(trace.states):
        if not keep.contains(x, tol=SAFE_TOL):
            return {"ok": False, "step": k, "state": x.tolist(), "reason": "left keep box"}
        if avoid is not None:
            if np.all(x > avoid.lo + SAFE_TOL) and np.all(x < avoid.hi - SAFE_TOL):
                return {
                    "ok": False,
                    "step": k,
                    "state": x.tolist(),
                    "reason": "entered avoid box",
                }
    return {"ok": True, "step": None, "state": None, "reason": None}


def dense_excursions(
    system: SwitchedSystem,
    trace: ClosedLoopTrace,
    spec: SafetySpec,
    epsilon: float,
    substeps: int = 8,
) -> list[dict]:
    """Informational inter-sample check: the guarantee only covers sampling
    instants, so excursions found here are reported but are not failures."""
    keep = spec.keep.inflate(epsilon)
    avoid = deflated_avoid(spec, epsilon)
    out = []
    dt = trace.model.tau_s / substeps
    for k, p in enumerate(trace.modes):
        x = trace.states[k]
        for j in range(1, substeps):
            xi = exact_affine_flow(system.mode(int(p)), x, j * dt)
            bad_keep = not keep.contains(xi, tol=SAFE_TOL)
            bad_avoid = (
                avoid is not None
                and np.all(xi > avoid.lo + SAFE_TOL)
                and np.all(xi < avoid.hi - SAFE_TOL)
            )
            if bad_keep or bad_avoid:
                out.append(
                    {
                        "t": float(trace.times[k] + j * dt),
                        "state": xi.tolist(),
                        "reason": "left keep box" if bad_keep else "entered avoid box",
                    }
                )
    return out
