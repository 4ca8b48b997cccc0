"""Maximal-permissive safety controller synthesis on symbolic models.

The controller is the greatest fixed point of the controlled-predecessor
operator: starting from the safe states, repeatedly discard states with
no mode choice whose successors all survive.  For dwell models the
control choice is the mode applied after the current period (which, while
the counter has not saturated, can only be the current mode).

The fixed point is computed by vectorized rounds over flat state arrays;
the result equals the worklist formulation state for state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .abstraction import COMMON, DWELL, Region, SymbolicModel

SAFE_TOL = 1e-9  # boundary classification: keep is closed, avoid is open


class UncontrollableStateError(ValueError):
    """Raised when a controller is queried on a state outside its domain."""


@dataclass(frozen=True)
class SafetySpec:
    """Stay inside `keep` (closed box) while avoiding the interior of `avoid`."""

    keep: Region
    avoid: Region | None = None


def _safe_points(model: SymbolicModel, spec: SafetySpec) -> np.ndarray:
    c = model.coords
    safe = np.all(
        (c >= spec.keep.lo - SAFE_TOL) & (c <= spec.keep.hi + SAFE_TOL), axis=1
    )
    if spec.avoid is not None:
        inside = np.all(
            (c > spec.avoid.lo + SAFE_TOL) & (c < spec.avoid.hi - SAFE_TOL), axis=1
        )
        safe &= ~inside
    return safe


@dataclass
class SafetyController:
    """Map from symbolic state to its admissible mode choices.

    For common models `adm[q, p-1]` allows applying mode p at point q.
    For dwell models `adm[q, p-1, i, p2-1]` allows choosing p2 as the next
    mode from state (q, p, i); while i < N-1 only p2 = p can be set.
    """

    model: SymbolicModel
    adm: np.ndarray = field(repr=False)

    def admissible(self, state: int) -> list[int]:
        pt, p, i = self.model.decode(state)
        if self.model.kind == COMMON:
            row = self.adm[pt]
        else:
            row = self.adm[pt, p - 1, i]
        return [int(j + 1) for j in np.flatnonzero(row)]

    def is_controllable(self, state: int) -> bool:
        return bool(self.admissible(state))

    def domain_mask(self) -> np.ndarray:
        """Boolean mask over state ids (dwell ids in model order)."""
        if self.model.kind == COMMON:
            return self.adm.any(axis=1)
        return self.adm.any(axis=3).reshape(-1)

    def domain_size(self) -> int:
        return int(self.domain_mask().sum())

    def write_json(self, path) -> None:
        mask = self.domain_mask()
        table = {
            str(s): self.admissible(int(s)) for s in np.flatnonzero(mask)
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(table, f)


def maximal_safety_controller(
    model: SymbolicModel, spec: SafetySpec
) -> SafetyController:
    """Most permissive controller keeping the symbolic state safe forever.

    A (point, mode) pair is usable when it has at least one in-region
    successor; only transitions whose successor stays in the region are
    part of the game, so a flagged flow endpoint does not by itself
    disqualify the mode (the refined loop tracks in-region successors).
    """
    safe = _safe_points(model, spec)
    P, m = model.n_points, model.m
    base = model.succ_count > 0  # usable (point, mode) pairs
    succ = model.succ  # -1 pads resolve to the appended True row below

    if model.kind == COMMON:
        W = safe.copy()
        while True:
            W_ext = np.append(W, True)
            good = base & np.all(W_ext[succ], axis=2)
            W_new = safe & good.any(axis=1)
            if np.array_equal(W_new, W):
                break
            W = W_new
        adm = good & W[:, None]
        return SafetyController(model=model, adm=adm)

    N = model.N
    W = np.broadcast_to(safe[:, None, None], (P, m, N)).copy()
    while True:
        W_ext = np.concatenate([W, np.ones((1, m, N), bool)], axis=0)
        # all_to[q, p, p2, i2]: every spatial successor of (q, p) survives
        # as (q', p2, i2)
        all_to = np.all(W_ext[succ], axis=2)  # [P, m, m, N]
        good = np.zeros((P, m, N, m), dtype=bool)
        for p0 in range(m):
            usable = base[:, p0]
            for i in range(N - 1):
                good[:, p0, i, p0] = usable & all_to[:, p0, p0, i + 1]
            for p2 in range(m):
                i2 = N - 1 if p2 == p0 else 0
                good[:, p0, N - 1, p2] = usable & all_to[:, p0, p2, i2]
        W_new = safe[:, None, None] & good.any(axis=3)
        if np.array_equal(W_new, W):
            break
        W = W_new
    adm = good & W[:, :, :, None]
    return SafetyController(model=model, adm=adm)


@dataclass
class LazyController:
    """Deterministic restriction: keep the current mode whenever admissible,
    otherwise fall back to the smallest-index admissible mode."""

    controller: SafetyController

    def choice(self, state: int, current: int | None = None) -> int:
        admissible = self.controller.admissible(state)
        if not admissible:
            raise UncontrollableStateError(f"state {state} is uncontrollable")
        if current is not None and current in admissible:
            return current
        return admissible[0]


def lazy_controller(ctrl: SafetyController) -> LazyController:
    return LazyController(controller=ctrl)


def classification_map(model: SymbolicModel, ctrl: SafetyController) -> np.ndarray:
    """Grid of admissible-mode bitmasks for a 2D common model.

    Entry [j1, j2] covers the lattice point kmin + (j1, j2); the value is
    sum over admissible modes p of 2**(p-1), so with two modes: 0 =
    uncontrollable, 1 = mode 1 only, 2 = mode 2 only, 3 = both.
    """
    if model.kind != COMMON:
        raise ValueError("classification_map applies to common models")
    codes = (ctrl.adm.astype(np.int64) * (1 << np.arange(model.m))).sum(axis=1)
    return codes.reshape(tuple(model.counts))


def dwell_projection_map(
    model: SymbolicModel, ctrl: SafetyController, mode: int, counter: int | None = None
) -> np.ndarray:
    """Admissible next-mode bitmask grid at states with the given current mode
    (counter defaults to N-1, i.e. the dwell time has elapsed)."""
    if model.kind != DWELL:
        raise ValueError("dwell_projection_map applies to dwell models")
    if counter is None:
        counter = model.N - 1
    adm = ctrl.adm[:, mode - 1, counter, :]
    codes = (adm.astype(np.int64) * (1 << np.arange(model.m))).sum(axis=1)
    return codes.reshape(tuple(model.counts))


def write_grid_csv(grid: np.ndarray, model: SymbolicModel, path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["k1", "k2", "class"])
        for j1 in range(grid.shape[0]):
            for j2 in range(grid.shape[1]):
                w.writerow(
                    [int(model.kmin[0]) + j1, int(model.kmin[1]) + j2, int(grid[j1, j2])]
                )
