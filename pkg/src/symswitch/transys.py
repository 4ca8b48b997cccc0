"""Finite metric transition systems and approximate bisimulation checking.

The checker operates on finite systems only.  The relation between the
concrete switched system and its symbolic model is the certificate
sublevel set V_p(x, q) <= delta_i; membership is decidable pointwise, so
that side is tested by sampled closure checking instead of state
enumeration.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .abstraction import COMMON, DWELL, SymbolicModel
from .dynamics import SwitchedSystem, exact_affine_flow
from .lyapunov import CertCharacteristics, QuadraticCertificateSet, v_eval

DIST_ATOL = 1e-12  # slack on metric comparisons against epsilon


class LabelMismatchError(ValueError):
    """Raised when two systems under comparison have different label alphabets."""


@dataclass
class FiniteTS:
    """Finite transition system with vector outputs and Euclidean metric."""

    states: list
    labels: list
    transitions: dict  # (state, label) -> tuple of successors
    outputs: dict  # state -> np.ndarray
    initials: set

    def succ(self, state, label):
        return self.transitions.get((state, label), ())


def finite_ts_from_model(model: SymbolicModel) -> FiniteTS:
    """Materialize a symbolic model as an explicit finite transition system."""
    states = list(range(model.state_count()))
    labels = list(range(1, model.m + 1))
    transitions = defaultdict(list)
    for src, label, dst in model.transitions():
        transitions[(src, label)].append(dst)
    return FiniteTS(
        states=states,
        labels=labels,
        transitions={k: tuple(v) for k, v in transitions.items()},
        outputs={s: model.output(s) for s in states},
        initials=set(model.initial_states()),
    )


def _output_dist(t1: FiniteTS, t2: FiniteTS, q1, q2) -> float:
    return float(np.linalg.norm(t1.outputs[q1] - t2.outputs[q2]))


def _check_pair(t1: FiniteTS, t2: FiniteTS, epsilon, R, q1, q2):
    """None if the pair satisfies all three conditions, else a violation tuple."""
    if _output_dist(t1, t2, q1, q2) > epsilon + DIST_ATOL:
        return ("output", q1, q2)
    for label in t1.labels:
        s2 = t2.succ(q2, label)
        for q1n in t1.succ(q1, label):
            if not any((q1n, q2n) in R for q2n in s2):
                return ("forth", q1, q2, label, q1n)
        s1 = t1.succ(q1, label)
        for q2n in s2:
            if not any((q1n, q2n) in R for q1n in s1):
                return ("back", q1, q2, label, q2n)
    return None


def is_approx_bisim(t1: FiniteTS, t2: FiniteTS, epsilon: float, R):
    """Check that R is an epsilon-approximate bisimulation relation.

    Returns (True, None) or (False, first violation), where a violation is
    ("output", q1, q2) or ("forth"/"back", q1, q2, label, orphan successor).
    """
    if set(t1.labels) != set(t2.labels):
        raise LabelMismatchError("label alphabets differ")
    R = set(R)
    for q1, q2 in sorted(R, key=repr):
        v = _check_pair(t1, t2, epsilon, R, q1, q2)
        if v is not None:
            return False, v
    return True, None


def max_approx_bisim(t1: FiniteTS, t2: FiniteTS, epsilon: float) -> set:
    """Maximal epsilon-approximate bisimulation relation between t1 and t2.

    Starts from all output-close pairs and prunes violating pairs with a
    worklist keyed by reverse transitions; the result is the union of all
    epsilon-approximate bisimulation relations.
    """
    if set(t1.labels) != set(t2.labels):
        raise LabelMismatchError("label alphabets differ")
    R = {
        (q1, q2)
        for q1 in t1.states
        for q2 in t2.states
        if _output_dist(t1, t2, q1, q2) <= epsilon + DIST_ATOL
    }
    pred1 = defaultdict(set)
    pred2 = defaultdict(set)
    for (q, label), succs in t1.transitions.items():
        for qn in succs:
            pred1[qn].add(q)
    for (q, label), succs in t2.transitions.items():
        for qn in succs:
            pred2[qn].add(q)

    queue = deque(R)
    queued = set(R)
    while queue:
        pair = queue.popleft()
        queued.discard(pair)
        if pair not in R:
            continue
        if _check_pair(t1, t2, epsilon, R, *pair) is None:
            continue
        R.discard(pair)
        q1, q2 = pair
        # only pairs with a transition into the removed pair can newly fail
        for p1 in pred1[q1]:
            for p2 in t2.states:
                cand = (p1, p2)
                if cand in R and cand not in queued:
                    queue.append(cand)
                    queued.add(cand)
        for p2 in pred2[q2]:
            for p1 in t1.states:
                cand = (p1, p2)
                if cand in R and cand not in queued:
                    queue.append(cand)
                    queued.add(cand)
    return R


def are_bisimilar(t1: FiniteTS, t2: FiniteTS, epsilon: float) -> bool:
    """Approximate bisimilarity including the two initial-state conditions."""
    R = max_approx_bisim(t1, t2, epsilon)
    by1 = defaultdict(set)
    by2 = defaultdict(set)
    for q1, q2 in R:
        by1[q1].add(q2)
        by2[q2].add(q1)
    for q1 in t1.initials:
        if not (by1[q1] & t2.initials):
            return False
    for q2 in t2.initials:
        if not (by2[q2] & t1.initials):
            return False
    return True


def write_relation_csv(R, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["state1", "state2"])
        for q1, q2 in sorted(R, key=repr):
            w.writerow([q1, q2])


# -- certificate-level relation between concrete system and symbolic model ----


def delta_schedule(
    epsilon: float,
    eta: float,
    chars: CertCharacteristics,
    kappa: float,
    tau_s: float,
    N: int,
) -> np.ndarray:
    """Levels delta_0..delta_N: delta_0 = a_lower*eps, then the contraction
    recursion delta_{i+1} = e^{-kappa tau_s} delta_i + g*eta."""
    deltas = np.empty(N + 1)
    deltas[0] = chars.a_lower * epsilon
    decay = math.exp(-kappa * tau_s)
    gain = chars.g * eta
    for i in range(N):
        deltas[i + 1] = decay * deltas[i] + gain
    return deltas


def delta_closed_form(
    i: int,
    epsilon: float,
    eta: float,
    chars: CertCharacteristics,
    kappa: float,
    tau_s: float,
) -> float:
    """Geometric-sum closed form of the level recursion (independent oracle)."""
    decay = math.exp(-kappa * tau_s)
    gain = chars.g * eta
    return decay**i * chars.a_lower * epsilon + gain * (1 - decay**i) / (1 - decay)


@dataclass(frozen=True)
class RelationCertificate:
    """Level-set description of the concrete/abstract bisimulation relation.

    kind "common": a single level delta_0 = a_lower * epsilon.
    kind "dwell": levels delta_0..delta_N indexed by the dwell counter,
    with delta_N <= delta_0 / mu whenever eta respects the dwell budget.
    """

    kind: str
    cert: QuadraticCertificateSet
    chars: CertCharacteristics
    epsilon: float
    eta: float
    tau_s: float
    deltas: np.ndarray = field(repr=False)

    def level(self, counter: int = 0) -> float:
        if self.kind == COMMON:
            return float(self.deltas[0])
        return float(self.deltas[counter])

    def monotone(self) -> bool:
        tol = 1e-12 * float(self.deltas[0])
        return bool(np.all(np.diff(self.deltas) <= tol))

    def switch_safe(self) -> bool:
        tol = 1e-12 * float(self.deltas[0])
        return bool(self.deltas[-1] <= self.deltas[0] / self.cert.mu + tol)


def common_relation(
    cert: QuadraticCertificateSet,
    chars: CertCharacteristics,
    epsilon: float,
    eta: float,
    tau_s: float,
) -> RelationCertificate:
    deltas = np.array([chars.a_lower * epsilon])
    return RelationCertificate(COMMON, cert, chars, epsilon, eta, tau_s, deltas)


def dwell_relation(
    cert: QuadraticCertificateSet,
    chars: CertCharacteristics,
    epsilon: float,
    eta: float,
    tau_s: float,
    N: int,
) -> RelationCertificate:
    deltas = delta_schedule(epsilon, eta, chars, cert.kappa, tau_s, N)
    return RelationCertificate(DWELL, cert, chars, epsilon, eta, tau_s, deltas)


def relation_member(rel: RelationCertificate, x, model: SymbolicModel, state: int) -> bool:
    """Is concrete state x related to the given symbolic state?"""
    pt, p, i = model.decode(state)
    Mp = rel.cert.M[0] if rel.kind == COMMON else rel.cert.M[p - 1]
    return v_eval(Mp, x, model.coords[pt]) <= rel.level(i) * (1 + 1e-12)


def _sample_related(rng, Mp, q, level):
    # V(x, q) = ||L^T (x - q)|| for M = L L^T, so draw w in the ball of
    # radius `level` and map back through L^{-T}
    n = q.shape[0]
    w = rng.standard_normal(n)
    w *= level * rng.uniform() ** (1.0 / n) / np.linalg.norm(w)
    L = cholesky(Mp, lower=True)
    return q + solve_triangular(L.T, w, lower=False)


def check_relation_closure(
    system: SwitchedSystem,
    model: SymbolicModel,
    rel: RelationCertificate,
    samples: int = 1000,
    seed: int = 0,
) -> dict:
    """Sampled one-step closure check of the level-set relation.

    For random related pairs (x, s) and every enabled label with at least
    one in-region successor: every listed abstract successor must stay
    related to the concrete step (this single check covers both
    directions, since the concrete step is deterministic).  Labels whose
    successor list is empty at the region boundary are counted, not
    checked; non-exit labels always have successors (lattice coverage).
    """
    rng = np.random.default_rng(seed)
    violations = []
    pairs_checked = 0
    transitions_checked = 0
    boundary_skipped = 0
    n_states = model.state_count()
    if n_states == 0:
        return {
            "pairs_checked": 0,
            "transitions_checked": 0,
            "boundary_skipped": 0,
            "violations": [],
            "ok": True,
        }
    for _ in range(samples):
        state = int(rng.integers(n_states))
        pt, p, i = model.decode(state)
        Mp = rel.cert.M[0] if rel.kind == COMMON else rel.cert.M[p - 1]
        q = model.coords[pt]
        x = _sample_related(rng, Mp, q, rel.level(i))
        pairs_checked += 1
        for label in model.enabled_labels(state):
            succs = model.successors(state, label)
            if not succs:
                if model.exit_flag(state, label):
                    boundary_skipped += 1
                else:
                    violations.append(("no-successor", state, label))
                continue
            x_next = exact_affine_flow(system.mode(label), x, model.tau_s)
            for s_next in succs:
                transitions_checked += 1
                if not relation_member(rel, x_next, model, s_next):
                    violations.append(("closure", state, label, s_next))
    return {
        "pairs_checked": pairs_checked,
        "transitions_checked": transitions_checked,
        "boundary_skipped": boundary_skipped,
        "violations": violations,
        "ok": not violations,
    }
