"""Finite symbolic models of sampled switched systems over a uniform lattice.

States are the points of the lattice { k * 2 eta / sqrt(n) : k integer }
inside a compact box; every point of R^n lies within Euclidean distance
eta of some lattice point.  A transition q -p-> q' exists when q' is
within eta of the time-tau_s flow of q under mode p.  Dwell-time models
additionally carry the current mode and a saturating counter of elapsed
periods since the last switch.

Construction is vectorized over source states and chunked; chunks may be
dispatched to a thread pool, with results merged in source order so the
model is identical for any thread count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SwitchedSystem

BOUNDARY_RTOL = 1e-9  # region-boundary inclusion, relative to the grid spacing
BALL_RTOL = 1e-12  # radius comparison slack, relative to eta

COMMON = "common"
DWELL = "dwell"


@dataclass(frozen=True)
class Lattice:
    """Uniform grid with per-axis spacing 2 eta / sqrt(n) (covering radius eta)."""

    n: int
    eta: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"dimension must be >= 1, got {self.n}")
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.eta / math.sqrt(self.n)

    def embed(self, k) -> np.ndarray:
        return np.asarray(k, dtype=float) * self.spacing


def quantize(x, lattice: Lattice) -> np.ndarray:
    """Nearest lattice point (integer key); half-cell ties round down per axis.

    Rounding ties toward the smaller integer makes the result the
    lexicographically smallest key among the equidistant candidates.
    """
    t = np.asarray(x, dtype=float) / lattice.spacing
    return np.ceil(t - 0.5).astype(np.int64)


def ball_points(y, lattice: Lattice, radius: float | None = None) -> list[tuple[int, ...]]:
    """All lattice keys within `radius` (default eta) of y, sorted by key.

    Brute window scan around quantize(y); never empty for radius >= eta
    because the lattice covers R^n with that radius.
    """
    if radius is None:
        radius = lattice.eta
    y = np.asarray(y, dtype=float)
    k0 = quantize(y, lattice)
    sp = lattice.spacing
    w = int(math.ceil(radius / sp + 0.5))
    rad2 = radius * radius * (1.0 + 4.0 * BALL_RTOL)
    out = []
    for off in np.ndindex(*([2 * w + 1] * lattice.n)):
        k = k0 + np.asarray(off) - w
        d = k * sp - y
        if float(d @ d) <= rad2:
            out.append(tuple(int(v) for v in k))
    out.sort()
    return out


@dataclass(frozen=True)
class Region:
    """Axis-aligned box lo <= x <= hi."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("region needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self) -> int:
        return self.lo.shape[0]

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def inflate(self, margin: float) -> "Region":
        return Region(self.lo - margin, self.hi + margin)


@dataclass
class SymbolicModel:
    """Finite transition system of a sampled switched system on a lattice.

    Spatial data is shared between the common and dwell kinds: for every
    in-region lattice point and mode we store the flow endpoint, the
    in-region successor points within eta of it (padded with -1), and an
    exit flag marking endpoints that left the region.  Dwell models lift
    point indices to state ids (point, mode, counter).
    """

    kind: str
    lattice: Lattice
    region: Region
    tau_s: float
    m: int
    N: int  # counter cardinality; 1 for the common kind
    kmin: np.ndarray  # [n] smallest integer key per axis
    counts: np.ndarray  # [n] grid points per axis
    keys: np.ndarray  # [P, n] integer keys, lexicographic order
    coords: np.ndarray  # [P, n] embedded coordinates
    flows: np.ndarray  # [P, m, n] flow endpoints
    succ: np.ndarray  # [P, m, S] successor point indices, -1 padded
    succ_count: np.ndarray  # [P, m]
    exits: np.ndarray  # [P, m] flow endpoint left the region
    thread_count: int = field(default=1, repr=False)

    # -- state indexing -------------------------------------------------

    @property
    def n_points(self) -> int:
        return self.keys.shape[0]

    def state_count(self) -> int:
        if self.kind == COMMON:
            return self.n_points
        return self.n_points * self.m * self.N

    def state_id(self, point: int, mode: int = 1, counter: int = 0) -> int:
        if self.kind == COMMON:
            return point
        return (point * self.m + (mode - 1)) * self.N + counter

    def decode(self, state: int) -> tuple[int, int, int]:
        """(point index, mode, counter); mode/counter are 1 and 0 for common."""
        if self.kind == COMMON:
            return state, 1, 0
        point, rest = divmod(state, self.m * self.N)
        p0, i = divmod(rest, self.N)
        return point, p0 + 1, i

    def output(self, state: int) -> np.ndarray:
        return self.coords[self.decode(state)[0]]

    def initial_states(self):
        if self.kind == COMMON:
            return range(self.n_points)
        return (
            self.state_id(pt, p, 0)
            for pt in range(self.n_points)
            for p in range(1, self.m + 1)
        )

    def point_index(self, key) -> int:
        """Index of an integer key in the grid, or -1 if outside the region."""
        k = np.asarray(key, dtype=np.int64) - self.kmin
        if np.any(k < 0) or np.any(k >= self.counts):
            return -1
        return int(k @ _strides(self.counts))

    # -- transitions ----------------------------------------------------

    def enabled_labels(self, state: int) -> list[int]:
        if self.kind == COMMON:
            return list(range(1, self.m + 1))
        return [self.decode(state)[1]]

    def successors(self, state: int, label: int) -> list[int]:
        point, p, i = self.decode(state)
        if self.kind == COMMON:
            pts = self.succ[point, label - 1, : self.succ_count[point, label - 1]]
            return [int(q) for q in pts]
        if label != p:
            return []
        pts = self.succ[point, p - 1, : self.succ_count[point, p - 1]]
        out = []
        if i < self.N - 1:
            out.extend(self.state_id(int(q), p, i + 1) for q in pts)
        else:
            for p2 in range(1, self.m + 1):
                i2 = self.N - 1 if p2 == p else 0
                out.extend(self.state_id(int(q), p2, i2) for q in pts)
        return out

    def exit_flag(self, state: int, label: int) -> bool:
        point, p, _ = self.decode(state)
        if self.kind == DWELL and label != p:
            return False
        return bool(self.exits[point, label - 1])

    def transitions(self):
        """Yield (src_id, label, dst_id) over the whole model."""
        for pt in range(self.n_points):
            for p0 in range(self.m):
                pts = self.succ[pt, p0, : self.succ_count[pt, p0]]
                if self.kind == COMMON:
                    for q in pts:
                        yield pt, p0 + 1, int(q)
                    continue
                for i in range(self.N - 1):
                    src = self.state_id(pt, p0 + 1, i)
                    for q in pts:
                        yield src, p0 + 1, self.state_id(int(q), p0 + 1, i + 1)
                src = self.state_id(pt, p0 + 1, self.N - 1)
                for p2 in range(self.m):
                    i2 = self.N - 1 if p2 == p0 else 0
                    for q in pts:
                        yield src, p0 + 1, self.state_id(int(q), p2 + 1, i2)

    def degree_stats(self) -> tuple[int, int, float]:
        """(min, max, mean) successors per (state, enabled label)."""
        cnt = self.succ_count.astype(np.int64)
        if self.kind == COMMON:
            per_pair = cnt.reshape(-1)
        else:
            # counter < N-1 pairs keep the spatial count; at N-1 every
            # spatial successor appears once per next mode
            per_pair = np.concatenate(
                [np.repeat(cnt.reshape(-1), self.N - 1), (cnt * self.m).reshape(-1)]
            )
        if per_pair.size == 0:
            return 0, 0, 0.0
        return int(per_pair.min()), int(per_pair.max()), float(per_pair.mean())

    # -- export ---------------------------------------------------------

    def write_states_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            header = ["id"] + [f"k{i + 1}" for i in range(self.lattice.n)]
            header += [f"x{i + 1}" for i in range(self.lattice.n)]
            header += ["mode", "counter"]
            w.writerow(header)
            for pt in range(self.n_points):
                base = [*map(int, self.keys[pt]), *map(repr, map(float, self.coords[pt]))]
                if self.kind == COMMON:
                    w.writerow([pt, *base, "", ""])
                else:
                    for p in range(1, self.m + 1):
                        for i in range(self.N):
                            w.writerow([self.state_id(pt, p, i), *base, p, i])

    def write_transitions_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["src_id", "label", "dst_id"])
            for src, label, dst in self.transitions():
                w.writerow([src, label, dst])

    def write_dot(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("digraph symbolic_model {\n")
            for state in range(self.state_count()):
                pt, p, i = self.decode(state)
                coord = ",".join(f"{v:.6g}" for v in self.coords[pt])
                label = f"({coord})" if self.kind == COMMON else f"({coord}|p{p}|i{i})"
                f.write(f'  s{state} [label="{label}"];\n')
            for src, label, dst in self.transitions():
                f.write(f'  s{src} -> s{dst} [label="{label}"];\n')
            f.write("}\n")


def _strides(counts: np.ndarray) -> np.ndarray:
    """Row-major strides: index of key k is (k - kmin) @ strides."""
    return np.cumprod(np.concatenate(([1], counts[::-1][:-1])))[::-1].astype(np.int64)


def grid_keys(lattice: Lattice, region: Region) -> tuple[np.ndarray, np.ndarray]:
    """(kmin, counts) of the lattice points inside the region, boundary inclusive."""
    if region.n != lattice.n:
        raise ValueError("region and lattice dimensions differ")
    sp = lattice.spacing
    tol = BOUNDARY_RTOL * sp
    kmin = np.ceil((region.lo - tol) / sp).astype(np.int64)
    kmax = np.floor((region.hi + tol) / sp).astype(np.int64)
    counts = np.maximum(kmax - kmin + 1, 0)
    if np.any(counts == 0):
        counts = np.zeros_like(counts)
    return kmin, counts


def _offset_table(n: int) -> np.ndarray:
    # any lattice point within eta of y is within 2*eta of quantize(y),
    # i.e. at most floor(sqrt(n)) grid steps away per axis
    r = int(math.floor(math.sqrt(n) + 1e-12))
    offs = np.array(list(np.ndindex(*([2 * r + 1] * n))), dtype=np.int64) - r
    return offs


def _build(
    system: SwitchedSystem,
    tau_s: float,
    eta: float,
    region: Region,
    kind: str,
    N: int,
    threads: int,
) -> SymbolicModel:
    n, m = system.n, system.m
    lattice = Lattice(n=n, eta=eta)
    sp = lattice.spacing
    kmin, counts = grid_keys(lattice, region)
    P = int(np.prod(counts)) if np.all(counts > 0) else 0
    strides = _strides(counts) if P else np.ones(n, np.int64)

    if P == 0:
        empty = np.zeros((0, m), dtype=np.int64)
        return SymbolicModel(
            kind=kind, lattice=lattice, region=region, tau_s=tau_s, m=m, N=N,
            kmin=kmin, counts=counts,
            keys=np.zeros((0, n), np.int64), coords=np.zeros((0, n)),
            flows=np.zeros((0, m, n)), succ=np.zeros((0, m, 1), np.int64),
            succ_count=empty, exits=empty.astype(bool), thread_count=threads,
        )

    keys = np.stack(
        np.meshgrid(*[kmin[i] + np.arange(counts[i]) for i in range(n)], indexing="ij"),
        axis=-1,
    ).reshape(P, n)
    coords = keys.astype(float) * sp

    offs = _offset_table(n)
    W = offs.shape[0]
    rad2 = eta * eta * (1.0 + 4.0 * BALL_RTOL)
    tol = BOUNDARY_RTOL * sp
    pairs = [system.mode(p).transition_pair(tau_s) for p in range(1, m + 1)]

    def chunk_job(lo_i: int, hi_i: int):
        c = coords[lo_i:hi_i]
        nloc = hi_i - lo_i
        flows_c = np.empty((nloc, m, n))
        succ_c = np.full((nloc, m, W), -1, dtype=np.int64)
        cnt_c = np.zeros((nloc, m), dtype=np.int64)
        exit_c = np.zeros((nloc, m), dtype=bool)
        for p0, (Phi, psi) in enumerate(pairs):
            Y = c @ Phi.T + psi
            flows_c[:, p0, :] = Y
            exit_c[:, p0] = np.any(
                (Y < region.lo - tol) | (Y > region.hi + tol), axis=1
            )
            k0 = np.ceil(Y / sp - 0.5).astype(np.int64)
            cand = k0[:, None, :] + offs[None, :, :]
            d = cand * sp - Y[:, None, :]
            in_ball = np.einsum("ijk,ijk->ij", d, d) <= rad2
            rel = cand - kmin
            in_grid = np.all((rel >= 0) & (rel < counts), axis=2)
            ok = in_ball & in_grid
            idx = np.where(ok, rel @ strides, -1)
            # pack valid successors left, preserving key order
            order = np.argsort(~ok, axis=1, kind="stable")
            succ_c[:, p0, :] = np.take_along_axis(idx, order, axis=1)
            cnt_c[:, p0] = ok.sum(axis=1)
        return flows_c, succ_c, cnt_c, exit_c

    chunk = 200_000
    bounds = [(i, min(i + chunk, P)) for i in range(0, P, chunk)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: chunk_job(*b), bounds))
    else:
        parts = [chunk_job(*b) for b in bounds]

    flows = np.concatenate([p[0] for p in parts], axis=0)
    succ = np.concatenate([p[1] for p in parts], axis=0)
    succ_count = np.concatenate([p[2] for p in parts], axis=0)
    exits = np.concatenate([p[3] for p in parts], axis=0)

    smax = max(1, int(succ_count.max()))
    succ = succ[:, :, :smax]

    return SymbolicModel(
        kind=kind, lattice=lattice, region=region, tau_s=tau_s, m=m, N=N,
        kmin=kmin, counts=counts, keys=keys, coords=coords, flows=flows,
        succ=succ, succ_count=succ_count, exits=exits, thread_count=threads,
    )


def build_common_abstraction(
    system: SwitchedSystem, tau_s: float, eta: float, region: Region, threads: int = 1
) -> SymbolicModel:
    """Symbolic model for arbitrary sample-aligned switching (common certificate)."""
    return _build(system, tau_s, eta, region, COMMON, 1, threads)


def build_dwell_abstraction(
    system: SwitchedSystem,
    tau_s: float,
    N: int,
    eta: float,
    region: Region,
    threads: int = 1,
) -> SymbolicModel:
    """Symbolic model with mode memory and a dwell counter saturating at N-1."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    return _build(system, tau_s, eta, region, DWELL, N, threads)


def state_count(model: SymbolicModel) -> int:
    return model.state_count()


def degree_stats(model: SymbolicModel) -> tuple[int, int, float]:
    return model.degree_stats()
