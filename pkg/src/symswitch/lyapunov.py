"""Quadratic incremental-stability certificates and precision budgets.

Certificates are of the form V_p(x, y) = sqrt((x-y)^T M_p (x-y)) and are
verified, not searched for: the decay condition on an affine mode reduces
to the matrix inequality A^T M + M A + 2 kappa M <= 0, checked by a
symmetric eigensolve on the Cholesky congruence.

All comparison functions of the quadratic family are linear, s -> c s,
which makes the grid-size budgets and their inverses closed-form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, eigvalsh, solve_triangular

VERIFY_TOL = 1e-9


class CertificateError(ValueError):
    """Raised for certificates that are not symmetric positive definite."""


class DwellTooSmallError(ValueError):
    """Raised when tau_d does not exceed log(mu)/kappa."""


def _check_spd(M, index: int | None = None) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    tag = "" if index is None else f" (mode {index + 1})"
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise CertificateError(f"certificate matrix must be square{tag}")
    if not np.allclose(M, M.T, atol=1e-12):
        raise CertificateError(f"certificate matrix not symmetric within 1e-12{tag}")
    if eigvalsh(M).min() <= 0:
        raise CertificateError(f"certificate matrix not positive definite{tag}")
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class QuadraticCertificateSet:
    """Per-mode SPD matrices M_p with shared decay rate kappa and interchange mu."""

    M: tuple[np.ndarray, ...]
    kappa: float
    mu: float = 1.0

    def __post_init__(self):
        mats = tuple(_check_spd(Mp, i) for i, Mp in enumerate(self.M))
        if not mats:
            raise CertificateError("need at least one certificate matrix")
        if self.kappa <= 0:
            raise CertificateError(f"kappa must be positive, got {self.kappa}")
        if self.mu < 1:
            raise CertificateError(f"mu must be >= 1, got {self.mu}")
        object.__setattr__(self, "M", mats)

    @property
    def n(self) -> int:
        return self.M[0].shape[0]

    @property
    def n_modes(self) -> int:
        return len(self.M)


@dataclass(frozen=True)
class CertCharacteristics:
    """Linear comparison-function coefficients of a quadratic certificate set.

    lower(s) = a_lower * s and upper(s) = a_upper * s sandwich V_p around the
    Euclidean distance; g is the Lipschitz coefficient of q -> V_p(x, q).
    """

    a_lower: float
    a_upper: float
    g: float


@dataclass(frozen=True)
class KLBound:
    """Exponential contraction envelope for trajectory pairs.

    kind "common": (a_upper/a_lower) r e^{-kappa s}.
    kind "dwell":  (a_upper/a_lower) r e^{(log(mu)/tau_d - kappa) s},
    valid for switching signals with dwell time tau_d.
    """

    kind: str
    a_lower: float
    a_upper: float
    kappa: float
    mu: float = 1.0
    tau_d: float = 0.0

    def __post_init__(self):
        if self.kind not in ("common", "dwell"):
            raise ValueError(f"unknown bound kind {self.kind!r}")
        if self.kind == "dwell" and math.log(self.mu) / self.tau_d - self.kappa >= 0:
            raise DwellTooSmallError(
                f"tau_d={self.tau_d} does not exceed log(mu)/kappa="
                f"{math.log(self.mu) / self.kappa}"
            )

    @property
    def rate(self) -> float:
        if self.kind == "common":
            return -self.kappa
        return math.log(self.mu) / self.tau_d - self.kappa


def verify_mode_certificate(A, M_p, kappa: float) -> tuple[bool, float]:
    """Check A^T M + M A + 2 kappa M <= 0 for one mode.

    Returns (ok, margin) where margin is the largest eigenvalue of the
    Cholesky congruence L^-1 (A^T M + M A + 2 kappa M) L^-T with M = L L^T.
    """
    A = np.asarray(A, dtype=float)
    M = _check_spd(M_p)
    L = cholesky(M, lower=True)
    S = A.T @ M + M @ A + 2.0 * kappa * M
    G = solve_triangular(L, solve_triangular(L, S, lower=True).T, lower=True)
    margin = float(eigvalsh(0.5 * (G + G.T)).max())
    return margin <= VERIFY_TOL, margin


def characteristics(cert: QuadraticCertificateSet) -> CertCharacteristics:
    """Comparison coefficients: sqrt of extreme eigenvalues over all modes."""
    lo = min(eigvalsh(Mp).min() for Mp in cert.M)
    hi = max(eigvalsh(Mp).max() for Mp in cert.M)
    a_lower = math.sqrt(lo)
    a_upper = math.sqrt(hi)
    return CertCharacteristics(a_lower=a_lower, a_upper=a_upper, g=a_upper)


def compute_mu(cert: QuadraticCertificateSet) -> float:
    """Smallest mu with M_p <= mu^2 M_p' for every ordered pair of modes."""
    worst = 1.0
    for Mq in cert.M:
        L = cholesky(Mq, lower=True)
        for Mp in cert.M:
            G = solve_triangular(L, solve_triangular(L, Mp, lower=True).T, lower=True)
            worst = max(worst, float(eigvalsh(0.5 * (G + G.T)).max()))
    return math.sqrt(worst)


def min_dwell_time(mu: float, kappa: float) -> float:
    """Dwell-time threshold log(mu)/kappa below which stability is not guaranteed."""
    if mu < 1:
        raise ValueError(f"mu must be >= 1, got {mu}")
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    return math.log(mu) / kappa


def eta_budget_common(
    epsilon: float, tau_s: float, chars: CertCharacteristics, kappa: float
) -> float:
    """Largest grid radius achieving precision epsilon with a common certificate."""
    if epsilon <= 0 or tau_s <= 0:
        raise ValueError("epsilon and tau_s must be positive")
    t1 = (1.0 - math.exp(-kappa * tau_s)) * chars.a_lower * epsilon / chars.g
    t2 = chars.a_lower * epsilon / chars.a_upper
    return min(t1, t2)


def eta_budget_dwell(
    epsilon: float,
    tau_s: float,
    tau_d: float,
    mu: float,
    chars: CertCharacteristics,
    kappa: float,
) -> float:
    """Largest grid radius achieving precision epsilon under a dwell time tau_d."""
    if epsilon <= 0 or tau_s <= 0:
        raise ValueError("epsilon and tau_s must be positive")
    if tau_d <= min_dwell_time(mu, kappa):
        raise DwellTooSmallError(
            f"tau_d={tau_d} must exceed log(mu)/kappa={min_dwell_time(mu, kappa)}"
        )
    fac = (1.0 / mu - math.exp(-kappa * tau_d)) / (1.0 - math.exp(-kappa * tau_d))
    t1 = fac * (1.0 - math.exp(-kappa * tau_s)) * chars.a_lower * epsilon / chars.g
    t2 = chars.a_lower * epsilon / chars.a_upper
    return min(t1, t2)


def epsilon_for_eta_common(
    eta: float, tau_s: float, chars: CertCharacteristics, kappa: float
) -> float:
    """Precision achieved by grid radius eta (inverse of the common budget)."""
    return eta / eta_budget_common(1.0, tau_s, chars, kappa)


def epsilon_for_eta_dwell(
    eta: float,
    tau_s: float,
    tau_d: float,
    mu: float,
    chars: CertCharacteristics,
    kappa: float,
) -> float:
    """Precision achieved by grid radius eta (inverse of the dwell budget)."""
    return eta / eta_budget_dwell(1.0, tau_s, tau_d, mu, chars, kappa)


def kl_bound(bound: KLBound, r: float, s: float) -> float:
    """Distance envelope for trajectory pairs starting r apart, after time s."""
    if r < 0 or s < 0:
        raise ValueError("r and s must be nonnegative")
    return (bound.a_upper / bound.a_lower) * r * math.exp(bound.rate * s)


def v_eval(M_p, x, y) -> float:
    """Certificate value sqrt((x-y)^T M_p (x-y))."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return math.sqrt(max(0.0, float(d @ np.asarray(M_p, dtype=float) @ d)))
