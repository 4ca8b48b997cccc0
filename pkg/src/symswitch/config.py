"""Problem configuration: a single JSON document describing a case study.

Schema (units in parentheses):

    system.modes[]        A (1/time, row-major n x n), b (state/time, n)
    certificates          M[] (one SPD matrix per mode), kappa (1/time),
                          optional mu (computed from the matrices if absent)
    sampling.tau_s        sampling period (time)
    abstraction           region {lo, hi} (state units); eta and/or epsilon —
                          when both are given, eta must respect the budget
    dwell.tau_d           optional dwell time (time), integer multiple of tau_s
    spec                  keep {lo, hi}, optional avoid {lo, hi}
    simulation            x0 (state), horizon (sampling periods)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .abstraction import Region
from .dynamics import AffineMode, SwitchedSystem
from .lyapunov import (
    CertCharacteristics,
    QuadraticCertificateSet,
    characteristics,
    compute_mu,
    eta_budget_common,
    eta_budget_dwell,
    epsilon_for_eta_common,
    epsilon_for_eta_dwell,
)


class ConfigError(ValueError):
    """Raised for malformed configuration documents."""


class BudgetViolationError(ConfigError):
    """Raised when the requested eta exceeds the precision budget."""


def _box(d, name) -> Region:
    try:
        return Region(np.array(d["lo"], float), np.array(d["hi"], float))
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{name} must be {{lo: [...], hi: [...]}}") from e


@dataclass
class ProblemConfig:
    system: SwitchedSystem
    cert: QuadraticCertificateSet
    tau_s: float
    region: Region
    eta: float | None = None
    epsilon: float | None = None
    tau_d: float | None = None
    keep: Region | None = None
    avoid: Region | None = None
    x0: np.ndarray | None = None
    horizon: int | None = None

    # -- derived quantities ----------------------------------------------

    @property
    def kind(self) -> str:
        return "dwell" if self.tau_d is not None else "common"

    @property
    def N(self) -> int:
        if self.tau_d is None:
            return 1
        return int(round(self.tau_d / self.tau_s))

    def chars(self) -> CertCharacteristics:
        return characteristics(self.cert)

    def eta_budget(self, epsilon: float) -> float:
        ch = self.chars()
        if self.kind == "common":
            return eta_budget_common(epsilon, self.tau_s, ch, self.cert.kappa)
        return eta_budget_dwell(
            epsilon, self.tau_s, self.tau_d, self.cert.mu, ch, self.cert.kappa
        )

    def epsilon_for_eta(self, eta: float) -> float:
        ch = self.chars()
        if self.kind == "common":
            return epsilon_for_eta_common(eta, self.tau_s, ch, self.cert.kappa)
        return epsilon_for_eta_dwell(
            eta, self.tau_s, self.tau_d, self.cert.mu, ch, self.cert.kappa
        )

    def resolve(self) -> tuple[float, float]:
        """(eta, epsilon) with the missing one derived from the budget.

        When both are specified, eta must satisfy the budget; a violation
        is a refusal, not a warning.
        """
        if self.eta is None and self.epsilon is None:
            raise ConfigError("abstraction needs eta and/or epsilon")
        if self.eta is None:
            return self.eta_budget(self.epsilon), self.epsilon
        if self.epsilon is None:
            return self.eta, self.epsilon_for_eta(self.eta)
        budget = self.eta_budget(self.epsilon)
        if self.eta > budget * (1 + 1e-12):
            raise BudgetViolationError(
                f"eta={self.eta} exceeds the budget {budget} for epsilon="
                f"{self.epsilon} (kind={self.kind})"
            )
        return self.eta, self.epsilon

    def validate(self) -> None:
        if self.cert.n_modes != self.system.m:
            raise ConfigError("one certificate matrix per mode is required")
        if self.cert.n != self.system.n:
            raise ConfigError("certificate and system dimensions differ")
        if self.tau_s <= 0:
            raise ConfigError("tau_s must be positive")
        if self.tau_d is not None:
            N = self.tau_d / self.tau_s
            if abs(N - round(N)) > 1e-9 or round(N) < 1:
                raise ConfigError("tau_d must be a positive integer multiple of tau_s")
        self.resolve()

    # -- (de)serialization -------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemConfig":
        try:
            modes = tuple(
                AffineMode(np.array(m["A"], float), np.array(m["b"], float))
                for m in d["system"]["modes"]
            )
            system = SwitchedSystem(modes)
            certd = d["certificates"]
            mats = tuple(np.array(M, float) for M in certd["M"])
            mu = certd.get("mu")
            if mu is None:
                mu = compute_mu(
                    QuadraticCertificateSet(M=mats, kappa=float(certd["kappa"]))
                )
            cert = QuadraticCertificateSet(
                M=mats, kappa=float(certd["kappa"]), mu=float(mu)
            )
            tau_s = float(d["sampling"]["tau_s"])
            absd = d["abstraction"]
            region = _box(absd["region"], "abstraction.region")
        except (KeyError, TypeError) as e:
            raise ConfigError(f"missing or malformed config field: {e}") from e

        cfg = cls(
            system=system,
            cert=cert,
            tau_s=tau_s,
            region=region,
            eta=None if absd.get("eta") is None else float(absd["eta"]),
            epsilon=None if absd.get("epsilon") is None else float(absd["epsilon"]),
            tau_d=None
            if d.get("dwell") is None
            else float(d["dwell"]["tau_d"]),
            keep=None
            if d.get("spec") is None
            else _box(d["spec"]["keep"], "spec.keep"),
            avoid=None
            if d.get("spec") is None or d["spec"].get("avoid") is None
            else _box(d["spec"]["avoid"], "spec.avoid"),
            x0=None
            if d.get("simulation") is None
            else np.array(d["simulation"]["x0"], float),
            horizon=None
            if d.get("simulation") is None
            else int(d["simulation"]["horizon"]),
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = {
            "system": {
                "modes": [
                    {"A": m.A.tolist(), "b": m.b.tolist()} for m in self.system.modes
                ]
            },
            "certificates": {
                "M": [M.tolist() for M in self.cert.M],
                "kappa": self.cert.kappa,
                "mu": self.cert.mu,
            },
            "sampling": {"tau_s": self.tau_s},
            "abstraction": {
                "region": {"lo": self.region.lo.tolist(), "hi": self.region.hi.tolist()},
                "eta": self.eta,
                "epsilon": self.epsilon,
            },
        }
        if self.tau_d is not None:
            d["dwell"] = {"tau_d": self.tau_d}
        if self.keep is not None:
            d["spec"] = {
                "keep": {"lo": self.keep.lo.tolist(), "hi": self.keep.hi.tolist()}
            }
            if self.avoid is not None:
                d["spec"]["avoid"] = {
                    "lo": self.avoid.lo.tolist(),
                    "hi": self.avoid.hi.tolist(),
                }
        if self.x0 is not None:
            d["simulation"] = {"x0": self.x0.tolist(), "horizon": self.horizon}
        return d

    @classmethod
    def load(cls, path) -> "ProblemConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")
