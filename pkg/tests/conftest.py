"""Shared fixtures: bundled configs and the small models reused across tests."""

import math
from pathlib import Path

import numpy as np
import pytest

import symswitch as ss
from symswitch.config import ProblemConfig

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

SQRT2 = math.sqrt(2.0)


def load_config(name: str) -> ProblemConfig:
    return ProblemConfig.load(CONFIG_DIR / f"{name}.json")


@pytest.fixture(scope="session")
def boost_coarse_cfg():
    return load_config("boost_coarse")


@pytest.fixture(scope="session")
def boost_fine_cfg():
    return load_config("boost_fine")


@pytest.fixture(scope="session")
def dwell_desk_cfg():
    return load_config("dwell_desk")


@pytest.fixture(scope="session")
def dwell_full_cfg():
    return load_config("dwell_full")


@pytest.fixture(scope="session")
def boost_coarse_model(boost_coarse_cfg):
    cfg = boost_coarse_cfg
    return ss.build_common_abstraction(cfg.system, cfg.tau_s, cfg.eta, cfg.region)


@pytest.fixture(scope="session")
def boost_coarse_ctrl(boost_coarse_cfg, boost_coarse_model):
    cfg = boost_coarse_cfg
    spec = ss.SafetySpec(keep=cfg.keep, avoid=cfg.avoid)
    return ss.maximal_safety_controller(boost_coarse_model, spec)


@pytest.fixture(scope="session")
def dwell_desk_model(dwell_desk_cfg):
    cfg = dwell_desk_cfg
    return ss.build_dwell_abstraction(
        cfg.system, cfg.tau_s, cfg.N, cfg.eta, cfg.region, threads=2
    )


@pytest.fixture(scope="session")
def dwell_desk_ctrl(dwell_desk_cfg, dwell_desk_model):
    cfg = dwell_desk_cfg
    spec = ss.SafetySpec(keep=cfg.keep, avoid=cfg.avoid)
    return ss.maximal_safety_controller(dwell_desk_model, spec)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
