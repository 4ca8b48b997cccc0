"""Config round trips, budget refusal, and the command-line pipeline."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from symswitch.cli import (
    EXIT_EMPTY_CONTROLLER,
    EXIT_OK,
    EXIT_VALIDATION,
    load_finite_ts,
    main,
)
from symswitch.config import BudgetViolationError, ProblemConfig

from .conftest import CONFIG_DIR

SQRT2 = math.sqrt(2.0)


# -- config --------------------------------------------------------------------


@pytest.mark.parametrize(
    "name", ["boost_coarse", "boost_fine", "dwell_desk", "dwell_full"]
)
def test_config_round_trip(name, tmp_path):
    cfg = ProblemConfig.load(CONFIG_DIR / f"{name}.json")
    cfg.save(tmp_path / "copy.json")
    back = ProblemConfig.load(tmp_path / "copy.json")
    assert back.to_dict() == cfg.to_dict()
    assert back.tau_s == cfg.tau_s
    assert back.eta == cfg.eta
    assert back.epsilon == cfg.epsilon
    for p in range(1, cfg.system.m + 1):
        assert np.array_equal(back.system.mode(p).A, cfg.system.mode(p).A)
        assert np.array_equal(back.cert.M[p - 1], cfg.cert.M[p - 1])


def test_config_mu_computed_when_absent(dwell_desk_cfg):
    assert dwell_desk_cfg.cert.mu == pytest.approx(SQRT2, abs=1e-12)


def test_config_rejects_eta_above_budget():
    cfg = ProblemConfig.load(CONFIG_DIR / "boost_coarse.json")
    cfg.eta = 10 * cfg.eta_budget(cfg.epsilon)
    with pytest.raises(BudgetViolationError):
        cfg.resolve()


def test_dwell_must_be_integer_multiple_of_sampling(tmp_path):
    d = ProblemConfig.load(CONFIG_DIR / "dwell_desk.json").to_dict()
    d["dwell"]["tau_d"] = 1.7
    (tmp_path / "bad.json").write_text(json.dumps(d), encoding="utf-8")
    with pytest.raises(Exception):
        ProblemConfig.load(tmp_path / "bad.json").validate()


# -- CLI commands ----------------------------------------------------------------


def cfg_path(name: str) -> str:
    return str(CONFIG_DIR / f"{name}.json")


def test_cli_verify_passes_on_bundled_configs(capsys):
    for name in ("boost_coarse", "dwell_desk"):
        assert main(["verify", "--config", cfg_path(name)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out


def test_cli_verify_fails_on_broken_kappa(tmp_path, capsys):
    d = ProblemConfig.load(CONFIG_DIR / "boost_coarse.json").to_dict()
    d["certificates"]["kappa"] = 10.0
    p = tmp_path / "broken.json"
    p.write_text(json.dumps(d), encoding="utf-8")
    assert main(["verify", "--config", str(p)]) == EXIT_VALIDATION
    assert "FAIL" in capsys.readouterr().out


def test_cli_budget_reports_divisor(capsys):
    assert main(["budget", "--config", cfg_path("boost_fine")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "eta_max" in out
    div = float(out.split("divisor ")[1].split(")")[0])
    assert 144.7 <= div <= 145.7


def test_cli_budget_refuses_eta_above_budget(capsys):
    code = main(["budget", "--config", cfg_path("boost_fine"), "--eta", "0.1"])
    assert code == EXIT_VALIDATION
    assert "budget" in capsys.readouterr().err


def test_cli_abstract_and_check_bisim_self(tmp_path, capsys):
    out_dir = tmp_path / "coarse"
    code = main([
        "abstract", "--config", cfg_path("boost_coarse"), "--out", str(out_dir)
    ])
    assert code == EXIT_OK
    assert "states=85" in capsys.readouterr().out
    assert (out_dir / "states.csv").exists()
    assert (out_dir / "transitions.csv").exists()
    assert (out_dir / "model.dot").exists()

    # a model is 0-bisimilar to itself
    code = main(["check-bisim", str(out_dir), str(out_dir), "--epsilon", "0"])
    assert code == EXIT_OK
    assert "YES" in capsys.readouterr().out


def test_cli_check_bisim_across_grid_refinement(tmp_path, capsys):
    # two abstractions of the same concrete system over a tiny region at
    # radii eta and eta/2 must be bisimilar with the sum of the precisions
    # each grid achieves (relation composition through the shared system)
    cfg = ProblemConfig.load(CONFIG_DIR / "boost_coarse.json")
    eta1 = 1.0 / (40 * SQRT2)
    eta2 = eta1 / 2
    eps = cfg.epsilon_for_eta(eta1) + cfg.epsilon_for_eta(eta2)

    base = cfg.to_dict()
    base["abstraction"]["region"] = {"lo": [1.3, 5.7], "hi": [1.34, 5.72]}
    base["abstraction"].pop("epsilon", None)
    dirs = []
    for i, eta in enumerate((eta1, eta2)):
        d = dict(base)
        d["abstraction"] = dict(base["abstraction"], eta=eta)
        p = tmp_path / f"cfg{i}.json"
        p.write_text(json.dumps(d), encoding="utf-8")
        out = tmp_path / f"model{i}"
        assert main(["abstract", "--config", str(p), "--out", str(out)]) == EXIT_OK
        dirs.append(out)
    capsys.readouterr()
    code = main([
        "check-bisim", str(dirs[0]), str(dirs[1]), "--epsilon", repr(eps)
    ])
    assert code == EXIT_OK
    assert "YES" in capsys.readouterr().out


def test_cli_check_bisim_rejects_far_models(tmp_path, capsys):
    out_dir = tmp_path / "m"
    main(["abstract", "--config", cfg_path("boost_coarse"), "--out", str(out_dir)])
    capsys.readouterr()
    code = main(["check-bisim", str(out_dir), str(out_dir), "--epsilon", "-1"])
    assert code == 1
    assert "NO" in capsys.readouterr().out


def test_cli_synthesize_coarse(tmp_path, capsys):
    out_dir = tmp_path / "synth"
    code = main([
        "synthesize", "--config", cfg_path("boost_coarse"), "--out", str(out_dir)
    ])
    assert code == EXIT_OK
    assert "controllable=52" in capsys.readouterr().out
    assert (out_dir / "controller.json").exists()
    assert (out_dir / "class_grid.csv").exists()
    assert (out_dir / "class_grid.png").exists()


def test_cli_synthesize_empty_domain_exit_code(tmp_path, capsys):
    d = ProblemConfig.load(CONFIG_DIR / "boost_coarse.json").to_dict()
    # an all-unsafe spec: avoid box swallows the whole keep box interior
    d["spec"]["avoid"] = {"lo": [0.0, 0.0], "hi": [10.0, 10.0]}
    p = tmp_path / "unsafe.json"
    p.write_text(json.dumps(d), encoding="utf-8")
    code = main(["synthesize", "--config", str(p), "--out", str(tmp_path / "o")])
    assert code == EXIT_EMPTY_CONTROLLER


def test_cli_simulate_coarse(tmp_path, capsys):
    out_dir = tmp_path / "sim"
    code = main([
        "simulate", "--config", cfg_path("boost_coarse"), "--out", str(out_dir)
    ])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "monitor: PASS" in out
    for name in ("trace.csv", "trace.png", "signals.png", "report.txt"):
        assert (out_dir / name).exists(), name


def test_cli_simulate_dwell_desk(tmp_path, capsys):
    out_dir = tmp_path / "sim_dwell"
    code = main([
        "simulate", "--config", cfg_path("dwell_desk"), "--out", str(out_dir),
        "--threads", "2",
    ])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "monitor: PASS" in out
    gap = int(out.split("min dwell gap (samples): ")[1].split("\n")[0])
    assert gap >= 4


def test_cli_outputs_independent_of_threads(tmp_path):
    dirs = []
    for t in ("1", "3"):
        out_dir = tmp_path / f"t{t}"
        main([
            "abstract", "--config", cfg_path("boost_coarse"),
            "--out", str(out_dir), "--threads", t,
        ])
        dirs.append(out_dir)
    for name in ("states.csv", "transitions.csv"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


def test_load_finite_ts_matches_model(tmp_path, boost_coarse_model):
    boost_coarse_model.write_states_csv(tmp_path / "states.csv")
    boost_coarse_model.write_transitions_csv(tmp_path / "transitions.csv")
    t = load_finite_ts(tmp_path)
    assert len(t.states) == boost_coarse_model.state_count()
    for s in (0, 40, 84):
        assert np.allclose(t.outputs[s], boost_coarse_model.output(s))
