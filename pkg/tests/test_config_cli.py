import numpy as np
import pytest

from starmeta.cli import main
from starmeta.config import (
    agent_config,
    apply_scenario,
    build_topology,
    config_diff,
    desk_config,
    env_params,
    full_config,
    load_config,
    parse_config_text,
    train_config,
)
from starmeta.harness import read_log


def test_noise_power_conversion():
    # -174 dBm/Hz over 10 MHz is -104 dBm
    assert desk_config().noise_power == pytest.approx(10**-13.4, rel=1e-12)
    assert desk_config(bandwidth_hz=1e6).noise_power == pytest.approx(10**-14.4, rel=1e-12)


def test_profiles():
    d, p = desk_config(), full_config()
    assert (d.n_ris, d.elements, d.n_users, d.n_bs, d.episodes, d.t_max) == (2, 4, 4, 2, 300, 50)
    assert (p.n_ris, p.n_users, p.n_bs, p.episodes) == (4, 16, 4, 5000)
    for c in (d, p):
        assert c.p_max == 20.0 and c.r_min == 1.0 and c.buffer_capacity == 10_000
        assert c.gamma == 0.99 and c.batch_size == 100 and c.delta_max == pytest.approx(10**2.5)
    assert build_topology(p).n_ris == 4


def test_parse_config_text_types():
    text = """
    # comment line
    p_max = 5          # watts
    seeds = 1, 2,3
    hidden = 32,32
    learn_psi = no
    c3 = none
    agent = ddpg
    ris_positions = 50,0; 20,0
    """
    out = parse_config_text(text)
    assert out == {
        "p_max": 5.0,
        "seeds": (1, 2, 3),
        "hidden": (32, 32),
        "learn_psi": False,
        "c3": None,
        "agent": "ddpg",
        "ris_positions": ((50.0, 0.0), (20.0, 0.0)),
    }


@pytest.mark.parametrize("text", ["bogus = 1", "learn_psi = maybe", "p_max = lots", "ris_positions = 1,2,3"])
def test_bad_config_text(text):
    with pytest.raises(ValueError):
        parse_config_text(text)


def test_load_config_over_profile(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("p_max = 10\nepisodes = 7\n")
    cfg = load_config(path, full_config())
    assert cfg.p_max == 10.0 and cfg.episodes == 7 and cfg.n_ris == 4
    assert config_diff(cfg, full_config()) == {"p_max": "10.0", "episodes": "7"}
    with pytest.raises(OSError, match="absent"):
        load_config(tmp_path / "absent.cfg")


def test_scenario_flags_touch_only_their_knob():
    base = desk_config()
    for flag, key in [("ddpg", "agent"), ("passive", "ris_mode"), ("single_reflection", "reflections")]:
        assert list(config_diff(apply_scenario(base, flag), base)) == [key]
    assert env_params(apply_scenario(base, "passive")).fixed_delta == 1.0
    assert env_params(apply_scenario(base, "single_reflection")).second_order is False
    assert agent_config(apply_scenario(base, "ddpg")).kind == "ddpg"


def test_validation():
    for bad in (dict(agent="ppo"), dict(seeds=()), dict(seeds=(1, 1)), dict(tail_fraction=0.0), dict(p_max=-1.0)):
        with pytest.raises(ValueError):
            desk_config(**bad).validate()


def test_explicit_geometry(tmp_path):
    cfg = desk_config(
        ris_positions=((40.0, 0.0), (15.0, 0.0)),
        user_positions=((43.0, 0.0), (15.0, 4.0), (12.0, 0.0)),
        user_ris=(0, 1, 1),
        user_side=("t", "r", "r"),
    )
    top = build_topology(cfg)
    assert top.n_users == 3 and list(top.user_ris) == [0, 1, 1]
    with pytest.raises(ValueError):
        build_topology(desk_config(ris_positions=((40.0, 0.0),)))


def test_train_config_threads_seed():
    tc = train_config(desk_config(), 9)
    assert tc.seed == 9 and tc.episodes == 300 and tc.agent.hidden == (64, 64)
    assert tc.agent.reward_scale == 0.01


# command line


def test_cli_flops(capsys):
    assert main(["flops"]) == 0
    out = capsys.readouterr().out
    assert "actor = [97, 64, 64, 68]" in out and "meta_overhead = " in out
    assert main(["flops", "--no-meta"]) == 0
    assert "meta_overhead = 0.0" in capsys.readouterr().out


def test_cli_train_compare_export(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    common = ["--seeds", "1,2", "--episodes", "2"]
    assert main(["train", *common, "--out", str(a)]) == 0
    assert main(["train", *common, "--scenario", "ddpg", "--out", str(b)]) == 0
    log = read_log(a)
    assert len(log.rows) == 4 and log.scenario.startswith("meta")
    assert read_log(b).config["agent"] == "ddpg"
    capsys.readouterr()
    assert main(["compare", str(a), str(b), "--metric", "total_rate"]) == 0
    assert "positive_seeds = " in capsys.readouterr().out
    c = tmp_path / "c.csv"
    assert main(["export", str(a), "--out", str(c)]) == 0
    assert c.read_bytes() == a.read_bytes()


def test_cli_sweep_writes_one_file_per_value(tmp_path, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", "p_max", "5,10", "--seeds", "1", "--episodes", "1", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["p_max_10.0.csv", "p_max_5.0.csv"]
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[0].startswith("p_max,") and len(rows) == 3
    assert np.isfinite(float(rows[1].split(",")[1]))


def test_cli_reports_errors(tmp_path, capsys):
    assert main(["train", "--scenario", "single_ris+second_order", "--out", str(tmp_path / "x.csv")]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["compare", str(tmp_path / "none.csv"), str(tmp_path / "none.csv")]) == 2
    assert main(["sweep", "p_max", "10,5", "--episodes", "1", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["train", "--seeds", "a,b"])
