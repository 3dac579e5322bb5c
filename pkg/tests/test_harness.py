import math

import numpy as np
import pytest

from starmeta.channel import sample_channels
from starmeta.config import apply_scenario, build_topology, desk_config, env_params
from starmeta.harness import (
    COLUMNS,
    MetricsLog,
    Row,
    architectures,
    compare,
    complexity_report,
    export,
    read_log,
    run_experiment,
    sweep,
    sweep_config,
)
from starmeta.mdp import evaluate, encode_state
from starmeta.neural import flops_count
from starmeta.physics import rate_report, serving_channels


def synthetic(values_by_seed, scenario="x"):
    """Log whose per-episode reward and total rate follow the given lists."""
    rows = []
    for seed, values in values_by_seed.items():
        for e, v in enumerate(values, start=1):
            rows.append(Row(seed, e, float(v), float(v), float(v) / 2, 50))
    return MetricsLog(scenario, rows)


def short(**kw):
    return desk_config(**{"seeds": (1, 2), "episodes": 10, "t_max": 20, **kw})


@pytest.fixture(scope="module")
def short_log():
    return run_experiment(short(), keep_agents=True)


def deployed_actions(log, cfg, draws=5):
    top = build_topology(cfg)
    params = env_params(cfg)
    rng = np.random.default_rng(0)
    for result in log.results.values():
        for _ in range(draws):
            ch = sample_channels(top, rng)
            s = encode_state(float(rng.normal()), ch)
            s[0] *= result.bundle.config.reward_scale
            raw = result.bundle.actor(s)[0].astype(float)
            yield ch, raw, params


# run_experiment


def test_record_count_is_seeds_times_episodes(short_log):
    assert len(short_log.rows) == 20
    assert short_log.seeds == [1, 2] and short_log.episodes(1) == 10
    assert short_log.series("reward").shape == (2, 10)
    assert set(short_log.results) == {1, 2}


def test_log_echoes_changed_knobs(short_log):
    assert short_log.config == {"episodes": "10", "t_max": "20", "seeds": "1,2"}
    assert short_log.scenario == "meta+active+second_order+multi_ris"


def test_passive_profiles_are_pinned():
    cfg = apply_scenario(short(seeds=(1,), episodes=2), "passive")
    log = run_experiment(cfg, keep_agents=True)
    assert log.config["ris_mode"] == "passive"
    for ch, raw, params in deployed_actions(log, cfg):
        _, info = evaluate(ch, raw, params)
        prof = info.action.profile
        assert all(np.all(d == 1.0) for d in prof.delta_r + prof.delta_t)


def test_single_reflection_matches_zeroed_inter_surface_channels():
    cfg = apply_scenario(short(seeds=(1,), episodes=2), "single_reflection")
    log = run_experiment(cfg, keep_agents=True)
    for ch, raw, params in deployed_actions(log, cfg):
        assert not params.second_order
        _, info = evaluate(ch, raw, params)
        a = serving_channels(ch, info.action, second_order=False)
        b = serving_channels(ch.zero_inter_ris(), info.action, second_order=True)
        assert np.array_equal(a, b)
        r0 = rate_report(ch.zero_inter_ris(), info.action, params.noise_power, params.r_min, True)
        assert np.array_equal(r0.rate, info.report.rate)


def test_invalid_flag_combinations_rejected():
    with pytest.raises(ValueError, match="second_order"):
        apply_scenario(desk_config(), "single_ris+second_order")
    with pytest.raises(ValueError, match="conflicting"):
        apply_scenario(desk_config(), "meta+ddpg")
    with pytest.raises(ValueError, match="unknown"):
        apply_scenario(desk_config(), "hybrid")
    with pytest.raises(ValueError):
        run_experiment(desk_config(agent="td3"))


def test_single_ris_puts_everyone_on_one_surface():
    cfg = apply_scenario(desk_config(), "single_ris+single_reflection")
    top = build_topology(cfg)
    assert top.n_ris == 1 and top.n_users == 4 and np.all(top.user_ris == 0)


def test_parallel_workers_match_serial():
    cfg = short(episodes=2, t_max=10)
    serial = run_experiment(cfg)
    pooled = run_experiment(cfg.replace(n_jobs=2))
    assert serial.rows == pooled.rows


# compare


def test_identical_logs_have_zero_gain():
    log = synthetic({1: [1, 2, 3], 2: [2, 2, 2]})
    res = compare(log, log)
    assert res.gain == 0.0 and res.positive == 0 and np.all(res.diffs == 0)


@pytest.mark.parametrize("mean_a, expected", [(1.19, 0.19), (1.741, 0.741)])
def test_headline_gains_as_worked_examples(mean_a, expected):
    a = synthetic({s: [0.0] * 9 + [mean_a] for s in range(1, 6)})
    b = synthetic({s: [5.0] * 9 + [1.0] for s in range(1, 6)})
    res = compare(a, b, "total_rate")
    assert res.gain == pytest.approx(expected, rel=1e-12)
    assert res.positive == 5


def test_compare_uses_final_tenth_of_episodes():
    a = synthetic({1: list(range(20))})
    b = synthetic({1: [1.0] * 20})
    # ceil(0.1 * 20) = 2 final episodes: 18 and 19
    assert compare(a, b).mean_a == 18.5
    assert compare(a, b, fraction=0.5).mean_a == np.mean(range(10, 20))


def test_paired_sign_count():
    a = synthetic({1: [2.0], 2: [0.5], 3: [3.0]})
    b = synthetic({1: [1.0], 2: [1.0], 3: [1.0]})
    res = compare(a, b)
    assert res.positive == 2 and list(res.diffs) == [1.0, -0.5, 2.0]
    assert "positive_seeds = 2/3" in res.lines()


def test_negative_baseline_keeps_sign_meaning():
    a = synthetic({1: [-1.0]})
    b = synthetic({1: [-2.0]})
    assert compare(a, b).gain == pytest.approx(0.5)


def test_compare_rejects_mismatched_logs():
    with pytest.raises(ValueError, match="seed"):
        compare(synthetic({1: [1.0]}), synthetic({2: [1.0]}))
    with pytest.raises(ValueError, match="episode"):
        compare(synthetic({1: [1.0, 2.0]}), synthetic({1: [1.0]}))
    with pytest.raises(ValueError):
        compare(synthetic({1: [1.0]}), synthetic({1: [0.0]}))
    with pytest.raises(ValueError):
        compare(MetricsLog("x"), MetricsLog("y"))


# sweep


def test_sweep_config_knobs():
    cfg = desk_config()
    assert sweep_config(cfg, "p_max", 5).p_max == 5.0
    assert sweep_config(cfg, "elements", 8).elements == 8
    assert sweep_config(cfg, "users", 6).n_users == 6
    with pytest.raises(ValueError):
        sweep_config(cfg, "users", 5)
    with pytest.raises(ValueError):
        sweep_config(cfg, "bandwidth", 1)


def test_sweep_shares_everything_else():
    seen = []

    def runner(c):
        seen.append(c)
        return MetricsLog(c.scenario)

    out = sweep(desk_config(), "p_max", [5, 10, 20], runner=runner)
    assert [v for v, _ in out] == [5, 10, 20]
    assert [c.p_max for c in seen] == [5.0, 10.0, 20.0]
    assert all(c.replace(p_max=20.0) == desk_config() for c in seen)


def test_sweep_value_errors():
    with pytest.raises(ValueError):
        sweep(desk_config(), "p_max", [], runner=lambda c: None)
    with pytest.raises(ValueError):
        sweep(desk_config(), "p_max", [10, 5], runner=lambda c: None)
    with pytest.raises(ValueError):
        sweep(desk_config(), "p_max", [5, 5], runner=lambda c: None)


def test_single_value_sweep_equals_run_experiment():
    cfg = short(seeds=(3,), episodes=2, t_max=10)
    [(value, log)] = sweep(cfg, "p_max", [20.0])
    assert value == 20.0
    assert log.rows == run_experiment(cfg).rows


# complexity


def test_complexity_toy_by_hand():
    rep = complexity_report([4, 8, 2], [4, 8, 2], [4, 8, 2])
    assert rep.actor == rep.critic == rep.meta == 192.0
    assert rep.ddpg == 384.0 and rep.meta_ddpg == 480.0
    assert rep.overhead == 0.25
    assert rep.order_ddpg == 96 and rep.order_meta == 120.0


def test_empty_meta_has_no_overhead():
    rep = complexity_report([4, 8, 2], [6, 8, 1])
    assert rep.meta == 0.0 and rep.overhead == 0.0 and rep.meta_ddpg == rep.ddpg


def test_desk_architectures_and_counts():
    actor, critic, meta = architectures(desk_config())
    # action: 8 association + 4 power + 16 beamformer + 40 surface entries
    assert actor == [97, 64, 64, 68] and critic == [165, 64, 64, 1] and meta == [165, 16, 1]
    rep = complexity_report(actor, critic, meta)
    assert rep.meta_ddpg > rep.ddpg
    assert rep.actor == flops_count(actor)
    assert 0.0 < rep.overhead < 0.1


# export


def test_export_round_trip(tmp_path):
    log = synthetic({2: [1.5, 2.25], 1: [1 / 3, math.pi]}, scenario="ddpg+passive")
    log.config = {"p_max": "5.0"}
    back = read_log(export(log, tmp_path / "m.csv"))
    assert back.scenario == log.scenario and back.config == log.config
    assert sorted(back.rows, key=lambda r: (r.seed, r.episode)) == back.rows
    assert sorted(log.rows, key=lambda r: (r.seed, r.episode)) == back.rows


def test_export_layout(tmp_path):
    text = export(synthetic({1: [1.0, 2.0]}), tmp_path / "m.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == ",".join(COLUMNS)
    assert lines[1] == "1,1,1.0,1.0,0.5,50"
    assert "# tail_reward_mean = 2.0" in lines


def test_empty_log_exports_header_only(tmp_path):
    path = export(MetricsLog("x"), tmp_path / "e.csv")
    assert path.read_text() == ",".join(COLUMNS) + "\n"
    assert read_log(path).rows == []


def test_export_is_byte_stable(tmp_path):
    log = synthetic({1: [0.1, 0.2, 0.3], 2: [1e-17, 2.5, 7.0]})
    a = export(log, tmp_path / "a.csv").read_bytes()
    b = export(log, tmp_path / "b.csv").read_bytes()
    assert a == b


def test_io_errors_carry_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        export(synthetic({1: [1.0]}), tmp_path / "missing" / "m.csv")
    with pytest.raises(OSError, match="nothere"):
        read_log(tmp_path / "nothere.csv")
    (tmp_path / "bad.csv").write_text("a,b\n")
    with pytest.raises(ValueError):
        read_log(tmp_path / "bad.csv")
