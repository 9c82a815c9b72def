"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the pytest terminal summary. Run
just this gate with ``pytest tests/test_acceptance.py -v``.
"""
from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from helpers import SMALL_FIXTURES
from skyroute import cli
from skyroute.agents import AcHyperparams, DdqnHyperparams, train_ac, train_ddqn
from skyroute.agents.common import hyper_from_dict
from skyroute.environment import EnvConfig, TerminalReason
from skyroute.evaluation import compute_metrics, discounted_return, export_artifacts, read_trajectory_csv, rollout_greedy
from skyroute.neuralnet import Mlp, soft_update
from skyroute.planning import distance_only_config, value_iteration
from skyroute.radiomap import GnbSite, MapGenConfig, ShadowRegion, compute_sinr_db, generate_synthetic_map, is_handover

# tolerances and limits pinned from the acceptance criteria
SINR_ORACLE_TOL_DB = 1e-9
SINR_ORACLE_CASES = 1000
SINR_ORACLE_BUDGET_S = 1.0
GRAD_NETS = 20
GRAD_REL_TOL = 1e-4
GRAD_FD_STEP = 1e-5
GRAD_BUDGET_S = 10.0
TD_EPISODES = 200
TD_TOL = 1e-9
ORACLE_RETURN_TOL = 0.05
ORACLE_BUDGET_S = 300.0
SINR_GAIN_DB = 1.0
HANDOVER_SLACK = 2
DDQN_SINR_MARGIN_DB = 1.0
FIG5_BUDGET_S = 900.0
CURVE_RATIO = 2.0
CURVE_MAX_CV = 0.3

RESULTS: list[str] = []


def report(number: int, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ------------------------------------------------------------------ 1


def _watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def test_criterion_1_sinr_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(SINR_ORACLE_CASES):
        rx = rng.uniform(-130.0, 0.0)
        noise = rng.uniform(-120.0, -60.0)
        interferers = list(rng.uniform(-140.0, -20.0, size=rng.integers(0, 6)))
        oracle = 10.0 * math.log10(_watts(rx) / (_watts(noise) + sum(_watts(p) for p in interferers)))
        worst = max(worst, abs(compute_sinr_db(rx, interferers, noise) - oracle))
    elapsed = time.perf_counter() - t0
    report(
        1,
        worst <= SINR_ORACLE_TOL_DB and elapsed < SINR_ORACLE_BUDGET_S,
        f"max |SINR - oracle| = {worst:.2e} dB over {SINR_ORACLE_CASES} cases in {elapsed:.3f} s",
    )


# ------------------------------------------------------------------ 2


def test_criterion_2_gradients():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(GRAD_NETS):
        depth = int(rng.integers(1, 4))
        hidden = tuple(int(v) for v in rng.integers(1, 9, size=depth - 1))
        n_in, n_out = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        net = Mlp(n_in, n_out, hidden, head="softmax" if i % 2 else "linear", rng=rng)
        for p in net.params:
            p += rng.normal(scale=0.1, size=p.shape)
        x, g = rng.normal(size=n_in), rng.normal(size=n_out)
        analytic = net.backward(x, g)
        for p, grad in zip(net.params, analytic):
            for idx in np.ndindex(p.shape):
                orig = p[idx]
                p[idx] = orig + GRAD_FD_STEP
                up = float(net.forward(x) @ g)
                p[idx] = orig - GRAD_FD_STEP
                down = float(net.forward(x) @ g)
                p[idx] = orig
                numeric = (up - down) / (2 * GRAD_FD_STEP)
                # the floor keeps exactly-zero gradients (dead ReLUs) from dividing by zero
                rel = abs(numeric - grad[idx]) / max(abs(numeric), abs(grad[idx]), 1e-6)
                worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    report(
        2,
        worst < GRAD_REL_TOL and elapsed < GRAD_BUDGET_S,
        f"max relative gradient error {worst:.2e} over {GRAD_NETS} nets in {elapsed:.2f} s",
    )


# ------------------------------------------------------------------ 3


def _independent_forward(params, x):
    # separate evaluation of a linear-head ReLU net from a parameter snapshot
    a = np.asarray(x, dtype=np.float64)
    n = len(params) // 2
    for i in range(n):
        a = np.einsum("i,ij->j", a, params[2 * i]) + params[2 * i + 1]
        if i < n - 1:
            a = np.where(a > 0.0, a, 0.0)
    return a


def test_criterion_3_td_identity():
    cfg = MapGenConfig(
        width_cells=10,
        height_cells=10,
        gnbs=[GnbSite(0, 100.0, 100.0), GnbSite(1, 400.0, 400.0), GnbSite(2, 400.0, 100.0)],
        shadow_regions=[ShadowRegion(150.0, 350.0, 150.0, 350.0, 15.0)],
        seed=11,
    )
    env = EnvConfig(generate_synthetic_map(cfg), (0, 9), (9, 0))
    expected: list[float] = []

    def snapshot(agent, transition):
        obs, action, reward, next_obs, next_action, done = transition
        head = action if agent.critic_outputs > 1 else 0
        next_head = next_action if agent.critic_outputs > 1 else 0
        q_sa = _independent_forward([p.copy() for p in agent.critic.params], obs)[head]
        q_next = 0.0 if done else _independent_forward([p.copy() for p in agent.target_critic.params], next_obs)[next_head]
        expected.append(reward + agent.hyper.gamma * q_next - q_sa)

    result = train_ac(env, AcHyperparams(episodes=TD_EPISODES), seed=0, before_update=snapshot, keep_td_log=True)
    logged = np.array([d.td_error for d in result.td_log])
    worst = float(np.max(np.abs(logged - np.array(expected))))
    report(
        3,
        len(logged) == len(expected) > 0 and worst <= TD_TOL and len(result.history) == TD_EPISODES,
        f"{len(logged)} logged TD errors over {TD_EPISODES} episodes, max deviation {worst:.2e}",
    )


# ------------------------------------------------------------------ 4


def test_criterion_4_soft_update():
    rng = np.random.default_rng(3)
    source = Mlp(4, 3, (6, 5), rng=rng)
    checks = []

    target = Mlp(4, 3, (6, 5), rng=rng)
    soft_update(target, source, 0.0)
    checks.append(all(np.array_equal(t, s) for t, s in zip(target.params, source.params)))

    target = Mlp(4, 3, (6, 5), rng=rng)
    old = [p.copy() for p in target.params]
    soft_update(target, source, 1.0)
    checks.append(all(np.array_equal(t, o) for t, o in zip(target.params, old)))

    target = Mlp(4, 3, (6, 5), rng=rng)
    old = [p.copy() for p in target.params]
    soft_update(target, source, 0.5)
    between = all(
        np.all(t >= np.minimum(o, s)) and np.all(t <= np.maximum(o, s))
        for t, o, s in zip(target.params, old, source.params)
    )
    mean_ok = all(np.allclose(t, 0.5 * o + 0.5 * s, rtol=0, atol=4 * np.finfo(float).eps) for t, o, s in zip(target.params, old, source.params))
    checks.append(between and mean_ok)
    report(4, all(checks), f"tau=0 copy {checks[0]}, tau=1 no-op {checks[1]}, tau=0.5 between {checks[2]}")


# ------------------------------------------------------------------ 5


def test_criterion_5_small_instance_oracle():
    t0 = time.perf_counter()
    details, ok = [], True
    gamma = AcHyperparams().gamma
    for name, (radio_map, start, goal) in SMALL_FIXTURES.items():
        env = EnvConfig(radio_map, start, goal)
        oracle_trace = rollout_greedy(value_iteration(env, gamma), env)
        assert oracle_trace.terminal_reason is TerminalReason.GOAL, f"fixture {name} is invalid: optimum never reaches the goal"
        oracle = discounted_return(oracle_trace, gamma)
        for label, agent in (
            ("ac", train_ac(env, AcHyperparams(episodes=300), seed=0).agent),
            ("ddqn", train_ddqn(env, DdqnHyperparams(episodes=300), seed=0).agent),
        ):
            trace = rollout_greedy(agent, env)
            ratio = discounted_return(trace, gamma) / oracle
            good = trace.terminal_reason is TerminalReason.GOAL and ratio >= 1.0 - ORACLE_RETURN_TOL
            ok &= good
            details.append(f"{name}/{label}={ratio:.3f}")
    elapsed = time.perf_counter() - t0
    report(5, ok and elapsed < ORACLE_BUDGET_S, f"return / oracle: {', '.join(details)} in {elapsed:.0f} s")


# ------------------------------------------------------------------ 6, 7, 9 share one training sweep


@pytest.fixture(scope="module")
def acceptance_runs(tmp_path_factory):
    cfg = cli.resolve(cli.default_config())
    radio_map = cli.build_map(cfg)
    env = cli.build_env(cfg, radio_map)
    ac_hyper = hyper_from_dict(AcHyperparams, cfg["ac"])
    ddqn_hyper = hyper_from_dict(DdqnHyperparams, cfg["ddqn"])
    out = tmp_path_factory.mktemp("acceptance")
    t0 = time.perf_counter()
    runs = {"ac": {}, "ddqn": {}}
    for seed in cfg["seeds"]:
        for name, train, hyper in (("ac", train_ac, ac_hyper), ("ddqn", train_ddqn, ddqn_hyper)):
            result = train(env, hyper, seed=seed)
            trace = rollout_greedy(result.agent, env)
            metrics = compute_metrics(trace, env)
            paths = export_artifacts(trace, metrics, result.history, radio_map, out / f"seed{seed}", env, prefix=f"{name}_")
            runs[name][seed] = {"history": result.history, "trace": trace, "metrics": metrics, "paths": paths}
    elapsed = time.perf_counter() - t0
    baseline_trace = rollout_greedy(value_iteration(distance_only_config(env), ac_hyper.gamma), env)
    return {
        "cfg": cfg,
        "env": env,
        "runs": runs,
        "elapsed": elapsed,
        "baseline": compute_metrics(baseline_trace, env),
    }


def test_criterion_6_route_quality(acceptance_runs):
    cfg, runs, base = acceptance_runs["cfg"], acceptance_runs["runs"], acceptance_runs["baseline"]
    ac = runs["ac"][cfg["seed"]]["metrics"]
    a = ac.reached_goal
    b = ac.average_sinr_db - base.average_sinr_db >= SINR_GAIN_DB
    c = ac.handover_count <= base.handover_count + HANDOVER_SLACK
    ac_mean = float(np.mean([r["metrics"].average_sinr_db for r in runs["ac"].values()]))
    ddqn_mean = float(np.mean([r["metrics"].average_sinr_db for r in runs["ddqn"].values()]))
    d = ac_mean >= ddqn_mean - DDQN_SINR_MARGIN_DB
    fast = acceptance_runs["elapsed"] < FIG5_BUDGET_S
    report(
        6,
        a and b and c and d and fast,
        f"(a) goal={a} (b) AC {ac.average_sinr_db:.2f} dB vs distance-only {base.average_sinr_db:.2f} dB "
        f"(c) handovers {ac.handover_count} vs {base.handover_count}+{HANDOVER_SLACK} "
        f"(d) AC mean {ac_mean:.2f} dB vs DDQN mean {ddqn_mean:.2f} dB over {len(cfg['seeds'])} seeds; "
        f"{acceptance_runs['elapsed']:.0f} s",
    )


def test_criterion_7_learning_curve(acceptance_runs):
    cfg = acceptance_runs["cfg"]
    rewards = np.array([h.total_discounted_reward for h in acceptance_runs["runs"]["ac"][cfg["seed"]]["history"]])
    k = max(1, len(rewards) // 10)
    first, last = rewards[:k].mean(), rewards[-k:]
    ratio = last.mean() / first
    cv = last.std() / last.mean()
    report(
        7,
        ratio >= CURVE_RATIO and cv < CURVE_MAX_CV,
        f"last/first 10% mean ratio {ratio:.2f} (>= {CURVE_RATIO}), last-10% CV {cv:.3f} (< {CURVE_MAX_CV})",
    )


def test_criterion_9_handover_consistency(acceptance_runs):
    env = acceptance_runs["env"]
    m = env.radio_map
    checked, ok = 0, True
    for runs in acceptance_runs["runs"].values():
        for run in runs.values():
            rows = read_trajectory_csv(run["paths"]["trajectory"])
            cells = [env.start_cell] + [r["cell"] for r in rows]
            flags = [r["handover"] for r in rows]
            oracle = [is_handover(m, a, b) for a, b in zip(cells[:-1], cells[1:])]
            saved = json.loads(Path(run["paths"]["metrics"]).read_text())
            ok &= flags == oracle and saved["handover_count"] == sum(flags)
            checked += 1
    report(9, ok and checked > 0, f"{checked} exported traces: flags match the serving-cell oracle and the metrics count")


# ------------------------------------------------------------------ 8


def _outputs(directory: Path) -> dict[str, bytes]:
    files = {}
    for p in sorted(directory.rglob("*")):
        if p.suffix in (".csv", ".json") and p.name != cli.RESOLVED_NAME:
            files[str(p.relative_to(directory))] = p.read_bytes()
    return files


def test_criterion_8_determinism(tmp_path):
    small = {"ac": {"episodes": 20}, "ddqn": {"episodes": 20}, "seeds": [0, 1]}
    base_cfg = tmp_path / "base.json"
    base_cfg.write_text(json.dumps(small))
    first = tmp_path / "first"
    commands = {
        "generate-map": ["generate-map", "--seed", "3"],
        "train": ["train", "--agent", "ac", "--seed", "5"],
        "evaluate": ["evaluate", "--checkpoint", str(first / "train" / "checkpoint.json")],
        "compare": ["compare"],
    }
    mismatched = []
    for name, argv in commands.items():
        out_a, out_b = first / name, tmp_path / "second" / name
        assert cli.main(argv + ["--config", str(base_cfg), "--out", str(out_a)]) == 0
        resolved = json.loads((out_a / cli.RESOLVED_NAME).read_text())
        resolved["out"] = str(out_b)
        rerun = tmp_path / f"{name}.resolved.json"
        rerun.write_text(json.dumps(resolved))
        assert cli.main([argv[0], "--config", str(rerun)]) == 0
        a, b = _outputs(out_a), _outputs(out_b)
        if not a or a != b:
            mismatched.append(name)
    report(8, not mismatched, f"reran {', '.join(commands)} from resolved configs; mismatched outputs: {mismatched or 'none'}")
