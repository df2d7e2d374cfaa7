"""Smoke test for the compiled `steering` extension.

Build and install it first:

    pip install maturin
    maturin develop -m crates/py/Cargo.toml   # inside a virtualenv
    # or: maturin build -m crates/py/Cargo.toml && pip install target/wheels/steering-*.whl

then run `python python/smoke_test.py`.
"""

import json
import math
import tempfile
from pathlib import Path

import steering

CONFIG = """
env.kind = deepsea
env.N = 4
env.delta = 0
episodes = 20
seeds = 0,1
agents.0.kind = psrl
agents.1.kind = steering
agents.2.kind = oracle
metrics.dsd = true
"""


def check_kernels():
    row = [0.5, 0.5]
    model = steering.Model(2, 1, [row, row])
    k = model.stein_kernel((0, 0, 0), (0, 0, 0))
    assert math.isclose(k, 2 - 2 / math.e, rel_tol=1e-12), k
    assert abs(model.dsd_population(row, 0, 0)) < 1e-12
    assert model.dsd_population([0.9, 0.1], 0, 0) > 1e-6
    samples = [(0, 0, 0), (1, 0, 1), (0, 0, 1)]
    gram = model.gram(samples)
    vstat = sum(map(sum, gram)) / len(samples) ** 2
    assert math.isclose(model.dsd_vstat(samples), vstat, rel_tol=1e-12)


def check_mdp():
    env = steering.Mdp.deepsea(4, delta=0.0)
    policy, values = env.solve()
    assert len(policy) == env.horizon == 4
    assert abs(env.optimal_value() - 0.421875) < 1e-9
    assert math.isclose(env.evaluate(policy), env.optimal_value(), rel_tol=1e-12)
    assert env.evaluate([[0] * 4] * 4) < 1e-9
    back = steering.Mdp.from_json(env.to_json())
    assert back.to_json() == env.to_json()
    prior = steering.Mdp.priormdp(3, 2, horizon=5, seed=1)
    assert prior.transition().num_states == 3


def check_belief():
    belief = steering.Belief(2, 1)
    for _ in range(999):
        belief.observe(0, 0, 0, 0.0)
    assert belief.counts(0, 0) == [1000.0, 1.0]
    assert belief.observations == 999
    template = steering.Mdp.from_json(json.dumps(_one_action_mdp()))
    sample = belief.sample_mdp(template, seed=3)
    assert sample.transition().row(0, 0)[0] > 0.98
    again = steering.Belief.from_json(belief.to_json())
    assert again.counts(0, 0) == belief.counts(0, 0)
    try:
        steering.Belief(2, 1, eta=-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative eta accepted")


def _one_action_mdp():
    return {
        "schema_version": 1,
        "num_states": 2,
        "num_actions": 1,
        "horizon": 3,
        "transition": [0.5, 0.5, 0.5, 0.5],
        "reward_mean": [0.0, 1.0],
        "reward_noise": [{"kind": "point_mass"}, {"kind": "point_mass"}],
        "init_dist": [1.0, 0.0],
        "r_max": 1.0,
    }


def check_experiment():
    steering.validate_config(CONFIG)
    try:
        steering.validate_config(CONFIG + "agents.0.lambda = -1\n")
    except ValueError as e:
        assert "agents.0.lambda" in str(e)
    else:
        raise AssertionError("bad config accepted")
    bundle = steering.run_experiment(CONFIG)
    assert bundle.agents() == ["psrl", "steering", "oracle"]
    assert bundle.final_regrets("oracle") == [0.0, 0.0]
    assert len(bundle.mean_curve("psrl")) == 20
    lines = bundle.regret_csv().splitlines()
    assert lines[0] == "agent,seed,episode,per_episode_regret,cumulative_regret"
    assert len(lines) == 1 + 3 * 2 * 20
    rerun = steering.run_experiment(CONFIG)
    assert rerun.regret_csv() == bundle.regret_csv()
    assert steering.Bundle.from_json(bundle.to_json()).regret_csv() == bundle.regret_csv()
    with tempfile.TemporaryDirectory() as tmp:
        written = bundle.write(Path(tmp) / "out")
        assert sorted(Path(p).name for p in written) == ["bundle.json", "dsd.csv", "regret.csv"]
    short = steering.run_experiment(CONFIG, seed=5, episodes=3)
    assert len(short.final_regrets("psrl")) == 1
    table = steering.oracle_table(CONFIG)
    assert table.startswith("h,s,v_star\n")


if __name__ == "__main__":
    check_kernels()
    check_mdp()
    check_belief()
    check_experiment()
    print("smoke test ok")
