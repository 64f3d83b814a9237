import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retcap.envs import (
    AutonomousVehicle,
    BettingGame,
    ContinuousGuardedMaze,
    DiscreteGuardedMaze,
    MazeLayout,
    RoadGraph,
    make_env,
)
from retcap.envs.av import COST_PROBS, ROAD_COSTS
from retcap.envs.maze import MOVES

ALL_ENVS = ("betting", "av", "maze_discrete", "maze_continuous")
MAX_STEPS = {"betting": 6, "av": 32, "maze_discrete": 100, "maze_continuous": 161}


def run_actions(env, actions, seed=0, **forced):
    env.reset(seed)
    out = []
    for a in actions:
        out.append(env.step(a, **forced))
        if out[-1].terminated or out[-1].truncated:
            break
    return out


def test_max_steps_match_tables():
    for name, n in MAX_STEPS.items():
        assert make_env(name).spec.max_steps == n


def test_betting_reset():
    env = BettingGame()
    obs = env.reset(3)
    assert env.tokens == 16 and env.turn == 0
    assert obs.tolist() == [1.0, 0.0]


def test_betting_examples():
    env = BettingGame()
    env.reset(0)
    tr = env.step(8, win=True)
    assert tr.reward == 16 and env.tokens == 32 and not tr.terminated
    env.reset(0)
    tr = env.step(0)
    assert tr.reward == 0 and env.tokens == 16
    env.reset(0)
    tr = env.step(8, win=False)
    assert tr.reward == -16 and env.tokens == 0 and tr.terminated


def test_betting_bad_action():
    env = BettingGame()
    env.reset(0)
    with pytest.raises(ValueError):
        env.step(9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.lists(st.integers(0, 8), min_size=6, max_size=6))
def test_betting_return_is_token_change(seed, actions):
    env = BettingGame()
    trs = run_actions(env, actions, seed)
    assert env.tokens >= 0
    assert sum(t.reward for t in trs) == env.tokens - 16
    assert len(trs) <= 6
    assert trs[-1].terminated and not trs[-1].truncated


def test_betting_win_rate():
    env = BettingGame()
    wins = 0
    for s in range(4000):
        env.reset([7, s])
        wins += env.step(8).reward > 0
    assert abs(wins / 4000 - 0.8) < 0.03


def test_av_cost_examples():
    env = AutonomousVehicle()
    env.reset(0)
    # from 0,0 "up" is a lane; "right" is a main road
    assert env.step(0, category=2).reward == -8
    env.reset(0)
    env.step(0, category=0)  # to 0,1
    assert env.step(3, category=0).reward == -1  # highway 0,1 -> 1,1, small cost


def test_av_goal_and_blocked_moves():
    env = AutonomousVehicle()
    env.reset(0)
    tr = env.step(2)  # left of the start: no road
    assert tr.reward == -1 and env.pos == (0, 0)
    env.reset(0)
    trs = run_actions(env, [3, 3, 3, 0, 0, 0], category=1)  # main roads along the bottom and right
    assert [t.reward for t in trs] == [-4, -4, -4, -4, -4, 80 - 4]
    assert trs[-1].terminated


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.lists(st.integers(0, 3), min_size=40, max_size=40))
def test_av_rewards_in_support(seed, actions):
    support = {-c for costs in ROAD_COSTS.values() for c in costs} | {-1.0}
    goal_support = {80 - c for costs in ROAD_COSTS.values() for c in costs}
    env = AutonomousVehicle()
    trs = run_actions(env, actions, seed)
    for t in trs[:-1]:
        assert t.reward in support
    assert trs[-1].reward in (goal_support if trs[-1].terminated else support)
    assert len(trs) <= 32
    assert trs[-1].terminated or trs[-1].truncated
    assert trs[-1].truncated == (len(trs) == 32 and not trs[-1].terminated)


def test_av_cost_frequencies():
    env = AutonomousVehicle()
    counts = np.zeros(3)
    for s in range(6000):
        env.reset([1, s])
        r = -env.step(3).reward  # main road: 2, 4, 13
        counts[(2.0, 4.0, 13.0).index(r)] += 1
    np.testing.assert_allclose(counts / counts.sum(), COST_PROBS, atol=0.025)


def test_road_graph_parse_errors():
    with pytest.raises(ValueError):
        RoadGraph.parse("start 0,0\ngoal 1,0\n0,0 1,0 dirt\n")
    with pytest.raises(ValueError):
        RoadGraph.parse("start 0,0\ngoal 2,0\n0,0 2,0 lane\n")
    with pytest.raises(ValueError):
        RoadGraph.parse("0,0 1,0 lane\n")


def test_maze_layout_path_lengths():
    for name in ("maze_discrete", "maze_continuous"):
        lay = MazeLayout.load(name)
        assert len(lay.shortest_path()) - 1 == 6
        assert len(lay.shortest_path(avoid_guard=True)) - 1 == 14


def test_maze_layout_parse_errors():
    with pytest.raises(ValueError):
        MazeLayout.parse("#S#\n#G\n")
    with pytest.raises(ValueError):
        MazeLayout.parse("#S.#\n#..#\n")
    with pytest.raises(ValueError):
        MazeLayout.parse("#S?G#\n")


def test_discrete_maze_reset():
    env = make_env("maze_discrete")
    obs = env.reset(0)
    base = env.env
    assert base.pos == base.layout.start
    assert obs[-1] == 0.0 and env.observation().running_return == 0.0


def test_discrete_maze_paths():
    env = DiscreteGuardedMaze()
    lay = env.layout
    safe = lay.actions_along(lay.shortest_path(avoid_guard=True))
    trs = run_actions(env, safe)
    assert sum(t.reward for t in trs) == -4 and trs[-1].terminated
    short = lay.actions_along(lay.shortest_path())
    trs = run_actions(env, short, guard_draw=0.0)
    assert sum(t.reward for t in trs) == 10 - 6
    trs = run_actions(env, short, guard_draw=1.0)
    assert sum(t.reward for t in trs) == 4 - 30


def test_discrete_maze_wall_bump():
    env = DiscreteGuardedMaze()
    env.reset(0)
    start = env.pos
    down = MOVES.index((1, 0))  # start sits on the bottom free row
    tr = env.step(down)
    assert env.pos == start and tr.reward == -1


def test_discrete_maze_truncates():
    env = DiscreteGuardedMaze()
    trs = run_actions(env, [1] * 200)
    assert len(trs) == 100 and trs[-1].truncated and not trs[-1].terminated
    assert sum(t.reward for t in trs) == -100


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.lists(st.integers(0, 3), min_size=100, max_size=100))
def test_discrete_maze_guard_free_return(seed, actions):
    env = DiscreteGuardedMaze()
    env.reset(seed)
    total, steps, guarded = 0.0, 0, False
    for a in actions:
        tr = env.step(a)
        total += tr.reward
        steps += 1
        guarded |= env.pos in env.layout.guards
        if tr.terminated or tr.truncated:
            break
    if tr.terminated and not guarded:
        assert total == 10 - steps
    assert steps <= 100


def test_continuous_maze_no_guard_return():
    env = ContinuousGuardedMaze(noise_std=0.0)
    lay = env.layout
    safe = lay.actions_along(lay.shortest_path(avoid_guard=True))
    trs = run_actions(env, safe, seed=1)
    assert trs[-1].terminated
    assert sum(t.reward for t in trs) == 16 - len(trs)


def test_continuous_maze_guard_crossing():
    env = ContinuousGuardedMaze(noise_std=0.0)
    short = env.layout.actions_along(env.layout.shortest_path())
    for s in range(200):
        env.reset(s)
        if env.guard_present:
            break
    assert env.guard_present
    total = 0.0
    for a in short:
        tr = env.step(a)
        total += tr.reward
    assert tr.terminated
    assert total < 16 - len(short)


def test_continuous_maze_never_reaching_goal():
    env = ContinuousGuardedMaze()
    trs = run_actions(env, [1] * 400, seed=2)
    assert len(trs) == 161 and trs[-1].truncated
    assert sum(t.reward for t in trs) == -161


def test_continuous_maze_stays_out_of_walls():
    env = ContinuousGuardedMaze(noise_std=0.3)
    rng = np.random.default_rng(0)
    env.reset(0)
    for _ in range(161):
        tr = env.step(int(rng.integers(4)))
        assert not env.layout.is_wall(env.cell())
        if tr.terminated or tr.truncated:
            break


def test_continuous_guard_cost_mean():
    env = ContinuousGuardedMaze()
    env.reset(123)
    draws = env.rng.exponential(env.GUARD_MEAN, 100_000)
    assert abs(draws.mean() - 32) < 1


def test_continuous_guard_presence_rate():
    env = ContinuousGuardedMaze()
    present = 0
    for s in range(5000):
        env.reset([5, s])
        present += env.guard_present
    assert abs(present / 5000 - 0.2) < 0.02


def test_augment_running_return():
    env = make_env("maze_discrete")
    env.reset(0)
    env.step(1)
    tr = env.step(1)
    assert env.observation().running_return == -2
    assert tr.next_observation[-1] == -2 / 32
    bet = make_env("betting")
    bet.reset(0)
    tr = bet.step(8, win=True)
    assert bet.observation().running_return == 16 and tr.next_observation[-1] == 1.0
    assert bet.observation().vector.tolist() == tr.next_observation.tolist()


@pytest.mark.parametrize("name", ALL_ENVS)
def test_seeded_determinism(name):
    runs = []
    for _ in range(2):
        env = make_env(name)
        rng = np.random.default_rng(4)
        obs = [env.reset(17)]
        for _ in range(60):
            tr = env.step(int(rng.integers(env.spec.action_count)))
            obs.append((tr.next_observation, tr.reward))
            if tr.terminated or tr.truncated:
                break
        runs.append(obs)
    assert len(runs[0]) == len(runs[1])
    for a, b in zip(runs[0][1:], runs[1][1:]):
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]


@pytest.mark.parametrize("name", ALL_ENVS)
def test_step_after_done_raises(name):
    env = make_env(name)
    env.reset(0)
    tr = None
    for _ in range(500):
        tr = env.step(0)
        if tr.terminated or tr.truncated:
            break
    assert tr.terminated != tr.truncated or tr.terminated
    with pytest.raises(RuntimeError):
        env.step(0)


def test_unknown_env():
    with pytest.raises(ValueError):
        make_env("lunar_lander")
