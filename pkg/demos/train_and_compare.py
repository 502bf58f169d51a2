"""Train a supervisor in a 5 N crosswind and set it against PID alone.

Uses the bundled ``supervised`` configuration (low-stiffness gains plus
the supervisor hyperparameters).  Training takes a few minutes on one core.

    python demos/train_and_compare.py [episodes]
"""

import sys
from pathlib import Path

import numpy as np

from octorl.analysis import Controller, flight_rewards
from octorl.config import bundled_config
from octorl.dynamics import WindField
from octorl.env import NavigationEnv
from octorl.plotting import plot_curve, plot_flight
from octorl.ppo import save_checkpoint, train
from octorl.trajectory import FLIGHT_LOG_COLUMNS, RL_SUPERVISED, bundled_path, decompose, flight_log, fly

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 300
out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

cfg = bundled_config("supervised")
wind = WindField.from_heading(5, 90)
square = decompose(bundled_path("square"), cfg.episode.bounding_box, "square")

# %% training
res = train(lambda: NavigationEnv(cfg.episode, cfg.gains, cfg.params, wind), cfg.rl,
            episodes=episodes, seed=0,
            progress=lambda r: print(f"update {r['update']:3d}  episodes {r['episodes']:4d}  "
                                     f"mean reward {r['mean_episode_reward']:8.1f}"))
(out / "supervisor_5at90.ckpt").write_bytes(save_checkpoint(res.params))
(out / "curve.csv").write_text(res.curve_csv())
header = res.curve_csv().splitlines()[0].split(",")
rows = np.array([[float(v) for v in ln.split(",")] for ln in res.curve_csv().splitlines()[1:]])
(out / "curve.svg").write_bytes(plot_curve(header, rows, title="training, 5 N @ 90"))

# %% the square under the training wind and under a wind from a new heading
rl = Controller("rl_supervised", cfg.gains, res.params)
pid = Controller("pid_only", cfg.gains)
for label, w in (("5@90 (training)", wind), ("5@0 (novel)", WindField.from_heading(5, 0))):
    for c in (pid, rl):
        s = flight_rewards(c, square, w, range(10), cfg.episode, cfg.params)
        r = np.array([x["total_reward"] for x in s])
        print(f"{label:>16} {c.name:>14}: reward {r.mean():7.1f} +- {r.std():6.1f}  "
              f"segments {[x['segments_reached'] for x in s]}")

flight = fly(square, RL_SUPERVISED, cfg.gains, res.params, wind, cfg.episode, seed=0, params=cfg.params)
(out / "square_rl_5at90.svg").write_bytes(
    plot_flight(list(FLIGHT_LOG_COLUMNS), flight_log(flight), "square, supervised, 5 N @ 90"))

# %% what the supervisor learned: its offset near the waypoint barely depends on position
from octorl.ppo import act  # noqa: E402

scale = cfg.episode.scaling_factor * cfg.episode.bounding_box
for xy in [(0, 0), (2, 0), (0, 2), (-2, 0), (0, -2)]:
    o = np.zeros(12)
    o[:2] = np.array(xy) / cfg.episode.bounding_box
    print(f"position {xy}: reference offset {np.round(act(res.params, o) * scale, 2)} m")
