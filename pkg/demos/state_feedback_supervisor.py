"""What a supervisor *could* do: a hand-wired proportional law versus PPO's bias.

A weak-gain cascade is pushed out of the 0.6 m arrival radius by a 5 N
wind.  A supervisor that offsets the reference against the position error
acts like extra proportional stiffness and so helps for every wind
heading.  The network below is wired by hand to compute

    action = tanh(-K * normalised position)

(a saturated P-law) and is compared with PID alone.  A PPO supervisor
trained under a single wind tends to learn a constant upwind bias instead,
which is why it does not carry over to a new heading.

    python demos/state_feedback_supervisor.py [K]
"""

import sys

import numpy as np

from octorl.analysis import Controller, across_heading_std, flight_rewards, heading_sweep
from octorl.config import bundled_config
from octorl.dynamics import WindField
from octorl.ppo import PolicyParameters
from octorl.trajectory import bundled_path, decompose

K = float(sys.argv[1]) if len(sys.argv) > 1 else 4.0
cfg = bundled_config("supervised")
square = decompose(bundled_path("square"), cfg.episode.bounding_box, "square")


def p_law(k, hidden, eps=1e-3):
    # tiny first-layer weights keep both tanh layers linear; the head undoes the scale
    p = PolicyParameters.zeros(hidden)
    for i in range(3):
        p.weights["pi_w1"][i, i] = eps
        p.weights["pi_w2"][i, i] = 1.0
        p.weights["pi_w3"][i, i] = -k / eps
    return p


ctrls = [Controller("pid_only", cfg.gains), Controller(f"p_law K={K:g}", cfg.gains, p_law(K, cfg.rl.hidden))]
# offset per unit action is scaling_factor * box, so K maps normalised error to metres
print(f"reference offset gain: {K * cfg.episode.scaling_factor:.2f} m per metre of error")

# %% two winds 90 degrees apart, plus calm air
for c in ctrls:
    for label, w in (("5@90", WindField.from_heading(5, 90)), ("5@0", WindField.from_heading(5, 0)),
                     ("calm", WindField())):
        s = flight_rewards(c, square, w, range(10), cfg.episode, cfg.params)
        r = np.array([x["total_reward"] for x in s])
        seg = [x["segments_reached"] for x in s]
        print(f"{c.name:>12} {label:>5}: mean reward {r.mean():7.1f}  segments {seg}")

# %% spread over the eight headings
for c in ctrls:
    rows = heading_sweep(c, square, 5.0, range(3), config=cfg.episode, params=cfg.params)
    print(f"{c.name:>12}: per-heading means {[round(r['mean_reward']) for r in rows]}, "
          f"std {across_heading_std(rows):.1f}")
