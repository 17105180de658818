"""Cart-pole between two compliant walls.

The pole angle is measured from upright. Each wall pushes on the pole tip
with a force proportional to its penetration, encoded as a
complementarity pair between the force and the (force-shifted) gap.
"""

from __future__ import annotations

import math

import numpy as np

from ..expr import cos, sin
from ..nlp import ProblemBuilder, VariableLayout
from .common import check_names, knots, load_spec, product_mode, tracking_objective

NAMES = ("x", "theta", "xdot", "thetadot", "u", "lam1", "lam2")
STATE = ("x", "theta", "xdot", "thetadot")
POSITIVE = ("mc", "mp", "l", "k1", "k2", "d1", "d2", "g")
SUCCESS = {"translation": ("x",), "velocity": ("xdot",), "angle": ("theta",),
           "angular_velocity": ("thetadot",)}


def accelerations(p, theta, u, lam1, lam2, sin_, cos_):
    """Cart and pole accelerations; works on floats and expressions alike."""
    s, c = sin_(theta), cos_(theta)
    f_cart = u - lam1 + lam2
    f_pole = (lam2 - lam1) * c + (p["mp"] * p["g"]) * s
    den = p["mc"] + p["mp"] * (s * s)
    xdd = (f_cart - c * f_pole) / den
    tdd = ((p["mc"] + p["mp"]) * f_pole - p["mp"] * (c * f_cart)) / (den * (p["mp"] * p["l"]))
    return xdd, tdd


def wall_forces(p, x, theta):
    """Spring forces at zero control; these satisfy both wall pairs exactly."""
    tip = x + p["l"] * math.sin(theta)
    return p["k1"] * max(0.0, tip - p["d1"]), p["k2"] * max(0.0, -tip - p["d2"])


def rollout(spec):
    """Zero-control simulation, walls included."""
    p, dt, N = spec.params, spec.dt, spec.horizon
    fs = p.get("force_scale", 1.0)
    traj = np.zeros((N, len(NAMES)))
    state = np.array([spec.initial_state.get(n, 0.0) for n in STATE])
    traj[0, :4] = state
    for k in range(N - 1):
        x, th, xd, thd = traj[k, :4]
        lam1, lam2 = wall_forces(p, x, th)
        traj[k, 5:7] = lam1 / fs, lam2 / fs
        xdd, tdd = accelerations(p, th, 0.0, lam1, lam2, math.sin, math.cos)
        xd1 = xd + xdd * dt
        thd1 = thd + tdd * dt
        traj[k + 1, :4] = (x + xd1 * dt, th + thd1 * dt, xd1, thd1)
    traj[-1, 5:7] = np.array(wall_forces(p, *traj[-1, :2])) / fs
    return traj.reshape(-1)


def cartpole_softwalls(spec=None, complementarity_mode="equality"):
    spec = spec or load_spec("cartpole_softwalls", positive=POSITIVE)
    spec = spec.replace(positive=POSITIVE)
    layout = VariableLayout(NAMES, spec.horizon, spec.dt,
                            {"state": STATE, "control": ("u",), "force": ("lam1", "lam2")})
    check_names(layout, spec)
    p, dt = spec.params, spec.dt
    b = ProblemBuilder(layout=layout, name="cartpole_softwalls",
                       complementarity_mode=product_mode(complementarity_mode))
    all_k, cur, nxt = knots(layout)
    v = b.var

    fs = p.get("force_scale", 1.0)
    xdd, tdd = accelerations(p, v("theta", cur), v("u", cur) * fs, v("lam1", cur) * fs,
                             v("lam2", cur) * fs, sin, cos)
    # semi-implicit Euler: velocities first, positions from the new velocities
    b.add_eq(v("x", nxt) - v("x", cur) - v("xdot", nxt) * dt, "x", tags=cur)
    b.add_eq(v("theta", nxt) - v("theta", cur) - v("thetadot", nxt) * dt, "theta", tags=cur)
    b.add_eq(v("xdot", nxt) - v("xdot", cur) - xdd * dt, "xdot", tags=cur)
    b.add_eq(v("thetadot", nxt) - v("thetadot", cur) - tdd * dt, "thetadot", tags=cur)
    for name in STATE:
        b.add_eq(v(name, [0]) - spec.initial_state.get(name, 0.0), name, kind="initial", tags=[0])

    tip = v("x") + sin(v("theta")) * p["l"]
    b.register("lam1", v("lam1"), tags=all_k)
    b.register("lam2", v("lam2"), tags=all_k)
    b.register("gap1", v("lam1") * (fs / p["k1"]) + p["d1"] - tip, tags=all_k)
    b.register("gap2", v("lam2") * (fs / p["k2"]) + p["d2"] + tip, tags=all_k)
    b.complementarity("lam1", "gap1")
    b.complementarity("lam2", "gap2")

    b.objective = tracking_objective(layout, spec)
    b.meta.update(spec=spec, rollout=lambda: rollout(spec), success=SUCCESS,
                  angle_names=("theta",))
    return b.build()
