"""Planar hopper: point mass on a massless telescoping leg.

Flight and stance are unified by complementarity between the leg
compression ``r``, the thrust ``u2`` and the foot height ``q_y``: the
leg can only compress or push while the foot is on the ground, and the
leg can only be swung (``u1``) while it is uncompressed.
"""

from __future__ import annotations

import numpy as np

from ..expr import cos, sin
from ..nlp import ProblemBuilder, VariableLayout
from .common import check_names, knots, load_spec, product_mode, tracking_objective

NAMES = ("px", "py", "qx", "qy", "theta", "r", "pxdot", "pydot", "u1", "u2")
INITIAL = ("px", "py", "theta", "pxdot", "pydot")
POSITIVE = ("m", "g", "l0", "r0")
SUCCESS = {"translation": ("px",), "velocity": ("pxdot", "pydot")}


def rollout(spec):
    """Free fall from the initial state with the leg held at its rest length."""
    p, dt, N = spec.params, spec.dt, spec.horizon
    col = {n: j for j, n in enumerate(NAMES)}
    traj = np.zeros((N, len(NAMES)))
    for name in INITIAL:
        traj[0, col[name]] = spec.initial_state.get(name, 0.0)
    for k in range(1, N):
        traj[k] = traj[k - 1]
        traj[k, col["pydot"]] -= dt * p["g"]
        traj[k, col["px"]] += dt * traj[k, col["pxdot"]]
        traj[k, col["py"]] += dt * traj[k, col["pydot"]]
    th = traj[:, col["theta"]]
    traj[:, col["qx"]] = traj[:, col["px"]] + p["l0"] * np.sin(th)
    traj[:, col["qy"]] = traj[:, col["py"]] - p["l0"] * np.cos(th)
    return traj.reshape(-1)


def hopper(spec=None, complementarity_mode="equality"):
    spec = spec or load_spec("hopper", positive=POSITIVE)
    spec = spec.replace(positive=POSITIVE)
    layout = VariableLayout(NAMES, spec.horizon, spec.dt,
                            {"state": NAMES[:8], "control": ("u1", "u2")})
    check_names(layout, spec)
    p, dt = spec.params, spec.dt
    fs = p.get("force_scale", 1.0)
    b = ProblemBuilder(layout=layout, name="hopper",
                       complementarity_mode=product_mode(complementarity_mode))
    all_k, cur, nxt = knots(layout)
    v = b.var

    th, r, u2 = v("theta", cur), v("r", cur), v("u2", cur) * fs
    b.add_eq(v("pxdot", nxt) - v("pxdot", cur) + sin(th) * u2 * (dt / p["m"]), "pxdot", tags=cur)
    b.add_eq(v("pydot", nxt) - v("pydot", cur) - cos(th) * u2 * (dt / p["m"]) + dt * p["g"],
             "pydot", tags=cur)
    b.add_eq(v("px", nxt) - v("px", cur) - v("pxdot", nxt) * dt, "px", tags=cur)
    b.add_eq(v("py", nxt) - v("py", cur) - v("pydot", nxt) * dt, "py", tags=cur)
    # foot stays put while the leg is compressed; leg swing only in flight
    b.add_eq(r * (v("qx", nxt) - v("qx", cur)), "foot_x", tags=cur)
    b.add_eq(r * (v("qy", nxt) - v("qy", cur)), "foot_y", tags=cur)
    b.add_eq(v("qy", cur) * (v("theta", nxt) - v("theta", cur) - v("u1", cur) * dt), "swing", tags=cur)

    leg = p["l0"] - v("r")
    b.add_eq(leg * cos(v("theta")) - v("py") + v("qy"), "leg_y", kind="kinematics", tags=all_k)
    b.add_eq(leg * sin(v("theta")) - v("qx") + v("px"), "leg_x", kind="kinematics", tags=all_k)
    dx, dy = v("px") - v("qx"), v("py") - v("qy")
    b.add_eq(v("r") * (leg.square() - dx.square() - dy.square()), "leg_length",
             kind="kinematics", tags=all_k)
    for name in INITIAL:
        b.add_eq(v(name, [0]) - spec.initial_state.get(name, 0.0), name, kind="initial", tags=[0])

    b.add_ineq(p["r0"] - v("r"), "r_max", tags=all_k)
    b.register("r", v("r"), tags=all_k)
    b.register("qy", v("qy"), tags=all_k)
    b.register("u2", v("u2"), tags=all_k)
    b.register("u1^2", v("u1").square(), tags=all_k)
    b.complementarity("r", "qy")
    b.complementarity("u2", "qy")
    b.complementarity("u1^2", "r")

    b.objective = tracking_objective(layout, spec)
    b.meta.update(spec=spec, rollout=lambda: rollout(spec), success=SUCCESS)
    return b.build()
