"""Payload transport: a cart drags a block through Coulomb friction.

The block (mass ``m1``) sits on the cart (mass ``m2``); only the cart is
actuated. The sign of the friction force ``f`` follows the relative
velocity ``xdot2 - xdot1 = p - q`` through three complementarity pairs.
"""

from __future__ import annotations

import numpy as np

from ..nlp import ProblemBuilder, VariableLayout
from .common import check_names, knots, load_spec, product_mode, tracking_objective

NAMES = ("x1", "x2", "x1dot", "x2dot", "p", "q", "f", "u")
STATE = ("x1", "x2", "x1dot", "x2dot")
POSITIVE = ("m1", "m2", "mu1", "g", "l0")
SUCCESS = {"translation": ("x1", "x2"), "velocity": ("x1dot", "x2dot")}


def _friction_step(p, rel, u, dt):
    """Friction that stops the relative motion if it can, else saturates."""
    cap = p["mu1"] * p["m1"] * p["g"]
    inv = 1.0 / p["m1"] + 1.0 / p["m2"]
    # force that would make the next relative velocity exactly zero
    f_stick = (rel + dt * u / p["m2"]) / (dt * inv)
    return float(np.clip(f_stick, -cap, cap))


def rollout(spec):
    """Zero cart force; friction is resolved step by step."""
    p, dt, N = spec.params, spec.dt, spec.horizon
    traj = np.zeros((N, len(NAMES)))
    traj[0, :4] = [spec.initial_state.get(n, 0.0) for n in STATE]
    for k in range(N):
        x1, x2, v1, v2 = traj[k, :4]
        rel = v2 - v1
        traj[k, 4:6] = max(rel, 0.0), max(-rel, 0.0)
        if k == N - 1:
            break
        f = _friction_step(p, rel, 0.0, dt)
        traj[k, 6] = f
        v1n = v1 + dt * f / p["m1"]
        v2n = v2 - dt * f / p["m2"]
        traj[k + 1, :4] = x1 + dt * v1n, x2 + dt * v2n, v1n, v2n
    return traj.reshape(-1)


def transport(spec=None, complementarity_mode="equality"):
    spec = spec or load_spec("transport", positive=POSITIVE)
    spec = spec.replace(positive=POSITIVE)
    layout = VariableLayout(NAMES, spec.horizon, spec.dt,
                            {"state": STATE, "slack": ("p", "q"), "force": ("f",), "control": ("u",)})
    check_names(layout, spec)
    p, dt = spec.params, spec.dt
    b = ProblemBuilder(layout=layout, name="transport",
                       complementarity_mode=product_mode(complementarity_mode))
    all_k, cur, nxt = knots(layout)
    v = b.var

    b.add_eq(v("x1dot", nxt) - v("x1dot", cur) - v("f", cur) * (dt / p["m1"]), "x1dot", tags=cur)
    b.add_eq(v("x2dot", nxt) - v("x2dot", cur) - (v("u", cur) - v("f", cur)) * (dt / p["m2"]),
             "x2dot", tags=cur)
    b.add_eq(v("x1", nxt) - v("x1", cur) - v("x1dot", nxt) * dt, "x1", tags=cur)
    b.add_eq(v("x2", nxt) - v("x2", cur) - v("x2dot", nxt) * dt, "x2", tags=cur)
    for name in STATE:
        b.add_eq(v(name, [0]) - spec.initial_state.get(name, 0.0), name, kind="initial", tags=[0])

    b.add_eq(v("x2dot") - v("x1dot") - v("p") + v("q"), "slip", kind="contact", tags=all_k)
    offset = v("x1") - v("x2")
    b.add_ineq(offset + p["l0"], "on_cart_left", tags=all_k)
    b.add_ineq(p["l0"] - offset, "on_cart_right", tags=all_k)

    cap = p["mu1"] * p["m1"] * p["g"]
    b.register("p", v("p"), tags=all_k)
    b.register("q", v("q"), tags=all_k)
    b.register("cap_pos", cap - v("f"), tags=all_k)
    b.register("cap_neg", v("f") + cap, tags=all_k)
    b.complementarity("p", "q")
    b.complementarity("p", "cap_pos")
    b.complementarity("q", "cap_neg")

    b.objective = tracking_objective(layout, spec)
    b.meta.update(spec=spec, rollout=lambda: rollout(spec), success=SUCCESS)
    return b.build()
