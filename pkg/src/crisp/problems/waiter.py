"""Waiter: pull a long plate off a table with a pusher pressing from below.

The pusher (``x2``) sits under the overhanging part of the plate
(``x1`` is the plate's centre). It controls its thrust ``u`` and the
normal force ``lamN``; friction at the plate/table and pusher/plate
interfaces is modelled like the transport problem.
"""

from __future__ import annotations

import numpy as np

from ..nlp import ProblemBuilder, VariableLayout
from .common import check_names, knots, load_spec, product_mode, tracking_objective

NAMES = ("x1", "x2", "x1dot", "x2dot", "z", "w", "p", "q", "lamN", "u", "fp", "ft", "N")
STATE = ("x1", "x2", "x1dot", "x2dot")
POSITIVE = ("m1", "m2", "mu1", "mu2", "g", "l0")
SUCCESS = {"translation": ("x1", "x2"), "velocity": ("x1dot", "x2dot")}


def rollout(spec):
    """No thrust and no normal force: the plate rests on the table.

    Only meaningful from rest; moving initial states keep their velocity
    with friction ignored, which still satisfies the dynamics rows.
    """
    p, dt, N = spec.params, spec.dt, spec.horizon
    col = {n: j for j, n in enumerate(NAMES)}
    traj = np.zeros((N, len(NAMES)))
    for name in STATE:
        traj[0, col[name]] = spec.initial_state.get(name, 0.0)
    for k in range(1, N):
        traj[k] = traj[k - 1]
        traj[k, col["x1"]] += dt * traj[k, col["x1dot"]]
        traj[k, col["x2"]] += dt * traj[k, col["x2dot"]]
    v1, v2 = traj[:, col["x1dot"]], traj[:, col["x2dot"]]
    traj[:, col["z"]], traj[:, col["w"]] = np.maximum(v1, 0), np.maximum(-v1, 0)
    traj[:, col["p"]], traj[:, col["q"]] = np.maximum(v2 - v1, 0), np.maximum(v1 - v2, 0)
    traj[:, col["N"]] = p["m1"] * p["g"]
    return traj.reshape(-1)


def waiter(spec=None, complementarity_mode="equality"):
    spec = spec or load_spec("waiter", positive=POSITIVE)
    spec = spec.replace(positive=POSITIVE)
    layout = VariableLayout(NAMES, spec.horizon, spec.dt,
                            {"state": STATE, "slack": ("z", "w", "p", "q"),
                             "control": ("lamN", "u"), "force": ("fp", "ft", "N")})
    check_names(layout, spec)
    p, dt = spec.params, spec.dt
    b = ProblemBuilder(layout=layout, name="waiter",
                       complementarity_mode=product_mode(complementarity_mode))
    all_k, cur, nxt = knots(layout)
    v = b.var
    weight = p["m1"] * p["g"]

    b.add_eq(v("x2dot", nxt) - v("x2dot", cur) - (v("u", cur) - v("fp", cur)) * (dt / p["m2"]),
             "x2dot", tags=cur)
    b.add_eq(v("x1dot", nxt) - v("x1dot", cur) - (v("fp", cur) - v("ft", cur)) * (dt / p["m1"]),
             "x1dot", tags=cur)
    b.add_eq(v("x1", nxt) - v("x1", cur) - v("x1dot", nxt) * dt, "x1", tags=cur)
    b.add_eq(v("x2", nxt) - v("x2", cur) - v("x2dot", nxt) * dt, "x2", tags=cur)
    for name in STATE:
        b.add_eq(v(name, [0]) - spec.initial_state.get(name, 0.0), name, kind="initial", tags=[0])

    b.add_eq(v("N") + v("lamN") - weight, "vertical_balance", kind="contact", tags=all_k)
    b.add_eq(v("x1dot") - v("z") + v("w"), "plate_slip", kind="contact", tags=all_k)
    b.add_eq(v("x2dot") - v("x1dot") - v("p") + v("q"), "pusher_slip", kind="contact", tags=all_k)

    arm = v("x2") - v("x1") + p["l0"]
    b.add_ineq(weight * p["l0"] - v("lamN") * arm, "no_tip", tags=all_k)
    b.add_ineq(v("N"), "N_min", tags=all_k)
    b.add_ineq(v("lamN"), "lamN_min", tags=all_k)
    b.add_ineq(v("x2"), "clear_of_table", tags=all_k)
    b.add_ineq(p["l0"] - v("x2") + v("x1"), "under_plate", tags=all_k)

    for name in ("z", "w", "p", "q"):
        b.register(name, v(name), tags=all_k)
    b.register("table_pos", v("N") * p["mu1"] - v("ft"), tags=all_k)
    b.register("table_neg", v("N") * p["mu1"] + v("ft"), tags=all_k)
    b.register("pusher_pos", v("lamN") * p["mu2"] - v("fp"), tags=all_k)
    b.register("pusher_neg", v("lamN") * p["mu2"] + v("fp"), tags=all_k)
    b.complementarity("z", "w")
    b.complementarity("p", "q")
    b.complementarity("z", "table_pos")
    b.complementarity("w", "table_neg")
    b.complementarity("p", "pusher_pos")
    b.complementarity("q", "pusher_neg")

    b.objective = tracking_objective(layout, spec)
    b.meta.update(spec=spec, rollout=lambda: rollout(spec), success=SUCCESS)
    return b.build()
