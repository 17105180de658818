"""Quasi-static planar pushing: a rectangular box and a T-shaped block.

Both use the ellipsoidal limit-surface model: the body twist is the
body-frame pusher force divided by ``mu m g`` (and by ``c r mu m g`` for
the rotation). Each contact face owns one signed normal-force variable
that can only be nonzero while the contact point lies on that face.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ..expr import cos, sin
from ..nlp import ProblemBuilder, VariableLayout
from .common import check_names, knots, load_spec, product_mode, tracking_objective

POSE = ("px", "py", "theta")
SUCCESS = {"translation": ("px", "py"), "angle": ("theta",)}

BOX_NAMES = POSE + ("cx", "cy", "lam1y", "lam2x", "lam3y", "lam4x")
BOX_POSITIVE = ("a", "b", "mu", "m", "g", "c", "r")

T_FORCES = tuple(f"lam{i}" for i in range(1, 9))
T_SLACKS = tuple(f"{s}{i}" for i in range(1, 9) for s in ("v", "w"))
T_NAMES = POSE + ("cx", "cy") + T_FORCES + T_SLACKS
T_POSITIVE = ("l", "d_c", "mu", "m", "g", "c", "r")
# sign that makes each face force nonnegative; faces 2, 4, 6, 8 carry x forces
T_SIGNS = (-1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0)


def _quasi_static_rows(b, p, dt, fx, fy):
    """Explicit-Euler pose update driven by body-frame force sums at each knot."""
    _, cur, nxt = knots(b.layout)
    v = b.var
    th = v("theta", cur)
    s, c = sin(th), cos(th)
    scale = 1.0 / (p["mu"] * p["m"] * p["g"])
    vx = (fx * c - fy * s) * scale
    vy = (fx * s + fy * c) * scale
    om = (fy * v("cx", cur) - fx * v("cy", cur)) * (scale / (p["c"] * p["r"]))
    b.add_eq(v("px", nxt) - v("px", cur) - vx * dt, "px", tags=cur)
    b.add_eq(v("py", nxt) - v("py", cur) - vy * dt, "py", tags=cur)
    b.add_eq(v("theta", nxt) - v("theta", cur) - om * dt, "theta", tags=cur)


def _initial_rows(b, spec):
    for name in POSE:
        b.add_eq(b.var(name, [0]) - spec.initial_state.get(name, 0.0), name, kind="initial", tags=[0])


def _rest_rollout(spec, names):
    """Zero forces: the object stays at its initial pose."""
    traj = np.zeros((spec.horizon, len(names)))
    for j, name in enumerate(names):
        traj[:, j] = spec.initial_state.get(name, 0.0)
    return traj.reshape(-1)


def push_box(spec=None, complementarity_mode="equality"):
    spec = spec or load_spec("push_box", positive=BOX_POSITIVE)
    spec = spec.replace(positive=BOX_POSITIVE)
    layout = VariableLayout(BOX_NAMES, spec.horizon, spec.dt,
                            {"state": POSE, "contact": ("cx", "cy"), "force": BOX_NAMES[5:]})
    check_names(layout, spec)
    p = spec.params
    b = ProblemBuilder(layout=layout, name="push_box",
                       complementarity_mode=product_mode(complementarity_mode))
    all_k, cur, _ = knots(layout)
    v = b.var

    fx = v("lam2x", cur) + v("lam4x", cur)
    fy = v("lam1y", cur) + v("lam3y", cur)
    _quasi_static_rows(b, p, spec.dt, fx, fy)
    _initial_rows(b, spec)

    # faces: bottom (y=-b), left (x=-a), top (y=b), right (x=a)
    forces = {"lam1y": v("lam1y"), "lam2x": v("lam2x"), "-lam3y": -v("lam3y"), "-lam4x": -v("lam4x")}
    gaps = {"cy+b": v("cy") + p["b"], "cx+a": v("cx") + p["a"],
            "b-cy": p["b"] - v("cy"), "a-cx": p["a"] - v("cx")}
    for name, expr in {**forces, **gaps}.items():
        b.register(name, expr, tags=all_k)
    for force, gap in zip(forces, gaps):
        b.complementarity(force, gap)
    for f1, f2 in itertools.combinations(forces, 2):
        b.complementarity(f1, f2)

    b.objective = tracking_objective(layout, spec)
    b.meta.update(spec=spec, rollout=lambda: _rest_rollout(spec, BOX_NAMES), success=SUCCESS,
                  angle_names=("theta",))
    return b.build()


def t_geometry(p):
    """Reference levels of the T outline in the body frame (origin at the COM)."""
    l, d = p["l"], p["d_c"]
    return {
        "x_right": 2 * l, "x_left": -2 * l, "x_stem_r": 0.5 * l, "x_stem_l": -0.5 * l,
        "y_top": (4 - d) * l, "y_bar": (3 - d) * l, "y_bottom": -d * l,
    }


def push_t(spec=None, complementarity_mode="equality"):
    spec = spec or load_spec("push_t", positive=T_POSITIVE)
    spec = spec.replace(positive=T_POSITIVE)
    layout = VariableLayout(T_NAMES, spec.horizon, spec.dt,
                            {"state": POSE, "contact": ("cx", "cy"), "force": T_FORCES,
                             "slack": T_SLACKS})
    check_names(layout, spec)
    p = spec.params
    l = p["l"]
    geo = t_geometry(p)
    b = ProblemBuilder(layout=layout, name="push_t",
                       complementarity_mode=product_mode(complementarity_mode))
    all_k, cur, _ = knots(layout)
    v = b.var

    fx = v("lam2", cur) + v("lam4", cur) + v("lam6", cur) + v("lam8", cur)
    fy = v("lam1", cur) + v("lam3", cur) + v("lam5", cur) + v("lam7", cur)
    _quasi_static_rows(b, p, spec.dt, fx, fy)
    _initial_rows(b, spec)

    cx, cy = v("cx"), v("cy")
    b.add_ineq(cx - geo["x_left"], "cx_min", tags=all_k)
    b.add_ineq(geo["x_right"] - cx, "cx_max", tags=all_k)
    b.add_ineq(cy - geo["y_bottom"], "cy_min", tags=all_k)
    b.add_ineq(geo["y_top"] - cy, "cy_max", tags=all_k)

    # v_i - w_i splits each distance into positive and negative parts
    offsets = [cx - geo["x_right"], cy - geo["y_top"], cy - geo["y_bar"], cx - geo["x_stem_r"],
               cy - geo["y_bottom"], cx - geo["x_stem_l"], cx - geo["x_left"]]
    dist = []
    for i, off in enumerate(offsets, start=1):
        b.add_eq(v(f"v{i}") - v(f"w{i}") - off, f"abs{i}", kind="contact", tags=all_k)
        b.register(f"v{i}", v(f"v{i}"), tags=all_k)
        b.register(f"w{i}", v(f"w{i}"), tags=all_k)
        b.complementarity(f"v{i}", f"w{i}")
        dist.append(v(f"v{i}") + v(f"w{i}"))

    d1, d2, d3, d4, d5, d6, d7 = dist
    on_face = [
        geo["y_top"] - cy,
        d1 + d2 + d3 - l,
        d1 + d3 + d4 - 1.5 * l,
        d3 + d4 + d5 - 3 * l,
        d4 + d5 + d6 - l,
        d3 + d5 + d6 - 3 * l,
        d3 + d6 + d7 - 1.5 * l,
        d2 + d3 + d7 - l,
    ]
    signed = []
    for i, (sign, face) in enumerate(zip(T_SIGNS, on_face), start=1):
        force = v(f"lam{i}") * sign
        fname = f"{'-' if sign < 0 else ''}lam{i}"
        b.register(fname, force, tags=all_k)
        b.register(f"face{i}", face, tags=all_k)
        b.complementarity(fname, f"face{i}")
        signed.append(fname)
    for f1, f2 in itertools.combinations(signed, 2):
        b.complementarity(f1, f2)

    b.objective = tracking_objective(layout, spec)
    b.meta.update(spec=spec, rollout=lambda: _rest_rollout(spec, T_NAMES), success=SUCCESS,
                  angle_names=("theta",))
    return b.build()


def circle_targets(radius=3.0, count=8):
    """Evenly spaced goal positions on a circle around the origin."""
    return [(radius * math.cos(2 * math.pi * k / count), radius * math.sin(2 * math.pi * k / count))
            for k in range(count)]
