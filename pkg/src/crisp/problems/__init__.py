"""Problem registry used by the command line and the benchmark suites."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from . import cartpole, hopper, pushing, transport, waiter
from .common import (GuessMode, Trajectory, TrajectoryProblemSpec, decode_trajectory,
                     encode_trajectory, initial_guess, load_spec)
from .toys import cq_fail_stationary_x1, cq_fail_toy, toy_mpcc


@dataclass(frozen=True)
class ProblemEntry:
    builder: Callable
    positive: tuple = ()
    trajectory: bool = True


REGISTRY = {
    "toy_mpcc": ProblemEntry(lambda spec=None, complementarity_mode="equality":
                             toy_mpcc(complementarity_mode), trajectory=False),
    "cq_fail_toy": ProblemEntry(lambda spec=None, complementarity_mode="equality": cq_fail_toy(),
                                trajectory=False),
    "cartpole_softwalls": ProblemEntry(cartpole.cartpole_softwalls, cartpole.POSITIVE),
    "push_box": ProblemEntry(pushing.push_box, pushing.BOX_POSITIVE),
    "push_t": ProblemEntry(pushing.push_t, pushing.T_POSITIVE),
    "transport": ProblemEntry(transport.transport, transport.POSITIVE),
    "hopper": ProblemEntry(hopper.hopper, hopper.POSITIVE),
    "waiter": ProblemEntry(waiter.waiter, waiter.POSITIVE),
}


def problem_names():
    return sorted(REGISTRY)


def problem_spec(name, params_path=None, scenario="default", horizon=None):
    """Load (and optionally specialise) the parameter spec of a trajectory problem."""
    entry = _entry(name)
    if not entry.trajectory:
        return None
    spec = load_spec(name, params_path, entry.positive).with_scenario(scenario)
    if horizon is not None:
        spec = spec.replace(horizon=int(horizon))
    return spec


def build_problem(name, params_path=None, scenario="default", complementarity_mode="equality",
                  horizon=None):
    entry = _entry(name)
    spec = problem_spec(name, params_path, scenario, horizon)
    return entry.builder(spec, complementarity_mode=complementarity_mode)


def _entry(name):
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(problem_names())}") from None


__all__ = [
    "REGISTRY", "ProblemEntry", "build_problem", "problem_names", "problem_spec",
    "GuessMode", "Trajectory", "TrajectoryProblemSpec", "decode_trajectory", "encode_trajectory",
    "initial_guess", "load_spec", "toy_mpcc", "cq_fail_toy", "cq_fail_stationary_x1",
]
