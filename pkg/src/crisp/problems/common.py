"""Shared machinery for trajectory problems: specs, costs, guesses, decoding."""

from __future__ import annotations

import copy
import enum
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import SpecError
from ..nlp import ProductMode, QuadraticObjective

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PARAMS_DIR = Path(__file__).parent / "params"


@dataclass
class TrajectoryProblemSpec:
    """Everything needed to instantiate one trajectory problem.

    ``terminal_weights`` and ``running_weights`` map variable names to
    diagonal cost weights: the former act on the last knot against
    ``target``, the latter on every knot against zero.
    """

    kind: str
    horizon: int
    dt: float
    params: dict
    initial_state: dict
    target: dict
    terminal_weights: dict
    running_weights: dict
    scenario: str = "default"
    scenarios: dict = field(default_factory=dict)
    positive: tuple = ()

    def validate(self):
        if not isinstance(self.horizon, int) or self.horizon < 2:
            raise SpecError(f"{self.kind}: horizon must be an integer >= 2, got {self.horizon!r}")
        if not (isinstance(self.dt, (int, float)) and self.dt > 0 and math.isfinite(self.dt)):
            raise SpecError(f"{self.kind}: dt must be positive, got {self.dt!r}")
        for table in ("params", "initial_state", "target", "terminal_weights", "running_weights"):
            for key, value in getattr(self, table).items():
                if not isinstance(value, (int, float)) or not math.isfinite(value):
                    raise SpecError(f"{self.kind}: {table}.{key} must be a finite number")
        for key in self.positive:
            if key not in self.params:
                raise SpecError(f"{self.kind}: missing parameter {key!r}")
            if self.params[key] <= 0:
                raise SpecError(f"{self.kind}: parameter {key!r} must be positive")
        for table in ("terminal_weights", "running_weights"):
            for key, value in getattr(self, table).items():
                if value < 0:
                    raise SpecError(f"{self.kind}: weight {table}.{key} is negative")
        return self

    def with_scenario(self, name):
        """Copy with one named scenario's overrides applied."""
        if name == "default":
            return copy.deepcopy(self)
        if name not in self.scenarios:
            raise SpecError(f"{self.kind}: unknown scenario {name!r}; have {sorted(self.scenarios)}")
        out = copy.deepcopy(self)
        for table, values in self.scenarios[name].items():
            if table not in ("params", "initial_state", "target"):
                raise SpecError(f"{self.kind}: scenario {name!r} may not override {table!r}")
            getattr(out, table).update(values)
        out.scenario = name
        return out.validate()

    def replace(self, **changes):
        out = copy.deepcopy(self)
        for key, value in changes.items():
            if not hasattr(out, key):
                raise SpecError(f"unknown spec field {key!r}")
            setattr(out, key, value)
        return out.validate()


def _float_table(raw, name, kind):
    table = raw.get(name, {})
    if not isinstance(table, dict):
        raise SpecError(f"{kind}: [{name}] must be a table")
    return dict(table)


def spec_from_mapping(raw, kind=None, positive=()):
    kind = raw.get("kind", kind)
    if kind is None:
        raise SpecError("parameter file does not name its problem kind")
    weights = raw.get("weights", {})
    try:
        spec = TrajectoryProblemSpec(
            kind=kind,
            horizon=raw["horizon"],
            dt=raw["dt"],
            params=_float_table(raw, "params", kind),
            initial_state=_float_table(raw, "initial_state", kind),
            target=_float_table(raw, "target", kind),
            terminal_weights=dict(weights.get("terminal", {})),
            running_weights=dict(weights.get("running", {})),
            scenarios=dict(raw.get("scenarios", {})),
            positive=tuple(positive),
        )
    except KeyError as exc:
        raise SpecError(f"{kind}: missing key {exc.args[0]!r}") from None
    return spec.validate()


def load_spec(kind, path=None, positive=()):
    """Read a TOML parameter file (the packaged default when ``path`` is None)."""
    path = Path(path) if path is not None else PARAMS_DIR / f"{kind}.toml"
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise SpecError(f"parameter file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"cannot parse {path}: {exc}") from None
    if raw.get("kind", kind) != kind:
        raise SpecError(f"{path} describes {raw.get('kind')!r}, expected {kind!r}")
    return spec_from_mapping(raw, kind, positive)


def tracking_objective(layout, spec):
    """Running quadratic effort plus terminal tracking on the last knot."""
    N, n = layout.horizon, layout.n_per_knot
    w_run = np.zeros(N * n)
    w_term = np.zeros(N * n)
    ref = np.zeros(N * n)
    for name, weight in spec.running_weights.items():
        w_run[layout.index(name)] += weight
    last = (N - 1) * n
    for name, weight in spec.terminal_weights.items():
        j = layout.column(name)
        w_term[last + j] = weight
        ref[last + j] = spec.target.get(name, 0.0)
    return QuadraticObjective(sp.diags(w_run + w_term), -w_term * ref,
                              0.5 * float(np.sum(w_term * ref * ref)))


def check_names(layout, spec):
    names = set(layout.names)
    for table in ("initial_state", "terminal_weights", "running_weights"):
        unknown = set(getattr(spec, table)) - names
        if unknown:
            raise SpecError(f"{spec.kind}: {table} names unknown variables {sorted(unknown)}")


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    names: tuple
    time: np.ndarray
    values: np.ndarray  # (horizon, n_per_knot)
    metrics: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.values[:, self.names.index(name)]

    def __len__(self):
        return self.values.shape[0]

    @property
    def terminal(self):
        return dict(zip(self.names, self.values[-1]))


def decode_trajectory(problem, x):
    layout = problem.layout
    x = np.asarray(x, dtype=float)
    if x.shape != (layout.n_vars,):
        raise ValueError(f"x must have length {layout.n_vars}")
    dt = layout.dt or 1.0
    values = layout.reshape(x).copy()
    return Trajectory(layout.names, np.arange(layout.horizon) * dt, values)


def encode_trajectory(problem, traj):
    layout = problem.layout
    if tuple(traj.names) != tuple(layout.names) or traj.values.shape != (layout.horizon, layout.n_per_knot):
        raise ValueError("trajectory does not match the problem layout")
    return np.asarray(traj.values, dtype=float).reshape(-1).copy()


# ---------------------------------------------------------------------------
# initial guesses


class GuessMode(str, enum.Enum):
    ALL_ZERO = "zero"
    PASSIVE_ROLLOUT = "rollout"
    NOISY_ROLLOUT = "noisy"


def initial_guess(problem, mode=GuessMode.ALL_ZERO, seed=0, sigma=0.1):
    """Initial decision vector: zeros, a passive rollout, or a noisy rollout."""
    mode = GuessMode(mode)
    if mode is GuessMode.ALL_ZERO:
        return np.zeros(problem.n_vars)
    rollout = problem.meta.get("rollout")
    if rollout is None:
        raise ValueError(f"{problem.name} has no passive rollout")
    x = rollout()
    if mode is GuessMode.NOISY_ROLLOUT:
        x = x + np.random.default_rng(seed).normal(scale=sigma, size=x.size)
    return x


def knots(layout):
    """Index arrays for all knots, the first N-1 and the last N-1."""
    k = np.arange(layout.horizon)
    return k, k[:-1], k[1:]


def product_mode(mode):
    return ProductMode(mode.value if isinstance(mode, enum.Enum) else mode)
