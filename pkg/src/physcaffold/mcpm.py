"""Monte Carlo Physarum Machine: agents forage a deposit field and leave trails.

Each simulation step is a propagation (sense -> choose -> move -> deposit)
followed by a relaxation (diffuse + decay the deposit, decay the trace).
Food sources re-inject deposit every step so input vertices stay attractive.
All randomness comes from counter-keyed streams, so a run is bit-reproducible
for a fixed seed regardless of worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import EmptyGeometryError, ValidationError
from .field import ScalarField3D, decay, diffuse, splat_trilinear
from .rng import INIT_STEP, CounterStream, mixed_seed, uniform_block

PROBE_FLOOR = 1e-6  # probability floor added to every probe before weighting
MAX_SAMPLES = 16    # K+4 draw-pair slots must fit the 5-bit counter field


@dataclass
class MCPMParams:
    num_agents: int = 100_000
    num_steps: int = 500
    sense_distance: float = 4.0       # grid units
    sense_spread: float = 30.0        # degrees, cone half-angle
    move_distance: float = 1.0        # grid units per step
    num_samples: int = 4              # candidate directions per step (K)
    sharpness: float = 2.0            # selection exponent; 0 = uniform
    agent_deposit: float = 1.0
    food_deposit: float = 10.0
    deposit_decay: float = 0.9
    trace_decay: float = 0.995
    boundary_policy: str = "respawn"  # respawn | reflect
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.num_agents < 0:
            raise ValidationError("num_agents must be >= 0")
        if not (0 <= self.num_steps < INIT_STEP):
            raise ValidationError(f"num_steps must be in [0, {INIT_STEP})")
        if not self.sense_distance > 0:
            raise ValidationError("sense_distance must be > 0")
        if not (0.0 < self.sense_spread <= 180.0):
            raise ValidationError("sense_spread must be in (0, 180] degrees")
        if not self.move_distance > 0:
            raise ValidationError("move_distance must be > 0")
        if not (1 <= self.num_samples <= MAX_SAMPLES):
            raise ValidationError(f"num_samples must be in [1, {MAX_SAMPLES}]")
        if self.sharpness < 0:
            raise ValidationError("sharpness must be >= 0")
        if self.agent_deposit < 0 or self.food_deposit < 0:
            raise ValidationError("deposit amounts must be >= 0")
        if not (0.0 < self.deposit_decay < 1.0):
            raise ValidationError("deposit_decay must be in (0, 1) exclusive")
        if not (0.0 < self.trace_decay < 1.0):
            raise ValidationError("trace_decay must be in (0, 1) exclusive")
        if self.boundary_policy not in ("respawn", "reflect"):
            raise ValidationError("boundary_policy must be 'respawn' or 'reflect'")


@dataclass
class FoodSources:
    positions: np.ndarray   # (N, 3) grid-space
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if self.weights is None:
            self.weights = np.ones(len(self.positions), dtype=np.float64)
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
            if len(self.weights) != len(self.positions):
                raise ValidationError("food weights length must match positions")
            if np.any(self.weights < 0):
                raise ValidationError("food weights must be >= 0")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class SimState:
    deposit: ScalarField3D
    trace: ScalarField3D
    positions: np.ndarray          # (N, 3) float64, grid space
    headings: np.ndarray           # (N, 3) float64, unit vectors
    step: int
    params: MCPMParams
    food: FoodSources
    sensed: ScalarField3D = None   # deposit snapshot agents read (double buffer)
    respawn_lo: np.ndarray = None
    respawn_hi: np.ndarray = None
    _scratch: dict = dc_field(default_factory=dict, repr=False)

    @property
    def num_agents(self) -> int:
        return len(self.positions)


def init_state(params: MCPMParams, food: FoodSources, dims,
               voxel_size: float = 1.0) -> SimState:
    """Spawn agents uniformly in the (expanded, grid-clipped) food box."""
    if len(food) == 0:
        raise EmptyGeometryError("need at least one food source")
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 2 for d in dims):
        raise ValidationError(f"grid dims must be three axes of size >= 2, got {dims}")
    top = np.asarray(dims, dtype=np.float64) - 1.0
    if np.any(food.positions < 0) or np.any(food.positions > top):
        raise ValidationError("food positions must lie inside the grid")

    pad = 2.0 * params.sense_distance
    lo = np.clip(food.positions.min(axis=0) - pad, 0.0, top)
    hi = np.clip(food.positions.max(axis=0) + pad, 0.0, top)

    n = params.num_agents
    u = uniform_block(params.seed, np.arange(n, dtype=np.uint64), INIT_STEP, 3)
    positions = lo + u[:, 0:3] * (hi - lo)
    zz = 2.0 * u[:, 3] - 1.0
    rr = np.sqrt(np.maximum(0.0, 1.0 - zz * zz))
    phi = 2.0 * math.pi * u[:, 4]
    headings = np.column_stack([rr * np.cos(phi), rr * np.sin(phi), zz])

    deposit = ScalarField3D.zeros(dims, voxel_size)
    state = SimState(
        deposit=deposit,
        trace=ScalarField3D.zeros(dims, voxel_size),
        positions=positions,
        headings=headings,
        step=0,
        params=params,
        food=food,
        sensed=deposit.copy(),
        respawn_lo=lo,
        respawn_hi=hi,
    )
    return state


def seed_food(state: SimState) -> None:
    """Re-inject food deposit (persistent attractors); call once per step."""
    amounts = state.params.food_deposit * state.food.weights
    splat_trilinear(state.deposit, state.food.positions, amounts)


def sample_cone(heading, spread: float, stream: CounterStream) -> np.ndarray:
    """Uniform direction in the spherical cap of half-angle `spread` (degrees)."""
    if not (0.0 < spread <= 180.0):
        raise ValidationError("spread must be in (0, 180] degrees")
    h = np.asarray(heading, dtype=np.float64)
    d = _kernels._cone_direction(h[0], h[1], h[2],
                                 math.cos(math.radians(spread)),
                                 stream.uniform(), stream.uniform())
    return np.array(d)


def select_direction(probes, sharpness: float, stream: CounterStream) -> int:
    """Index i with probability (probes[i]+eps)^sharpness / sum_j (...)."""
    p = np.asarray(probes, dtype=np.float64)
    if p.size < 1:
        raise ValidationError("need at least one probe")
    w = (p + PROBE_FLOOR) ** sharpness
    target = stream.uniform() * w.sum()
    acc = 0.0
    for i, wi in enumerate(w):
        acc += wi
        if target < acc:
            return i
    return p.size - 1


def propagation_step(state: SimState) -> None:
    """Advance every agent one step and splat its deposits.

    Deposit probes read the snapshot from the end of the previous relaxation,
    so agents never see same-step deposits and evaluation order cannot matter.
    """
    p = state.params
    n = state.num_agents
    if n > 0:
        key = (n, p.num_samples)
        if state._scratch.get("key") != key:
            state._scratch = {
                "key": key,
                "cand": [np.empty((n, p.num_samples)) for _ in range(3)],
                "wts": np.empty((n, p.num_samples)),
            }
        cx, cy, cz = state._scratch["cand"]
        _kernels.advance_agents(
            state.positions, state.headings, state.sensed.data,
            mixed_seed(p.seed), state.step,
            p.num_samples, p.sense_distance,
            math.cos(math.radians(p.sense_spread)), p.move_distance,
            p.sharpness, p.boundary_policy == "respawn",
            state.respawn_lo, state.respawn_hi,
            cx, cy, cz, state._scratch["wts"],
        )
        _kernels.splat_agents(state.deposit.data, state.trace.data,
                              state.positions, p.agent_deposit)
    state.step += 1


def relaxation_step(state: SimState) -> None:
    """deposit := decay(diffuse(deposit)); trace := decay(trace); no trace blur."""
    p = state.params
    state.deposit = decay(diffuse(state.deposit), p.deposit_decay)
    state.trace = decay(state.trace, p.trace_decay)
    state.sensed = state.deposit  # relaxation output is next step's read buffer


def run(params: MCPMParams, food: FoodSources, dims,
        voxel_size: float = 1.0, progress=None) -> SimState:
    """Full simulation: num_steps x {seed_food; propagation; relaxation}."""
    state = init_state(params, food, dims, voxel_size)
    for s in range(params.num_steps):
        seed_food(state)
        propagation_step(state)
        relaxation_step(state)
        if progress is not None:
            progress(state)
    return state


def connectivity(trace: ScalarField3D, food: FoodSources, threshold: float) -> float:
    """Fraction of food points in the largest 26-connected supra-threshold blob.

    Food voxels always count as supra-threshold, so isolated food points form
    singleton components rather than disappearing.
    """
    if threshold < 0:
        raise ValidationError("threshold must be >= 0")
    if len(food) == 0:
        raise ValidationError("need at least one food point")
    binary = trace.data >= threshold
    top = np.asarray(trace.dims) - 1
    fv = np.clip(np.rint(food.positions), 0, top).astype(np.int64)
    binary[fv[:, 0], fv[:, 1], fv[:, 2]] = True
    labels, _ = ndimage.label(binary, structure=np.ones((3, 3, 3), dtype=np.int8))
    food_labels = labels[fv[:, 0], fv[:, 1], fv[:, 2]]
    counts = np.bincount(food_labels)
    return float(counts.max() / len(food))
