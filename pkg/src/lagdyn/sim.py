"""Ensemble simulation of stochastically excited dynamical systems.

Discrete mechanical systems integrate with an additive-noise strong Taylor
scheme of order 1.5 (or classic Euler-Maruyama); spatially extended systems
use a kick-drift symplectic Euler-Maruyama stepper that is stable for
undamped wave and beam semidiscretizations and preserves the one-step drift
identity that downstream model discovery relies on. All randomness is
reproducible: realization k of an ensemble draws from a generator seeded by
a SplitMix-style mix of (base_seed, k).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from lagdyn.errors import ConfigError, SimulationDivergedError, StabilityError

BLOW_UP_BOUND = 1.0e6

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def derived_seed(base_seed: int, index: int) -> int:
    """Deterministic 64-bit seed for realization `index` of a base seed.

    SplitMix64 finalizer applied to base_seed advanced by (index + 1)
    golden-ratio increments; consecutive indices give statistically
    independent generator seeds.
    """
    z = (int(base_seed) + (index + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class NoiseStream:
    """Seeded source of Gaussian noise for one trajectory.

    Attributes:
        seed: The 64-bit seed this stream was created with.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)

    def standard_normals(self, shape) -> np.ndarray:
        """Draw a block of independent standard normal samples."""
        return self._rng.standard_normal(shape)

    def increments(self, n: int, dt: float) -> np.ndarray:
        """Draw n Wiener increments, distributed Normal(0, dt)."""
        if n < 1:
            raise ValueError("need at least one increment")
        if dt <= 0:
            raise ValueError("dt must be positive")
        return np.sqrt(dt) * self.standard_normals(n)


def wiener_increments(n: int, dt: float, seed: int) -> np.ndarray:
    """Deterministic vector of n i.i.d. Normal(0, dt) increments."""
    return NoiseStream(seed).increments(n, dt)


@dataclass(frozen=True)
class FieldGeometry:
    """Spatial grid and boundary handling of a one-dimensional field.

    Attributes:
        length: Domain length.
        dx: Node spacing; the grid has round(length/dx) + 1 nodes.
        boundary: "pinned-both" (displacement fixed to zero at both ends)
            or "clamped-free" (left end fixed with zero slope, right end
            free of moment and shear).
        constrained: Node indices whose displacement and velocity are held
            at zero by the stepper.
    """

    length: float
    dx: float
    boundary: str
    constrained: tuple[int, ...]

    @property
    def n_nodes(self) -> int:
        return int(round(self.length / self.dx)) + 1

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.dx


@dataclass
class SystemSpec:
    """Complete description of a simulatable stochastic system.

    The full state vector concatenates displacement and velocity blocks
    (u_1..u_n, v_1..v_n) for mechanical and field systems; generic
    first-order test systems may use any state length.

    Attributes:
        name: Identifier.
        kind: "sde" for finite-dimensional systems, "spde" for fields.
        dim: Number of coordinates (particles or grid nodes).
        drift: Map state -> time derivative of state, batched over leading
            axes.
        volatility: Map state -> per-coordinate noise gain vector, batched.
            Coordinates whose gain at the initial state is zero are treated
            as noiseless.
        initial_state: Start state, shape (2*dim,) for mechanical systems.
        params: Named scalar parameters, including the simulation protocol
            (t_final, sample_rate, n_realizations) for benchmarks.
        drift_jacobian: Map state -> Jacobian of drift, batched; required by
            the Taylor integrator.
        noise_curvature: Optional map state -> sum_k g_k^2 * d2(drift)/dY_k^2
            over noise-carrying coordinates; zero when omitted.
        acceleration: Optional map displacement -> acceleration used by the
            field stepper (and by drift for field systems).
        spatial: Grid geometry for field systems.
    """

    name: str
    kind: str
    dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    volatility: Callable[[np.ndarray], np.ndarray]
    initial_state: np.ndarray
    params: dict = field(default_factory=dict)
    drift_jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    noise_curvature: Callable[[np.ndarray], np.ndarray] | None = None
    acceleration: Callable[[np.ndarray], np.ndarray] | None = None
    spatial: FieldGeometry | None = None


@dataclass
class Ensemble:
    """Batch of independent trajectory realizations of one system.

    Attributes:
        dt: Sampling step.
        n_steps: Number of stored time samples per realization (N_t).
        n_real: Number of realizations (N).
        coords: Number of coordinates (n).
        displacement: Array of shape (N, n, N_t).
        velocity: Array of shape (N, n, N_t).
        spatial_grid: Node coordinates for field systems, else None.
    """

    dt: float
    n_steps: int
    n_real: int
    coords: int
    displacement: np.ndarray
    velocity: np.ndarray
    spatial_grid: np.ndarray | None = None

    def __post_init__(self):
        shape = (self.n_real, self.coords, self.n_steps)
        if self.displacement.shape != shape or self.velocity.shape != shape:
            raise ValueError(f"ensemble arrays must have shape {shape}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(self.displacement)) or not np.all(
            np.isfinite(self.velocity)
        ):
            raise ValueError("ensemble contains non-finite samples")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt


def _noise_layout(spec: SystemSpec) -> tuple[np.ndarray, np.ndarray]:
    """Initial gain vector and the indices of noise-carrying coordinates."""
    g0 = np.asarray(spec.volatility(np.asarray(spec.initial_state, dtype=float)))
    return g0, np.flatnonzero(g0 != 0.0)


def _check_states(states: np.ndarray, step: int, blow_up: float) -> None:
    worst = np.abs(states).max(axis=tuple(range(1, states.ndim)))
    bad = ~np.isfinite(worst) | (worst > blow_up)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise SimulationDivergedError(
            f"trajectory diverged at step {step} (realization {k}): "
            f"|state| exceeded {blow_up:g} or became non-finite",
            step=step,
        )


def _taylor15_core(
    spec: SystemSpec,
    dt: float,
    n_steps: int,
    dw: np.ndarray,
    dz: np.ndarray,
    blow_up: float,
) -> np.ndarray:
    """Batched strong Taylor 1.5 integration for additive noise.

    One step of the scheme for dY = A(Y) dt + B dW with constant B:
        Y+ = Y + A dt + B.dW + (J_A B).dZ + 0.5 (J_A A + 0.5 K) dt^2
    where J_A is the drift Jacobian, K the noise-curvature vector, dW the
    Wiener increment over the step, and dZ the time integral of the Wiener
    deviation over the step.

    Args:
        spec: System with drift, drift_jacobian, constant volatility.
        dt: Time step.
        n_steps: Number of steps.
        dw: Wiener increments, shape (B, n_steps, n_noise).
        dz: Integrated Wiener deviations, shape (B, n_steps, n_noise).
        blow_up: Divergence bound on |state|.

    Returns:
        States, shape (B, n_state, n_steps + 1).
    """
    if spec.drift_jacobian is None:
        raise ConfigError(f"system '{spec.name}' lacks a drift Jacobian")
    y0 = np.asarray(spec.initial_state, dtype=float)
    n_state = y0.size
    g0, noise_idx = _noise_layout(spec)
    batch = dw.shape[0]

    out = np.empty((batch, n_state, n_steps + 1))
    y = np.broadcast_to(y0, (batch, n_state)).copy()
    out[:, :, 0] = y
    dt2 = dt * dt
    dw_full = np.zeros((batch, n_state))
    dz_full = np.zeros((batch, n_state))
    for i in range(n_steps):
        dw_full[:, noise_idx] = dw[:, i, :]
        dz_full[:, noise_idx] = dz[:, i, :]
        a = spec.drift(y)
        jac = spec.drift_jacobian(y)
        ja = np.einsum("...ij,...j->...i", jac, a)
        jbz = np.einsum("...ij,...j->...i", jac, g0 * dz_full)
        curv = spec.noise_curvature(y) if spec.noise_curvature is not None else 0.0
        y = y + a * dt + g0 * dw_full + jbz + 0.5 * dt2 * (ja + 0.5 * curv)
        _check_states(y, i + 1, blow_up)
        out[:, :, i + 1] = y
    return out


def increments_from_normals(dt: float, normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Convert paired standard normals to correlated (dW, dZ) increments.

    dW = sqrt(dt) x1 is the Wiener increment and dZ the time integral of
    the Wiener deviation over the step, jointly Gaussian with
    Var(dZ) = dt^3/3 and Cov(dW, dZ) = dt^2/2.

    Args:
        dt: Time step.
        normals: Standard normals with pair axis last, shape (..., 2).

    Returns:
        (dw, dz) arrays of shape normals.shape[:-1].
    """
    xi1 = normals[..., 0]
    xi2 = normals[..., 1]
    sqdt = np.sqrt(dt)
    dw = sqdt * xi1
    dz = 0.5 * dt * sqdt * (xi1 + xi2 / np.sqrt(3.0))
    return dw, dz


def _taylor15_batch(
    spec: SystemSpec,
    dt: float,
    n_steps: int,
    normals: np.ndarray,
    blow_up: float,
) -> np.ndarray:
    dw, dz = increments_from_normals(dt, normals)
    return _taylor15_core(spec, dt, n_steps, dw, dz, blow_up)


def integrate_taylor15_increments(
    spec: SystemSpec,
    dt: float,
    dw: np.ndarray,
    dz: np.ndarray,
    blow_up: float = BLOW_UP_BOUND,
) -> np.ndarray:
    """Taylor 1.5 trajectory driven by externally supplied increments.

    Useful for convergence studies that couple the scheme to a reference
    solution built on the same underlying Wiener path.

    Args:
        spec: System of kind "sde" with a drift Jacobian.
        dt: Time step.
        dw: Wiener increments per step and noise coordinate, shape
            (n_steps, n_noise), or (n_real, n_steps, n_noise) for a batch.
        dz: Integrated Wiener deviations, same shape as dw.

    Returns:
        State trajectory, shape (n_state, n_steps + 1), with a leading
        batch axis when dw carries one.
    """
    if spec.kind != "sde":
        raise ConfigError("Taylor scheme applies to finite-dimensional systems")
    dw = np.asarray(dw, dtype=float)
    dz = np.asarray(dz, dtype=float)
    if dw.ndim not in (2, 3) or dw.shape != dz.shape:
        raise ValueError(
            "dw and dz must both have shape (n_steps, n_noise) "
            "or (n_real, n_steps, n_noise)"
        )
    _, noise_idx = _noise_layout(spec)
    if dw.shape[-1] != noise_idx.size:
        raise ValueError(
            f"expected {noise_idx.size} noise coordinates, got {dw.shape[-1]}"
        )
    if dw.ndim == 2:
        return _taylor15_core(
            spec, dt, dw.shape[0], dw[None, :, :], dz[None, :, :], blow_up
        )[0]
    return _taylor15_core(spec, dt, dw.shape[1], dw, dz, blow_up)


def integrate_batch(
    spec: SystemSpec,
    dt: float,
    n_steps: int,
    n_real: int,
    base_seed: int,
    method: str = "auto",
    blow_up: float = BLOW_UP_BOUND,
) -> np.ndarray:
    """Integrate a batch of independent realizations of any system.

    Realization k draws its noise from derived_seed(base_seed, k) with the
    same draw layout as the single-trajectory entry points, so row k equals
    the corresponding single call exactly. Unlike generate_ensemble this
    places no displacement/velocity structure requirement on the state.

    Args:
        spec: System description.
        dt: Time step.
        n_steps: Number of steps.
        n_real: Number of realizations.
        base_seed: Ensemble seed.
        method: "taylor15", "euler", or "auto" (Taylor for kind "sde",
            the field stepper for kind "spde").
        blow_up: Divergence bound on |state|.

    Returns:
        States, shape (n_real, n_state, n_steps + 1).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if n_real < 1:
        raise ValueError("n_real must be at least 1")
    if method == "auto":
        method = "euler" if spec.kind == "spde" else "taylor15"
    if method not in ("taylor15", "euler"):
        raise ConfigError(f"unknown integration method '{method}'")
    if method == "taylor15" and spec.kind != "sde":
        raise ConfigError("Taylor scheme applies to finite-dimensional systems")
    _, noise_idx = _noise_layout(spec)
    if method == "taylor15":
        shape = (n_steps, noise_idx.size, 2)
    else:
        shape = (n_steps, noise_idx.size)
    normals = np.empty((n_real,) + shape)
    for k in range(n_real):
        normals[k] = NoiseStream(derived_seed(base_seed, k)).standard_normals(shape)
    if method == "taylor15":
        return _taylor15_batch(spec, dt, n_steps, normals, blow_up)
    if spec.kind == "spde":
        disp, vel = _field_stepper_batch(spec, dt, n_steps, normals, blow_up)
        return _stack_state(disp, vel)
    return _euler_maruyama_batch(spec, dt, n_steps, normals, blow_up)


def _euler_maruyama_batch(
    spec: SystemSpec,
    dt: float,
    n_steps: int,
    normals: np.ndarray,
    blow_up: float,
) -> np.ndarray:
    """Batched classic Euler-Maruyama for finite-dimensional SDEs.

    Supports state-dependent volatility. normals shape (B, n_steps, n_noise).
    """
    y0 = np.asarray(spec.initial_state, dtype=float)
    n_state = y0.size
    _, noise_idx = _noise_layout(spec)
    batch = normals.shape[0]

    out = np.empty((batch, n_state, n_steps + 1))
    y = np.broadcast_to(y0, (batch, n_state)).copy()
    out[:, :, 0] = y
    sqdt = np.sqrt(dt)
    dw_full = np.zeros((batch, n_state))
    for i in range(n_steps):
        dw_full[:, noise_idx] = sqdt * normals[:, i, :]
        gains = np.asarray(spec.volatility(y))
        y = y + spec.drift(y) * dt + gains * dw_full
        _check_states(y, i + 1, blow_up)
        out[:, :, i + 1] = y
    return out


def _field_stepper_batch(
    spec: SystemSpec,
    dt: float,
    n_steps: int,
    normals: np.ndarray,
    blow_up: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched kick-drift symplectic Euler-Maruyama for field systems.

    Per step: v+ = v + dt*a(u) + g.dW; u+ = u + dt*v+. Constrained nodes
    stay at zero. The velocity update uses the acceleration at the current
    displacement only, so (v+ - v)/dt equals the drift plus pure noise,
    exactly, per step.

    Returns:
        (displacement, velocity) arrays of shape (B, n, n_steps + 1).
    """
    if spec.acceleration is None or spec.spatial is None:
        raise ConfigError(f"field system '{spec.name}' needs acceleration and grid")
    _validate_field_stability(spec, dt)
    n = spec.dim
    y0 = np.asarray(spec.initial_state, dtype=float)
    g0, noise_idx = _noise_layout(spec)
    gains = g0[n:]
    v_noise_idx = noise_idx - n
    batch = normals.shape[0]
    constrained = list(spec.spatial.constrained)

    disp = np.empty((batch, n, n_steps + 1))
    vel = np.empty((batch, n, n_steps + 1))
    u = np.broadcast_to(y0[:n], (batch, n)).copy()
    v = np.broadcast_to(y0[n:], (batch, n)).copy()
    u[:, constrained] = 0.0
    v[:, constrained] = 0.0
    disp[:, :, 0] = u
    vel[:, :, 0] = v
    sqdt = np.sqrt(dt)
    dw = np.zeros((batch, n))
    for i in range(n_steps):
        dw[:, v_noise_idx] = sqdt * normals[:, i, :]
        v = v + dt * spec.acceleration(u) + gains * dw
        v[:, constrained] = 0.0
        u = u + dt * v
        u[:, constrained] = 0.0
        _check_states(u, i + 1, blow_up)
        disp[:, :, i + 1] = u
        vel[:, :, i + 1] = v
    return disp, vel


def simulate_field_rows(
    spec: SystemSpec,
    dt: float,
    t_f: float,
    n_real: int,
    base_seed: int,
    rows,
    chunk_steps: int = 2000,
    blow_up: float = BLOW_UP_BOUND,
) -> np.ndarray:
    """Simulate a field ensemble while recording only selected state rows.

    Runs the same kick-drift stepper with the same per-realization seeding
    as generate_ensemble, but draws the noise in time chunks from
    persistent per-realization generators (chunked draws reproduce the
    one-shot stream) and stores only the requested state rows, so long
    horizons with many realizations fit in memory. Row r < dim selects the
    displacement of node r; row dim + r selects its velocity.

    Args:
        spec: Field system (kind "spde").
        dt: Time step, > 0.
        t_f: Final time, > 0.
        n_real: Number of realizations, >= 1.
        base_seed: Ensemble seed; realization k draws from
            derived_seed(base_seed, k).
        rows: Iterable of state-row indices to record, each in [0, 2*dim).
        chunk_steps: Steps advanced per noise draw, >= 1.
        blow_up: Divergence bound on |state|.

    Returns:
        Array of shape (n_real, len(rows), n_steps + 1).
    """
    if spec.kind != "spde" or spec.acceleration is None or spec.spatial is None:
        raise ConfigError(f"'{spec.name}' is not a simulatable field system")
    if t_f <= 0 or dt <= 0:
        raise ValueError("t_f and dt must be positive")
    if n_real < 1:
        raise ValueError("n_real must be at least 1")
    if chunk_steps < 1:
        raise ValueError("chunk_steps must be at least 1")
    _validate_field_stability(spec, dt)
    n = spec.dim
    rows = np.asarray(list(rows), dtype=int)
    if rows.size == 0 or rows.min() < 0 or rows.max() >= 2 * n:
        raise ConfigError("rows must be non-empty state indices in [0, 2*dim)")
    n_steps = int(round(t_f / dt))

    y0 = np.asarray(spec.initial_state, dtype=float)
    g0, noise_idx = _noise_layout(spec)
    gains = g0[n:]
    v_noise_idx = noise_idx - n
    constrained = list(spec.spatial.constrained)
    disp_rows = rows[rows < n]
    vel_rows = rows[rows >= n] - n
    disp_pos = np.flatnonzero(rows < n)
    vel_pos = np.flatnonzero(rows >= n)

    u = np.broadcast_to(y0[:n], (n_real, n)).copy()
    v = np.broadcast_to(y0[n:], (n_real, n)).copy()
    u[:, constrained] = 0.0
    v[:, constrained] = 0.0
    out = np.empty((n_real, rows.size, n_steps + 1))
    out[:, disp_pos, 0] = u[:, disp_rows]
    out[:, vel_pos, 0] = v[:, vel_rows]

    streams = [NoiseStream(derived_seed(base_seed, k)) for k in range(n_real)]
    sqdt = np.sqrt(dt)
    dw = np.zeros((n_real, n))
    normals = np.empty((n_real, chunk_steps, v_noise_idx.size))
    done = 0
    while done < n_steps:
        m = min(chunk_steps, n_steps - done)
        block = normals[:, :m, :]
        for k, stream in enumerate(streams):
            block[k] = stream.standard_normals((m, v_noise_idx.size))
        for j in range(m):
            dw[:, v_noise_idx] = sqdt * block[:, j, :]
            v = v + dt * spec.acceleration(u) + gains * dw
            v[:, constrained] = 0.0
            u = u + dt * v
            u[:, constrained] = 0.0
            _check_states(u, done + j + 1, blow_up)
            out[:, disp_pos, done + j + 1] = u[:, disp_rows]
            out[:, vel_pos, done + j + 1] = v[:, vel_rows]
        done += m
    return out


def _validate_field_stability(spec: SystemSpec, dt: float) -> None:
    limit = spec.params.get("max_stable_dt")
    if limit is not None and dt > limit * (1.0 + 1e-12):
        raise StabilityError(
            f"time step {dt:g} exceeds the stability limit {limit:g} "
            f"for system '{spec.name}'"
        )


def _stack_state(disp: np.ndarray, vel: np.ndarray) -> np.ndarray:
    return np.concatenate([disp, vel], axis=1)


def integrate_taylor15(
    spec: SystemSpec,
    dt: float,
    n_steps: int,
    noise: NoiseStream,
    blow_up: float = BLOW_UP_BOUND,
) -> np.ndarray:
    """Integrate one trajectory with the additive-noise Taylor 1.5 scheme.

    Args:
        spec: System of kind "sde" with a drift Jacobian.
        dt: Time step, > 0.
        n_steps: Number of steps, >= 1.
        noise: Seeded noise source.
        blow_up: Divergence bound on |state|.

    Returns:
        State trajectory, shape (n_state, n_steps + 1).
    """
    if spec.kind != "sde":
        raise ConfigError("Taylor scheme applies to finite-dimensional systems")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    _, noise_idx = _noise_layout(spec)
    normals = noise.standard_normals((1, n_steps, noise_idx.size, 2))
    return _taylor15_batch(spec, dt, n_steps, normals, blow_up)[0]


def integrate_euler_maruyama(
    spec: SystemSpec,
    dt: float,
    n_steps: int,
    noise: NoiseStream,
    blow_up: float = BLOW_UP_BOUND,
) -> np.ndarray:
    """Integrate one trajectory with an Euler-Maruyama scheme.

    Field systems ("spde") use the kick-drift symplectic variant with the
    stability limit checked before stepping; finite-dimensional systems use
    the classic scheme.

    Returns:
        State trajectory, shape (n_state, n_steps + 1) with the state
        concatenating displacement and velocity blocks for field systems.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    _, noise_idx = _noise_layout(spec)
    if spec.kind == "spde":
        normals = noise.standard_normals((1, n_steps, noise_idx.size))
        disp, vel = _field_stepper_batch(spec, dt, n_steps, normals, blow_up)
        return _stack_state(disp, vel)[0]
    normals = noise.standard_normals((1, n_steps, noise_idx.size))
    return _euler_maruyama_batch(spec, dt, n_steps, normals, blow_up)[0]


def integrate_rk4(spec: SystemSpec, dt: float, n_steps: int) -> np.ndarray:
    """Deterministic classical Runge-Kutta reference (noise ignored).

    Returns:
        State trajectory, shape (n_state, n_steps + 1).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = np.asarray(spec.initial_state, dtype=float).copy()
    out = np.empty((y.size, n_steps + 1))
    out[:, 0] = y
    f = spec.drift
    for i in range(n_steps):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[:, i + 1] = y
    return out


def generate_ensemble(
    spec: SystemSpec,
    dt: float,
    t_f: float,
    n_real: int,
    base_seed: int,
    blow_up: float = BLOW_UP_BOUND,
) -> Ensemble:
    """Generate an ensemble of independent realizations.

    Realization k draws all its noise from a generator seeded with
    derived_seed(base_seed, k), so ensembles are reproducible and
    realizations stay independent across k regardless of batch size.

    Args:
        spec: Mechanical or field system (state = displacement ++ velocity).
        dt: Time step, > 0.
        t_f: Final time, > 0; the trajectory stores round(t_f/dt)+1 samples.
        n_real: Number of realizations, >= 1.
        base_seed: Ensemble seed.
        blow_up: Divergence bound on |state|.

    Returns:
        Ensemble with arrays of shape (n_real, dim, N_t).
    """
    if t_f <= 0:
        raise ValueError("t_f must be positive")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_real < 1:
        raise ValueError("n_real must be at least 1")
    y0 = np.asarray(spec.initial_state, dtype=float)
    if y0.size != 2 * spec.dim:
        raise ConfigError(
            "ensemble generation expects displacement and velocity blocks"
        )
    n_steps = int(round(t_f / dt))
    _, noise_idx = _noise_layout(spec)

    if spec.kind == "spde":
        shape = (n_steps, noise_idx.size)
    else:
        shape = (n_steps, noise_idx.size, 2)
    normals = np.empty((n_real,) + shape)
    for k in range(n_real):
        normals[k] = NoiseStream(derived_seed(base_seed, k)).standard_normals(shape)

    if spec.kind == "spde":
        disp, vel = _field_stepper_batch(spec, dt, n_steps, normals, blow_up)
    else:
        states = _taylor15_batch(spec, dt, n_steps, normals, blow_up)
        n = spec.dim
        disp = np.ascontiguousarray(states[:, :n, :])
        vel = np.ascontiguousarray(states[:, n:, :])
        del states
    grid = spec.spatial.grid if spec.spatial is not None else None
    return Ensemble(
        dt=dt,
        n_steps=n_steps + 1,
        n_real=n_real,
        coords=spec.dim,
        displacement=disp,
        velocity=vel,
        spatial_grid=grid,
    )


# ---------------------------------------------------------------------------
# Benchmark systems
# ---------------------------------------------------------------------------


def _mechanical_spec(
    name: str,
    accel: Callable[[np.ndarray], np.ndarray],
    accel_jacobian: Callable[[np.ndarray], np.ndarray],
    gains: np.ndarray,
    initial: np.ndarray,
    params: dict,
) -> SystemSpec:
    """Assemble a SystemSpec for u'' = accel(u) + gains * white noise."""
    n = gains.size

    def drift(y: np.ndarray) -> np.ndarray:
        u, v = y[..., :n], y[..., n:]
        return np.concatenate([v, accel(u)], axis=-1)

    def jacobian(y: np.ndarray) -> np.ndarray:
        u = y[..., :n]
        ju = accel_jacobian(u)
        jac = np.zeros(y.shape[:-1] + (2 * n, 2 * n))
        jac[..., :n, n:] = np.eye(n)
        jac[..., n:, :n] = ju
        return jac

    g_full = np.concatenate([np.zeros(n), gains])

    def volatility(y: np.ndarray) -> np.ndarray:
        return np.broadcast_to(g_full, y.shape)

    return SystemSpec(
        name=name,
        kind="sde",
        dim=n,
        drift=drift,
        volatility=volatility,
        initial_state=np.asarray(initial, dtype=float),
        params=params,
        drift_jacobian=jacobian,
        acceleration=accel,
    )


def _harmonic_spec() -> SystemSpec:
    k_over_m = 1000.0

    def accel(u):
        return -k_over_m * u

    def accel_jac(u):
        jac = np.zeros(u.shape[:-1] + (1, 1))
        jac[..., 0, 0] = -k_over_m
        return jac

    params = {
        "mass": 1.0,
        "stiffness": 1000.0,
        "noise_strength": 1.0,
        "t_final": 1.0,
        "sample_rate": 10000.0,
        "n_realizations": 200,
    }
    return _mechanical_spec(
        "harmonic", accel, accel_jac, np.array([1.0]), [0.5, 0.0], params
    )


def _pendulum_spec() -> SystemSpec:
    g_over_l = 9.81
    gain = 0.1  # sigma / (m l^2)

    def accel(u):
        return -g_over_l * np.sin(u)

    def accel_jac(u):
        jac = np.zeros(u.shape[:-1] + (1, 1))
        jac[..., 0, 0] = -g_over_l * np.cos(u[..., 0])
        return jac

    params = {
        "mass": 1.0,
        "length": 1.0,
        "gravity": 9.81,
        "noise_strength": 0.1,
        "t_final": 5.0,
        "sample_rate": 2000.0,
        "n_realizations": 200,
    }
    return _mechanical_spec(
        "pendulum", accel, accel_jac, np.array([gain]), [0.9, 0.0], params
    )


def _duffing_spec() -> SystemSpec:
    k = 1000.0
    cubic = 2500.0

    def accel(u):
        return -k * u - cubic * u**3

    def accel_jac(u):
        jac = np.zeros(u.shape[:-1] + (1, 1))
        jac[..., 0, 0] = -k - 3.0 * cubic * u[..., 0] ** 2
        return jac

    params = {
        "stiffness": 1000.0,
        "cubic_stiffness": 2500.0,
        "noise_strength": 1.0,
        "t_final": 1.0,
        "sample_rate": 10000.0,
        "n_realizations": 200,
    }
    return _mechanical_spec(
        "duffing", accel, accel_jac, np.array([1.0]), [0.4, 0.0], params
    )


def _three_dof_spec() -> SystemSpec:
    k_over_m = 1000.0
    block = -k_over_m * np.array(
        [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]]
    )

    def accel(u):
        return u @ block.T

    def accel_jac(u):
        return np.broadcast_to(block, u.shape[:-1] + (3, 3))

    params = {
        "mass": 10.0,
        "stiffness": 10000.0,
        "noise_strength": 1.0,
        "t_final": 1.0,
        "sample_rate": 10000.0,
        "n_realizations": 200,
    }
    initial = [0.25, 0.5, 0.0, 0.0, 0.0, 0.0]
    return _mechanical_spec(
        "3dof", accel, accel_jac, np.array([1.0, 1.0, 1.0]), initial, params
    )


def _wave_spec() -> SystemSpec:
    c = 2.0
    sigma = 2.0
    geometry = FieldGeometry(length=1.0, dx=0.01, boundary="pinned-both",
                             constrained=(0, 100))
    n = geometry.n_nodes
    c2_over_dx2 = c * c / geometry.dx**2

    def accel(u):
        a = np.zeros_like(u)
        a[..., 1:-1] = c2_over_dx2 * (u[..., 2:] - 2.0 * u[..., 1:-1] + u[..., :-2])
        return a

    def drift(y):
        u, v = y[..., :n], y[..., n:]
        return np.concatenate([v, accel(u)], axis=-1)

    gains = np.full(n, sigma)
    gains[list(geometry.constrained)] = 0.0
    g_full = np.concatenate([np.zeros(n), gains])

    def volatility(y):
        return np.broadcast_to(g_full, y.shape)

    x = geometry.grid
    u0 = np.cos(2.0 * np.pi * x)
    u0[list(geometry.constrained)] = 0.0
    params = {
        "wave_speed": 2.0,
        "noise_strength": 2.0,
        "t_final": 1.0,
        "sample_rate": 10000.0,
        "n_realizations": 30,
        "max_stable_dt": geometry.dx / c,
    }
    return SystemSpec(
        name="wave",
        kind="spde",
        dim=n,
        drift=drift,
        volatility=volatility,
        initial_state=np.concatenate([u0, np.zeros(n)]),
        params=params,
        acceleration=accel,
        spatial=geometry,
    )


def cantilever_mode_shape(x: np.ndarray, wavenumber: float, length: float) -> np.ndarray:
    """First transverse vibration mode of a clamped-free beam."""
    psi = wavenumber
    ratio = (np.cos(psi * length) + np.cosh(psi * length)) / (
        np.sin(psi * length) + np.sinh(psi * length)
    )
    return (np.cosh(psi * x) - np.cos(psi * x)) + ratio * (
        np.sin(psi * x) - np.sinh(psi * x)
    )


def _beam_biharmonic(u: np.ndarray, dx: float) -> np.ndarray:
    """Fourth spatial derivative of a clamped-free beam field.

    Ghost nodes encode the boundary conditions: mirror ghost at the clamped
    left end (zero slope), moment-free and shear-free extrapolation ghosts
    at the free right end. Node 0 is clamped and reports zero.
    """
    n = u.shape[-1]
    padded = np.zeros(u.shape[:-1] + (n + 4,))
    padded[..., 2 : n + 2] = u
    padded[..., 1] = u[..., 1]  # u(-1) = u(1): zero slope at the clamp
    padded[..., n + 2] = 2.0 * u[..., n - 1] - u[..., n - 2]  # zero moment
    padded[..., n + 3] = (
        4.0 * u[..., n - 1] - 4.0 * u[..., n - 2] + u[..., n - 3]
    )  # zero shear
    d4 = (
        padded[..., 0:n]
        - 4.0 * padded[..., 1 : n + 1]
        + 6.0 * padded[..., 2 : n + 2]
        - 4.0 * padded[..., 3 : n + 3]
        + padded[..., 4 : n + 4]
    ) / dx**4
    d4[..., 0] = 0.0
    return d4


def _beam_spec() -> SystemSpec:
    # Effective stiffness ratio of the flexural term; the bending wave
    # speed scale is sqrt(stiffness_ratio).
    stiffness_ratio = 0.1035
    sigma = 20.0
    geometry = FieldGeometry(length=1.0, dx=0.01, boundary="clamped-free",
                             constrained=(0,))
    n = geometry.n_nodes

    def accel(u):
        return -stiffness_ratio * _beam_biharmonic(u, geometry.dx)

    def drift(y):
        u, v = y[..., :n], y[..., n:]
        return np.concatenate([v, accel(u)], axis=-1)

    gains = np.full(n, sigma)
    gains[list(geometry.constrained)] = 0.0
    g_full = np.concatenate([np.zeros(n), gains])

    def volatility(y):
        return np.broadcast_to(g_full, y.shape)

    psi = 0.596864 * np.pi
    u0 = cantilever_mode_shape(geometry.grid, psi, geometry.length)
    u0[list(geometry.constrained)] = 0.0
    params = {
        "stiffness_ratio": stiffness_ratio,
        "elastic_modulus": 2.0e10,
        "density": 8050.0,
        "section_area": 0.02 * 0.001,
        "mode_wavenumber": psi,
        "noise_strength": 20.0,
        "t_final": 2.0,
        "sample_rate": 10000.0,
        "n_realizations": 20,
        "max_stable_dt": geometry.dx**2 / (2.0 * np.sqrt(stiffness_ratio)),
    }
    return SystemSpec(
        name="beam",
        kind="spde",
        dim=n,
        drift=drift,
        volatility=volatility,
        initial_state=np.concatenate([u0, np.zeros(n)]),
        params=params,
        acceleration=accel,
        spatial=geometry,
    )


_BENCHMARKS: dict[str, Callable[[], SystemSpec]] = {
    "harmonic": _harmonic_spec,
    "pendulum": _pendulum_spec,
    "duffing": _duffing_spec,
    "3dof": _three_dof_spec,
    "wave": _wave_spec,
    "beam": _beam_spec,
}

BENCHMARK_NAMES = tuple(sorted(_BENCHMARKS))


def benchmark_spec(name: str) -> SystemSpec:
    """Build the SystemSpec for a named benchmark.

    Args:
        name: One of "harmonic", "pendulum", "duffing", "3dof", "wave",
            "beam".

    Returns:
        Fully parameterized SystemSpec; the simulation protocol (t_final,
        sample_rate, n_realizations) is carried in params.
    """
    try:
        builder = _BENCHMARKS[name]
    except KeyError:
        raise ConfigError(
            f"unknown benchmark '{name}'; valid names: {', '.join(BENCHMARK_NAMES)}"
        ) from None
    return builder()


# ---------------------------------------------------------------------------
# Ensemble container IO
# ---------------------------------------------------------------------------

_MAGIC = "ensemble-v1"


def save_ensemble(ens: Ensemble, path: str | Path) -> None:
    """Write an ensemble to a binary container.

    Layout: one JSON header line (format tag, shape, dt, grid), then the
    displacement and velocity arrays as little-endian float64.
    """
    path = Path(path)
    header = {
        "format": _MAGIC,
        "dt": ens.dt,
        "n_real": ens.n_real,
        "coords": ens.coords,
        "n_steps": ens.n_steps,
        "spatial_grid": None
        if ens.spatial_grid is None
        else ens.spatial_grid.tolist(),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(ens.displacement, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ens.velocity, dtype="<f8").tobytes())


def load_ensemble(path: str | Path) -> Ensemble:
    """Read an ensemble written by save_ensemble."""
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"not an ensemble container: {path}") from exc
        if header.get("format") != _MAGIC:
            raise ConfigError(f"unsupported container format in {path}")
        shape = (header["n_real"], header["coords"], header["n_steps"])
        count = int(np.prod(shape))
        disp = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
        vel = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
    grid = header.get("spatial_grid")
    return Ensemble(
        dt=header["dt"],
        n_steps=header["n_steps"],
        n_real=header["n_real"],
        coords=header["coords"],
        displacement=disp.reshape(shape).copy(),
        velocity=vel.reshape(shape).copy(),
        spatial_grid=None if grid is None else np.asarray(grid, dtype=float),
    )


def ensemble_to_csv(ens: Ensemble, path: str | Path, realization: int | None = None) -> None:
    """Export one realization (or the ensemble mean) as CSV.

    Columns: t, then displacement per coordinate, then velocity per
    coordinate. Intended for small cases; large grids produce wide files.
    """
    path = Path(path)
    if realization is None:
        disp = ens.displacement.mean(axis=0)
        vel = ens.velocity.mean(axis=0)
    else:
        disp = ens.displacement[realization]
        vel = ens.velocity[realization]
    t = ens.times
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = (
            ["t"]
            + [f"u{i + 1}" for i in range(ens.coords)]
            + [f"v{i + 1}" for i in range(ens.coords)]
        )
        writer.writerow(header)
        for j in range(ens.n_steps):
            row = [repr(float(t[j]))]
            row += [repr(float(x)) for x in disp[:, j]]
            row += [repr(float(x)) for x in vel[:, j]]
            writer.writerow(row)
