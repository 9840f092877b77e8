"""Shared oracle helpers for the test suite."""

from __future__ import annotations

import dataclasses

import numpy as np

from lagdyn import sim


def fitted_order(steps, errors) -> float:
    """Least-squares slope of log(error) against log(step)."""
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


def silence(spec: sim.SystemSpec) -> sim.SystemSpec:
    """Copy of a system spec with all noise gains set to zero."""
    return dataclasses.replace(
        spec, volatility=lambda y: np.zeros(np.shape(y))
    )


def mechanical_spec(
    name: str,
    accel,
    accel_jacobian,
    gains: np.ndarray,
    initial: np.ndarray,
) -> sim.SystemSpec:
    """SystemSpec for u'' = accel(u) + gains * white noise.

    The state concatenates displacement and velocity blocks, matching the
    ensemble container layout.
    """
    n = gains.size

    def drift(y):
        u, v = y[..., :n], y[..., n:]
        return np.concatenate([v, accel(u)], axis=-1)

    def jacobian(y):
        u = y[..., :n]
        jac = np.zeros(y.shape[:-1] + (2 * n, 2 * n))
        jac[..., :n, n:] = np.eye(n)
        jac[..., n:, :n] = accel_jacobian(u)
        return jac

    g_full = np.concatenate([np.zeros(n), gains])
    return sim.SystemSpec(
        name=name,
        kind="sde",
        dim=n,
        drift=drift,
        volatility=lambda y: np.broadcast_to(g_full, np.shape(y)),
        initial_state=np.asarray(initial, dtype=float),
        drift_jacobian=jacobian,
        acceleration=accel,
    )


def geometric_ou_spec() -> sim.SystemSpec:
    """dX = -X dt + X dW: multiplicative noise, exactly solvable.

    X(t) = X(0) exp(-1.5 t + W(t)), so the endpoint depends on the driving
    path only through W(t_final). Euler-Maruyama has strong order 0.5 here.
    """
    return sim.SystemSpec(
        name="geometric-ou",
        kind="sde",
        dim=1,
        drift=lambda y: -y,
        volatility=lambda y: y,
        initial_state=np.array([1.0]),
    )


def em_geometric_strong_errors(dts, t_final, n_real, base_seed) -> np.ndarray:
    """Endpoint RMS strong error of Euler-Maruyama on the geometric system.

    The exact endpoint is evaluated on the same Wiener path the scheme
    consumed, reconstructed from the per-realization seed.
    """
    spec = geometric_ou_spec()
    errs = []
    for dt in dts:
        n = int(round(t_final / dt))
        states = sim.integrate_batch(
            spec, dt, n, n_real, base_seed, method="euler"
        )
        end = states[:, 0, -1]
        w_final = np.empty(n_real)
        for k in range(n_real):
            xi = sim.NoiseStream(
                sim.derived_seed(base_seed, k)
            ).standard_normals((n, 1))
            w_final[k] = np.sqrt(dt) * xi.sum()
        exact = np.exp(-1.5 * t_final + w_final)
        errs.append(float(np.sqrt(np.mean((end - exact) ** 2))))
    return np.array(errs)


def cubic_additive_spec() -> sim.SystemSpec:
    """dX = -4 X^3 dt + dW: additive noise with curved drift.

    The drift's second derivative is nonzero, so the strong Taylor 1.5
    scheme converges at genuine order 1.5 (no superconvergence).
    """

    def drift(y):
        return -4.0 * y**3

    def jacobian(y):
        return (-12.0 * y**2)[..., None]

    def curvature(y):
        return -24.0 * y

    return sim.SystemSpec(
        name="cubic-additive",
        kind="sde",
        dim=1,
        drift=drift,
        volatility=lambda y: np.ones(np.shape(y)),
        initial_state=np.array([1.0]),
        drift_jacobian=jacobian,
        noise_curvature=curvature,
    )


def taylor_cubic_strong_errors(
    coarse_counts, fine_steps, t_final, n_real, base_seed
) -> np.ndarray:
    """Endpoint RMS strong error of the Taylor scheme on the cubic system.

    A pathwise reference X = Y + W with Y' = -4 (Y + W)^3 is solved with
    Heun's method on a fine grid; the coarse scheme consumes Wiener
    increments and integrated deviations aggregated from the same fine
    path, so the comparison is path-coupled.

    Args:
        coarse_counts: Coarse step counts; each must divide fine_steps.
        fine_steps: Fine-grid step count for the reference.
        t_final: Endpoint time.
        n_real: Number of realizations.
        base_seed: Noise seed.

    Returns:
        RMS endpoint errors, one per coarse count.
    """
    spec = cubic_additive_spec()
    x0 = float(spec.initial_state[0])
    hf = t_final / fine_steps
    dw_fine = np.sqrt(hf) * sim.NoiseStream(base_seed).standard_normals(
        (n_real, fine_steps)
    )
    w = np.concatenate(
        [np.zeros((n_real, 1)), np.cumsum(dw_fine, axis=1)], axis=1
    )

    y = np.full(n_real, x0)
    for j in range(fine_steps):
        f1 = -4.0 * (y + w[:, j]) ** 3
        f2 = -4.0 * (y + hf * f1 + w[:, j + 1]) ** 3
        y = y + 0.5 * hf * (f1 + f2)
    x_ref = y + w[:, -1]

    errs = []
    for n_coarse in coarse_counts:
        if fine_steps % n_coarse:
            raise ValueError("coarse counts must divide fine_steps")
        m = fine_steps // n_coarse
        h = t_final / n_coarse
        starts = w[:, 0:fine_steps:m]
        ends = w[:, m::m]
        inner = w[:, :fine_steps].reshape(n_real, n_coarse, m)
        # trapezoid of (W - W_start) over each coarse block
        sums = inner.sum(axis=2) - inner[:, :, 0]
        dz = hf * (sums - (m - 1) * starts + 0.5 * (ends - starts))
        dw = ends - starts
        states = sim.integrate_taylor15_increments(
            spec, h, dw[:, :, None], dz[:, :, None]
        )
        errs.append(float(np.sqrt(np.mean((states[:, 0, -1] - x_ref) ** 2))))
    return np.array(errs)


def ou_additive_spec(theta: float) -> sim.SystemSpec:
    """dX = -theta X dt + dW: linear drift, additive unit noise."""

    def jacobian(y):
        return np.broadcast_to(np.array([[-theta]]), y.shape[:-1] + (1, 1))

    return sim.SystemSpec(
        name="ou-additive",
        kind="sde",
        dim=1,
        drift=lambda y: -theta * y,
        volatility=lambda y: np.ones(np.shape(y)),
        initial_state=np.array([1.0]),
        drift_jacobian=jacobian,
    )


def ou_conditional_strong_errors(
    dts, t_final, theta, n_real, base_seed
) -> np.ndarray:
    """Endpoint RMS error of the Taylor scheme against an exact oracle.

    The oracle advances the exact transition conditioned on the same
    (dW, dZ) pair the scheme consumed each step, drawing the conditional
    remainder (variance O(h^5) per step) from an independent stream. On
    this linear system the scheme's h^1.5 error term vanishes, so the
    measured slope exceeds 1.5 (about 2).
    """
    spec = ou_additive_spec(theta)
    errs = []
    for dt in dts:
        n = int(round(t_final / dt))
        states = sim.integrate_batch(
            spec, dt, n, n_real, base_seed, method="taylor15"
        )
        end = states[:, 0, -1]

        xi = np.empty((n_real, n, 2))
        for k in range(n_real):
            draws = sim.NoiseStream(
                sim.derived_seed(base_seed, k)
            ).standard_normals((n, 1, 2))
            xi[k] = draws[:, 0, :]
        dw, dz = sim.increments_from_normals(dt, xi)

        h = dt
        decay = np.exp(-theta * h)
        c1 = (1.0 - decay) / theta
        c2 = (1.0 - decay * (1.0 + theta * h)) / theta**2
        k1 = 4.0 * c1 / h - 6.0 * c2 / h**2
        k2 = -6.0 * c1 / h**2 + 12.0 * c2 / h**3
        var_i = (1.0 - decay**2) / (2.0 * theta)
        resid_var = max(var_i - k1 * c1 - k2 * c2, 0.0)
        resid_sd = np.sqrt(resid_var)
        xi3 = sim.NoiseStream(
            sim.derived_seed(base_seed + 987654321, 0)
        ).standard_normals((n_real, n))

        x = np.full(n_real, float(spec.initial_state[0]))
        for i in range(n):
            x = x * decay + k1 * dw[:, i] + k2 * dz[:, i] + resid_sd * xi3[:, i]
        errs.append(float(np.sqrt(np.mean((end - x) ** 2))))
    return np.array(errs)
