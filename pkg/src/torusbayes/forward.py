"""Time-dependent forward maps on the torus.

Three solvers share one integrator: an integrating-factor (Lawson) Heun
scheme that applies the diffusion semigroup exactly per step and treats
everything else explicitly, second order in time:

* ``solve_rde``   — reaction-diffusion du/dt = Lap(u) + f(u), d in {1,2};
* ``solve_nse``   — projected 2D Navier-Stokes du/dt + nu*A*u + B[u,u] = f;
* ``oseen_solve`` — Picard/Oseen linearizations du^l/dt + nu*A*u^l
                    + B[u^(l-1), u^l] = f with the convecting field frozen
                    at the previous iterate.

Nonlinear products are formed pseudo-spectrally with 2/3-rule dealiasing;
Navier-Stokes states are Leray-projected at every stage.  Any NaN/Inf
aborts with the failing time stamp; nothing is clamped.
"""

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .spectral import (
    ConfigurationError,
    FOUR_PI_SQUARED,
    SpectralField,
    dealias_mask,
    ksq_mesh,
    sobolev_norm,
    wavenumber_mesh,
)


class SolverDivergenceError(RuntimeError):
    """State blew up (NaN/Inf); carries the time of failure."""

    def __init__(self, time: float, solver: str):
        self.time = float(time)
        self.solver = solver
        super().__init__(f"{solver} diverged (NaN/Inf in state) at t = {time:.6g}")


class OseenConvergenceError(RuntimeError):
    """Oseen iteration exhausted its cap; carries the gap history."""

    def __init__(self, gaps):
        self.gaps = list(gaps)
        super().__init__(
            f"Oseen iteration did not reach tolerance in {len(self.gaps)} steps; "
            f"last gap {self.gaps[-1]:.3e}" if self.gaps else "Oseen iteration failed"
        )


class PreconditionError(ValueError):
    """Solver input violates a precondition (e.g. non-divergence-free state)."""


# ---------------------------------------------------------------------------
# reaction terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReactionTerm:
    """Compactly supported smooth reaction f(u) = a*u*exp(1/((u/b)^2 - 1)).

    ``kind='zero'`` disables the reaction.  The bump is C^infinity with
    support [-b, b] and f(0) = 0.
    """

    kind: str = "smooth_bump"
    amplitude: float = 1.0
    width: float = 10.0

    def __post_init__(self):
        if self.kind not in ("zero", "smooth_bump"):
            raise ConfigurationError(f"unknown reaction kind {self.kind!r}")
        if self.width <= 0:
            raise ConfigurationError("support half-width must be positive")

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(u)
        return _kernels.bump_reaction(u, self.amplitude, self.width)

    def _scan(self, n: int = 20001) -> np.ndarray:
        u = np.linspace(-self.width, self.width, n)
        return u, self(u)

    def sup_norm(self) -> float:
        if self.kind == "zero":
            return 0.0
        _, fu = self._scan()
        return float(np.abs(fu).max())

    def c1_distance(self, other: "ReactionTerm") -> float:
        """||f1 - f2||_{C^1} by dense scan (sup of value and derivative gaps)."""
        width = max(self.width, other.width)
        u = np.linspace(-width, width, 40001)
        d = self(u) - other(u)
        du = np.gradient(d, u)
        return float(np.abs(d).max() + np.abs(du).max())


@dataclass(frozen=True)
class NseParams:
    """Viscosity, time-independent divergence-free forcing, and horizon."""

    viscosity: float
    forcing: SpectralField
    horizon: float

    def __post_init__(self):
        if self.viscosity <= 0:
            raise ConfigurationError("viscosity must be positive")
        if self.horizon <= 0:
            raise ConfigurationError("horizon must be positive")
        _require_divfree(self.forcing, "forcing")


def _require_divfree(field: SpectralField, label: str) -> None:
    if field.components != 2:
        raise PreconditionError(f"{label} must be a 2-component field")
    scale = 1.0 + float(np.abs(field.coeffs).max())
    if field.divergence_defect() > 1e-9 * scale:
        raise PreconditionError(f"{label} is not divergence-free")
    if np.abs(field.mean_mode()).max() > 1e-12 * scale:
        raise PreconditionError(f"{label} must have vanishing mean")


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

class Trajectory:
    """Time-indexed snapshots of SpectralFields on [0, T].

    times[0] = 0 and times[-1] = T; snapshots may be thinned by
    ``store_every`` but always include both endpoints.
    """

    def __init__(self, times, states, meta=None):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or len(times) != len(states) or len(times) < 2:
            raise ConfigurationError("trajectory needs matching times/states, >= 2")
        if np.any(np.diff(times) <= 0) or times[0] != 0.0:
            raise ConfigurationError("times must strictly increase from 0")
        self.times = times
        self.states = tuple(states)
        self.meta = dict(meta or {})
        first = self.states[0]
        self.dim = first.dim
        self.resolution = first.resolution
        self.components = first.components
        self._stack = None

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def coeff_stack(self) -> np.ndarray:
        """(n_times, components, M^d) complex view of all snapshots."""
        if self._stack is None:
            flat = [
                np.stack([c.reshape(-1) for c in s.component_arrays()])
                for s in self.states
            ]
            self._stack = np.stack(flat)
        return self._stack

    def state_at(self, t: float) -> SpectralField:
        """Cubic (4-point Lagrange) interpolation of coefficients in time."""
        idx, w = _lagrange_window(self.times, float(t))
        coeffs = sum(w[m] * self.states[idx + m].coeffs for m in range(len(w)))
        return SpectralField(self.dim, self.resolution, coeffs)


def _lagrange_window(times: np.ndarray, t: float):
    """Window start index and Lagrange weights for up to 4 bracketing nodes."""
    n = len(times)
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise ConfigurationError(f"t = {t} outside trajectory horizon")
    t = min(max(t, times[0]), times[-1])
    j = int(np.searchsorted(times, t, side="right") - 1)
    j = min(max(j, 0), n - 2)
    width = min(4, n)
    start = min(max(j - 1, 0), n - width)
    nodes = times[start:start + width]
    w = np.empty(width)
    for i in range(width):
        num = 1.0
        for m in range(width):
            if m != i:
                num *= (t - nodes[m]) / (nodes[i] - nodes[m])
        w[i] = num
    return start, w


def zero_trajectory(like: Trajectory) -> Trajectory:
    zero = SpectralField.zeros(like.dim, like.resolution, like.components)
    return Trajectory(like.times, [zero] * len(like.times), {"solver": "zero"})


# ---------------------------------------------------------------------------
# pointwise evaluation G(theta)(t, x)
# ---------------------------------------------------------------------------

class DesignEvaluator:
    """Reusable evaluator of a trajectory at fixed design points.

    Spatial evaluation is the exact coefficient sum at x; time uses the
    4-point Lagrange cubic between stored snapshots.  Binding the design
    once lets repeated likelihood evaluations (same data, new theta) skip
    rebuilding phase matrices.
    """

    def __init__(self, times, dim, resolution, ts, xs):
        self.times = np.asarray(times, dtype=float)
        self.dim = dim
        self.resolution = resolution
        ts = np.asarray(ts, dtype=float)
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[0] != ts.shape[0]:
            xs = xs.reshape(len(ts), dim)
        if xs.shape != (len(ts), dim):
            raise ConfigurationError("design points must have shape (n, dim)")
        self.n_points = len(ts)
        starts = np.empty(self.n_points, dtype=np.int64)
        weights = []
        for i, t in enumerate(ts):
            s, w = _lagrange_window(self.times, float(t))
            starts[i] = s
            weights.append(w)
        self.window = len(weights[0]) if weights else 0
        self.weights = np.array(weights) if weights else np.zeros((0, 0))
        self.starts = starts
        self.order = np.argsort(starts, kind="stable")
        self.phases = self._phase_matrix(xs[self.order])
        self.sorted_starts = starts[self.order]
        self.sorted_weights = self.weights[self.order]

    def _phase_matrix(self, xs_sorted) -> np.ndarray:
        grids = wavenumber_mesh(self.dim, self.resolution)
        kflat = np.stack([g.reshape(-1).astype(float) for g in grids])
        inner = xs_sorted @ kflat
        return np.exp(2j * np.pi * inner)

    def __call__(self, traj: Trajectory) -> np.ndarray:
        """(n_points, components) values, in the original design order."""
        if traj.dim != self.dim or traj.resolution != self.resolution:
            raise ConfigurationError("trajectory layout does not match evaluator")
        if len(traj.times) != len(self.times) or not np.allclose(
            traj.times, self.times, rtol=0, atol=1e-12
        ):
            raise ConfigurationError("trajectory time grid does not match evaluator")
        stack = traj.coeff_stack()
        comp = traj.components
        out_sorted = np.empty((self.n_points, comp))
        pos = 0
        while pos < self.n_points:
            s = self.sorted_starts[pos]
            end = pos
            while end < self.n_points and self.sorted_starts[end] == s:
                end += 1
            block_phases = self.phases[pos:end]
            w = self.sorted_weights[pos:end]
            for c in range(comp):
                snaps = stack[s:s + self.window, c, :]
                vals = np.real(block_phases @ snaps.T)
                out_sorted[pos:end, c] = np.sum(vals * w, axis=1)
            pos = end
        out = np.empty_like(out_sorted)
        out[self.order] = out_sorted
        return out


def evaluate_forward_batch(traj: Trajectory, ts, xs) -> np.ndarray:
    return DesignEvaluator(traj.times, traj.dim, traj.resolution, ts, xs)(traj)


def evaluate_forward(traj: Trajectory, t: float, x):
    """Field value(s) at one space-time point; scalar for scalar fields."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    vals = evaluate_forward_batch(traj, np.array([t]), x[None, :])
    return float(vals[0, 0]) if traj.components == 1 else vals[0]


# ---------------------------------------------------------------------------
# reaction-diffusion solver
# ---------------------------------------------------------------------------

def _time_grid(horizon: float, dt: float):
    if dt <= 0 or dt > horizon:
        raise ConfigurationError("need 0 < dt <= horizon")
    n = max(1, int(round(horizon / dt)))
    if not math.isclose(n * dt, horizon, rel_tol=1e-9):
        n = int(math.ceil(horizon / dt - 1e-12))
    return n, horizon / n


def _check_finite(coeffs, t, solver):
    if not np.all(np.isfinite(coeffs)):
        raise SolverDivergenceError(t, solver)


def solve_rde(theta: SpectralField, reaction: ReactionTerm, horizon: float,
              dt: float, store_every: int = 1) -> Trajectory:
    """Integrate du/dt = Lap(u) + f(u) with periodic BCs from u(0) = theta.

    Exact diffusion propagator exp(-4 pi^2 |k|^2 dt) per step, dealiased
    explicit reaction, Heun in the Lawson-transformed variable (second
    order).  Snapshots land on the uniform dt grid.
    """
    if theta.components != 1:
        raise ConfigurationError("reaction-diffusion needs a scalar field")
    if not theta.is_finite():
        raise SolverDivergenceError(0.0, "rde")
    n_steps, dt = _time_grid(horizon, dt)
    M = theta.resolution
    dim = theta.dim
    norm = M ** dim
    decay = np.exp(-FOUR_PI_SQUARED * ksq_mesh(dim, M) * dt)
    mask = dealias_mask(dim, M)

    def rhs(c):
        u_phys = np.real(np.fft.ifftn(c)) * norm
        fu = reaction(u_phys)
        out = np.fft.fftn(fu) / norm
        out[~mask] = 0.0
        return out

    c = theta.coeffs.copy()
    times = [0.0]
    states = [theta]
    for step in range(1, n_steps + 1):
        t = step * dt
        if reaction.kind == "zero":
            c = decay * c
        else:
            r0 = rhs(c)
            pred = _kernels.lawson_predictor(decay, c, r0, dt)
            c = _kernels.lawson_corrector(decay, c, r0, rhs(pred), dt)
        _check_finite(c, t, "rde")
        if step % store_every == 0 or step == n_steps:
            times.append(t)
            states.append(SpectralField(dim, M, c))
    meta = {"solver": "rde", "dt": dt, "resolution": M, "store_every": store_every,
            "reaction": reaction.kind}
    return Trajectory(np.array(times), states, meta)


# ---------------------------------------------------------------------------
# Navier-Stokes and Oseen solvers
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _nse_arrays(resolution: int):
    kx, ky = wavenumber_mesh(2, resolution)
    kxf, kyf = kx.astype(float), ky.astype(float)
    ksq = kxf ** 2 + kyf ** 2
    inv = np.zeros_like(ksq)
    nz = ksq > 0
    inv[nz] = 1.0 / ksq[nz]
    mask = dealias_mask(2, resolution)
    return kxf, kyf, ksq, inv, mask


class _NseStepper:
    """Shared machinery for the nonlinear and Oseen-linearized steppers."""

    def __init__(self, resolution: int, viscosity: float, forcing: SpectralField):
        self.M = resolution
        self.norm = resolution ** 2
        self.nu = viscosity
        kxf, kyf, ksq, inv, mask = _nse_arrays(resolution)
        self.kx, self.ky, self.ksq, self.inv_ksq, self.mask = kxf, kyf, ksq, inv, mask
        self.fhat = np.stack([forcing.coeffs[0], forcing.coeffs[1]])
        self._decay_cache = {}

    def decay(self, dt: float) -> np.ndarray:
        key = round(dt, 15)
        if key not in self._decay_cache:
            self._decay_cache[key] = np.exp(-self.nu * FOUR_PI_SQUARED * self.ksq * dt)
        return self._decay_cache[key]

    def project(self, cx, cy):
        return _kernels.leray_pair(cx, cy, self.kx, self.ky, self.inv_ksq)

    def to_phys(self, c):
        return np.real(np.fft.ifftn(c)) * self.norm

    def convection(self, conv_c, state_c):
        """B[conv, state] = P[(conv . grad) state], dealiased, in coefficients."""
        two_pi_i = 2j * np.pi
        ux = self.to_phys(conv_c[0])
        uy = self.to_phys(conv_c[1])
        dxv1 = self.to_phys(two_pi_i * self.kx * state_c[0])
        dyv1 = self.to_phys(two_pi_i * self.ky * state_c[0])
        dxv2 = self.to_phys(two_pi_i * self.kx * state_c[1])
        dyv2 = self.to_phys(two_pi_i * self.ky * state_c[1])
        a1, a2 = _kernels.convect_2d(ux, uy, dxv1, dyv1, dxv2, dyv2)
        b1 = np.fft.fftn(a1) / self.norm
        b2 = np.fft.fftn(a2) / self.norm
        b1[~self.mask] = 0.0
        b2[~self.mask] = 0.0
        return self.project(b1, b2)

    def max_speed(self, c) -> float:
        return max(float(np.abs(self.to_phys(c[0])).max()),
                   float(np.abs(self.to_phys(c[1])).max()))

    def substeps(self, dt: float, speed: float) -> int:
        # CFL guard dt * M * max|u| <= 0.5, applied per output step.
        if speed <= 0:
            return 1
        return max(1, int(math.ceil(dt * self.M * speed / 0.5)))

    def heun_step(self, c, dt, rhs):
        """One Lawson-Heun step of dc/dt = -nu A c + rhs(c, t)."""
        decay = self.decay(dt)
        r0 = rhs(c, 0.0)
        pred = np.stack([
            _kernels.lawson_predictor(decay, c[i], r0[i], dt) for i in range(2)
        ])
        r1 = rhs(pred, dt)
        out = np.stack([
            _kernels.lawson_corrector(decay, c[i], r0[i], r1[i], dt) for i in range(2)
        ])
        ox, oy = self.project(out[0], out[1])
        return np.stack([ox, oy])


def solve_nse(theta: SpectralField, params: NseParams, dt: float,
              store_every: int = 1) -> Trajectory:
    """Integrate the Leray-projected 2D Navier-Stokes equation from theta.

    du/dt + nu*A*u + B[u,u] = f with A = -P Lap and B[u,v] = P[(u.grad)v],
    pseudo-spectral with dealiasing, Leray projection at every stage, and
    the viscous semigroup applied exactly.  A CFL check dt*M*max|u| <= 0.5
    triggers substepping per stored interval.
    """
    _require_divfree(theta, "initial condition")
    if theta.resolution != params.forcing.resolution:
        raise ConfigurationError("theta and forcing resolutions differ")
    n_steps, dt = _time_grid(params.horizon, dt)
    stepper = _NseStepper(theta.resolution, params.viscosity, params.forcing)

    def rhs(c, _tau):
        bx, by = stepper.convection(c, c)
        return np.stack([stepper.fhat[0] - bx, stepper.fhat[1] - by])

    c = np.stack([theta.coeffs[0], theta.coeffs[1]])
    times = [0.0]
    states = [theta]
    for step in range(1, n_steps + 1):
        t = step * dt
        n_sub = stepper.substeps(dt, stepper.max_speed(c))
        sub_dt = dt / n_sub
        for _ in range(n_sub):
            c = stepper.heun_step(c, sub_dt, rhs)
        _check_finite(c, t, "nse")
        if step % store_every == 0 or step == n_steps:
            times.append(t)
            states.append(SpectralField(2, theta.resolution, c))
    meta = {"solver": "nse", "dt": dt, "resolution": theta.resolution,
            "store_every": store_every, "viscosity": params.viscosity}
    return Trajectory(np.array(times), states, meta)


@dataclass
class OseenResult:
    """Iterates u^0..u^L with the sup-in-time Hdot^2 gaps between neighbours.

    ``uniform_bound_ratio`` reports sup_t ||u^L||_{Hdot^2} / (1 + ||theta||^2)
    — a diagnostic for the a-priori bound the convergence analysis assumes
    of the last iterate; it is measured, never asserted.
    """

    iterates: list
    iterations: int
    successive_gaps: list
    uniform_bound_ratio: float = float("nan")

    @property
    def final(self) -> Trajectory:
        return self.iterates[-1]


def trajectory_gap(a: Trajectory, b: Trajectory, order: float = 2.0,
                   eigenweight: str = "4pi2") -> float:
    """sup over the shared time grid of the homogeneous H^order distance."""
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times):
        raise ConfigurationError("trajectories must share a time grid")
    gap = 0.0
    for sa, sb in zip(a.states, b.states):
        gap = max(gap, sobolev_norm(sa - sb, order, "homogeneous", eigenweight))
    return gap


def oseen_solve(theta: SpectralField, params: NseParams, dt: float,
                iterations: int = None, tolerance: float = None,
                initializer: Trajectory = None, max_iterations: int = 32,
                store_every: int = 1) -> OseenResult:
    """Picard/Oseen iteration for Navier-Stokes with frozen convection.

    Each iterate solves the linear equation du/dt + nu*A*u + B[u_prev, u] = f,
    u(0) = theta, reading u_prev from the stored previous trajectory
    (cubic-interpolated at stage times).  Stops after ``iterations`` fixed
    steps, or when the sup-t Hdot^2 gap between successive iterates drops
    to ``tolerance`` (cap ``max_iterations``, exceeded -> diagnostic error
    carrying the gap history).
    """
    if (iterations is None) == (tolerance is None):
        raise ConfigurationError("specify exactly one of iterations / tolerance")
    if tolerance is not None and tolerance <= 0:
        raise ConfigurationError("tolerance must be positive")
    _require_divfree(theta, "initial condition")
    n_steps, dt_eff = _time_grid(params.horizon, dt)
    stepper = _NseStepper(theta.resolution, params.viscosity, params.forcing)

    def linear_solve(prev: Trajectory, prev_is_zero: bool) -> Trajectory:
        c = np.stack([theta.coeffs[0], theta.coeffs[1]])
        times = [0.0]
        states = [theta]
        speed = 0.0
        if not prev_is_zero:
            speed = max(stepper.max_speed(np.stack([
                s.coeffs[0], s.coeffs[1]])) for s in prev.states)
        for step in range(1, n_steps + 1):
            t0 = (step - 1) * dt_eff
            t1 = step * dt_eff
            n_sub = stepper.substeps(dt_eff, speed)
            sub_dt = dt_eff / n_sub
            for s in range(n_sub):
                ts = t0 + s * sub_dt

                def rhs(cc, tau):
                    if prev_is_zero:
                        return stepper.fhat.copy()
                    conv = prev.state_at(ts + tau).coeffs
                    bx, by = stepper.convection(conv, cc)
                    return np.stack([stepper.fhat[0] - bx, stepper.fhat[1] - by])

                c = stepper.heun_step(c, sub_dt, rhs)
            _check_finite(c, t1, "oseen")
            if step % store_every == 0 or step == n_steps:
                times.append(t1)
                states.append(SpectralField(2, theta.resolution, c))
        meta = {"solver": "oseen", "dt": dt_eff, "resolution": theta.resolution,
                "store_every": store_every, "viscosity": params.viscosity}
        return Trajectory(np.array(times), states, meta)

    if initializer is None:
        probe = None
        prev_is_zero = True
        iterates = []
    else:
        probe = initializer
        prev_is_zero = False
        iterates = [initializer]

    def finish(result_iterates, n_iter, gap_list):
        final = result_iterates[-1]
        sup_h2 = max(sobolev_norm(s, 2.0, "homogeneous") for s in final.states)
        theta_h2 = sobolev_norm(theta, 2.0, "homogeneous")
        ratio = sup_h2 / (1.0 + theta_h2 ** 2)
        return OseenResult(result_iterates, n_iter, gap_list, ratio)

    gaps = []
    target = iterations if iterations is not None else max_iterations
    for it in range(1, target + 1):
        nxt = linear_solve(probe if probe is not None else None, prev_is_zero)
        if probe is None:
            iterates.append(zero_trajectory(nxt))
        gaps.append(trajectory_gap(nxt, iterates[-1]))
        iterates.append(nxt)
        probe = nxt
        prev_is_zero = False
        if tolerance is not None and gaps[-1] <= tolerance:
            return finish(iterates, it, gaps)
    if tolerance is not None:
        raise OseenConvergenceError(gaps)
    return finish(iterates, target, gaps)


def stability_gap_nse(theta: SpectralField, params_a: NseParams,
                      params_b: NseParams, dt: float,
                      store_every: int = 1) -> float:
    """sup_t Hdot^2 distance between solutions under two parameter sets."""
    if not math.isclose(params_a.horizon, params_b.horizon):
        raise ConfigurationError("parameter sets must share the horizon")
    ua = solve_nse(theta, params_a, dt, store_every)
    ub = solve_nse(theta, params_b, dt, store_every)
    return trajectory_gap(ua, ub)


def sup_gap(a: Trajectory, b: Trajectory) -> float:
    """sup over shared snapshots and grid points of the pointwise gap."""
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times):
        raise ConfigurationError("trajectories must share a time grid")
    worst = 0.0
    for sa, sb in zip(a.states, b.states):
        diff = (sa - sb).to_physical()
        if sa.components == 2:
            mag = np.sqrt(diff[0] ** 2 + diff[1] ** 2)
        else:
            mag = np.abs(diff)
        worst = max(worst, float(mag.max()))
    return worst


# ---------------------------------------------------------------------------
# forward-model front ends (parameter -> predictions at design points)
# ---------------------------------------------------------------------------

class RdeModel:
    """G: theta -> reaction-diffusion solution, evaluated pointwise."""

    def __init__(self, reaction: ReactionTerm, horizon: float, dt: float,
                 store_every: int = 1):
        self.reaction = reaction
        self.horizon = horizon
        self.dt = dt
        self.store_every = store_every

    def trajectory(self, theta: SpectralField) -> Trajectory:
        return solve_rde(theta, self.reaction, self.horizon, self.dt,
                         self.store_every)

    def predict(self, theta, ts, xs):
        return evaluate_forward_batch(self.trajectory(theta), ts, xs)


class NseModel:
    """G: theta -> 2D Navier-Stokes solution, evaluated pointwise."""

    def __init__(self, params: NseParams, dt: float, store_every: int = 1):
        self.params = params
        self.horizon = params.horizon
        self.dt = dt
        self.store_every = store_every

    def trajectory(self, theta: SpectralField) -> Trajectory:
        return solve_nse(theta, self.params, self.dt, self.store_every)

    def predict(self, theta, ts, xs):
        return evaluate_forward_batch(self.trajectory(theta), ts, xs)


class OseenModel:
    """G-tilde: theta -> final Oseen iterate, evaluated pointwise."""

    def __init__(self, params: NseParams, dt: float, iterations: int = None,
                 tolerance: float = None, store_every: int = 1,
                 max_iterations: int = 32):
        self.params = params
        self.horizon = params.horizon
        self.dt = dt
        self.iterations = iterations
        self.tolerance = tolerance
        self.store_every = store_every
        self.max_iterations = max_iterations

    def solve(self, theta: SpectralField) -> OseenResult:
        return oseen_solve(theta, self.params, self.dt, self.iterations,
                           self.tolerance, None, self.max_iterations,
                           self.store_every)

    def trajectory(self, theta: SpectralField) -> Trajectory:
        return self.solve(theta).final

    def predict(self, theta, ts, xs):
        return evaluate_forward_batch(self.trajectory(theta), ts, xs)


# ---------------------------------------------------------------------------
# trajectory persistence: JSON header + little-endian complex blocks
# ---------------------------------------------------------------------------

def save_trajectory(traj: Trajectory, path) -> None:
    """One file: JSON header line, then float64 (re, im) coefficient blocks."""
    header = {
        "times": [float(t) for t in traj.times],
        "dim": traj.dim,
        "resolution": traj.resolution,
        "components": traj.components,
        "meta": traj.meta,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for state in traj.states:
            fh.write(np.ascontiguousarray(state.coeffs, dtype="<c16").tobytes())


def load_trajectory(path) -> Trajectory:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        blob = fh.read()
    dim = header["dim"]
    M = header["resolution"]
    comp = header["components"]
    shape = (M,) * dim if comp == 1 else (2,) + (M,) * dim
    per_state = int(np.prod(shape))
    raw = np.frombuffer(blob, dtype="<c16")
    n = len(header["times"])
    if raw.size != n * per_state:
        raise ConfigurationError("trajectory payload size mismatch")
    states = [
        SpectralField(dim, M, raw[i * per_state:(i + 1) * per_state].reshape(shape))
        for i in range(n)
    ]
    return Trajectory(np.array(header["times"]), states, header.get("meta"))
