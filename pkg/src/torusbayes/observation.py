"""Synthetic data generation under the true model, and variance proxies.

Records follow the heteroscedastic regression Y_i = G(theta0)(t_i, X_i)
+ eps_i with independent noise of per-record variance sigma_i^2.  The
auxiliary panel holds short time-window observations per sensor from
which sample-variance proxies s_j^2 are estimated; the panel uses a PRNG
stream disjoint from the inference dataset.
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .forward import DesignEvaluator, Trajectory, evaluate_forward_batch
from .spectral import ConfigurationError

_PANEL_STREAM = 7401
_DATA_STREAM = 0


@dataclass(frozen=True)
class NoiseModel:
    """Noise law and per-observation variance assignment.

    kind: 'gaussian' or 'bounded_uniform' (centred uniform with matching
    variance, a Bernstein-class instance).  variance_rule:
      * 'constant'     — every record gets ``sigma2``;
      * 'per_sensor'   — record i gets ``sensor_sigma2[sensor(i)]``;
      * 'random_range' — drawn uniformly in [range_lo, range_hi] (once per
        sensor under a fixed-sensor design, else per record).
    ``sigma2 = 0`` is allowed as a testing-only degenerate override.
    """

    kind: str = "gaussian"
    variance_rule: str = "constant"
    sigma2: float = 1.0
    sensor_sigma2: tuple = None
    range_lo: float = 0.5
    range_hi: float = 2.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "bounded_uniform"):
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if self.variance_rule not in ("constant", "per_sensor", "random_range"):
            raise ConfigurationError(f"unknown variance rule {self.variance_rule!r}")
        if self.variance_rule == "constant" and self.sigma2 < 0:
            raise ConfigurationError("sigma2 must be nonnegative")
        if self.variance_rule == "per_sensor":
            if not self.sensor_sigma2 or min(self.sensor_sigma2) <= 0:
                raise ConfigurationError("per-sensor variances must be positive")
        if self.variance_rule == "random_range" and not (
            0 < self.range_lo <= self.range_hi
        ):
            raise ConfigurationError("need 0 < range_lo <= range_hi")


@dataclass(frozen=True)
class Design:
    """Design law for the covariates (t_i, X_i)."""

    kind: str
    sensors: tuple = None  # tuple of points for the fixed-sensor design

    def __post_init__(self):
        if self.kind not in ("uniform_time_space", "uniform_time_fixed_sensors"):
            raise ConfigurationError(f"unknown design kind {self.kind!r}")
        if self.kind == "uniform_time_fixed_sensors" and not self.sensors:
            raise ConfigurationError("fixed-sensor design needs a nonempty sensor set")

    def sensor_array(self, dim: int) -> np.ndarray:
        arr = np.asarray(self.sensors, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape[1] != dim:
            raise ConfigurationError("sensor locations do not match the dimension")
        return arr


@dataclass
class Dataset:
    """Design points, observations, and (hidden) true noise variances."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    sensor: np.ndarray  # -1 when the design has no sensors
    true_sigma2: np.ndarray
    design: Design
    seed: int
    horizon: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        if n < 1:
            raise ConfigurationError("dataset needs at least one record")
        if not (len(self.x) == len(self.y) == len(self.sensor)
                == len(self.true_sigma2) == n):
            raise ConfigurationError("record arrays must share their length")

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def evaluator(self, traj_times, resolution) -> DesignEvaluator:
        return DesignEvaluator(traj_times, self.dim, resolution, self.t, self.x)


def draw_design(design: Design, n: int, horizon: float, dim: int,
                rng: np.random.Generator):
    ts = rng.uniform(0.0, horizon, size=n)
    if design.kind == "uniform_time_space":
        xs = rng.uniform(0.0, 1.0, size=(n, dim))
        sensor = np.full(n, -1, dtype=np.int64)
    else:
        sensors = design.sensor_array(dim)
        sensor = rng.integers(0, len(sensors), size=n)
        xs = sensors[sensor]
    return ts, xs, sensor


def _assign_variances(noise: NoiseModel, design: Design, sensor: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    n = len(sensor)
    if noise.variance_rule == "constant":
        return np.full(n, float(noise.sigma2))
    if noise.variance_rule == "per_sensor":
        table = np.asarray(noise.sensor_sigma2, dtype=float)
        if sensor.min() < 0 or sensor.max() >= len(table):
            raise ConfigurationError("per-sensor rule needs a fixed-sensor design")
        return table[sensor]
    if design.kind == "uniform_time_fixed_sensors":
        table = rng.uniform(noise.range_lo, noise.range_hi,
                            size=len(design.sensors))
        return table[sensor]
    return rng.uniform(noise.range_lo, noise.range_hi, size=n)


def _draw_noise(noise: NoiseModel, sigma2: np.ndarray, shape,
                rng: np.random.Generator) -> np.ndarray:
    sd = np.sqrt(sigma2)[:, None]
    if noise.kind == "gaussian":
        return sd * rng.standard_normal(shape)
    half_width = np.sqrt(3.0) * sd  # centred uniform with matching variance
    return rng.uniform(-1.0, 1.0, size=shape) * half_width


def generate_dataset(traj: Trajectory, n: int, noise: NoiseModel, design: Design,
                     seed: int) -> Dataset:
    """Draw (t_i, X_i) from the design law, evaluate the forward map, add noise.

    Fully reproducible from ``seed``; the auxiliary panel (see
    ``generate_panel``) consumes a disjoint stream of the same seed.
    """
    rng = np.random.Generator(np.random.Philox(key=[int(seed), _DATA_STREAM]))
    ts, xs, sensor = draw_design(design, n, traj.horizon, traj.dim, rng)
    sigma2 = _assign_variances(noise, design, sensor, rng)
    clean = evaluate_forward_batch(traj, ts, xs)
    y = clean + _draw_noise(noise, sigma2, clean.shape, rng)
    return Dataset(t=ts, x=xs, y=y, sensor=sensor, true_sigma2=sigma2,
                   design=design, seed=int(seed), horizon=traj.horizon,
                   meta={"noise_kind": noise.kind, "rule": noise.variance_rule})


# ---------------------------------------------------------------------------
# auxiliary panel and variance proxies
# ---------------------------------------------------------------------------

@dataclass
class AuxiliaryPanel:
    """Short-window observations per sensor: Upsilon[i, j] at (time_i, x_j)."""

    sensors: np.ndarray           # (L_X, d)
    window_times: np.ndarray      # (L_T,) inside [0, window]
    observations: np.ndarray      # (L_T, L_X)
    sigma2: np.ndarray            # per-sensor truth, hidden from inference

    def __post_init__(self):
        if len(self.window_times) < 2:
            raise ConfigurationError("auxiliary panel needs L_T >= 2")
        if self.observations.shape != (len(self.window_times), len(self.sensors)):
            raise ConfigurationError("panel observation shape mismatch")


def generate_panel(traj: Trajectory, sensors, window: float, n_times: int,
                   sensor_sigma2, seed: int) -> AuxiliaryPanel:
    """Observe u(t, x_j) + noise on a small window [0, window] per sensor."""
    if n_times < 2:
        raise ConfigurationError("panel needs at least two window times")
    if window > traj.horizon:
        raise ConfigurationError("panel window exceeds the trajectory horizon")
    sensors = np.asarray(sensors, dtype=float)
    if sensors.ndim == 1:
        sensors = sensors[:, None]
    sigma2 = np.asarray(sensor_sigma2, dtype=float)
    if sigma2.shape != (len(sensors),):
        raise ConfigurationError("need one variance per sensor")
    rng = np.random.Generator(np.random.Philox(key=[int(seed), _PANEL_STREAM]))
    times = np.linspace(0.0, window, n_times)
    l_t, l_x = n_times, len(sensors)
    tt = np.repeat(times, l_x)
    xx = np.tile(sensors, (l_t, 1))
    clean = evaluate_forward_batch(traj, tt, xx)[:, 0].reshape(l_t, l_x)
    obs = clean + np.sqrt(sigma2)[None, :] * rng.standard_normal((l_t, l_x))
    return AuxiliaryPanel(sensors=sensors, window_times=times,
                          observations=obs, sigma2=sigma2)


@dataclass(frozen=True)
class VarianceProxy:
    s2: np.ndarray                 # per-sensor sample variances
    window_bias: float = None      # max_i |u(t_i,x_j) - u(0,x_j)|, diagnostics only


def variance_proxy(panel: AuxiliaryPanel, traj: Trajectory = None) -> VarianceProxy:
    """Per-sensor sample variances s_j^2 = (L_T - 1)^-1 sum (Y_ij - mean_j)^2.

    When the trajectory is available (diagnostics mode) the window bias
    proxy max_{i,j} |u(t_i, x_j) - u(0, x_j)| is attached.
    """
    if len(panel.window_times) < 2:
        raise ConfigurationError("variance proxy needs L_T >= 2")
    s2 = np.var(panel.observations, axis=0, ddof=1)
    bias = None
    if traj is not None:
        l_t, l_x = panel.observations.shape
        tt = np.repeat(panel.window_times, l_x)
        xx = np.tile(panel.sensors, (l_t, 1))
        vals = evaluate_forward_batch(traj, tt, xx)[:, 0].reshape(l_t, l_x)
        t0 = evaluate_forward_batch(
            traj, np.zeros(l_x), panel.sensors)[:, 0]
        bias = float(np.abs(vals - t0[None, :]).max())
    return VarianceProxy(s2=s2, window_bias=bias)


def proxy_assignment(dataset: Dataset, sensor_s2) -> np.ndarray:
    """Per-record proxy variances s_i^2 = s_{sensor(i)}^2."""
    sensor_s2 = np.asarray(sensor_s2, dtype=float)
    if dataset.sensor.min() < 0:
        raise ConfigurationError("dataset records carry no sensor ids")
    if dataset.sensor.max() >= len(sensor_s2):
        raise ConfigurationError("missing variance estimate for some sensor")
    return sensor_s2[dataset.sensor]


# ---------------------------------------------------------------------------
# persistence: JSON-lines, header first, byte-stable
# ---------------------------------------------------------------------------

def dataset_to_jsonl(dataset: Dataset) -> str:
    buf = io.StringIO()
    header = {
        "design": dataset.design.kind,
        "horizon": dataset.horizon,
        "n": dataset.n,
        "seed": dataset.seed,
        "sensors": (None if dataset.design.sensors is None
                    else [list(map(float, np.atleast_1d(s)))
                          for s in dataset.design.sensors]),
        "meta": dataset.meta,
    }
    buf.write(json.dumps(header, sort_keys=True))
    buf.write("\n")
    for i in range(dataset.n):
        row = {
            "t": float(dataset.t[i]),
            "x": [float(v) for v in dataset.x[i]],
            "y": [float(v) for v in np.atleast_1d(dataset.y[i])],
            "sensor": int(dataset.sensor[i]),
            "sigma2": float(dataset.true_sigma2[i]),
        }
        buf.write(json.dumps(row, sort_keys=True))
        buf.write("\n")
    return buf.getvalue()


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dataset_to_jsonl(dataset))


def load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    header = json.loads(lines[0])
    rows = [json.loads(ln) for ln in lines[1:]]
    if len(rows) != header["n"]:
        raise ConfigurationError("dataset record count mismatch")
    sensors = header["sensors"]
    design = Design(
        kind=header["design"],
        sensors=None if sensors is None else tuple(tuple(s) for s in sensors),
    )
    return Dataset(
        t=np.array([r["t"] for r in rows]),
        x=np.array([r["x"] for r in rows]),
        y=np.array([r["y"] for r in rows]),
        sensor=np.array([r["sensor"] for r in rows], dtype=np.int64),
        true_sigma2=np.array([r["sigma2"] for r in rows]),
        design=design,
        seed=header["seed"],
        horizon=header["horizon"],
        meta=header.get("meta", {}),
    )
