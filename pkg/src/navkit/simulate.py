"""Trajectory simulation, inverse IMU, and the filter test harness.

The truth generator works in a local north-east-down world frame: a
trajectory is a list of constant-rate segments (straight runs, level
turns, climbs, rests) whose yaw-rate / pitch / speed profiles are
blended across segment boundaries with integral-preserving quintic
ramps, so velocity is C^1 while single-segment legs keep their exact
textbook geometry.  ``inverse_imu`` recovers the per-interval inertial
inputs by Newton-inverting the one-step integrator so each step lands
exactly on the next grid attitude and velocity, which is what makes the
generate -> invert -> re-mechanize loop close to navigation precision.

On top of that sit the sensor corrupters (bias + random walk + white
noise, all drawn from keyed counter-based streams), the odometer
synthesizer, and the run harness: single filtered runs with error /
NEES / innovation bookkeeping, Monte-Carlo batches with bit-reproducible
per-run substreams, and the twin-propagation autonomy experiments.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .earth import (
    EarthParams,
    GravityModel,
    SphericalGravity,
    UniformGravity,
    WorldFrameDef,
    earth_rate,
    gravitation,
    ned_world,
)
from .error_models import (
    ErrorConvention,
    ModelVariant,
    apply_correction,
    classify_autonomy,
    error_from_states,
    error_to_vector,
)
from .lgekf import FilterState, NoiseConfig, OdoSample, odo_H, predict, update
from .mechanization import (
    Frame,
    Grouping,
    ImuSample,
    NavState,
    derivative,
    make_nav_state,
    nav_from_physical,
    physical_from_nav,
    step,
)
from .rng import (
    STREAM_ACCEL_BIAS_WALK,
    STREAM_ACCEL_NOISE,
    STREAM_GYRO_BIAS_WALK,
    STREAM_GYRO_NOISE,
    STREAM_INIT_BIAS,
    STREAM_INIT_STATE,
    STREAM_ODOMETER,
    GaussianStream,
    substream,
)
from .se23 import SE23, TangentVector, se23_exp, se23_log

__all__ = [
    "SpecInvalid",
    "Straight",
    "Turn",
    "Climb",
    "Rest",
    "TrajectorySpec",
    "TruthSeries",
    "gen_truth",
    "inverse_imu",
    "SensorErrors",
    "true_bias_series",
    "corrupt",
    "gen_odometer",
    "RunConfig",
    "RunResult",
    "run_single",
    "MonteCarloResult",
    "run_monte_carlo",
    "AutonomySettings",
    "AutonomyResult",
    "autonomy_experiment",
]

_MAX_TOTAL_DURATION = 3600.0
_GRID_TOL = 1e-9


class SpecInvalid(ValueError):
    """A trajectory spec that cannot be realized."""


# ---------------------------------------------------------------------------
# trajectory segments and profiles


@dataclass(frozen=True)
class Straight:
    """Constant speed, constant heading, level."""

    duration: float
    speed: float


@dataclass(frozen=True)
class Turn:
    """Level coordinated turn at constant yaw rate and speed."""

    duration: float
    yaw_rate: float
    speed: float


@dataclass(frozen=True)
class Climb:
    """Constant flight-path pitch at constant speed."""

    duration: float
    pitch: float
    speed: float


@dataclass(frozen=True)
class Rest:
    """Stationary segment."""

    duration: float


Segment = Straight | Turn | Climb | Rest


@dataclass(frozen=True)
class TrajectorySpec:
    """Segment list plus the IMU grid rate.

    origin_e optionally anchors the world frame at an e-frame point; when
    omitted the caller must supply a WorldFrameDef to gen_truth.
    """

    segments: tuple
    imu_rate: float = 100.0
    origin_e: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))


def _validate_spec(spec: TrajectorySpec) -> None:
    if not spec.segments:
        raise SpecInvalid("trajectory needs at least one segment")
    for i, seg in enumerate(spec.segments):
        if not isinstance(seg, (Straight, Turn, Climb, Rest)):
            raise SpecInvalid(f"segment {i}: unknown segment type {type(seg).__name__}")
        if not seg.duration > 0.0:
            raise SpecInvalid(f"segment {i}: duration must be positive, got {seg.duration}")
        speed = getattr(seg, "speed", 0.0)
        if speed < 0.0:
            raise SpecInvalid(f"segment {i}: speed must be non-negative, got {speed}")
        if isinstance(seg, Climb) and not abs(seg.pitch) < np.pi / 2:
            raise SpecInvalid(f"segment {i}: pitch must lie in (-pi/2, pi/2)")
    total = spec.total_duration
    if total > _MAX_TOTAL_DURATION:
        raise SpecInvalid(f"total duration {total:.1f} s exceeds {_MAX_TOTAL_DURATION:.0f} s")
    if spec.imu_rate < 10.0:
        raise SpecInvalid(f"imu_rate must be at least 10 Hz, got {spec.imu_rate}")


def _smoothstep(x: np.ndarray) -> np.ndarray:
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x))


def _smoothstep_deriv(x: np.ndarray) -> np.ndarray:
    return 30.0 * x * x * (1.0 - x) * (1.0 - x)


def _smoothstep_integral(x: np.ndarray) -> np.ndarray:
    return x ** 4 * (2.5 + x * (-3.0 + x))


class _Profile:
    """Piecewise-constant profile with centered quintic boundary blends.

    The blend at each interior boundary is symmetric about it, so the
    running integral of the blended profile equals the step profile's
    integral outside every blend window.  There is no ramp at t=0 or at
    the end: the profile starts and finishes on the raw segment values.
    """

    def __init__(self, edges: np.ndarray, values: np.ndarray, windows: np.ndarray):
        self.edges = edges  # (m+1,) cumulative segment boundaries, edges[0] == 0
        self.values = values  # (m,)
        self.windows = windows  # (m-1,) half-widths at interior boundaries
        durations = np.diff(edges)
        self._cum = np.concatenate([[0.0], np.cumsum(values * durations)])

    def _seg_index(self, t: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, len(self.values) - 1)

    def value(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = self.values[self._seg_index(t)].astype(float)
        for j, w in enumerate(self.windows):
            a, c = self.values[j], self.values[j + 1]
            if a == c:
                continue
            b = self.edges[j + 1]
            mask = (t > b - w) & (t < b + w)
            if np.any(mask):
                x = (t[mask] - (b - w)) / (2.0 * w)
                out[mask] = a + (c - a) * _smoothstep(x)
        return out

    def derivative(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for j, w in enumerate(self.windows):
            a, c = self.values[j], self.values[j + 1]
            if a == c:
                continue
            b = self.edges[j + 1]
            mask = (t > b - w) & (t < b + w)
            if np.any(mask):
                x = (t[mask] - (b - w)) / (2.0 * w)
                out[mask] = (c - a) * _smoothstep_deriv(x) / (2.0 * w)
        return out

    def integral(self, t: np.ndarray) -> np.ndarray:
        """Running integral of value() from 0 to t."""
        t = np.asarray(t, dtype=float)
        idx = self._seg_index(t)
        out = self._cum[idx] + self.values[idx] * (t - self.edges[idx])
        for j, w in enumerate(self.windows):
            a, c = self.values[j], self.values[j + 1]
            if a == c:
                continue
            b = self.edges[j + 1]
            mask = (t > b - w) & (t < b + w)
            if np.any(mask):
                tm = t[mask]
                x = (tm - (b - w)) / (2.0 * w)
                corr = (c - a) * (2.0 * w * _smoothstep_integral(x) - np.maximum(tm - b, 0.0))
                out[mask] = out[mask] + corr
        return out


def _build_profiles(spec: TrajectorySpec) -> tuple[_Profile, _Profile, _Profile]:
    durations = np.array([s.duration for s in spec.segments], dtype=float)
    edges = np.concatenate([[0.0], np.cumsum(durations)])
    yaw_rate = np.array([s.yaw_rate if isinstance(s, Turn) else 0.0 for s in spec.segments])
    pitch = np.array([s.pitch if isinstance(s, Climb) else 0.0 for s in spec.segments])
    speed = np.array([getattr(s, "speed", 0.0) for s in spec.segments], dtype=float)
    windows = np.minimum(0.5, 0.4 * np.minimum(durations[:-1], durations[1:]))
    return (
        _Profile(edges, yaw_rate, windows),
        _Profile(edges, pitch, windows),
        _Profile(edges, speed, windows),
    )


@dataclass(frozen=True)
class _Kinematics:
    """Analytic body kinematics of the recipe at a batch of times."""

    C_b_w: np.ndarray  # (n,3,3)
    v_w: np.ndarray  # (n,3)
    vdot_w: np.ndarray  # (n,3)
    omega_wb_w: np.ndarray  # (n,3)


def _kinematics(profiles, t: np.ndarray) -> _Kinematics:
    yaw_rate, pitch, speed = profiles
    psi = yaw_rate.integral(t)
    psidot = yaw_rate.value(t)
    th = pitch.value(t)
    thdot = pitch.derivative(t)
    V = speed.value(t)
    Vdot = speed.derivative(t)

    cps, sps = np.cos(psi), np.sin(psi)
    cth, sth = np.cos(th), np.sin(th)
    direction = np.stack([cps * cth, sps * cth, -sth], axis=1)
    ddir = psidot[:, None] * np.stack([-sps * cth, cps * cth, np.zeros_like(psi)], axis=1)
    ddir += thdot[:, None] * np.stack([-cps * sth, -sps * sth, -cth], axis=1)
    v = V[:, None] * direction
    vdot = Vdot[:, None] * direction + V[:, None] * ddir

    C = np.empty((len(t), 3, 3))
    C[:, 0, 0] = cps * cth
    C[:, 0, 1] = -sps
    C[:, 0, 2] = cps * sth
    C[:, 1, 0] = sps * cth
    C[:, 1, 1] = cps
    C[:, 1, 2] = sps * sth
    C[:, 2, 0] = -sth
    C[:, 2, 1] = 0.0
    C[:, 2, 2] = cth

    omega = np.stack([-thdot * sps, thdot * cps, psidot], axis=1)
    return _Kinematics(C, v, vdot, omega)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def _positions(profiles, times: np.ndarray) -> np.ndarray:
    """Cumulative Gauss-Legendre integral of the velocity, r(times[0]) = 0."""
    a, b = times[:-1], times[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    tq = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    v = _kinematics(profiles, tq).v_w.reshape(len(a), len(_GL_NODES), 3)
    gains = half[:, None] * np.einsum("q,nqk->nk", _GL_WEIGHTS, v)
    out = np.empty((len(times), 3))
    out[0] = 0.0
    np.cumsum(gains, axis=0, out=out[1:])
    return out


# ---------------------------------------------------------------------------
# truth generation


@dataclass(frozen=True)
class TruthSeries:
    """True trajectory on the IMU grid, w-frame coordinates.

    Positions are measured from the w-frame origin.  state(k) views epoch
    k as a traditional-grouping NavState sharing the run's anchors.
    """

    t: np.ndarray  # (N+1,)
    C_b_w: np.ndarray  # (N+1,3,3)
    v_wb_w: np.ndarray  # (N+1,3)
    r_w: np.ndarray  # (N+1,3)
    imu_rate: float

    def __len__(self) -> int:
        return len(self.t)

    def state(self, k: int) -> NavState:
        r0 = self.r_w[0]
        x = SE23(self.C_b_w[k].copy(), self.v_wb_w[k].copy(), self.r_w[k] - r0)
        return NavState(Frame.W, Grouping.TRADITIONAL, x, r0.copy())

    def as_states(self) -> list[NavState]:
        return [self.state(k) for k in range(len(self.t))]


def _grid_times(spec: TrajectorySpec) -> np.ndarray:
    dt = 1.0 / spec.imu_rate
    total = spec.total_duration
    n_full = int(np.floor(total / dt + _GRID_TOL))
    times = np.arange(n_full + 1) * dt
    if total - times[-1] > _GRID_TOL:
        times = np.append(times, total)
    return times


def _resolve_world(spec: TrajectorySpec, earth: EarthParams, world: WorldFrameDef | None) -> WorldFrameDef:
    if world is not None:
        return world
    if spec.origin_e is None:
        raise SpecInvalid("trajectory has no origin_e and no world frame was given")
    return ned_world(np.asarray(spec.origin_e, dtype=float), earth)


def gen_truth(
    spec: TrajectorySpec,
    earth: EarthParams,
    gravity_model: GravityModel,
    world: WorldFrameDef | None = None,
) -> TruthSeries:
    """Kinematically consistent truth on the IMU grid.

    The grid is the closed-form profile evaluated at the grid times
    (positions by per-interval Gauss-Legendre quadrature of the exact
    velocity), so single-segment legs keep their textbook geometry to
    quadrature/roundoff precision.  gravity_model is not consulted here
    -- the dynamics enter only when inverse_imu reconstructs the inputs.
    """
    _validate_spec(spec)
    world = _resolve_world(spec, earth, world)
    profiles = _build_profiles(spec)
    times = _grid_times(spec)
    kin = _kinematics(profiles, times)
    r = _positions(profiles, times)
    return TruthSeries(times, kin.C_b_w, kin.v_w, r, spec.imu_rate)


# ---------------------------------------------------------------------------
# inverse IMU (batched Newton on the one-step integrator)


def _batch_skew(w: np.ndarray) -> np.ndarray:
    out = np.zeros((len(w), 3, 3))
    out[:, 0, 1] = -w[:, 2]
    out[:, 0, 2] = w[:, 1]
    out[:, 1, 0] = w[:, 2]
    out[:, 1, 2] = -w[:, 0]
    out[:, 2, 0] = -w[:, 1]
    out[:, 2, 1] = w[:, 0]
    return out


def _batch_so3_exp(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w, axis=1)
    small = theta < 1e-8
    t2 = theta * theta
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - t2 / 6.0, np.sin(theta) / np.where(small, 1.0, theta))
        b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(theta)) / np.where(small, 1.0, t2))
    K = _batch_skew(w)
    return np.eye(3) + a[:, None, None] * K + b[:, None, None] * (K @ K)


def _batch_so3_log(M: np.ndarray) -> np.ndarray:
    """Rotation vectors of near-identity rotation matrices (angle << pi)."""
    ax = 0.5 * np.stack(
        [M[:, 2, 1] - M[:, 1, 2], M[:, 0, 2] - M[:, 2, 0], M[:, 1, 0] - M[:, 0, 1]], axis=1
    )
    s = np.linalg.norm(ax, axis=1)
    c = 0.5 * (np.trace(M, axis1=1, axis2=2) - 1.0)
    theta = np.arctan2(s, c)
    factor = np.where(s < 1e-12, 1.0, theta / np.where(s < 1e-12, 1.0, s))
    return factor[:, None] * ax


def _batch_gravitation(r_c: np.ndarray, model: GravityModel, earth: EarthParams) -> np.ndarray:
    if isinstance(model, UniformGravity):
        return np.broadcast_to(np.asarray(model.gamma0, dtype=float), r_c.shape)
    rn = np.linalg.norm(r_c, axis=1)
    return r_c * (-earth.mu / rn**3)[:, None]


class _BatchWFrame:
    """Vectorized w-frame traditional rates/RK4 over a batch of intervals."""

    def __init__(self, earth: EarthParams, gravity_model: GravityModel, world: WorldFrameDef):
        self.omega = earth_rate("w", earth, world)
        self.omega_mat = _batch_skew(self.omega[None, :])[0]
        self.r_off = world.C_e_w @ world.r_ew_e
        self.model = gravity_model
        self.earth = earth

    def rates(self, C, v, r, om_b, f_b):
        dC = C @ _batch_skew(om_b) - self.omega_mat @ C
        r_c = r + self.r_off
        g = _batch_gravitation(r_c, self.model, self.earth) - np.cross(
            self.omega, np.cross(self.omega, r_c)
        )
        dv = np.einsum("nij,nj->ni", C, f_b) + g - 2.0 * np.cross(self.omega, v)
        return dC, dv, v

    def rk4(self, C, v, r, om_b, f_b, dts):
        h = dts[:, None]
        hm = dts[:, None, None]
        k1 = self.rates(C, v, r, om_b, f_b)
        k2 = self.rates(C + 0.5 * hm * k1[0], v + 0.5 * h * k1[1], r + 0.5 * h * k1[2], om_b, f_b)
        k3 = self.rates(C + 0.5 * hm * k2[0], v + 0.5 * h * k2[1], r + 0.5 * h * k2[2], om_b, f_b)
        k4 = self.rates(C + hm * k3[0], v + h * k3[1], r + h * k3[2], om_b, f_b)
        C1 = C + hm / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        v1 = v + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        r1 = r + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        return C1, v1, r1


_NEWTON_DELTAS = np.array([1e-7, 1e-7, 1e-7, 1e-5, 1e-5, 1e-5])
_NEWTON_TOL_ATT = 1e-13
_NEWTON_TOL_VEL = 1e-12


def inverse_imu(
    truth: TruthSeries,
    earth: EarthParams,
    gravity_model: GravityModel,
    world: WorldFrameDef,
) -> list[ImuSample]:
    """Recover per-interval inertial inputs consistent with the grid.

    Solves, for every interval at once, the six-unknown system "RK4 step
    with constant (omega, f) lands on the next grid attitude/velocity",
    by Newton iteration with a finite-difference Jacobian.  Feeding the
    result back through the forward integrator reproduces the grid to
    navigation precision.
    """
    C, v, r, t = truth.C_b_w, truth.v_wb_w, truth.r_w, truth.t
    n = len(t) - 1
    dts = np.diff(t)
    batch = _BatchWFrame(earth, gravity_model, world)
    omega_w = batch.omega

    # Seed attitude rate from the earth-rate-compensated attitude increment.
    E = _batch_so3_exp(np.broadcast_to(omega_w, (n, 3)) * dts[:, None])
    M = np.einsum("nji,njk,nkl->nil", C[:-1], E, C[1:])
    om0 = _batch_so3_log(M) / dts[:, None]

    # Seed specific force from midpoint finite differences.
    E_half = _batch_so3_exp(np.broadcast_to(-omega_w, (n, 3)) * (0.5 * dts[:, None]))
    R_half = _batch_so3_exp(0.5 * om0 * dts[:, None])
    C_mid = E_half @ C[:-1] @ R_half
    v_mid = 0.5 * (v[:-1] + v[1:])
    r_c_mid = 0.5 * (r[:-1] + r[1:]) + batch.r_off
    accel = (v[1:] - v[:-1]) / dts[:, None]
    f_w = (
        accel
        + 2.0 * np.cross(omega_w, v_mid)
        - _batch_gravitation(r_c_mid, gravity_model, earth)
        + np.cross(omega_w, np.cross(omega_w, r_c_mid))
    )
    f0 = np.einsum("nij,ni->nj", C_mid, f_w)

    u = np.concatenate([om0, f0], axis=1)

    def residual(inputs: np.ndarray) -> np.ndarray:
        C1, v1, _ = batch.rk4(C[:-1], v[:-1], r[:-1], inputs[:, 0:3], inputs[:, 3:6], dts)
        Mres = np.einsum("nji,njk->nik", C1, C[1:])
        res = np.empty((n, 6))
        res[:, 0] = 0.5 * (Mres[:, 2, 1] - Mres[:, 1, 2])
        res[:, 1] = 0.5 * (Mres[:, 0, 2] - Mres[:, 2, 0])
        res[:, 2] = 0.5 * (Mres[:, 1, 0] - Mres[:, 0, 1])
        res[:, 3:6] = v1 - v[1:]
        return res

    res = residual(u)
    for _ in range(8):
        if (
            np.abs(res[:, 0:3]).max() < _NEWTON_TOL_ATT
            and np.abs(res[:, 3:6]).max() < _NEWTON_TOL_VEL
        ):
            break
        J = np.empty((n, 6, 6))
        for j in range(6):
            up = u.copy()
            up[:, j] += _NEWTON_DELTAS[j]
            J[:, :, j] = (residual(up) - res) / _NEWTON_DELTAS[j]
        u = u + np.linalg.solve(J, -res[:, :, None])[:, :, 0]
        res = residual(u)
    else:
        raise RuntimeError("inverse_imu Newton iteration failed to converge")

    return [ImuSample(u[k, 0:3].copy(), u[k, 3:6].copy(), float(dts[k])) for k in range(n)]


# ---------------------------------------------------------------------------
# sensor corruption and the odometer


@dataclass(frozen=True)
class SensorErrors:
    """True sensor defects for one run, plus the stream key that drives
    every random draw made on its behalf."""

    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0
    run_index: int = 0


def true_bias_series(errors: SensorErrors, dts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval true biases: initial value plus the random walk."""
    n = len(dts)
    out = []
    for bias0, psd, channel in (
        (errors.gyro_bias, errors.noise.gyro_bias_rw_psd, STREAM_GYRO_BIAS_WALK),
        (errors.accel_bias, errors.noise.accel_bias_rw_psd, STREAM_ACCEL_BIAS_WALK),
    ):
        draws = GaussianStream(errors.seed, substream(channel, errors.run_index)).normal_matrix(n, 3)
        increments = np.sqrt(psd * dts)[:, None] * draws
        series = np.empty((n, 3))
        series[0] = np.asarray(bias0, dtype=float)
        if n > 1:
            series[1:] = series[0] + np.cumsum(increments[:-1], axis=0)
        out.append(series)
    return out[0], out[1]


def corrupt(imu_series: Sequence[ImuSample], errors: SensorErrors) -> list[ImuSample]:
    """Measured IMU: truth plus bias (random-walking if configured) plus
    white noise at the sample rate.  Deterministic in (seed, run_index)."""
    n = len(imu_series)
    dts = np.array([s.dt for s in imu_series])
    bias_g, bias_a = true_bias_series(errors, dts)
    ng = GaussianStream(errors.seed, substream(STREAM_GYRO_NOISE, errors.run_index)).normal_matrix(n, 3)
    na = GaussianStream(errors.seed, substream(STREAM_ACCEL_NOISE, errors.run_index)).normal_matrix(n, 3)
    sig_g = np.sqrt(errors.noise.gyro_noise_psd / dts)
    sig_a = np.sqrt(errors.noise.accel_noise_psd / dts)
    out = []
    for k, s in enumerate(imu_series):
        out.append(
            ImuSample(
                s.omega_ib_b + bias_g[k] + sig_g[k] * ng[k],
                s.f_ib_b + bias_a[k] + sig_a[k] * na[k],
                s.dt,
            )
        )
    return out


def _odo_indices(truth: TruthSeries, odo_rate: float) -> np.ndarray:
    """Grid indices carrying an odometer sample (regular epochs only)."""
    if odo_rate <= 0.0:
        return np.array([], dtype=int)
    decim = truth.imu_rate / odo_rate
    decim_i = int(round(decim))
    if decim_i < 1 or abs(decim - decim_i) > 1e-9:
        raise ValueError(f"odo_rate {odo_rate} must divide imu_rate {truth.imu_rate}")
    dt = 1.0 / truth.imu_rate
    idx = np.arange(decim_i, len(truth.t), decim_i)
    aligned = np.abs(truth.t[idx] - idx * dt) < _GRID_TOL
    return idx[aligned]


def gen_odometer(
    truth: TruthSeries,
    noise: NoiseConfig,
    seed: int,
    odo_rate: float = 10.0,
    run_index: int = 0,
) -> list[OdoSample]:
    """Body-frame odometer track: true forward speed on the body x-axis,
    non-holonomic zeros elsewhere, plus noise drawn from odo_noise_cov."""
    idx = _odo_indices(truth, odo_rate)
    L = np.linalg.cholesky(noise.odo_noise_cov)
    draws = GaussianStream(seed, substream(STREAM_ODOMETER, run_index)).normal_matrix(len(idx), 3)
    samples = []
    for j, k in enumerate(idx):
        vb = truth.C_b_w[k].T @ truth.v_wb_w[k]
        v_meas = np.array([vb[0], 0.0, 0.0]) + L @ draws[j]
        samples.append(OdoSample(v_meas, float(truth.t[k])))
    return samples


# ---------------------------------------------------------------------------
# filtered runs


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Everything a filtered run depends on.

    p0_* are per-axis initial variances; the true initial state and the
    true biases are drawn about the configured nominals with exactly these
    covariances, so NEES against the filter covariance is meaningful.

    bias_known=False instead treats gyro_bias/accel_bias as the exact true
    biases while the filter starts its estimates at zero -- useful for
    open-loop divergence diagnostics, at the price of a meaningless NEES.
    """

    traj: TrajectorySpec
    origin_e: np.ndarray
    frame: Frame = Frame.W
    grouping: Grouping = Grouping.PROPOSED
    convention: ErrorConvention = ErrorConvention.RIGHT
    gravity: GravityModel = field(default_factory=SphericalGravity)
    earth: EarthParams = field(default_factory=EarthParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    odo_rate: float = 10.0
    p0_att: float = 1e-6
    p0_vel: float = 1e-2
    p0_pos: float = 1.0
    p0_gyro_bias: float = 4e-10
    p0_accel_bias: float = 9e-8
    seed: int = 0
    gate_sigma: float | None = None
    n_runs: int = 50
    bias_known: bool = True
    integrator: str = "midpoint"

    @property
    def variant(self) -> ModelVariant:
        return ModelVariant(self.frame, self.grouping)

    def p0_diag(self) -> np.ndarray:
        return np.array(
            [self.p0_att] * 3
            + [self.p0_vel] * 3
            + [self.p0_pos] * 3
            + [self.p0_gyro_bias] * 3
            + [self.p0_accel_bias] * 3
        )


@dataclass(frozen=True, eq=False)
class RunResult:
    """Error, NEES and innovation series of one filtered run.

    Error rows are the true-relative-to-estimate chart in the run's
    convention; all series share the same epochs.  Rows where no update
    was applied (odometer off, or the gate fired) have updated=False and
    zero innovation entries.
    """

    t: np.ndarray  # (M,)
    att_err: np.ndarray  # (M,3)
    vel_err: np.ndarray  # (M,3)
    pos_err: np.ndarray  # (M,3)
    nees: np.ndarray  # (M,)
    innovation: np.ndarray  # (M,3)
    innovation_whitened: np.ndarray  # (M,3)
    updated: np.ndarray  # (M,) bool

    @property
    def rmse_per_axis(self) -> np.ndarray:
        err = np.hstack([self.att_err, self.vel_err, self.pos_err])
        return np.sqrt(np.mean(err * err, axis=0))

    def _rmse_norm(self, block: np.ndarray) -> float:
        return float(np.sqrt(np.mean(np.sum(block * block, axis=1))))

    @property
    def rmse_att(self) -> float:
        return self._rmse_norm(self.att_err)

    @property
    def rmse_vel(self) -> float:
        return self._rmse_norm(self.vel_err)

    @property
    def rmse_pos(self) -> float:
        return self._rmse_norm(self.pos_err)

    @property
    def mean_nees(self) -> float:
        mask = self.updated if np.any(self.updated) else np.ones(len(self.t), dtype=bool)
        return float(np.mean(self.nees[mask]))


def _truth_in_filter_coords(
    truth: TruthSeries,
    k: int,
    fs: FilterState,
    earth: EarthParams,
    world: WorldFrameDef,
) -> NavState:
    t = float(truth.t[k])
    trip = physical_from_nav(truth.state(k), earth, world, t)
    return nav_from_physical(
        fs.nav.frame,
        fs.nav.grouping,
        *trip,
        earth,
        world,
        t=t,
        r0=fs.nav.r0,
        dv0=fs.nav.dv0,
    )


def _nees(e: np.ndarray, P: np.ndarray) -> float:
    try:
        return float(e @ np.linalg.solve(P, e))
    except np.linalg.LinAlgError:
        return float(e @ np.linalg.pinv(P, hermitian=True) @ e)


def draw_biases(cfg: RunConfig, run_index: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(initial bias estimate (6,), true gyro bias, true accel bias) for a run.

    With bias_known the estimate starts at the configured nominal and the
    truth is drawn about it with the p0_*_bias variances; otherwise the
    nominal IS the truth and the estimate starts at zero.
    """
    if cfg.bias_known:
        bias_draw = GaussianStream(cfg.seed, substream(STREAM_INIT_BIAS, run_index)).normals(6)
        bias_sigma = np.sqrt(np.array([cfg.p0_gyro_bias] * 3 + [cfg.p0_accel_bias] * 3))
        bias_offset = bias_sigma * bias_draw  # = (bias estimate) - (true bias)
        bias_hat0 = np.concatenate(
            [np.asarray(cfg.gyro_bias, dtype=float), np.asarray(cfg.accel_bias, dtype=float)]
        )
    else:
        bias_offset = -np.concatenate(
            [np.asarray(cfg.gyro_bias, dtype=float), np.asarray(cfg.accel_bias, dtype=float)]
        )
        bias_hat0 = np.zeros(6)
    return bias_hat0, bias_hat0[0:3] - bias_offset[0:3], bias_hat0[3:6] - bias_offset[3:6]


def run_single(
    cfg: RunConfig,
    run_index: int = 0,
    truth: TruthSeries | None = None,
    imu_true: list[ImuSample] | None = None,
) -> RunResult:
    """One filtered run: corrupt the truth, run the filter, score it.

    The true initial state, true biases, and every noise sequence come
    from streams keyed by (seed, run_index), so results are reproducible
    bit for bit and Monte-Carlo runs are independent by construction.
    """
    world = ned_world(cfg.origin_e, cfg.earth)
    if truth is None:
        truth = gen_truth(cfg.traj, cfg.earth, cfg.gravity, world)
    if imu_true is None:
        imu_true = inverse_imu(truth, cfg.earth, cfg.gravity, world)

    n = len(truth.t) - 1
    dts = np.diff(truth.t)

    bias_hat0, true_gyro_bias, true_accel_bias = draw_biases(cfg, run_index)

    errors = SensorErrors(true_gyro_bias, true_accel_bias, cfg.noise, cfg.seed, run_index)
    imu_meas = corrupt(imu_true, errors)
    bias_g_series, bias_a_series = true_bias_series(errors, dts)
    odo = gen_odometer(truth, cfg.noise, cfg.seed, cfg.odo_rate, run_index)
    odo_idx = _odo_indices(truth, cfg.odo_rate)
    odo_at = dict(zip(odo_idx.tolist(), odo))

    if len(odo_idx) > 0:
        sample_idx = odo_idx
    else:
        decim = max(1, int(round(truth.imu_rate / 10.0)))
        sample_idx = np.arange(decim, n + 1, decim)
    sample_set = set(sample_idx.tolist())

    truth0 = _state_in_frame(truth, 0, cfg, world)
    state_draw = GaussianStream(cfg.seed, substream(STREAM_INIT_STATE, run_index)).normals(9)
    state_sigma = np.sqrt(np.array([cfg.p0_att] * 3 + [cfg.p0_vel] * 3 + [cfg.p0_pos] * 3))
    xi0 = state_sigma * state_draw
    est0 = apply_correction(truth0, TangentVector.from_vector(-xi0), cfg.convention)

    fs = FilterState(
        nav=est0,
        bias_g=bias_hat0[0:3].copy(),
        bias_a=bias_hat0[3:6].copy(),
        P=np.diag(cfg.p0_diag()),
        conv=cfg.convention,
        variant=cfg.variant,
        t=0.0,
    )

    rows_t, rows_xi, rows_nees = [], [], []
    rows_innov, rows_white, rows_upd = [], [], []
    R = cfg.noise.odo_noise_cov
    for k in range(n):
        fs = predict(fs, imu_meas[k], cfg.noise, cfg.earth, cfg.gravity, world,
                     method=cfg.integrator)
        kk = k + 1
        innov = np.zeros(3)
        white = np.zeros(3)
        updated = False
        if kk in odo_at:
            z = odo_at[kk]
            H, vb = odo_H(fs.variant, fs.conv, fs.nav, cfg.earth, world)
            innov = vb - z.v_odo_b
            S = H @ fs.P @ H.T + R
            white = np.linalg.solve(np.linalg.cholesky(0.5 * (S + S.T)), innov)
            fs_new = update(
                fs, z, cfg.noise, cfg.earth, cfg.gravity, world,
                gate_sigma=cfg.gate_sigma, imu_period=float(dts[k]),
            )
            updated = fs_new is not fs
            fs = fs_new
        if kk in sample_set:
            truth_f = _truth_in_filter_coords(truth, kk, fs, cfg.earth, world)
            xi = error_to_vector(error_from_states(truth_f, fs.nav, fs.conv), fs.conv).as_vector()
            e15 = np.concatenate(
                [xi, fs.bias_g - bias_g_series[k], fs.bias_a - bias_a_series[k]]
            )
            rows_t.append(float(truth.t[kk]))
            rows_xi.append(xi)
            rows_nees.append(_nees(e15, fs.P))
            rows_innov.append(innov)
            rows_white.append(white)
            rows_upd.append(updated)

    xi_arr = np.array(rows_xi).reshape(-1, 9)
    return RunResult(
        t=np.array(rows_t),
        att_err=xi_arr[:, 0:3],
        vel_err=xi_arr[:, 3:6],
        pos_err=xi_arr[:, 6:9],
        nees=np.array(rows_nees),
        innovation=np.array(rows_innov).reshape(-1, 3),
        innovation_whitened=np.array(rows_white).reshape(-1, 3),
        updated=np.array(rows_upd, dtype=bool),
    )


def _state_in_frame(truth: TruthSeries, k: int, cfg: RunConfig, world: WorldFrameDef) -> NavState:
    """Truth epoch k re-expressed in the configured frame/grouping with
    fresh anchors (used for run initialization)."""
    t = float(truth.t[k])
    trip = physical_from_nav(truth.state(k), cfg.earth, world, t)
    return nav_from_physical(cfg.frame, cfg.grouping, *trip, cfg.earth, world, t=t)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    """Per-run results plus the consistency aggregates."""

    runs: list
    mean_nees_series: np.ndarray  # (M,) mean over runs at each epoch
    time_avg_nees: float  # grand mean over runs and epochs
    innovation_lag1: np.ndarray  # (3,) pooled whitened lag-1 autocorrelation
    rmse_att: float
    rmse_vel: float
    rmse_pos: float


_MC_CONTEXT: tuple | None = None


def _mc_init(cfg: RunConfig, truth: TruthSeries, imu_true: list[ImuSample]) -> None:
    global _MC_CONTEXT
    _MC_CONTEXT = (cfg, truth, imu_true)


def _mc_run(run_index: int) -> RunResult:
    cfg, truth, imu_true = _MC_CONTEXT
    return run_single(cfg, run_index=run_index, truth=truth, imu_true=imu_true)


def _aggregate(runs: list) -> MonteCarloResult:
    nees = np.stack([r.nees for r in runs])
    upd = np.stack([r.updated for r in runs])
    if not np.any(upd):
        upd = np.ones_like(upd, dtype=bool)
    mean_series = np.array(
        [np.mean(nees[upd[:, j], j]) if np.any(upd[:, j]) else np.nan for j in range(nees.shape[1])]
    )
    time_avg = float(np.mean(nees[upd]))

    num = np.zeros(3)
    den = np.zeros(3)
    for r in runs:
        w = r.innovation_whitened[r.updated]
        if len(w) > 1:
            num += np.sum(w[:-1] * w[1:], axis=0)
            den += np.sum(w * w, axis=0)
    lag1 = num / np.where(den == 0.0, 1.0, den)

    def pooled(block_name: str) -> float:
        total = 0.0
        count = 0
        for r in runs:
            block = getattr(r, block_name)
            total += float(np.sum(block * block))
            count += block.shape[0]
        return float(np.sqrt(total / max(count, 1)))

    return MonteCarloResult(
        runs=runs,
        mean_nees_series=mean_series,
        time_avg_nees=time_avg,
        innovation_lag1=lag1,
        rmse_att=pooled("att_err"),
        rmse_vel=pooled("vel_err"),
        rmse_pos=pooled("pos_err"),
    )


def run_monte_carlo(cfg: RunConfig, n_runs: int | None = None) -> MonteCarloResult:
    """Monte-Carlo batch sharing one truth; runs differ only in their
    keyed substreams, so the batch is reproducible and order-independent.

    Honors NAVKIT_THREADS for process-level parallelism; the reduction is
    ordered by run index either way.
    """
    n = cfg.n_runs if n_runs is None else int(n_runs)
    if n < 2:
        raise ValueError(f"need at least 2 runs, got {n}")
    world = ned_world(cfg.origin_e, cfg.earth)
    truth = gen_truth(cfg.traj, cfg.earth, cfg.gravity, world)
    imu_true = inverse_imu(truth, cfg.earth, cfg.gravity, world)

    threads = int(os.environ.get("NAVKIT_THREADS", "1") or "1")
    workers = min(max(threads, 1), n)
    if workers > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_mc_init, initargs=(cfg, truth, imu_true)
        ) as ex:
            runs = list(ex.map(_mc_run, range(n), chunksize=max(1, n // workers)))
    else:
        runs = [run_single(cfg, run_index=k, truth=truth, imu_true=imu_true) for k in range(n)]
    return _aggregate(runs)


# ---------------------------------------------------------------------------
# autonomy experiments


@dataclass(frozen=True, eq=False)
class AutonomySettings:
    """Environment and input-error switches for a twin-divergence test."""

    origin_e: np.ndarray
    gravity: GravityModel
    earth: EarthParams = field(default_factory=EarthParams)
    gyro_input_error: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_input_error: np.ndarray = field(default_factory=lambda: np.zeros(3))
    integrator: str = "rk4"


@dataclass(frozen=True, eq=False)
class AutonomyResult:
    """Outcome of comparing one error flow across two trajectories."""

    classification: object  # AutonomyClass
    divergence_metric: float
    t: np.ndarray  # (M,)
    xi_a: np.ndarray  # (M,9) log of the group error along trajectory a
    xi_b: np.ndarray  # (M,9)


def _twin_error_logs(
    variant: ModelVariant,
    conv: ErrorConvention,
    traj: TrajectorySpec,
    xi0: np.ndarray,
    settings: AutonomySettings,
    world: WorldFrameDef,
) -> tuple[np.ndarray, np.ndarray, NavState, ImuSample]:
    truth_w = gen_truth(traj, settings.earth, settings.gravity, world)
    imu_true = inverse_imu(truth_w, settings.earth, settings.gravity, world)

    # Canonical anchors shared by every trajectory: dv0=0 keeps the velocity
    # column of the affine part identical across runs, so two flows started
    # from the same group error really do see the same model.
    trip = physical_from_nav(truth_w.state(0), settings.earth, world, 0.0)
    truth = nav_from_physical(
        variant.frame, variant.grouping, *trip, settings.earth, world, t=0.0,
        dv0=np.zeros(3),
    )
    state0, imu0 = truth, imu_true[0]
    eta0 = se23_exp(TangentVector.from_vector(np.asarray(xi0, dtype=float)))
    if conv is ErrorConvention.RIGHT:
        est_x = eta0.inverse().compose(truth.x)
    else:
        est_x = truth.x.compose(eta0.inverse())
    est = replace(truth, x=est_x)

    d_om = np.asarray(settings.gyro_input_error, dtype=float)
    d_f = np.asarray(settings.accel_input_error, dtype=float)
    logs = np.empty((len(truth_w.t), 9))
    logs[0] = se23_log(error_from_states(truth, est, conv)).as_vector()
    for k, imu in enumerate(imu_true):
        imu_est = ImuSample(imu.omega_ib_b + d_om, imu.f_ib_b + d_f, imu.dt)
        truth = step(truth, imu, settings.earth, settings.gravity, world, method=settings.integrator)
        est = step(est, imu_est, settings.earth, settings.gravity, world, method=settings.integrator)
        logs[k + 1] = se23_log(error_from_states(truth, est, conv)).as_vector()
    return truth_w.t, logs, state0, imu0


def autonomy_experiment(
    variant: ModelVariant,
    conv: ErrorConvention,
    traj_a: TrajectorySpec,
    traj_b: TrajectorySpec,
    xi0: np.ndarray,
    settings: AutonomySettings,
) -> AutonomyResult:
    """Propagate the same initial group error along two trajectories and
    measure how far the error flows drift apart.

    A trajectory-independent ("perfect") error model keeps the metric at
    integration noise; input errors or a position-dependent gravity
    column make it small but nonzero; a model whose equation folds the
    trajectory in through conjugation diverges visibly.
    """
    world = ned_world(np.asarray(settings.origin_e, dtype=float), settings.earth)
    t_a, xi_a, state0, imu0 = _twin_error_logs(variant, conv, traj_a, xi0, settings, world)
    t_b, xi_b, _, _ = _twin_error_logs(variant, conv, traj_b, xi0, settings, world)
    m = min(len(t_a), len(t_b))
    if abs(t_a[m - 1] - t_b[m - 1]) > 1e-9:
        raise SpecInvalid("autonomy trajectories must share their time grid")
    metric = float(np.max(np.linalg.norm(xi_a[:m] - xi_b[:m], axis=1)))

    _, w = derivative(state0, imu0, settings.earth, settings.gravity, world)
    label = classify_autonomy(
        w,
        include_input_errors=bool(
            np.any(settings.gyro_input_error) or np.any(settings.accel_input_error)
        ),
        include_gravity_error=isinstance(settings.gravity, SphericalGravity),
    )
    return AutonomyResult(label, metric, t_a[:m], xi_a[:m], xi_b[:m])
