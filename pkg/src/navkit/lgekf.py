"""Lie-group extended Kalman filter for SINS with body-velocity aiding.

The 15-dim error state is (phi, rho_v, rho_r, db_g, db_a) in either the
right (eta = X X~^-1) or left (eta = X~^-1 X) convention. predict runs the
bias-corrected strapdown step and the discretized covariance propagation;
update fuses a body-frame velocity (odometer with non-holonomic lateral and
vertical pseudo-measurements) through the Joseph form and retracts the
estimated error onto the group.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .earth import EarthParams, GravityModel, WorldFrameDef, earth_rate
from .error_models import (
    ErrorConvention,
    ModelVariant,
    apply_correction,
    linearized_F_G,
)
from .mechanization import (
    Frame,
    Grouping,
    ImuSample,
    NavState,
    body_velocity,
    step,
)
from .se23 import TangentVector, skew

__all__ = [
    "CovarianceNotPSD",
    "SingularInnovation",
    "FilterState",
    "NoiseConfig",
    "OdoSample",
    "predict",
    "odo_H",
    "update",
    "check_covariance",
]

_SYM_TOL = 1e-9
_EIG_TOL = 1e-9
_COND_FLOOR = 1e-12


class CovarianceNotPSD(ValueError):
    """Covariance lost symmetry or positive semidefiniteness."""


class SingularInnovation(ValueError):
    """Innovation covariance is numerically singular."""


@dataclass(frozen=True)
class NoiseConfig:
    """Continuous-time sensor noise densities and the odometer covariance."""

    gyro_noise_psd: float = 1e-8  # (rad/s)^2/Hz
    accel_noise_psd: float = 1e-5  # (m/s^2)^2/Hz
    gyro_bias_rw_psd: float = 1e-12
    accel_bias_rw_psd: float = 1e-9
    odo_noise_cov: np.ndarray = field(default_factory=lambda: np.diag([1e-4, 1e-4, 1e-4]))

    def __post_init__(self):
        for name in ("gyro_noise_psd", "accel_noise_psd", "gyro_bias_rw_psd", "accel_bias_rw_psd"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        R = np.asarray(self.odo_noise_cov, dtype=float)
        if R.shape != (3, 3) or not np.allclose(R, R.T, atol=1e-12):
            raise ValueError("odo_noise_cov must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(R)[0] <= 0.0:
            raise ValueError("odo_noise_cov must be positive definite")
        object.__setattr__(self, "odo_noise_cov", R)
        object.__setattr__(
            self,
            "_Q",
            np.diag([self.gyro_noise_psd] * 3 + [self.accel_noise_psd] * 3),
        )

    def input_psd(self) -> np.ndarray:
        return self._Q


@dataclass(frozen=True)
class OdoSample:
    """Body-frame velocity aiding sample (forward axis; lateral/vertical
    are non-holonomic zeros)."""

    v_odo_b: np.ndarray
    t: float


@dataclass(frozen=True)
class FilterState:
    """Estimate, bias estimates and the 15x15 error covariance."""

    nav: NavState
    bias_g: np.ndarray
    bias_a: np.ndarray
    P: np.ndarray
    conv: ErrorConvention
    variant: ModelVariant
    t: float = 0.0


def check_covariance(P: np.ndarray) -> None:
    """Raise CovarianceNotPSD when P is asymmetric or indefinite."""
    if not np.all(np.isfinite(P)):
        raise CovarianceNotPSD("covariance has non-finite entries")
    if np.abs(P - P.T).max() > _SYM_TOL:
        raise CovarianceNotPSD("covariance asymmetry exceeds 1e-9")
    eig_min = float(np.linalg.eigvalsh(P)[0])
    if eig_min < -_EIG_TOL * max(np.trace(P), 1e-300):
        raise CovarianceNotPSD(f"covariance indefinite (min eig {eig_min:.3e})")


def predict(
    fs: FilterState,
    imu: ImuSample,
    noise: NoiseConfig,
    earth: EarthParams,
    gravity_model: GravityModel,
    world: WorldFrameDef | None = None,
    method: str = "midpoint",
) -> FilterState:
    """One strapdown + covariance propagation step over imu.dt."""
    corrected = ImuSample(
        np.asarray(imu.omega_ib_b, dtype=float) - fs.bias_g,
        np.asarray(imu.f_ib_b, dtype=float) - fs.bias_a,
        imu.dt,
    )
    F, G = linearized_F_G(fs.variant, fs.conv, fs.nav, corrected, earth, gravity_model, world)
    nav = step(fs.nav, corrected, earth, gravity_model, world, method=method)

    dt = imu.dt
    Fdt = F * dt
    Phi = np.eye(15) + Fdt + 0.5 * (Fdt @ Fdt)
    M = G @ noise.input_psd() @ G.T
    Qd = 0.5 * dt * (Phi @ M @ Phi.T + M)
    qbg = noise.gyro_bias_rw_psd * dt
    qba = noise.accel_bias_rw_psd * dt
    Qd[9, 9] += qbg
    Qd[10, 10] += qbg
    Qd[11, 11] += qbg
    Qd[12, 12] += qba
    Qd[13, 13] += qba
    Qd[14, 14] += qba

    P = Phi @ fs.P @ Phi.T + Qd
    P = 0.5 * (P + P.T)
    return replace(fs, nav=nav, P=P, t=fs.t + dt)


def odo_H(
    variant: ModelVariant,
    conv: ErrorConvention,
    est: NavState,
    earth: EarthParams,
    world: WorldFrameDef | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Measurement matrix and predicted body velocity for the odometer.

    Returns (H, v_ins_b) where the innovation is v_ins_b - z.v_odo_b and
    H maps the 15-dim error vector to that innovation to first order. The
    bias columns are zero.
    """
    C = est.x.R
    p = est.x.p
    vb = body_velocity(est, earth, world)
    H = np.zeros((3, 15))
    omega = earth_rate(est.frame.value, earth, world)
    Om = skew(omega)
    Ct = C.T

    if conv is ErrorConvention.LEFT:
        H[:, 0:3] = skew(vb)
        H[:, 3:6] = -np.eye(3)
        if not (est.frame is not Frame.I and est.grouping is Grouping.TRADITIONAL):
            # i-frame and both proposed models carry the earth-rate fold on
            # the position block; traditional rotating frames do not.
            H[:, 6:9] = skew(Ct @ omega)
        return H, vb

    H[:, 3:6] = -Ct
    if est.frame is Frame.I:
        r_ib = est.r0 + p
        H[:, 0:3] = Ct @ (skew(np.cross(omega, r_ib)) - Om @ skew(p))
        H[:, 6:9] = Ct @ Om
    elif est.grouping is Grouping.PROPOSED:
        H[:, 0:3] = -Ct @ skew(p) @ Om
        H[:, 6:9] = Ct @ Om
    # traditional e/w: attitude and position blocks stay zero.
    return H, vb


def update(
    fs: FilterState,
    z: OdoSample,
    noise: NoiseConfig,
    earth: EarthParams,
    gravity_model: GravityModel,
    world: WorldFrameDef | None = None,
    gate_sigma: float | None = None,
    imu_period: float = 0.01,
) -> FilterState:
    """Fuse one odometer sample (nearest-epoch alignment, no interpolation)."""
    if abs(z.t - fs.t) > imu_period + 1e-9:
        raise ValueError(f"odo sample at t={z.t} not aligned with filter t={fs.t}")
    H, vb = odo_H(fs.variant, fs.conv, fs.nav, earth, world)
    y = vb - np.asarray(z.v_odo_b, dtype=float)

    R = noise.odo_noise_cov
    S = H @ fs.P @ H.T + R
    S = 0.5 * (S + S.T)
    eig = np.linalg.eigvalsh(S)
    if eig[0] <= _COND_FLOOR * max(eig[-1], 0.0):
        raise SingularInnovation(f"innovation covariance conditioning {eig[0]:.3e}/{eig[-1]:.3e}")
    Sinv = np.linalg.inv(S)
    if gate_sigma is not None:
        if float(y @ Sinv @ y) > gate_sigma**2:
            return fs  # reject the sample, carry the state through

    K = fs.P @ H.T @ Sinv
    dx = K @ y
    nav = apply_correction(fs.nav, TangentVector.from_vector(dx[:9]), fs.conv)
    bias_g = fs.bias_g - dx[9:12]
    bias_a = fs.bias_a - dx[12:15]

    A = np.eye(15) - K @ H
    P = A @ fs.P @ A.T + K @ R @ K.T
    P = 0.5 * (P + P.T)
    check_covariance(P)
    return FilterState(nav, bias_g, bias_a, P, fs.conv, fs.variant, fs.t)
