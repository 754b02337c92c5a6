"""Filter building blocks: H oracle, covariance propagation, Joseph update."""
from __future__ import annotations

import numpy as np
import pytest

from navkit import (
    CovarianceNotPSD,
    EarthParams,
    ErrorConvention,
    FilterState,
    Frame,
    Grouping,
    ImuSample,
    ModelVariant,
    NoiseConfig,
    OdoSample,
    SingularInnovation,
    SphericalGravity,
    TangentVector,
    UniformGravity,
    apply_correction,
    body_velocity,
    check_covariance,
    earth_rate,
    linearized_F_G,
    make_nav_state,
    odo_H,
    predict,
    skew,
    step,
    update,
)
from conftest import random_nav_state, random_rotation

ALL_COMBOS = [
    (Frame.I, Grouping.TRADITIONAL),
    (Frame.I, Grouping.PROPOSED),
    (Frame.E, Grouping.TRADITIONAL),
    (Frame.E, Grouping.PROPOSED),
    (Frame.W, Grouping.TRADITIONAL),
    (Frame.W, Grouping.PROPOSED),
]
CONVS = [ErrorConvention.RIGHT, ErrorConvention.LEFT]


def wander(state, rng):
    from dataclasses import replace

    from navkit import SE23

    x = SE23(
        state.x.R,
        state.x.v + rng.normal(scale=5.0, size=3),
        rng.normal(scale=200.0, size=3),
    )
    return replace(state, x=x)


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(gyro_noise_psd=-1.0)
    with pytest.raises(ValueError):
        NoiseConfig(odo_noise_cov=np.array([[1.0, 0.5, 0], [0, 1, 0], [0, 0, 1]]))
    with pytest.raises(ValueError):
        NoiseConfig(odo_noise_cov=-np.eye(3))
    n = NoiseConfig()
    assert np.allclose(n.input_psd(), np.diag([n.gyro_noise_psd] * 3 + [n.accel_noise_psd] * 3))


def numerical_H(est, conv, earth, world):
    """Central-difference columns of the innovation w.r.t. the error chart."""
    eps = [1e-6] * 3 + [1e-5] * 3 + [1e-4] * 3
    cols = []
    for k in range(9):
        xi = np.zeros(9)
        xi[k] = eps[k]
        plus = body_velocity(apply_correction(est, TangentVector.from_vector(xi), conv), earth, world)
        minus = body_velocity(apply_correction(est, TangentVector.from_vector(-xi), conv), earth, world)
        # innovation = vb(est) - vb(truth), so the column carries a minus.
        cols.append((minus - plus) / (2.0 * eps[k]))
    return np.column_stack(cols)


@pytest.mark.parametrize("conv", CONVS, ids=lambda c: c.value)
@pytest.mark.parametrize("frame,grouping", ALL_COMBOS, ids=lambda c: getattr(c, "value", c))
def test_H_perturbation_oracle(frame, grouping, conv, earth, world):
    rng = np.random.default_rng(70)
    for _ in range(10):
        est = wander(random_nav_state(rng, frame, grouping, earth, world), rng)
        H, vb = odo_H(ModelVariant(frame, grouping), conv, est, earth, world)
        assert np.allclose(vb, body_velocity(est, earth, world))
        Hn = numerical_H(est, conv, earth, world)
        scale = max(1.0, np.linalg.norm(H[:, 0:9]))
        assert np.linalg.norm(Hn - H[:, 0:9]) < 1e-5 * scale
        assert np.allclose(H[:, 9:15], 0.0)


def test_H_printed_forms(earth, world):
    rng = np.random.default_rng(71)
    # Left convention, traditional e-frame, at rest: innovation blind to
    # attitude, velocity block -I.
    st = make_nav_state(Frame.E, Grouping.TRADITIONAL, random_rotation(rng), np.zeros(3), world.r_ew_e.copy(), earth, world)
    H, vb = odo_H(ModelVariant(Frame.E, Grouping.TRADITIONAL), ErrorConvention.LEFT, st, earth, world)
    assert np.allclose(vb, 0.0)
    assert np.allclose(H[:, 0:3], 0.0)
    assert np.allclose(H[:, 3:6], -np.eye(3))
    assert np.allclose(H[:, 6:9], 0.0)

    # Right convention, proposed e-frame, at the anchor (p = 0):
    # [0, -C^T, C^T (omega x)].
    C = random_rotation(rng)
    st = make_nav_state(Frame.E, Grouping.PROPOSED, C, rng.normal(size=3), world.r_ew_e.copy(), earth, world)
    H, _ = odo_H(ModelVariant(Frame.E, Grouping.PROPOSED), ErrorConvention.RIGHT, st, earth, world)
    Om = skew(earth_rate("e", earth))
    assert np.allclose(H[:, 0:3], 0.0)
    assert np.allclose(H[:, 3:6], -C.T)
    assert np.allclose(H[:, 6:9], C.T @ Om)


def _static_filter(conv=ErrorConvention.RIGHT):
    earth = EarthParams()
    nav = make_nav_state(Frame.I, Grouping.TRADITIONAL, random_rotation(np.random.default_rng(72)), np.zeros(3), np.zeros(3), earth)
    fs = FilterState(
        nav=nav,
        bias_g=np.zeros(3),
        bias_a=np.zeros(3),
        P=np.zeros((15, 15)),
        conv=conv,
        variant=ModelVariant(Frame.I, Grouping.TRADITIONAL),
        t=0.0,
    )
    return fs, earth


def test_predict_zero_noise_tracks_truth(earth, world):
    rng = np.random.default_rng(73)
    nav = random_nav_state(rng, Frame.E, Grouping.PROPOSED, earth, world)
    noise = NoiseConfig(gyro_noise_psd=0.0, accel_noise_psd=0.0, gyro_bias_rw_psd=0.0, accel_bias_rw_psd=0.0)
    fs = FilterState(nav, np.zeros(3), np.zeros(3), np.zeros((15, 15)), ErrorConvention.RIGHT, ModelVariant(Frame.E, Grouping.PROPOSED), 0.0)
    model = SphericalGravity()
    truth = nav
    imu = ImuSample(np.array([0.02, -0.01, 0.05]), np.array([0.5, -0.2, 9.7]), 0.01)
    for _ in range(200):
        fs = predict(fs, imu, noise, earth, model, world)
        truth = step(truth, imu, earth, model, world, method="midpoint")
    assert np.allclose(fs.nav.x.as_matrix(), truth.x.as_matrix(), atol=1e-12)
    assert np.abs(fs.P).max() == 0.0
    assert np.isclose(fs.t, 2.0)


def test_predict_attitude_random_walk():
    fs, earth = _static_filter()
    psd = 4e-8
    noise = NoiseConfig(gyro_noise_psd=psd, accel_noise_psd=0.0, gyro_bias_rw_psd=0.0, accel_bias_rw_psd=0.0)
    model = UniformGravity(np.zeros(3))
    imu = ImuSample(np.zeros(3), np.zeros(3), 0.01)
    for _ in range(1000):
        fs = predict(fs, imu, noise, earth, model)
    t = 10.0
    for k in range(3):
        assert abs(fs.P[k, k] - psd * t) < 0.05 * psd * t


def test_phi_truncation_third_order(earth, world):
    from scipy.linalg import expm

    rng = np.random.default_rng(74)
    nav = wander(random_nav_state(rng, Frame.E, Grouping.TRADITIONAL, earth, world), rng)
    imu = ImuSample(rng.normal(scale=0.2, size=3), rng.normal(scale=3.0, size=3), 0.01)
    F, _ = linearized_F_G(ModelVariant(Frame.E, Grouping.TRADITIONAL), ErrorConvention.RIGHT, nav, imu, earth, SphericalGravity(), world)

    def trunc_err(dt):
        Fdt = F * dt
        Phi = np.eye(15) + Fdt + 0.5 * Fdt @ Fdt
        return np.linalg.norm(Phi - expm(Fdt))

    ratio = trunc_err(0.01) / trunc_err(0.005)
    assert 6.0 < ratio < 10.0


def _surface_filter(earth, world, conv, P0=None):
    rng = np.random.default_rng(75)
    nav = make_nav_state(Frame.E, Grouping.TRADITIONAL, np.eye(3), np.array([5.0, 1.0, 0.0]), world.r_ew_e.copy(), earth, world)
    P = np.zeros((15, 15)) if P0 is None else P0
    return FilterState(nav, np.zeros(3), np.zeros(3), P, conv, ModelVariant(Frame.E, Grouping.TRADITIONAL), 0.0)


def test_update_scalar_gain(earth, world):
    P0 = np.zeros((15, 15))
    P0[3:6, 3:6] = 2.0 * np.eye(3)
    fs = _surface_filter(earth, world, ErrorConvention.RIGHT, P0)
    noise = NoiseConfig(odo_noise_cov=np.eye(3))
    vb = fs.nav.x.v.copy()  # C = I so body velocity is the frame velocity
    z = OdoSample(vb - np.array([1.0, 0.0, 0.0]), t=0.0)
    out = update(fs, z, noise, earth, SphericalGravity(), world)
    # Kalman gain p/(p+r) = 2/3 on each axis; posterior pr/(p+r) = 2/3.
    assert np.allclose(out.nav.x.v, vb - np.array([2.0 / 3.0, 0.0, 0.0]), atol=1e-12)
    assert abs(out.P[3, 3] - 2.0 / 3.0) < 1e-12
    assert np.allclose(out.nav.x.R, fs.nav.x.R, atol=1e-12)


@pytest.mark.parametrize("conv", CONVS, ids=lambda c: c.value)
def test_update_zero_innovation_no_op(conv, earth, world):
    rng = np.random.default_rng(76)
    A = rng.normal(size=(15, 15))
    P0 = A @ A.T * 1e-4
    nav = random_nav_state(rng, Frame.W, Grouping.PROPOSED, earth, world)
    fs = FilterState(nav, np.zeros(3), np.zeros(3), P0, conv, ModelVariant(Frame.W, Grouping.PROPOSED), 0.0)
    noise = NoiseConfig()
    _, vb = odo_H(fs.variant, conv, nav, earth, world)
    out = update(fs, OdoSample(vb.copy(), t=0.0), noise, earth, SphericalGravity(), world)
    assert np.allclose(out.nav.x.as_matrix(), nav.x.as_matrix(), atol=1e-12)
    assert np.allclose(out.bias_g, 0.0) and np.allclose(out.bias_a, 0.0)
    assert np.trace(out.P) < np.trace(P0)
    check_covariance(out.P)


def test_update_joseph_keeps_psd(earth, world):
    rng = np.random.default_rng(77)
    noise = NoiseConfig()
    for _ in range(20):
        A = rng.normal(size=(15, 15))
        P0 = A @ A.T * 1e-3
        nav = wander(random_nav_state(rng, Frame.E, Grouping.PROPOSED, earth, world), rng)
        fs = FilterState(nav, np.zeros(3), np.zeros(3), P0, ErrorConvention.LEFT, ModelVariant(Frame.E, Grouping.PROPOSED), 0.0)
        _, vb = odo_H(fs.variant, fs.conv, nav, earth, world)
        z = OdoSample(vb + rng.normal(scale=0.1, size=3), t=0.0)
        out = update(fs, z, noise, earth, SphericalGravity(), world)
        check_covariance(out.P)
        assert np.abs(out.P - out.P.T).max() < 1e-12


def test_update_gating_rejects_outlier(earth, world):
    P0 = np.eye(15) * 1e-6
    fs = _surface_filter(earth, world, ErrorConvention.RIGHT, P0)
    noise = NoiseConfig(odo_noise_cov=np.eye(3) * 1e-4)
    _, vb = odo_H(fs.variant, fs.conv, fs.nav, earth, world)
    z = OdoSample(vb + np.array([50.0, 0.0, 0.0]), t=0.0)
    out = update(fs, z, noise, earth, SphericalGravity(), world, gate_sigma=5.0)
    assert out is fs  # rejected wholesale
    accepted = update(fs, z, noise, earth, SphericalGravity(), world)
    assert not np.allclose(accepted.nav.x.v, fs.nav.x.v)


def test_update_time_alignment_guard(earth, world):
    fs = _surface_filter(earth, world, ErrorConvention.RIGHT)
    noise = NoiseConfig()
    with pytest.raises(ValueError):
        update(fs, OdoSample(np.zeros(3), t=0.5), noise, earth, SphericalGravity(), world)


def test_update_singular_innovation(earth, world):
    fs = _surface_filter(earth, world, ErrorConvention.RIGHT)  # P = 0
    noise = NoiseConfig(odo_noise_cov=np.diag([1e-4, 1e-4, 1e-320]))
    with pytest.raises(SingularInnovation):
        update(fs, OdoSample(fs.nav.x.v.copy(), t=0.0), noise, earth, SphericalGravity(), world)


def test_check_covariance_raises():
    P = np.eye(15)
    P[0, 1] = 1e-6  # asymmetric
    with pytest.raises(CovarianceNotPSD):
        check_covariance(P)
    P = -np.eye(15)
    with pytest.raises(CovarianceNotPSD):
        check_covariance(P)
    check_covariance(np.eye(15) * 1e-12)


def test_perfect_sensor_closed_loop_stays_put(earth, world):
    # With exact IMU, exact odometer and zero biases the closed loop must
    # not inject error.
    rng = np.random.default_rng(78)
    model = SphericalGravity()
    nav = make_nav_state(Frame.W, Grouping.PROPOSED, random_rotation(rng), np.array([10.0, 0.0, 0.0]), np.zeros(3), earth, world)
    truth = nav
    noise = NoiseConfig()
    fs = FilterState(nav, np.zeros(3), np.zeros(3), np.eye(15) * 1e-4, ErrorConvention.RIGHT, ModelVariant(Frame.W, Grouping.PROPOSED), 0.0)
    imu = ImuSample(np.array([0.0, 0.0, 0.05]), np.array([0.3, 0.0, 9.8]), 0.01)
    for k in range(500):
        fs = predict(fs, imu, noise, earth, model, world)
        truth = step(truth, imu, earth, model, world, method="midpoint")
        if (k + 1) % 10 == 0:
            vb = body_velocity(truth, earth, world)
            fs = update(fs, OdoSample(vb, t=fs.t), noise, earth, model, world)
    dv = fs.nav.x.v - truth.x.v
    dp = fs.nav.x.p - truth.x.p
    assert np.linalg.norm(dv) < 1e-6
    assert np.linalg.norm(dp) < 1e-5
