"""SE2(3)/SO(3) matrix Lie group and algebra primitives.

The extended-pose group SE2(3) packs a rotation, a velocity column and a
position column into a 5x5 matrix

    [ R  v  p ]
    [ 0  1  0 ]
    [ 0  0  1 ]

Every operation here is a pure function over immutable values; the 9-vector
tangent ordering is (phi, rho_v, rho_r) throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NotARotation",
    "AngleAtPi",
    "skew",
    "unskew",
    "so3_exp",
    "so3_log",
    "so3_left_jacobian",
    "so3_left_jacobian_inv",
    "TangentVector",
    "SE23",
    "wedge5",
    "vee5",
    "se23_exp",
    "se23_log",
]

_ORTHO_TOL = 1e-6  # orthonormality defect beyond this is an error
_SMALL_ANGLE = 1e-8  # series branch threshold for exp-family coefficients
_PI_GUARD = 1e-6  # se23_log refuses angles this close to pi


class NotARotation(ValueError):
    """Matrix fails the orthonormality / det(+1) test beyond tolerance."""


class AngleAtPi(ValueError):
    """Logarithm requested within the guard band of the angle-pi cut."""


def skew(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that skew(w) @ u == cross(w, u)."""
    w = np.asarray(w, dtype=float)
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def unskew(W: np.ndarray) -> np.ndarray:
    """Inverse of skew for an (assumed) antisymmetric 3x3 matrix."""
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def _check_rotation(R: np.ndarray) -> None:
    defect = np.linalg.norm(R.T @ R - np.eye(3))
    if defect > _ORTHO_TOL or np.linalg.det(R) < 0.0:
        raise NotARotation(f"orthonormality defect {defect:.3e} exceeds {_ORTHO_TOL:.0e}")


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues exponential of a rotation vector.

    Uses the half-angle form of (1-cos)/theta^2 for stability and a series
    branch below the small-angle threshold.
    """
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    theta = np.sqrt(theta2)
    W = skew(phi)
    if theta < _SMALL_ANGLE:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = np.sin(theta) / theta
        s = np.sin(0.5 * theta)
        b = 2.0 * s * s / theta2
    return np.eye(3) + a * W + b * (W @ W)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R with norm <= pi.

    Near the angle-pi cut the axis is recovered from the symmetric part
    (well conditioned there); the sign is matched to the antisymmetric part
    when it is informative and fixed canonically (first nonzero component
    positive) at exactly pi, where both signs are equivalent.

    Raises NotARotation if R is not orthonormal with det +1 to 1e-6.
    """
    R = np.asarray(R, dtype=float)
    _check_rotation(R)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    w = unskew(R - R.T) / 2.0  # = axis * sin(theta)

    if theta < _SMALL_ANGLE:
        return w
    if theta < np.pi - 1e-3:
        return w * (theta / np.sin(theta))

    # Axis extraction from the symmetric part: S = cos I + (1-cos) a a^T.
    S = (R + R.T) / 2.0
    one_minus = 1.0 - cos_theta
    a2 = np.clip((np.diag(S) - cos_theta) / one_minus, 0.0, 1.0)
    axis = np.sqrt(a2)
    k = int(np.argmax(axis))
    # Off-diagonal entries carry the relative signs a_i a_j (1-cos).
    for i in range(3):
        if i != k and axis[i] > 0.0:
            axis[i] = np.copysign(axis[i], S[min(i, k), max(i, k)])
    axis /= np.linalg.norm(axis)
    sin_theta = np.sin(theta)
    if abs(sin_theta) > 1e-12 and np.linalg.norm(w) > 1e-12:
        if float(w @ axis) < 0.0:
            axis = -axis
    else:
        nz = np.nonzero(np.abs(axis) > 1e-12)[0]
        if nz.size and axis[nz[0]] < 0.0:
            axis = -axis
    return axis * theta


def so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    """Left Jacobian J of SO(3): d(exp)/d(phi) transport of tangent columns."""
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    theta = np.sqrt(theta2)
    W = skew(phi)
    if theta < 1e-4:
        b = 0.5 - theta2 / 24.0
        c = 1.0 / 6.0 - theta2 / 120.0
    else:
        s = np.sin(0.5 * theta)
        b = 2.0 * s * s / theta2
        c = (theta - np.sin(theta)) / (theta2 * theta)
    return np.eye(3) + b * W + c * (W @ W)


def so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    """Inverse left Jacobian, stable on ||phi|| < pi."""
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    theta = np.sqrt(theta2)
    W = skew(phi)
    if theta < 1e-4:
        c = 1.0 / 12.0 + theta2 / 720.0
    else:
        half = 0.5 * theta
        c = (1.0 - half * np.cos(half) / np.sin(half)) / theta2
    return np.eye(3) - 0.5 * W + c * (W @ W)


@dataclass(frozen=True)
class TangentVector:
    """se2(3) coordinates (phi, rho_v, rho_r) in rad, m/s, m."""

    phi: np.ndarray
    rho_v: np.ndarray
    rho_r: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.phi, self.rho_v, self.rho_r])

    @staticmethod
    def from_vector(xi: np.ndarray) -> "TangentVector":
        xi = np.asarray(xi, dtype=float)
        return TangentVector(xi[0:3].copy(), xi[3:6].copy(), xi[6:9].copy())

    @staticmethod
    def zero() -> "TangentVector":
        return TangentVector(np.zeros(3), np.zeros(3), np.zeros(3))


@dataclass(frozen=True)
class SE23:
    """Extended pose: rotation R, velocity column v, position column p."""

    R: np.ndarray
    v: np.ndarray
    p: np.ndarray

    @staticmethod
    def identity() -> "SE23":
        return SE23(np.eye(3), np.zeros(3), np.zeros(3))

    def compose(self, other: "SE23") -> "SE23":
        return SE23(
            self.R @ other.R,
            self.R @ other.v + self.v,
            self.R @ other.p + self.p,
        )

    def inverse(self) -> "SE23":
        Rt = self.R.T
        return SE23(Rt, -(Rt @ self.v), -(Rt @ self.p))

    def as_matrix(self) -> np.ndarray:
        M = np.eye(5)
        M[0:3, 0:3] = self.R
        M[0:3, 3] = self.v
        M[0:3, 4] = self.p
        return M

    @staticmethod
    def from_matrix(M: np.ndarray) -> "SE23":
        M = np.asarray(M, dtype=float)
        R = M[0:3, 0:3].copy()
        _check_rotation(R)
        return SE23(R, M[0:3, 3].copy(), M[0:3, 4].copy())

    def adjoint(self) -> np.ndarray:
        """9x9 adjoint: vee5(X wedge5(xi) X^-1) == adjoint(X) @ xi."""
        A = np.zeros((9, 9))
        A[0:3, 0:3] = self.R
        A[3:6, 0:3] = skew(self.v) @ self.R
        A[3:6, 3:6] = self.R
        A[6:9, 0:3] = skew(self.p) @ self.R
        A[6:9, 6:9] = self.R
        return A


def wedge5(xi: TangentVector) -> np.ndarray:
    """Algebra element: skew(phi) upper-left with rho_v, rho_r columns."""
    M = np.zeros((5, 5))
    M[0:3, 0:3] = skew(xi.phi)
    M[0:3, 3] = xi.rho_v
    M[0:3, 4] = xi.rho_r
    return M


def vee5(M: np.ndarray) -> TangentVector:
    """Inverse of wedge5."""
    return TangentVector(unskew(M[0:3, 0:3]), M[0:3, 3].copy(), M[0:3, 4].copy())


def se23_exp(xi: TangentVector) -> SE23:
    """Group exponential: exp(phi) rotation with left-Jacobian columns."""
    J = so3_left_jacobian(xi.phi)
    return SE23(so3_exp(xi.phi), J @ xi.rho_v, J @ xi.rho_r)


def se23_log(x: SE23) -> TangentVector:
    """Group logarithm; raises AngleAtPi within 1e-6 of the pi cut."""
    phi = so3_log(x.R)
    theta = float(np.linalg.norm(phi))
    if theta > np.pi - _PI_GUARD:
        raise AngleAtPi(f"rotation angle {theta:.9f} is within {_PI_GUARD:.0e} of pi")
    Jinv = so3_left_jacobian_inv(phi)
    return TangentVector(phi, Jinv @ x.v, Jinv @ x.p)
