"""Vector, rotation and cross-product primitives.

Vectors are ``(3,)`` float arrays and matrices are ``(3, 3)`` float arrays.
"""

import numpy as np

from .errors import ZeroLengthVector

EPS_LEN = 1e-9
EPS_ANGLE = 1e-12
EPS_PARALLEL = 1e-9


def as_vec3(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    return v


def normalize(v, eps: float = EPS_LEN) -> np.ndarray:
    v = as_vec3(v)
    n = np.linalg.norm(v)
    if n <= eps:
        raise ZeroLengthVector(f"vector {v.tolist()} has norm {n:.3g} <= {eps:g}")
    return v / n


def hat(v) -> np.ndarray:
    """Cross-product matrix: ``hat(v) @ w == cross(v, w)``."""
    x, y, z = as_vec3(v)
    return np.array(
        [
            [0.0, -z, y],
            [z, 0.0, -x],
            [-y, x, 0.0],
        ]
    )


def perpendicular_axis(a) -> np.ndarray:
    """Deterministic unit axis perpendicular to ``a``.

    Crosses ``a`` with the standard basis vector least aligned with it
    (lowest index wins ties).
    """
    a = normalize(a)
    e = np.zeros(3)
    e[int(np.argmin(np.abs(a)))] = 1.0
    return normalize(np.cross(a, e))


def rotation_between(a, b) -> np.ndarray:
    """Minimal-angle rotation vector taking the direction of ``a`` onto ``b``.

    The angle is ``atan2(|a x b|, a . b)`` on the unit vectors, which equals
    the clamped arccos of the normalized dot product but keeps full precision
    near 0 and pi. Degenerate pairs (``|a x b| <= 1e-9``) return the zero
    vector when parallel and a pi rotation about :func:`perpendicular_axis`
    when antiparallel.
    """
    a_hat = normalize(a)
    b_hat = normalize(b)
    axis = np.cross(a_hat, b_hat)
    s = np.linalg.norm(axis)
    c = float(np.clip(np.dot(a_hat, b_hat), -1.0, 1.0))
    if s <= EPS_PARALLEL:
        if c > 0:
            return np.zeros(3)
        return np.pi * perpendicular_axis(a_hat)
    return np.arctan2(s, c) * (axis / s)


def rodrigues(psi) -> np.ndarray:
    """Rotation matrix of the axis-angle vector ``psi``."""
    psi = as_vec3(psi)
    theta = np.linalg.norm(psi)
    if theta < EPS_ANGLE:
        return np.eye(3)
    phi = psi / theta
    return (
        np.cos(theta) * np.eye(3)
        + (1.0 - np.cos(theta)) * np.outer(phi, phi)
        + np.sin(theta) * hat(phi)
    )


def is_rotation(m, tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    ortho = np.max(np.abs(m.T @ m - np.eye(3)))
    return bool(ortho <= tol and abs(np.linalg.det(m) - 1.0) <= tol)


def random_rotation(rng: np.random.Generator, max_angle: float = np.pi) -> np.ndarray:
    """Rotation about a uniformly random axis by an angle uniform in ``[0, max_angle]``."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return rodrigues(axis * rng.uniform(0.0, max_angle))
