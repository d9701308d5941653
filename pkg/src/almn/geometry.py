"""Angular geometry of the embedding space.

Everything needed to place a virtual boundary point: angles between
vectors, the nearest-negative angle seen from a class center, the
chord-length offset vector, and the renormalized virtual point itself.
All operations are pure functions; norms are never assumed to be 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateGeometry,
    DegenerateVector,
    EmptyNegativeSet,
    NonFiniteResult,
)

# Norm guard for every division; below it a direction is undefined and
# virtual-point generation degenerates to the identity.
EPS = 1e-8


def _norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(v))


def angle_between(a, b) -> float:
    """Angle in [0, pi] between two vectors.

    Raises DegenerateVector when either norm is at or below the guard.
    The cosine is clamped to [-1, 1] before arccos to absorb float error.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = _norm(a), _norm(b)
    if na <= EPS or nb <= EPS:
        raise DegenerateVector(f"cannot take an angle with norms ({na:g}, {nb:g})")
    c = float(np.dot(a, b)) / (na * nb)
    return math.acos(min(1.0, max(-1.0, c)))


def nearest_negative_angle(center, negatives) -> tuple[float, int]:
    """Smallest angle from `center` to any vector in `negatives`.

    Returns (angle, index); ties are broken by the lowest index. Every
    candidate and the center must be non-degenerate.
    """
    center = np.asarray(center, dtype=np.float64)
    negs = np.asarray(negatives, dtype=np.float64)
    if negs.ndim == 1:
        negs = negs[None, :]
    if negs.shape[0] == 0:
        raise EmptyNegativeSet("no negative candidates")
    nc = _norm(center)
    norms = np.linalg.norm(negs, axis=1)
    if nc <= EPS or np.any(norms <= EPS):
        raise DegenerateVector("zero-norm vector in nearest-negative search")
    cos = np.clip((negs @ center) / (norms * nc), -1.0, 1.0)
    angles = np.arccos(cos)
    idx = int(np.argmin(angles))  # argmin keeps the first occurrence on ties
    return float(angles[idx]), idx


def chord_length(norm_x: float, theta_star: float) -> float:
    """Length of the chord subtending `theta_star` on the radius-`norm_x` circle.

    Even in theta_star: sqrt(2 - 2 cos t) = 2 |sin(t/2)|.
    """
    return norm_x * math.sqrt(max(2.0 - 2.0 * math.cos(theta_star), 0.0))


def lower_bound_vector(x_i, center, theta_nn) -> np.ndarray:
    """Chord-length offset in the direction of x_i - center.

    Its amplitude ||x_i|| sqrt(2 - 2 cos(theta_nn - theta_i)) undershoots
    the ideal offset that would land exactly at the nearest-negative angle,
    which keeps the induced constraint trainable on random mini-batches.
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    theta_i = angle_between(x_i, center)
    v = x_i - center
    q = _norm(v)
    if q <= EPS:
        raise DegenerateGeometry("sample coincides with its center")
    amp = chord_length(_norm(x_i), theta_nn - theta_i)
    return v * (amp / q)


@dataclass(frozen=True)
class VpgContext:
    """Geometry snapshot for one anchor's virtual point.

    M is the offset strength actually applied:
    M = beta * ||x_i|| * sqrt(2 - 2 cos(theta_nn - theta_i)) / ||x_i - center||,
    zero when beta is zero or the sample sits on its center.
    """

    x_i: np.ndarray
    center: np.ndarray
    theta_i: float
    theta_nn: float
    beta: float
    M: float


def generate_virtual_point(x_i, center, theta_nn, beta) -> tuple[np.ndarray, VpgContext]:
    """Build the virtual boundary point for one anchor.

    x_g = ((M+1) x_i - M center) / ||(M+1) x_i - M center|| * ||x_i||,
    so the virtual point keeps the anchor's amplitude while rotating away
    from the center by an amount set by the local margin budget
    theta_nn - theta_i and the strength knob beta. beta = 0 (or a sample
    sitting on its center) is the identity: x_g = x_i, M = 0.
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if beta < 0:
        raise ValueError("beta must be non-negative")
    r = _norm(x_i)
    if r <= EPS:
        raise DegenerateVector("anchor has (near-)zero norm")
    theta_i = angle_between(x_i, center)
    v = x_i - center
    q = _norm(v)
    if beta == 0.0 or q <= EPS:
        ctx = VpgContext(x_i, center, theta_i, float(theta_nn), float(beta), 0.0)
        return x_i.copy(), ctx
    M = beta * chord_length(r, theta_nn - theta_i) / q
    u = (M + 1.0) * x_i - M * center
    nu = _norm(u)
    x_g = u * (r / nu)
    if not np.all(np.isfinite(x_g)):
        raise NonFiniteResult("virtual point overflowed")
    ctx = VpgContext(x_i, center, theta_i, float(theta_nn), float(beta), float(M))
    return x_g, ctx
