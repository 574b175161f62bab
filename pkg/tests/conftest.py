"""Shared fixtures and independent oracles for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from se3obs.lie_core import AlgebraVec6, Pose, exp_so3, hat3


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20230817)


def random_rotation(rng: np.random.Generator, max_angle: float = 3.0) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    return exp_so3(angle * axis)


def random_pose(
    rng: np.random.Generator,
    max_angle: float = 3.0,
    trans_scale: float = 2.0,
) -> Pose:
    return Pose(random_rotation(rng, max_angle), trans_scale * rng.normal(size=3))


def random_vec6(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    return scale * rng.normal(size=6)


def random_algebra(rng: np.random.Generator, scale: float = 1.0) -> AlgebraVec6:
    return AlgebraVec6.from_vec(random_vec6(rng, scale))


def hat4(u: np.ndarray) -> np.ndarray:
    """4x4 matrix form of an algebra coordinate vector (w, v)."""
    u = np.asarray(u, dtype=float).reshape(6)
    M = np.zeros((4, 4))
    M[:3, :3] = hat3(u[:3])
    M[:3, 3] = u[3:]
    return M


def vee4(M: np.ndarray) -> np.ndarray:
    """Coordinates (w, v) of a 4x4 algebra matrix; no skewness check."""
    M = np.asarray(M, dtype=float)
    w = np.array([M[2, 1], M[0, 2], M[1, 0]])
    return np.concatenate([w, M[:3, 3]])
