"""Named space forms: round spheres, projective spaces, lens spaces, the
quaternion quotient of ``S^3``, flat tori and the Klein bottle."""
import math

import numpy as np

from .geometry import make_flat_quotient, make_sphere_quotient, rigid_motion, translation


def rotation2(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def quaternion_left(q):
    """Matrix of ``x -> q x`` on ``H = R^4`` with basis ``(1, i, j, k)``."""
    a, b, c, d = q
    return np.array([
        [a, -b, -c, -d],
        [b, a, -d, c],
        [c, d, a, -b],
        [d, -c, b, a],
    ], dtype=float)


def sphere(n):
    return make_sphere_quotient(n, [], name=f"sphere({n})")


def rp_n(n):
    return make_sphere_quotient(n, [-np.eye(n + 1)], name=f"rp_n({n})")


def lens(p, q):
    """``L(p; q)``: ``S^3`` modulo rotation by ``2pi/p`` and ``2pi q/p`` in the two planes."""
    if math.gcd(p, q) != 1:
        raise ValueError("lens space needs gcd(p, q) = 1")
    g = np.zeros((4, 4))
    g[:2, :2] = rotation2(2 * math.pi / p)
    g[2:, 2:] = rotation2(2 * math.pi * q / p)
    return make_sphere_quotient(3, [g], name=f"lens({p},{q})")


def quaternion():
    """``S^3`` modulo left multiplication by ``{+-1, +-i, +-j, +-k}``."""
    return make_sphere_quotient(3, [quaternion_left((0, 1, 0, 0)), quaternion_left((0, 0, 1, 0))],
                                name="quaternion")


def torus(B=None, n=2):
    B = np.eye(n) if B is None else np.asarray(B, dtype=float)
    gens = [translation(B[:, i]) for i in range(B.shape[1])]
    return make_flat_quotient(B, gens, name="torus")


def klein_bottle():
    glide = rigid_motion(np.diag([-1.0, 1.0]), [0.0, 0.5])
    return make_flat_quotient(np.eye(2), [glide, translation([1.0, 0.0])], name="klein_bottle")


SPHERE_PRESETS = {"sphere", "rp_n", "lens", "quaternion"}
FLAT_PRESETS = {"torus", "klein_bottle"}
