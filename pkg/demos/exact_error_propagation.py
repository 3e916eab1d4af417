"""Exact versus approximate error propagation on the sphere.

Two flows on S^2 are compared. For q' = sigma(u) x q the tangent error
between two trajectories evolves by a linear map F_t, whatever its size.
For the gradient flow q' = (I - q q^T) b the same fit leaves a remainder
that grows with the error, the signature of an ordinary linearization.
"""

import numpy as np

from linobs import verify as V
from linobs.flows import ConstantInput, GradientLike, SinusoidInput, SigmaCross
from linobs.manifolds import Sphere2

S2 = Sphere2()
MAGNITUDES = (0.05, 0.1, 0.2, 0.5, 1.0)


def profile(name, field, signal, base):
    res = V.exactness_profile(S2, field, signal, base, MAGNITUDES, horizon=1.0)
    print(f"\n{name}")
    print("  |error| rad   worst fit residual")
    for a, r in res.items():
        print(f"  {a:10.2f}   {r:.3e}")
    return res


def main():
    base = np.array([0.6, 0.0, 0.8])
    omega = SinusoidInput([0.4, 0.3, 0.8], [0.5, 0.7, 0.3], offset=[0.1, 0.0, 0.2])
    profile("sigma-cross kinematics (linear observed)", SigmaCross(np.eye(3), np.zeros(3)), omega, base)
    grad = profile("gradient flow toward (0, 0, 1) (negative control)", GradientLike([0, 0, 1.0]),
                   ConstantInput([0.0]), base)
    print(f"\ngradient residual ratio for doubling the error 0.1 -> 0.2: {grad[0.2] / grad[0.1]:.2f}")

    rec, _ = V.fit_linearization(S2, SigmaCross(np.eye(3), np.zeros(3)), ConstantInput([0, 0, 0.5]),
                                 [0, 0, 1.0], V.default_error_samples(S2, [0, 0, 1.0], (0.3,)), 1.0)
    A = V.estimate_A(rec)
    print("\nerror generator A for a constant rate 0.5 about the base point:")
    print(np.array2string(A[len(A) // 2], precision=6, suppress_small=True))


if __name__ == "__main__":
    main()
