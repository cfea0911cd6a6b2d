"""Coupling kernels as an algebra: convolution, adjoint, and the norm of the left-regular representation."""
import numpy as np

from patternlab import Isometry, Pattern, Window
from patternlab.algebra import DeltaKernel, FunctionKernel, convolve, norm_estimate, restrict, star


def hopping(g, L):
    return np.array([[1.0]]) if abs(np.linalg.norm(g.v) - 1.0) < 1e-9 else np.zeros((1, 1))


n = 201
chain = Pattern.from_points([Isometry.translation([-(i - n // 2), 0.0]) for i in range(n)], Window(n / 2 + 1))
t = FunctionKernel(hopping, 1, 1.0)
tt = convolve(star(t), t)
print("rho(t* t) = number of neighbours:", restrict(tt, chain).real.item())
print("delta is the unit:", np.allclose(convolve(DeltaKernel(1), t).evaluate(Isometry.translation([1.0, 0.0]), chain), 1))

value, table = norm_estimate(t, [chain], [5.0, 20.0, 100.0])
for size, v in table:
    print(f"  window {size:5.1f}: |t| >= {v:.5f}")
print(f"norm estimate {value:.5f} (infinite chain: 2)")
