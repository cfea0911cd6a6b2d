"""From magnets to coupling matrices: equilibrium, Hessian blocks, and frame independence."""
import numpy as np

from patternlab import Isometry, Wallpaper, Window, generate, translate_pattern
from patternlab.coupling import (CouplingModel, DipoleDipole, ExternalField, ModelKernel, SeedResonator,
                                 check_equivariance)

seed = SeedResonator(2, np.eye(3), np.diag([4.0, 4.0, 1.0]),
                     (((0.05, 0.0), (0.0, 0.0, 1.0)), ((-0.05, 0.0), (1.0, 0.0, 0.0))))
p = generate(Wallpaper("p4", ((2.0, 0.0), (0.0, 2.0)), Isometry.planar([0.5, 0.5], 0.3)), Window(3.0))
p = translate_pattern(p[int(np.argmin(np.linalg.norm(p.positions(), axis=1)))], p)

model = CouplingModel(seed, DipoleDipole.from_seed(seed, 0.01, 2.5))
W = model.matrices(p)
print(f"{len(p)} sites, {len(W.pairs) - len(p)} coupled ordered pairs, largest equilibrium offset "
      f"{np.abs(W.equilibrium_offsets).max():.2e}, finite-difference error {W.fd_error:.1e}")
print("on-site block of the identity site:\n", np.round(W.block(p.identity_index(), p.identity_index()), 5))

rep = check_equivariance(ModelKernel(model), p, trials=5, rng=0)
print(f"frame-independent dipoles: deviation {float(rep):.1e} -> {'equivariant' if rep.passed else 'broken'}")

field = ExternalField(model.potential, (0.02, 0.0, 0.0), seed.dipole_moments)
rep = check_equivariance(ModelKernel(CouplingModel(seed, field)), p, trials=2, rng=0)
print(f"dipoles in a laboratory field: deviation {float(rep):.1e} -> {'equivariant' if rep.passed else 'broken'}")
