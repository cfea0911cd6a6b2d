"""Patterns of rigid resonators: a p4 crystal, a quasi-rotation chain, and their classification."""
import numpy as np

from patternlab import BallTimesO, Isometry, QuasiRotation, Wallpaper, Window, classify, generate
from patternlab.pattern import separation_radius

crystal = generate(Wallpaper("p4", ((2.0, 0.0), (0.0, 2.0)), Isometry.planar([0.5, 0.5], 0.3)), Window(6.0))
chain = generate(QuasiRotation(Isometry.planar([1.0, 0.0], 2 * np.pi / np.sqrt(11))), Window(10.5))

for name, p in (("p4 crystal", crystal), ("quasi-rotation chain", chain)):
    kind = classify(p, BallTimesO(0.45), BallTimesO(2.0))
    print(f"{name}: {len(p)} resonators, separation radius {separation_radius(p):.3f}, {kind.value}")

# a rigid motion of the whole architecture is the right action x -> x g^-1
g = Isometry.planar([3.0, -1.0], 0.7)
moved = crystal.positions() @ g.r.T + g.v
print("first resonators after the motion:\n", np.round(moved[:3], 3))
