"""Turning every magnet of a quasi-rotation chain by a common phason angle: the spectrum is 2 pi periodic."""
import numpy as np

from patternlab.dynamics import SweepSpec, sweep
from patternlab.scenario import KernelFactory, PatternFamily

generator = {"kind": "quasirotation", "step": {"v": [1.0, 0.0], "angle": 2 * np.pi / np.sqrt(11)}}
resonator = {"mass": [[1.0]], "stiffness": [[1.0]], "frozen": [True, True, False],
             "dipoles": [{"offset": [0.0, 0.0], "moment": [1.0, 0.0, 0.0]}]}
spec = SweepSpec("phase", tuple(np.linspace(0, 2 * np.pi, 17)),
                 PatternFamily(generator, {"radius": 15.5}, 2, "phase"),
                 KernelFactory(resonator, {"type": "dipole", "strength": 0.05, "cutoff": 3.0}, 2))
table = sweep(spec)
for value, ev in zip(table.values, table.spectra):
    print(f"phase {value:5.3f}: band [{ev.min():.4f}, {ev.max():.4f}]")
print("endpoint spectra agree to", f"{np.max(np.abs(table.spectra[0] - table.spectra[-1])):.1e}")
