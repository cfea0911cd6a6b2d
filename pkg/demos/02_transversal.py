"""Phason space: a crystal looks the same from every resonator, a quasi-rotation chain never does."""
import numpy as np

from patternlab import Isometry, QuasiRotation, Wallpaper, Window, generate
from patternlab.transversal import WindowMetricParams, circle_embedding_check, estimate_transversal

params = WindowMetricParams(3.0)

crystal = generate(Wallpaper("p2", ((2.0, 0.0), (0.6, 2.2)), Isometry.planar([0.5, 0.5], 0.3)), Window(9.0))
est = estimate_transversal(crystal, params)
print(f"p2: {len(est.aligned)} aligned copies -> {est.cluster_count} transversal point")

theta = 2 * np.pi / np.sqrt(11)
chain = generate(QuasiRotation(Isometry.planar([1.0, 0.0], theta)), Window(60.5))
est = estimate_transversal(chain, params)
print(f"quasi-rotation: {len(est.aligned)} aligned copies -> {est.cluster_count} transversal points")

report = circle_embedding_check(chain, params, estimate=est)
print("window distance tracks the circle angle n*theta mod 2pi:", report.to_json())
