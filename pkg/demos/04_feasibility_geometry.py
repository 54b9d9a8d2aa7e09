"""Feasibility geometry for binary linear classifiers.

Each pixel's achievable captures form a parallelepiped (the image of a
brightness box under the pixel's affine color map).  The exact LP oracle
computes the best achievable margin movement inside the perturbation
budget and predicts attack success before running any attack.  The demo
verifies the prediction and shows why glossy (near-singular) scenes are
intrinsically harder than matte ones.
"""

import numpy as np

from opad import attack, classifiers, geometry, imagecore, optics

rng = np.random.default_rng(4)

# --- one pixel's achievable set -------------------------------------------
scene = optics.synth_scene(optics.SceneSpec(8, 8, "matte", seed=64))
poly = geometry.pixel_polytope(scene, (3, 3), (0.1, 0.9))
print("achievable-capture vertices at pixel (3,3):")
for vertex in poly.vertices:
    print(f"   ({vertex[0]:.3f}, {vertex[1]:.3f}, {vertex[2]:.3f})")

# --- oracle predicts the attack outcome ------------------------------------
base = imagecore.uniform(8, 8, 0.5)
clean = optics.capture(scene, base)
hits = 0
for trial in range(20):
    clf = classifiers.LinearClassifier(rng.uniform(-1, 1, (8, 8, 3)))
    current, _ = classifiers.predict(clf, clean)
    spec = classifiers.LossSpec("targeted", -current)
    alpha = float(np.exp(rng.uniform(np.log(0.002), np.log(0.08))))
    cert = geometry.feasibility(clf, scene, base, spec, alpha, "linf")
    predicted = cert.feasible
    result = attack.compensated_attack(
        scene, scene, clf, base, spec,
        attack.AttackConfig.defaults("linf", alpha=alpha, step_size=alpha,
                                     block=1))
    hits += predicted == result.success
print(f"\noracle verdict matched the attack outcome in {hits}/20 trials")

# --- matte vs glossy hardness ----------------------------------------------
matte = optics.synth_scene(optics.SceneSpec(16, 16, "matte", seed=9))
glossy = optics.synth_scene(optics.SceneSpec(16, 16, "glossy", seed=9))
base16 = imagecore.uniform(16, 16, 0.5)
gains_m, gains_g = [], []
for _ in range(30):
    weights = rng.uniform(-1, 1, (16, 16, 3))
    gains_m.append(geometry.max_margin_gain_linf(
        matte, matte.forward(base16), weights, -1, 0.1).max_margin_gain)
    gains_g.append(geometry.max_margin_gain_linf(
        glossy, glossy.forward(base16), weights, -1, 0.1).max_margin_gain)
print(f"median achievable margin gain: matte {np.median(gains_m):.2f}, "
      f"glossy {np.median(gains_g):.2f}")
print("the near-singular mixing of the glossy scene collapses its "
      "achievable set,\nso the same budget buys far less margin movement.")

report = geometry.conditioning_report(glossy, base16)
print(f"glossy conditioning: {np.median(report.condition):.0f} median, "
      f"{(report.condition >= 100).mean():.0%} of pixels above 100")
