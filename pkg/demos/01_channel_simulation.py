"""Simulate the projector-camera channel on synthetic scenes.

Builds one scene per material class, pushes a uniform illumination and a
striped test pattern through each, and saves previews.  Shows how the
per-pixel color mixing and the nonlinear response reshape what the
camera sees.
"""

import os

import numpy as np

from opad import imagecore, optics

OUT = os.path.join("demo_output", "channel_simulation")
os.makedirs(OUT, exist_ok=True)

base = imagecore.uniform(96, 96, 140 / 255)
ys, xs = np.mgrid[0:96, 0:96]
stripes = imagecore.uniform(96, 96, 0.35)
stripes[..., 0] += 0.3 * np.sin(2 * np.pi * xs / 24)
stripes[..., 2] += 0.3 * np.sin(2 * np.pi * ys / 16)
stripes = np.clip(stripes, 0, 1)

for material in optics.MATERIALS:
    spec = optics.SceneSpec(96, 96, material=material, smoothness=6.0, seed=21)
    scene = optics.synth_scene(spec)
    uniform_cap = optics.capture(scene, base)
    striped_cap = optics.capture(scene, stripes)
    imagecore.save_png(uniform_cap, os.path.join(OUT, f"{material}_uniform.png"))
    imagecore.save_png(striped_cap, os.path.join(OUT, f"{material}_striped.png"))

    sv = np.linalg.svd(scene.spectral.mixing, compute_uv=False)
    cond = sv[..., 0] / sv[..., 2]
    print(f"{material:>9}: capture range [{uniform_cap.min():.3f}, "
          f"{uniform_cap.max():.3f}], median mixing condition "
          f"{np.median(cond):8.1f}, saturated pixels "
          f"{(uniform_cap >= 250 / 255).mean():.1%}")

print(f"\npreviews saved under {OUT}/")
print("matte scenes keep the mixing well conditioned; glossy scenes are "
      "near-singular;\nsaturated scenes pin the capture against the sensor "
      "ceiling.")
