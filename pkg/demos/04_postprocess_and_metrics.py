"""Prediction clean-up and evaluation metrics.

Corrupts a two-ribbon ground truth with salt noise, repairs it with the
dilate / connected-components / keep-largest chain, and scores the result
with Dice, Hausdorff distance, volume and surface area.

Run:  python demos/04_postprocess_and_metrics.py
"""

import numpy as np

from sulcikit import (
    connected_components,
    dice,
    evaluate_pair,
    hausdorff,
    postprocess_cs,
    voxel_surface_area,
    voxel_volume,
)
from sulcikit.volume import BinaryMask, VoxelGrid

rng = np.random.default_rng(7)
shape = (40, 40, 32)
grid = VoxelGrid.from_spacing(shape)

truth = np.zeros(shape, dtype=bool)
truth[8:12, 8:30, 6:26] = True  # left ribbon
truth[28:32, 8:30, 6:26] = True  # right ribbon
gt = BinaryMask(grid, truth)

noisy = truth.copy()
for _ in range(25):  # salt noise far from the ribbons
    x, y, z = rng.integers(0, shape[0]), rng.integers(0, shape[1]), rng.integers(0, shape[2])
    if not truth[max(x - 3, 0):x + 4, max(y - 3, 0):y + 4, max(z - 3, 0):z + 4].any():
        noisy[x, y, z] = True
pred = BinaryMask(grid, noisy)

print(f"ground truth: {gt.count} voxels in "
      f"{connected_components(gt).count} components")
print(f"noisy prediction: {pred.count} voxels in "
      f"{connected_components(pred).count} components")
print(f"  dice {dice(pred, gt):.4f}   hausdorff {hausdorff(pred, gt):.2f} mm")

cleaned = postprocess_cs(pred)
print(f"\nafter post-processing: {cleaned.count} voxels in "
      f"{connected_components(cleaned).count} components")
print(f"  dice {dice(cleaned, gt):.4f}   hausdorff {hausdorff(cleaned, gt):.2f} mm")

report = evaluate_pair(cleaned, gt, identifier="demo")
print(f"\nfull report: dsc {report.dsc:.4f}, hd {report.hd_mm:.2f} mm")
print(f"  volumes  pred {report.pred_volume_mm3:.0f} mm^3 / gt {report.gt_volume_mm3:.0f} mm^3")
print(f"  surfaces pred {report.pred_surface_mm2:.0f} mm^2 / gt {report.gt_surface_mm2:.0f} mm^2")
print(f"  (direct check: volume {voxel_volume(cleaned):.0f}, "
      f"surface {voxel_surface_area(cleaned):.0f})")
