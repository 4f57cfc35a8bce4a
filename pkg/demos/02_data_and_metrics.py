"""Generate a synthetic clip, write it to disk, and score masks with J & F.

Run:  python3 demos/02_data_and_metrics.py
"""

import tempfile

import numpy as np

from refvos.data import SyntheticSpec, generate_clip, read_clip, write_clip
from refvos.metrics import contour_accuracy_F, evaluate_sequence, region_similarity_J

spec = SyntheticSpec(seed=7, frames=5, max_objects=3)
clip, expr, masks = generate_clip(spec)
print("expression:", " ".join(expr.words))
print("frames:", len(clip.frames), "mask area:", int(masks[0].sum()), "px")

# The on-disk layout is frames/%05d.ppm + masks/%05d.pgm + expression.txt.
with tempfile.TemporaryDirectory() as root:
    write_clip(root, clip, expr, masks)
    clip2, expr2, masks2 = read_clip(root)
    assert all(np.array_equal(a, b) for a, b in zip(masks, masks2))
    print("round trip through PPM/PGM is exact")

# J is intersection over union; F scores boundary agreement within a
# tolerance of 0.8% of the image diagonal.
noisy = [np.roll(m, 1, axis=1) for m in masks]
print("perfect:", evaluate_sequence(masks, masks))
print("1px shift: J=%.3f F=%.3f" % (region_similarity_J(noisy[0], masks[0]),
                                    contour_accuracy_F(noisy[0], masks[0])))
