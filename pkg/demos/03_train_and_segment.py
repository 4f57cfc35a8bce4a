"""Overfit a small model on a handful of clips, then segment them online.

Takes about half a minute on one CPU core.

Run:  python3 demos/03_train_and_segment.py
"""

import numpy as np

from refvos.data import SyntheticSpec, generate_clip
from refvos.losses import LossConfig
from refvos.metrics import aggregate, evaluate_sequence
from refvos.model import Model, ModelConfig
from refvos.optim import AdamW
from refvos.tracking import sample_training_frames, segment_clip, train_step

cfg = ModelConfig(patch_size=8, blocks=2, token_width=32, channels=32,
                  adapter_width=4, hidden=32, text_width=32)
model = Model(cfg, seed=2)
clips = [generate_clip(SyntheticSpec(seed=100 + k, max_objects=2))
         for k in range(4)]

# encoder and text table stay frozen; the lightweight modules train
opt = AdamW(model.trainable_params(),
            {"cmm": 2e-3, "hda": 2e-3, "decoder": 2e-3,
             "adapter": 2e-4, "itm": 2e-3})
loss_cfg = LossConfig()
rng = np.random.default_rng(2)
for step in range(1, 301):
    clip, expr, masks = clips[int(rng.integers(0, 4))]
    frames, gts = sample_training_frames(clip.frames, masks, 3, rng)
    report = train_step([(frames, expr, gts)], model, opt, loss_cfg)
    if step % 50 == 0:
        print(f"step={step} total={report['total']:.4f}")

scores = []
for clip, expr, gts in clips:
    preds = segment_clip(model, clip, expr)   # frame-by-frame, track token carried
    scores.append(evaluate_sequence(preds, gts))
agg = aggregate(scores)
print(f"J={agg.J:.4f} F={agg.F:.4f} J&F={agg.JF:.4f}")
