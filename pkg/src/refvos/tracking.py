"""Track-token propagation and the online segmentation / training loops."""

import numpy as np

from .autodiff import Tensor, bilinear_resize, layer_norm, linear
from .encoder import _xavier
from .losses import dice_loss, focal_loss


def init_itm_params(c_v, rng, dtype=np.float64, hidden=None):
    hidden = hidden or c_v
    return {
        "itm.fc1.weight": Tensor(_xavier(rng, c_v, hidden, dtype=dtype), requires_grad=True),
        "itm.fc1.bias": Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True),
        # zero-init second FFN: the residual branch starts at zero
        "itm.fc2.weight": Tensor(np.zeros((hidden, c_v), dtype=dtype), requires_grad=True),
        "itm.fc2.bias": Tensor(np.zeros(c_v, dtype=dtype), requires_grad=True),
        "itm.ln.gamma": Tensor(np.ones(c_v, dtype=dtype), requires_grad=True),
        "itm.ln.beta": Tensor(np.zeros(c_v, dtype=dtype), requires_grad=True),
    }


def track_update(main_token_out, params):
    """LayerNorm(E_m + FFN2(ReLU(FFN1(E_m))))."""
    h = linear(main_token_out, params["itm.fc1.weight"], params["itm.fc1.bias"]).relu()
    r = linear(h, params["itm.fc2.weight"], params["itm.fc2.bias"])
    return layer_norm(main_token_out + r, params["itm.ln.gamma"], params["itm.ln.beta"])


def _frame_forward(model, frame, sparse, track):
    ff = model.encode_frame(frame)
    dense = model.dense_embeddings(ff, sparse)
    return model.decode(ff, sparse, dense, track)


def _next_track(model, out):
    if not model.cfg.use_itm:
        return None
    track = track_update(out.main_token_out, model.params)
    return track.detach() if model.cfg.detach_track else track


def segment_clip(model, clip, expr):
    """Segment every frame online; returns a list of H x W binary masks."""
    frames = clip.frames if hasattr(clip, "frames") else clip
    text = model.encode_text(expr)
    sparse = model.sparse_embeddings(text)
    track = None
    masks = []
    for frame in frames:
        _, h, w = frame.shape
        out = _frame_forward(model, frame, sparse, track)
        idx = int(np.argmax(out.iou_scores.data))
        logits = bilinear_resize(out.masks[idx].reshape(1, *out.masks[idx].shape), h, w)
        masks.append((logits.data[0] > 0).astype(np.uint8))
        track = _next_track(model, out)
    return masks


def _binary_iou(a, b):
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def clip_loss(model, frames, expr, gt_masks, loss_cfg):
    """Total training loss over an ordered frame sequence, with the track
    token propagated (and differentiated) across frames.

    Returns (loss Tensor, report dict, list of predicted binary masks)."""
    text = model.encode_text(expr)
    sparse = model.sparse_embeddings(text)
    track = None
    total = None
    report = {"dice": 0.0, "focal": 0.0, "iou": 0.0}
    preds = []
    for frame, gt in zip(frames, gt_masks):
        _, h, w = frame.shape
        out = _frame_forward(model, frame, sparse, track)
        logits = bilinear_resize(out.masks[0].reshape(1, *out.masks[0].shape), h, w)
        logits = logits.reshape(h, w)
        gt_arr = np.asarray(gt, dtype=float)
        d = dice_loss(logits.sigmoid(), gt_arr, loss_cfg)
        f = focal_loss(logits, gt_arr, loss_cfg)
        pred_bin = (logits.data > 0).astype(np.uint8)
        preds.append(pred_bin)
        target_iou = _binary_iou(pred_bin, gt_arr > 0)
        iou_term = (out.iou_scores[0] - target_iou) ** 2.0
        frame_loss = loss_cfg.w_dice * d + loss_cfg.w_focal * f + iou_term.sum()
        total = frame_loss if total is None else total + frame_loss
        report["dice"] += float(d.data)
        report["focal"] += float(f.data)
        report["iou"] += float(iou_term.data)
        track = _next_track(model, out)
    report["total"] = float(total.data)
    return total, report, preds


def train_step(batch, model, optimizer, loss_cfg):
    """One optimizer step over a batch of (frames, expression, gt_masks)
    samples; frames within a sample must already be in temporal order."""
    optimizer.zero_grad()
    total = None
    report = {"dice": 0.0, "focal": 0.0, "iou": 0.0, "total": 0.0}
    for frames, expr, gts in batch:
        if len(frames) != len(gts):
            raise ValueError("train_step: each frame needs a ground-truth mask")
        loss, rep, _ = clip_loss(model, frames, expr, gts, loss_cfg)
        total = loss if total is None else total + loss
        for k in report:
            report[k] += rep[k]
    total.backward()
    optimizer.step()
    return report


def sample_training_frames(frames, gt_masks, n, rng):
    """Pick n distinct frame indices at random and return them sorted into
    temporal order."""
    idx = sorted(rng.choice(len(frames), size=min(n, len(frames)), replace=False).tolist())
    return [frames[i] for i in idx], [gt_masks[i] for i in idx]
