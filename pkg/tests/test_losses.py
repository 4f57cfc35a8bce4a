import numpy as np
import pytest

from refvos.autodiff import DimensionError, Tensor, grad_check
from refvos.losses import LossConfig, dice_loss, focal_loss


def cfg(**kw):
    return LossConfig(**kw)


def test_dice_perfect_overlap():
    t = np.zeros((4, 4))
    t[:2] = 1
    loss = dice_loss(Tensor(t.copy()), t, cfg(dice_smooth=1e-12))
    assert abs(float(loss.data)) < 1e-9


def test_dice_disjoint():
    pred = np.zeros((4, 4))
    pred[0, 0] = 1.0
    target = np.zeros((4, 4))
    target[3, 3] = 1
    loss = dice_loss(Tensor(pred), target, cfg(dice_smooth=1e-12))
    assert abs(float(loss.data) - 1.0) < 1e-9


def test_dice_half_overlap_oracle():
    # target everywhere 1 (A=16); pred = target on half the pixels, 0 elsewhere
    target = np.ones((4, 4))
    pred = np.zeros((4, 4))
    pred[:2] = 1.0
    loss = dice_loss(Tensor(pred), target, cfg(dice_smooth=1e-12))
    assert abs(float(loss.data) - 1.0 / 3.0) < 1e-9


def test_dice_rejects_bad_inputs():
    with pytest.raises(DimensionError):
        dice_loss(Tensor(np.zeros((2, 2))), np.zeros((3, 3)), cfg())
    with pytest.raises(ValueError):
        dice_loss(Tensor(np.full((2, 2), 1.5)), np.zeros((2, 2)), cfg())
    with pytest.raises(ValueError):
        dice_loss(Tensor(np.zeros((2, 2))), np.full((2, 2), 0.5), cfg())


def test_focal_reduces_to_half_bce():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(4, 4))
    target = (rng.random((4, 4)) > 0.5).astype(float)
    loss = focal_loss(Tensor(logits), target, cfg(focal_alpha=0.5, focal_gamma=0.0))
    p = 1.0 / (1.0 + np.exp(-logits))
    bce = -(target * np.log(p) + (1 - target) * np.log(1 - p)).mean()
    assert abs(float(loss.data) - 0.5 * bce) < 1e-9


def test_focal_saturated_correct():
    target = np.ones((3, 3))
    loss = focal_loss(Tensor(np.full((3, 3), 20.0)), target, cfg())
    assert float(loss.data) < 1e-6


def test_focal_scalar_hand_case():
    # single pixel, logit 0, target 1: 0.25 * 0.5^2 * ln 2
    loss = focal_loss(Tensor(np.zeros((1, 1))), np.ones((1, 1)),
                      cfg(focal_alpha=0.25, focal_gamma=2.0))
    assert abs(float(loss.data) - 0.25 * 0.25 * np.log(2.0)) < 1e-9


def test_losses_nonnegative():
    rng = np.random.default_rng(1)
    for _ in range(25):
        logits = rng.normal(size=(5, 5)) * 4
        target = (rng.random((5, 5)) > 0.5).astype(float)
        probs = 1.0 / (1.0 + np.exp(-logits))
        assert float(dice_loss(Tensor(probs), target, cfg()).data) >= 0
        assert float(focal_loss(Tensor(logits), target, cfg()).data) >= 0


def test_dice_grad_check_random_inputs():
    rng = np.random.default_rng(2)
    target = (rng.random((4, 4)) > 0.5).astype(float)
    c = cfg()
    for _ in range(10):
        x0 = rng.normal(size=16)

        def f(x):
            return dice_loss(x.reshape(4, 4).sigmoid(), target, c)

        assert grad_check(f, Tensor(x0)) < 1e-4


def test_focal_grad_check_random_inputs():
    rng = np.random.default_rng(3)
    target = (rng.random((4, 4)) > 0.5).astype(float)
    c = cfg()
    for _ in range(10):
        x0 = rng.normal(size=16)
        assert grad_check(lambda x: focal_loss(x.reshape(4, 4), target, c), Tensor(x0)) < 1e-4


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(focal_alpha=1.5)
    with pytest.raises(ValueError):
        LossConfig(dice_smooth=0.0)
    with pytest.raises(ValueError):
        LossConfig(w_dice=0.0, w_focal=0.0)
