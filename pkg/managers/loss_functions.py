# File: managers/loss_functions.py

import torch

from model.tracto_transformer import to_tensor
from utils.errors import InvalidArgumentError

PRED_FLOOR = 1e-12


def kl_loss(pred, target, valid_mask=None) -> torch.Tensor:
    """
    Mean over valid positions of sum_j target[j] * log(target[j] / pred[j]), with
    0 log 0 = 0 and predictions floored at 1e-12. Shapes (..., C); valid_mask (...).
    """
    pred = to_tensor(pred)
    target = to_tensor(target)
    if pred.shape != target.shape:
        raise InvalidArgumentError(f"prediction shape {tuple(pred.shape)} != target shape {tuple(target.shape)}")
    per_position = (torch.xlogy(target, target) - target * torch.log(pred.clamp_min(PRED_FLOOR))).sum(dim=-1)
    if valid_mask is None:
        return per_position.mean()
    valid = to_tensor(valid_mask, torch.bool)
    if valid.shape != per_position.shape:
        raise InvalidArgumentError(f"valid mask shape {tuple(valid.shape)} != {tuple(per_position.shape)}")
    count = valid.sum()
    if count == 0:
        raise InvalidArgumentError("kl_loss needs at least one valid position")
    return torch.where(valid, per_position, torch.zeros_like(per_position)).sum() / count


def classification_accuracy(pred, target, valid_mask=None) -> float:
    """Percentage of valid positions where argmax(pred) == argmax(target)."""
    pred = to_tensor(pred)
    target = to_tensor(target)
    hits = pred.argmax(dim=-1) == target.argmax(dim=-1)
    if valid_mask is not None:
        valid = to_tensor(valid_mask, torch.bool)
        hits = hits[valid]
    if hits.numel() == 0:
        return 0.0
    return 100.0 * float(hits.double().mean())
