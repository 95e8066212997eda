"""Central finite-difference check of backprop gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import losses
from .nn import TRAIN, Network, make_rng, softmax_t


def loss_function(loss_kind, target, *, teacher=None, alpha=0.5, kd: losses.KdConfig | None = None):
    """Map a loss name to ``logits -> (loss, dlogits)``.

    ``teacher`` is a probability batch for ``"skd"`` and a logit batch for ``"kd"``.
    """
    if callable(loss_kind):
        return loss_kind
    if loss_kind == "ce":
        return lambda z: losses.cross_entropy(softmax_t(z), target)
    if loss_kind == "skd":
        return lambda z: losses.skd_loss(softmax_t(z), teacher, target, alpha)
    if loss_kind == "kd":
        cfg = kd or losses.KdConfig()
        return lambda z: losses.kd_loss(z, teacher, target, cfg)
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def gradcheck(
    net: Network,
    x,
    target,
    loss_kind: str | Callable = "ce",
    *,
    mode: str = TRAIN,
    seed: int = 0,
    h: float = 1e-5,
    **loss_kwargs,
) -> float:
    """Max over parameters of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).

    The network is copied, so running statistics of the caller's net are untouched.
    Every forward re-seeds the rng, so dropout masks stay fixed across perturbations.
    """
    net = net.copy()
    fn = loss_function(loss_kind, target, **loss_kwargs)

    def run():
        _, cache = net.forward(x, mode, make_rng(seed), track_running=False)
        return cache, fn(cache.logits)

    cache, (_, dlogits) = run()
    net.backward(cache, dlogits)
    worst = 0.0
    for p, g in net.parameters():
        analytic = g.copy()
        flat = p.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = run()[1][0]
            flat[i] = orig - h
            down = run()[1][0]
            flat[i] = orig
            numeric[i] = (up - down) / (2 * h)
        a = analytic.reshape(-1)
        err = np.abs(a - numeric) / np.maximum(1e-8, np.abs(a) + np.abs(numeric))
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
