"""Full-batch training loop with probe-driven early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)  # (epoch, loss)
    probes: list = field(default_factory=list)  # (epoch, auc)
    stopped_epoch: int = 0
    stopped_early: bool = False

    def probe_at(self, epoch):
        return dict(self.probes).get(epoch)


def _snapshot(params):
    return {k: v.copy() for k, v in params.items()}


def fit_with_probe(params, step, opt, epochs, probe=None, probe_every=1, min_epochs=0):
    """Run ``epochs`` Adam steps of ``step(params, epoch) -> (loss, grads)``.

    Every ``probe_every`` epochs ``probe(params, epoch)`` returns an AUC.  Once
    past ``min_epochs``, the first probe lower than its predecessor stops
    training and the parameters from the predecessor's epoch are returned.
    """
    hist = TrainHistory()
    best = None  # (epoch, auc, params)
    for epoch in range(1, epochs + 1):
        loss, grads = step(params, epoch)
        if not np.isfinite(loss):
            raise FloatingPointError(f"training loss became non-finite at epoch {epoch}")
        hist.losses.append((epoch, float(loss)))
        opt.step(params, grads)
        if probe is None or epoch % probe_every:
            continue
        auc = float(probe(params, epoch))
        hist.probes.append((epoch, auc))
        if best is not None and auc < best[1] and epoch > min_epochs:
            hist.stopped_epoch = best[0]
            hist.stopped_early = True
            return best[2], hist
        best = (epoch, auc, _snapshot(params))
    hist.stopped_epoch = epochs
    return params, hist
