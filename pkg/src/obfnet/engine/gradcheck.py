"""Finite-difference gradient checking.

Runs a double-precision copy of the network, compares every analytic
weight gradient (and the input gradient) against central differences,
and reports the worst scaled relative error per layer.  Dropout masks
are pinned by reseeding the rng identically before every forward pass,
so the function being differentiated is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import cross_entropy

DEFAULT_STEP = 1e-4

# Near-zero gradients would amplify finite-difference noise into huge
# relative errors, so the denominator is floored.
ERROR_FLOOR = 1e-2


@dataclass
class LayerCheck:
    index: int
    kind: str
    param_errors: dict = field(default_factory=dict)

    @property
    def max_error(self):
        return max(self.param_errors.values(), default=0.0)


@dataclass
class GradCheckReport:
    layers: list
    input_error: float

    @property
    def max_error(self):
        worst = self.input_error
        for layer in self.layers:
            worst = max(worst, layer.max_error)
        return worst

    def __str__(self):
        lines = []
        for layer in self.layers:
            errs = " ".join(f"{k}={v:.3e}" for k, v in layer.param_errors.items())
            lines.append(f"layer {layer.index} {layer.kind}: {errs or '(no weights)'}")
        lines.append(f"input: {self.input_error:.3e}")
        lines.append(f"max relative error: {self.max_error:.3e}")
        return "\n".join(lines)


def _rel_error(analytic, numeric):
    denom = max(abs(analytic), abs(numeric), ERROR_FLOOR)
    return abs(analytic - numeric) / denom


def gradient_check(net, batch, labels, step=DEFAULT_STEP, mask_seed=12345):
    """Compare analytic gradients with central differences (double precision).

    Report-only: never raises on a mismatch.  Frozen layers are included,
    since their gradients still propagate.
    """
    net64 = net.astype(np.float64)
    batch = np.asarray(batch, dtype=np.float64)
    labels = np.asarray(labels)

    def forward_loss():
        probs = net64.forward(batch, training=True, rng=np.random.default_rng(mask_seed))
        return cross_entropy(probs, labels)

    loss, dprobs = forward_loss()
    d_input = net64.backward(dprobs)
    analytic = [{k: g.copy() for k, g in layer.grads.items()} for layer in net64.layers]

    def loss_only():
        return forward_loss()[0]

    checks = []
    for idx, layer in enumerate(net64.layers):
        check = LayerCheck(index=idx, kind=layer.kind)
        for name, w in layer.params.items():
            worst = 0.0
            flat = w.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                plus = loss_only()
                flat[i] = orig - step
                minus = loss_only()
                flat[i] = orig
                numeric = (plus - minus) / (2.0 * step)
                worst = max(worst, _rel_error(analytic[idx][name].ravel()[i], numeric))
            check.param_errors[name] = worst
        checks.append(check)

    input_worst = 0.0
    flat = batch.ravel()
    d_flat = d_input.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        plus = loss_only()
        flat[i] = orig - step
        minus = loss_only()
        flat[i] = orig
        numeric = (plus - minus) / (2.0 * step)
        input_worst = max(input_worst, _rel_error(d_flat[i], numeric))

    net64.clear_caches()
    return GradCheckReport(layers=checks, input_error=input_worst)
