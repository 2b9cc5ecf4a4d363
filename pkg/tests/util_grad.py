"""Finite-difference helpers shared by gradient tests."""

import numpy as np


def fd_param_grads(module, loss_fn, h=1e-6, sample=None, rng=None):
    """Central finite differences of loss_fn() w.r.t. every module parameter.

    loss_fn must rerun the forward pass from scratch using the module's
    current (mutated) parameters. Returns {name: grad or (indices, grads)}.
    With `sample`, only that many entries per parameter are probed.
    """
    out = {}
    for name, param in module.named_parameters():
        flat = param.reshape(-1)
        if sample is None or flat.size <= sample:
            indices = np.arange(flat.size)
        else:
            indices = rng.choice(flat.size, size=sample, replace=False)
        grads = np.zeros(indices.shape[0], dtype=np.float64)
        for pos, i in enumerate(indices):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            grads[pos] = (up - down) / (2.0 * h)
        out[name] = (indices, grads)
    return out


def assert_grads_close(analytic, fd, rtol=1e-4, atol=1e-7):
    """analytic: {name: full grad array}; fd: output of fd_param_grads."""
    worst = (0.0, "")
    for name, (indices, fd_vals) in fd.items():
        an = analytic[name].reshape(-1)[indices]
        diff = np.abs(an - fd_vals)
        bound = atol + rtol * np.maximum(np.abs(an), np.abs(fd_vals))
        if np.any(diff > bound):
            i = int(np.argmax(diff - bound))
            raise AssertionError(
                f"gradient mismatch at {name}[{indices[i]}]: "
                f"analytic {an[i]:.10g} vs fd {fd_vals[i]:.10g}"
            )
        rel = float(np.max(diff / np.maximum(np.abs(fd_vals), 1.0)))
        if rel > worst[0]:
            worst = (rel, name)
    return worst
