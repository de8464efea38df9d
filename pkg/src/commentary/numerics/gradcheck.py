"""Central finite-difference verification of reverse-mode gradients."""

import numpy as np

from ..splitmix import SplitMix64
from .tensor import backward, no_grad


class NondeterministicLoss(RuntimeError):
    pass


def _scalars(out):
    if isinstance(out, dict):
        return {k: float(v.data) for k, v in out.items()}
    return {"loss": float(out.data)}


def _sample_coords(size, n, rng):
    if size <= n:
        return list(range(size))
    return sorted(rng.permutation(size)[:n])


def gradient_errors(loss_fn, store, eps=1e-5, coords_per_param=32, seed=0, names=None):
    """Relative errors between analytic and finite-difference gradients.

    ``loss_fn()`` builds the loss from the current parameter values and returns
    a scalar tensor or a dict of named scalar tensors; every objective is checked
    from the same perturbed evaluations.  Returns ``{objective: {param: error}}``
    with error = max |a - n| / max(1, |a|, |n|) over the sampled coordinates.
    """
    names = store.names() if names is None else list(names)
    base = loss_fn()
    objectives = base if isinstance(base, dict) else {"loss": base}
    with no_grad():
        again = _scalars(loss_fn())
    if again != _scalars(objectives):
        raise NondeterministicLoss("loss function returned different values for identical parameters")

    analytic = {}
    for key in objectives:
        store.zero_grad()
        backward(objectives[key])
        analytic[key] = {n: store.grad(n).copy() for n in names}
    store.zero_grad()

    rng = SplitMix64(seed)
    errors = {key: {} for key in objectives}
    for name in names:
        p = store[name]
        flat = p.data.reshape(-1)
        for idx in _sample_coords(flat.size, coords_per_param, rng):
            orig = flat[idx]
            with no_grad():
                flat[idx] = orig + eps
                plus = _scalars(loss_fn())
                flat[idx] = orig - eps
                minus = _scalars(loss_fn())
            flat[idx] = orig
            for key in objectives:
                num = (plus[key] - minus[key]) / (2 * eps)
                ana = analytic[key][name].reshape(-1)[idx]
                err = abs(ana - num) / max(1.0, abs(ana), abs(num))
                errors[key][name] = max(errors[key].get(name, 0.0), err)
    return errors


def grad_check(loss_fn, store, eps=1e-5, coords_per_param=32, seed=0):
    """Maximum relative gradient error over all parameters and objectives."""
    errors = gradient_errors(loss_fn, store, eps, coords_per_param, seed)
    return max((e for per in errors.values() for e in per.values()), default=0.0)
