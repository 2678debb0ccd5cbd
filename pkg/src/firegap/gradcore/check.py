"""Central finite-difference gradient verification."""

import numpy as np

from firegap.gradcore.tensor import GradError, Tensor, backward, no_grad


def _scalar(out):
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise GradError("grad_check: f must return a scalar Tensor")
    return float(out.data.reshape(-1)[0])


def _pick(size, n_coords, rng):
    if n_coords is None or n_coords >= size:
        return np.arange(size)
    rng = np.random.default_rng(0) if rng is None else rng
    return np.sort(rng.choice(size, size=n_coords, replace=False))


def _rel(a, n, floor):
    return abs(a - n) / max(floor, abs(a), abs(n))


def grad_check(f, x, h=1e-4, n_coords=None, rng=None, floor=1.0):
    """Max over coordinates of |analytic - numeric| / max(floor, |analytic|, |numeric|).

    ``f`` maps a Tensor to a scalar Tensor and must be deterministic. With the
    default ``floor=1`` tiny gradients are compared absolutely; pass a small
    floor (e.g. 1e-8) for a strictly relative comparison.
    """
    if not 1e-6 <= h <= 1e-3:
        raise GradError(f"grad_check: step h={h} outside [1e-6, 1e-3]")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    with no_grad():
        f0 = _scalar(f(Tensor(base.copy())))
        f1 = _scalar(f(Tensor(base.copy())))
    if f0 != f1:
        raise GradError("grad_check: f is not deterministic (two evaluations differ)")
    xt = Tensor(base.copy(), requires_grad=True)
    backward(f(xt), params=[xt])
    analytic = xt.grad.reshape(-1)
    worst = 0.0
    flat = base.reshape(-1)
    for i in _pick(flat.size, n_coords, rng):
        old = flat[i]
        flat[i] = old + h
        with no_grad():
            fp = _scalar(f(Tensor(base.copy())))
        flat[i] = old - h
        with no_grad():
            fm = _scalar(f(Tensor(base.copy())))
        flat[i] = old
        num = (fp - fm) / (2.0 * h)
        worst = max(worst, _rel(analytic[i], num, floor))
    return worst


def grad_check_params(loss_fn, params, h=1e-4, n_coords=8, rng=None, floor=1.0):
    """Finite-difference check of d loss / d param for a list of Parameters.

    ``loss_fn()`` rebuilds the loss from the current parameter values. Up to
    ``n_coords`` coordinates per parameter are probed. Returns the worst
    relative error and the name/index where it occurred.
    """
    if not 1e-6 <= h <= 1e-3:
        raise GradError(f"grad_check: step h={h} outside [1e-6, 1e-3]")
    rng = np.random.default_rng(0) if rng is None else rng
    named = params.items() if isinstance(params, dict) else enumerate(params)
    named = list(named)
    with no_grad():
        if _scalar(loss_fn()) != _scalar(loss_fn()):
            raise GradError("grad_check: loss is not deterministic (two evaluations differ)")
    for _, p in named:
        p.grad = None
    backward(loss_fn(), params=[p for _, p in named])
    worst, where = 0.0, None
    for name, p in named:
        analytic = p.grad.reshape(-1).copy()
        flat = p.data.reshape(-1)
        for i in _pick(flat.size, n_coords, rng):
            old = flat[i]
            flat[i] = old + h
            with no_grad():
                fp = _scalar(loss_fn())
            flat[i] = old - h
            with no_grad():
                fm = _scalar(loss_fn())
            flat[i] = old
            err = _rel(analytic[i], (fp - fm) / (2.0 * h), floor)
            if err > worst:
                worst, where = err, (name, int(i))
    return worst, where
