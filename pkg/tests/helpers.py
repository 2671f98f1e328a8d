"""Shared oracles for the test suite: finite differences and small poses."""
import numpy as np

from liftgeo import geometry as geo
from liftgeo.nn import autograd as ag


def rel_error(a, b, floor=1e-12):
    """``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def _central(f, flat, i, h):
    old = flat[i]
    flat[i] = old + h
    fp = f()
    flat[i] = old - h
    fm = f()
    flat[i] = old
    return (fp - fm) / (2 * h)


def numeric_grad(f, array, h=1e-5, coords=None):
    """Central differences of the scalar ``f()`` wrt entries of ``array`` (mutated in place)."""
    flat = array.reshape(-1)
    out = np.zeros(flat.size)
    for i in range(flat.size) if coords is None else coords:
        out[i] = _central(f, flat, i, h)
    return out.reshape(array.shape)


def check_grads(loss_fn, params, rng=None, max_coords=None, h=1e-5, kinks=None):
    """Worst relative error between backprop and central differences over ``params``.

    ``loss_fn`` builds and returns a fresh scalar Tensor from the current
    parameter values. With ``max_coords`` only a random subset of entries of
    each parameter is perturbed.

    Passing a list as ``kinks`` excludes entries whose difference quotient has
    not converged and appends one item per exclusion. For a smooth function
    the estimates at ``h`` and ``h/2`` agree to O(h^2); a ReLU kink inside the
    step breaks that, and the quotient is then no reference for the
    derivative. Only entries that disagree with backprop are re-estimated.
    """
    for p in params:
        p.grad = None
    ag.backward(loss_fn())
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    # structurally zero gradients (a bias feeding a train-mode batch norm) would
    # otherwise compare finite-difference round-off against round-off
    floor = 1e-4 * max(np.linalg.norm(g) for g in analytic)
    f = lambda: float(loss_fn().data)
    worst = 0.0
    for p, g in zip(params, analytic):
        coords = np.arange(p.data.size)
        if max_coords is not None and p.data.size > max_coords:
            coords = (rng or np.random.default_rng(0)).choice(p.data.size, max_coords, replace=False)
        num = numeric_grad(f, p.data, h, coords).reshape(-1)
        g = g.reshape(-1)
        if kinks is not None:
            flat = p.data.reshape(-1)
            keep = []
            for i in coords:
                off = abs(g[i] - num[i]) > 1e-7 * max(abs(num[i]), floor)
                if off and abs(_central(f, flat, i, h / 2) - num[i]) > 1e-7 * max(abs(num[i]), 1.0):
                    kinks.append(i)
                else:
                    keep.append(i)
            coords = np.array(keep, dtype=int)
        worst = max(worst, rel_error(g[coords], num[coords], floor))
    return worst


def random_pose2d(rng, n=None):
    """Normalized random 2D poses (not necessarily anatomical)."""
    shape = (N_JOINTS, 2) if n is None else (n, N_JOINTS, 2)
    raw = rng.normal(size=shape)
    return geo.normalize_pose2d(raw)[0]


N_JOINTS = geo.N_JOINTS


# criterion id -> one summary line, filled by the acceptance tests
ACCEPTANCE = {}


def report(criterion, passed, detail):
    line = f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed
