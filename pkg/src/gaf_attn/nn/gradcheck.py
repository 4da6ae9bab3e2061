"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

import numpy as np

from ..errors import CheckError


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(
    fragment,
    x: np.ndarray,
    h: float = 1e-3,
    max_per_param: int | None = None,
    check_input: bool = False,
    seed: int = 0,
    refine: int = 4,
    tol: float = 1e-7,
) -> float:
    """Largest relative error between analytic and numerical gradients.

    ``fragment`` needs ``forward(x)``, ``backward(grad)`` and ``parameters()``
    and must hold 64-bit parameters. The scalar objective is a fixed random
    projection of the fragment output. ``max_per_param`` samples that many
    coordinates from each parameter tensor instead of checking all of them.

    ReLU and max pooling are piecewise linear, so a probe of width ``h`` can
    straddle a kink. A coordinate that disagrees by more than ``tol`` is
    retried with up to ``refine`` steps, each ten times smaller, and keeps
    its best agreement. A wrong analytic gradient disagrees at every step.
    """
    steps = [h / 10**n for n in range(refine + 1)]
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    params = fragment.parameters()
    for p in params:
        if p.data.dtype != np.float64:
            raise CheckError(f"gradient check needs float64 parameters, got {p.data.dtype}")

    out = np.asarray(fragment.forward(x, train=False))
    again = np.asarray(fragment.forward(x, train=False))
    if not np.array_equal(out, again):
        raise CheckError("fragment is not deterministic; disable stochastic layers")
    proj = rng.standard_normal(out.shape)

    def objective(inp):
        return float(np.sum(np.asarray(fragment.forward(inp, train=False)) * proj))

    for p in params:
        p.zero_grad()
    fragment.forward(x, train=False)
    dx = fragment.backward(proj.copy())

    worst = 0.0
    targets = [(p.data, p.grad.copy()) for p in params]
    if check_input:
        targets.append((x, np.asarray(dx, dtype=np.float64)))
    for arr, analytic in targets:
        flat = arr.reshape(-1)
        if max_per_param is not None and flat.size > max_per_param:
            picks = rng.choice(flat.size, size=max_per_param, replace=False)
        else:
            picks = np.arange(flat.size)
        exact = analytic.reshape(-1)
        for i in picks:
            orig = flat[i]
            best = np.inf
            for step in steps:
                flat[i] = orig + step
                fp = objective(x)
                flat[i] = orig - step
                fm = objective(x)
                flat[i] = orig
                best = min(best, float(relative_error(exact[i], (fp - fm) / (2 * step))))
                if best <= tol:
                    break
            worst = max(worst, best)
    return worst
