"""Central finite-difference helpers shared by the gradient tests."""
import numpy as np

H = 1e-6


def numeric_grad(params, loss_fn, h=H):
    """Central differences of ``loss_fn(params)`` for every scalar parameter (in place, restored)."""
    out = []
    for a in params.arrays():
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            params.touch()
            up = loss_fn(params)
            flat[i] = old - h
            params.touch()
            down = loss_fn(params)
            flat[i] = old
            params.touch()
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def group_errors(analytic, numeric):
    """Relative error ``|a - f| / max(|a|, |f|)`` (2-norm) per parameter array.

    Arrays whose gradients are both essentially zero report 0.
    """
    errs = []
    for a, f in zip(analytic, numeric):
        scale = max(np.linalg.norm(a), np.linalg.norm(f))
        errs.append(0.0 if scale < 1e-10 else float(np.linalg.norm(a - f) / scale))
    return errs
