"""Central finite-difference gradient oracle.

Independent numeric check for the reverse-mode engine: perturb one tensor
component at a time and evaluate the loss twice. Intended for float64
graphs; float32 rounding makes central differences unreliable.
"""

import numpy as np


def finite_difference(loss_fn, arrays, h=1e-5, components=None, rng=None):
    """Numeric gradient of loss_fn w.r.t. each array in `arrays`.

    loss_fn() must re-evaluate the loss from the *current* contents of the
    arrays (they are perturbed in place and restored). With `components`
    set, only that many randomly chosen components per array are estimated
    and the rest are returned as NaN, which keeps large checks affordable.
    Returns a list of arrays shaped like the inputs.
    """
    grads = []
    for arr in arrays:
        flat = arr.reshape(-1)
        if components is None or components >= flat.size:
            picks = np.arange(flat.size)
        else:
            picks = rng.choice_without_replacement(np.arange(flat.size), components)
        g = np.full(flat.size, np.nan)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(loss_fn())
            flat[i] = orig - h
            fm = float(loss_fn())
            flat[i] = orig
            g[i] = (fp - fm) / (2.0 * h)
        grads.append(g.reshape(arr.shape))
    return grads


def gradient_close(analytic, numeric, rel_tol=1e-6, abs_tol=1e-8, big=1e-8):
    """Compare per component: relative where |numeric| > big, absolute below.

    NaN entries in `numeric` (components not estimated) are skipped.
    Returns (ok, worst_error).
    """
    a = np.asarray(analytic).reshape(-1)
    n = np.asarray(numeric).reshape(-1)
    mask = ~np.isnan(n)
    a, n = a[mask], n[mask]
    worst = 0.0
    ok = True
    for ai, ni in zip(a, n):
        if abs(ni) > big:
            err = abs(ai - ni) / abs(ni)
            if err > rel_tol:
                ok = False
        else:
            err = abs(ai - ni)
            if err > abs_tol:
                ok = False
        worst = max(worst, err)
    return ok, worst
