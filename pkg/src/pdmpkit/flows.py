"""Evaluation of the deterministic flows between jumps."""

import numpy as np

from .errors import FlowDomainError

MAX_STEP = 0.01
MIN_STEPS = 16


def rk4(field, i, t, y, max_step=MAX_STEP, min_steps=MIN_STEPS):
    """Integrate ``dy/dt = field(i, y)`` over times ``t`` with classical RK4.

    All rows share one step count ``n`` chosen so that every row's step
    ``t_k / n`` is at most ``min(max_step, t_k / min_steps)``.  A fixed
    grid keeps repeated evaluations bit-identical.
    """
    y = np.array(y, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), y.shape[:1]).copy()
    if y.shape[0] == 0:
        return y
    tmax = float(t.max())
    if tmax <= 0.0:
        return y
    n = max(min_steps, int(np.ceil(tmax / max_step)))
    h = (t / n)[:, None]
    for _ in range(n):
        k1 = field(i, y)
        k2 = field(i, y + 0.5 * h * k1)
        k3 = field(i, y + 0.5 * h * k2)
        k4 = field(i, y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def flow(spec, i, t, y, tol=1e-9):
    """Evaluate ``S_i(t, y)``.

    ``i`` may be a scalar regime or an integer array aligned with the rows
    of ``y``; ``t`` is a scalar or one time per row.  A single state
    ``y`` of shape ``(d,)`` returns shape ``(d,)``.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    ys = np.atleast_2d(y)
    n = ys.shape[0]
    ts = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    if np.any(ts < 0):
        raise ValueError("flow time must be nonnegative")
    regimes = np.broadcast_to(np.asarray(i, dtype=int), (n,))
    out = np.empty_like(ys)
    for r in np.unique(regimes):
        mask = regimes == r
        if spec.flow_map is not None:
            out[mask] = spec.flow_map(int(r), ts[mask], ys[mask])
        else:
            out[mask] = rk4(spec.vector_field, int(r), ts[mask], ys[mask])
    if spec.state_set is not None:
        ok = spec.state_set(out, tol)
        if not np.all(ok):
            bad = int(np.argmin(ok))
            raise FlowDomainError(
                f"flow of regime {int(regimes[bad])} left the state set at "
                f"t={ts[bad]:.6g}: {out[bad]}"
            )
    return out[0] if single else out
