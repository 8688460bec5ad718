"""Pure-Python reference kernels for the sequential simulation loops.

These define the canonical arithmetic: explicit scalar accumulation, one
accumulator per matrix product, products summed left to right. The compiled
extension (_core.pyx) mirrors this order exactly and is built with
-ffp-contract=off, so both backends produce bit-identical trajectories.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def markov_path(cum_rows, r0, uniforms):
    """Inverse-CDF sampling of a Markov chain.

    cum_rows[i] is the cumulative sum of transition row i. Step k moves to the
    smallest j with uniforms[k] < cum_rows[r_k, j]; the last mode is the
    fallback against rounding in the final cumulative entry.
    """
    steps = uniforms.shape[0]
    n = cum_rows.shape[0]
    path = np.empty(steps + 1, dtype=np.int64)
    path[0] = r0
    cur = int(r0)
    for k in range(steps):
        u = uniforms[k]
        row = cum_rows[cur]
        nxt = n - 1
        for j in range(n):
            if u < row[j]:
                nxt = j
                break
        path[k + 1] = nxt
        cur = nxt
    return path


def linear_rollout(A, B, C_st, D_st, E_st, K_st, r_path, w, v, x, y, u, guard):
    """Closed-loop rollout under per-mode static gains.

    Fills x, y, u in place; x[0] must be preset. Returns the index of the
    first state with a component exceeding ``guard`` in magnitude (or a
    non-finite component), -1 if none. Arrays are valid through that index.
    """
    horizon = r_path.shape[0] - 1
    n1 = A.shape[0]
    n2 = B.shape[1]
    n3 = C_st.shape[1]
    nw = D_st.shape[2]
    diverged_at = -1
    for k in range(horizon + 1):
        i = r_path[k]
        for a in range(n3):
            acc1 = 0.0
            for c in range(n1):
                acc1 += C_st[i, a, c] * x[k, c]
            acc2 = 0.0
            for c in range(nw):
                acc2 += D_st[i, a, c] * w[k, c]
            acc3 = 0.0
            for c in range(n3):
                acc3 += E_st[i, a, c] * v[k, c]
            y[k, a] = (acc1 + acc2) + acc3
        for b in range(n2):
            acc = 0.0
            for a in range(n3):
                acc += K_st[i, b, a] * y[k, a]
            u[k, b] = acc
        if diverged_at >= 0:
            return diverged_at
        if k < horizon:
            for r in range(n1):
                acc1 = 0.0
                for c in range(n1):
                    acc1 += A[r, c] * x[k, c]
                acc2 = 0.0
                for c in range(n2):
                    acc2 += B[r, c] * u[k, c]
                x[k + 1, r] = acc1 + acc2
            for r in range(n1):
                val = x[k + 1, r]
                if not (val == val) or val > guard or val < -guard:
                    diverged_at = k + 1
                    break
    return diverged_at


def plant_step(A, B, xk, uk, out):
    """One open-loop step out = A xk + B uk with the canonical accumulation order."""
    n1 = A.shape[0]
    n2 = B.shape[1]
    for r in range(n1):
        acc1 = 0.0
        for c in range(n1):
            acc1 += A[r, c] * xk[c]
        acc2 = 0.0
        for c in range(n2):
            acc2 += B[r, c] * uk[c]
        out[r] = acc1 + acc2


def measure(C, D, E, xk, wk, vk, out):
    """One measurement out = C xk + D wk + E vk with the canonical order."""
    n3 = C.shape[0]
    n1 = C.shape[1]
    nw = D.shape[1]
    for a in range(n3):
        acc1 = 0.0
        for c in range(n1):
            acc1 += C[a, c] * xk[c]
        acc2 = 0.0
        for c in range(nw):
            acc2 += D[a, c] * wk[c]
        acc3 = 0.0
        for c in range(n3):
            acc3 += E[a, c] * vk[c]
        out[a] = (acc1 + acc2) + acc3
