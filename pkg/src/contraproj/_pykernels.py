"""Pure numpy implementation of the hot kernels.

Every element of l_p^m(l_q^n) is handled as a flat array of length m*n laid
out row-major by block.  Plain l_p^m is the special case n == 1.
"""

import numpy as np

BACKEND = "python"


def block_norm(x, m, n, p, q):
    """Mixed norm (sum_k sigma(x(k))^p)^(1/p) with sigma the l_q^n norm."""
    z = np.abs(np.asarray(x, dtype=float)).reshape(m, n)
    sig = _inner_norms(z, q)
    top = sig.max()
    if top == 0.0:
        return 0.0
    return float(top * np.sum((sig / top) ** p) ** (1.0 / p))


def _inner_norms(z, q):
    top = z.max(axis=1)
    safe = np.where(top > 0.0, top, 1.0)
    return np.where(top > 0.0, safe * np.sum((z / safe[:, None]) ** q, axis=1) ** (1.0 / q), 0.0)


def block_gradient(x, m, n, p, q):
    """Gradient of the mixed norm at x != 0, i.e. its norming functional."""
    x = np.asarray(x, dtype=float).reshape(m, n)
    z = np.abs(x)
    sig = _inner_norms(z, q)
    top = sig.max()
    if top == 0.0:
        raise ZeroDivisionError("gradient of the norm is undefined at 0")
    total = top * np.sum((sig / top) ** p) ** (1.0 / p)
    safe = np.where(sig > 0.0, sig, 1.0)
    outer = np.where(sig > 0.0, (sig / total) ** (p - 1.0), 0.0)
    inner = (z / safe[:, None]) ** (q - 1.0) * np.sign(x)
    return (outer[:, None] * inner).ravel()


def _dual(r):
    return r / (r - 1.0)


def ascend(P, x0, m, n, p, q, maxiter=2000, tol=1e-12, patience=50):
    """Local maximization of ||P x|| on the unit sphere of l_p(l_q).

    Each iteration tries the nonlinear power step x <- J*(P^T J(P x)),
    which never decreases the objective, and falls back to a renormalized
    gradient step with step halving when the power step stalls.
    Returns (value, x, iterations).
    """
    P = np.asarray(P, dtype=float)
    pd, qd = _dual(p), _dual(q)
    x = np.array(x0, dtype=float)
    nx = block_norm(x, m, n, p, q)
    if nx == 0.0:
        return 0.0, x, 0
    x /= nx
    val = block_norm(P @ x, m, n, p, q)
    stall = 0
    it = 0
    for it in range(1, maxiter + 1):
        y = P @ x
        if val == 0.0:
            break
        g = P.T @ block_gradient(y, m, n, p, q)
        best_x, best_val = x, val
        if np.any(g != 0.0):
            cand = block_gradient(g, m, n, pd, qd)
            cand /= block_norm(cand, m, n, p, q)
            cval = block_norm(P @ cand, m, n, p, q)
            if cval > best_val:
                best_x, best_val = cand, cval
        if best_val <= val:
            direction = g - val * block_gradient(x, m, n, p, q)
            t = 1.0
            while t > 1e-12:
                cand = x + t * direction
                cn = block_norm(cand, m, n, p, q)
                if cn > 0.0:
                    cand /= cn
                    cval = block_norm(P @ cand, m, n, p, q)
                    if cval > best_val:
                        best_x, best_val = cand, cval
                        break
                t *= 0.5
            if best_val <= val:
                # fixed point: later iterations would repeat this one
                break
        gain = (best_val - val) / val
        x, val = best_x, best_val
        if gain < tol:
            stall += 1
            if stall >= patience:
                break
        else:
            stall = 0
    return float(val), x, it
