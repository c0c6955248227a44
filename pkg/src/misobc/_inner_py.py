"""Pure numpy implementation of the inner precoder subproblem.

For fixed MMSE equalizers and weights every decode link ``l`` has a concave
quadratic surrogate rate (in nats)

    r_l(P) = c_l - sum_{m in S_l} p_m^H A_l p_m + 2 Re(b_l^H p_{s_l}),

where ``S_l`` holds the link's own stream and the streams it sees as noise.
Two objectives are supported:

* mode 0: maximize the sum over blocks of the minimum over the links of a
  block (links of a block are contiguous, ``block_ptr`` marks boundaries);
* mode 1: rate-splitting max-min, maximize ``t`` subject to
  ``t <= r_k + C_k``, ``C_k >= 0`` and ``sum_k C_k <= r_{c,j}`` for every
  common link ``j`` (private links have ``kind`` 0, common links 1).

Both are solved in epigraph form with a primal log-barrier method: damped
Newton centering steps and a geometric increase of the barrier weight.
With ``m`` inequality constraints the duality gap after centering is
``m / tau``, which is reported as the residual.  When every block is a
single link the problem has a closed-form solution (``best_response``): a
regularized solve per stream with one shared power multiplier.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError

__all__ = ["best_response", "surrogate_rates", "surrogate_objective", "inner_solve"]

_EIG_RTOL = 1e-13
# centering stops once half the squared Newton decrement is below this
_DEC_TOL = 1e-8


# --------------------------------------------------------------------------
# closed form for singleton blocks


def _solve_mu(lam, z2, pmax):
    """Smallest ``mu >= 0`` with ``sum z2 / (lam + mu)^2 <= pmax``."""
    total = z2.sum()
    if total == 0.0:
        return 0.0
    scale = max(lam.max(initial=0.0), 1e-300)
    null = lam <= _EIG_RTOL * scale
    znull = z2[null].sum()
    if znull <= 1e-30 * total:
        pos = ~null
        f0 = np.sum(z2[pos] / lam[pos] ** 2) if pos.any() else 0.0
        if f0 <= pmax:
            return 0.0
    lo = max(0.0, np.sqrt(total / pmax) - lam.max(), np.sqrt(znull / pmax))
    hi = np.sqrt(total / pmax)
    target = 1.0 / np.sqrt(pmax)
    mu = lo if lo > 0 else 0.5 * hi
    for _ in range(200):
        d = lam + mu
        f = np.sum(z2 / d ** 2)
        if abs(f - pmax) <= 1e-14 * pmax:
            break
        if f > pmax:
            lo = mu
        else:
            hi = mu
        fp = -2.0 * np.sum(z2 / d ** 3)
        # Newton on 1/sqrt(f), which is concave and increasing in mu
        phi = 1.0 / np.sqrt(f) - target
        step = mu - phi / (-0.5 * fp / f ** 1.5)
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if hi - lo <= 4e-16 * hi:
            mu = hi
            break
        mu = step
    return mu


def best_response(w, A, b, link_stream, smask, pmax, num_streams):
    """Maximizer of ``sum_l w_l r_l(P)`` subject to ``sum ||p_m||^2 <= pmax``."""
    M = A.shape[1]
    Q = np.einsum("l,lm,lij->mij", w, smask, A)
    bb = np.zeros((num_streams, M), dtype=complex)
    np.add.at(bb, link_stream, w[:, None] * b)
    lam, V = np.linalg.eigh(Q)
    lam = np.maximum(lam, 0.0)
    z = np.einsum("mji,mj->mi", V.conj(), bb)
    z2 = z.real ** 2 + z.imag ** 2
    mu = _solve_mu(lam.ravel(), z2.ravel(), pmax)
    d = lam + mu
    scale = max(lam.max(initial=0.0), 1e-300)
    coef = np.where(d > _EIG_RTOL * scale, z / np.where(d > 0, d, 1.0), 0.0)
    X = np.einsum("mij,mj->mi", V, coef)
    power = np.sum(np.abs(X) ** 2)
    if power > pmax:
        X *= np.sqrt(pmax / power)
    return X, mu


# --------------------------------------------------------------------------
# objective helpers


def surrogate_rates(X, A, b, c, link_stream, smask):
    quad = np.einsum("mi,lij,mj->lm", X.conj(), A, X).real
    lin = np.einsum("li,li->l", b.conj(), X[link_stream]).real
    return c - np.sum(quad * smask, axis=1) + 2.0 * lin


def water_level(r, rc):
    """Largest ``t`` with ``sum (t - r)^+ <= rc``; ``-inf`` when ``rc < 0``."""
    if rc < 0:
        return -np.inf
    s = np.sort(r)
    csum = np.cumsum(s)
    K = s.size
    for n in range(1, K + 1):
        level = (rc + csum[n - 1]) / n
        if n == K or level <= s[n]:
            return level
    return level


def surrogate_objective(r, mode, block_ptr, kind):
    if mode == 0:
        return float(sum(r[block_ptr[i]:block_ptr[i + 1]].min() for i in range(len(block_ptr) - 1)))
    return float(water_level(r[kind == 0], r[kind == 1].min()))


# --------------------------------------------------------------------------
# barrier method (real coordinates: stream m occupies x[m] = [Re p_m, Im p_m])


def real_data(A, b):
    """Real ``(L, 2M, 2M)`` forms of the Hermitian ``A`` and ``(L, 2M)`` of ``b``."""
    Ar, Ai = A.real, A.imag
    top = np.concatenate([Ar, -Ai], axis=-1)
    bot = np.concatenate([Ai, Ar], axis=-1)
    Ahat = np.ascontiguousarray(np.concatenate([top, bot], axis=-2))
    bhat = np.ascontiguousarray(np.concatenate([b.real, b.imag], axis=-1))
    return Ahat, bhat


def epigraph_data(L, mode, block_ptr, kind):
    """Linear parts of the epigraph constraints.

    Returns ``(Acoef, lin, d)``: rate constraint ``l`` reads
    ``r_l(x) + Acoef[l] @ z > 0``, the extra constraints ``lin @ z > 0`` and
    the objective is ``d @ z``.
    """
    if mode == 0:
        nb = len(block_ptr) - 1
        Acoef = np.zeros((L, nb))
        for i in range(nb):
            Acoef[block_ptr[i]:block_ptr[i + 1], i] = -1.0
        return Acoef, np.zeros((0, nb)), np.ones(nb)
    priv = np.flatnonzero(kind == 0)
    K = priv.size
    Acoef = np.zeros((L, 1 + K))
    for i, l in enumerate(priv):
        Acoef[l, 0] = -1.0
        Acoef[l, 1 + i] = 1.0
    Acoef[kind == 1, 1:] = -1.0
    d = np.zeros(1 + K)
    d[0] = 1.0
    return Acoef, np.hstack([np.zeros((K, 1)), np.eye(K)]), d


def _rates_real(x, Ahat, bhat, c, ls, smask):
    AX = np.einsum("lij,mj->lmi", Ahat, x)
    quad = np.einsum("mi,lmi->lm", x, AX)
    lin = np.einsum("li,li->l", bhat, x[ls])
    return c - np.sum(quad * smask, axis=1) + 2.0 * lin, AX


def _slacks(x, z, Ahat, bhat, c, ls, smask, Acoef, lin):
    """All constraint slacks (rate, extra linear, power) as one vector."""
    r, _ = _rates_real(x, Ahat, bhat, c, ls, smask)
    return np.concatenate([r + Acoef @ z, lin @ z, [1.0 - float(np.sum(x * x))]])


def _newton(x, z, tau, Ahat, bhat, c, ls, smask, Acoef, lin, d):
    L, S = smask.shape
    M2 = x.shape[1]
    n = S * M2
    r, AX = _rates_real(x, Ahat, bhat, c, ls, smask)
    inv = 1.0 / (r + Acoef @ z)
    G = -2.0 * smask[:, :, None] * AX
    G[np.arange(L), ls] += 2.0 * bhat
    Gs = G.reshape(L, n) * inv[:, None]
    Zs = Acoef * inv[:, None]
    J = np.hstack([Gs, Zs])
    H = J.T @ J
    if lin.shape[0]:
        Ls = lin / (lin @ z)[:, None]
        H[n:, n:] += Ls.T @ Ls
    blocks = np.einsum("lm,lij->mij", (2.0 * inv)[:, None] * smask, Ahat)
    for m in range(S):
        sl = slice(M2 * m, M2 * (m + 1))
        H[sl, sl] += blocks[m]
    xr = x.reshape(n)
    s_pow = 1.0 - float(xr @ xr)
    H[:n, :n] += (4.0 / s_pow ** 2) * np.outer(xr, xr)
    H[np.arange(n), np.arange(n)] += 2.0 / s_pow
    grad = -J.sum(axis=0)
    grad[:n] += (2.0 / s_pow) * xr
    grad[n:] -= tau * d
    if lin.shape[0]:
        grad[n:] -= Ls.sum(axis=0)
    try:
        step = -np.linalg.solve(H, grad)
    except np.linalg.LinAlgError:
        step = -np.linalg.lstsq(H, grad, rcond=None)[0]
    return step[:n].reshape(S, M2), step[n:], float(-grad @ step)


def barrier_core(Ahat, bhat, c, ls, smask, Acoef, lin, d, x, z, tau, tol, max_iter, mult=20.0):
    """Log-barrier path following from a strictly feasible ``(x, z)``.

    Centering uses Newton steps with backtracking on the barrier value.  Stops when the gap
    bound ``m / tau`` drops below ``tol * (1 + |d @ z|)`` or after
    ``max_iter`` Newton steps.  Returns ``(x, z, tau, newton_steps)``.
    """
    x = np.array(x, dtype=float)
    z = np.array(z, dtype=float)
    m = smask.shape[0] + lin.shape[0] + 1
    used = 0
    while True:
        while used < max_iter:
            dx, dz, dec = _newton(x, z, tau, Ahat, bhat, c, ls, smask, Acoef, lin, d)
            used += 1
            if dec <= _DEC_TOL:
                break
            lam = np.sqrt(max(dec, 0.0))
            # backtracking on the barrier decrease, written with slack ratios so
            # that large tau does not drown the change in rounding error
            s0 = _slacks(x, z, Ahat, bhat, c, ls, smask, Acoef, lin)
            dzd = float(d @ dz)
            alpha = 1.0
            while alpha >= 1e-12:
                s1 = _slacks(x + alpha * dx, z + alpha * dz, Ahat, bhat, c, ls, smask, Acoef, lin)
                if np.all(s1 > 0):
                    change = -tau * alpha * dzd - float(np.sum(np.log(s1 / s0)))
                    if change <= -0.25 * alpha * dec:
                        break
                alpha *= 0.5
            if alpha < 1e-12:
                break
            x = x + alpha * dx
            z = z + alpha * dz
            if alpha < 1e-3 and lam < 1e-2:
                break  # progress limited by rounding
        if m / tau <= tol * (1.0 + abs(float(d @ z))) or used >= max_iter:
            break
        tau *= mult
    return x, z, tau, used


def stationarity_residual(X, mu, A, b, link_stream, smask):
    """Relative norm of the Lagrangian gradient for the unit-weight sum surrogate."""
    G = -np.einsum("ls,lij,sj->si", smask, A, X)
    np.add.at(G, link_stream, b)
    R = G - mu * X
    return float(np.linalg.norm(R) / max(1.0, np.linalg.norm(G)))


def inner_solve(A, b, c, link_stream, smask, pmax, mode, block_ptr=None, kind=None,
                w0=None, x0=None, tol=1e-7, max_iter=400, core=None, method="auto"):
    """Solve the surrogate subproblem and return a dict with the precoders.

    ``x0`` must be feasible; the returned point is never worse than ``x0``
    in surrogate objective.  ``w0`` is accepted for interface symmetry with
    other solvers and ignored.  ``max_iter`` caps the total number of
    Newton steps; ``core`` selects the path-following implementation.
    ``method`` is ``"auto"`` (closed form when every block is one link,
    barrier otherwise), ``"closed-form"`` or ``"barrier"``.
    """
    if method not in ("auto", "closed-form", "barrier"):
        raise UsageError(f"unknown inner method {method!r}")
    if core is None:
        core = barrier_core
    A = np.asarray(A, dtype=complex)
    b = np.asarray(b, dtype=complex)
    c = np.asarray(c, dtype=float)
    link_stream = np.asarray(link_stream, dtype=np.intp)
    smask = np.asarray(smask, dtype=float)
    L, S = smask.shape
    M = A.shape[1]
    if mode == 0:
        block_ptr = np.asarray(block_ptr, dtype=np.intp)
        kind = np.zeros(L, dtype=np.intp)
    else:
        kind = np.asarray(kind, dtype=np.intp)
        block_ptr = np.array([0, L], dtype=np.intp)
    x0 = np.zeros((S, M), dtype=complex) if x0 is None else np.asarray(x0, dtype=complex)
    r0 = surrogate_rates(x0, A, b, c, link_stream, smask)
    obj0 = surrogate_objective(r0, mode, block_ptr, kind)

    singletons = mode == 0 and len(block_ptr) - 1 == L
    if method == "closed-form" and not singletons:
        raise UsageError("the closed-form update needs one link per block (MU-LP sum rate)")
    if singletons and method != "barrier":
        X, mu = best_response(np.ones(L), A, b, link_stream, smask, pmax, S)
        obj = surrogate_objective(surrogate_rates(X, A, b, c, link_stream, smask), mode, block_ptr, kind)
        if obj < obj0:
            X, obj = x0.copy(), obj0
        res = stationarity_residual(X, mu, A, b, link_stream, smask)
        return {"x": X, "primal": obj, "gap": res, "rel_gap": res, "iterations": 1, "mu": mu,
                "w": None, "start": obj0}

    scale = np.sqrt(pmax)
    As, bs = A * pmax, b * scale
    # strictly feasible start: shrink the previous point inside the ball
    Xs = x0 / scale
    nrm = float(np.sum(np.abs(Xs) ** 2))
    if nrm > 0.98:
        Xs = Xs * np.sqrt(0.98 / nrm)
    r = surrogate_rates(Xs, As, bs, c, link_stream, smask)
    if mode == 1 and r[kind == 1].min() <= 1e-9:
        # no usable common rate: plain max-min over the private links
        priv = np.flatnonzero(kind == 0)
        out = inner_solve(A[priv], b[priv], c[priv], link_stream[priv], smask[priv], pmax, 0,
                          block_ptr=np.array([0, priv.size]), x0=x0, tol=tol, max_iter=max_iter,
                          core=core)
        Xo = out["x"]
        obj = surrogate_objective(surrogate_rates(Xo, A, b, c, link_stream, smask), mode, block_ptr, kind)
        if obj < obj0:
            Xo, obj = x0.copy(), obj0
        out.update(x=Xo, primal=obj, start=obj0)
        return out
    Acoef, lin, d = epigraph_data(L, mode, block_ptr, kind)
    if mode == 0:
        z = np.array([r[block_ptr[i]:block_ptr[i + 1]].min() - 1.0 for i in range(len(block_ptr) - 1)])
    else:
        rc = r[kind == 1].min()
        K = Acoef.shape[1] - 1
        C = np.full(K, rc / (2.0 * K))
        t = float(np.min(r[kind == 0] + C)) - 1.0
        z = np.concatenate([[t], C])
    m = L + lin.shape[0] + 1
    tau = m / max(1.0, abs(obj0))
    Ahat, bhat = real_data(As, bs)
    xr = np.ascontiguousarray(np.concatenate([Xs.real, Xs.imag], axis=1))
    xr, z, tau, used = core(Ahat, bhat, c, link_stream, smask, Acoef, lin, d, xr, z, tau, tol, max_iter)
    xr = np.asarray(xr)
    gap_abs = m / tau
    s_pow = 1.0 - float(np.sum(xr * xr))
    # central-path multiplier of the power constraint, in unscaled units
    mu = 1.0 / (tau * s_pow * pmax)
    X = (xr[:, :M] + 1j * xr[:, M:]) * scale
    obj = surrogate_objective(surrogate_rates(X, A, b, c, link_stream, smask), mode, block_ptr, kind)
    if obj < obj0:
        X, obj = x0.copy(), obj0
    return {"x": X, "primal": obj, "gap": gap_abs, "rel_gap": gap_abs / (1.0 + abs(obj)),
            "iterations": used, "mu": mu, "w": None, "start": obj0}
