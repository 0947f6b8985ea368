"""Equality-constrained quadratic steps and constrained Schur marginalization.

Quadratic models use the convention ``e(d) = e0 + 2 b.d + d.H.d`` so that
``b = J^T W r`` and ``H = J^T W J`` for an energy ``r^T W r``.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from ..errors import IndefiniteSystem, RankDeficientConstraints

RANK_RTOL = 1e-10


def _as_damping(damping, n):
    d = np.asarray(damping, dtype=float)
    return np.full(n, float(d)) if d.ndim == 0 else d.reshape(n)


def _check_rank(A):
    if A.shape[0] == 0:
        return
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= RANK_RTOL * max(s[0], 1e-300) or A.shape[0] > A.shape[1]:
        raise RankDeficientConstraints(f"constraint Jacobian rank deficient (sigma_min={s[-1]:.3e})")


def solve_constrained_step(H, b, A, c, damping=0.0):
    """Solve ``[[H + D, A^T], [A, 0]] [dx; nu] = [-b; -c]``.

    ``damping`` is a scalar (``D = mu I``) or the diagonal of ``D``.
    Returns ``(dx, nu)``.
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    n = len(b)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    c = np.asarray(c, dtype=float).reshape(-1)
    m = len(c)
    K = H + np.diag(_as_damping(damping, n))
    d = np.diag(K).copy()
    scale = 1.0 / np.sqrt(np.where(d > 0.0, d, 1.0))
    Ks = K * scale[:, None] * scale[None, :]
    As = A * scale[None, :]
    bs = b * scale

    def factor_solve():
        chol = scipy.linalg.cho_factor(Ks, lower=True, check_finite=False)
        if m == 0:
            def solve(rx, rc):
                return scipy.linalg.cho_solve(chol, rx, check_finite=False), np.zeros(0)
            return solve
        KiAt = scipy.linalg.cho_solve(chol, As.T, check_finite=False)
        S = As @ KiAt
        try:
            schol = scipy.linalg.cho_factor(S, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            _check_rank(A)
            raise IndefiniteSystem("constraint Schur complement not positive definite")

        def solve(rx, rc):
            y = scipy.linalg.cho_solve(chol, rx, check_finite=False)
            nu = scipy.linalg.cho_solve(schol, As @ y - rc, check_finite=False)
            return y - KiAt @ nu, nu
        return solve

    try:
        solve = factor_solve()
    except np.linalg.LinAlgError:
        _check_rank(A)
        kkt = np.block([[Ks, As.T], [As, np.zeros((m, m))]])
        with warnings.catch_warnings():
            # singularity is detected from the pivots below
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(kkt, check_finite=False)
        if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * np.max(np.abs(np.diag(lu[0]))):
            raise IndefiniteSystem("KKT matrix singular; increase damping")

        def solve(rx, rc):
            sol = scipy.linalg.lu_solve(lu, np.concatenate([rx, rc]), check_finite=False)
            return sol[:n], sol[n:]

    rx, rc = -bs, -c
    xs, nu = solve(rx, rc)
    # one round of iterative refinement on the full system
    ex = rx - Ks @ xs - As.T @ nu
    ec = rc - As @ xs
    dxs, dnu = solve(ex, ec)
    xs = xs + dxs
    nu = nu + dnu
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(nu))):
        raise IndefiniteSystem("non-finite step")
    return xs * scale, nu


def marginalize(H, b, e0, A, c, drop):
    """Eliminate variables ``drop`` from a quadratic subject to ``A d + c = 0``.

    Every constraint row must involve the dropped variables; the constraints
    are solved for the dropped block and the remaining free directions are
    Schur-complemented out. Returns ``(H_p, b_p, e_p)`` over the kept
    variables (ascending index order), such that for every kept offset ``k``
    ``e_p + 2 b_p.k + k.H_p.k`` is the constrained minimum over the dropped
    block.
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(b)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    c = np.asarray(c, dtype=float).reshape(-1)
    drop = np.asarray(sorted(set(int(i) for i in drop)), dtype=int)
    keep = np.setdiff1d(np.arange(n), drop)
    nd, nk = len(drop), len(keep)
    order = np.concatenate([drop, keep])
    H = H[np.ix_(order, order)]
    b = b[order]
    A = A[:, order]

    Ad, Ak = A[:, :nd], A[:, nd:]
    if len(c):
        U, s, Vt = np.linalg.svd(Ad, full_matrices=True)
        rank = int(np.sum(s > RANK_RTOL * max(s[0] if len(s) else 0.0, 1e-300)))
        if rank < len(c):
            raise RankDeficientConstraints("constraints not solvable for the dropped block")
        P = Vt[:rank].T @ ((U[:, :rank].T) / s[:rank, None])
        Z = Vt[rank:].T
    else:
        P = np.zeros((nd, 0))
        Z = np.eye(nd)
    nz = Z.shape[1]
    T = np.zeros((n, nz + nk))
    T[:nd, :nz] = Z
    T[:nd, nz:] = -P @ Ak
    T[nd:, nz:] = np.eye(nk)
    t0 = np.zeros(n)
    t0[:nd] = -P @ c
    Ht = T.T @ H @ T
    bt = T.T @ (b + H @ t0)
    et = float(e0 + 2.0 * b @ t0 + t0 @ H @ t0)

    Hzz, Hzk, Hkk = Ht[:nz, :nz], Ht[:nz, nz:], Ht[nz:, nz:]
    bz, bk = bt[:nz], bt[nz:]
    if nz:
        Hzz_inv = scipy.linalg.pinvh(0.5 * (Hzz + Hzz.T), rtol=1e-12)
        Hp = Hkk - Hzk.T @ Hzz_inv @ Hzk
        bp = bk - Hzk.T @ Hzz_inv @ bz
        ep = et - float(bz @ Hzz_inv @ bz)
    else:
        Hp, bp, ep = Hkk, bk, et
    return 0.5 * (Hp + Hp.T), bp, ep
