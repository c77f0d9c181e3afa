"""Hot inner loops, each in two flavours.

``*_loops`` functions are written as explicit loops and compiled with numba;
``*_np`` functions are vectorized numpy. The public names at the bottom of
the module are bound to one or the other according to ``_jit.USE_JIT``.
Both flavours are tested against each other.
"""

import numpy as np

from ._jit import USE_JIT, njit

# --------------------------------------------------------------------------
# sparsemax over rows


def _sparsemax_rows_np(Z):
    M, N = Z.shape
    # working relative to the row max makes z and z + c give identical
    # results whenever z + c is exact
    Z = Z - np.max(Z, axis=1)[:, None]
    U = np.sort(Z, axis=1)[:, ::-1]
    css = np.cumsum(U, axis=1)
    k = np.arange(1, N + 1)
    cond = 1.0 + k * U > css
    rho = N - np.argmax(cond[:, ::-1], axis=1)
    tau = (css[np.arange(M), rho - 1] - 1.0) / rho
    return np.maximum(Z - tau[:, None], 0.0)


@njit(cache=True)
def _sparsemax_1d(z, out):
    N = z.shape[0]
    z = z - np.max(z)
    u = np.sort(z)[::-1]
    css = 0.0
    rho = 1
    tau_sum = u[0]
    for k in range(N):
        css += u[k]
        if 1.0 + (k + 1) * u[k] > css:
            rho = k + 1
            tau_sum = css
    tau = (tau_sum - 1.0) / rho
    for j in range(N):
        v = z[j] - tau
        out[j] = v if v > 0.0 else 0.0


@njit(cache=True)
def _sparsemax_rows_loops(Z):
    M, N = Z.shape
    P = np.empty_like(Z)
    for i in range(M):
        _sparsemax_1d(Z[i], P[i])
    return P


# --------------------------------------------------------------------------
# simplex-constrained least squares per column (the code solve)
#
# For each column x: minimize 0.5 ||D g - x||^2 over g on the simplex by
# projected gradient, w = g - a * D^T (D g - x), g <- sparsemax(w), with a
# per-column step that doubles on entry and halves until the
# sufficient-decrease test passes. A column stops when its relative
# objective decrease falls to ``tol`` or no step is accepted.


def _code_solve_np(D, X, W0, base, max_steps, tol, max_bt):
    N, b = W0.shape
    W = W0.copy()
    G = _sparsemax_rows_np(W.T).T
    R = D @ G - X
    obj = 0.5 * np.sum(R * R, axis=0)
    step = np.full(b, base)
    live = np.ones(b, dtype=bool)
    iters = np.zeros(b, dtype=np.int64)
    for _ in range(max_steps):
        cols = np.flatnonzero(live)
        if cols.size == 0:
            break
        grad = D.T @ R[:, cols]
        ts = 2.0 * step[cols]
        pending = np.ones(cols.size, dtype=bool)
        for _bt in range(max_bt + 1):
            k = np.flatnonzero(pending)
            if k.size == 0:
                break
            c = cols[k]
            Wt = G[:, c] - ts[k] * grad[:, k]
            Gt = _sparsemax_rows_np(Wt.T).T
            Rt = D @ Gt - X[:, c]
            ot = 0.5 * np.sum(Rt * Rt, axis=0)
            delta = Gt - G[:, c]
            bound = obj[c] + np.sum(grad[:, k] * delta, axis=0) + np.sum(delta * delta, axis=0) / (2.0 * ts[k])
            ok = (ot <= bound + 1e-15 * np.maximum(obj[c], 1.0)) & (ot <= obj[c])
            a = c[ok]
            dec = obj[a] - ot[ok]
            stop = dec <= tol * np.maximum(obj[a], 1e-300)
            W[:, a] = Wt[:, ok]
            G[:, a] = Gt[:, ok]
            R[:, a] = Rt[:, ok]
            obj[a] = ot[ok]
            step[a] = np.maximum(ts[k][ok], base)
            iters[a] += 1
            live[a[stop]] = False
            pending[k[ok]] = False
            ts[k[~ok]] *= 0.5
        live[cols[pending]] = False
    return W, G, iters


@njit(cache=True)
def _code_solve_loops(D, X, W0, base, max_steps, tol, max_bt):
    d, N = D.shape
    b = X.shape[1]
    W = W0.copy()
    G = np.empty((N, b))
    iters = np.zeros(b, dtype=np.int64)
    g = np.empty(N)
    gt = np.empty(N)
    wt = np.empty(N)
    grad = np.empty(N)
    r = np.empty(d)
    rt = np.empty(d)
    for col in range(b):
        _sparsemax_1d(W0[:, col], g)
        obj = 0.0
        for a in range(d):
            s = -X[a, col]
            for i in range(N):
                s += D[a, i] * g[i]
            r[a] = s
            obj += s * s
        obj *= 0.5
        step = base
        for _ in range(max_steps):
            for i in range(N):
                s = 0.0
                for a in range(d):
                    s += D[a, i] * r[a]
                grad[i] = s
            ts = 2.0 * step
            accepted = False
            ot = obj
            for _bt in range(max_bt + 1):
                for i in range(N):
                    wt[i] = g[i] - ts * grad[i]
                _sparsemax_1d(wt, gt)
                ot = 0.0
                for a in range(d):
                    s = -X[a, col]
                    for i in range(N):
                        s += D[a, i] * gt[i]
                    rt[a] = s
                    ot += s * s
                ot *= 0.5
                lin = 0.0
                sq = 0.0
                for i in range(N):
                    dl = gt[i] - g[i]
                    lin += grad[i] * dl
                    sq += dl * dl
                bound = obj + lin + sq / (2.0 * ts)
                if ot <= bound + 1e-15 * max(obj, 1.0) and ot <= obj:
                    accepted = True
                    break
                ts *= 0.5
            if not accepted:
                break
            dec = obj - ot
            for i in range(N):
                W[i, col] = wt[i]
                g[i] = gt[i]
            for a in range(d):
                r[a] = rt[a]
            prev = obj
            obj = ot
            step = max(ts, base)
            iters[col] += 1
            if dec <= tol * max(prev, 1e-300):
                break
        for i in range(N):
            G[i, col] = g[i]
    return W, G, iters


# --------------------------------------------------------------------------
# quaternion -> rotation matrix and its derivative


@njit(cache=True)
def _quat_to_mat(q, R):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def _mat_grad_to_quat(q, G, out):
    # out[c] = sum(G * dR/dq_c)
    w, x, y, z = q[0], q[1], q[2], q[3]
    out[0] = 2 * (-z * G[0, 1] + y * G[0, 2] + z * G[1, 0] - x * G[1, 2] - y * G[2, 0] + x * G[2, 1])
    out[1] = 2 * (
        y * G[0, 1] + z * G[0, 2] + y * G[1, 0] - 2 * x * G[1, 1] - w * G[1, 2]
        + z * G[2, 0] + w * G[2, 1] - 2 * x * G[2, 2]
    )
    out[2] = 2 * (
        -2 * y * G[0, 0] + x * G[0, 1] + w * G[0, 2] + x * G[1, 0] + z * G[1, 2]
        - w * G[2, 0] + z * G[2, 1] - 2 * y * G[2, 2]
    )
    out[3] = 2 * (
        -2 * z * G[0, 0] - w * G[0, 1] + x * G[0, 2] + w * G[1, 0] - 2 * z * G[1, 1]
        + y * G[1, 2] + x * G[2, 0] + y * G[2, 1]
    )


def _quat_to_mat_np(Q):
    w, x, y, z = Q[..., 0], Q[..., 1], Q[..., 2], Q[..., 3]
    R = np.empty(Q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def _mat_grad_to_quat_np(Q, G):
    w, x, y, z = Q[..., 0], Q[..., 1], Q[..., 2], Q[..., 3]
    g = lambda i, j: G[..., i, j]  # noqa: E731
    return 2 * np.stack(
        [
            -z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1),
            y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2)
            + z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2),
            -2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2)
            - w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2),
            -2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1)
            + y * g(1, 2) + x * g(2, 0) + y * g(2, 1),
        ],
        axis=-1,
    )


# --------------------------------------------------------------------------
# forward kinematics


def _fk_np(parents, offsets, quats, root_rot):
    K = parents.shape[0]
    local = _quat_to_mat_np(quats)
    world = np.empty((K, 3, 3))
    pos = np.empty((K, 3))
    world[0] = root_rot
    pos[0] = root_rot @ offsets[0]
    for j in range(1, K):
        p = parents[j]
        pos[j] = pos[p] + world[p] @ offsets[j]
        world[j] = world[p] @ local[j - 1]
    return pos, world


@njit(cache=True)
def _fk_loops(parents, offsets, quats, root_rot):
    K = parents.shape[0]
    world = np.empty((K, 3, 3))
    pos = np.empty((K, 3))
    R = np.empty((3, 3))
    for a in range(3):
        pos[0, a] = root_rot[a, 0] * offsets[0, 0] + root_rot[a, 1] * offsets[0, 1] + root_rot[a, 2] * offsets[0, 2]
        for b in range(3):
            world[0, a, b] = root_rot[a, b]
    for j in range(1, K):
        p = parents[j]
        _quat_to_mat(quats[j - 1], R)
        for a in range(3):
            acc = pos[p, a]
            for b in range(3):
                acc += world[p, a, b] * offsets[j, b]
            pos[j, a] = acc
            for b in range(3):
                s = 0.0
                for c in range(3):
                    s += world[p, a, c] * R[c, b]
                world[j, a, b] = s
    return pos, world


# --------------------------------------------------------------------------
# full pose objective: codes -> sparsemax -> nlerp -> FK -> camera -> loss


def _gram_schmidt_np(r6):
    a1 = r6[:3]
    a2 = r6[3:]
    n1 = np.sqrt(a1 @ a1)
    c1 = a1 / n1
    v = a2 - (c1 @ a2) * c1
    nv = np.sqrt(v @ v)
    c2 = v / nv
    c3 = np.cross(c1, c2)
    return c1, c2, c3, n1, nv


def _solve_st_np(Y, obs, vis):
    """Weighted least-squares ``s, t`` with ``s * Y + t ~ obs`` (visible rows)."""
    nvis = vis.sum()
    if nvis < 2.0:
        if nvis > 0.0:
            return 1.0, (vis @ (obs - Y)) / nvis
        return 1.0, np.zeros(2)
    ym = (vis @ Y) / nvis
    om = (vis @ obs) / nvis
    Yc = Y - ym
    den = np.sum(vis[:, None] * Yc * Yc)
    s = np.sum(vis[:, None] * Yc * (obs - om)) / den if den > 1e-300 else 1.0
    return s, om - s * ym


@njit(cache=True)
def _solve_st_loops(Y, obs, vis):
    K = Y.shape[0]
    nvis = 0.0
    ym = np.zeros(2)
    om = np.zeros(2)
    for k in range(K):
        nvis += vis[k]
        for a in range(2):
            ym[a] += vis[k] * Y[k, a]
            om[a] += vis[k] * obs[k, a]
    t = np.zeros(2)
    if nvis < 2.0:
        if nvis > 0.0:
            for a in range(2):
                t[a] = (om[a] - ym[a]) / nvis
        return 1.0, t
    for a in range(2):
        ym[a] /= nvis
        om[a] /= nvis
    num = 0.0
    den = 0.0
    for k in range(K):
        for a in range(2):
            yc = Y[k, a] - ym[a]
            den += vis[k] * yc * yc
            num += vis[k] * yc * (obs[k, a] - om[a])
    s = num / den if den > 1e-300 else 1.0
    for a in range(2):
        t[a] = om[a] - s * ym[a]
    return s, t


def _pose_loss_grad_np(parents, offsets, atoms, n_atoms, logits, scale, trans, r6,
                       obs2, vis2, obs3, vis3, lam2, lam3, want_grad, align=True, solve_st=False):
    J, Nmax = logits.shape
    K = parents.shape[0]
    mask = np.arange(Nmax)[None, :] < n_atoms[:, None]
    Z = np.where(mask, logits, -np.inf)
    gam = _sparsemax_rows_np(Z)

    dom = np.argmax(gam, axis=1)
    ref = atoms[np.arange(J), dom]
    sg = np.where(np.einsum("jnc,jc->jn", atoms, ref) < 0.0, -1.0, 1.0) if align else np.ones((J, Nmax))
    sg = np.where(mask, sg, 0.0)
    comb = np.einsum("jn,jnc->jc", gam * sg, atoms)
    cn = np.sqrt(np.sum(comb * comb, axis=1))
    quats = comb / cn[:, None]

    pos, world = _fk_np(parents, offsets, quats, np.eye(3))
    c1, c2, c3, n1, nv = _gram_schmidt_np(r6)
    Rc = np.stack([c1, c2, c3], axis=1)
    cam = pos @ Rc.T
    if solve_st:
        scale, trans = _solve_st_np(cam[:, :2], obs2, vis2)
    x2 = scale * cam[:, :2] + trans
    d2 = (x2 - obs2) * vis2[:, None]
    L2 = np.sum(d2 * d2)
    e3 = ((pos - pos[0]) - (obs3 - obs3[0])) * vis3[:, None]
    L3 = np.sum(e3 * e3)
    L = lam2 * L2 + lam3 * L3
    if not want_grad:
        return (L, L2, L3, gam, quats, pos, np.zeros((0, 0)), np.zeros((0, 0)), 0.0, np.zeros(0), np.zeros(0),
                scale, trans)

    gx2 = 2.0 * lam2 * d2
    g_trans = gx2.sum(axis=0)
    g_scale = np.sum(gx2 * cam[:, :2])
    gcam = np.zeros((K, 3))
    gcam[:, :2] = scale * gx2
    gRc = gcam.T @ pos
    gpos = gcam @ Rc
    ge3 = 2.0 * lam3 * e3
    gpos += ge3
    gpos[0] -= ge3.sum(axis=0)

    # Gram-Schmidt backward
    gc1, gc2, gc3 = gRc[:, 0], gRc[:, 1], gRc[:, 2]
    gc1 = gc1 + np.cross(c2, gc3)
    gc2 = gc2 + np.cross(gc3, c1)
    gv = (gc2 - c2 * (c2 @ gc2)) / nv
    a2 = r6[3:]
    ga2 = gv - c1 * (c1 @ gv)
    gc1 = gc1 - ((c1 @ a2) * gv + a2 * (c1 @ gv))
    ga1 = (gc1 - c1 * (c1 @ gc1)) / n1
    g_r6 = np.concatenate([ga1, ga2])

    # FK backward in reverse topological order
    local = _quat_to_mat_np(quats)
    gacc = gpos.copy()
    gworld = np.zeros((K, 3, 3))
    glocal = np.zeros((J, 3, 3))
    for j in range(K - 1, 0, -1):
        p = parents[j]
        glocal[j - 1] = world[p].T @ gworld[j]
        gworld[p] += gworld[j] @ local[j - 1].T + np.outer(gacc[j], offsets[j])
        gacc[p] += gacc[j]
    gq = _mat_grad_to_quat_np(quats, glocal)

    # nlerp backward: q = comb / |comb|
    gcomb = (gq - quats * np.sum(quats * gq, axis=1, keepdims=True)) / cn[:, None]
    g_gam = np.einsum("jnc,jc->jn", atoms, gcomb) * sg
    supp = gam > 0.0
    cnt = supp.sum(axis=1)
    mean_s = np.sum(np.where(supp, g_gam, 0.0), axis=1) / cnt
    g_logits = np.where(supp, g_gam - mean_s[:, None], 0.0)
    g_gam = np.where(mask, g_gam, 0.0)
    return L, L2, L3, gam, quats, pos, g_logits, g_gam, g_scale, g_trans, g_r6, scale, trans


@njit(cache=True)
def _pose_loss_grad_loops(parents, offsets, atoms, n_atoms, logits, scale, trans, r6,
                          obs2, vis2, obs3, vis3, lam2, lam3, want_grad, align=True, solve_st=False):
    J, Nmax = logits.shape
    K = parents.shape[0]
    gam = np.zeros((J, Nmax))
    sg = np.zeros((J, Nmax))
    quats = np.empty((J, 4))
    cn = np.empty(J)
    for j in range(J):
        n = n_atoms[j]
        gam[j, :n] = _sparsemax_rows_loops(logits[j:j + 1, :n])[0]
        dom = 0
        for i in range(1, n):
            if gam[j, i] > gam[j, dom]:
                dom = i
        comb = np.zeros(4)
        for i in range(n):
            d = 0.0
            for c in range(4):
                d += atoms[j, i, c] * atoms[j, dom, c]
            sg[j, i] = -1.0 if (align and d < 0.0) else 1.0
            if gam[j, i] > 0.0:
                for c in range(4):
                    comb[c] += gam[j, i] * sg[j, i] * atoms[j, i, c]
        nrm = np.sqrt(comb[0] ** 2 + comb[1] ** 2 + comb[2] ** 2 + comb[3] ** 2)
        cn[j] = nrm
        for c in range(4):
            quats[j, c] = comb[c] / nrm

    pos, world = _fk_loops(parents, offsets, quats, np.eye(3))

    a1 = r6[:3].copy()
    a2 = r6[3:].copy()
    n1 = np.sqrt(a1[0] ** 2 + a1[1] ** 2 + a1[2] ** 2)
    c1 = a1 / n1
    dot12 = c1[0] * a2[0] + c1[1] * a2[1] + c1[2] * a2[2]
    v = a2 - dot12 * c1
    nv = np.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    c2 = v / nv
    c3 = np.cross(c1, c2)
    Rc = np.empty((3, 3))
    for a in range(3):
        Rc[a, 0] = c1[a]
        Rc[a, 1] = c2[a]
        Rc[a, 2] = c3[a]

    L2 = 0.0
    L3 = 0.0
    cam = np.zeros((K, 3))
    d2 = np.zeros((K, 2))
    e3 = np.zeros((K, 3))
    for k in range(K):
        for a in range(3):
            cam[k, a] = Rc[a, 0] * pos[k, 0] + Rc[a, 1] * pos[k, 1] + Rc[a, 2] * pos[k, 2]
    trans = trans.copy()
    if solve_st:
        scale, trans = _solve_st_loops(cam[:, :2].copy(), obs2, vis2)
    for k in range(K):
        for a in range(2):
            d2[k, a] = (scale * cam[k, a] + trans[a] - obs2[k, a]) * vis2[k]
            L2 += d2[k, a] * d2[k, a]
        for a in range(3):
            e3[k, a] = ((pos[k, a] - pos[0, a]) - (obs3[k, a] - obs3[0, a])) * vis3[k]
            L3 += e3[k, a] * e3[k, a]
    L = lam2 * L2 + lam3 * L3
    if not want_grad:
        return (L, L2, L3, gam, quats, pos, np.zeros((0, 0)), np.zeros((0, 0)), 0.0, np.zeros(0), np.zeros(0),
                scale, trans)

    g_trans = np.zeros(2)
    g_scale = 0.0
    gRc = np.zeros((3, 3))
    gpos = np.zeros((K, 3))
    for k in range(K):
        for a in range(2):
            g = 2.0 * lam2 * d2[k, a]
            g_trans[a] += g
            g_scale += g * cam[k, a]
            for b in range(3):
                gRc[a, b] += scale * g * pos[k, b]
                gpos[k, b] += scale * g * Rc[a, b]
        for a in range(3):
            g = 2.0 * lam3 * e3[k, a]
            gpos[k, a] += g
            gpos[0, a] -= g

    gc1 = gRc[:, 0].copy()
    gc2 = gRc[:, 1].copy()
    gc3 = gRc[:, 2].copy()
    gc1 += np.cross(c2, gc3)
    gc2 += np.cross(gc3, c1)
    t = c2[0] * gc2[0] + c2[1] * gc2[1] + c2[2] * gc2[2]
    gv = (gc2 - c2 * t) / nv
    t = c1[0] * gv[0] + c1[1] * gv[1] + c1[2] * gv[2]
    ga2 = gv - c1 * t
    gc1 -= dot12 * gv + a2 * t
    t = c1[0] * gc1[0] + c1[1] * gc1[1] + c1[2] * gc1[2]
    ga1 = (gc1 - c1 * t) / n1
    g_r6 = np.empty(6)
    g_r6[:3] = ga1
    g_r6[3:] = ga2

    gacc = gpos.copy()
    gworld = np.zeros((K, 3, 3))
    Rl = np.empty((3, 3))
    Gl = np.empty((3, 3))
    gqj = np.empty(4)
    g_logits = np.zeros((J, Nmax))
    g_gam = np.zeros((J, Nmax))
    for j in range(K - 1, 0, -1):
        p = parents[j]
        q = quats[j - 1]
        _quat_to_mat(q, Rl)
        for a in range(3):
            for b in range(3):
                s = 0.0
                for c in range(3):
                    s += world[p, c, a] * gworld[j, c, b]
                Gl[a, b] = s
        for a in range(3):
            for b in range(3):
                s = 0.0
                for c in range(3):
                    s += gworld[j, a, c] * Rl[b, c]
                gworld[p, a, b] += s + gacc[j, a] * offsets[j, b]
            gacc[p, a] += gacc[j, a]
        _mat_grad_to_quat(q, Gl, gqj)
        # nlerp backward
        qg = q[0] * gqj[0] + q[1] * gqj[1] + q[2] * gqj[2] + q[3] * gqj[3]
        jj = j - 1
        n = n_atoms[jj]
        cnt = 0
        tot = 0.0
        for i in range(n):
            s = 0.0
            for c in range(4):
                s += atoms[jj, i, c] * (gqj[c] - q[c] * qg)
            g_gam[jj, i] = s * sg[jj, i] / cn[jj]
            if gam[jj, i] > 0.0:
                cnt += 1
                tot += g_gam[jj, i]
        mean_s = tot / cnt
        for i in range(n):
            if gam[jj, i] > 0.0:
                g_logits[jj, i] = g_gam[jj, i] - mean_s
    return L, L2, L3, gam, quats, pos, g_logits, g_gam, g_scale, g_trans, g_r6, scale, trans


if USE_JIT:
    sparsemax_rows = _sparsemax_rows_loops
    code_solve = _code_solve_loops
    fk = _fk_loops
    pose_loss_grad = _pose_loss_grad_loops
else:
    sparsemax_rows = _sparsemax_rows_np
    code_solve = _code_solve_np
    fk = _fk_np
    pose_loss_grad = _pose_loss_grad_np

BACKEND = "numba" if USE_JIT else "numpy"
