"""Compiled inner loops: point location and tracing of piecewise-constant fields.

Triangles are described by their barycentric coefficient table ``bc`` of shape
``(m, 3, 3)``: ``lambda_i(x, y) = bc[t, i, 0] + bc[t, i, 1] * x + bc[t, i, 2] * y``.
``adj[t, i]`` is the neighbour across the edge opposite local vertex ``i``
(``-1`` on the boundary).
"""

import numpy as np
from numba import njit

BARY_TOL = 1e-12
MAX_CROSSINGS = 100_000
MAX_ZERO_MOVES = 64
TINY_STEP = 1e-12

TRACE_OK = 0
TRACE_STUCK = 1
TRACE_OVERFLOW = 2


@njit(cache=True)
def _min_bary(bc, t, x, y):
    m = np.inf
    for i in range(3):
        lam = bc[t, i, 0] + bc[t, i, 1] * x + bc[t, i, 2] * y
        if lam < m:
            m = lam
    return m


@njit(cache=True)
def locate_exhaustive(bc, x, y, tol):
    for t in range(bc.shape[0]):
        if _min_bary(bc, t, x, y) >= -tol:
            return t
    return -1


@njit(cache=True)
def _lowest_containing(bc, tris, fan_ptr, fan_idx, t, x, y, tol):
    # any other triangle containing the point shares a vertex with t
    best = t
    for k in range(3):
        v = tris[t, k]
        for j in range(fan_ptr[v], fan_ptr[v + 1]):
            c = fan_idx[j]
            if c < best and _min_bary(bc, c, x, y) >= -tol:
                best = c
    return best


@njit(cache=True)
def locate_walk(bc, adj, tris, fan_ptr, fan_idx, x, y, hint, tol):
    m = bc.shape[0]
    t = hint if 0 <= hint < m else 0
    found = -1
    max_steps = m + 16
    for _ in range(max_steps):
        worst = 0.0
        wi = -1
        second = 0.0
        si = -1
        for i in range(3):
            lam = bc[t, i, 0] + bc[t, i, 1] * x + bc[t, i, 2] * y
            if lam < worst:
                second = worst
                si = wi
                worst = lam
                wi = i
            elif lam < second:
                second = lam
                si = i
        if worst >= -tol:
            found = t
            break
        nb = adj[t, wi]
        if nb < 0 and si >= 0 and second < -tol:
            nb = adj[t, si]
        if nb < 0:
            break
        t = nb
    if found < 0:
        found = locate_exhaustive(bc, x, y, tol)
        if found < 0:
            return -1
    return _lowest_containing(bc, tris, fan_ptr, fan_idx, found, x, y, tol)


@njit(cache=True)
def locate_many(bc, adj, tris, fan_ptr, fan_idx, pts, hints, tol):
    n = pts.shape[0]
    out = np.empty(n, dtype=np.int64)
    prev = 0
    for k in range(n):
        h = hints[k]
        if h < 0:
            h = prev
        t = locate_walk(bc, adj, tris, fan_ptr, fan_idx, pts[k, 0], pts[k, 1], h, tol)
        out[k] = t
        if t >= 0:
            prev = t
    return out


@njit(cache=True)
def _fan_escape(bc, tris, fan_ptr, fan_idx, W, t, px, py):
    """Triangle around the vertex nearest ``(px, py)`` whose corner cone
    contains its own velocity direction (breaks tiny-step cycles at vertices).

    Also returns the cosine margin; a negative margin means no triangle's
    velocity enters its own corner, so the vertex is a stagnation point of
    the discrete flow.
    """
    best_l = -np.inf
    li = 0
    for i in range(3):
        lam = bc[t, i, 0] + bc[t, i, 1] * px + bc[t, i, 2] * py
        if lam > best_l:
            best_l = lam
            li = i
    v = tris[t, li]
    best = t
    best_score = -np.inf
    for j in range(fan_ptr[v], fan_ptr[v + 1]):
        c = fan_idx[j]
        wx = W[c, 0]
        wy = W[c, 1]
        score = np.inf
        for i in range(3):
            if tris[c, i] == v:
                continue
            gx = bc[c, i, 1]
            gy = bc[c, i, 2]
            r = (gx * wx + gy * wy) / (np.hypot(gx, gy) * np.hypot(wx, wy) + 1e-300)
            if r < score:
                score = r
        if score > best_score:
            best_score = score
            best = c
    return best, best_score


@njit(cache=True)
def trace_step(bc, adj, tris, fan_ptr, fan_idx, W, vel, u, vmax, px, py, t, dt,
               want_jac, J):
    """Advance one point for time ``dt`` through the per-triangle field ``W``.

    Motion inside a triangle is an exact straight line; the step is split at
    every edge crossing.  Speeds above ``vmax`` are rescaled to ``vmax``.

    When ``want_jac`` is true, ``J`` (shape ``(2, 2 + n)``) must hold the
    derivative of the incoming position with respect to ``(x0, y0, u_1..u_n)``
    and is updated in place to the derivative of the outgoing position.
    Returns ``(x, y, t, status)``.
    """
    n = vel.shape[0]
    P = J.shape[1]
    ds = np.zeros(P)
    dw = np.zeros((2, P))
    s = 0.0
    zero_moves = 0
    sliding = False
    snx = 0.0
    sny = 0.0
    status = TRACE_OVERFLOW
    for _ in range(MAX_CROSSINGS):
        rx = W[t, 0]
        ry = W[t, 1]
        speed = np.hypot(rx, ry)
        scale = 1.0
        clamped = speed > vmax
        if clamped:
            scale = vmax / speed
        wx = rx * scale
        wy = ry * scale
        if sliding:
            d = wx * snx + wy * sny
            if d > 0.0:
                wx -= d * snx
                wy -= d * sny
        if want_jac:
            for p in range(P):
                dw[0, p] = 0.0
                dw[1, p] = 0.0
            if clamped:
                hx = rx / speed
                hy = ry / speed
                for i in range(n):
                    ax = vel[i, t, 0]
                    ay = vel[i, t, 1]
                    d = hx * ax + hy * ay
                    dw[0, 2 + i] = scale * (ax - d * hx)
                    dw[1, 2 + i] = scale * (ay - d * hy)
            else:
                for i in range(n):
                    dw[0, 2 + i] = vel[i, t, 0]
                    dw[1, 2 + i] = vel[i, t, 1]
        rem = dt - s
        wn = np.hypot(wx, wy)
        tau = np.inf
        ei = -1
        for i in range(3):
            gx = bc[t, i, 1]
            gy = bc[t, i, 2]
            r = gx * wx + gy * wy
            if r < -1e-12 * np.hypot(gx, gy) * wn:
                lam = bc[t, i, 0] + gx * px + gy * py
                if lam < 0.0:
                    lam = 0.0
                cand = -lam / r
                if cand < tau:
                    tau = cand
                    ei = i
        if ei < 0 or tau >= rem:
            if want_jac:
                for p in range(P):
                    J[0, p] += -ds[p] * wx + rem * dw[0, p]
                    J[1, p] += -ds[p] * wy + rem * dw[1, p]
            px += rem * wx
            py += rem * wy
            status = TRACE_OK
            break
        gx = bc[t, ei, 1]
        gy = bc[t, ei, 2]
        if want_jac:
            r = gx * wx + gy * wy
            for p in range(P):
                dtau = -(gx * J[0, p] + gy * J[1, p] + tau * (gx * dw[0, p] + gy * dw[1, p])) / r
                J[0, p] += dtau * wx + tau * dw[0, p]
                J[1, p] += dtau * wy + tau * dw[1, p]
                ds[p] += dtau
        px += tau * wx
        py += tau * wy
        s += tau
        if tau <= TINY_STEP * dt:
            zero_moves += 1
            if zero_moves > MAX_ZERO_MOVES:
                status = TRACE_STUCK
                break
            if zero_moves % 4 == 0:
                t, margin = _fan_escape(bc, tris, fan_ptr, fan_idx, W, t, px, py)
                sliding = False
                if margin < -1e-9:
                    # the field circulates around this vertex: stay on it
                    status = TRACE_OK
                    break
                continue
        else:
            zero_moves = 0
        nb = adj[t, ei]
        if nb < 0:
            gn = np.hypot(gx, gy)
            sliding = True
            snx = -gx / gn
            sny = -gy / gn
        else:
            t = nb
            sliding = False
    return px, py, t, status


@njit(cache=True)
def integrate_rows(bc, adj, tris_m, fan_ptr, fan_idx, W_rows, row_of_step, vmax, starts, tri0, dt):
    """Trace ``A`` points through ``S`` steps, step ``k`` using ``W_rows[row_of_step[k]]``."""
    A = starts.shape[0]
    S = row_of_step.shape[0]
    states = np.empty((A, S + 1, 2))
    tris = np.empty((A, S + 1), dtype=np.int64)
    dummy_vel = np.zeros((0, 1, 2))
    dummy_u = np.zeros(0)
    J = np.zeros((2, 2))
    worst = TRACE_OK
    for a in range(A):
        px = starts[a, 0]
        py = starts[a, 1]
        t = tri0[a]
        states[a, 0, 0] = px
        states[a, 0, 1] = py
        tris[a, 0] = t
        for k in range(S):
            px, py, t, st = trace_step(bc, adj, tris_m, fan_ptr, fan_idx, W_rows[row_of_step[k]],
                                       dummy_vel, dummy_u,
                                       vmax, px, py, t, dt, False, J)
            if st > worst:
                worst = st
            states[a, k + 1, 0] = px
            states[a, k + 1, 1] = py
            tris[a, k + 1] = t
    return states, tris, worst


@njit(cache=True)
def integrate_with_jacobians(bc, adj, tris_m, fan_ptr, fan_idx, W_rows, vel, U, vmax, starts, tri0, dt):
    """Like :func:`integrate_rows` with one row per step, also returning the
    one-step Jacobians ``df/dx`` (A, S, 2, 2) and ``df/du`` (A, S, 2, n)."""
    A = starts.shape[0]
    S = U.shape[0]
    n = vel.shape[0]
    states = np.empty((A, S + 1, 2))
    tris = np.empty((A, S + 1), dtype=np.int64)
    Jx = np.empty((A, S, 2, 2))
    Ju = np.empty((A, S, 2, n))
    J = np.zeros((2, 2 + n))
    worst = TRACE_OK
    for a in range(A):
        px = starts[a, 0]
        py = starts[a, 1]
        t = tri0[a]
        states[a, 0, 0] = px
        states[a, 0, 1] = py
        tris[a, 0] = t
        for k in range(S):
            J[:, :] = 0.0
            J[0, 0] = 1.0
            J[1, 1] = 1.0
            px, py, t, st = trace_step(bc, adj, tris_m, fan_ptr, fan_idx, W_rows[k], vel, U[k], vmax,
                                       px, py, t, dt, True, J)
            if st > worst:
                worst = st
            states[a, k + 1, 0] = px
            states[a, k + 1, 1] = py
            tris[a, k + 1] = t
            Jx[a, k, :, :] = J[:, :2]
            Ju[a, k, :, :] = J[:, 2:]
    return states, tris, Jx, Ju, worst


@njit(cache=True)
def advect_points(bc, adj, tris_m, fan_ptr, fan_idx, W, vmax, pts, tris, dt, nsteps, want_jac):
    """Advect many points through a time-invariant field for ``nsteps`` steps.

    Returns final positions, triangles, the flow-map Jacobians (N, 2, 2) and
    the worst trace status.
    """
    N = pts.shape[0]
    out = np.empty((N, 2))
    out_t = np.empty(N, dtype=np.int64)
    jac = np.zeros((N, 2, 2))
    dummy_vel = np.zeros((0, 1, 2))
    dummy_u = np.zeros(0)
    J = np.zeros((2, 2))
    worst = TRACE_OK
    for k in range(N):
        px = pts[k, 0]
        py = pts[k, 1]
        t = tris[k]
        J[:, :] = 0.0
        J[0, 0] = 1.0
        J[1, 1] = 1.0
        for _ in range(nsteps):
            px, py, t, st = trace_step(bc, adj, tris_m, fan_ptr, fan_idx, W, dummy_vel, dummy_u, vmax,
                                       px, py, t, dt,
                                       want_jac, J)
            if st > worst:
                worst = st
        out[k, 0] = px
        out[k, 1] = py
        out_t[k] = t
        jac[k, :, :] = J
    return out, out_t, jac, worst
