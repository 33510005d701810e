"""Operator-splitting (ADMM) solver for small second-order cone programs.

Solves::

    minimize    0.5 z^T P z + q^T z
    subject to  A z in C

where ``C`` is a product of intervals ``[l_i, u_i]`` (equalities when
``l_i == u_i``) and Euclidean balls ``{y : ||y - c|| <= r}`` over groups of
rows.  Balls express the norm cones ``||F z + g|| <= r``.  The iteration is
the relaxed ADMM used by OSQP, with the projection onto boxes replaced by the
projection onto ``C``.  Equality rows are not split: they enter the
``z``-update as exact constraints of its KKT system, so every iterate
satisfies them to rounding and their multipliers come from that solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NumericalError, SolverNotConverged, ValidationError

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 50_000
RHO_MIN, RHO_MAX = 1e-6, 1e6
KKT_REG = 1e-12  # fallback when equality rows are linearly dependent


@dataclass(frozen=True, eq=False)
class ConvexSet:
    """Product set for the rows of ``A z``.

    Rows listed in ``ball_rows`` (shape ``(k, d)``) belong to balls with
    centres ``ball_center`` (k, d) and radii ``ball_radius`` (k,); every other
    row ``i`` is constrained to ``[lower[i], upper[i]]``.
    """

    lower: np.ndarray
    upper: np.ndarray
    ball_rows: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    ball_center: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    ball_radius: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        br = np.asarray(self.ball_rows, dtype=np.int64)
        if br.ndim != 2:
            br = br.reshape(len(br), -1)
        bc = np.asarray(self.ball_center, dtype=float).reshape(br.shape)
        rr = np.asarray(self.ball_radius, dtype=float).reshape(len(br))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValidationError("interval bounds must satisfy lower <= upper")
        if np.any(rr < 0):
            raise ValidationError("ball radii must be nonnegative")
        in_ball = np.zeros(len(lo), dtype=bool)
        in_ball[br.ravel()] = True
        if br.size and np.bincount(br.ravel(), minlength=len(lo)).max() > 1:
            raise ValidationError("a row may belong to at most one ball")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "ball_rows", br)
        object.__setattr__(self, "ball_center", bc)
        object.__setattr__(self, "ball_radius", rr)
        object.__setattr__(self, "_interval", ~in_ball)

    @property
    def m(self) -> int:
        return len(self.lower)

    @property
    def equality_mask(self) -> np.ndarray:
        return self._interval & (self.lower == self.upper)

    def project(self, y: np.ndarray) -> np.ndarray:
        out = np.clip(y, self.lower, self.upper)
        if len(self.ball_rows):
            v = y[self.ball_rows] - self.ball_center
            nrm = np.sqrt((v * v).sum(axis=1))
            s = np.where(nrm > self.ball_radius, self.ball_radius / np.maximum(nrm, 1e-300), 1.0)
            out[self.ball_rows] = self.ball_center + v * s[:, None]
        return out

    def project_rows(self, rows: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Project values given for ``rows`` only; ``rows`` must contain whole balls."""
        full = np.zeros(self.m)
        full[rows] = v
        return self.project(full)[rows]

    def support(self, lam: np.ndarray) -> float:
        """``sup_{y in C} lam^T y`` (``inf`` when unbounded in direction ``lam``)."""
        iv = self._interval
        l, u, w = self.lower[iv], self.upper[iv], lam[iv]
        with np.errstate(invalid="ignore"):
            a = np.where(w > 0, w * u, np.where(w < 0, w * l, 0.0))
        total = float(a.sum())
        if len(self.ball_rows):
            wb = lam[self.ball_rows]
            total += float((wb * self.ball_center).sum())
            total += float((self.ball_radius * np.sqrt((wb * wb).sum(axis=1))).sum())
        return total


@dataclass(frozen=True, eq=False)
class SocpProblem:
    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    C: ConvexSet

    def __post_init__(self):
        n = len(self.q)
        if self.P.shape != (n, n) or self.A.shape[1] != n or self.A.shape[0] != self.C.m:
            raise ValidationError("inconsistent SOCP dimensions")

    @property
    def n(self) -> int:
        return len(self.q)

    def objective(self, z) -> float:
        return float(0.5 * z @ (self.P @ z) + self.q @ z)


@dataclass
class SocpResult:
    z: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    iterations: int
    residuals: dict
    status: str = "solved"


def kkt_residuals(prob: SocpProblem, z, y, lam) -> dict:
    """Primal, dual, complementarity residuals and the duality gap."""
    Az = prob.A @ z
    Pz = prob.P @ z
    Atl = prob.A.T @ lam
    r_prim = float(np.linalg.norm(Az - prob.C.project(Az), np.inf))
    r_dual = float(np.linalg.norm(Pz + prob.q + Atl, np.inf))
    r_comp = float(np.linalg.norm(y - prob.C.project(y + lam), np.inf))
    primal = prob.objective(z)
    dual = -0.5 * float(z @ Pz) - prob.C.support(lam)
    gap = primal - dual
    return {
        "primal": r_prim,
        "dual": r_dual,
        "complementarity": r_comp,
        "gap": float(gap),
        "relative_gap": float(abs(gap) / max(1.0, abs(primal), abs(dual))),
        "objective": primal,
    }


class SocpSolver:
    """ADMM solver that keeps its factorization and iterates for warm starts.

    Only ``q`` may change between calls to :meth:`solve`.
    """

    def __init__(self, prob: SocpProblem, sigma: float = 1e-6, alpha: float = 1.6,
                 rho: float = 1.0, adaptive_rho: bool = True):
        self.prob = prob
        self.sigma = sigma
        self.alpha = alpha
        self.adaptive_rho = adaptive_rho
        eq = prob.C.equality_mask
        self._eq = np.flatnonzero(eq)
        self._free = np.flatnonzero(~eq)
        A = prob.A.tocsr()
        self._A_eq = A[self._eq].tocsc()
        self._A_free = A[self._free].tocsc()
        self._b_eq = prob.C.lower[self._eq]
        self.z = np.zeros(prob.n)
        self.y = prob.C.project(np.zeros(prob.C.m))
        self.lam = np.zeros(prob.C.m)
        self._set_rho(rho)

    def _set_rho(self, rho):
        self.rho = float(np.clip(rho, RHO_MIN, RHO_MAX))
        n, k = self.prob.n, len(self._eq)
        Af = self._A_free
        H = self.prob.P + self.sigma * sp.identity(n, format="csc") + self.rho * (Af.T @ Af)
        if not k:
            self._lu = splu(sp.csc_matrix(H))
            return
        for reg in (0.0, KKT_REG):
            K = sp.bmat([[H, self._A_eq.T], [self._A_eq, -reg * sp.identity(k)]], format="csc")
            try:
                self._lu = splu(K)
                return
            except RuntimeError:  # dependent equality rows
                continue
        raise NumericalError("KKT matrix is singular")

    def solve(self, q=None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
              check_every: int = 10) -> SocpResult:
        prob = self.prob
        if q is not None:
            q = np.asarray(q, dtype=float)
            if q.shape != prob.q.shape:
                raise ValidationError("q has the wrong shape")
            prob = SocpProblem(prob.P, q, prob.A, prob.C)
            self.prob = prob
        A, AT, P, C = prob.A, prob.A.T.tocsc(), prob.P, prob.C
        Af, AfT = self._A_free, self._A_free.T.tocsc()
        fr, eq, n = self._free, self._eq, prob.n
        z, y, lam = self.z.copy(), self.y.copy(), self.lam.copy()
        y[eq] = self._b_eq
        a = self.alpha
        best = None
        best_score = np.inf
        res = None
        for it in range(1, max_iter + 1):
            rhs = np.concatenate([self.sigma * z - prob.q + AfT @ (self.rho * y[fr] - lam[fr]),
                                  self._b_eq])
            sol = self._lu.solve(rhs)
            zt = sol[:n]
            lam[eq] = sol[n:]
            yt = Af @ zt
            z = a * zt + (1 - a) * z
            yr = a * yt + (1 - a) * y[fr]
            y_new = C.project_rows(fr, yr + lam[fr] / self.rho)
            lam[fr] = lam[fr] + self.rho * (yr - y_new)
            y[fr] = y_new
            if it % check_every and it != max_iter:
                continue
            Az, Pz, Atl = A @ z, P @ z, AT @ lam
            rp = float(np.linalg.norm(Az - y, np.inf))
            rd = float(np.linalg.norm(Pz + prob.q + Atl, np.inf))
            sp_ = max(np.linalg.norm(Az, np.inf), np.linalg.norm(y, np.inf))
            sd = max(np.linalg.norm(Pz, np.inf), np.linalg.norm(Atl, np.inf),
                     np.linalg.norm(prob.q, np.inf))
            eps_p = tol
            eps_d = tol * (1.0 + sd)
            score = max(rp / eps_p, rd / eps_d)
            if score < best_score:
                best_score = score
                best = (z.copy(), y.copy(), lam.copy())
            if rp <= eps_p and rd <= eps_d:
                res = kkt_residuals(prob, z, y, lam)
                if res["relative_gap"] <= tol:
                    break
                res = None
            if self.adaptive_rho and it % (5 * check_every) == 0:
                ratio = np.sqrt((rp / max(sp_, 1e-30)) / max(rd / max(sd, 1e-30), 1e-30))
                if ratio > 5 or ratio < 0.2:
                    self._set_rho(self.rho * ratio)
        self.z, self.y, self.lam = z, y, lam
        if res is None:
            bz, by, bl = best if best is not None else (z, y, lam)
            raise SolverNotConverged(
                f"ADMM did not reach tolerance {tol:g} in {max_iter} iterations",
                best=SocpResult(bz, by, bl, max_iter, kkt_residuals(prob, bz, by, bl),
                                "max_iter"),
                residuals=kkt_residuals(prob, bz, by, bl),
            )
        return SocpResult(z, y, lam, it, res)


# ------------------------------------------------------------ interior point
IPM_MAX_ITER = 100
IPM_STEP = 0.99
IPM_REFINE = 3
IPM_REG = 1e-9
IPM_MIN_STEP = 1e-12
POLISH_RHO = 10.0


def _soc_scaling(s, w):
    """Nesterov-Todd scaling of second-order cones, one cone per row.

    Returns ``(W, Winv)`` with shape ``(k, q, q)`` such that
    ``W @ w == Winv @ s`` for every cone.
    """
    J = np.ones(s.shape[1])
    J[1:] = -1.0
    sJs = _soc_det(s)
    wJw = _soc_det(w)
    beta = (sJs / wJw) ** 0.25
    sb = s / np.sqrt(sJs)[:, None]
    wb = w / np.sqrt(wJw)[:, None]
    gamma = np.sqrt(0.5 * (1.0 + (sb * wb).sum(axis=1)))
    wbar = (sb + wb * J) / (2.0 * gamma)[:, None]  # the scaling point
    v = wbar.copy()
    v[:, 0] += 1.0
    v /= np.sqrt(2.0 * (wbar[:, 0] + 1.0))[:, None]
    vv = v[:, :, None] * v[:, None, :]
    Jm = np.diag(J)
    W = beta[:, None, None] * (2.0 * vv - Jm)
    Jv = v * J
    Winv = (2.0 * Jv[:, :, None] * Jv[:, None, :] - Jm) / beta[:, None, None]
    return W, Winv


def _soc_det(x):
    """``x0^2 - ||x1||^2`` in factored form, accurate near the cone boundary."""
    r = np.linalg.norm(x[:, 1:], axis=1)
    return (x[:, 0] - r) * (x[:, 0] + r)


def _soc_product(u, v):
    out = u[:, :1] * v + v[:, :1] * u
    out[:, 0] = (u * v).sum(axis=1)
    return out


def _soc_divide(lam, r):
    """Solve ``lam o x = r`` for ``x`` in each cone."""
    l0, l1 = lam[:, 0], lam[:, 1:]
    r0, r1 = r[:, 0], r[:, 1:]
    x0 = (l0 * r0 - (l1 * r1).sum(axis=1)) / (l0 * l0 - (l1 * l1).sum(axis=1))
    return np.column_stack([x0, (r1 - x0[:, None] * l1) / l0[:, None]])


def _soc_max_step(x, d):
    """Largest ``t`` with ``x + t d`` in the cone, for ``x`` in its interior."""
    a = d[:, 0] ** 2 - (d[:, 1:] ** 2).sum(axis=1)
    b = 2.0 * (x[:, 0] * d[:, 0] - (x[:, 1:] * d[:, 1:]).sum(axis=1))
    c = _soc_det(x)
    t = np.full(len(x), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - 4.0 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        # roots of a t^2 + b t + c in a cancellation-free form
        qq = -0.5 * (b + np.copysign(sq, b))
        r1 = np.where(qq != 0, c / qq, np.inf)
        r2 = np.where(a != 0, qq / a, np.inf)
    for r in (r1, r2):
        ok = (disc >= 0) & np.isfinite(r) & (r > 0)
        t = np.where(ok, np.minimum(t, r), t)
    lin = (a == 0) & (b < 0)
    t = np.where(lin, np.minimum(t, -c / np.where(lin, b, -1.0)), t)
    return float(t.min()) if len(t) else np.inf


class InteriorPointSolver:
    """Primal-dual interior-point solver with Nesterov-Todd scaling.

    Intervals become pairs of linear inequalities, balls become second-order
    cones ``(r, c - A_rows z)`` and equality rows stay exact constraints.
    Each iteration takes a Mehrotra predictor-corrector step.  Same call
    pattern as :class:`SocpSolver`; there is no warm start.
    """

    def __init__(self, prob: SocpProblem):
        self.prob = prob
        C = prob.C
        A = prob.A.tocsr()
        eq = C.equality_mask
        ineq = C._interval & ~eq
        up = np.flatnonzero(ineq & np.isfinite(C.upper))
        lo = np.flatnonzero(ineq & np.isfinite(C.lower))
        self._up, self._lo = up, lo
        self._eq = np.flatnonzero(eq)
        self._E = A[self._eq].tocsc()
        self._b = C.lower[self._eq]
        k, d = C.ball_rows.shape
        self.k, self.q = k, d + 1
        blocks = [A[up], -A[lo]]
        h = [C.upper[up], -C.lower[lo]]
        if k:
            rows = np.column_stack([np.full(k, -1), C.ball_rows]).ravel()
            Ab = A[np.maximum(rows, 0)].tolil()
            Ab[np.flatnonzero(rows < 0)] = 0
            blocks.append(Ab.tocsr())
            h.append(np.column_stack([C.ball_radius, C.ball_center]).ravel())
        self.G = sp.vstack(blocks, format="csr")
        self.h = np.concatenate(h)
        self.ml = len(up) + len(lo)
        self.degree = self.ml + k

    # cone helpers on stacked vectors [linear part, cones]
    def _split(self, x):
        return x[:self.ml], x[self.ml:].reshape(self.k, self.q)

    def _join(self, a, b):
        return np.concatenate([a, b.ravel()])

    def _unit(self):
        e = np.zeros((self.k, self.q))
        e[:, 0] = 1.0
        return self._join(np.ones(self.ml), e)

    def _product(self, u, v):
        ul, uc = self._split(u)
        vl, vc = self._split(v)
        return self._join(ul * vl, _soc_product(uc, vc))

    def _divide(self, lam, r):
        ll, lc = self._split(lam)
        rl, rc = self._split(r)
        return self._join(rl / ll, _soc_divide(lc, rc))

    def _min_eig(self, x):
        xl, xc = self._split(x)
        m = [xl.min()] if self.ml else []
        if self.k:
            m.append((xc[:, 0] - np.linalg.norm(xc[:, 1:], axis=1)).min())
        return float(min(m)) if m else 1.0

    def _max_step(self, x, d):
        xl, xc = self._split(x)
        dl, dc = self._split(d)
        t = np.inf
        neg = dl < 0
        if np.any(neg):
            t = float((-xl[neg] / dl[neg]).min())
        if self.k:
            t = min(t, _soc_max_step(xc, dc))
        return t

    def _kkt_solver(self, P, D2):
        """Solve ``[[P, E^T, G^T], [E, 0, 0], [G, 0, -D2]]`` by a regularized factorization.

        The static regularization keeps the factorization stable when
        constraints are degenerate; iterative refinement against the exact
        matrix removes its bias.
        """
        n, me, mg = P.shape[0], len(self._eq), self.G.shape[0]
        E, G = self._E, self.G
        K0 = sp.bmat([[P, E.T, G.T], [E, None, None], [G, None, -D2]], format="csc")
        d = np.concatenate([np.full(n, IPM_REG), np.full(me + mg, -IPM_REG)])
        try:
            lu = splu(sp.csc_matrix(K0 + sp.diags(d)))
        except RuntimeError as exc:
            raise NumericalError(f"KKT factorization failed: {exc}") from None

        def solve(rhs):
            x = lu.solve(rhs)
            for _ in range(IPM_REFINE):
                x += lu.solve(rhs - K0 @ x)
            return x
        return solve

    def _scaling(self, s, w):
        sl, sc = self._split(s)
        wl, wc = self._split(w)
        if self.k:
            Wc, Wic = _soc_scaling(sc, wc)
        else:
            Wc = Wic = np.zeros((0, self.q, self.q))
        return np.sqrt(sl / wl), Wc, Wic

    def _apply(self, dl, Wc, x):
        xl, xc = self._split(x)
        return self._join(dl * xl, np.einsum("kij,kj->ki", Wc, xc))

    def _block_diag(self, dl, Wc):
        k, q = self.k, self.q
        ii = np.arange(k)[:, None, None] * q + np.arange(q)[None, :, None]
        jj = np.arange(k)[:, None, None] * q + np.arange(q)[None, None, :]
        ii, jj = np.broadcast_arrays(ii, jj)
        nl = self.ml
        r = np.concatenate([np.arange(nl), nl + ii.ravel()])
        c = np.concatenate([np.arange(nl), nl + jj.ravel()])
        return sp.csr_matrix((np.concatenate([dl, Wc.ravel()]), (r, c)),
                             shape=(nl + k * q,) * 2)

    def _result(self, z, w, y_eq):
        prob = self.prob
        lam = np.zeros(prob.C.m)
        wl, wc = self._split(w)
        nu = len(self._up)
        lam[self._up] += wl[:nu]
        lam[self._lo] -= wl[nu:]
        lam[self._eq] = y_eq
        if self.k:
            lam[prob.C.ball_rows] = wc[:, 1:]
        y = prob.C.project(prob.A @ z)
        return y, lam, kkt_residuals(prob, z, y, lam)

    def solve(self, q=None, tol: float = DEFAULT_TOL, max_iter: int = IPM_MAX_ITER) -> SocpResult:
        prob = self.prob
        if q is not None:
            q = np.asarray(q, dtype=float)
            if q.shape != prob.q.shape:
                raise ValidationError("q has the wrong shape")
            prob = SocpProblem(prob.P, q, prob.A, prob.C)
            self.prob = prob
        P, G, h, E, b = prob.P.tocsc(), self.G, self.h, self._E, self._b
        n, me = prob.n, len(self._eq)
        GT = G.T.tocsr()
        e = self._unit()

        def newton(solve, rd, re, ri, rc):
            """Newton step for the residuals and complementarity target ``rc``."""
            ds = self._divide(lam, rc)
            sol = solve(np.concatenate([-rd, -re, -(ri + self._apply(dl, Wc, ds))]))
            dz, dy, dw = sol[:n], sol[n:n + me], sol[n + me:]
            return dz, dy, -ri - G @ dz, dw

        # starting point: least-squares primal and dual estimates, shifted into the cone
        solve = self._kkt_solver(P, sp.identity(G.shape[0], format="csc"))
        sol = solve(np.concatenate([np.zeros(n), b, h]))
        z = sol[:n]
        s = h - G @ z
        sol = solve(np.concatenate([-prob.q, np.zeros(me), np.zeros(len(h))]))
        w = G @ sol[:n]
        y_eq = sol[n:n + me]
        for v in (s, w):
            shift = self._min_eig(v)
            if shift <= 0:
                v += (1.0 - shift) * e
        best, best_score, res = None, np.inf, None
        qn = max(1.0, float(np.linalg.norm(prob.q, np.inf)))
        it = 0
        for it in range(1, max_iter + 1):
            rd = P @ z + prob.q + E.T @ y_eq + GT @ w
            re = E @ z - b
            ri = G @ z + s - h
            y, lamr, r = self._result(z, w, y_eq)
            score = max(r["primal"], r["dual"] / qn, r["complementarity"], r["relative_gap"])
            if score < best_score:
                best_score, best = score, (z.copy(), y, lamr)
            if score <= tol:
                res = r
                break
            mu = float(s @ w) / max(self.degree, 1)
            dl, Wc, Wic = self._scaling(s, w)
            lam = self._apply(dl, Wc, w)
            try:
                solve = self._kkt_solver(
                    P, self._block_diag(dl * dl, np.einsum("kij,kjl->kil", Wc, Wc)))
            except NumericalError:
                break
            # predictor
            rc = -self._product(lam, lam)
            dz, dy, dsv, dw = newton(solve, rd, re, ri, rc)
            a_aff = min(1.0, self._max_step(s, dsv), self._max_step(w, dw))
            sw = float(s @ w)
            sigma = (float((s + a_aff * dsv) @ (w + a_aff * dw)) / sw) ** 3 if sw > 0 else 0.0
            # corrector
            dls = np.concatenate([dsv[:self.ml] / dl,
                                  np.einsum("kij,kj->ki", Wic, self._split(dsv)[1]).ravel()])
            rc = rc - self._product(dls, self._apply(dl, Wc, dw)) + sigma * mu * e
            dz, dy, dsv, dw = newton(solve, rd, re, ri, rc)
            step = min(1.0, IPM_STEP * min(self._max_step(s, dsv), self._max_step(w, dw)))
            if not step > IPM_MIN_STEP:
                break
            s_new, w_new = s + step * dsv, w + step * dw
            if not (self._min_eig(s_new) > 0 and self._min_eig(w_new) > 0):
                break  # rounding has reached the cone boundary
            z, y_eq = z + step * dz, y_eq + step * dy
            s, w = s_new, w_new
        if res is None:
            bz, by, bl = best if best is not None else (z, prob.C.project(prob.A @ z),
                                                        np.zeros(prob.C.m))
            r = kkt_residuals(prob, bz, by, bl)
            raise SolverNotConverged(
                f"interior point did not reach tolerance {tol:g}",
                best=SocpResult(bz, by, bl, it, r, "max_iter"), residuals=r)
        return SocpResult(z, y, lamr, it, res)


def solve_socp(prob: SocpProblem, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER, warm: Optional[SocpSolver] = None,
               method: str = "ipm") -> SocpResult:
    """One-shot solve.

    ``method="ipm"`` runs the interior-point solver and, when it stalls above
    ``tol`` (degenerate constraints leave a complementarity residual of order
    the square root of the barrier parameter), polishes its best point with
    ADMM for at most ``max_iter`` iterations.  ``method="admm"`` runs ADMM
    from scratch or from ``warm``.
    """
    if method == "admm" or warm is not None:
        solver = warm if warm is not None else SocpSolver(prob)
        return solver.solve(None if warm is None else prob.q, tol=tol, max_iter=max_iter)
    if method != "ipm":
        raise ValidationError(f"unknown SOCP method {method!r}")
    try:
        return InteriorPointSolver(prob).solve(tol=tol)
    except SolverNotConverged as exc:
        start = exc.best
    polish = SocpSolver(prob, rho=POLISH_RHO)
    polish.z, polish.y, polish.lam = start.z, start.y, start.lam
    res = polish.solve(tol=tol, max_iter=max_iter)
    res.iterations += start.iterations
    res.status = "polished"
    return res


def project_ball(point, center, radius) -> np.ndarray:
    """Closed-form Euclidean projection onto ``{y : ||y - center|| <= radius}``."""
    v = np.asarray(point, dtype=float) - center
    n = np.linalg.norm(v)
    return np.asarray(point, dtype=float) if n <= radius else center + v * (radius / n)
