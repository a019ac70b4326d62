"""Dense primal-dual interior-point solver for LPs and second-order cone programs.

All estimators and sensitivity bounds in this package reduce to small linear
or second-order cone programs (a few hundred rows).  They are solved here by
a self-contained homogeneous self-dual (HSD) Mehrotra predictor-corrector
method with Nesterov-Todd scaling.  The HSD embedding detects infeasibility
and unboundedness through the certificates (tau, kappa) instead of a big-M
phase-1.  Everything is deterministic: identical inputs produce bit-identical
iterates and results.

Cone programs are stated over named variables; memberships ``t >= |v|_2``
refer to indices of the variable vector.  Affine residual cones are therefore
modeled by auxiliary pinned variables at the call site (see estimators.py).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ValidationError

_INF = float("inf")


@dataclass(frozen=True)
class Tolerances:
    """Termination targets; defaults support downstream tests at >= 10x looser tolerances."""

    feas: float = 1e-8
    gap: float = 1e-8
    max_iter: int = 200


@dataclass(frozen=True)
class LinearProgram:
    """min c'x  s.t.  a_eq x = b_eq,  a_ub x <= b_ub,  lb <= x <= ub.

    Bounds default to free variables; use +-inf entries for one-sided bounds.
    """

    c: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.c)

    def validate(self):
        c = np.asarray(self.c, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValidationError("objective coefficients must be finite")
        for name, mat, rhs in (("a_eq", self.a_eq, self.b_eq), ("a_ub", self.a_ub, self.b_ub)):
            if mat is None:
                if rhs is not None and len(rhs):
                    raise ValidationError(f"{name} missing for given rhs")
                continue
            mat = np.asarray(mat, dtype=float)
            rhs = np.asarray(rhs, dtype=float)
            if mat.ndim != 2 or mat.shape[1] != self.n or mat.shape[0] != len(rhs):
                raise ValidationError(f"{name} has inconsistent dimensions")
            if not (np.all(np.isfinite(mat)) and np.all(np.isfinite(rhs))):
                raise ValidationError(f"{name} entries must be finite")
        for name, bound in (("lb", self.lb), ("ub", self.ub)):
            if bound is not None and len(bound) != self.n:
                raise ValidationError(f"{name} has wrong length")


@dataclass(frozen=True)
class SecondOrderCone:
    """Membership t >= |v|_2 over variable indices (t scalar, v vector)."""

    t: int
    v: tuple[int, ...]


@dataclass(frozen=True)
class ConicProgram:
    lp: LinearProgram
    cones: tuple[SecondOrderCone, ...] = ()

    def validate(self):
        self.lp.validate()
        n = self.lp.n
        for cone in self.cones:
            idx = (cone.t,) + tuple(cone.v)
            if any(i < 0 or i >= n for i in idx):
                raise ValidationError("cone variable index out of range")
            if len(set(cone.v)) != len(cone.v) or cone.t in cone.v:
                raise ValidationError("cone variable indices must be distinct")


@dataclass
class SolveResult:
    """Terminal state of one solve.

    ``residual`` is the infinity-norm constraint violation of the returned
    primal point, re-computed from the orig inal program data (it does not
    trust solver internals).  ``gap`` is the relative primal-dual gap
    estimate at termination.
    """

    status: str  # optimal | infeasible | unbounded | numerical-failure
    x: np.ndarray | None
    objective: float | None
    residual: float
    gap: float
    iterations: int
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# Standard-form conversion:  min c'x  s.t.  A x = b,  G x + s = h,
# s in K = R+^(m_lin) x Q_d1 x ... x Q_dq.
# ---------------------------------------------------------------------------


@dataclass
class _StandardForm:
    c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    g: np.ndarray
    h: np.ndarray
    m_lin: int
    soc_dims: list[int] = field(default_factory=list)


def _to_standard_form(p: ConicProgram) -> _StandardForm:
    lp = p.lp
    n = lp.n
    c = np.asarray(lp.c, dtype=float)

    a = np.zeros((0, n)) if lp.a_eq is None else np.asarray(lp.a_eq, dtype=float)
    b = np.zeros(0) if lp.b_eq is None else np.asarray(lp.b_eq, dtype=float)

    g_rows = []
    h_vals = []
    if lp.a_ub is not None:
        g_rows.append(np.asarray(lp.a_ub, dtype=float))
        h_vals.append(np.asarray(lp.b_ub, dtype=float))
    lb = np.full(n, -_INF) if lp.lb is None else np.asarray(lp.lb, dtype=float)
    ub = np.full(n, _INF) if lp.ub is None else np.asarray(lp.ub, dtype=float)
    fin_lb = np.where(np.isfinite(lb))[0]
    fin_ub = np.where(np.isfinite(ub))[0]
    if len(fin_lb):
        rows = np.zeros((len(fin_lb), n))
        rows[np.arange(len(fin_lb)), fin_lb] = -1.0
        g_rows.append(rows)
        h_vals.append(-lb[fin_lb])
    if len(fin_ub):
        rows = np.zeros((len(fin_ub), n))
        rows[np.arange(len(fin_ub)), fin_ub] = 1.0
        g_rows.append(rows)
        h_vals.append(ub[fin_ub])

    g_lin = np.vstack(g_rows) if g_rows else np.zeros((0, n))
    h_lin = np.concatenate(h_vals) if h_vals else np.zeros(0)
    m_lin = g_lin.shape[0]

    soc_rows = []
    soc_dims = []
    for cone in p.cones:
        idx = [cone.t, *cone.v]
        block = np.zeros((len(idx), n))
        block[np.arange(len(idx)), idx] = -1.0
        soc_rows.append(block)
        soc_dims.append(len(idx))

    g = np.vstack([g_lin, *soc_rows]) if soc_rows else g_lin
    h = np.concatenate([h_lin, np.zeros(sum(soc_dims))]) if soc_dims else h_lin
    return _StandardForm(c=c, a=a, b=b, g=g, h=h, m_lin=m_lin, soc_dims=soc_dims)


# ---------------------------------------------------------------------------
# Cone algebra over K = R+^(m_lin) x product of second-order cones.
# Vectors are stored stacked; each helper loops over the (few) SOC blocks.
# ---------------------------------------------------------------------------


class _Cone:
    def __init__(self, m_lin: int, soc_dims: list[int]):
        self.m_lin = m_lin
        self.soc_dims = soc_dims
        self.dim = m_lin + sum(soc_dims)
        self.degree = m_lin + len(soc_dims)
        starts = []
        off = m_lin
        for d in soc_dims:
            starts.append(off)
            off += d
        self.starts = starts

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[: self.m_lin] = 1.0
        for s in self.starts:
            e[s] = 1.0
        return e

    def margin(self, u: np.ndarray) -> float:
        """Distance-like interiority measure: min slack over blocks."""
        vals = [u[: self.m_lin].min()] if self.m_lin else []
        for s, d in zip(self.starts, self.soc_dims):
            vals.append(u[s] - np.linalg.norm(u[s + 1 : s + d]))
        return min(vals) if vals else _INF

    def product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jordan product u o v."""
        out = np.empty(self.dim)
        out[: self.m_lin] = u[: self.m_lin] * v[: self.m_lin]
        for s, d in zip(self.starts, self.soc_dims):
            u0, u1 = u[s], u[s + 1 : s + d]
            v0, v1 = v[s], v[s + 1 : s + d]
            out[s] = u0 * v0 + u1 @ v1
            out[s + 1 : s + d] = u0 * v1 + v0 * u1
        return out

    def solve_product(self, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Solve lam o u = d for u (lam interior)."""
        out = np.empty(self.dim)
        out[: self.m_lin] = d[: self.m_lin] / lam[: self.m_lin]
        for s, dd in zip(self.starts, self.soc_dims):
            l0, l1 = lam[s], lam[s + 1 : s + dd]
            d0, d1 = d[s], d[s + 1 : s + dd]
            det = l0 * l0 - l1 @ l1
            u0 = (l0 * d0 - l1 @ d1) / det
            out[s] = u0
            out[s + 1 : s + dd] = (d1 - u0 * l1) / l0
        return out

    def max_step(self, u: np.ndarray, du: np.ndarray) -> float:
        """Largest alpha with u + alpha*du in K (u interior)."""
        alpha = _INF
        if self.m_lin:
            neg = du[: self.m_lin] < 0
            if np.any(neg):
                alpha = min(alpha, np.min(-u[: self.m_lin][neg] / du[: self.m_lin][neg]))
        for s, d in zip(self.starts, self.soc_dims):
            u0, u1 = u[s], u[s + 1 : s + d]
            d0, d1 = du[s], du[s + 1 : s + d]
            # boundary where (u0+a*d0)^2 = |u1+a*d1|^2 and u0+a*d0 >= 0
            aa = d0 * d0 - d1 @ d1
            bb = 2.0 * (u0 * d0 - u1 @ d1)
            cc = u0 * u0 - u1 @ u1
            roots = []
            if abs(aa) < 1e-300:
                if bb < 0:
                    roots.append(-cc / bb)
            else:
                disc = bb * bb - 4.0 * aa * cc
                if disc >= 0.0:
                    sq = np.sqrt(disc)
                    roots.extend([(-bb - sq) / (2 * aa), (-bb + sq) / (2 * aa)])
            pos = [r for r in roots if r > 0.0]
            if pos:
                step = min(pos)
                # only a genuine exit if the head goes nonpositive or the
                # boundary is hit from inside
                if u0 + step * d0 >= -1e-14 or d0 < 0:
                    alpha = min(alpha, step)
            if d0 < 0:
                alpha = min(alpha, -u0 / d0)
        return alpha


class _Scaling:
    """Nesterov-Todd scaling: symmetric W with W z = W^-1 s = lambda.

    For a second-order cone block the scaling is W = eta * V(wbar) where
    V(w) = [[w0, w1'], [w1, I + w1 w1'/(1+w0)]], wbar'J wbar = 1, and
    V(w)^-1 = J V(w) J = V((w0, -w1)).
    """

    def __init__(self, cone: _Cone, s: np.ndarray, z: np.ndarray):
        self.cone = cone
        m = cone.m_lin
        self.w_lin = np.sqrt(s[:m] / z[:m]) if m else np.zeros(0)
        self.soc = []  # per block: (eta, wbar)
        lam = np.empty(cone.dim)
        lam[:m] = np.sqrt(s[:m] * z[:m])
        for st, d in zip(cone.starts, cone.soc_dims):
            sb = s[st : st + d]
            zb = z[st : st + d]
            det_s = sb[0] ** 2 - sb[1:] @ sb[1:]
            det_z = zb[0] ** 2 - zb[1:] @ zb[1:]
            sbar = sb / np.sqrt(det_s)
            zbar = zb / np.sqrt(det_z)
            gamma = np.sqrt((1.0 + sbar @ zbar) / 2.0)
            wbar = (sbar + _j(zbar)) / (2.0 * gamma)
            eta = (det_s / det_z) ** 0.25
            self.soc.append((eta, wbar))
            lam[st : st + d] = self._v_block(wbar, zb) * eta
        self.lam = lam

    @staticmethod
    def _v_block(wbar, v):
        # V(wbar) v for one cone block
        w0, w1 = wbar[0], wbar[1:]
        dot = w1 @ v[1:]
        head = w0 * v[0] + dot
        tail = v[1:] + (v[0] + dot / (1.0 + w0)) * w1
        return np.concatenate([[head], tail])

    def apply(self, v: np.ndarray) -> np.ndarray:
        """W v."""
        out = np.empty(self.cone.dim)
        m = self.cone.m_lin
        out[:m] = self.w_lin * v[:m]
        for (eta, wbar), st, d in zip(self.soc, self.cone.starts, self.cone.soc_dims):
            out[st : st + d] = eta * self._v_block(wbar, v[st : st + d])
        return out

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        """W^-1 v."""
        out = np.empty(self.cone.dim)
        m = self.cone.m_lin
        out[:m] = v[:m] / self.w_lin
        for (eta, wbar), st, d in zip(self.soc, self.cone.starts, self.cone.soc_dims):
            winv = np.concatenate([[wbar[0]], -wbar[1:]])
            out[st : st + d] = self._v_block(winv, v[st : st + d]) / eta
        return out

    def apply_inv_mat(self, mat: np.ndarray) -> np.ndarray:
        """W^-1 applied to each column of a (dim x k) matrix."""
        out = np.empty_like(mat)
        m = self.cone.m_lin
        out[:m] = mat[:m] / self.w_lin[:, None] if m else mat[:m]
        for (eta, wbar), st, d in zip(self.soc, self.cone.starts, self.cone.soc_dims):
            w0, w1 = wbar[0], -wbar[1:]
            block = mat[st : st + d]
            dot = w1 @ block[1:]
            head = w0 * block[0] + dot
            tail = block[1:] + np.outer(w1, block[0] + dot / (1.0 + w0))
            out[st] = head / eta
            out[st + 1 : st + d] = tail / eta
        return out


def _j(v: np.ndarray) -> np.ndarray:
    out = v.copy()
    out[1:] = -out[1:]
    return out


# ---------------------------------------------------------------------------
# HSD Mehrotra predictor-corrector.
# ---------------------------------------------------------------------------


class _KKT:
    """Factorization of [[M, A'], [A, -reg]] with M = G' W^-2 G + reg."""

    def __init__(self, a: np.ndarray, g: np.ndarray, scaling: _Scaling, reg: float):
        n = g.shape[1]
        p = a.shape[0]
        self.n, self.p = n, p
        self.g = g
        self.scaling = scaling
        wg = scaling.apply_inv_mat(g)  # W^-1 G
        m = wg.T @ wg
        kkt = np.zeros((n + p, n + p))
        kkt[:n, :n] = m + reg * np.eye(n)
        if p:
            kkt[:n, n:] = a.T
            kkt[n:, :n] = a
            kkt[n:, n:] = -reg * np.eye(p)
        self.kkt = kkt
        if not np.all(np.isfinite(kkt)):
            raise FloatingPointError("non-finite KKT matrix")
        self.lu = scipy.linalg.lu_factor(kkt, check_finite=False)

    def solve(self, rx: np.ndarray, ry: np.ndarray, refine: int = 1) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.concatenate([rx, ry])
        if not np.all(np.isfinite(rhs)):
            raise FloatingPointError("non-finite KKT rhs")
        sol = scipy.linalg.lu_solve(self.lu, rhs, check_finite=False)
        for _ in range(refine):
            resid = rhs - self.kkt @ sol
            if not np.all(np.isfinite(resid)):
                break
            sol = sol + scipy.linalg.lu_solve(self.lu, resid, check_finite=False)
        return sol[: self.n], sol[self.n :]


def _solve_standard(sf: _StandardForm, tol: Tolerances) -> tuple[str, dict]:
    c, a, b, g, h = sf.c, sf.a, sf.b, sf.g, sf.h
    n = len(c)
    p = len(b)
    cone = _Cone(sf.m_lin, sf.soc_dims)
    m = cone.dim

    if m == 0:
        # no inequalities at all: pure equality-constrained LP, solve directly
        return _solve_equality_only(c, a, b)

    x = np.zeros(n)
    y = np.zeros(p)
    s = cone.identity()
    z = cone.identity()
    tau, kappa = 1.0, 1.0

    scale = max(1.0, np.linalg.norm(c), np.linalg.norm(b) if p else 0.0, np.linalg.norm(h))
    best = None

    for it in range(tol.max_iter):
        state = np.concatenate([x, y, s, z, [tau, kappa]])
        if not np.all(np.isfinite(state)):
            break
        r_d = (a.T @ y if p else 0.0) + g.T @ z + c * tau
        r_p = (a @ x - b * tau) if p else np.zeros(0)
        r_g = g @ x + s - h * tau
        r_t = c @ x + (b @ y if p else 0.0) + h @ z + kappa

        cx = c @ x
        by = b @ y if p else 0.0
        hz = h @ z
        gap = s @ z + tau * kappa
        mu = gap / (cone.degree + 1)

        pcost = cx / tau
        dcost = -(by + hz) / tau
        res_p = max(
            np.linalg.norm(r_p, np.inf) if p else 0.0,
            np.linalg.norm(r_g, np.inf),
        ) / (tau * (1.0 + np.linalg.norm(h, np.inf) if len(h) else 1.0))
        res_d = np.linalg.norm(r_d, np.inf) / (tau * (1.0 + np.linalg.norm(c, np.inf)))
        sz_gap = (s @ z) / tau**2
        relgap = sz_gap / max(1.0, abs(pcost))
        abs_viol = max(
            np.linalg.norm(r_p, np.inf) if p else 0.0,
            np.linalg.norm(r_g, np.inf),
        ) / tau

        if (
            res_p <= tol.feas and res_d <= tol.feas and relgap <= tol.gap
            and abs_viol <= tol.feas
        ):
            return "optimal", dict(x=x / tau, gap=relgap, iterations=it)
        if best is None or res_p + res_d + relgap < best[0]:
            best = (res_p + res_d + relgap, x / tau, relgap, it)

        # infeasibility / unboundedness certificates
        if tau <= 1e-10 * max(1.0, kappa):
            if by + hz < -1e-10 * scale:
                return "infeasible", dict(x=None, gap=_INF, iterations=it)
            if cx < -1e-10 * scale:
                return "unbounded", dict(x=None, gap=_INF, iterations=it)
            return "numerical-failure", dict(x=None, gap=_INF, iterations=it)
        if mu <= 1e-14 * scale and tau < 1e-6:
            break

        scaling = _Scaling(cone, s, z)
        lam = scaling.lam
        reg = 1e-12 * max(1.0, scale)
        try:
            kkt = _KKT(a, g, scaling, reg)
        except (scipy.linalg.LinAlgError, ValueError, FloatingPointError):
            break

        w2h = scaling.apply_inv(scaling.apply_inv(h))
        rhs2x = g.T @ w2h - c
        w1, w2 = None, None

        def directions(ds_target: np.ndarray, dk_target: float, rd, rp, rg, rt):
            nonlocal w1, w2
            # lam o (W dz + W^-1 ds) = ds_target;  tau dk + kappa dt = dk_target.
            # Eliminating ds = W(lam \ ds_target) - W^2 dz from the G-row gives
            # dz = W^-2 (G dx - h dt + rg + W(lam \ ds_target)).
            lam_inv_ds = cone.solve_product(lam, ds_target)
            w_lam = scaling.apply(lam_inv_ds)
            u_x = -rd - g.T @ (scaling.apply_inv(scaling.apply_inv(rg + w_lam)))
            u_y = -rp + np.zeros(p)
            x1, y1 = kkt.solve(u_x, u_y)
            if w2 is None:
                x2, y2 = kkt.solve(rhs2x, b if p else np.zeros(0))
                w2 = (x2, y2)
            x2, y2 = w2
            # dt coefficient and rhs from the tau row
            gw1 = scaling.apply_inv(scaling.apply_inv(g @ x1 + rg + w_lam))
            gw2 = scaling.apply_inv(scaling.apply_inv(g @ x2 - h))
            coef = (c @ x2 + (b @ y2 if p else 0.0) + h @ gw2 - kappa / tau)
            rhs = -rt - c @ x1 - (b @ y1 if p else 0.0) - h @ gw1 - dk_target / tau
            if abs(coef) < 1e-300:
                raise FloatingPointError("singular tau step")
            dt = rhs / coef
            dx = x1 + dt * x2
            dy = y1 + dt * y2
            dz = scaling.apply_inv(scaling.apply_inv(g @ dx - h * dt + rg + w_lam))
            ds = -rg - g @ dx + h * dt
            dk = (dk_target - kappa * dt) / tau
            return dx, dy, dz, ds, dt, dk

        try:
            # predictor
            ds_aff = -cone.product(lam, lam)
            dk_aff = -tau * kappa
            dxa, dya, dza, dsa, dta, dka = directions(ds_aff, dk_aff, r_d, r_p, r_g, r_t)
            alpha = min(
                cone.max_step(s, dsa),
                cone.max_step(z, dza),
                (-tau / dta) if dta < 0 else _INF,
                (-kappa / dka) if dka < 0 else _INF,
            )
            alpha = min(1.0, alpha)
            gap_aff = (s + alpha * dsa) @ (z + alpha * dza) + (tau + alpha * dta) * (
                kappa + alpha * dka
            )
            sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3

            # corrector
            wdz = scaling.apply(dza)
            wds = scaling.apply_inv(dsa)
            ds_cor = ds_aff - cone.product(wds, wdz) + sigma * mu * cone.identity()
            dk_cor = dk_aff - dta * dka + sigma * mu
            dxc, dyc, dzc, dsc, dtc, dkc = directions(ds_cor, dk_cor, r_d, r_p, r_g, r_t)
        except FloatingPointError:
            break

        alpha = min(
            cone.max_step(s, dsc),
            cone.max_step(z, dzc),
            (-tau / dtc) if dtc < 0 else _INF,
            (-kappa / dkc) if dkc < 0 else _INF,
        )
        alpha = min(1.0, 0.99 * alpha)
        # backtrack if rounding pushed an iterate onto the cone boundary
        while alpha > 1e-13:
            s_new = s + alpha * dsc
            z_new = z + alpha * dzc
            tau_new = tau + alpha * dtc
            kappa_new = kappa + alpha * dkc
            if (
                cone.margin(s_new) > 0
                and cone.margin(z_new) > 0
                and tau_new > 0
                and kappa_new > 0
            ):
                break
            alpha *= 0.5
        if alpha <= 1e-13:
            break

        x = x + alpha * dxc
        y = y + alpha * dyc
        z = z_new
        s = s_new
        tau = tau_new
        kappa = kappa_new

    if best is not None and best[0] < 1e-5:
        return "optimal", dict(x=best[1], gap=best[2], iterations=best[3], degraded=True)
    return "numerical-failure", dict(x=None, gap=_INF, iterations=tol.max_iter)


def _solve_equality_only(c, a, b):
    """Equality-constrained LP: optimal iff c in range(A'), else unbounded."""
    if a.shape[0] == 0:
        if np.allclose(c, 0.0):
            return "optimal", dict(x=np.zeros(len(c)), gap=0.0, iterations=0)
        return "unbounded", dict(x=None, gap=_INF, iterations=0)
    x, res, *_ = np.linalg.lstsq(a, b, rcond=None)
    if np.linalg.norm(a @ x - b, np.inf) > 1e-9:
        return "infeasible", dict(x=None, gap=_INF, iterations=0)
    y, *_ = np.linalg.lstsq(a.T, c, rcond=None)
    if np.linalg.norm(a.T @ y - c, np.inf) > 1e-9:
        return "unbounded", dict(x=None, gap=_INF, iterations=0)
    # objective constant on the feasible affine set; shift x to min-norm point
    return "optimal", dict(x=x, gap=0.0, iterations=0)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def verify_feasibility(p: ConicProgram, x: np.ndarray) -> float:
    """Infinity-norm violation of all constraints at x, from original data."""
    lp = p.lp
    viol = 0.0
    if lp.a_eq is not None and len(lp.b_eq):
        viol = max(viol, float(np.max(np.abs(np.asarray(lp.a_eq) @ x - np.asarray(lp.b_eq)))))
    if lp.a_ub is not None and len(lp.b_ub):
        viol = max(viol, float(np.max(np.asarray(lp.a_ub) @ x - np.asarray(lp.b_ub), initial=0.0)))
    if lp.lb is not None:
        lb = np.asarray(lp.lb, dtype=float)
        fin = np.isfinite(lb)
        if np.any(fin):
            viol = max(viol, float(np.max(lb[fin] - x[fin], initial=0.0)))
    if lp.ub is not None:
        ub = np.asarray(lp.ub, dtype=float)
        fin = np.isfinite(ub)
        if np.any(fin):
            viol = max(viol, float(np.max(x[fin] - ub[fin], initial=0.0)))
    for cone in p.cones:
        v = x[list(cone.v)]
        viol = max(viol, float(np.linalg.norm(v) - x[cone.t]))
    return viol


def solve_socp(p: ConicProgram, tol: Tolerances | None = None) -> SolveResult:
    """Solve a second-order cone program; see SolveResult for the contract."""
    tol = tol or Tolerances()
    p.validate()
    sf = _to_standard_form(p)
    with np.errstate(all="ignore"):
        status, info = _solve_standard(sf, tol)
    if status != "optimal":
        return SolveResult(
            status=status, x=None, objective=None, residual=_INF, gap=_INF,
            iterations=info["iterations"],
        )
    x = info["x"]
    residual = verify_feasibility(p, x)
    objective = float(np.asarray(p.lp.c) @ x)
    status = "optimal"
    if residual > 10.0 * tol.feas:
        status = "numerical-failure"
    return SolveResult(
        status=status, x=x, objective=objective, residual=residual,
        gap=float(info["gap"]), iterations=info["iterations"],
    )


def solve_lp(p: LinearProgram, tol: Tolerances | None = None) -> SolveResult:
    """Solve a linear program with the same engine (no cone blocks)."""
    return solve_socp(ConicProgram(lp=p, cones=()), tol)


def dump_program(p: ConicProgram | LinearProgram) -> str:
    """Plain-text dump of a program for external cross-checking."""
    if isinstance(p, LinearProgram):
        p = ConicProgram(lp=p, cones=())
    lp = p.lp
    lines = ["minimize", "  " + " + ".join(f"{ci:+.12g} x{i}" for i, ci in enumerate(lp.c) if ci)]
    if lp.a_eq is not None:
        for row, rhs in zip(lp.a_eq, lp.b_eq):
            terms = " + ".join(f"{v:+.12g} x{i}" for i, v in enumerate(row) if v)
            lines.append(f"  {terms} == {rhs:.12g}")
    if lp.a_ub is not None:
        for row, rhs in zip(lp.a_ub, lp.b_ub):
            terms = " + ".join(f"{v:+.12g} x{i}" for i, v in enumerate(row) if v)
            lines.append(f"  {terms} <= {rhs:.12g}")
    if lp.lb is not None or lp.ub is not None:
        lines.append("bounds")
        lb = lp.lb if lp.lb is not None else np.full(lp.n, -_INF)
        ub = lp.ub if lp.ub is not None else np.full(lp.n, _INF)
        for i, (lo, hi) in enumerate(zip(lb, ub)):
            if np.isfinite(lo) or np.isfinite(hi):
                lines.append(f"  {lo:.12g} <= x{i} <= {hi:.12g}")
    for cone in p.cones:
        lines.append(f"cone: x{cone.t} >= ||({', '.join('x%d' % i for i in cone.v)})||_2")
    return "\n".join(lines)
