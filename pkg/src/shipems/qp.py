"""Dense convex QP solver (primal active set, null-space steps) with KKT certification.

Solves::

    minimize    0.5 z'Hz + g'z
    subject to  lb <= z <= ub,  C z <= d

for small n (tens of variables). H must be symmetric positive semidefinite.
Box bounds are folded into the general inequality set. Feasibility is
established by an elastic phase-1 LP solved with the same active-set loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import nnls

SCHEMA = "shipems.qp/1"


class InvalidProblemError(ValueError):
    """Inconsistent dimensions, asymmetric or indefinite Hessian."""


@dataclass(frozen=True)
class QuadraticProgram:
    H: np.ndarray
    g: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = H.shape[0]
        g = np.asarray(self.g, dtype=float).reshape(n)
        lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        C = np.asarray(self.C, dtype=float).reshape(-1, n)
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if H.shape != (n, n):
            raise InvalidProblemError("H must be square")
        if C.shape[0] != d.shape[0]:
            raise InvalidProblemError("C and d row counts differ")
        if np.any(lb > ub):
            raise InvalidProblemError("lb must not exceed ub")
        if not np.allclose(H, H.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(H).max(initial=0.0))):
            raise InvalidProblemError("H must be symmetric")
        for name, arr in (("H", H), ("g", g), ("lb", lb), ("ub", ub), ("C", C), ("d", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @classmethod
    def unconstrained(cls, H, g) -> "QuadraticProgram":
        n = np.atleast_2d(H).shape[0]
        return cls(H, g, np.full(n, -np.inf), np.full(n, np.inf), np.zeros((0, n)), np.zeros(0))

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.g @ z)

    def inequalities(self) -> tuple[np.ndarray, np.ndarray]:
        """All constraints as G z <= h: general rows, then finite upper, then finite lower bounds."""
        eye = np.eye(self.n)
        up = np.isfinite(self.ub)
        lo = np.isfinite(self.lb)
        G = np.vstack([self.C, eye[up], -eye[lo]])
        h = np.concatenate([self.d, self.ub[up], -self.lb[lo]])
        return G, h

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        def vec(a):
            return [None if not math.isfinite(x) else float(x) for x in a]

        return {
            "schema": SCHEMA,
            "n": self.n,
            "m": self.m,
            "H": self.H.tolist(),
            "g": self.g.tolist(),
            "lb": vec(self.lb),
            "ub": vec(self.ub),
            "C": self.C.tolist(),
            "d": self.d.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuadraticProgram":
        if data.get("schema") != SCHEMA:
            raise InvalidProblemError(f"unsupported schema {data.get('schema')!r}")
        n = int(data["n"])
        lb = [-np.inf if x is None else x for x in data["lb"]]
        ub = [np.inf if x is None else x for x in data["ub"]]
        C = np.asarray(data["C"], dtype=float).reshape(-1, n)
        return cls(np.asarray(data["H"]), np.asarray(data["g"]), lb, ub, C, np.asarray(data["d"]))


def dump_qp(qp: QuadraticProgram, path) -> None:
    Path(path).write_text(json.dumps(qp.to_dict(), indent=1))


def load_qp(path) -> QuadraticProgram:
    return QuadraticProgram.from_dict(json.loads(Path(path).read_text()))


@dataclass
class QpSettings:
    tol: float = 1e-6
    max_iter: int = 0  # 0: automatic, 10 * (n + rows)
    feas_tol: float = 1e-9
    warm_start: np.ndarray | None = None


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    kkt_residual: float
    status: str  # optimal | max-iter | infeasible | unbounded
    iterations: int = 0
    active: tuple[int, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _check_psd(H: np.ndarray) -> None:
    if H.size == 0:
        return
    eig = np.linalg.eigvalsh(H)
    if eig[0] < -1e-10 * max(1.0, abs(eig[-1])):
        raise InvalidProblemError(f"H is not positive semidefinite (min eigenvalue {eig[0]:.3e})")


def check_kkt(qp: QuadraticProgram, z, *, active_tol: float = 1e-7) -> float:
    """Max of stationarity, primal violation and complementarity at ``z``.

    Multipliers are the non-negative least-squares fit over rows whose slack
    is within ``active_tol`` (relative to the row scale).
    """
    z = np.asarray(z, dtype=float)
    G, h = qp.inequalities()
    grad = qp.H @ z + qp.g
    if G.shape[0] == 0:
        return float(np.abs(grad).max(initial=0.0))
    norms = np.linalg.norm(G, axis=1)
    norms[norms == 0] = 1.0
    slack = (h - G @ z) / norms
    primal = float(np.maximum(-slack, 0.0).max(initial=0.0))
    near = np.flatnonzero(slack <= active_tol * (1.0 + np.abs(h) / norms))
    if near.size:
        Gn = G[near] / norms[near, None]
        mu, _ = nnls(Gn.T, -grad, maxiter=50 * (near.size + 1))
        stat = float(np.abs(grad + Gn.T @ mu).max(initial=0.0))
        comp = float(np.abs(mu * slack[near]).max(initial=0.0))
    else:
        stat = float(np.abs(grad).max(initial=0.0))
        comp = 0.0
    return max(stat, primal, comp)


class _ActiveSet:
    """One primal active-set run on normalized rows G y <= h from a feasible y0."""

    def __init__(self, H, g, G, h, feas_tol, max_iter):
        self.H, self.g, self.G, self.h = H, g, G, h
        self.n = H.shape[0]
        self.feas_tol = feas_tol
        self.max_iter = max_iter

    def _initial_working_set(self, y) -> list[int]:
        slack = self.h - self.G @ y
        W: list[int] = []
        for i in np.flatnonzero(slack <= self.feas_tol * (1.0 + np.abs(self.h))):
            cand = W + [int(i)]
            if len(cand) > self.n:
                break
            if np.linalg.matrix_rank(self.G[cand], tol=1e-10) == len(cand):
                W = cand
        return W

    def _nullspace(self, W):
        n = self.n
        if not W:
            return np.eye(n), None, None
        Q, R = np.linalg.qr(self.G[W].T, mode="complete")
        k = len(W)
        return Q[:, k:], Q[:, :k], R[:k, :k]

    def run(self, y0: np.ndarray, W: list[int] | None = None):
        H, g, G, h, n = self.H, self.g, self.G, self.h, self.n
        y = y0.copy()
        W = self._initial_working_set(y) if W is None else list(W)
        hscale = max(1.0, float(np.abs(H).max(initial=0.0)))
        stalls = 0
        at_min = False  # a full Newton step just landed on the subspace minimizer
        for it in range(1, self.max_iter + 1):
            grad = H @ y + g
            Z, Y, R = self._nullspace(W)
            p = np.zeros(n)
            unbounded_dir = False
            if Z.shape[1] and not at_min:
                Hr = Z.T @ H @ Z
                gr = Z.T @ grad
                lam, V = np.linalg.eigh(Hr)
                flat = lam <= 1e-11 * hscale
                gv = V.T @ gr
                gscale = 1.0 + float(np.abs(grad).max())
                if flat.any() and np.abs(gv[flat]).max() > 1e-12 * gscale:
                    # zero-curvature descent: objective falls linearly along it
                    v = np.where(flat, -gv, 0.0)
                    p = Z @ (V @ v)
                    unbounded_dir = True
                else:
                    v = np.where(flat, 0.0, -gv / np.where(flat, 1.0, lam))
                    p = Z @ (V @ v)
            scale_y = 1.0 + float(np.abs(y).max(initial=0.0))
            if at_min or (not unbounded_dir and np.abs(p).max(initial=0.0) <= 1e-12 * scale_y):
                at_min = False
                if not W:
                    return y, W, "optimal", it
                # multipliers: G_W' mu = -grad
                mu = -np.linalg.solve(R, Y.T @ grad)
                neg = np.flatnonzero(mu < -1e-12 * (1.0 + np.abs(grad).max()))
                if neg.size == 0:
                    return y, W, "optimal", it
                # most negative multiplier, Bland (lowest row index) once stalling
                if stalls > 2 * n:
                    drop = min(neg, key=lambda j: W[j])
                else:
                    drop = int(neg[np.argmin(mu[neg])])
                W.pop(int(drop))
                continue
            Gp = G @ p
            alpha = math.inf if unbounded_dir else 1.0
            block = -1
            in_w = np.zeros(G.shape[0], dtype=bool)
            in_w[W] = True
            cand = np.flatnonzero((Gp > 1e-14 * np.abs(p).max()) & ~in_w)
            if cand.size:
                ratios = np.maximum(h[cand] - G[cand] @ y, 0.0) / Gp[cand]
                rmin = ratios.min()
                if rmin <= alpha:
                    alpha = float(rmin)
                    # ties resolved by lowest row index
                    block = int(cand[np.flatnonzero(ratios <= rmin * (1 + 1e-12) + 1e-300)[0]])
            if math.isinf(alpha):
                return y, W, "unbounded", it
            y = y + alpha * p
            stalls = stalls + 1 if alpha == 0.0 else 0
            if block >= 0:
                W.append(block)
            else:
                at_min = True
        return y, W, "max-iter", self.max_iter


def solve_qp(qp: QuadraticProgram, settings: QpSettings | None = None, **overrides) -> QpSolution:
    """Solve ``qp`` to a KKT point.

    ``warm_start`` (in settings or overrides) seeds both the phase-1 start and
    the working set when it is feasible.
    """
    s = settings or QpSettings()
    if overrides:
        s = QpSettings(**{**s.__dict__, **overrides})
    _check_psd(qp.H)
    n = qp.n
    G, h = qp.inequalities()
    norms = np.linalg.norm(G, axis=1)
    is_gen = np.arange(G.shape[0]) < qp.m
    if np.any(norms == 0):
        zero = norms == 0
        if np.any(h[zero] < -s.feas_tol):
            return QpSolution(np.zeros(n), math.nan, math.inf, "infeasible")
        G, h, norms, is_gen = G[~zero], h[~zero], norms[~zero], is_gen[~zero]
    Gn = G / norms[:, None]
    hn = h / norms
    m = Gn.shape[0]
    max_iter = s.max_iter or 10 * (n + m) + 50

    start = np.zeros(n) if s.warm_start is None else np.asarray(s.warm_start, dtype=float).reshape(n)
    start = np.clip(start, qp.lb, qp.ub)
    viol = Gn @ start - hn if m else np.zeros(0)
    total_iter = 0

    if m and np.any(viol > s.feas_tol * (1.0 + np.abs(hn))):
        # elastic phase 1 over (z, t): min t  s.t.  general rows  Gz - t <= h, boxes hard, t >= 0
        G1 = np.hstack([Gn, -is_gen[:, None].astype(float)])
        G1 = np.vstack([G1, np.r_[np.zeros(n), -1.0]])
        h1 = np.r_[hn, 0.0]
        t0 = max(0.0, float(viol[is_gen].max(initial=0.0)))
        y0 = np.r_[start, t0]
        row_norm = np.linalg.norm(G1, axis=1)
        G1 /= row_norm[:, None]
        h1 /= row_norm
        g1 = np.r_[np.zeros(n), 1.0]
        ph1 = _ActiveSet(np.zeros((n + 1, n + 1)), g1, G1, h1, s.feas_tol, max_iter)
        y, _, status, it = ph1.run(y0)
        total_iter += it
        start = y[:n]
        if status != "optimal" or np.max(Gn @ start - hn) > 1e3 * s.feas_tol * (1.0 + np.abs(hn).max()):
            return QpSolution(start, qp.objective(start), check_kkt(qp, start), "infeasible", total_iter)

    solver = _ActiveSet(qp.H, qp.g, Gn, hn, s.feas_tol, max_iter)
    z, W, status, it = solver.run(start)
    total_iter += it
    res = check_kkt(qp, z)
    if status == "optimal" and res > s.tol:
        status = "max-iter"
    return QpSolution(z, qp.objective(z), res, status, total_iter, tuple(sorted(W)))
