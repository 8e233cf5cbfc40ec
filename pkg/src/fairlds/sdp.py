"""Dense block-diagonal SDP solver.

Solves problems of the form::

    minimize    c'y
    subject to  F_j(y) = F_j0 + sum_i y_i F_ji  >= 0   (PSD, every block j)
                E y = d

with free variables ``y`` by a primal-dual path-following interior-point
method (HKM search direction, Mehrotra predictor-corrector). Blocks of size
one are handled together as a nonnegative orthant.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

log = logging.getLogger(__name__)

__all__ = [
    "SdpBlock",
    "SdpInstance",
    "SolverConfig",
    "SdpSolution",
    "Status",
    "solve",
    "certify",
    "dump_instance",
    "load_instance",
]

LinearForm = Mapping[int, float]


@dataclass
class SdpBlock:
    """Symmetric matrix whose entries are affine forms in y.

    ``entries`` maps upper-triangle positions ``(i, j)`` with ``i <= j`` to a
    sparse linear form ``{var: coeff}``; the lower triangle mirrors it.
    """

    size: int
    entries: dict[tuple[int, int], dict[int, float]] = field(default_factory=dict)
    constant: np.ndarray | None = None
    label: str = ""

    def entry(self, i: int, j: int) -> dict[int, float]:
        if i > j:
            i, j = j, i
        return dict(self.entries.get((i, j), {}))

    def constant_matrix(self) -> np.ndarray:
        if self.constant is None:
            return np.zeros((self.size, self.size))
        return np.asarray(self.constant, dtype=float)

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        out = self.constant_matrix().copy()
        for (i, j), form in self.entries.items():
            val = sum(c * y[v] for v, c in form.items())
            out[i, j] += val
            if i != j:
                out[j, i] += val
        return out

    def variables(self) -> set[int]:
        return {v for form in self.entries.values() for v in form}


@dataclass
class SdpInstance:
    num_vars: int
    objective: np.ndarray
    blocks: list[SdpBlock]
    eq_rows: list[dict[int, float]]
    eq_rhs: list[float]
    index: object | None = None  # MomentIndex when built by the relaxer

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)

    def validate(self) -> None:
        if self.objective.shape != (self.num_vars,):
            raise ValueError("objective length does not match num_vars")
        if len(self.eq_rows) != len(self.eq_rhs):
            raise ValueError("equality rows and right-hand sides differ in length")
        for b, block in enumerate(self.blocks):
            if block.constant is not None:
                C = np.asarray(block.constant)
                if C.shape != (block.size, block.size) or not np.allclose(C, C.T):
                    raise ValueError(f"block {b}: constant term must be symmetric {block.size}x{block.size}")
            for (i, j), form in block.entries.items():
                if not (0 <= i <= j < block.size):
                    raise ValueError(f"block {b}: entry {(i, j)} outside upper triangle")
                for v in form:
                    if not 0 <= v < self.num_vars:
                        raise ValueError(f"block {b}: variable {v} out of range")
        for row in self.eq_rows:
            for v in row:
                if not 0 <= v < self.num_vars:
                    raise ValueError(f"equality references variable {v} out of range")

    def equality_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        E = np.zeros((len(self.eq_rows), self.num_vars))
        for r, row in enumerate(self.eq_rows):
            for v, c in row.items():
                E[r, v] += c
        return E, np.asarray(self.eq_rhs, dtype=float)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_TROUBLE = "NumericalTrouble"


@dataclass(frozen=True)
class SolverConfig:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iters: int = 200
    step_fraction: float = 0.98

    def __post_init__(self):
        if self.gap_tol <= 0 or self.feas_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass
class SdpSolution:
    y: np.ndarray
    objective: float
    status: Status
    iterations: int
    duality_gap: float
    residuals: tuple[float, float, float]  # (primal, dual, equality)
    dual_objective: float = math.nan
    dual_blocks: list[np.ndarray] = field(default_factory=list)
    eq_multipliers: np.ndarray | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "gap": self.duality_gap,
            "objective": self.objective,
            "dual_objective": self.dual_objective,
            "residuals": list(self.residuals),
        }


# ----------------------------------------------------------------------------
# compiled representation used by the iteration loop


class _DenseCone:
    """Compiled dense PSD block: vec(F(y)) = f0 + B y (row-major vec)."""

    def __init__(self, block: SdpBlock, n: int):
        nb = block.size
        rows, cols, vars_, coefs = [], [], [], []
        for (i, j), form in sorted(block.entries.items()):
            for v, c in sorted(form.items()):
                if c == 0.0:
                    continue
                rows.append(i), cols.append(j), vars_.append(v), coefs.append(c)
                if i != j:
                    rows.append(j), cols.append(i), vars_.append(v), coefs.append(c)
        self.size = nb
        self.r = np.asarray(rows, dtype=np.int64)
        self.c = np.asarray(cols, dtype=np.int64)
        self.v = np.asarray(vars_, dtype=np.int64)
        self.a = np.asarray(coefs, dtype=float)
        nnz = len(self.a)
        self.B = sp.csr_matrix((self.a, (self.r * nb + self.c, self.v)), shape=(nb * nb, n))
        # V[p, var_p] = a_p, used to fold the entrywise Schur kernel onto variables
        self.V = sp.csr_matrix((self.a, (np.arange(nnz), self.v)), shape=(nnz, n))
        self.VT = self.V.T.tocsr()
        self.F0 = block.constant_matrix()

    def value(self, y: np.ndarray) -> np.ndarray:
        return self.F0 + (self.B @ y).reshape(self.size, self.size)

    def linear(self, dy: np.ndarray) -> np.ndarray:
        return (self.B @ dy).reshape(self.size, self.size)

    def adjoint(self, W: np.ndarray) -> np.ndarray:
        """tr(F_i W) for every variable i (W symmetric)."""
        return self.B.T @ W.reshape(-1)

    def schur(self, X: np.ndarray, Sinv: np.ndarray, chunk: int = 2048) -> np.ndarray:
        """M_ik = tr(F_i X F_k S^-1)."""
        n = self.V.shape[1]
        out = np.zeros((n, n))
        nnz = len(self.a)
        if nnz == 0:
            return out
        Xc = X[self.c]  # rows c_p
        Sc = Sinv[self.c]  # rows c_q
        for start in range(0, nnz, chunk):
            stop = min(start + chunk, nnz)
            # Q[p, q] = X[c_p, r_q] * Sinv[c_q, r_p]
            Q = Xc[start:stop][:, self.r] * Sc[:, self.r[start:stop]].T
            R = self.VT @ Q.T  # (n, chunk): sum over q
            out += self.V[start:stop].T @ R.T
        return 0.5 * (out + out.T)


class _Problem:
    def __init__(self, inst: SdpInstance):
        n = inst.num_vars
        self.n = n
        self.c = np.asarray(inst.objective, dtype=float)
        self.dense: list[_DenseCone] = []
        self.dense_ids: list[int] = []
        lp_rows, lp_cols, lp_vals, g0 = [], [], [], []
        self.lp_ids: list[int] = []
        for b, block in enumerate(inst.blocks):
            if block.size == 1:
                r = len(g0)
                for v, c in sorted(block.entry(0, 0).items()):
                    if c != 0.0:
                        lp_rows.append(r), lp_cols.append(v), lp_vals.append(c)
                g0.append(float(block.constant_matrix()[0, 0]))
                self.lp_ids.append(b)
            elif block.size > 1:
                self.dense.append(_DenseCone(block, n))
                self.dense_ids.append(b)
        self.m_lp = len(g0)
        self.G = sp.csr_matrix((lp_vals, (lp_rows, lp_cols)), shape=(self.m_lp, n))
        self.GT = self.G.T.tocsr()
        self.g0 = np.asarray(g0, dtype=float)
        self.E, self.d = inst.equality_matrix()
        self.nu = sum(c.size for c in self.dense) + self.m_lp
        scale = [np.abs(self.c).max(initial=0.0), np.abs(self.d).max(initial=0.0),
                 np.abs(self.g0).max(initial=0.0), np.abs(self.E).max(initial=0.0),
                 np.abs(self.G.data).max(initial=0.0)]
        for cone in self.dense:
            scale += [np.abs(cone.a).max(initial=0.0), np.abs(cone.F0).max(initial=0.0)]
        self.tau = 1.0 + max(scale)
        self.norm_c = np.linalg.norm(self.c)
        self.norm_b = math.sqrt(sum(np.linalg.norm(cn.F0) ** 2 for cn in self.dense)
                                + np.linalg.norm(self.g0) ** 2 + np.linalg.norm(self.d) ** 2)

    def adjoint(self, Ws: Sequence[np.ndarray], w: np.ndarray) -> np.ndarray:
        out = self.GT @ w if self.m_lp else np.zeros(self.n)
        for cone, W in zip(self.dense, Ws):
            out = out + cone.adjoint(W)
        return out


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def _max_step(S: np.ndarray, dS: np.ndarray) -> float:
    """Largest alpha with S + alpha dS PSD (S positive definite)."""
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return 0.0
    Linv_dS = scipy.linalg.solve_triangular(L, dS, lower=True)
    T = scipy.linalg.solve_triangular(L, Linv_dS.T, lower=True)
    lam = np.linalg.eigvalsh(_sym(T))[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(s: np.ndarray, ds: np.ndarray) -> float:
    neg = ds < 0
    if not neg.any():
        return math.inf
    return float(np.min(-s[neg] / ds[neg]))


class _Factor:
    """Regularised factorisation of the Schur matrix plus equality coupling.

    M is Jacobi-equilibrated first: its diagonal mixes z/s ratios of active
    LP rows with O(1) moment entries, and a regulariser relative to the
    largest diagonal would swamp the small directions.
    """

    def __init__(self, M: np.ndarray, E: np.ndarray):
        n = M.shape[0]
        diag = np.diag(M).copy()
        floor = max(float(diag.max(initial=0.0)), 1.0) * 1e-300
        self.dscale = np.sqrt(np.maximum(diag, floor))
        Ms = M / np.outer(self.dscale, self.dscale)
        reg = 1e-12
        self.chol = None
        while reg <= 1e-6 * (1 + 1e-9):
            try:
                self.chol = scipy.linalg.cho_factor(Ms + reg * np.eye(n), lower=True, check_finite=True)
                break
            except (np.linalg.LinAlgError, ValueError):
                reg *= 10.0
        if self.chol is None:
            raise np.linalg.LinAlgError("Schur complement factorisation failed")
        self.M = M
        self.E = E
        if E.shape[0]:
            self.MinvET = self._minv(E.T)
            self.K = _sym(E @ self.MinvET)

    def _minv(self, r: np.ndarray) -> np.ndarray:
        d = self.dscale if r.ndim == 1 else self.dscale[:, None]
        return scipy.linalg.cho_solve(self.chol, r / d) / d

    def solve(self, rhs_y: np.ndarray, rhs_eq: np.ndarray, refine: int = 10) -> tuple[np.ndarray, np.ndarray]:
        """Solve [M E'; E 0][dy; w] = [rhs_y; rhs_eq] with iterative refinement."""
        dy, w = self._solve_reg(rhs_y, rhs_eq)
        scale = np.linalg.norm(rhs_y) + np.linalg.norm(rhs_eq)
        prev = math.inf
        for _ in range(refine):
            r1 = rhs_y - self.M @ dy - (self.E.T @ w if self.E.shape[0] else 0.0)
            r2 = rhs_eq - self.E @ dy if self.E.shape[0] else np.zeros(0)
            res = np.linalg.norm(r1) + np.linalg.norm(r2)
            if res <= 1e-15 * scale or res >= 0.5 * prev:
                break
            prev = res
            cy, cw = self._solve_reg(r1, r2)
            dy, w = dy + cy, w + cw
        if log.isEnabledFor(logging.DEBUG):
            r1 = rhs_y - self.M @ dy - (self.E.T @ w if self.E.shape[0] else 0.0)
            log.debug("   kkt res %.2e (rhs %.2e)", np.linalg.norm(r1), scale)
        return dy, w

    def _solve_reg(self, rhs_y: np.ndarray, rhs_eq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Minv_r = self._minv(rhs_y)
        if not self.E.shape[0]:
            return Minv_r, np.zeros(0)
        # redundant rows make K singular; least squares keeps the step consistent
        w = scipy.linalg.lstsq(self.K, self.E @ Minv_r - rhs_eq, cond=1e-13)[0]
        dy = Minv_r - self.MinvET @ w
        return dy, w


def _solve_blockless(prob: _Problem, cfg: SolverConfig) -> SdpSolution:
    n = prob.n
    E, d = prob.E, prob.d
    if E.shape[0]:
        y, *_ = np.linalg.lstsq(E, d, rcond=None)
        eq_res = float(np.linalg.norm(E @ y - d))
    else:
        y, eq_res = np.zeros(n), 0.0
    if eq_res > cfg.feas_tol * (1 + np.linalg.norm(d)):
        status = Status.INFEASIBLE
    else:
        # bounded iff c lies in the row space of E
        if E.shape[0]:
            lam, *_ = np.linalg.lstsq(E.T, prob.c, rcond=None)
            dres = float(np.linalg.norm(E.T @ lam - prob.c))
        else:
            lam, dres = np.zeros(0), float(np.linalg.norm(prob.c))
        status = Status.OPTIMAL if dres <= cfg.feas_tol * (1 + prob.norm_c) else Status.UNBOUNDED
    obj = float(prob.c @ y)
    return SdpSolution(y=y, objective=obj, status=status, iterations=0, duality_gap=0.0,
                       residuals=(0.0, 0.0, eq_res), dual_objective=obj)


def solve(instance: SdpInstance, config: SolverConfig | None = None) -> SdpSolution:
    """Solve ``instance``; never raises for solver failures, see ``status``."""
    cfg = config or SolverConfig()
    instance.validate()
    prob = _Problem(instance)
    n, E, d, c = prob.n, prob.E, prob.d, prob.c

    if prob.nu == 0:
        return _solve_blockless(prob, cfg)

    # an inconsistent equality system can be rejected before iterating
    if E.shape[0]:
        y_ls, *_ = np.linalg.lstsq(E, d, rcond=None)
        if np.linalg.norm(E @ y_ls - d) > cfg.feas_tol * (1 + np.linalg.norm(d)) * 1e2:
            return SdpSolution(y=y_ls, objective=float(c @ y_ls), status=Status.INFEASIBLE, iterations=0,
                               duality_gap=math.inf, residuals=(math.inf, math.inf, float(np.linalg.norm(E @ y_ls - d))))

    tau = prob.tau
    y = np.zeros(n)
    lam = np.zeros(E.shape[0])
    S = [tau * np.eye(cone.size) for cone in prob.dense]
    X = [tau * np.eye(cone.size) for cone in prob.dense]
    s = np.full(prob.m_lp, tau)
    z = np.full(prob.m_lp, tau)

    status = Status.MAX_ITERATIONS
    it = 0
    pobj = dobj = math.nan
    relgap = pinf = dinf = eqinf = math.inf
    best = None
    for it in range(cfg.max_iters + 1):
        Rp = [Sj - cone.value(y) for Sj, cone in zip(S, prob.dense)]
        rp_lp = s - (prob.g0 + prob.G @ y) if prob.m_lp else np.zeros(0)
        req = E @ y - d
        AtX = prob.adjoint(X, z)
        rd = c - AtX - E.T @ lam
        comp = sum(float(np.vdot(Sj, Xj)) for Sj, Xj in zip(S, X)) + float(s @ z)
        mu = comp / prob.nu
        pobj = float(c @ y)
        dobj = float(-sum(np.vdot(cone.F0, Xj) for cone, Xj in zip(prob.dense, X)) - prob.g0 @ z + d @ lam)
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        slack_res = math.sqrt(sum(np.linalg.norm(R) ** 2 for R in Rp) + float(rp_lp @ rp_lp))
        eqinf = float(np.linalg.norm(req)) / (1.0 + np.linalg.norm(d))
        pinf = max(slack_res / (1.0 + prob.norm_b), eqinf)
        dinf = float(np.linalg.norm(rd)) / (1.0 + prob.norm_c)
        if not all(map(math.isfinite, (pobj, dobj, mu, pinf, dinf))):
            status = Status.NUMERICAL_TROUBLE
            break
        log.debug("it=%d pobj=%.10g dobj=%.10g gap=%.2e pinf=%.2e dinf=%.2e mu=%.2e",
                  it, pobj, dobj, relgap, pinf, dinf, mu)
        if relgap <= cfg.gap_tol and pinf <= cfg.feas_tol and dinf <= cfg.feas_tol:
            status = Status.OPTIMAL
            break
        # degenerate faces stall well before mu underflows; remember the best point
        merit = max(relgap / cfg.gap_tol, pinf / cfg.feas_tol, dinf / cfg.feas_tol)
        if best is None or merit < best[0]:
            best = (merit, it, y, X, z, lam, pobj, dobj, relgap, (pinf, dinf, eqinf))
        elif it - best[1] >= 5:
            status = Status.NUMERICAL_TROUBLE
            break
        # improving rays: dual objective diverging with A*(X) + E'lam -> 0 certifies
        # primal infeasibility, and symmetrically for unboundedness.
        if pinf > cfg.feas_tol and dobj > 0:
            ray = float(np.linalg.norm(AtX + E.T @ lam)) / dobj
            if ray < cfg.feas_tol and dobj > 1e6 * (1.0 + prob.norm_c):
                status = Status.INFEASIBLE
                break
        if dinf > cfg.feas_tol and pobj < 0:
            t = -pobj
            hom = [cone.linear(y) for cone in prob.dense]
            min_eig = min([np.linalg.eigvalsh(_sym(H))[0] for H in hom] + ([float((prob.G @ y).min())] if prob.m_lp else []))
            if (min_eig / t > -cfg.feas_tol and np.linalg.norm(E @ y) / t < cfg.feas_tol
                    and t > 1e6 * (1.0 + prob.norm_b)):
                status = Status.UNBOUNDED
                break
        if it == cfg.max_iters:
            status = Status.MAX_ITERATIONS
            break

        try:
            Sinv = [np.linalg.inv(Sj) for Sj in S]
            Sinv = [_sym(Si) for Si in Sinv]
            M = np.zeros((n, n))
            for cone, Xj, Si in zip(prob.dense, X, Sinv):
                M += cone.schur(Xj, Si)
            if prob.m_lp:
                M += (prob.GT.multiply(z / s) @ prob.G).toarray()
            fac = _Factor(M, E)
        except np.linalg.LinAlgError:
            status = Status.NUMERICAL_TROUBLE
            break

        def direction(sigma: float, corr_dense=None, corr_lp=None):
            # T_j = sigma mu S^-1 - X - sym(X Rp S^-1)... folded into the right-hand side
            Ts, ts = [], None
            for j, (Xj, Si, Rj) in enumerate(zip(X, Sinv, Rp)):
                T = sigma * mu * Si - Xj + _sym(Xj @ Rj @ Si)
                if corr_dense is not None:
                    T = T - corr_dense[j]
                Ts.append(T)
            if prob.m_lp:
                ts = sigma * mu / s - z + z * rp_lp / s
                if corr_lp is not None:
                    ts = ts - corr_lp
            else:
                ts = np.zeros(0)
            h = rd - prob.adjoint(Ts, ts)
            dy, w = fac.solve(-h, -req)
            dlam = -w
            dS = [cone.linear(dy) - Rj for cone, Rj in zip(prob.dense, Rp)]
            dX = []
            for j, (Xj, Si, dSj) in enumerate(zip(X, Sinv, dS)):
                base = sigma * mu * Si - Xj - _sym(Xj @ dSj @ Si)
                if corr_dense is not None:
                    base = base - corr_dense[j]
                dX.append(_sym(base))
            if prob.m_lp:
                ds = prob.G @ dy - rp_lp
                dz = sigma * mu / s - z - z * ds / s
                if corr_lp is not None:
                    dz = dz - corr_lp
            else:
                ds = dz = np.zeros(0)
            return dy, dlam, dS, dX, ds, dz

        def steps(dS, dX, ds, dz):
            ap = min([_max_step(Sj, dSj) for Sj, dSj in zip(S, dS)] + [_max_step_lp(s, ds)])
            ad = min([_max_step(Xj, dXj) for Xj, dXj in zip(X, dX)] + [_max_step_lp(z, dz)])
            return ap, ad

        dy, dlam, dS, dX, ds, dz = direction(0.0)
        ap, ad = steps(dS, dX, ds, dz)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = (sum(float(np.vdot(Sj + ap * dSj, Xj + ad * dXj)) for Sj, dSj, Xj, dXj in zip(S, dS, X, dX))
                  + float((s + ap * ds) @ (z + ad * dz))) / prob.nu
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        corr_dense = [_sym(dXj @ dSj @ Si) for dXj, dSj, Si in zip(dX, dS, Sinv)]
        corr_lp = dz * ds / s if prob.m_lp else None
        dy, dlam, dS, dX, ds, dz = direction(sigma, corr_dense, corr_lp)
        ap, ad = steps(dS, dX, ds, dz)
        ap = min(1.0, cfg.step_fraction * ap)
        ad = min(1.0, cfg.step_fraction * ad)
        if ap < 1e-12 and ad < 1e-12:
            status = Status.NUMERICAL_TROUBLE
            break
        y = y + ap * dy
        S = [_sym(Sj + ap * dSj) for Sj, dSj in zip(S, dS)]
        s = s + ap * ds
        X = [_sym(Xj + ad * dXj) for Xj, dXj in zip(X, dX)]
        z = z + ad * dz
        lam = lam + ad * dlam

    residuals = (pinf, dinf, eqinf)
    if status in (Status.NUMERICAL_TROUBLE, Status.MAX_ITERATIONS) and best is not None:
        _, _, y, X, z, lam, pobj, dobj, relgap, residuals = best
    blocks_out: list[np.ndarray] = [None] * len(instance.blocks)  # type: ignore[list-item]
    for b, Xj in zip(prob.dense_ids, X):
        blocks_out[b] = Xj
    for k, b in enumerate(prob.lp_ids):
        blocks_out[b] = np.array([[z[k]]])
    return SdpSolution(
        y=y, objective=pobj, status=status, iterations=it, duality_gap=relgap,
        residuals=residuals, dual_objective=dobj, dual_blocks=blocks_out,
        eq_multipliers=lam,
    )


def certify(instance: SdpInstance, solution: SdpSolution) -> dict:
    """Recompute objective, residuals and block eigenvalues from the instance forms."""
    y = np.asarray(solution.y, dtype=float)
    E, d = instance.equality_matrix()
    eq_res = float(np.linalg.norm(E @ y - d)) if len(d) else 0.0
    min_eigs = []
    for block in instance.blocks:
        F = block.evaluate(y)
        min_eigs.append(float(np.linalg.eigvalsh(F)[0]) if block.size else math.inf)
    report = {
        "status": solution.status.value,
        "objective": float(np.dot(instance.objective, y)),
        "equality_residual": eq_res,
        "block_min_eigenvalues": min_eigs,
        "min_eigenvalue": min(min_eigs, default=math.inf),
    }
    if not instance.blocks and len(d):
        # equality-only instance: best attainable least-squares residual
        y_ls, *_ = np.linalg.lstsq(E, d, rcond=None)
        report["least_squares_residual"] = float(np.linalg.norm(E @ y_ls - d))
    if solution.dual_blocks and all(Z is not None for Z in solution.dual_blocks):
        dual_eigs = [float(np.linalg.eigvalsh(Z)[0]) for Z in solution.dual_blocks]
        report["dual_min_eigenvalues"] = dual_eigs
    return report


# ----------------------------------------------------------------------------
# sparse text dump


def dump_instance(instance: SdpInstance) -> str:
    """Deterministic sparse text form of an instance, one nonzero per line."""
    lines = [f"num_vars {instance.num_vars}", f"blocks {' '.join(str(b.size) for b in instance.blocks)}".rstrip()]
    lines.append("[objective]")
    for v in np.flatnonzero(instance.objective):
        lines.append(f"{v} {float(instance.objective[v])!r}")
    lines.append("[blocks]")
    for b, block in enumerate(instance.blocks):
        if block.constant is not None:
            C = np.asarray(block.constant)
            for i in range(block.size):
                for j in range(i, block.size):
                    if C[i, j] != 0.0:
                        lines.append(f"{b} {i} {j} -1 {float(C[i, j])!r}")
        for (i, j) in sorted(block.entries):
            for v, coef in sorted(block.entries[(i, j)].items()):
                lines.append(f"{b} {i} {j} {v} {float(coef)!r}")
    lines.append("[equalities]")
    for r, row in enumerate(instance.eq_rows):
        for v, coef in sorted(row.items()):
            lines.append(f"{r} {v} {float(coef)!r}")
    lines.append("[rhs]")
    for r, val in enumerate(instance.eq_rhs):
        lines.append(f"{r} {float(val)!r}")
    return "\n".join(lines) + "\n"


def load_instance(text: str) -> SdpInstance:
    section = None
    num_vars = 0
    sizes: list[int] = []
    objective: dict[int, float] = {}
    blocks: list[SdpBlock] = []
    rows: dict[int, dict[int, float]] = {}
    rhs: dict[int, float] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("num_vars"):
            num_vars = int(line.split()[1])
            continue
        if line.startswith("blocks"):
            sizes = [int(t) for t in line.split()[1:]]
            blocks = [SdpBlock(size=k) for k in sizes]
            continue
        if line.startswith("["):
            section = line.strip("[]")
            continue
        parts = line.split()
        if section == "objective":
            objective[int(parts[0])] = float(parts[1])
        elif section == "blocks":
            b, i, j, v = map(int, parts[:4])
            coef = float(parts[4])
            if v < 0:
                block = blocks[b]
                if block.constant is None:
                    block.constant = np.zeros((block.size, block.size))
                block.constant[i, j] = block.constant[j, i] = coef
            else:
                blocks[b].entries.setdefault((i, j), {})[v] = coef
        elif section == "equalities":
            rows.setdefault(int(parts[0]), {})[int(parts[1])] = float(parts[2])
        elif section == "rhs":
            rhs[int(parts[0])] = float(parts[1])
    c = np.zeros(num_vars)
    for v, val in objective.items():
        c[v] = val
    n_rows = max(list(rows) + list(rhs), default=-1) + 1
    return SdpInstance(num_vars=num_vars, objective=c, blocks=blocks,
                       eq_rows=[rows.get(r, {}) for r in range(n_rows)],
                       eq_rhs=[rhs.get(r, 0.0) for r in range(n_rows)])
