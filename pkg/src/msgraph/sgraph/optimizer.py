"""Levenberg-Marquardt over the situational graph.

The graph is compiled into flat arrays: poses (keyframes, markers), walls in
the (azimuth, elevation, distance) chart, and 3-vectors (room and corridor
centers, doorway translations). Factors of one kind are evaluated together by
the batch functions in :mod:`msgraph.sgraph.factors`; the normal equations
keep a fixed sparsity pattern across iterations and are solved with a sparse
LU factorization.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import _kernels
from ..errors import GeometryError, GraphError, LinearSolveFailed, NoGaugeFixed, PoleSingularity
from ..geometry import Pose, SphericalPlane
from . import factors as F
from .config import OptimizerConfig
from .graph import FactorKind, NodeKind, SituationalGraph

log = logging.getLogger(__name__)

POSE, SPH, VEC = "pose", "sph", "vec"
PARAM_TYPE = {
    NodeKind.KEYFRAME: POSE,
    NodeKind.MARKER: POSE,
    NodeKind.WALL: SPH,
    NodeKind.DOORWAY: VEC,
    NodeKind.ROOM: VEC,
    NodeKind.CORRIDOR: VEC,
}
PARAM_DIM = {POSE: 6, SPH: 3, VEC: 3}


def _call(kind, ends, meas):
    if kind is FactorKind.ODOMETRY:
        return F.odometry_batch(*ends[0], *ends[1], *meas)
    if kind is FactorKind.MARKER_OBS:
        return F.marker_obs_batch(*ends[0], *ends[1], *meas)
    if kind is FactorKind.WALL_MARKER:
        return F.wall_marker_batch(ends[0], *ends[1])
    if kind is FactorKind.CORRIDOR:
        return F.corridor_batch(ends[0], ends[1], ends[2], meas)
    if kind is FactorKind.ROOM:
        return F.room_batch(*ends)
    return F.doorway_batch(ends[0], ends[1], meas)


def _retract(ptype, value, delta):
    if ptype == POSE:
        return _kernels.retract_poses(value[0], value[1], np.ascontiguousarray(delta))
    if ptype == SPH:
        return _normalize_sph(value + delta)
    return value + delta


def _normalize_sph(s):
    s = s.copy()
    over = np.abs(s[:, 1]) > math.pi / 2
    if np.any(over):
        # same normal, other side of the pole
        s[over, 0] += math.pi
        s[over, 1] = np.sign(s[over, 1]) * math.pi - s[over, 1]
    s[:, 0] = np.pi - np.mod(np.pi - s[:, 0], 2.0 * np.pi)
    return s


def numeric_blocks(kind, ptypes, ends, meas, step=1e-6):
    """Central-difference Jacobian blocks, one per endpoint."""
    blocks = []
    for e, ptype in enumerate(ptypes):
        dim = PARAM_DIM[ptype]
        N = len(ends[e][0]) if ptype == POSE else len(ends[e])
        cols = []
        for k in range(dim):
            delta = np.zeros((N, dim))
            delta[:, k] = step
            plus = list(ends)
            minus = list(ends)
            plus[e] = _retract(ptype, ends[e], delta)
            minus[e] = _retract(ptype, ends[e], -delta)
            rp = _call(kind, plus, meas)[0]
            rm = _call(kind, minus, meas)[0]
            diff = rp - rm
            if kind is FactorKind.WALL_MARKER:
                diff[:, 0] = np.pi - np.mod(np.pi - diff[:, 0], 2.0 * np.pi)
            cols.append(diff / (2.0 * step))
        blocks.append(np.stack(cols, axis=-1))
    return blocks


@dataclass
class _Group:
    kind: FactorKind
    fids: list
    ptypes: list
    slots: list          # per endpoint: (N,) index into the typed value array
    offsets: list        # per endpoint: (N,) offset into the tangent vector, -1 if fixed
    meas: object
    info: np.ndarray     # (N, d, d)


@dataclass
class State:
    R: np.ndarray
    t: np.ndarray
    sph: np.ndarray
    vec: np.ndarray

    def copy(self):
        return State(self.R.copy(), self.t.copy(), self.sph.copy(), self.vec.copy())


class Problem:
    """Array view of a graph, fixed for the duration of one optimization."""

    def __init__(self, graph: SituationalGraph):
        self.graph = graph
        self.slot = {}
        self.offset = {}
        counts = {POSE: 0, SPH: 0, VEC: 0}
        n = 0
        for nid in sorted(graph.nodes):
            node = graph.nodes[nid]
            ptype = PARAM_TYPE[node.kind]
            self.slot[nid] = (ptype, counts[ptype])
            counts[ptype] += 1
            if node.fixed or not graph.factors_of(nid):
                # isolated nodes have nothing to pull on them; leave them as they are
                self.offset[nid] = -1
            else:
                self.offset[nid] = n
                n += PARAM_DIM[ptype]
        self.dim = n
        self.groups = []
        for kind in FactorKind:
            fids = sorted(graph.factors_of_kind(kind))
            if fids:
                self.groups.append(self._group(kind, fids))
        self._pattern = None

    def _group(self, kind, fids):
        g = self.graph
        first = g.factors[fids[0]]
        arity = len(first.nodes)
        ptypes = [PARAM_TYPE[g.nodes[first.nodes[e]].kind] for e in range(arity)]
        slots = [np.array([self.slot[g.factors[f].nodes[e]][1] for f in fids]) for e in range(arity)]
        offsets = [np.array([self.offset[g.factors[f].nodes[e]] for f in fids]) for e in range(arity)]
        if kind in (FactorKind.ODOMETRY, FactorKind.MARKER_OBS):
            meas = (np.array([g.factors[f].measurement.R for f in fids]),
                    np.array([g.factors[f].measurement.t for f in fids]))
        elif kind in (FactorKind.CORRIDOR, FactorKind.DOORWAY_ROOM):
            meas = np.array([g.factors[f].measurement for f in fids])
        else:
            meas = None
        info = np.array([g.factors[f].information for f in fids])
        return _Group(kind, fids, ptypes, slots, offsets, meas, info)

    # -- state ------------------------------------------------------------

    def initial_state(self) -> State:
        R, t, sph, vec = [], [], [], []
        for nid in sorted(self.graph.nodes):
            node = self.graph.nodes[nid]
            ptype = PARAM_TYPE[node.kind]
            if ptype == POSE:
                R.append(node.value.R)
                t.append(node.value.t)
            elif ptype == SPH:
                sph.append(node.value.vector())
            elif node.kind is NodeKind.DOORWAY:
                vec.append(node.value.t)
            else:
                vec.append(node.value)
        return State(np.array(R).reshape(-1, 3, 3), np.array(t).reshape(-1, 3),
                     np.array(sph).reshape(-1, 3), np.array(vec).reshape(-1, 3))

    def write_back(self, state: State) -> None:
        g = self.graph
        for nid, (ptype, i) in self.slot.items():
            node = g.nodes[nid]
            if self.offset[nid] < 0:
                continue
            if ptype == POSE:
                g.set_value(nid, Pose(state.R[i], state.t[i]))
            elif ptype == SPH:
                g.set_value(nid, SphericalPlane.from_vector(state.sph[i]))
            elif node.kind is NodeKind.DOORWAY:
                g.set_value(nid, Pose(node.value.R, state.vec[i]))
            else:
                g.set_value(nid, state.vec[i].copy())

    def retract(self, state: State, delta: np.ndarray) -> State:
        out = state.copy()
        for ptype, arr in ((POSE, None), (SPH, out.sph), (VEC, out.vec)):
            idx, off = self._free[ptype]
            if not len(idx):
                continue
            d = delta[off[:, None] + np.arange(PARAM_DIM[ptype])]
            if ptype == POSE:
                R, t = _kernels.retract_poses(np.ascontiguousarray(out.R[idx]),
                                              np.ascontiguousarray(out.t[idx]), d)
                out.R[idx] = R
                out.t[idx] = t
            elif ptype == SPH:
                arr[idx] = _normalize_sph(arr[idx] + d)
            else:
                arr[idx] = arr[idx] + d
        return out

    @property
    def _free(self):
        if not hasattr(self, "_free_cache"):
            cache = {POSE: ([], []), SPH: ([], []), VEC: ([], [])}
            for nid, (ptype, i) in self.slot.items():
                if self.offset[nid] >= 0:
                    cache[ptype][0].append(i)
                    cache[ptype][1].append(self.offset[nid])
            self._free_cache = {k: (np.array(a, dtype=int), np.array(b, dtype=int)) for k, (a, b) in cache.items()}
        return self._free_cache

    # -- evaluation -------------------------------------------------------

    def _ends(self, grp: _Group, state: State):
        out = []
        for ptype, idx in zip(grp.ptypes, grp.slots):
            if ptype == POSE:
                out.append((np.ascontiguousarray(state.R[idx]), np.ascontiguousarray(state.t[idx])))
            elif ptype == SPH:
                out.append(np.ascontiguousarray(state.sph[idx]))
            else:
                out.append(np.ascontiguousarray(state.vec[idx]))
        return out

    def evaluate(self, state: State, method: str = "analytic", step: float = 1e-6):
        """Residuals and Jacobian blocks per group; ``ok`` False on a chart singularity."""
        results = []
        ok = True
        for grp in self.groups:
            ends = self._ends(grp, state)
            r, J, good = _call(grp.kind, ends, grp.meas)
            if method == "numeric":
                J = numeric_blocks(grp.kind, grp.ptypes, ends, grp.meas, step)
            if not np.all(good) or not np.all(np.isfinite(r)):
                ok = False
            results.append((r, J))
        return results, ok

    def cost(self, results) -> float:
        total = 0.0
        for grp, (r, _) in zip(self.groups, results):
            total += float(np.einsum("ni,nij,nj->", r, grp.info, r))
        return total

    def _build_pattern(self, results):
        rows, cols = [], []
        for grp, (_, J) in zip(self.groups, results):
            for e, off_e in enumerate(grp.offsets):
                ke = J[e].shape[2]
                for f, off_f in enumerate(grp.offsets):
                    kf = J[f].shape[2]
                    mask = (off_e >= 0) & (off_f >= 0)
                    rr = off_e[:, None, None] + np.arange(ke)[None, :, None]
                    cc = off_f[:, None, None] + np.arange(kf)[None, None, :]
                    rr, cc = np.broadcast_arrays(rr, cc)
                    rows.append(np.where(mask[:, None, None], rr, -1).ravel())
                    cols.append(np.where(mask[:, None, None], cc, -1).ravel())
        rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
        cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
        valid = rows >= 0
        n = self.dim
        keys = rows[valid].astype(np.int64) * n + cols[valid]
        uniq, inv = np.unique(keys, return_inverse=True)
        urow, ucol = uniq // n, uniq % n
        indptr = np.searchsorted(urow, np.arange(n + 1))
        diag_keys = np.arange(n, dtype=np.int64) * (n + 1)
        diag_pos = np.searchsorted(uniq, diag_keys)
        has_diag = (diag_pos < len(uniq)) & (uniq[np.minimum(diag_pos, len(uniq) - 1)] == diag_keys)
        self._pattern = (valid, inv, len(uniq), ucol.astype(np.int32), indptr.astype(np.int32),
                         diag_pos, has_diag)

    def normal_equations(self, results):
        """Hessian approximation ``J^T L J`` (CSC, symmetric) and gradient ``J^T L r``."""
        if self._pattern is None:
            self._build_pattern(results)
        valid, inv, nnz, ucol, indptr, _, _ = self._pattern
        vals = []
        g = np.zeros(self.dim)
        for grp, (r, J) in zip(self.groups, results):
            Lr = np.einsum("nij,nj->ni", grp.info, r)
            LJ = [np.einsum("nij,njk->nik", grp.info, Jf) for Jf in J]
            for e, off_e in enumerate(grp.offsets):
                ke = J[e].shape[2]
                ge = np.einsum("nji,nj->ni", J[e], Lr)
                free = off_e >= 0
                idx = (off_e[free, None] + np.arange(ke)).ravel()
                g += np.bincount(idx, weights=ge[free].ravel(), minlength=self.dim)
                for f in range(len(grp.offsets)):
                    vals.append(np.einsum("nji,njk->nik", J[e], LJ[f]).ravel())
        vals = np.concatenate(vals)[valid] if vals else np.zeros(0)
        data = np.bincount(inv, weights=vals, minlength=nnz)
        # CSR of a symmetric matrix doubles as its CSC
        H = sp.csc_matrix((data, ucol, indptr), shape=(self.dim, self.dim))
        return H, g

    def diagonal_positions(self):
        return self._pattern[5], self._pattern[6]


@dataclass
class OptimizeReport:
    iterations: int
    initial_cost: float
    final_cost: float
    converged: bool
    cost_trace: list = field(default_factory=list)
    gradient_norm: float = float("nan")
    message: str = ""

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "initial_cost": self.initial_cost,
                "final_cost": self.final_cost, "converged": self.converged,
                "cost_trace": list(self.cost_trace), "gradient_norm": self.gradient_norm,
                "message": self.message}


def _check_gauge(graph: SituationalGraph):
    fixed = graph.fixed_keyframes()
    if len(fixed) == 0:
        raise NoGaugeFixed("no keyframe is fixed; fix exactly one to remove the gauge freedom")
    if len(fixed) > 1:
        raise GraphError(f"expected exactly one fixed keyframe, found {len(fixed)}")


def _solve(H, g, lam, diag_pos, has_diag):
    A = H.copy()
    A.data[diag_pos[has_diag]] *= 1.0 + lam
    # SPD system: minimum degree on A + A^T with diagonal pivots keeps fill low
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options={"SymmetricMode": True})
    return lu.solve(-g)


def optimize(graph: SituationalGraph, cfg: OptimizerConfig | None = None) -> OptimizeReport:
    """Minimize the sum of Mahalanobis costs over every non-fixed node.

    Damping multiplies the Hessian diagonal by ``1 + lambda``; lambda grows by
    ``cfg.lambda_up`` on a rejected step and shrinks by ``cfg.lambda_down`` on
    an accepted one. Node values in ``graph`` are replaced by the result.
    """
    cfg = cfg or OptimizerConfig()
    _check_gauge(graph)
    prob = Problem(graph)
    state = prob.initial_state()
    results, ok = prob.evaluate(state, cfg.jacobian)
    if not ok:
        raise PoleSingularity("a factor is singular at the initial estimate")
    cost = prob.cost(results)
    report = OptimizeReport(0, cost, cost, False, [cost])
    if prob.dim == 0:
        report.converged = True
        report.gradient_norm = 0.0
        report.message = "no free variables"
        return report

    lam = cfg.lambda_init
    H, g = prob.normal_equations(results)
    diag_pos, has_diag = prob.diagonal_positions()
    if not np.all(has_diag) or np.any(H.data[diag_pos] <= 0.0):
        raise LinearSolveFailed("some variables are not constrained by any factor")

    gnorm = float(np.abs(g).max())
    it = 0
    while True:
        if gnorm < cfg.g_tol:
            report.converged = True
            report.message = "gradient below g_tol"
            break
        if it >= cfg.max_iters:
            report.message = "max_iters reached"
            break
        it += 1
        accepted = False
        while not accepted:
            try:
                delta = _solve(H, g, lam, diag_pos, has_diag)
                good = np.all(np.isfinite(delta))
            except RuntimeError:
                good = False
            if good:
                trial = prob.retract(state, delta)
                t_results, t_ok = prob.evaluate(trial, cfg.jacobian)
                t_cost = prob.cost(t_results) if t_ok else math.inf
            else:
                t_cost = math.inf
            if t_cost <= cost:
                accepted = True
            else:
                lam *= cfg.lambda_up
                if lam > cfg.lambda_max:
                    if not good:
                        raise LinearSolveFailed("normal equations stayed singular under damping")
                    report.message = "damping limit reached"
                    break
        if not accepted:
            break
        decrease = cost - t_cost
        state, results, cost = trial, t_results, t_cost
        report.cost_trace.append(cost)
        lam = max(lam * cfg.lambda_down, 1e-15)
        H, g = prob.normal_equations(results)
        gnorm = float(np.abs(g).max())
        if cost == 0.0 or decrease <= cfg.f_tol * (cost + decrease):
            report.converged = True
            report.message = "relative cost decrease below f_tol"
            break

    report.iterations = it
    report.final_cost = cost
    report.gradient_norm = gnorm
    prob.write_back(state)
    log.debug("optimize: %s after %d iterations, cost %.6g -> %.6g",
              report.message, it, report.initial_cost, cost)
    return report


# ---------------------------------------------------------------------------
# per-factor helpers
# ---------------------------------------------------------------------------

def _factor_inputs(graph: SituationalGraph, fid: int):
    f = graph.factors[fid]
    ptypes, ends = [], []
    for nid in f.nodes:
        node = graph.nodes[nid]
        ptype = PARAM_TYPE[node.kind]
        ptypes.append(ptype)
        if ptype == POSE:
            ends.append((np.ascontiguousarray(node.value.R)[None], np.ascontiguousarray(node.value.t)[None]))
        elif ptype == SPH:
            ends.append(node.value.vector()[None])
        elif node.kind is NodeKind.DOORWAY:
            ends.append(np.array(node.value.t)[None])
        else:
            ends.append(np.array(node.value, dtype=np.float64)[None])
    m = f.measurement
    if isinstance(m, Pose):
        meas = (np.ascontiguousarray(m.R)[None], np.ascontiguousarray(m.t)[None])
    elif m is None:
        meas = None
    else:
        meas = np.asarray(m)[None]
    return f.kind, ptypes, ends, meas


def factor_residual(graph: SituationalGraph, fid: int) -> np.ndarray:
    kind, _, ends, meas = _factor_inputs(graph, fid)
    r, _, ok = _call(kind, ends, meas)
    if not ok[0]:
        raise GeometryError(f"factor {fid} is singular at the current estimate")
    return r[0]


def jacobian(graph: SituationalGraph, fid: int, method: str = "analytic", step: float = 1e-6) -> list:
    """Jacobian blocks of factor ``fid``, one per connected node (fixed ones included)."""
    kind, ptypes, ends, meas = _factor_inputs(graph, fid)
    if method == "numeric":
        blocks = numeric_blocks(kind, ptypes, ends, meas, step)
    else:
        blocks = _call(kind, ends, meas)[1]
    return [b[0] for b in blocks]


def total_cost(graph: SituationalGraph) -> float:
    prob = Problem(graph)
    results, ok = prob.evaluate(prob.initial_state())
    if not ok:
        raise GeometryError("a factor is singular at the current estimate")
    return prob.cost(results)
