"""Dictionary-restricted minimal-norm interpolation by linear programming.

Over a finite dictionary of ReLU atoms ``relu(w^T x + b)`` the problem

    minimize   sum_j |a_j|
    subject to |sum_j a_j relu(w_j^T x_i + b_j) + v^T x_i + c - y_i| <= eps

is a linear program. Its value upper-bounds the minimal R-norm over all
networks; :func:`parity_lower_bound` gives an analytic bound from below for
parity targets.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterator, NamedTuple, Sequence

import numpy as np
import highspy
from scipy import sparse

from .cube import signed_directions
from .nets import OutsideDomainWarning, TwoLayerNet, _orient

SRC_DIFFERENCE, SRC_HYPERCUBE, SRC_RANDOM, SRC_EXPLICIT, SRC_INJECTED = range(5)
SOURCE_NAMES = ("difference", "hypercube", "random", "explicit", "injected")
STATUSES = ("optimal", "infeasible", "iteration-limit")

_BLOCK = 1 << 22


class DictionaryAtom(NamedTuple):
    w: np.ndarray
    b: float


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Finite set of ReLU atoms with unit directions and biases in ``[-sqrt d, sqrt d]``."""

    W: np.ndarray
    b: np.ndarray
    source: np.ndarray

    def __post_init__(self) -> None:
        W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        src = np.asarray(self.source, dtype=np.int8).reshape(-1)
        if W.shape[0] != b.shape[0] or src.shape[0] != b.shape[0]:
            raise ValueError("inconsistent dictionary arrays")
        if W.shape[0] and np.max(np.abs(np.linalg.norm(W, axis=1) - 1.0)) > 1e-9:
            raise ValueError("dictionary directions must have unit norm")
        if W.shape[0] and np.max(np.abs(b)) > math.sqrt(W.shape[1]) * (1 + 1e-12):
            raise ValueError("dictionary biases must lie in [-sqrt(d), sqrt(d)]")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "source", src)

    @property
    def d(self) -> int:
        return int(self.W.shape[1])

    def __len__(self) -> int:
        return int(self.b.shape[0])

    def __iter__(self) -> Iterator[DictionaryAtom]:
        for w, b in zip(self.W, self.b):
            yield DictionaryAtom(w.copy(), float(b))

    @property
    def atoms(self) -> list[DictionaryAtom]:
        return list(self)

    def subset(self, idx: np.ndarray) -> "Dictionary":
        return Dictionary(self.W[idx], self.b[idx], self.source[idx])

    @staticmethod
    def union(*dicts: "Dictionary") -> "Dictionary":
        W = np.vstack([x.W for x in dicts])
        b = np.concatenate([x.b for x in dicts])
        s = np.concatenate([x.source for x in dicts])
        return _dedupe(W, b, s)


def _xy(data: Any) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, tuple):
        X, y = data
    else:
        X, y = data.points, data.labels
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ValueError("points and labels differ in length")
    return X, y


def _dedupe(W: np.ndarray, b: np.ndarray, src: np.ndarray) -> Dictionary:
    if b.size == 0:
        return Dictionary(W.reshape(0, W.shape[1]), b, src)
    keys = np.round(np.hstack([W, b[:, None]]), 11) + 0.0
    _, first = np.unique(keys, axis=0, return_index=True)
    first = np.sort(first)
    return Dictionary(W[first], b[first], src[first])


def _unit_rows(D: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(D, axis=1)
    D = D[n > 1e-12]
    return D / np.linalg.norm(D, axis=1, keepdims=True)


def _dedupe_directions(U: np.ndarray, src: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keys = np.round(U, 11) + 0.0
    _, first = np.unique(keys, axis=0, return_index=True)
    first = np.sort(first)
    return U[first], src[first]


def build_dictionary(data: Any, spec: dict, seed: int | None = None) -> Dictionary:
    """Assemble a deduplicated atom dictionary for a dataset.

    Parameters
    ----------
    data : Dataset or (X, y)
    spec : dict
        Enabled strategies:

        ``differences``
            ``"all"`` for every pair of distinct points, or an integer number
            of sampled pairs; directions ``(x_i - x_j)/|x_i - x_j|``.
        ``max_differences``
            Keep at most this many distinct difference directions.
        ``hypercube``
            ``True`` for all ``2^(d-1)`` signed directions ``w/sqrt(d)`` (sampled
            4096 when ``d > 12``) or an integer number to sample.
        ``random``
            Number of Gaussian unit directions.
        ``directions``
            Explicit array of directions.
        ``inject``
            A network or list of networks whose atoms are added as they are.
        ``biases``
            ``"data"`` (default) puts a kink at every datum, ``b = -u^T x_i``;
            ``"none"`` adds no data biases.
        ``grid``
            Number of additional uniformly spaced biases in ``[-sqrt d, sqrt d]``.
        ``both_signs``
            Also include ``-u`` for every direction (default true).
        ``seed``
            Seed for sampling; overridden by the ``seed`` argument.
    seed : int, optional

    Returns
    -------
    Dictionary
    """
    if not isinstance(spec, dict):
        raise ValueError("dictionary spec must be a dict")
    strategies = ("differences", "hypercube", "random", "directions", "inject")
    if not any(spec.get(s) for s in strategies):
        raise ValueError("dictionary spec enables no strategy")
    X, _ = _xy(data)
    n, d = X.shape
    sd = math.sqrt(d)
    seed = spec.get("seed", 0) if seed is None else seed
    rng = np.random.default_rng(seed)
    Xu = np.unique(X, axis=0) if n else X

    blocks, srcs = [], []
    nd = spec.get("differences")
    if nd and Xu.shape[0] >= 2:
        parts = []
        if nd == "all":
            for i in range(Xu.shape[0] - 1):
                parts.append(_unit_rows(Xu[i + 1:] - Xu[i]))
        else:
            i = rng.integers(0, Xu.shape[0], size=int(nd))
            j = rng.integers(0, Xu.shape[0], size=int(nd))
            parts.append(_unit_rows(Xu[i] - Xu[j]))
        D = np.vstack(parts)
        D = D * _orient(D)[:, None]
        D, _ = _dedupe_directions(D, np.zeros(D.shape[0], dtype=np.int8))
        cap = spec.get("max_differences")
        if cap is not None:
            D = D[: int(cap)]
        blocks.append(D)
        srcs.append(np.full(D.shape[0], SRC_DIFFERENCE, dtype=np.int8))
    hc = spec.get("hypercube")
    if hc:
        if hc is True and d <= 12:
            S = signed_directions(d)
        else:
            S = rng.choice([-1.0, 1.0], size=(4096 if hc is True else int(hc), d))
        blocks.append(S / sd)
        srcs.append(np.full(S.shape[0], SRC_HYPERCUBE, dtype=np.int8))
    nr = int(spec.get("random") or 0)
    if nr:
        G = rng.standard_normal((nr, d))
        blocks.append(G / np.linalg.norm(G, axis=1, keepdims=True))
        srcs.append(np.full(nr, SRC_RANDOM, dtype=np.int8))
    if spec.get("directions") is not None:
        E = _unit_rows(np.atleast_2d(np.asarray(spec["directions"], dtype=np.float64)))
        blocks.append(E)
        srcs.append(np.full(E.shape[0], SRC_EXPLICIT, dtype=np.int8))

    atoms_W, atoms_b, atoms_s = [np.zeros((0, d))], [np.zeros(0)], [np.zeros(0, dtype=np.int8)]
    if blocks:
        U = np.vstack(blocks)
        src = np.concatenate(srcs)
        if spec.get("both_signs", True):
            U = np.vstack([U, -U])
            src = np.concatenate([src, src])
        U, src = _dedupe_directions(U, src)
        bias_mode = spec.get("biases", "data")
        if bias_mode not in ("data", "none"):
            raise ValueError("biases must be 'data' or 'none'")
        grid = np.linspace(-sd, sd, int(spec["grid"])) if spec.get("grid") else np.zeros(0)
        for s in range(0, U.shape[0], max(1, _BLOCK // max(1, Xu.shape[0]))):
            Ub, sb = U[s:s + _BLOCK // max(1, Xu.shape[0])], src[s:s + _BLOCK // max(1, Xu.shape[0])]
            cols = []
            if bias_mode == "data" and Xu.shape[0]:
                P = -(Xu @ Ub.T)  # (n, G)
                cols.append(P.T)
            if grid.size:
                cols.append(np.tile(grid, (Ub.shape[0], 1)))
            if not cols:
                continue
            B = np.clip(np.hstack(cols), -sd, sd)
            B = np.round(B, 12) + 0.0
            # distinct biases per direction
            Bs = np.sort(B, axis=1)
            keep = np.concatenate([np.ones((Bs.shape[0], 1), dtype=bool),
                                   np.diff(Bs, axis=1) > 1e-12], axis=1)
            gi, bi = np.nonzero(keep)
            atoms_W.append(Ub[gi])
            atoms_b.append(Bs[gi, bi])
            atoms_s.append(sb[gi])
    inject = spec.get("inject")
    if inject is not None:
        nets = [inject] if isinstance(inject, TwoLayerNet) else list(inject)
        for net in nets:
            if net.d != d:
                raise ValueError("injected network dimension does not match the data")
            ok = np.abs(net.b) <= sd * (1 + 1e-12)
            atoms_W.append(net.W[ok])
            atoms_b.append(net.b[ok])
            atoms_s.append(np.full(int(ok.sum()), SRC_INJECTED, dtype=np.int8))
    return _dedupe(np.vstack(atoms_W), np.concatenate(atoms_b), np.concatenate(atoms_s))


@dataclass(frozen=True, eq=False)
class VPInstance:
    """Dictionary-restricted interpolation problem.

    ``eps = 0`` asks for exact interpolation, ``eps > 0`` for the tube
    ``|g(x_i) - y_i| <= eps``. With ``affine_free`` the network carries a free
    affine part ``v^T x + c``.
    """

    data: Any
    eps: float
    atoms: Dictionary
    affine_free: bool = True

    def __post_init__(self) -> None:
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        X, _ = _xy(self.data)
        if X.shape[0] and np.max(np.einsum("ij,ij->i", X, X)) > X.shape[1] * (1 + 1e-9):
            warnings.warn("data points outside the ball of radius sqrt(d); dictionary biases "
                          "are limited to [-sqrt(d), sqrt(d)]", OutsideDomainWarning, stacklevel=3)
        if X.shape[1] != self.atoms.d:
            raise ValueError("dictionary dimension does not match the data")


@dataclass
class VPSolution:
    """LP solution. ``objective`` is ``sum |a|`` of ``net`` and upper-bounds the true value."""

    net: TwoLayerNet
    objective: float
    status: str
    support_size: int
    residual: float
    rounds: int = 0
    columns: int = 0
    message: str = ""


def _features(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    F = X @ W.T
    F += b
    np.maximum(F, 0.0, out=F)
    return F


def _price(X: np.ndarray, lam: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``lam^T relu(X W^T + b)`` for every atom, in blocks."""
    out = np.empty(W.shape[0])
    step = max(1, _BLOCK // max(1, X.shape[0]))
    for s in range(0, W.shape[0], step):
        out[s:s + step] = lam @ _features(X, W[s:s + step], b[s:s + step])
    return out


def _reduce_columns(X: np.ndarray, dic: Dictionary, affine_free: bool):
    """Drop atoms that cannot help: dead on the data, affine on the data, or antipodal copies."""
    W, b, src = dic.W, dic.b, dic.source
    if W.shape[0] == 0:
        return W, b, src
    if affine_free:
        s = _orient(W)
        # an atom and its antipode differ by an affine function; keep one per pair
        Wc, bc = W * s[:, None], b * s
        keys = np.round(np.hstack([Wc, bc[:, None]]), 11) + 0.0
        # prefer injected atoms as representatives so feasible points stay in the set
        order = np.lexsort((np.arange(W.shape[0]), src != SRC_INJECTED))
        _, first = np.unique(keys[order], axis=0, return_index=True)
        keep = np.sort(order[first])
        W, b, src = W[keep], b[keep], src[keep]
    lo = np.full(W.shape[0], np.inf)
    hi = np.full(W.shape[0], -np.inf)
    step = max(1, _BLOCK // max(1, X.shape[0]))
    for s in range(0, W.shape[0], step):
        P = X @ W[s:s + step].T + b[s:s + step]
        lo[s:s + step] = P.min(axis=0)
        hi[s:s + step] = P.max(axis=0)
    useful = hi > 1e-12
    if affine_free:
        useful &= lo < -1e-12
    return W[useful], b[useful], src[useful]


class _RestrictedLP:
    """Restricted master LP kept in one HiGHS model so that column additions warm start.

    Column layout: affine part, tube residuals, elastic slacks ``s+ - s-``,
    then ``a+`` and ``-a-`` pairs for every added atom.
    """

    def __init__(self, aff: np.ndarray, ys: np.ndarray, rb: np.ndarray, M: float):
        n = ys.size
        h = highspy.Highs()
        for key, val in (("output_flag", False), ("threads", 1),
                         ("primal_feasibility_tolerance", 1e-10),
                         ("dual_feasibility_tolerance", 1e-10),
                         # Dantzig pricing is several times faster on these degenerate LPs
                         ("simplex_dual_edge_weight_strategy", 0)):
            h.setOptionValue(key, val)
        h.addRows(n, ys, ys, 0, np.zeros(n + 1, dtype=np.int32), np.zeros(0, dtype=np.int32),
                  np.zeros(0))
        inf = highspy.kHighsInf
        na = aff.shape[1]
        eye = sparse.identity(n, format="csc")
        self.h, self.n, self.na, self.m = h, n, na, 0
        self._add(aff, np.zeros(na), np.full(na, -inf), np.full(na, inf))
        self._add(eye, np.zeros(n), -rb, rb)
        self._add(sparse.hstack([eye, -eye], format="csc"), np.full(2 * n, M), np.zeros(2 * n),
                  np.full(2 * n, inf))
        self.slack0 = na + n

    def _add(self, A, cost, lo, hi) -> None:
        A = sparse.csc_matrix(A)
        if A.shape[1]:
            self.h.addCols(A.shape[1], cost, lo, hi, A.nnz, A.indptr.astype(np.int32),
                           A.indices.astype(np.int32), A.data)

    def add_atoms(self, F: np.ndarray) -> None:
        m = F.shape[1]
        A = np.empty((F.shape[0], 2 * m))
        A[:, 0::2], A[:, 1::2] = F, -F
        self._add(A, np.ones(2 * m), np.zeros(2 * m), np.full(2 * m, highspy.kHighsInf))
        self.m += m

    def set_penalty(self, M: float) -> None:
        idx = np.arange(self.slack0, self.slack0 + 2 * self.n, dtype=np.int32)
        self.h.changeColsCost(idx.size, idx, np.full(idx.size, M))

    def run(self, solver: str) -> str:
        h = self.h
        if solver == "ipm":
            h.setOptionValue("solver", "ipm")
        else:
            h.setOptionValue("solver", "simplex")
            h.setOptionValue("simplex_strategy", 1 if solver == "dual" else 4)
        h.run()
        st = h.getModelStatus()
        if st == highspy.HighsModelStatus.kOptimal:
            return "optimal"
        if st in (highspy.HighsModelStatus.kIterationLimit, highspy.HighsModelStatus.kTimeLimit):
            return "iteration-limit"
        return "infeasible"

    def solution(self) -> tuple[np.ndarray, np.ndarray]:
        sol = self.h.getSolution()
        return np.asarray(sol.col_value), np.asarray(sol.row_dual)


def solve_vp(inst: VPInstance, *, direct_limit: int = 4_000_000, batch: int | None = None,
             init: int | None = None, max_rounds: int = 500, price_tol: float = 1e-7,
             penalty: float = 1e4, max_penalty: float = 1e10, seed_injected: bool = True) -> VPSolution:
    """Solve the dictionary LP for exact or tube interpolation.

    The LP has one equality row per distinct data point,
    ``F (a+ - a-) + X v + c + r = y`` with tube variables
    ``|r_i| <= eps`` (fixed at zero for ``eps = 0``); rows are divided by
    ``max(1, |y_i|)``. It is solved with HiGHS simplex, so the solution is
    basic and the run is deterministic.

    In the affine-free setting an atom and its antipode span the same
    functions modulo affine terms, so one of each pair is kept; atoms that are
    zero or affine on every data point are dropped. Large dictionaries are
    handled by column generation: a restricted LP is solved, the row duals
    ``lam`` price every atom by ``|F_j^T lam|``, and atoms with price above 1
    enter, until none remains. The restricted LP lives in one model, so
    after the first solve (dual simplex when every column is present,
    interior point with crossover otherwise) each round restarts primal
    simplex from the previous basis. Elastic slack columns with cost
    ``penalty`` keep restricted problems feasible; slack left at
    ``max_penalty`` means the full LP is infeasible.
    """
    X0, y0 = _xy(inst.data)
    n0, d = X0.shape
    if len(inst.atoms) == 0:
        raise ValueError("dictionary is empty")
    eps = float(inst.eps)
    if n0 == 0:
        net = TwoLayerNet(d)
        return VPSolution(net, 0.0, "optimal", 0, 0.0)
    XY = np.unique(np.hstack([X0, y0[:, None]]), axis=0)
    X, y = XY[:, :d], XY[:, d]
    n = X.shape[0]
    scale = np.maximum(1.0, np.abs(y))
    Xs = X / scale[:, None]
    ys = y / scale
    W, b, src = _reduce_columns(X, inst.atoms, inst.affine_free)
    K = W.shape[0]

    aff = np.hstack([Xs, 1.0 / scale[:, None]]) if inst.affine_free else np.zeros((n, 0))
    rb = eps / scale

    if K == 0:
        cols = np.zeros(0, dtype=np.int64)
    elif K * n <= direct_limit:
        cols = np.arange(K)
    else:
        # seed with injected atoms and the atoms best aligned with the affine residual
        if inst.affine_free:
            coef, *_ = np.linalg.lstsq(aff, ys, rcond=None)
            r0 = ys - aff @ coef
        else:
            r0 = ys.copy()
        score = np.abs(_price(X, r0 / scale, W, b))
        init = min(K, init or max(2 * n, 200))
        top = np.argsort(-score, kind="stable")[:init]
        cols = np.union1d(top, np.flatnonzero(src == SRC_INJECTED)) if seed_injected else top
    batch = batch or max(n, 200)

    lp = _RestrictedLP(aff, ys, rb, penalty)
    step = max(1, _BLOCK // n)
    for s in range(0, cols.size, step):
        lp.add_atoms(_features(X, W[cols[s:s + step]], b[cols[s:s + step]]) / scale[:, None])
    solver = "dual" if cols.size == K else "ipm"
    M, rounds, status, msg = penalty, 0, "optimal", ""
    while True:
        status = lp.run(solver)
        solver = "primal"
        rounds += 1
        if status != "optimal":
            msg = lp.h.modelStatusToString(lp.h.getModelStatus())
            break
        x, lam = lp.solution()
        if cols.size < K:
            price = np.abs(_price(X, lam / scale, W, b))
            price[cols] = 0.0
            viol = np.flatnonzero(price > 1.0 + price_tol)
            if viol.size:
                if rounds >= max_rounds:
                    status, msg = "iteration-limit", "column generation round limit"
                    break
                add = viol[np.argsort(-price[viol], kind="stable")[:batch]]
                lp.add_atoms(_features(X, W[add], b[add]) / scale[:, None])
                cols = np.concatenate([cols, add])
                continue
        slack = x[lp.slack0:lp.slack0 + 2 * n]
        if np.max(slack, initial=0.0) > 1e-9:
            if M >= max_penalty:
                status, msg = "infeasible", "dictionary and affine part cannot fit the data"
                break
            M *= 100.0
            lp.set_penalty(M)
            continue
        break

    if status != "optimal":
        net = TwoLayerNet(d)
        resid = float(np.max(np.abs(y0) - eps, initial=0.0))
        return VPSolution(net, math.nan, status, 0, max(0.0, resid), rounds, int(cols.size), msg)
    m = cols.size
    ab = x[lp.slack0 + 2 * n:]
    a = ab[0::2] - ab[1::2]
    v = x[:d] if inst.affine_free else np.zeros(d)
    c = float(x[d]) if inst.affine_free else 0.0
    amax = float(np.max(np.abs(a), initial=0.0))
    nz = np.abs(a) > 1e-12 * max(1.0, amax)
    # report atoms in dictionary order
    order = np.argsort(cols[nz], kind="stable")
    sel = cols[nz][order]
    net = TwoLayerNet(d, a[nz][order], W[sel], b[sel], v, c)
    resid = max(0.0, float(np.max(np.abs(net(X0) - y0))) - eps)
    support = int(np.count_nonzero(np.abs(a) >= 1e-9))
    return VPSolution(net, net.l1_mass, status, support, resid, rounds, int(m), msg)


class LowerBound(NamedTuple):
    value: float
    valid: bool


def parity_lower_bound(d: int, l2_error: float) -> LowerBound:
    """``(1 - err) d / 8``: lower bound on the R-norm of any ``g`` with ``|g - chi| <= err``.

    The bound follows from every single neuron having correlation at most
    ``8/d`` with full parity. For ``d < 8`` no bound is claimed and the value
    is 0 with ``valid=False``.
    """
    if d < 8:
        return LowerBound(0.0, False)
    if not 0 <= l2_error < 1:
        raise ValueError("l2_error must lie in [0, 1)")
    return LowerBound((1.0 - l2_error) * d / 8.0, True)
