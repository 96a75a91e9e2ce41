"""Finite two-layer ReLU networks with a skip connection.

A network on ``R^d`` is

    g(x) = sum_j a_j * max(0, w_j^T x + b_j) + v^T x + c

with unit input weights ``w_j``. Two bias regimes are supported: ``"R"`` with
``|b| <= sqrt(d)`` and a free affine part, and ``"V2"`` with ``|b| <= 2 sqrt(d)``
and no affine part. The evaluation domain is the ball of radius ``sqrt(d)``.
"""

from __future__ import annotations

import json
import math
import warnings
from functools import cached_property
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np

UNIT_TOL = 1e-9
MERGE_TOL = 1e-9
REGIMES = ("R", "V2")

# dense evaluation works on blocks of at most this many point-neuron products
_BLOCK = 1 << 22


class OutsideDomainWarning(RuntimeWarning):
    """Raised when a network is evaluated outside the ball of radius sqrt(d)."""


class Neuron(NamedTuple):
    a: float
    w: np.ndarray
    b: float


def _as_vector(x: Any, d: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.shape[0] != d:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {d}")
    return arr


class TwoLayerNet:
    """Immutable finite-width ReLU network with skip connection.

    Parameters
    ----------
    d : int
        Input dimension.
    a : array_like, shape (m,)
        Output coefficients.
    W : array_like, shape (m, d)
        Input weights. Rows of non-unit norm are rescaled into the bias and
        coefficient (``a*phi(w.x+b) = a|w| * phi(w/|w| . x + b/|w|)``).
    b : array_like, shape (m,)
        Biases.
    v : array_like, shape (d,), optional
        Skip-connection weights.
    c : float
        Intercept.
    regime : {"R", "V2"}
        Bias regime. In ``"R"`` a neuron whose bias exceeds ``sqrt(d)`` is affine
        on the domain and is folded into ``(v, c)``; a bias below ``-sqrt(d)`` is
        rejected. ``"V2"`` allows ``|b| <= 2 sqrt(d)`` and forbids an affine part.
    normalize : bool
        When false, non-unit rows raise instead of being rescaled.
    """

    def __init__(
        self,
        d: int,
        a: Any = (),
        W: Any = None,
        b: Any = (),
        v: Any = None,
        c: float = 0.0,
        regime: str = "R",
        *,
        normalize: bool = True,
    ) -> None:
        d = int(d)
        if d < 1:
            raise ValueError("d must be positive")
        if regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
        a = np.asarray(a, dtype=np.float64).reshape(-1)
        m = a.shape[0]
        W = np.zeros((0, d)) if W is None else np.asarray(W, dtype=np.float64)
        if m == 0 and W.size == 0:
            W = np.zeros((0, d))
        if W.ndim != 2 or W.shape != (m, d):
            raise ValueError(f"W has shape {W.shape}, expected {(m, d)}")
        b = np.asarray(b, dtype=np.float64).reshape(-1)
        if b.shape[0] != m:
            raise ValueError(f"b has length {b.shape[0]}, expected {m}")
        v = np.zeros(d) if v is None else _as_vector(v, d, "v").copy()
        c = float(c)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(W)) and np.all(np.isfinite(b))
                and np.all(np.isfinite(v)) and math.isfinite(c)):
            raise ValueError("network parameters must be finite")

        norms = np.linalg.norm(W, axis=1)
        zero = norms == 0.0
        if np.any(zero):
            if regime == "V2":
                raise ValueError("zero input weight is not representable in the V2 regime")
            c += float(np.sum(a[zero] * np.maximum(b[zero], 0.0)))
            keep = ~zero
            a, W, b, norms = a[keep], W[keep], b[keep], norms[keep]
        off = np.abs(norms - 1.0) > UNIT_TOL
        if np.any(off):
            if not normalize:
                raise ValueError("input weights must have unit norm")
            a = a * norms
            b = b / norms
            W = W / norms[:, None]

        sd = math.sqrt(d)
        if regime == "R":
            hi = b > sd * (1 + 1e-12)
            if np.any(hi):
                v += a[hi] @ W[hi]
                c += float(np.sum(a[hi] * b[hi]))
                a, W, b = a[~hi], W[~hi], b[~hi]
            if np.any(b < -sd * (1 + 1e-12)):
                raise ValueError("bias below -sqrt(d) in the R regime")
        else:
            if np.any(np.abs(b) > 2 * sd * (1 + 1e-12)):
                raise ValueError("bias outside [-2 sqrt(d), 2 sqrt(d)] in the V2 regime")
            if np.any(v != 0.0) or c != 0.0:
                raise ValueError("the V2 regime has no affine part")

        for arr in (a, W, b, v):
            arr.setflags(write=False)
        self._d, self._a, self._W, self._b, self._v, self._c = d, a, W, b, v, c
        self._regime = regime

    # basic accessors
    d = property(lambda self: self._d)
    a = property(lambda self: self._a)
    W = property(lambda self: self._W)
    b = property(lambda self: self._b)
    v = property(lambda self: self._v)
    c = property(lambda self: self._c)
    regime = property(lambda self: self._regime)

    @property
    def width(self) -> int:
        return int(self._a.shape[0])

    @property
    def neurons(self) -> list[Neuron]:
        return [Neuron(float(a), w.copy(), float(b)) for a, w, b in zip(self._a, self._W, self._b)]

    @property
    def l1_mass(self) -> float:
        """Sum of absolute output coefficients of this representation."""
        return float(np.sum(np.abs(self._a)))

    @classmethod
    def from_neurons(
        cls,
        d: int,
        neurons: Iterable[Any] = (),
        v: Any = None,
        c: float = 0.0,
        regime: str = "R",
        **kw: Any,
    ) -> "TwoLayerNet":
        """Build from ``Neuron`` tuples, ``(a, w, b)`` triples or dicts."""
        rows = []
        for n in neurons:
            if isinstance(n, dict):
                rows.append((n["a"], n["w"], n["b"]))
            else:
                rows.append(tuple(n))
        if not rows:
            return cls(d, v=v, c=c, regime=regime, **kw)
        a = [r[0] for r in rows]
        W = np.array([_as_vector(r[1], d, "w") for r in rows])
        b = [r[2] for r in rows]
        return cls(d, a, W, b, v, c, regime, **kw)

    # algebra, used by averaging constructions and the linearity tests
    def _check_compatible(self, other: "TwoLayerNet") -> None:
        if self._d != other._d or self._regime != other._regime:
            raise ValueError("networks differ in dimension or regime")

    def __add__(self, other: "TwoLayerNet") -> "TwoLayerNet":
        self._check_compatible(other)
        return TwoLayerNet(
            self._d,
            np.concatenate([self._a, other._a]),
            np.vstack([self._W, other._W]),
            np.concatenate([self._b, other._b]),
            self._v + other._v,
            self._c + other._c,
            self._regime,
        )

    def __mul__(self, alpha: float) -> "TwoLayerNet":
        alpha = float(alpha)
        return TwoLayerNet(self._d, alpha * self._a, self._W, self._b, alpha * self._v,
                           alpha * self._c, self._regime)

    __rmul__ = __mul__

    def __neg__(self) -> "TwoLayerNet":
        return self * -1.0

    def __sub__(self, other: "TwoLayerNet") -> "TwoLayerNet":
        return self + (-other)

    def with_affine(self, v: Any, c: float) -> "TwoLayerNet":
        """Return a copy whose affine part is replaced by ``(v, c)``."""
        return TwoLayerNet(self._d, self._a, self._W, self._b, v, c, self._regime)

    @staticmethod
    def concatenate(nets: Sequence["TwoLayerNet"], weights: Sequence[float] | None = None) -> "TwoLayerNet":
        """Weighted sum of networks as one network (list concatenation)."""
        if not nets:
            raise ValueError("no networks to concatenate")
        first = nets[0]
        for n in nets[1:]:
            first._check_compatible(n)
        wts = np.ones(len(nets)) if weights is None else np.asarray(weights, dtype=float)
        a = np.concatenate([w * n._a for w, n in zip(wts, nets)])
        W = np.vstack([n._W for n in nets])
        b = np.concatenate([n._b for n in nets])
        v = sum((w * n._v for w, n in zip(wts, nets)), np.zeros(first._d))
        c = float(sum(w * n._c for w, n in zip(wts, nets)))
        return TwoLayerNet(first._d, a, W, b, v, c, first._regime)

    # evaluation
    @cached_property
    def _groups(self):
        """Neurons grouped by shared direction, when sharing is substantial."""
        m = self.width
        if m < 64:
            return None
        U, inv = np.unique(self._W, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        if 4 * U.shape[0] > m:
            return None
        order = np.argsort(inv, kind="stable")
        bounds = np.searchsorted(inv[order], np.arange(U.shape[0] + 1))
        tables = []
        for g in range(U.shape[0]):
            idx = order[bounds[g]:bounds[g + 1]]
            knots = -self._b[idx]
            srt = np.argsort(knots, kind="stable")
            knots, coef = knots[srt], self._a[idx][srt]
            ca = np.concatenate([[0.0], np.cumsum(coef)])
            cak = np.concatenate([[0.0], np.cumsum(coef * knots)])
            tables.append((knots, ca, cak))
        return U, tables

    def __call__(self, X: Any) -> np.ndarray | float:
        return evaluate(self, X)

    def __repr__(self) -> str:
        return f"TwoLayerNet(d={self._d}, width={self.width}, regime={self._regime!r})"

    # serialization
    def to_dict(self) -> dict:
        return {
            "d": self._d,
            "regime": self._regime,
            "neurons": [
                {"a": float(a), "w": [float(x) for x in w], "b": float(b)}
                for a, w, b in zip(self._a, self._W, self._b)
            ],
            "v": [float(x) for x in self._v],
            "c": float(self._c),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TwoLayerNet":
        if not isinstance(obj, dict):
            raise ValueError("network description must be a JSON object")
        try:
            d = obj["d"]
            neurons = obj.get("neurons", [])
            regime = obj.get("regime", "R")
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed network description: {exc}") from exc
        if not isinstance(d, int) or isinstance(d, bool) or d < 1:
            raise ValueError("'d' must be a positive integer")
        if not isinstance(neurons, list):
            raise ValueError("'neurons' must be a list")
        rows = []
        for k, n in enumerate(neurons):
            if not isinstance(n, dict) or not {"a", "w", "b"} <= set(n):
                raise ValueError(f"neuron {k} must have fields a, w, b")
            w = _as_vector(n["w"], d, f"neuron {k} w")
            if abs(np.linalg.norm(w) - 1.0) > UNIT_TOL:
                raise ValueError(f"neuron {k} has non-unit input weight")
            rows.append((float(n["a"]), w, float(n["b"])))
        v = obj.get("v", [0.0] * d)
        return cls.from_neurons(d, rows, v, float(obj.get("c", 0.0)), regime, normalize=False)


def evaluate(net: TwoLayerNet, X: Any) -> np.ndarray | float:
    """Evaluate ``net`` at one point (returns a float) or at the rows of ``X``.

    Points outside the ball of radius ``sqrt(d)`` trigger an
    :class:`OutsideDomainWarning` but are evaluated.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.ndim != 2 or X2.shape[1] != net.d:
        raise ValueError(f"input has dimension {X2.shape[-1]}, expected {net.d}")
    if X2.shape[0] and np.max(np.einsum("ij,ij->i", X2, X2)) > net.d * (1 + 1e-9):
        warnings.warn("evaluation outside the domain ball", OutsideDomainWarning, stacklevel=2)
    out = X2 @ net.v + net.c
    if net.width:
        groups = net._groups
        if groups is not None:
            U, tables = groups
            step = max(1, _BLOCK // U.shape[0])
            for s in range(0, X2.shape[0], step):
                Z = X2[s:s + step] @ U.T
                acc = out[s:s + step]
                for g, (knots, ca, cak) in enumerate(tables):
                    z = Z[:, g]
                    i = np.searchsorted(knots, z, side="left")
                    acc += z * ca[i] - cak[i]
        else:
            step = max(1, _BLOCK // net.width)
            for s in range(0, X2.shape[0], step):
                pre = X2[s:s + step] @ net.W.T
                pre += net.b
                np.maximum(pre, 0.0, out=pre)
                out[s:s + step] += pre @ net.a
    return float(out[0]) if single else out


def _orient(W: np.ndarray) -> np.ndarray:
    """Sign per row making the first coordinate with |w_i| >= 1/(2 sqrt d) positive.

    Every unit vector has such a coordinate, and the choice is stable under
    perturbations far below the threshold, so near-antipodes get opposite signs.
    """
    d = W.shape[1]
    big = np.abs(W) >= 0.5 / math.sqrt(d)
    first = np.argmax(big, axis=1)
    s = np.sign(W[np.arange(W.shape[0]), first])
    s[s == 0] = 1.0
    return s


def _merge_groups(keys: np.ndarray, tol: float) -> np.ndarray:
    """Group labels for rows of ``keys`` that agree within ``tol`` (l1 distance)."""
    n, k = keys.shape
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    h = tol / (2.0 * k)
    q = np.round(keys / h)
    uq, first, inv = np.unique(q, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    reps = keys[first]
    # neighbouring cells in sorted order may still hold near-equal keys
    gap = np.sum(np.abs(np.diff(reps, axis=0)), axis=1) > tol
    label = np.concatenate([[0], np.cumsum(gap)]).astype(np.int64)
    return label[inv]


def canonicalize(net: TwoLayerNet, tol: float = MERGE_TOL) -> TwoLayerNet:
    """Canonical representative of the same function on the domain ball.

    In the R regime each neuron is oriented so its ``(w, b)`` lies on a fixed
    side of the antipodal pair, using ``a*phi(z) = a*phi(-z) + a*z`` and moving
    the affine remainder into ``(v, c)``. Neurons that are affine on the domain
    (``b >= sqrt(d)``) are folded into ``(v, c)``, dead ones (``b <= -sqrt(d)``)
    dropped. Then atoms whose ``|w - w'| + |b - b'|/sqrt(d) <= tol`` are merged,
    and zero coefficients are removed. In the V2 regime only the merge and the
    zero removal apply.
    """
    d = net.d
    sd = math.sqrt(d)
    a, W, b = net.a.copy(), net.W.copy(), net.b.copy()
    v, c = net.v.copy(), net.c
    if net.regime == "R" and a.size:
        s = _orient(W)
        flip = s < 0
        if np.any(flip):
            v += a[flip] @ W[flip]
            c += float(np.sum(a[flip] * b[flip]))
            W[flip] *= -1.0
            b[flip] *= -1.0
        affine = b >= sd * (1 - 1e-12)
        if np.any(affine):
            v += a[affine] @ W[affine]
            c += float(np.sum(a[affine] * b[affine]))
        keep = ~affine & (b > -sd * (1 - 1e-12))
        a, W, b = a[keep], W[keep], b[keep]
    if a.size:
        keys = np.hstack([W, (b / sd)[:, None]])
        lab = _merge_groups(keys, tol)
        ng = int(lab.max()) + 1
        coef = np.zeros(ng)
        np.add.at(coef, lab, a)
        first = np.full(ng, -1, dtype=np.int64)
        # representative: first member of each group in input order
        rev = np.arange(lab.shape[0])[::-1]
        first[lab[rev]] = rev
        W, b = W[first], b[first]
        scale = max(1.0, float(np.max(np.abs(a))))
        nz = np.abs(coef) > 1e-12 * scale
        a, W, b = coef[nz], W[nz], b[nz]
    return TwoLayerNet(d, a, W, b, v, c, net.regime)


def rnorm(net: TwoLayerNet) -> float:
    """R-norm of a finite network: the l1 mass of its canonical atoms."""
    return rnorm_details(net)[0]


def rnorm_details(net: TwoLayerNet, sep: float = 1e-6) -> tuple[float, bool]:
    """R-norm together with an exactness flag.

    The flag is false when two canonical atoms lie within ``sep`` of each other
    without being merged; the value is then only certified as an upper bound.
    """
    if net.regime != "R":
        raise ValueError("rnorm requires the R regime")
    can = canonicalize(net)
    value = can.l1_mass
    exact = True
    if can.width > 1:
        keys = np.hstack([can.W, (can.b / math.sqrt(net.d))[:, None]])
        exact = int(_merge_groups(keys, sep).max()) + 1 == can.width
    return value, exact


def affine_atoms(v: np.ndarray, c: float, d: int) -> TwoLayerNet:
    """Two V2 atoms representing ``v^T x + c`` on the ball of radius sqrt(d).

    Direction ``u = v/|v|`` (``1/sqrt(d)`` when ``v = 0``); on the domain both
    ReLUs are active, and the coefficients solve the resulting 2x2 system.
    """
    sd = math.sqrt(d)
    nv = float(np.linalg.norm(v))
    u = v / nv if nv > 0 else np.full(d, 1.0 / sd)
    alpha = -3.0 * nv + 2.0 * c / sd
    beta = 4.0 * nv - 2.0 * c / sd
    rows = [(x, u, bias) for x, bias in ((alpha, 2.0 * sd), (beta, 1.5 * sd)) if x != 0.0]
    return TwoLayerNet.from_neurons(d, rows, regime="V2")


def v2norm_upper(net: TwoLayerNet, K: float | None = None) -> tuple[float, TwoLayerNet]:
    """Affine-free V2 representation of an R-regime network and its l1 mass.

    The affine part of the canonical form is rewritten with two atoms at biases
    ``2 sqrt(d)`` and ``1.5 sqrt(d)``, so the mass is at most
    ``sum|a| + 7|v| + 4|c|/sqrt(d)``.

    Parameters
    ----------
    net : TwoLayerNet
        Network in the R regime.
    K : float, optional
        Caller-supplied bound on ``sup_{|x| <= 1} |g(x)|``. When given, the
        mass is compared with ``12 rnorm + 18 K`` and a warning signals an
        inconsistent ``K``.

    Returns
    -------
    mass : float
    v2net : TwoLayerNet
    """
    if net.regime != "R":
        raise ValueError("v2norm_upper expects an R-regime network")
    can = canonicalize(net)
    body = TwoLayerNet(net.d, can.a, can.W, can.b, regime="V2")
    extra = affine_atoms(can.v, can.c, net.d)
    out = TwoLayerNet(
        net.d,
        np.concatenate([body.a, extra.a]),
        np.vstack([body.W, extra.W]),
        np.concatenate([body.b, extra.b]),
        regime="V2",
    )
    mass = out.l1_mass
    if K is not None:
        bound = 12.0 * can.l1_mass + 18.0 * float(K)
        if mass > bound * (1 + 1e-9) + 1e-12:
            warnings.warn(f"V2 mass {mass} exceeds 12R + 18K = {bound}; K is not a valid bound",
                          RuntimeWarning, stacklevel=2)
    return mass, out


def serialize(net: TwoLayerNet, indent: int | None = None) -> str:
    """JSON text for ``net``; floats round-trip exactly."""
    return json.dumps(net.to_dict(), indent=indent)


def deserialize(text: str) -> TwoLayerNet:
    """Parse and validate a network from JSON text."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed network JSON: {exc}") from exc
    return TwoLayerNet.from_dict(obj)
