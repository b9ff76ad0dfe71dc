"""Continuous piecewise-linear functions of one real variable.

A function is stored by its breakpoints, the slope on each of the n+1 pieces
and an anchor (point, value) fixing the constant.  Everything the solvers need
is here: vectorised evaluation, sums, scaling, affine reparametrisation
(used to reflect value functions, y = x - d), restriction to an interval and
the exact maximisation of f - q for a quadratic q, which drives both the
certificate checks and the pricing step of the moment oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedInputError

SLOPE_TOL = 1e-12
BP_MERGE = 1e-12


def _slope_close(a, b):
    return abs(a - b) <= SLOPE_TOL * max(1.0, abs(a), abs(b))


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    breakpoints: tuple
    slopes: tuple
    anchor: tuple = (0.0, 0.0)
    _bp: np.ndarray = field(init=False, repr=False)
    _sl: np.ndarray = field(init=False, repr=False)
    _val: np.ndarray = field(init=False, repr=False)
    _c0: float = field(init=False, repr=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float).ravel()
        sl = np.asarray(self.slopes, dtype=float).ravel()
        if sl.size != bp.size + 1:
            raise MalformedInputError("need exactly one more slope than breakpoints")
        if bp.size and (np.any(~np.isfinite(bp)) or np.any(np.diff(bp) <= 0)):
            raise MalformedInputError("breakpoints must be finite and strictly increasing")
        if np.any(~np.isfinite(sl)):
            raise MalformedInputError("slopes must be finite")
        object.__setattr__(self, "breakpoints", tuple(bp.tolist()))
        object.__setattr__(self, "slopes", tuple(sl.tolist()))
        object.__setattr__(self, "_bp", bp)
        object.__setattr__(self, "_sl", sl)
        # value at the anchor -> values at every breakpoint
        a, va = float(self.anchor[0]), float(self.anchor[1])
        if bp.size == 0:
            object.__setattr__(self, "_val", np.empty(0))
            object.__setattr__(self, "_c0", va - sl[0] * a)
            return
        # integrate slopes from the anchor
        k = int(np.searchsorted(bp, a, side="right"))
        ref = bp[k - 1] if k > 0 else bp[0]
        v_ref = va + sl[k] * (ref - a)
        vals = np.empty(bp.size)
        j = k - 1 if k > 0 else 0
        vals[j] = v_ref
        for i in range(j + 1, bp.size):
            vals[i] = vals[i - 1] + sl[i] * (bp[i] - bp[i - 1])
        for i in range(j - 1, -1, -1):
            vals[i] = vals[i + 1] - sl[i + 1] * (bp[i + 1] - bp[i])
        object.__setattr__(self, "_val", vals)
        object.__setattr__(self, "_c0", float("nan"))

    # ------------------------------------------------------------ builders
    @classmethod
    def _build(cls, bp, vals, left, right):
        """Assemble from values at breakpoints plus the two outer slopes."""
        bp = np.asarray(bp, dtype=float)
        vals = np.asarray(vals, dtype=float)
        if bp.size == 0:
            raise ValueError("use affine() for functions without breakpoints")
        if bp.size > 1:
            # kinks closer than rounding noise would give meaningless slopes
            close = np.diff(bp) <= BP_MERGE * np.maximum(1.0, np.abs(bp[1:]))
            if close.any():
                keep = np.concatenate([[True], ~close])
                bp, vals = bp[keep], vals[keep]
        inner = np.diff(vals) / np.diff(bp) if bp.size > 1 else np.empty(0)
        sl = np.concatenate([[left], inner, [right]])
        # drop breakpoints where nothing bends
        keep = np.ones(bp.size, dtype=bool)
        for i in range(bp.size):
            if _slope_close(sl[i], sl[i + 1]):
                keep[i] = False
        if not keep.any():
            return _pick_class(sl[:1]).affine(float(sl[0]), float(vals[0] - sl[0] * bp[0]))
        idx = np.flatnonzero(keep)
        new_bp = bp[idx]
        new_val = vals[idx]
        new_sl = np.empty(idx.size + 1)
        new_sl[0] = left
        new_sl[-1] = right
        if idx.size > 1:
            new_sl[1:-1] = np.diff(new_val) / np.diff(new_bp)
        out_cls = _pick_class(new_sl)
        return out_cls(tuple(new_bp), tuple(new_sl), (float(new_bp[0]), float(new_val[0])))

    @classmethod
    def affine(cls, slope, intercept=0.0):
        return _pick_class([slope])((), (float(slope),), (0.0, float(intercept)))

    @classmethod
    def constant(cls, value):
        return cls.affine(0.0, value)

    @classmethod
    def hinge(cls, point, left_slope, right_slope, value=0.0):
        """Single kink at ``point`` with the given value there."""
        return _pick_class([left_slope, right_slope])(
            (float(point),), (float(left_slope), float(right_slope)), (float(point), float(value)))

    @classmethod
    def from_values(cls, points, values, left_slope, right_slope):
        order = np.argsort(points)
        return cls._build(np.asarray(points, float)[order], np.asarray(values, float)[order],
                          left_slope, right_slope)

    # ------------------------------------------------------------ evaluation
    @property
    def n_pieces(self):
        return len(self.slopes)

    def values_at_breakpoints(self):
        return self._val.copy()

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        bp, sl = self._bp, self._sl
        if bp.size == 0:
            out = self._c0 + sl[0] * x_arr
        else:
            k = np.searchsorted(bp, x_arr, side="right")
            ref = np.where(k > 0, k - 1, 0)
            out = self._val[ref] + sl[k] * (x_arr - bp[ref])
        if np.ndim(x) == 0:
            return float(out)
        return out

    def slope_at(self, x, side="right"):
        k = int(np.searchsorted(self._bp, x, side=side))
        return float(self._sl[k])

    @property
    def is_convex(self):
        d = np.diff(self._sl)
        return bool(np.all(d >= -SLOPE_TOL * np.maximum(1.0, np.abs(self._sl[1:]))))

    def pieces(self, lo=-math.inf, hi=math.inf):
        """Yield (a, b, slope, intercept) for every piece meeting [lo, hi]."""
        edges = np.concatenate([[-math.inf], self._bp, [math.inf]])
        out = []
        for i, s in enumerate(self._sl):
            a, b = max(edges[i], lo), min(edges[i + 1], hi)
            if a > b or (a == b and not math.isfinite(a)):
                continue
            if self._bp.size == 0:
                icpt = self._c0
            else:
                ref = self._bp[i - 1] if i > 0 else self._bp[0]
                vref = self._val[i - 1] if i > 0 else self._val[0]
                icpt = vref - s * ref
            out.append((float(a), float(b), float(s), float(icpt)))
        return out

    def piece_arrays(self, lo=-math.inf, hi=math.inf):
        """Same as :meth:`pieces` but as four numpy arrays."""
        p = self.pieces(lo, hi)
        if not p:
            return (np.empty(0),) * 4
        arr = np.array(p, dtype=float)
        return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]

    # ------------------------------------------------------------ arithmetic
    def __add__(self, other):
        if isinstance(other, PiecewiseLinear):
            bp = np.union1d(self._bp, other._bp)
            if bp.size == 0:
                return PiecewiseLinear.affine(self._sl[0] + other._sl[0], self(0.0) + other(0.0))
            vals = self(bp) + other(bp)
            return PiecewiseLinear._build(bp, vals, self._sl[0] + other._sl[0],
                                          self._sl[-1] + other._sl[-1])
        c = float(other)
        if self._bp.size == 0:
            return type(self).affine(self._sl[0], self._c0 + c)
        return type(self)(self.breakpoints, self.slopes, (self._bp[0], self._val[0] + c))

    __radd__ = __add__

    def __mul__(self, k):
        k = float(k)
        if k == 0.0:
            return PiecewiseLinear.constant(0.0)
        if self._bp.size == 0:
            return PiecewiseLinear.affine(k * self._sl[0], k * self._c0)
        return PiecewiseLinear._build(self._bp, k * self._val, k * self._sl[0], k * self._sl[-1])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, PiecewiseLinear) else -float(other))

    def compose_affine(self, shift, scale):
        """Return d -> f(shift + scale * d)."""
        shift, scale = float(shift), float(scale)
        if scale == 0.0:
            return PiecewiseLinear.constant(self(shift))
        if self._bp.size == 0:
            return PiecewiseLinear.affine(self._sl[0] * scale, self._c0 + self._sl[0] * shift)
        new_bp = (self._bp - shift) / scale
        vals = self._val
        left, right = self._sl[0] * scale, self._sl[-1] * scale
        if scale < 0:
            new_bp, vals = new_bp[::-1], vals[::-1]
            left, right = self._sl[-1] * scale, self._sl[0] * scale
        return PiecewiseLinear._build(new_bp, vals, left, right)

    def restrict(self, lo=-math.inf, hi=math.inf):
        """Function agreeing with self on [lo, hi], extended linearly outside."""
        bp = self._bp
        if bp.size == 0:
            return self
        keep = (bp > lo) & (bp < hi)
        kl = 0 if not math.isfinite(lo) else int(np.searchsorted(bp, lo, side="right"))
        kr = len(self._sl) - 1 if not math.isfinite(hi) else int(np.searchsorted(bp, hi, side="left"))
        if not keep.any():
            x0 = lo if math.isfinite(lo) else (hi if math.isfinite(hi) else 0.0)
            s = self._sl[kl]
            return PiecewiseLinear.affine(s, self(x0) - s * x0)
        return PiecewiseLinear._build(bp[keep], self._val[keep], self._sl[kl], self._sl[kr])

    # ------------------------------------------------------------ quadratics
    def max_minus_quadratic(self, lam, lo=-math.inf, hi=math.inf):
        """Exact sup of f(t) - (l0 + l1 t + l2 t^2) over [lo, hi].

        On each piece the difference is a concave (l2 >= 0) or convex
        quadratic; the candidates are the finite piece ends and, when l2 > 0,
        the clipped stationary point.  Returns (value, maximiser); value may be
        +inf when the difference is unbounded on an infinite piece.
        """
        l0, l1, l2 = (float(v) for v in lam)
        a, b, s, k = self.piece_arrays(lo, hi)
        if a.size == 0:
            return -math.inf, math.nan
        best_v, best_t = -math.inf, math.nan

        def g(t, s_, k_):
            return s_ * t + k_ - l0 - l1 * t - l2 * t * t

        # unbounded ends
        if l2 < 0 or l2 == 0:
            if math.isinf(b[-1]):
                ds = s[-1] - l1
                if l2 < 0 or ds > SLOPE_TOL * max(1.0, abs(s[-1]), abs(l1)):
                    return math.inf, math.inf
            if math.isinf(a[0]):
                ds = s[0] - l1
                if l2 < 0 or ds < -SLOPE_TOL * max(1.0, abs(s[0]), abs(l1)):
                    return math.inf, -math.inf
        cands_t = []
        cands_p = []
        for arr in (a, b):
            fin = np.isfinite(arr)
            cands_t.append(arr[fin])
            cands_p.append(np.flatnonzero(fin))
        if l2 > 0:
            with np.errstate(over="ignore"):
                tstar = (s - l1) / (2.0 * l2)
            tstar = np.clip(tstar, a, b)
            fin = np.isfinite(tstar)
            cands_t.append(tstar[fin])
            cands_p.append(np.flatnonzero(fin))
        t_all = np.concatenate(cands_t)
        p_all = np.concatenate(cands_p)
        if t_all.size:
            vals = g(t_all, s[p_all], k[p_all])
            j = int(np.argmax(vals))
            best_v, best_t = float(vals[j]), float(t_all[j])
        elif l2 == 0:
            # a single doubly infinite piece with slope matching l1
            best_v, best_t = float(k[0] - l0), 0.0
        return best_v, best_t

    def __repr__(self):
        n = len(self.breakpoints)
        if n <= 6:
            return f"{type(self).__name__}(breakpoints={self.breakpoints}, slopes={self.slopes}, anchor={self.anchor})"
        return f"{type(self).__name__}(<{n} breakpoints>)"


class PiecewiseLinearConvex(PiecewiseLinear):
    """Piecewise-linear function with nondecreasing slopes."""

    def __post_init__(self):
        super().__post_init__()
        d = np.diff(self._sl)
        if np.any(d < -SLOPE_TOL * np.maximum(1.0, np.abs(self._sl[1:]))):
            raise MalformedInputError("slopes must be nondecreasing for a convex function")

    @classmethod
    def abs_dev(cls, x):
        """d -> |x - d|."""
        return cls.hinge(x, -1.0, 1.0)

    @classmethod
    def newsvendor(cls, x, b, h, c=0.0):
        """d -> c x + b [d - x]_+ + h [x - d]_+ as a function of demand d."""
        return cls.hinge(x, -h, b, value=c * x)

    @classmethod
    def ccpa(cls, c1, c2):
        """d -> max{-d + c1, 0, d - c2}."""
        if not c1 < c2:
            raise MalformedInputError("need c1 < c2")
        return cls((float(c1), float(c2)), (-1.0, 0.0, 1.0), (float(c1), 0.0))


def _pick_class(slopes):
    sl = np.asarray(slopes, dtype=float)
    if sl.size <= 1:
        return PiecewiseLinearConvex
    d = np.diff(sl)
    if np.all(d >= -SLOPE_TOL * np.maximum(1.0, np.abs(sl[1:]))):
        return PiecewiseLinearConvex
    return PiecewiseLinear


def as_convex(f):
    """Validate and return f as a PiecewiseLinearConvex."""
    if isinstance(f, PiecewiseLinearConvex):
        return f
    return PiecewiseLinearConvex(f.breakpoints, f.slopes, f.anchor)
