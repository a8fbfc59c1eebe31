"""Piecewise exponential-polynomial functions on an interval.

A *term* is ``coef * (x - anchor)**power * exp(rate * (x - anchor))`` with
complex ``coef`` and ``rate``; a piece is a sum of terms, and a
:class:`Piecewise` holds one piece per segment between breakpoints.  The
class is closed under differentiation and under the exact inverse of
``lam - (1/2) d^2/dx^2`` (:meth:`Piecewise.particular`), which is what
makes the resolvent solve exact for closed-form and piecewise-linear data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RESONANCE_TOL = 1e-11


@dataclass(frozen=True)
class Terms:
    coef: np.ndarray  # complex
    power: np.ndarray  # int
    rate: np.ndarray  # complex
    anchor: np.ndarray  # float

    @staticmethod
    def empty() -> "Terms":
        return Terms(np.zeros(0, complex), np.zeros(0, int), np.zeros(0, complex), np.zeros(0))

    @staticmethod
    def make(rows) -> "Terms":
        rows = list(rows)
        if not rows:
            return Terms.empty()
        c, m, r, a = zip(*rows)
        return Terms(np.array(c, complex), np.array(m, int), np.array(r, complex), np.array(a, float))

    def __len__(self) -> int:
        return len(self.coef)

    def __add__(self, other: "Terms") -> "Terms":
        return Terms(
            np.concatenate([self.coef, other.coef]),
            np.concatenate([self.power, other.power]),
            np.concatenate([self.rate, other.rate]),
            np.concatenate([self.anchor, other.anchor]),
        )

    def scale(self, k) -> "Terms":
        return Terms(self.coef * k, self.power, self.rate, self.anchor)

    def prune(self) -> "Terms":
        keep = self.coef != 0
        return Terms(self.coef[keep], self.power[keep], self.rate[keep], self.anchor[keep])

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if len(self) == 0:
            return np.zeros(x.shape, complex)
        y = x[..., None] - self.anchor
        with np.errstate(over="ignore", invalid="ignore"):
            vals = self.coef * y**self.power * np.exp(self.rate * y)
        # 0 * inf from far-away anchors only arises for zero coefficients
        vals = np.where(self.coef == 0, 0.0, vals)
        return vals.sum(axis=-1)

    def derivative(self) -> "Terms":
        d1 = Terms(self.coef * self.rate, self.power, self.rate, self.anchor)
        has = self.power > 0
        d2 = Terms(
            self.coef[has] * self.power[has], self.power[has] - 1, self.rate[has], self.anchor[has]
        )
        return (d1 + d2).prune()

    def particular(self, lam: float) -> "Terms":
        """A solution ``p`` of ``lam p - p''/2 = self`` in the same function class."""
        out = []
        for c, m, s, a in zip(self.coef, self.power, self.rate, self.anchor):
            if c == 0:
                continue
            alpha = lam - 0.5 * s * s
            resonant = abs(alpha) <= RESONANCE_TOL * max(lam, abs(s) ** 2, 1.0)
            deg = m + 1 if resonant else m
            d = np.zeros(deg + 3, complex)
            # match coefficients of y^j in  alpha d - s d' - d''/2 = c y^m
            for j in range(m, -1, -1):
                rhs = (c if j == m else 0) + 0.5 * (j + 2) * (j + 1) * d[j + 2]
                if resonant:
                    d[j + 1] = -rhs / (s * (j + 1))
                else:
                    d[j] = (rhs + s * (j + 1) * d[j + 1]) / alpha
            out.extend((d[j], j, s, a) for j in range(deg + 1) if d[j] != 0)
        return Terms.make(out)

    def bounded_at_infinity(self) -> bool:
        re = self.rate.real
        ok = (re < 0) | ((re == 0) & (self.power == 0)) | (self.coef == 0)
        return bool(np.all(ok))


class Piecewise:
    """Piecewise exp-poly function on ``[breaks[0], breaks[-1]]`` (last break may be ``inf``)."""

    def __init__(self, breaks, pieces):
        self.breaks = np.asarray(breaks, float)
        self.pieces = list(pieces)
        if len(self.pieces) != len(self.breaks) - 1:
            raise ValueError("need one piece per segment")
        if np.any(np.diff(self.breaks) <= 0):
            raise ValueError("breaks must be strictly increasing")

    @property
    def length(self) -> float:
        return float(self.breaks[-1])

    @staticmethod
    def single(terms: Terms, length: float) -> "Piecewise":
        return Piecewise([0.0, length], [terms])

    @staticmethod
    def zero(length: float) -> "Piecewise":
        return Piecewise.single(Terms.empty(), length)

    def segment(self, x) -> np.ndarray:
        return np.clip(np.searchsorted(self.breaks, x, side="right") - 1, 0, len(self.pieces) - 1)

    def eval_complex(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        flat = x.ravel()
        out = np.zeros(flat.shape, complex)
        seg = self.segment(flat)
        for j in np.unique(seg):
            sel = seg == j
            out[sel] = self.pieces[j].eval(flat[sel])
        return out.reshape(x.shape)

    def __call__(self, x) -> np.ndarray:
        return self.eval_complex(x).real

    def limit(self, x: float, side: int) -> float:
        """One-sided value at ``x``: ``side=-1`` from the left, ``+1`` from the right."""
        j = int(self.segment(x))
        if side < 0 and j > 0 and x <= self.breaks[j]:
            j -= 1
        return float(self.pieces[j].eval(np.array(x)).real)

    def derivative(self) -> "Piecewise":
        return Piecewise(self.breaks, [p.derivative() for p in self.pieces])

    def scale(self, k) -> "Piecewise":
        return Piecewise(self.breaks, [p.scale(k) for p in self.pieces])

    def add_terms(self, terms: Terms) -> "Piecewise":
        return Piecewise(self.breaks, [p + terms for p in self.pieces])

    def __add__(self, other: "Piecewise") -> "Piecewise":
        if self.breaks[-1] != other.breaks[-1]:
            raise ValueError("domains differ")
        br = np.union1d(self.breaks, other.breaks)
        mids = 0.5 * (br[:-1] + br[1:])
        if np.isinf(br[-1]):
            mids[-1] = br[-2] + 1.0
        i, k = self.segment(mids), other.segment(mids)
        return Piecewise(br, [self.pieces[a] + other.pieces[b] for a, b in zip(i, k)])

    def bounded(self) -> bool:
        return not np.isinf(self.breaks[-1]) or self.pieces[-1].bounded_at_infinity()

    def particular(self, lam: float) -> "Piecewise":
        """A ``C^1`` solution of ``lam p - p''/2 = self`` on the whole domain.

        Segment-wise particular solutions are glued at interior breakpoints by
        free-space homogeneous corrections ``(A + B sgn(x - x_k)) exp(-k|x - x_k|)``,
        which are bounded; their sums are collapsed into two anchored terms
        per segment.
        """
        kappa = math.sqrt(2 * lam)
        raw = [p.particular(lam) for p in self.pieces]
        if np.isinf(self.breaks[-1]) and not raw[-1].bounded_at_infinity():
            raise ValueError("function grows at infinity; the resolvent is undefined")
        nseg = len(raw)
        if nseg == 1:
            return Piecewise(self.breaks, raw)
        # A_k, B_k at interior breaks x_1..x_{N-1}
        amp_l = np.zeros(nseg + 1, complex)  # A_k + B_k (decaying to the right)
        amp_r = np.zeros(nseg + 1, complex)  # A_k - B_k (decaying to the left)
        for k in range(1, nseg):
            xk = np.array(self.breaks[k])
            d0 = raw[k].eval(xk) - raw[k - 1].eval(xk)
            d1 = raw[k].derivative().eval(xk) - raw[k - 1].derivative().eval(xk)
            a_k, b_k = d1 / (2 * kappa), -d0 / 2
            amp_l[k], amp_r[k] = a_k + b_k, a_k - b_k
        br = self.breaks
        left = np.zeros(nseg, complex)
        for j in range(1, nseg):
            prev = left[j - 1] * math.exp(-kappa * (br[j] - br[j - 1])) if j > 1 else 0.0
            left[j] = prev + amp_l[j]
        right = np.zeros(nseg, complex)
        for j in range(nseg - 2, -1, -1):
            nxt = right[j + 1] * math.exp(-kappa * (br[j + 2] - br[j + 1])) if j + 1 < nseg - 1 else 0.0
            right[j] = amp_r[j + 1] + nxt
        pieces = []
        for j in range(nseg):
            rows = []
            if left[j] != 0:
                rows.append((left[j], 0, -kappa, br[j]))
            if right[j] != 0:
                rows.append((right[j], 0, kappa, br[j + 1]))
            pieces.append(raw[j] + Terms.make(rows))
        return Piecewise(self.breaks, pieces)


def linear_interpolant(xs, ys, length: float | None = None) -> Piecewise:
    """Piecewise-linear interpolant through ``(xs, ys)``, held constant past the last node."""
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    pieces = []
    for k in range(len(xs) - 1):
        slope = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
        rows = [(ys[k], 0, 0.0, xs[k])]
        if slope != 0:
            rows.append((slope, 1, 0.0, xs[k]))
        pieces.append(Terms.make(rows))
    breaks = list(xs)
    if length is not None and length > xs[-1]:
        pieces.append(Terms.make([(ys[-1], 0, 0.0, 0.0)]))
        breaks.append(length)
    return Piecewise(breaks, pieces)
