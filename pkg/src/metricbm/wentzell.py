"""Wentzell vertex data, vertex classification and boundary-condition matrices.

At a vertex ``v`` the condition on a function ``f`` reads::

    a_v f(v) - sum_l b_{v,l} f'(v_l) + (c_v / 2) f''(v) = 0

with inward derivatives ``f'(v_l)``, together with continuity of ``f''``
across ``v``.  Stacking all vertices gives ``A f(V) + B f'(V) + C f''(V) = 0``
on the trace vectors ordered as in :meth:`MetricGraph.trace_index`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .graph import GraphError, HalfEdge, MetricGraph

NORMALIZATION_TOL = 1e-12


class WentzellError(ValueError):
    """Invalid vertex data."""


class SingularSystemError(RuntimeError):
    """The boundary system is (numerically) singular at the requested spectral point."""


@dataclass(frozen=True)
class VertexData:
    a: float
    b: Mapping[HalfEdge, float]
    c: float

    @property
    def b_total(self) -> float:
        return float(sum(self.b.values()))


class WentzellData(Mapping):
    """Normalized vertex data for every vertex of a graph (read-only mapping)."""

    def __init__(self, graph: MetricGraph, vertex_data: Mapping[str, VertexData]):
        self.graph = graph
        self._d = dict(vertex_data)

    def __getitem__(self, v: str) -> VertexData:
        return self._d[v]

    def __iter__(self):
        return iter(self.graph.vertices)

    def __len__(self) -> int:
        return len(self._d)

    def b_vector(self, v: str) -> np.ndarray:
        d = self._d[v]
        return np.array([d.b[h] for h in self.graph.incident(v)])

    def replace(self, v: str, vd: VertexData) -> "WentzellData":
        new = dict(self._d)
        new[v] = vd
        return validate_and_normalize(self.graph, new)


RawVertex = Union[VertexData, tuple, Mapping]


def _coerce(graph: MetricGraph, v: str, raw) -> tuple[float, dict[HalfEdge, float], float]:
    if isinstance(raw, VertexData):
        a, b, c = raw.a, raw.b, raw.c
    elif isinstance(raw, Mapping):
        a, b, c = raw.get("a", 0.0), raw.get("b", {}), raw.get("c", 0.0)
    else:
        a, b, c = raw
    halves = graph.incident(v)
    if not isinstance(b, Mapping):
        b = list(b)
        if len(b) != len(halves):
            raise WentzellError(f"vertex {v!r}: expected {len(halves)} edge weights, got {len(b)}")
        return float(a), dict(zip(halves, map(float, b))), float(c)
    out: dict[HalfEdge, float] = {}
    for key, val in b.items():
        if isinstance(key, HalfEdge) or (isinstance(key, tuple) and len(key) == 2):
            h = HalfEdge(str(key[0]), int(key[1]))
            if h not in halves:
                raise WentzellError(f"vertex {v!r}: {h} is not incident")
            out[h] = float(val)
            continue
        ends = [h for h in halves if h.edge == key]
        if not ends:
            raise WentzellError(f"vertex {v!r}: edge {key!r} is not incident")
        if len(ends) == 2:
            vals = list(val) if not np.isscalar(val) else [float(val) / 2] * 2
            if len(vals) != 2:
                raise WentzellError(f"vertex {v!r}: tadpole {key!r} needs two weights")
            out[ends[0]], out[ends[1]] = float(vals[0]), float(vals[1])
        else:
            out[ends[0]] = float(val)
    for h in halves:
        out.setdefault(h, 0.0)
    return float(a), out, float(c)


def validate_and_normalize(graph: MetricGraph, raw: Mapping[str, RawVertex]) -> WentzellData:
    """Check the vertex data and rescale each vertex so that ``a + sum(b) + c = 1``.

    ``raw[v]`` may be a :class:`VertexData`, a mapping with keys ``a``, ``b``,
    ``c`` or an ``(a, b, c)`` tuple; ``b`` is keyed by edge id, by
    :class:`HalfEdge`, or is a sequence in incidence order.
    """
    missing = set(graph.vertices) - set(raw)
    if missing:
        raise WentzellError(f"no data for vertices {sorted(missing)}")
    out = {}
    for v in graph.vertices:
        a, b, c = _coerce(graph, v, raw[v])
        vals = [a, c, *b.values()]
        if any(not math.isfinite(x) for x in vals):
            raise WentzellError(f"vertex {v!r}: non-finite entry")
        if any(x < 0 for x in vals):
            raise WentzellError(f"vertex {v!r}: negative entry")
        total = math.fsum(vals)
        if total <= 0:
            raise WentzellError(f"vertex {v!r}: all entries are zero")
        if abs(total - 1.0) > NORMALIZATION_TOL:
            a, c = a / total, c / total
            b = {h: x / total for h, x in b.items()}
        if a >= 1.0 - NORMALIZATION_TOL:
            raise WentzellError(
                f"vertex {v!r}: data is the excluded corner a=1, b=0, c=0 (pure killing is not allowed)"
            )
        out[v] = VertexData(a, b, c)
    return WentzellData(graph, out)


def standard_data(graph: MetricGraph, weights: Mapping[str, Mapping] | None = None) -> WentzellData:
    """Standard (Walsh) conditions, equal weights unless given per vertex."""
    raw = {}
    for v in graph.vertices:
        b = (weights or {}).get(v)
        raw[v] = (0.0, b if b is not None else [1.0] * len(graph.incident(v)), 0.0)
    return validate_and_normalize(graph, raw)


# -- classification -----------------------------------------------------------


@dataclass(frozen=True)
class Trap:
    pass


@dataclass(frozen=True)
class ExponentialHolding:
    rate: float


@dataclass(frozen=True)
class Instantaneous:
    weights: Mapping[HalfEdge, float]
    stickiness: float
    kill_rate: float


VertexClass = Union[Trap, ExponentialHolding, Instantaneous]


def classify_vertex(data: WentzellData, v: str) -> VertexClass:
    d = data[v]
    sb = d.b_total
    if sb > 0:
        return Instantaneous({h: x / sb for h, x in d.b.items()}, d.c / sb, d.a / sb)
    if d.a == 0:
        return Trap()
    return ExponentialHolding(d.a / d.c)


# -- matrices ---------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryMatrices:
    graph: MetricGraph
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    P: np.ndarray
    blocks: dict  # v -> (A~(v), B~(v), C~(v))
    rho: np.ndarray  # internal edge lengths in canonical order

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_external(self) -> int:
        return len(self.graph.external)


def vertex_blocks(d: VertexData, halves) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m = len(halves)
    At = np.zeros((m, m))
    Bt = np.zeros((m, m))
    Ct = np.zeros((m, m))
    At[0, 0] = d.a
    Bt[0, :] = [-d.b[h] for h in halves]
    Ct[0, 0] = 0.5 * d.c
    for k in range(1, m):
        Ct[k, k - 1] = 1.0
        Ct[k, k] = -1.0
    return At, Bt, Ct


def vertex_det_formula(a: float, b_total: float, c: float, degree: int, kappa, sign: int = 1):
    """Closed form of ``det(A~(v) + sign*kappa*B~(v) + kappa^2 C~(v))``.

    The first row of ``B~(v)`` holds ``-b``, so the linear term enters with
    ``-sign``.
    """
    return (a - sign * kappa * b_total + 0.5 * kappa**2 * c) * (-(kappa**2)) ** (degree - 1)


def assemble(graph: MetricGraph, data: WentzellData) -> BoundaryMatrices:
    if graph.tadpoles:
        raise GraphError(f"graph has tadpoles {graph.tadpoles}; eliminate them first")
    n = graph.n_trace
    rows = [h for v in graph.vertices for h in graph.incident(v)]
    P = np.zeros((n, n))
    for r, h in enumerate(rows):
        P[r, graph.trace_index(h)] = 1.0
    blocks = {}
    At = np.zeros((n, n))
    Bt = np.zeros((n, n))
    Ct = np.zeros((n, n))
    r0 = 0
    for v in graph.vertices:
        halves = graph.incident(v)
        blk = vertex_blocks(data[v], halves)
        blocks[v] = blk
        m = len(halves)
        At[r0 : r0 + m, r0 : r0 + m] = blk[0]
        Bt[r0 : r0 + m, r0 : r0 + m] = blk[1]
        Ct[r0 : r0 + m, r0 : r0 + m] = blk[2]
        r0 += m
    rho = np.array([i.length for i in graph.internal])
    return BoundaryMatrices(graph, P.T @ At @ P, P.T @ Bt @ P, P.T @ Ct @ P, P, blocks, rho)


def _x_matrices(m: BoundaryMatrices, kappa):
    ne, ni = m.n_external, len(m.rho)
    dtype = complex if np.iscomplexobj(kappa) or isinstance(kappa, complex) else float
    e = np.exp(kappa * m.rho)
    Xp = np.eye(m.n, dtype=dtype)
    Xm = np.eye(m.n, dtype=dtype)
    for k in range(ni):
        Xp[ne + k, ne + ni + k] = e[k]
        Xp[ne + ni + k, ne + k] = e[k]
        Xm[ne + k, ne + ni + k] = -e[k]
        Xm[ne + ni + k, ne + k] = -e[k]
    return Xp, Xm


def z_hat(m: BoundaryMatrices, kappa, sign: int = 1) -> np.ndarray:
    return m.A + sign * kappa * m.B + kappa**2 * m.C


def z_matrix(m: BoundaryMatrices, kappa) -> np.ndarray:
    """``Z(k) = (A + k^2 C) X+(k) + k B X-(k)`` acting on the coefficient vector.

    The coefficient vector is ``(r_e, r_i+, r_i-)`` for the homogeneous
    solutions ``r_e exp(k x)`` on external edges and
    ``r_i+ exp(k x) + r_i- exp(k (rho_i - x))`` on internal edges.  These
    decay on external edges only for ``Re k < 0``, so the resolvent at
    ``lam`` uses ``Z(-sqrt(2 lam))``; see :func:`ansatz_system`, which equals
    that matrix up to swapping the two columns of every internal edge.
    """
    Xp, Xm = _x_matrices(m, kappa)
    return (m.A + kappa**2 * m.C) @ Xp + kappa * m.B @ Xm


def ansatz_traces(graph: MetricGraph, kappa, scaled: bool = True):
    """Trace matrices (values, inward derivatives) of the homogeneous basis.

    Columns follow the coefficient layout of :func:`z_matrix`.  With
    ``scaled=True`` the internal basis functions are ``exp(-k (rho - x))``
    and ``exp(-k x)``, i.e. the unscaled ones times ``exp(-k rho)``.
    Second derivatives are ``kappa**2`` times the values.
    """
    n = graph.n_trace
    ne, ni = len(graph.external), len(graph.internal)
    dtype = complex if isinstance(kappa, complex) or np.iscomplexobj(kappa) else float
    F = np.zeros((n, n), dtype=dtype)
    D = np.zeros((n, n), dtype=dtype)
    for j in range(ne):
        F[j, j] = 1.0
        D[j, j] = -kappa
    for k, i in enumerate(graph.internal):
        q = np.exp(-kappa * i.length) if scaled else 1.0
        far = 1.0 if scaled else np.exp(kappa * i.length)
        s0, s1 = ne + k, ne + ni + k  # trace rows for ends 0 and 1
        cp, cm = ne + k, ne + ni + k  # coefficient columns r+, r-
        # plus-basis: grows towards x = rho
        F[s0, cp], D[s0, cp] = q, kappa * q
        F[s1, cp], D[s1, cp] = far, -kappa * far
        # minus-basis: grows towards x = 0
        F[s0, cm], D[s0, cm] = far, -kappa * far
        F[s1, cm], D[s1, cm] = q, kappa * q
    return F, D


def ansatz_system(graph: MetricGraph, data: WentzellData, kappa, scaled: bool = True, m=None):
    """Boundary system for the exponential ansatz, built entry by entry from the traces."""
    m = m or assemble(graph, data)
    F, D = ansatz_traces(graph, kappa, scaled)
    return m.A @ F + m.B @ D + kappa**2 * (m.C @ F)


@dataclass(frozen=True)
class InvertibilityReport:
    lam: float
    kappa: float
    abs_det: float
    cond: float
    retries: int
    scanned: tuple = ()

    @property
    def invertible(self) -> bool:
        return math.isfinite(self.cond) and self.cond < COND_LIMIT


COND_LIMIT = 1e12


def find_invertible_kappa(m: BoundaryMatrices, lam_target: float, retries: int = 3, factor: float = 1 + 1e-6):
    """Check that the (scaled) boundary system is invertible at ``kappa = sqrt(2 lam)``.

    On failure, ``lam`` is multiplied by ``factor`` up to ``retries`` times.
    Raises :class:`SingularSystemError` when every attempt is singular.
    """
    if not lam_target > 0:
        raise ValueError("lambda must be positive")
    scanned = []
    lam = lam_target
    for k in range(retries + 1):
        kappa = math.sqrt(2 * lam)
        Z = ansatz_system(m.graph, None, kappa, scaled=True, m=m)
        with np.errstate(all="ignore"):
            cond = float(np.linalg.cond(Z)) if Z.size else 1.0
            det = abs(float(np.linalg.det(Z))) if Z.size else 1.0
        scanned.append((lam, det, cond))
        rep = InvertibilityReport(lam, kappa, det, cond, k, tuple(scanned))
        if rep.invertible:
            return rep
        lam *= factor
    raise SingularSystemError(
        f"boundary system singular near lambda={lam_target}: scanned {scanned}; "
        "lambda lies on the discrete exceptional set, perturb it"
    )


@dataclass(frozen=True)
class DomainResidual:
    vertex: str
    wentzell: float
    second_derivative_gap: float


def check_domain_membership(graph: MetricGraph, data: WentzellData, traces, tol: float | None = None):
    """Residuals of the vertex conditions for a function given by its traces.

    ``traces`` maps each :class:`HalfEdge` to ``(f, f', f'')`` with inward
    first derivatives.  The value used at a vertex is the average over its
    half-edges.  Returns a list of :class:`DomainResidual`; with ``tol`` set,
    raises :class:`WentzellError` if any residual exceeds it.
    """
    out = []
    for v in graph.vertices:
        halves = graph.incident(v)
        try:
            tr = [traces[h] for h in halves]
        except KeyError as exc:
            raise WentzellError(f"missing trace data for {exc.args[0]}") from None
        d = data[v]
        f0 = float(np.mean([t[0] for t in tr]))
        f2 = [t[2] for t in tr]
        res = d.a * f0 - sum(d.b[h] * t[1] for h, t in zip(halves, tr)) + 0.5 * d.c * float(np.mean(f2))
        gap = float(max(f2) - min(f2))
        out.append(DomainResidual(v, abs(float(res)), gap))
    if tol is not None:
        bad = [r for r in out if r.wentzell > tol or r.second_derivative_gap > tol]
        if bad:
            raise WentzellError(f"vertex conditions violated: {bad}")
    return out


def det_scan(m: BoundaryMatrices, re_values, im_values):
    """Rows ``(kappa_re, kappa_im, |det Z|, log10 cond Z)`` over a rectangular grid."""
    rows = []
    for kr in re_values:
        for ki in im_values:
            kappa = complex(kr, ki)
            Z = ansatz_system(m.graph, None, kappa, scaled=True, m=m)
            with np.errstate(all="ignore"):
                det = abs(np.linalg.det(Z))
                cond = np.linalg.cond(Z)
            rows.append((float(kr), float(ki), float(det), float(np.log10(cond)) if cond > 0 else math.inf))
    return rows
