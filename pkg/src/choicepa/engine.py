"""Growth of the graph: one new vertex per step, each of its m edges aimed
at the highest-degree vertex in a weight-proportional sample of size d."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .index import DegreeClassIndex
from .model import ModelParams, m_sample, rounding_code, sample_size, sampler_code

log = logging.getLogger(__name__)


def make_stream(seed: int, run_index: int | None = None, tag: int = 0) -> np.random.Generator:
    """PCG64 stream for one run.

    A lone run uses ``SeedSequence(seed)``; replicate ``r`` of an ensemble
    uses ``SeedSequence(seed, spawn_key=(tag, r))`` so every replicate's
    stream depends only on (seed, tag, r), never on execution order.
    """
    if run_index is None:
        ss = np.random.SeedSequence(seed)
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(tag, run_index))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class StepOutcome:
    m_drawn: int
    targets: list[tuple[int, int]]
    max_degree: int
    count_at_max: int


class GraphState:
    """G_n: the degree-class index plus step and edge counters."""

    def __init__(self, params: ModelParams, rng: np.random.Generator,
                 vertex_capacity: int = 64, degree_capacity: int = 64):
        self.params = params
        self.rng = rng
        self.index = DegreeClassIndex(params.alpha, degree_capacity, vertex_capacity)
        self.targets = np.zeros(16, dtype=np.int64)
        self.tdeg = np.zeros(16, dtype=np.int64)

    @property
    def n(self) -> int:
        return int(self.index.isc[K.I_STEP])

    @property
    def edges(self) -> int:
        return int(self.index.isc[K.I_EDGES])

    @property
    def num_vertices(self) -> int:
        return self.index.num_vertices

    def degrees(self) -> np.ndarray:
        """Degree of v_0 .. v_n."""
        return self.index.deg[: self.num_vertices].copy()

    def _grow_for(self, status: int, m: int) -> None:
        idx = self.index
        if status == K.NEED_DEGREE_CAP:
            idx.ensure_degree_capacity(max(idx.max_degree + m, m) + 1)
        elif status == K.NEED_VERTEX_CAP:
            idx.ensure_vertex_capacity(2 * len(idx.deg))
        elif status == K.NEED_SCRATCH:
            size = max(m, 2 * len(self.targets))
            self.targets = np.zeros(size, dtype=np.int64)
            self.tdeg = np.zeros(size, dtype=np.int64)
        else:
            raise SimulationError(f"edge count draw exceeded {K.M_LIMIT:.0f}")

    def advance(self, n_end: int, checkpoints=None, ck_ptr: int = 0, klist=None, out=None) -> int:
        """Run steps until n == n_end, growing storage as needed."""
        p = self.params
        if checkpoints is None:
            checkpoints = np.zeros(0, dtype=np.int64)
            klist = np.zeros(0, dtype=np.int64)
            out = _empty_columns(0, 0)
        while True:
            status, ck_ptr, m = K.grow(
                *self.index.arrays,
                float(p.c_d), float(p.gamma), rounding_code(p), sampler_code(p),
                *p.m_dist.kernel_args,
                self.rng, n_end, self.targets, self.tdeg,
                checkpoints, ck_ptr, klist, *out)
            if status == K.OK:
                return ck_ptr
            self._grow_for(status, m)


class SimulationError(RuntimeError):
    pass


def init(params: ModelParams, rng: np.random.Generator | None = None,
         vertex_capacity: int = 64) -> GraphState:
    """G_1: vertices v_0 and v_1 joined by m_1 parallel edges."""
    if rng is None:
        rng = make_stream(params.seed)
    state = GraphState(params, rng, vertex_capacity=vertex_capacity)
    m1 = m_sample(params.m_dist, rng)
    if m1 < 0:
        raise SimulationError("edge count draw overflowed")
    state.index.add_vertex(0, m1)
    state.index.add_vertex(1, m1)
    state.index.isc[K.I_STEP] = 1
    state.index.isc[K.I_EDGES] = m1
    return state


def sample_target_naive(state: GraphState | DegreeClassIndex, d: int, rng: np.random.Generator) -> int:
    """Draw d vertices with probability deg^alpha / D and keep one of maximal
    degree, ties broken uniformly."""
    idx = state.index if isinstance(state, GraphState) else state
    if int(d) != d or d < 1:
        raise ValueError("the naive sampler needs an integer d >= 1")
    return int(K.draw_naive(idx.tree, idx.counts, idx.start, idx.order, idx.deg,
                            idx.fsc, idx.isc, float(d), rng))


def fast_class(state: GraphState | DegreeClassIndex, d: float, u: float) -> int:
    """Class of the maximum of d weighted draws, by inverting F^d at u."""
    idx = state.index if isinstance(state, GraphState) else state
    return int(K.fast_class(idx.tree, idx.counts, idx.fsc, idx.isc, float(d), float(u)))


def sample_target_fast(state: GraphState | DegreeClassIndex, d: float, rng: np.random.Generator) -> int:
    """Same law as ``sample_target_naive`` at O(log M) cost: pick the class
    from (D(k)/D)^d by inversion, then a uniform vertex within it."""
    idx = state.index if isinstance(state, GraphState) else state
    if d < 1:
        raise ValueError("d must be >= 1")
    return int(K.draw_fast(idx.tree, idx.counts, idx.start, idx.order, idx.fsc, idx.isc, float(d), rng))


def draw_targets(state: GraphState | DegreeClassIndex, d: float, count: int,
                 rng: np.random.Generator, naive: bool = False) -> np.ndarray:
    """``count`` independent targets against one frozen state."""
    idx = state.index if isinstance(state, GraphState) else state
    mode = K.NAIVE if naive else K.FAST
    return K.class_draws(idx.tree, idx.counts, idx.start, idx.order, idx.deg,
                         idx.fsc, idx.isc, float(d), mode, count, rng)


def step(state: GraphState) -> StepOutcome:
    state.advance(state.n + 1)
    m = state.index.degree(state.n)
    targets = [(int(v), int(k)) for v, k in zip(state.targets[:m], state.tdeg[:m])]
    return StepOutcome(m, targets, state.index.max_degree, state.index.count_at_max)


# --------------------------------------------------------------------------
# Full runs


def checkpoint_schedule(horizon: int, ratio: float = 1.1) -> np.ndarray:
    """Geometrically spaced step indices 1 .. horizon (both included)."""
    if ratio <= 1:
        raise ValueError("checkpoint ratio must exceed 1")
    pts = {1, horizon}
    x = 1.0
    while x <= horizon:
        pts.add(int(np.floor(x + 0.5)))
        x *= ratio
    return np.array(sorted(p for p in pts if 1 <= p <= horizon), dtype=np.int64)


COLUMNS = ("n", "M", "L", "D", "E", "S")


def _empty_columns(rows: int, nk: int) -> tuple:
    return (np.zeros(rows, np.int64), np.zeros(rows, np.int64), np.zeros(rows, np.int64),
            np.zeros(rows), np.zeros(rows, np.int64), np.zeros(rows, np.int64),
            np.zeros((rows, nk), np.int64))


@dataclass
class RunTrace:
    """Checkpointed trajectory of one run.

    Columns: step n, max degree M, L = N(M), total weight D, edge count E,
    degree sum S, and N_k for each k in ``k_list``.
    """

    n: np.ndarray
    M: np.ndarray
    L: np.ndarray
    D: np.ndarray
    E: np.ndarray
    S: np.ndarray
    N: np.ndarray
    k_list: tuple[int, ...]
    run_index: int | None = None
    error: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return self.error is not None

    def __len__(self) -> int:
        return len(self.n)

    def final(self) -> dict:
        i = len(self.n) - 1
        n = float(self.n[i])
        return {"n": int(self.n[i]), "M": int(self.M[i]), "L": int(self.L[i]),
                "D_over_n": float(self.D[i]) / n, "M_over_n": int(self.M[i]) / n,
                "N_over_n": {str(k): int(self.N[i, j]) / n for j, k in enumerate(self.k_list)}}

    def equals(self, other: RunTrace) -> bool:
        return (self.k_list == other.k_list
                and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in COLUMNS + ("N",)))

    def to_csv(self, header_lines: list[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(COLUMNS) + [f"N_{k}" for k in self.k_list])
        for i in range(len(self.n)):
            w.writerow([int(self.n[i]), int(self.M[i]), int(self.L[i]), repr(float(self.D[i])),
                        int(self.E[i]), int(self.S[i])] + [int(x) for x in self.N[i]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, run_index: int | None = None) -> RunTrace:
        rows = [r for r in csv.reader(line for line in io.StringIO(text) if not line.startswith("#"))]
        header, body = rows[0], rows[1:]
        k_list = tuple(int(h[2:]) for h in header[len(COLUMNS):])
        cols = list(zip(*body)) if body else [()] * len(header)
        ints = lambda c: np.array([int(x) for x in c], dtype=np.int64)
        return cls(n=ints(cols[0]), M=ints(cols[1]), L=ints(cols[2]),
                   D=np.array([float(x) for x in cols[3]]), E=ints(cols[4]), S=ints(cols[5]),
                   N=np.array([[int(x) for x in r[len(COLUMNS):]] for r in body],
                              dtype=np.int64).reshape(len(body), len(k_list)),
                   k_list=k_list, run_index=run_index)


def run(params: ModelParams, k_list=(1, 2, 3), checkpoint_ratio: float = 1.1,
        rng: np.random.Generator | None = None, run_index: int | None = None) -> RunTrace:
    """Grow G_1 .. G_horizon and record geometrically spaced checkpoints.

    Deterministic given the stream; failures (memory, overflowing m) are
    returned as a trace truncated at the last completed checkpoint with
    ``error`` set.
    """
    if rng is None:
        rng = make_stream(params.seed, run_index)
    ck = checkpoint_schedule(params.horizon, checkpoint_ratio)
    klist = np.array(k_list, dtype=np.int64)
    out = _empty_columns(len(ck), len(klist))
    error = None
    ptr = 0
    try:
        state = init(params, rng, vertex_capacity=params.horizon + 1)
        K.record(state.index.counts, state.index.fsc, state.index.isc, klist, 0, *out)
        ptr = 1
        ptr = state.advance(params.horizon, ck, ptr, klist, out)
    except (MemoryError, SimulationError) as exc:
        error = f"{type(exc).__name__}: {exc}"
        log.warning("run %s stopped early: %s", run_index, error)
    cols = [c[:ptr] for c in out]
    return RunTrace(*cols, k_list=tuple(int(k) for k in k_list), run_index=run_index, error=error)


def summary(trace: RunTrace, params_echo: dict, extra: dict | None = None) -> str:
    doc = {"final": trace.final(), "params": params_echo, "error": trace.error}
    doc.update(extra or {})
    return json.dumps(doc, sort_keys=True, indent=2)


__all__ = [
    "GraphState", "RunTrace", "SimulationError", "StepOutcome", "checkpoint_schedule",
    "draw_targets", "fast_class", "init", "make_stream", "run", "sample_size",
    "sample_target_fast", "sample_target_naive", "step",
]
