"""Model parameters and the law of the per-step edge count m."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from . import _kernels as K


class SamplerMode(str, Enum):
    NAIVE = "naive"
    FAST = "fast"


class DRounding(str, Enum):
    ROUND = "round"
    CEIL = "ceil"
    REAL = "real"


_ROUNDING_CODE = {DRounding.ROUND: K.ROUND, DRounding.CEIL: K.CEIL, DRounding.REAL: K.REAL}
_SAMPLER_CODE = {SamplerMode.FAST: K.FAST, SamplerMode.NAIVE: K.NAIVE}

# Terms summed explicitly before the zeta tail is replaced by an integral.
_ZETA_TERMS = 200_000
# Support values tabulated for zeta sampling; the rest comes from the
# rejection sampler in the kernels.
_ZETA_TABLE = 4096


def _power_sum(s: float, k_min: int) -> float:
    """sum_{k >= k_min} k^-s for s > 1.

    Explicit sum over _ZETA_TERMS terms, then the midpoint integral
    int_{K+1/2}^inf x^-s dx for the rest.  The midpoint rule error on the
    tail is below s(s+1)/24 * K^(-s-1)/(s+1), i.e. < 1e-13 for s > 1 at
    K = 2e5, which keeps the absolute error under 1e-12.
    """
    k = np.arange(k_min, k_min + _ZETA_TERMS, dtype=np.float64)
    head = math.fsum((k ** -s)[::-1])
    edge = k_min + _ZETA_TERMS - 0.5
    return head + edge ** (1.0 - s) / (s - 1.0)


@dataclass(frozen=True)
class MDistribution:
    """Law of m: ``deterministic`` (value), ``finite`` (values, probs) or
    ``zeta`` (beta, k_min) with Pr(m = k) proportional to k^-beta."""

    kind: str
    value: int = 1
    values: tuple[int, ...] = ()
    probs: tuple[float, ...] = ()
    beta: float = 0.0
    k_min: int = 1
    allow_infinite_variance: bool = False

    @classmethod
    def deterministic(cls, k: int) -> MDistribution:
        return cls("deterministic", value=int(k))

    @classmethod
    def finite(cls, pmf: dict[int, float]) -> MDistribution:
        items = sorted(pmf.items())
        return cls("finite", values=tuple(int(k) for k, _ in items),
                   probs=tuple(float(p) for _, p in items))

    @classmethod
    def zeta(cls, beta: float, k_min: int = 1, allow_infinite_variance: bool = False) -> MDistribution:
        return cls("zeta", beta=float(beta), k_min=int(k_min),
                   allow_infinite_variance=allow_infinite_variance)

    def problems(self) -> list[str]:
        out = []
        if self.kind == "deterministic":
            if self.value < 1:
                out.append(f"m_dist.value must be >= 1, got {self.value}")
        elif self.kind == "finite":
            if not self.values or len(self.values) != len(self.probs):
                out.append("m_dist.values and m_dist.probs must be non-empty and of equal length")
            elif min(self.values) < 1:
                out.append("m_dist.values must all be >= 1")
            elif len(set(self.values)) != len(self.values):
                out.append("m_dist.values must be distinct")
            elif min(self.probs) < 0 or abs(math.fsum(self.probs) - 1.0) > 1e-12:
                out.append(f"m_dist.probs must be non-negative and sum to 1 (sum = {math.fsum(self.probs)!r})")
        elif self.kind == "zeta":
            if self.k_min < 1:
                out.append("m_dist.k_min must be >= 1")
            if not self.beta > 1:
                out.append(f"m_dist.beta must be > 1 for a normalisable zeta law, got {self.beta}")
            elif self.beta <= 3 and not self.allow_infinite_variance:
                out.append(f"E m^2 is infinite for zeta beta={self.beta} <= 3 "
                           "(set allow_infinite_variance to run anyway)")
        else:
            out.append(f"unknown m_dist.kind {self.kind!r}")
        return out

    # -- moments ---------------------------------------------------------

    def moment(self, s: float) -> float:
        """E m^s (inf when the series diverges)."""
        if self.kind == "deterministic":
            return float(self.value) ** s
        if self.kind == "finite":
            return math.fsum(p * k ** s for k, p in zip(self.values, self.probs))
        if self.beta - s <= 1:
            return math.inf
        return _power_sum(self.beta - s, self.k_min) / self._zeta_norm

    @cached_property
    def _zeta_norm(self) -> float:
        return _power_sum(self.beta, self.k_min)

    @cached_property
    def mean(self) -> float:
        return self.moment(1.0)

    @cached_property
    def second_moment(self) -> float:
        return self.moment(2.0)

    def pmf(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k)
        if self.kind == "deterministic":
            return (k == self.value).astype(float)
        if self.kind == "finite":
            table = dict(zip(self.values, self.probs))
            return np.array([table.get(int(x), 0.0) for x in k.ravel()]).reshape(k.shape)
        kf = k.astype(float)
        return np.where(kf >= self.k_min, np.maximum(kf, 1.0) ** -self.beta / self._zeta_norm, 0.0)

    def tail_condition(self, alpha: float, gamma: float) -> bool:
        """Whether Pr(m = k) <= c k^-beta for some beta > 1 + (1-alpha)/gamma."""
        if self.kind == "zeta":
            return self.beta > 1.0 + (1.0 - alpha) / gamma
        return True

    # -- sampling --------------------------------------------------------

    @cached_property
    def kernel_args(self) -> tuple:
        """Arguments for ``_kernels.draw_m``."""
        if self.kind == "deterministic":
            z = np.zeros(1)
            return (K.M_FIXED, self.value, np.ones(1, np.int64), z, np.zeros(1, np.int64), 0.0, 1, 0.0)
        if self.kind == "finite":
            values = np.array(self.values, dtype=np.int64)
            prob, alias = alias_table(np.array(self.probs))
            return (K.M_TABLE, 0, values, prob, alias, 0.0, 1, 0.0)
        values = np.arange(self.k_min, self.k_min + _ZETA_TABLE, dtype=np.int64)
        p = values.astype(float) ** -self.beta / self._zeta_norm
        head = math.fsum(p)
        prob, alias = alias_table(p / head)
        return (K.M_TABLE_ZETA_TAIL, 0, values, prob, alias, 1.0 - head,
                self.k_min + _ZETA_TABLE, self.beta)


def alias_table(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose's alias table for the pmf ``p``."""
    n = len(p)
    q = np.asarray(p, dtype=float) * n / p.sum()
    prob = np.ones(n)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if q[i] < 1.0]
    large = [i for i in range(n) if q[i] >= 1.0]
    while small and large:
        s, g = small.pop(), large.pop()
        prob[s] = q[s]
        alias[s] = g
        q[g] = (q[g] + q[s]) - 1.0
        (small if q[g] < 1.0 else large).append(g)
    return prob, alias


def m_moment_alpha(dist: MDistribution, alpha: float) -> float:
    return dist.moment(alpha)


def m_sample(dist: MDistribution, rng: np.random.Generator, size: int | None = None):
    """One draw (or ``size`` draws) of m from ``rng``."""
    if size is None:
        return int(K.draw_m(*dist.kernel_args, rng))
    return K.draw_m_many(*dist.kernel_args, rng, size)


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    gamma: float
    c_d: float
    m_dist: MDistribution = field(default_factory=lambda: MDistribution.deterministic(1))
    sampler_mode: SamplerMode = SamplerMode.FAST
    d_rounding: DRounding = DRounding.ROUND
    seed: int = 0
    horizon: int = 1000

    def replace(self, **changes) -> ModelParams:
        from dataclasses import replace
        return replace(self, **changes)

    @property
    def em_alpha(self) -> float:
        return self.m_dist.moment(self.alpha)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    tail_condition_ok: bool = True

    @property
    def valid(self) -> bool:
        return not self.violations


def validate(params: ModelParams) -> ValidationReport:
    report = ValidationReport()
    v = report.violations
    if not 0 < params.alpha < 1:
        v.append(f"alpha must lie in (0, 1), got {params.alpha}")
    if not 0 < params.gamma < 1:
        v.append(f"gamma must lie in (0, 1), got {params.gamma}")
    if not params.c_d > 0:
        v.append(f"c_d must be positive, got {params.c_d}")
    if params.horizon < 2:
        v.append(f"horizon must be >= 2, got {params.horizon}")
    if not 0 <= params.seed < 2**64:
        v.append("seed must be an unsigned 64-bit integer")
    if params.d_rounding is DRounding.REAL and params.sampler_mode is not SamplerMode.FAST:
        v.append("d_rounding 'real' needs the fast sampler (a fractional sample has no naive realisation)")
    v.extend(params.m_dist.problems())
    if v:
        return report
    if params.m_dist.kind == "zeta" and params.m_dist.beta <= 3:
        report.warnings.append("E m^2 is infinite: the limit predictions assume a finite second moment")
    report.tail_condition_ok = params.m_dist.tail_condition(params.alpha, params.gamma)
    if not report.tail_condition_ok:
        bound = 1 + (1 - params.alpha) / params.gamma
        report.warnings.append(
            f"tail condition fails: beta={params.m_dist.beta} <= {bound:.6g}; "
            "maximum-degree predictions are unreliable")
    return report


def sample_size(params: ModelParams, n: int) -> float | int:
    """Candidate sample size d_n for the vertex arriving at step n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = K.sample_size(n, params.c_d, params.gamma, _ROUNDING_CODE[params.d_rounding])
    return d if params.d_rounding is DRounding.REAL else int(d)


def rounding_code(params: ModelParams) -> int:
    return _ROUNDING_CODE[params.d_rounding]


def sampler_code(params: ModelParams) -> int:
    return _SAMPLER_CODE[params.sampler_mode]
