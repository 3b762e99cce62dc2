"""Closed-form limits of the model and per-step diagnostics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .index import DegreeClassIndex
from .model import ModelParams, validate

REGIME_TOL = 1e-12
ROOT_TOL = 1e-12


class Regime(str, Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    SUPERCRITICAL = "Supercritical"


class RegimeMismatch(ValueError):
    pass


class BracketError(ValueError):
    pass


def classify_regime(alpha: float, gamma: float) -> Regime:
    s = alpha + gamma
    if abs(s - 1.0) <= REGIME_TOL:
        return Regime.CRITICAL
    return Regime.SUBCRITICAL if s < 1.0 else Regime.SUPERCRITICAL


@dataclass(frozen=True)
class Prediction:
    regime: Regime
    em_alpha: float
    em: float
    exponent: float
    constant: float
    alt_constant: float | None
    tail_condition_ok: bool
    formula: str

    def to_dict(self) -> dict:
        """JSON-ready; non-finite numbers become None."""
        d = {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
             for k, v in asdict(self).items()}
        d["regime"] = self.regime.value
        return d


def _require(params: ModelParams, regime: Regime) -> None:
    got = classify_regime(params.alpha, params.gamma)
    if got is not regime:
        raise RegimeMismatch(f"needs the {regime.value} regime, parameters are {got.value}")


def x_star_constants(params: ModelParams) -> tuple[float, float]:
    """Lower-bound and upper-bound constants of the sublinear growth law.

    The lower bound comes from the drift of the maximum degree with L = 1:
    (c_d E m (1-a) / (g E m^a))^(1/(1-a)).  The upper bound from the single
    vertex large-deviation argument replaces c_d E m by (E m)^(1-g).
    """
    a, g = params.alpha, params.gamma
    em, ema = params.m_dist.mean, params.em_alpha
    p = 1.0 / (1.0 - a)
    lower = (params.c_d * em * (1 - a) / (g * ema)) ** p
    upper = (em ** (1 - g) * (1 - a) / (g * ema)) ** p
    return lower, upper


def predict_x_star(params: ModelParams) -> float:
    _require(params, Regime.SUBCRITICAL)
    return x_star_constants(params)[0]


def critical_drift(x: float, params: ModelParams) -> float:
    """Mean-field drift of M(n)/n at M(n)/n = x in the critical regime:
    E m (1 - exp(-c_d x^a / E m^a)) - x."""
    em = params.m_dist.mean
    return em * -math.expm1(-params.c_d * x ** params.alpha / params.em_alpha) - x


def g(x: float, params: ModelParams) -> float:
    """1 - exp(-c_d x^a / E m^a) - x; the critical drift scaled for E m = 1."""
    return -math.expm1(-params.c_d * x ** params.alpha / params.em_alpha) - x


def bisect(f, lo: float, hi: float, tol: float = ROOT_TOL) -> float:
    """Root of f on [lo, hi] given f(lo) > 0 >= f(hi), to relative
    precision ``tol`` (roots can be as small as c_d^(1/(1-a)))."""
    flo, fhi = f(lo), f(hi)
    if not (flo > 0 >= fhi):
        raise BracketError(f"no sign change on [{lo}, {hi}]")
    if fhi == 0:
        return hi
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def predict_rho_star(params: ModelParams) -> float:
    """Stable positive root of the critical drift.

    The bracket is [2^-j, E m] with j the first power giving a positive
    drift; x = 0 is the unstable root and is never bracketed.
    """
    _require(params, Regime.CRITICAL)
    em = params.m_dist.mean
    f = lambda x: critical_drift(x, params)
    lo = em / 2
    for _ in range(1100):  # down to the smallest subnormal
        if f(lo) > 0:
            break
        lo /= 2
    else:
        raise BracketError("drift is not positive near 0")
    return bisect(f, lo, em)


def predict(params: ModelParams) -> Prediction:
    report = validate(params)
    regime = classify_regime(params.alpha, params.gamma)
    em, ema = params.m_dist.mean, params.em_alpha
    alt = None
    if not (math.isfinite(em) and math.isfinite(ema)):
        exponent = 1.0 if regime is not Regime.SUBCRITICAL else params.gamma / (1 - params.alpha)
        return Prediction(regime, ema, em, exponent, math.nan, None, report.tail_condition_ok,
                          "undefined: E m is infinite")
    if regime is Regime.SUBCRITICAL:
        exponent = params.gamma / (1 - params.alpha)
        constant, alt = x_star_constants(params)
        formula = "M(n)/n^(g/(1-a)) -> (c_d E m (1-a) / (g E m^a))^(1/(1-a))"
    elif regime is Regime.CRITICAL:
        exponent = 1.0
        constant = predict_rho_star(params)
        formula = "M(n)/n -> root of E m (1 - exp(-c_d x^a / E m^a)) = x"
    else:
        exponent = 1.0
        constant = em
        formula = "M(n)/n -> E m"
    return Prediction(regime, ema, em, exponent, constant, alt,
                      report.tail_condition_ok, formula)


# --------------------------------------------------------------------------
# Per-state quantities


def _classes(index: DegreeClassIndex) -> tuple[np.ndarray, np.ndarray]:
    cc = index.class_counts()
    ks = np.array(sorted(cc), dtype=np.int64)
    w = np.array([cc[k] * float(k) ** index.alpha for k in ks])
    return ks, w


def attachment_class_pmf(index: DegreeClassIndex, d: float) -> dict[int, float]:
    """Law of the target's degree class for one edge:
    (D(k)/D)^d - (D(k-1)/D)^d over occupied classes k."""
    ks, w = _classes(index)
    if not len(ks):
        raise ValueError("empty index")
    prefix = np.cumsum(w)
    frac = prefix / prefix[-1]
    frac[-1] = 1.0
    cdf = frac ** d
    pmf = np.diff(np.concatenate(([0.0], cdf)))
    return {int(k): float(p) for k, p in zip(ks, pmf)}


@dataclass(frozen=True)
class DriftBounds:
    lower: float
    upper: float


def drift_bounds(index: DegreeClassIndex, d: float, em: float) -> DriftBounds:
    """Bounds on E(M(n+1) - M(n) | G_n): a single top vertex (lower) and all
    L top vertices pooled (upper)."""
    if index.num_vertices == 0:
        raise ValueError("empty index")
    ks, w = _classes(index)
    total = float(np.sum(w))
    top = float(ks[-1]) ** index.alpha
    L = index.counts[ks[-1]]

    def hit(share: float) -> float:
        share = min(share, 1.0)
        return em * (1.0 - (1.0 - share) ** d)

    lower = min(max(hit(top / total), 0.0), em)
    upper = min(max(hit(top * L / total), 0.0), em)
    return DriftBounds(lower, upper)
