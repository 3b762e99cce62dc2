"""Seeded ensembles, aggregation and statistical verdicts."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .engine import RunTrace, draw_targets, init, make_stream, run
from .model import DRounding, ModelParams, SamplerMode, sample_size
from .theory import Prediction, Regime, attachment_class_pmf, predict

log = logging.getLogger(__name__)

# stream tags keep the naive and fast arms of a cross-validation independent
TAG_MAIN = 0
TAG_CV_NAIVE = 1
TAG_CV_FAST = 2
TAG_CV_FROZEN = 3


class InsufficientData(ValueError):
    pass


def json_safe(x):
    """Replace non-finite floats (anywhere in x) with None."""
    if isinstance(x, float):
        return x if np.isfinite(x) else None
    if isinstance(x, dict):
        return {k: json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [json_safe(v) for v in x]
    return x


@dataclass(frozen=True)
class EnsembleSpec:
    params: ModelParams
    replicates: int = 1
    checkpoint_ratio: float = 1.1
    k_list: tuple[int, ...] = (1, 2, 3)
    window: tuple[int, int] | None = None
    jobs: int = 1
    tag: int = TAG_MAIN

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.window is not None:
            lo, hi = self.window
            if not lo < hi <= self.params.horizon:
                raise ValueError(f"window {self.window} must satisfy lo < hi <= horizon")

    @property
    def regression_window(self) -> tuple[int, int]:
        if self.window is not None:
            return self.window
        h = self.params.horizon
        return max(1, h // 100), h

    def key(self) -> dict:
        """Everything that determines the traces (``jobs`` does not)."""
        return {"params": params_to_dict(self.params), "replicates": self.replicates,
                "checkpoint_ratio": self.checkpoint_ratio, "k_list": list(self.k_list),
                "tag": self.tag}

    def content_hash(self) -> str:
        blob = json.dumps(self.key(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def params_to_dict(p: ModelParams) -> dict:
    d = asdict(p)
    d["sampler_mode"] = p.sampler_mode.value
    d["d_rounding"] = p.d_rounding.value
    m = d.pop("m_dist")
    keep = {"deterministic": ("value",), "finite": ("values", "probs"),
            "zeta": ("beta", "k_min", "allow_infinite_variance")}[p.m_dist.kind]
    d["m_dist"] = {"kind": p.m_dist.kind, **{k: (list(m[k]) if isinstance(m[k], tuple) else m[k])
                                             for k in keep}}
    return d


@dataclass
class Verdict:
    name: str
    statistic: str
    value: float
    target: float
    tolerance: float
    comparison: str
    passed: bool
    informational: bool = False

    def line(self) -> str:
        tag = "INFO" if self.informational else ("PASS" if self.passed else "FAIL")
        return (f"[{tag}] {self.name}: {self.statistic} = {self.value:.6g} "
                f"({self.comparison}, target {self.target:.6g}, tol {self.tolerance:.6g})")


def within(name, statistic, value, target, tol, informational=False) -> Verdict:
    return Verdict(name, statistic, float(value), float(target), float(tol),
                   "|value - target| <= tol", bool(abs(value - target) <= tol), informational)


def within_rel(name, statistic, value, target, tol, informational=False) -> Verdict:
    ok = abs(value - target) <= tol * abs(target)
    return Verdict(name, statistic, float(value), float(target), float(tol),
                   "|value - target| <= tol * |target|", bool(ok), informational)


def at_least(name, statistic, value, target, tol) -> Verdict:
    """value >= target - tol (tol = 0 for a hard threshold)."""
    return Verdict(name, statistic, float(value), float(target), float(tol),
                   "value >= target - tol", bool(value >= target - tol))


def p_above(name, statistic, p, threshold) -> Verdict:
    return Verdict(name, statistic, float(p), float(threshold), float(threshold),
                   "p-value > threshold", bool(p > threshold))


@dataclass
class EnsembleReport:
    spec_hash: str
    replicates: int
    checkpoints: list[dict]
    regression: dict | None
    prediction: dict
    deltas: dict
    verdicts: list[Verdict] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    traces: list[RunTrace] = field(default_factory=list, repr=False)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    @property
    def passed(self) -> bool:
        return not self.partial and all(v.passed for v in self.verdicts if not v.informational)

    def to_dict(self) -> dict:
        return json_safe({"spec_hash": self.spec_hash, "replicates": self.replicates,
                "checkpoints": self.checkpoints, "regression": self.regression,
                "prediction": self.prediction, "deltas": self.deltas,
                "verdicts": [asdict(v) for v in self.verdicts],
                "failures": self.failures, "partial": self.partial, "passed": self.passed,
                "version": __version__})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_text(self) -> str:
        head = ("n", "med M/n", "med M/n^e", "mean D/n", "IQR M/n")
        rows = [head]
        for c in self.checkpoints:
            rows.append((str(c["n"]), f"{c['M_over_n']['median']:.6f}",
                         f"{c['M_scaled']['median']:.6f}", f"{c['D_over_n']['mean']:.6f}",
                         f"{c['M_over_n']['q75'] - c['M_over_n']['q25']:.6f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        lines = ["  ".join(x.rjust(w) for x, w in zip(r, widths)) for r in rows]
        if self.regression:
            r = self.regression
            lines.append(f"log-log slope {r['slope']:.6f} +- {r['stderr']:.6f} over n in "
                         f"[{r['window'][0]}, {r['window'][1]}]")
        lines.extend(v.line() for v in self.verdicts)
        lines.extend(f"[FAILED RUN] {f}" for f in self.failures)
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Running


def run_traces(spec: EnsembleSpec) -> list[RunTrace]:
    """R independent runs; replicate r draws from stream (seed, tag, r)."""
    p = spec.params

    def one(r: int) -> RunTrace:
        return run(p, spec.k_list, spec.checkpoint_ratio,
                   rng=make_stream(p.seed, r, spec.tag), run_index=r)

    if spec.jobs <= 1:
        return [one(r) for r in range(spec.replicates)]
    with ThreadPoolExecutor(max_workers=spec.jobs) as pool:
        return list(pool.map(one, range(spec.replicates)))


def _summary(x: np.ndarray) -> dict:
    q25, med, q75 = np.percentile(x, [25, 50, 75])
    return {"median": float(med), "mean": float(np.mean(x)), "q25": float(q25), "q75": float(q75)}


def fit_growth_exponent(traces, window: tuple[int, int]) -> dict:
    """Least-squares slope of log M(n) against log n, pooling every
    checkpoint of every replicate that falls in ``window``."""
    if isinstance(traces, RunTrace):
        traces = [traces]
    lo, hi = window
    xs, ys, distinct = [], [], set()
    for t in traces:
        sel = (t.n >= lo) & (t.n <= hi)
        xs.append(np.log(t.n[sel].astype(float)))
        ys.append(np.log(t.M[sel].astype(float)))
        distinct.update(t.n[sel].tolist())
    if len(distinct) < 10:
        raise InsufficientData(f"only {len(distinct)} checkpoints in window {window}; need 10")
    x, y = np.concatenate(xs), np.concatenate(ys)
    fit = stats.linregress(x, y)
    return {"slope": float(fit.slope), "intercept": float(fit.intercept),
            "stderr": float(fit.stderr), "points": int(len(x)), "window": [int(lo), int(hi)]}


def aggregate(traces: list[RunTrace], spec: EnsembleSpec, prediction: Prediction | None = None) -> EnsembleReport:
    """Pure function of the traces: same traces, same report."""
    if prediction is None:
        prediction = predict(spec.params)
    failures = [f"run {t.run_index}: {t.error}" for t in traces if t.partial]
    ok = [t for t in traces if len(t)]
    rows = min((len(t) for t in ok), default=0)
    e = prediction.exponent
    checkpoints = []
    for i in range(rows):
        n = int(ok[0].n[i])
        M = np.array([t.M[i] for t in ok], dtype=float)
        D = np.array([t.D[i] for t in ok])
        checkpoints.append({
            "n": n,
            "M_over_n": _summary(M / n),
            "M_scaled": _summary(M / float(n) ** e),
            "D_over_n": _summary(D / n),
            "N_over_n": {str(k): _summary(np.array([t.N[i, j] for t in ok]) / n)
                         for j, k in enumerate(spec.k_list)},
        })
    regression = None
    try:
        regression = fit_growth_exponent(ok, spec.regression_window)
    except InsufficientData as exc:
        log.info("no regression: %s", exc)
    deltas = {}
    if checkpoints:
        last = checkpoints[-1]
        dist = spec.params.m_dist
        deltas["D_over_n_mean_minus_Em_alpha"] = last["D_over_n"]["mean"] - prediction.em_alpha
        deltas["N_over_n_mean_minus_pmf"] = {
            k: last["N_over_n"][k]["mean"] - float(dist.pmf(np.array([int(k)]))[0])
            for k in last["N_over_n"]}
        key = "M_scaled" if prediction.regime is Regime.SUBCRITICAL else "M_over_n"
        deltas["M_median_minus_constant"] = last[key]["median"] - prediction.constant
        if regression:
            deltas["slope_minus_exponent"] = regression["slope"] - prediction.exponent
    return EnsembleReport(spec.content_hash(), len(traces), checkpoints, regression,
                          prediction.to_dict(), deltas, failures=failures, traces=traces)


def run_ensemble(spec: EnsembleSpec) -> EnsembleReport:
    return aggregate(run_traces(spec), spec)


# --------------------------------------------------------------------------
# Persistence


def trace_header(config: dict | None = None) -> list[str]:
    lines = [f"choicepa {__version__}"]
    if config is not None:
        lines.append("config " + json.dumps(config, sort_keys=True, separators=(",", ":")))
    return lines


def persist(report: EnsembleReport, root: Path, config: dict | None = None) -> Path:
    """Write traces and report under ``root/<spec hash>/``."""
    out = Path(root) / report.spec_hash
    out.mkdir(parents=True, exist_ok=True)
    header = trace_header(config)
    for t in report.traces:
        (out / f"trace_r{t.run_index:03d}.csv").write_text(t.to_csv(header))
    doc = report.to_dict()
    if config is not None:
        doc["config"] = config
    (out / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    (out / "report.txt").write_text(report.to_text())
    return out


def load_traces(directory: Path) -> list[RunTrace]:
    files = sorted(Path(directory).glob("trace_r*.csv"))
    return [RunTrace.from_csv(f.read_text(), run_index=int(f.stem[7:])) for f in files]


# --------------------------------------------------------------------------
# Verification


@dataclass(frozen=True)
class Tolerances:
    slope_tol: float = 0.05
    critical_tol: float = 0.05
    supercritical_threshold: float = 0.9
    constant_rel_tol: float = 0.5
    chi2_p: float = 1e-3
    ks_p: float = 1e-2
    degree_fraction_tol: float | None = None
    weight_rel_tol: float | None = None


def verify_regime(params: ModelParams, horizon: int | None = None, replicates: int = 10,
                  tol: Tolerances = Tolerances(), window=None, jobs: int = 1,
                  checkpoint_ratio: float = 1.1, k_list=(1, 2, 3)) -> EnsembleReport:
    """Ensemble at the given scale plus the regime-specific verdicts."""
    if horizon is not None:
        params = params.replace(horizon=horizon)
    spec = EnsembleSpec(params, replicates, checkpoint_ratio, tuple(k_list), window, jobs)
    report = run_ensemble(spec)
    report.verdicts.extend(regime_verdicts(report, spec, tol))
    return report


def regime_verdicts(report: EnsembleReport, spec: EnsembleSpec, tol: Tolerances) -> list[Verdict]:
    # None marks a prediction that does not exist (infinite E m); it fails
    pr = {k: (np.nan if v is None else v) for k, v in report.prediction.items()}
    regime = Regime(pr["regime"])
    last = report.checkpoints[-1]
    out = []
    if regime is Regime.SUBCRITICAL:
        if report.regression is None:
            out.append(Verdict("subcritical exponent", "log-log slope", float("nan"),
                               pr["exponent"], tol.slope_tol, "needs >= 10 checkpoints", False))
        else:
            out.append(within("subcritical exponent", "pooled log-log slope of M(n)",
                              report.regression["slope"], pr["exponent"], tol.slope_tol))
        val = last["M_scaled"]["median"]
        out.append(within_rel("subcritical constant", f"median M(n)/n^{pr['exponent']:.6g}",
                              val, pr["constant"], tol.constant_rel_tol, informational=True))
        out.append(within_rel("subcritical constant (upper-bound form)",
                              f"median M(n)/n^{pr['exponent']:.6g}",
                              val, pr["alt_constant"], tol.constant_rel_tol, informational=True))
    elif regime is Regime.CRITICAL:
        out.append(within("critical fraction", "median M(n)/n",
                          last["M_over_n"]["median"], pr["constant"], tol.critical_tol))
    else:
        out.append(at_least("condensation", "median M(n)/n",
                            last["M_over_n"]["median"], tol.supercritical_threshold * pr["em"], 0.0))
    if tol.weight_rel_tol is not None:
        out.append(within_rel("total weight", "mean D_n/n", last["D_over_n"]["mean"],
                              pr["em_alpha"], tol.weight_rel_tol))
    if tol.degree_fraction_tol is not None:
        dist = spec.params.m_dist
        for k, s in last["N_over_n"].items():
            target = float(dist.pmf(np.array([int(k)]))[0])
            out.append(within(f"degree fraction N_{k}", f"mean N_{k}(n)/n",
                              s["mean"], target, tol.degree_fraction_tol))
    return out


def chi2_against_pmf(observed: dict[int, int], pmf: dict[int, float], min_expected: float = 5.0):
    """Chi-square goodness of fit, pooling adjacent classes until every bin
    expects at least ``min_expected`` draws.  Returns (statistic, p, dof)."""
    total = sum(observed.values())
    ks = sorted(pmf)
    obs_bins, exp_bins = [], []
    o = e = 0.0
    for k in ks:
        o += observed.get(k, 0)
        e += pmf[k] * total
        if e >= min_expected:
            obs_bins.append(o)
            exp_bins.append(e)
            o = e = 0.0
    if e > 0 or o > 0:
        if exp_bins:
            obs_bins[-1] += o
            exp_bins[-1] += e
        else:
            obs_bins.append(o)
            exp_bins.append(e)
    if len(obs_bins) < 2:
        return 0.0, 1.0, 0
    exp = np.array(exp_bins)
    exp *= total / exp.sum()
    res = stats.chisquare(np.array(obs_bins), exp)
    return float(res.statistic), float(res.pvalue), len(obs_bins) - 1


def frozen_state_chi2(state, d: float, draws: int, rng: np.random.Generator, naive: bool = True):
    """Draw ``draws`` targets from one frozen state and test their degree
    classes against ``attachment_class_pmf``."""
    idx = state.index if hasattr(state, "index") else state
    targets = draw_targets(idx, d, draws, rng, naive=naive)
    ks, counts = np.unique(idx.deg[targets], return_counts=True)
    observed = {int(k): int(c) for k, c in zip(ks, counts)}
    return chi2_against_pmf(observed, attachment_class_pmf(idx, d))


def cross_validate_samplers(params: ModelParams, horizon: int = 10_000, replicates: int = 50,
                            draws: int = 100_000, tol: Tolerances = Tolerances(),
                            frozen_n: int = 300, jobs: int = 1) -> list[Verdict]:
    """(a) naive draws from a frozen state fit the closed-form class law;
    (b) final M(n)/n of naive and fast ensembles share one distribution."""
    p = params.replace(horizon=horizon)
    verdicts = []

    grow = p.replace(sampler_mode=SamplerMode.FAST)
    rng = make_stream(p.seed, 0, TAG_CV_FROZEN)
    state = init(grow, rng)
    state.advance(min(frozen_n, horizon))
    naive_p = p.replace(d_rounding=DRounding.ROUND) if p.d_rounding is DRounding.REAL else p
    d = sample_size(naive_p, state.n + 1)
    stat, pval, dof = frozen_state_chi2(state, d, draws, rng, naive=True)
    verdicts.append(p_above("naive sampler vs class law", f"chi-square p (dof {dof}, d={d})",
                            pval, tol.chi2_p))

    finals = {}
    for mode, tag in ((SamplerMode.NAIVE, TAG_CV_NAIVE), (SamplerMode.FAST, TAG_CV_FAST)):
        q = p if mode is SamplerMode.FAST else naive_p
        spec = EnsembleSpec(q.replace(sampler_mode=mode), replicates, 1e9, (1,), None, jobs, tag)
        finals[mode] = np.array([t.final()["M_over_n"] for t in run_traces(spec)])
    ks = stats.ks_2samp(finals[SamplerMode.NAIVE], finals[SamplerMode.FAST])
    verdicts.append(p_above("naive vs fast ensembles", "two-sample KS p on final M(n)/n",
                            ks.pvalue, tol.ks_p))
    return verdicts
