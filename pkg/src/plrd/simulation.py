"""Monte Carlo harness: data-generating processes, study sizing, replication engine, metrics."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy import special

from .bandwidth import expected_m
from .errors import ConfigError, DomainError, EmptyResultError, PlrdError
from .estimate import deletion_refit, parse_bandwidth_rule, select_bandwidth
from .ik import ik_bandwidth
from .kernels import get_kernel
from .ple import apply_floor, min_feasible_bandwidth, ple_fit
from .smoothing import LocPolyConfig, RdDataset, lpe_two_sided
from .variance import (METHODS as VARIANCE_METHODS, confidence_interval, deletion_estimates,
                       estimate_variance)

DELETION_METHODS = ("wu_orig", "hinkley_orig")

TAU = 0.1
NOISE_SD = 0.1295


def _splus(x):
    return np.maximum(x, 0.0) ** 2


def dgp_mean(dgp_id, x):
    """Conditional mean of the four simulation designs (jump 0.1 at 0)."""
    x = np.asarray(x, dtype=float)
    d = (x >= 0).astype(float)
    if dgp_id == 1:
        out = ((x + 1) ** 2 - 2 * _splus(x + 0.2) + 2 * _splus(x - 0.2) - 2 * _splus(x - 0.4)
               + 2 * _splus(x - 0.7) - 0.92 + 0.1 * d)
    elif dgp_id == 2:
        out = 0.42 + 0.84 * x - 3.0 * x ** 2 + 7.99 * x ** 3 - 9.01 * x ** 4 + 3.56 * x ** 5 + 0.1 * d
    elif dgp_id == 3:
        below = 0.05 + 1.5 * x + 3.2 * x ** 2 + 2.7 * x ** 3
        above = 0.15 - 0.15 * x + 2.5 * x ** 2 - 1.5 * x ** 3
        out = np.where(d > 0, above, below)
    elif dgp_id == 4:
        out = 0.1 * d
    else:
        raise DomainError(f"unknown DGP id {dgp_id!r}; expected 1-4")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DgpSpec:
    id: int
    beta_a: float
    beta_b: float
    tau_true: float = TAU
    noise_sd: float = NOISE_SD
    cutoff: float = 0.0
    mean_id: int = None

    def mean(self, x):
        return dgp_mean(self.mean_id or self.id, x)


DGPS = {
    1: DgpSpec(1, 1.0, 1.0),
    2: DgpSpec(2, 2.0, 4.0),
    3: DgpSpec(3, 14.0, 7.0),
    4: DgpSpec(4, 1.0, 1.0),
}


def get_dgp(dgp):
    if isinstance(dgp, DgpSpec):
        return dgp
    try:
        return DGPS[int(dgp)]
    except (KeyError, ValueError, TypeError):
        raise DomainError(f"unknown DGP {dgp!r}; expected 1-4") from None


def replication_seed(master_seed, replication_index):
    """128-bit Philox key for one replication, derived from ``(master_seed, index)``."""
    if replication_index < 0:
        raise DomainError("replication index must be non-negative")
    words = np.random.SeedSequence(int(master_seed), spawn_key=(int(replication_index),)) \
        .generate_state(2, np.uint64)
    return int(words[0]) << 64 | int(words[1])


def dgp_sample(dgp, n, seed):
    """Draw ``n`` observations from ``dgp`` using a Philox stream keyed by ``seed``.

    Running variable ``X = 2Z - 1`` with ``Z`` from the Beta inverse CDF of the
    first ``n`` uniforms; the errors come from the normal inverse CDF of the
    next ``n``.
    """
    dgp = get_dgp(dgp)
    if n < 2:
        raise DomainError("n must be at least 2")
    gen = np.random.Generator(np.random.Philox(key=int(seed) % (1 << 128)))
    u = gen.random(2 * n)
    x = 2.0 * special.betaincinv(dgp.beta_a, dgp.beta_b, u[:n]) - 1.0
    y = dgp.mean(x) + dgp.noise_sd * special.ndtri(u[n:])
    return RdDataset(x, y, dgp.cutoff)


def solve_n_for_mbar(dgp, m_bar_target):
    """Smallest ``n`` whose expected DISS count reaches ``m_bar_target``."""
    dgp = get_dgp(dgp)
    if not m_bar_target > 0:
        raise DomainError("m_bar target must be positive")
    hi = 2
    while expected_m(dgp.beta_a, dgp.beta_b, hi) < m_bar_target:
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if expected_m(dgp.beta_a, dgp.beta_b, mid) >= m_bar_target:
            hi = mid
        else:
            lo = mid
    return max(hi, 2)


@dataclass(frozen=True)
class MethodSpec:
    """One estimator configuration: ``ple<p>/<rule>/<variance>`` or ``lpe/<rule>``."""

    estimator: str
    degree: int
    kernel: str
    bandwidth: str
    variance: str = None

    @property
    def name(self):
        head = "lpe" if self.estimator == "lpe" else f"ple{self.degree}"
        parts = [head, self.bandwidth] + ([self.variance] if self.variance else [])
        return "/".join(parts)

    @classmethod
    def parse(cls, text):
        parts = [p.strip().lower() for p in str(text).split("/")]
        head = parts[0]
        if head == "lpe":
            if len(parts) != 2:
                raise ConfigError(f"lpe method takes only a bandwidth rule: {text!r}")
            rule = parts[1]
            if rule == "sm":
                raise ConfigError("the sm rule is specific to the partial linear estimator")
            parse_bandwidth_rule(rule)
            return cls("lpe", 1, "triangular", rule)
        if not (head.startswith("ple") and head[3:].isdigit() and len(parts) in (2, 3)):
            raise ConfigError(f"cannot parse method {text!r}; expected e.g. 'ple1/sm/ple_wu'")
        degree = int(head[3:])
        if degree > 5:
            raise ConfigError(f"degree must be 0-5 in {text!r}")
        rule = parts[1]
        try:
            parse_bandwidth_rule(rule)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        variance = parts[2] if len(parts) == 3 else "ple_wu"
        if variance not in VARIANCE_METHODS:
            raise ConfigError(f"unknown variance method {variance!r} in {text!r}")
        return cls("ple", degree, "epanechnikov", rule, variance)


@dataclass(frozen=True)
class SimStudy:
    dgp: DgpSpec
    n: int
    methods: tuple
    replications: int
    alpha: float = 0.05
    master_seed: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not self.methods:
            raise ConfigError("at least one method is required")
        methods = tuple(m if isinstance(m, MethodSpec) else MethodSpec.parse(m)
                        for m in self.methods)
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "dgp", get_dgp(self.dgp))


@dataclass(frozen=True)
class Outcome:
    tau_hat: float = math.nan
    variance: float = math.nan
    lower: float = math.nan
    upper: float = math.nan
    h: float = math.nan
    error: str = None

    @property
    def ok(self):
        return self.error is None


def _fit_group(data, method, cache):
    """Shared bandwidth and fit for methods that differ only in the variance estimator."""
    key = (method.estimator, method.degree, method.kernel, method.bandwidth)
    if key in cache:
        return cache[key]
    try:
        kernel = get_kernel(method.kernel)
        if method.estimator == "lpe":
            name, value = parse_bandwidth_rule(method.bandwidth)
            h = value if name == "fixed" else ik_bandwidth(data, kernel)
            result = ("lpe", lpe_two_sided(data, kernel, h), h)
        else:
            fkey = ("floor", method.degree, method.kernel)
            if fkey not in cache:
                cache[fkey] = min_feasible_bandwidth(data, method.degree, kernel)
            floor = cache[fkey]
            h_req, diag = select_bandwidth(data, method.bandwidth, method.degree, kernel,
                                           floor.h_min)
            h, _ = apply_floor(h_req, floor)
            config = LocPolyConfig(method.degree, kernel, h)
            nn = None if diag is None else (diag.sigma2_minus, diag.sigma2_plus)
            result = ("ple", config, ple_fit(data, config), nn)
    except PlrdError as exc:
        result = exc
    cache[key] = result
    return result


def _deletions(data, method, config, cache):
    # both delete-one-observation flavours share the refits
    key = ("deletions", method.degree, method.kernel, method.bandwidth)
    if key not in cache:
        refit = deletion_refit(method.bandwidth, method.degree, method.kernel)
        try:
            cache[key] = deletion_estimates(data, config, refit)
        except PlrdError as exc:
            cache[key] = exc
    if isinstance(cache[key], PlrdError):
        raise cache[key]
    return cache[key]


def run_method(data, method, alpha, cache=None):
    cache = {} if cache is None else cache
    group = _fit_group(data, method, cache)
    if isinstance(group, PlrdError):
        return Outcome(error=group.code)
    if group[0] == "lpe":
        _, tau, h = group
        if not math.isfinite(tau):
            return Outcome(error="non_finite")
        return Outcome(tau_hat=tau, h=h)
    _, config, fit, nn = group
    try:
        deletions = None
        if method.variance in DELETION_METHODS:
            deletions = _deletions(data, method, config, cache)
        var = estimate_variance(method.variance, data, config, fit, nn=nn, deletions=deletions)
        ci = confidence_interval(fit.tau_hat, var.se, alpha)
    except PlrdError as exc:
        return Outcome(tau_hat=fit.tau_hat, h=config.bandwidth, error=exc.code)
    if not (math.isfinite(fit.tau_hat) and math.isfinite(var.value)):
        return Outcome(error="non_finite")
    return Outcome(fit.tau_hat, var.value, ci.lower, ci.upper, config.bandwidth)


def run_replication(study, index):
    data = dgp_sample(study.dgp, study.n, replication_seed(study.master_seed, index))
    cache = {}
    return [run_method(data, m, study.alpha, cache) for m in study.methods]


def _run_chunk(args):
    study, indices = args
    return [run_replication(study, i) for i in indices]


def simulate(study, workers=1):
    """Outcomes indexed ``[replication][method]``, identical for any worker count."""
    indices = list(range(study.replications))
    if workers <= 1:
        return [run_replication(study, i) for i in indices]
    size = max(1, math.ceil(len(indices) / (4 * workers)))
    chunks = [(study, indices[k:k + size]) for k in range(0, len(indices), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, chunks))
    return [out for part in parts for out in part]


METRICS = ("mse", "bias", "emp_se", "mod_se", "rel_e", "coverage", "median_width",
           "success_rate")


def _median_mcse(w):
    # distribution-free: half-width of the order-statistic 95% interval for the median, / 1.96
    R = w.size
    if R < 2:
        return math.nan
    s = np.sort(w)
    half = 1.96 * math.sqrt(R) / 2.0
    lo = max(int(math.floor(R / 2.0 - half)), 0)
    hi = min(int(math.ceil(R / 2.0 + half)), R - 1)
    return float((s[hi] - s[lo]) / (2.0 * 1.96))


def method_metrics(tau, var, lower, upper, tau_true, success_rate, n_total):
    """Performance metrics and their Monte Carlo standard errors over one replication set.

    ``var`` may be all-NaN for point-only methods. Returns ``{metric: (estimate, mcse)}``.
    """
    R = tau.size
    err = tau - tau_true
    mean = tau.mean()
    bias = mean - tau_true
    mse = float(np.mean(err ** 2))
    emp_se = math.sqrt(np.mean((tau - mean) ** 2))
    out = {
        "bias": (float(bias), emp_se / math.sqrt(R)),
        "mse": (mse, math.sqrt(np.sum((err ** 2 - mse) ** 2) / (R * (R - 1))) if R > 1 else math.nan),
        "emp_se": (emp_se, emp_se / math.sqrt(2.0 * (R - 1)) if R > 1 else math.nan),
        "success_rate": (success_rate, math.sqrt(success_rate * (1 - success_rate) / n_total)),
    }
    if np.all(np.isnan(var)):
        for k in ("mod_se", "rel_e", "coverage", "median_width"):
            out[k] = (math.nan, math.nan)
        return out
    mod_se = math.sqrt(np.mean(var))
    var_v = float(np.var(var, ddof=1)) if R > 1 else math.nan
    mod_mcse = math.sqrt(var_v / (4.0 * R * mod_se ** 2)) if mod_se > 0 else math.nan
    ratio = mod_se / emp_se if emp_se > 0 else math.nan
    if emp_se > 0 and mod_se > 0 and R > 1:
        rel_mcse = 100.0 * ratio * math.sqrt(var_v / (4.0 * R * mod_se ** 4) + 1.0 / (2.0 * (R - 1)))
    else:
        rel_mcse = math.nan
    covered = (lower <= tau_true) & (tau_true <= upper)
    p = float(covered.mean())
    width = upper - lower
    out.update({
        "mod_se": (mod_se, mod_mcse),
        "rel_e": (100.0 * (ratio - 1.0), rel_mcse),
        "coverage": (p, math.sqrt(p * (1.0 - p) / R)),
        "median_width": (float(np.median(width)), _median_mcse(width)),
    })
    return out


@dataclass
class MetricsTable:
    methods: list
    metrics: dict
    common_success_count: int
    replications: int
    failures: dict = field(default_factory=dict)

    def value(self, method, metric):
        return self.metrics[method][metric][0]

    def mcse(self, method, metric):
        return self.metrics[method][metric][1]

    def to_csv(self):
        lines = ["method,metric,estimate,mcse"]
        for m in self.methods:
            for k in METRICS:
                est, se = self.metrics[m][k]
                lines.append(f"{m},{k},{_fmt(est)},{_fmt(se)}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {
            "replications": self.replications,
            "common_success_count": self.common_success_count,
            "methods": {m: {k: {"estimate": _json_num(v[0]), "mcse": _json_num(v[1])}
                            for k, v in self.metrics[m].items()} for m in self.methods},
            "failures": self.failures,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _fmt(v):
    return "nan" if not math.isfinite(v) else repr(float(v))


def _json_num(v):
    return float(v) if math.isfinite(v) else None


def summarize(study, outcomes):
    names = [m.name for m in study.methods]
    R = len(outcomes)
    ok = np.array([[o.ok for o in rep] for rep in outcomes], dtype=bool).reshape(R, len(names))
    common = np.flatnonzero(ok.all(axis=1))
    failures = {}
    for j, name in enumerate(names):
        counts = {}
        for rep in outcomes:
            if not rep[j].ok:
                counts[rep[j].error] = counts.get(rep[j].error, 0) + 1
        failures[name] = dict(sorted(counts.items()))
    if common.size == 0:
        raise EmptyResultError("no replication succeeded for every method", failures=failures)
    metrics = {}
    for j, (name, method) in enumerate(zip(names, study.methods)):
        rows = [outcomes[i][j] for i in common]
        tau = np.array([o.tau_hat for o in rows])
        var = np.array([o.variance for o in rows])
        lo = np.array([o.lower for o in rows])
        hi = np.array([o.upper for o in rows])
        metrics[name] = method_metrics(tau, var, lo, hi, study.dgp.tau_true,
                                       float(ok[:, j].mean()), R)
    return MetricsTable(names, metrics, int(common.size), R, failures)


def run_study(study, workers=1):
    """Simulate ``study`` and summarise over replications where every method succeeded."""
    return summarize(study, simulate(study, workers))
