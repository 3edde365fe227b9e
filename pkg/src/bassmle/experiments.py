"""Monte Carlo checks of the estimator's error rate and of the bound's ingredients."""

import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from .estimator import fit_mle
from .likelihood import (
    curvature_constant,
    fisher_sandwich,
    hellinger_gap,
    score_and_curvature,
    theorem_r,
)
from .model import MarketParams, TransformedParams, from_transformed, make_response, to_transformed
from .pricing import make_policy
from .simulate import SimConfig, simulate

EXCLUSION_LIMIT = 0.05
_BOOTSTRAP_KEY = 0xB007


def default_n_jobs():
    """Worker count: ``BASS_MLE_THREADS`` if set, else all cores."""
    value = os.environ.get("BASS_MLE_THREADS")
    if value:
        n = int(value)
        if n < 1:
            raise ValueError("BASS_MLE_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    """True parameters, design and seeding of a Monte Carlo run.

    ``x`` and ``policy`` are JSON-style specs (see :func:`make_response`,
    :func:`make_policy`).
    """

    alpha: float
    beta: float
    m: int
    n_grid: tuple
    replications: int
    seed: int
    x: object = "const"
    policy: dict = field(default_factory=lambda: {"type": "constant", "price": 0.0})
    tail: float = 0.0
    delta_bar_1: float = 1.0
    delta_bar_2: float = 1.0
    bootstrap: int = 200
    m_grid: tuple = ()
    invariance_n: int = None

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "m_grid", tuple(int(m) for m in self.m_grid))
        if not self.n_grid:
            raise ValueError("n_grid must not be empty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if self.n_grid[0] < 2:
            raise ValueError("every n in n_grid must be >= 2 (fits need two adoptions)")
        if self.n_grid[-1] > self.m:
            raise ValueError(f"max n {self.n_grid[-1]} exceeds m={self.m}")
        if isinstance(self.replications, bool) or int(self.replications) != self.replications \
                or self.replications < 1:
            raise ValueError(f"replications must be a positive integer, got {self.replications}")
        if self.bootstrap < 0:
            raise ValueError("bootstrap must be >= 0")
        self.true_transformed  # validates alpha > beta
        make_response(self.x)
        make_policy(self.policy)

    @classmethod
    def from_transformed(cls, alpha_p, beta_p, m, **kwargs):
        p = from_transformed(TransformedParams(alpha_p, beta_p), m)
        return cls(alpha=p.alpha, beta=p.beta, m=m, **kwargs)

    @property
    def true_params(self):
        return MarketParams(self.alpha, self.beta, self.m)

    @property
    def true_transformed(self):
        return to_transformed(self.true_params)

    def to_dict(self):
        out = asdict(self)
        out["n_grid"] = list(self.n_grid)
        out["m_grid"] = list(self.m_grid)
        return out


@dataclass
class MseRow:
    n: int
    mse_alpha_p: float
    mse_beta_p: float
    mse_beta_natural: float
    mse_total: float
    mse_total_scaled: float
    replications: int
    excluded: int
    mc_se: float
    invalid: bool
    mean_iterations: float = math.nan


@dataclass
class MseReport:
    """Per-n mean squared errors plus the fitted log-log rate."""

    rows: list
    slope: float
    slope_ci: tuple
    slope_beta_natural: float
    slope_beta_natural_ci: tuple
    scaled_ratio: float
    errors: dict = field(default_factory=dict, repr=False)
    iterations: dict = field(default_factory=dict, repr=False)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_dict(self):
        return {
            "rows": [asdict(r) for r in self.rows],
            "slope": self.slope,
            "slope_ci": list(self.slope_ci),
            "slope_beta_natural": self.slope_beta_natural,
            "slope_beta_natural_ci": list(self.slope_beta_natural_ci),
            "scaled_ratio": self.scaled_ratio,
            "iterations": {str(n): [int(v) for v in it] for n, it in self.iterations.items()},
        }


def _stream(seed, n, rep):
    return np.random.SeedSequence(seed, spawn_key=(int(n), int(rep)))


def _replicate(params, x, policy, tail, n, seed, reps):
    """Fit ``reps`` simulated paths with ``n`` adoptions; returns one row per replication.

    Columns: alpha_p_hat, beta_p_hat, usable flag, optimizer iterations (-1 if the fit raised).
    """
    out = np.empty((len(reps), 4))
    for k, rep in enumerate(reps):
        cfg = SimConfig(params, x, policy, target_n=n, seed=_stream(seed, n, rep), tail=tail)
        try:
            res = fit_mle(simulate(cfg), x)
        except (ValueError, ArithmeticError):
            out[k] = (math.nan, math.nan, 0.0, -1.0)
            continue
        ok = res.converged and not res.at_boundary
        out[k] = (res.alpha_p, res.beta_p, float(ok), res.iterations)
    return out


def _fit_grid(params, x_spec, policy_spec, tail, n_values, replications, seed, n_jobs):
    x = make_response(x_spec)
    policy = make_policy(policy_spec)
    n_jobs = n_jobs or default_n_jobs()
    chunk = max(1, math.ceil(replications / (4 * n_jobs)))
    tasks = [(n, list(range(s, min(s + chunk, replications))))
             for n in n_values for s in range(0, replications, chunk)]
    if n_jobs == 1:
        parts = [_replicate(params, x, policy, tail, n, seed, reps) for n, reps in tasks]
    else:
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_replicate)(params, x, policy, tail, n, seed, reps) for n, reps in tasks
        )
    by_n = {}
    for (n, _), part in zip(tasks, parts):
        by_n.setdefault(n, []).append(part)
    return {n: np.vstack(by_n[n]) for n in n_values}


def _squared_errors(fits, tp0):
    ok = fits[:, 2] > 0
    a, b = fits[ok, 0], fits[ok, 1]
    beta0 = tp0.alpha_p * tp0.beta_p
    return np.column_stack([(a - tp0.alpha_p) ** 2, (b - tp0.beta_p) ** 2, (a * b - beta0) ** 2])


def _ols_slope(x, y):
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    keep = np.isfinite(y) & np.isfinite(x)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(x[keep], y[keep], 1)[0])


def _bootstrap_slopes(grid_values, errors, column, n_boot, seed):
    """Percentile 95% interval of the OLS slope, resampling replications within each grid point."""
    if n_boot == 0:
        return (math.nan, math.nan)
    rng = np.random.default_rng([seed, _BOOTSTRAP_KEY, 3 if column == "total" else column])
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        mses = []
        for g in grid_values:
            e = errors[g]
            if len(e) == 0:
                mses.append(math.nan)
                continue
            idx = rng.integers(0, len(e), len(e))
            mses.append(_column_mse(e[idx], column))
        slopes[b] = _ols_slope(grid_values, mses)
    slopes = slopes[np.isfinite(slopes)]
    if not len(slopes):
        return (math.nan, math.nan)
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    return (float(lo), float(hi))


def _column_mse(e, column):
    if column == "total":
        return float((e[:, 0] + e[:, 1]).mean())
    return float(e[:, column].mean())


def run_mse_experiment(config, n_jobs=None):
    """Estimate the conditional MSE of the transformed MLE at each ``n`` in the grid.

    Each replication simulates until exactly ``n`` adoptions with its own
    seed stream ``(config.seed, n, replication)``, so the report is
    reproducible and independent of ``n_jobs``. Failed or boundary fits are
    dropped from the averages and counted in ``excluded``.
    """
    tp0 = config.true_transformed
    fits = _fit_grid(config.true_params, config.x, config.policy, config.tail,
                     config.n_grid, config.replications, config.seed, n_jobs)
    rows, errors, iterations = [], {}, {}
    for n in config.n_grid:
        e = _squared_errors(fits[n], tp0)
        errors[n] = e
        iterations[n] = fits[n][:, 3].astype(int)
        ran = iterations[n][iterations[n] >= 0]
        mean_it = float(ran.mean()) if len(ran) else math.nan
        used = len(e)
        excluded = config.replications - used
        if used:
            total = e[:, 0] + e[:, 1]
            mse_a, mse_b, mse_nat = (float(v) for v in e.mean(axis=0))
            mse_total = float(total.mean())
            mc_se = float(total.std(ddof=1) / math.sqrt(used)) if used > 1 else math.nan
        else:
            mse_a = mse_b = mse_nat = mse_total = mc_se = math.nan
        rows.append(MseRow(n, mse_a, mse_b, mse_nat, mse_total, mse_total * (n + 1), used,
                           excluded, mc_se, excluded > EXCLUSION_LIMIT * config.replications, mean_it))
    ns = [r.n for r in rows]
    scaled = np.array([r.mse_total_scaled for r in rows])
    finite = scaled[np.isfinite(scaled)]
    ratio = float(finite.max() / finite.min()) if len(finite) else math.nan
    return MseReport(
        rows,
        _ols_slope(ns, [r.mse_total for r in rows]),
        _bootstrap_slopes(ns, errors, "total", config.bootstrap, config.seed),
        _ols_slope(ns, [r.mse_beta_natural for r in rows]),
        _bootstrap_slopes(ns, errors, 2, config.bootstrap, config.seed),
        ratio,
        errors,
        iterations,
    )


@dataclass(frozen=True)
class TheoremConstants:
    """Constants of the conditional MSE bound ``alpha_theta / (n + 1)``."""

    R: float
    C_I_alpha: float
    C_I_beta: float
    delta_bar_1: float
    delta_bar_2: float
    alpha_theta: float

    @classmethod
    def from_params(cls, tp, delta_bar_1=1.0, delta_bar_2=1.0):
        if delta_bar_1 <= 0 or delta_bar_2 <= 0:
            raise ValueError("delta_bar values must be > 0")
        r = theorem_r(tp)
        c1 = curvature_constant(tp, 1, delta_bar_1)
        c2 = curvature_constant(tp, 2, delta_bar_2)
        return cls(r, c1, c2, delta_bar_1, delta_bar_2, 8.0 * math.sqrt(r) * max(c1, c2))


def delta_bar_needed(tp, empirical_constant):
    """Smallest common ``delta_bar`` whose ``alpha_theta`` reaches ``empirical_constant``."""
    target = empirical_constant / (8.0 * math.sqrt(theorem_r(tp)))
    if not math.isfinite(target):
        return math.inf
    root = math.sqrt(target)
    via_alpha = root / tp.alpha_p - 1.0
    via_beta = (root - 1.0) / tp.beta_p - 1.0
    return max(0.0, min(via_alpha, via_beta))


@dataclass
class BoundCheck:
    rows: list
    empirical_constant: float
    alpha_theta: float
    passed: bool
    delta_bar_needed: float

    def to_dict(self):
        return asdict(self)


def verify_theorem_bound(report, constants, tp=None):
    """Compare each row's ``mse_total`` with ``alpha_theta / (n + 1)``.

    Rows without usable fits count as failures. When ``tp`` is given, the
    common ``delta_bar`` that would make every row pass is also reported.
    """
    rows = []
    for r in report.rows:
        bound = constants.alpha_theta / (r.n + 1)
        ok = bool(math.isfinite(r.mse_total) and r.mse_total <= bound)
        rows.append({"n": r.n, "mse_total": r.mse_total, "bound": bound, "passed": ok})
    scaled = report.column("mse_total_scaled")
    empirical = float(np.max(scaled)) if np.all(np.isfinite(scaled)) else math.inf
    needed = delta_bar_needed(tp, empirical) if tp is not None else math.nan
    return BoundCheck(rows, empirical, constants.alpha_theta, all(r["passed"] for r in rows), needed)


@dataclass
class InvarianceTable:
    n: int
    rows: list
    slope: float
    spread: float
    passed: bool

    def to_dict(self):
        return asdict(self)


def run_m_invariance_check(config, m_grid, n, tolerance=0.3, n_jobs=None):
    """MSE at a fixed ``n`` across market sizes; passes if the log-log slope in ``m`` is within ``tolerance``."""
    m_grid = [int(m) for m in m_grid]
    if not m_grid:
        raise ValueError("m_grid must not be empty")
    if min(m_grid) < 2 * n:
        raise ValueError(f"every m must be >= 2n = {2 * n}, got {min(m_grid)}")
    rows = []
    for m in m_grid:
        cfg = replace(config, m=m, n_grid=(n,), bootstrap=0, m_grid=())
        r = run_mse_experiment(cfg, n_jobs=n_jobs).rows[0]
        rows.append({"m": m, "mse_total": r.mse_total, "mse_alpha_p": r.mse_alpha_p,
                     "mse_beta_p": r.mse_beta_p, "excluded": r.excluded, "invalid": r.invalid})
    mses = np.array([r["mse_total"] for r in rows])
    slope = _ols_slope(m_grid, mses)
    finite = mses[np.isfinite(mses)]
    spread = float(finite.max() / finite.min()) if len(finite) else math.nan
    return InvarianceTable(n, rows, slope, spread, bool(abs(slope) <= tolerance))


@dataclass
class DiagnosticsReport:
    hellinger_rows: list
    fisher_rows: list
    skipped: int

    @property
    def all_hold(self):
        return all(r["holds"] and r["affinity_le_exp"] for r in self.hellinger_rows) and all(
            r["holds"] for r in self.fisher_rows
        )

    def violations(self):
        bad = [r for r in self.hellinger_rows if not (r["holds"] and r["affinity_le_exp"])]
        return bad + [r for r in self.fisher_rows if not r["holds"]]

    def to_dict(self):
        return {"hellinger": self.hellinger_rows, "fisher": self.fisher_rows,
                "skipped": self.skipped, "all_hold": self.all_hold}


def run_diagnostics(tp, m, deltas=None, states=None, n_values=None, price=0.0, x="const",
                    delta_bar_1=1.0, delta_bar_2=1.0):
    """Tabulate the Hellinger lower bound and the Fisher sandwich over grids.

    ``deltas`` are absolute perturbation sizes; each is used in every
    direction whose admissible range ``[0, delta_bar * component]`` holds it,
    otherwise the pair is skipped. By default eleven evenly spaced fractions of
    each direction's range are used.
    """
    x = make_response(x)
    states = list(range(0, m, max(1, m // 8))) if states is None else list(states)
    n_values = sorted({1, max(1, m // 4), max(1, m // 2), m}) if n_values is None else list(n_values)
    rows, skipped = [], 0
    for direction, dbar, base in ((1, delta_bar_1, tp.alpha_p), (2, delta_bar_2, tp.beta_p)):
        grid = np.linspace(0.0, dbar * base, 11) if deltas is None else np.asarray(deltas, float)
        for d in grid:
            if not 0 <= d <= dbar * base:
                skipped += len(states)
                continue
            for j in states:
                g = hellinger_gap(j, tp, m, float(d), direction, price, x, dbar)
                rows.append({
                    "state": j, "direction": direction, "delta": float(d),
                    "hellinger_sq": g.hellinger_sq, "kl_bound": g.kl_bound,
                    "affinity": g.affinity, "holds": bool(g.holds),
                    "affinity_le_exp": bool(g.affinity <= math.exp(-g.hellinger_sq / 2) + 1e-15),
                })
    fisher = []
    for n in n_values:
        s = fisher_sandwich(n, m, tp.beta_p)
        fisher.append({"n": n, "m": m, "beta_p": tp.beta_p, "lower": s.lower, "exact": s.exact,
                       "upper": s.upper, "holds": bool(s.lower <= s.exact <= s.upper)})
    return DiagnosticsReport(rows, fisher, skipped)


@dataclass
class ScoreIdentity:
    mean: np.ndarray
    std_error: np.ndarray
    z: np.ndarray
    replications: int


def score_identity(params, x, policy, replications, seed, horizon=None, target_n=None):
    """Monte Carlo mean of the score at the true parameters, which should vanish."""
    tp0 = to_transformed(params)
    x = make_response(x)
    policy = make_policy(policy)
    grads = np.empty((replications, 2))
    for k in range(replications):
        cfg = SimConfig(params, x, policy, horizon=horizon, target_n=target_n,
                        seed=np.random.SeedSequence(seed, spawn_key=(k,)))
        grads[k] = score_and_curvature(simulate(cfg), tp0, x).gradient
    mean = grads.mean(axis=0)
    se = grads.std(axis=0, ddof=1) / math.sqrt(replications)
    return ScoreIdentity(mean, se, mean / se, replications)
