"""Illness-death simulation scenarios, their exact truths and replication studies.

Every transition hazard is linear in time, ``lambda(t) = r t``::

    r0(z) = 0.10 - 0.05 a z    healthy -> dead
    r*(z) = 0.08 - 0.04 b z    healthy -> ill (non-terminal event)
    r1(z) = 0.30 - 0.10 c z    ill -> dead

so every cumulative hazard is ``r t^2 / 2`` and event times are drawn by
exact inversion.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy import integrate

from .decomposition import CELLS, TARGETS, cell_arrays
from .event_data import CohortArrays, SubjectRecord, panel_counts, pooled_grid
from .inference import (
    MAX_FAILED_FRACTION,
    _replicate_weights,
    eval_index,
    haz_variance,
    percentile_band,
    prev_partial_variance,
    replicate_failures,
    wald_band,
    weighted_targets,
)

__all__ = [
    "SETTINGS",
    "STUDY_TARGETS",
    "OracleCurves",
    "ScenarioConfig",
    "StudySummary",
    "generate_arrays",
    "generate_dataset",
    "oracle",
    "rates",
    "run_study",
]

BASE_RATES = {"0": 0.10, "star": 0.08, "1": 0.30}
EFFECT_RATES = {"0": 0.05, "star": 0.04, "1": 0.10}

SETTINGS = {
    "1": {"a": 1, "b": 0, "c": 0},
    "2": {"a": 0, "b": 1, "c": 0},
    "3": {"a": 0, "b": 0, "c": 1},
    "null": {"a": 0, "b": 0, "c": 0},
}

STUDY_TARGETS = ("F00", "F01", "F10", "F11", "total", "DE", "IE", "DE_alt", "IE_alt")
DECOMPOSITIONS = ("prev", "haz")
# Truth used for coverage: A7 holds the prevalence fixed, A8 the hazard.
ASSUMPTION = {"A7": "prev", "A8": "haz"}


class ConfigError(ValueError):
    """Invalid scenario configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario and its replication-study settings."""

    a: int = 0
    b: int = 0
    c: int = 0
    m: int = 500
    p_treat: float = 0.5
    censor_low: float = 6.0
    censor_high: float = 10.0
    horizon: float = 10.0
    n_reps: int = 1000
    n_boot: int = 200
    seed: int = 20240601
    eval_times: tuple = (2.0, 4.0, 6.0, 8.0)
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "eval_times", tuple(float(t) for t in self.eval_times))
        problems = []
        for key in ("a", "b", "c"):
            if getattr(self, key) not in (0, 1):
                problems.append(f"{key} must be 0 or 1")
        if not 0 <= self.p_treat <= 1:
            problems.append("p_treat must lie in [0, 1]")
        if not self.censor_low < self.censor_high:
            problems.append("censor_low must be < censor_high")
        if self.censor_low < 0 or self.horizon <= 0:
            problems.append("censoring support and horizon must be positive")
        if self.m < 2:
            problems.append("m must be at least 2")
        if self.n_reps < 1:
            problems.append("n_reps must be at least 1")
        if self.n_boot < 2:
            problems.append("n_boot must be at least 2")
        if any(not 0 <= t <= self.horizon for t in self.eval_times):
            problems.append("eval_times must lie in [0, horizon]")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def setting(cls, name, **overrides):
        """Predefined scenario '1', '2', '3' or 'null' with overrides."""
        name = str(name)
        if name not in SETTINGS:
            raise ConfigError(f"unknown setting {name!r}; choose from {', '.join(SETTINGS)}")
        return cls(**{**SETTINGS[name], "name": name, **overrides})

    def rates(self, z):
        return rates(self.a, self.b, self.c, z)

    @property
    def entropy(self):
        return (int(self.seed), int(self.a), int(self.b), int(self.c))

    def to_text(self):
        """Flat ``key=value`` form read back by :meth:`from_text`."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "eval_times":
                value = ",".join(repr(t) for t in value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, **overrides):
        """Parse flat ``key=value`` lines (``#`` starts a comment).  A
        ``setting`` key selects a predefined scenario as the base."""
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            raw[key] = value
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw):
        raw = dict(raw)
        base = {}
        if "setting" in raw:
            name = str(raw.pop("setting"))
            if name != "custom":
                if name not in SETTINGS:
                    raise ConfigError(f"unknown setting {name!r}")
                base = {**SETTINGS[name], "name": name}
        types = {f.name: f.type for f in fields(cls)}
        values = dict(base)
        for key, value in raw.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                values[key] = _coerce(key, value)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        return cls(**values)


def _coerce(key, value):
    if key == "eval_times":
        if isinstance(value, str):
            return tuple(float(v) for v in value.split(",") if v.strip())
        return tuple(float(v) for v in value)
    if key == "name":
        return str(value)
    if key in ("a", "b", "c", "m", "n_reps", "n_boot", "seed"):
        number = float(value)
        if not number.is_integer():
            raise ValueError(f"{value!r} is not an integer")
        return int(number)
    return float(value)


def rates(a, b, c, z):
    """Hazard slopes ``(r0, r*, r1)`` in arm ``z``."""
    return (
        BASE_RATES["0"] - EFFECT_RATES["0"] * a * z,
        BASE_RATES["star"] - EFFECT_RATES["star"] * b * z,
        BASE_RATES["1"] - EFFECT_RATES["1"] * c * z,
    )


# -- data generation ------------------------------------------------------------


def _data_rng(config, replicate_index):
    return np.random.default_rng(np.random.SeedSequence(config.entropy, spawn_key=(replicate_index, 0)))


def _boot_seed(config, replicate_index):
    return np.random.SeedSequence(config.entropy, spawn_key=(replicate_index, 1))


def generate_arrays(config: ScenarioConfig, replicate_index: int) -> CohortArrays:
    """Draw one dataset as column arrays (see :func:`generate_dataset`)."""
    rng = _data_rng(config, replicate_index)
    m = config.m
    z = (rng.random(m) < config.p_treat).astype(np.int64)
    exit_draw = rng.exponential(size=m)
    cause_draw = rng.random(m)
    death_draw = rng.exponential(size=m)
    censor = np.minimum(rng.uniform(config.censor_low, config.censor_high, m), config.horizon)

    r0, rs, r1 = (np.where(z == 1, v1, v0) for v0, v1 in zip(config.rates(0), config.rates(1)))
    with np.errstate(divide="ignore"):
        t_exit = np.sqrt(2.0 * exit_draw / (rs + r0))
        ill = cause_draw < rs / (rs + r0)
        t_death_after = np.sqrt(t_exit**2 + 2.0 * death_draw / r1)
    t2 = np.where(ill, t_death_after, t_exit)

    x2 = np.minimum(t2, censor)
    d2 = (t2 <= censor).astype(np.int64)
    d1 = (ill & (t_exit <= censor)).astype(np.int64)
    x1 = np.where(d1 == 1, t_exit, x2)
    return CohortArrays(z, x1, d1, x2, d2)


def generate_dataset(config: ScenarioConfig, replicate_index: int):
    """One simulated dataset as :class:`~semimed.event_data.SubjectRecord`s.

    Exit from the healthy state happens at ``sqrt(2E / (r* + r0))`` with
    ``E ~ Exp(1)``; it is the non-terminal event with probability
    ``r* / (r* + r0)``, after which death follows at
    ``sqrt(s^2 + 2E' / r1)``.  Censoring is uniform on
    ``[censor_low, censor_high]`` and capped at ``horizon``.
    """
    data = generate_arrays(config, replicate_index)
    return [
        SubjectRecord(str(i), int(data.z[i]), float(data.x1[i]), int(data.d1[i]), float(data.x2[i]), int(data.d2[i]))
        for i in range(len(data))
    ]


# -- oracle ---------------------------------------------------------------------


class _Scenario:
    """Closed-form hazards of one counterfactual cell."""

    def __init__(self, config, z_star, z_terminal):
        self.r0, _, self.r1 = config.rates(z_terminal)
        _, self.rs, _ = config.rates(z_star)

    def healthy(self, t):
        return math.exp(-(self.rs + self.r0) * t * t / 2)

    def haz_integrand(self, s, t):
        # exp{-L*(s) - L0(s) + L1(s) - L1(t)} dL*(s)
        return math.exp(-(self.rs + self.r0 - self.r1) * s * s / 2 - self.r1 * t * t / 2) * self.rs * s

    def ill(self, t):
        """Probability of being alive after the non-terminal event."""
        value, _ = integrate.quad(self.haz_integrand, 0.0, t, args=(t,), epsabs=1e-13, epsrel=1e-12)
        return value

    def ill_closed(self, t):
        """:meth:`ill` in closed form (all hazards are linear in time)."""
        k = (self.rs + self.r0 - self.r1) / 2
        u = t * t
        # rs/(2k) (1 - exp(-k u)) exp(-r1 u / 2), with the k -> 0 limit
        scale = u if k == 0 else -math.expm1(-k * u) / k
        return self.rs / 2 * scale * math.exp(-self.r1 * u / 2)


def true_haz(config, z1, z2, t):
    """``F_haz(t; z1, z2)`` by quadrature of its single-integral form."""
    cell = _Scenario(config, z1, z2)
    return 1.0 - cell.healthy(t) - cell.ill(t)


def true_prev_cumhaz(config, z1, z2, grid):
    """Cumulative ``int w0(s; z1) dL0(s; z2) + w1(s; z1) dL1(s; z2)`` on a sorted grid."""
    world = _Scenario(config, z1, z1)
    r0, _, r1 = config.rates(z2)

    def integrand(s):
        healthy = world.healthy(s)
        ill = world.ill_closed(s)
        alive = healthy + ill
        if alive <= 0:
            return 0.0
        return (healthy * r0 + ill * r1) * s / alive

    out = np.zeros(len(grid))
    total, prev = 0.0, 0.0
    for k, t in enumerate(grid):
        piece, _ = integrate.quad(integrand, prev, t, epsabs=1e-12, epsrel=1e-10, limit=200)
        total += piece
        out[k] = total
        prev = t
    return out


@dataclass(frozen=True)
class OracleCurves:
    """Exact incidences and effects of a scenario on a grid.

    ``F[decomposition][(z1, z2)]`` holds the true counterfactual incidence
    under the prevalence-controlling ('prev') and hazard-controlling
    ('haz') identifications.
    """

    config: ScenarioConfig
    grid: np.ndarray
    F: dict

    def target(self, decomposition, target):
        return sum(coef * self.F[decomposition][cell] for cell, coef in TARGETS[target].items())

    def cumulative_hazard(self, kind, arm, t):
        """Closed-form ``Lambda(t) = r t^2 / 2`` for kind '0', 'star' or '1'."""
        r0, rs, r1 = self.config.rates(arm)
        r = {"0": r0, "star": rs, "1": r1}[kind]
        return r * np.asarray(t, dtype=float) ** 2 / 2


def oracle(config: ScenarioConfig, grid) -> OracleCurves:
    """True ``F_prev`` and ``F_haz`` on ``grid`` (absolute error below 1e-6)."""
    grid = np.asarray(grid, dtype=float)
    order = np.argsort(grid)
    F = {"prev": {}, "haz": {}}
    for z1, z2 in CELLS:
        F["haz"][z1, z2] = np.array([true_haz(config, z1, z2, t) for t in grid])
        cum = np.empty(grid.size)
        cum[order] = true_prev_cumhaz(config, z1, z2, grid[order])
        F["prev"][z1, z2] = -np.expm1(-cum)
    return OracleCurves(config, grid, F)


# -- replication study ------------------------------------------------------------


@dataclass
class ReplicateResult:
    """Per-replicate estimates and intervals; arrays are ``(n_keys, T)``."""

    index: int
    estimate: np.ndarray
    asym_se: np.ndarray
    boot_se: np.ndarray
    boot_lo: np.ndarray
    boot_hi: np.ndarray
    n_boot_failed: int
    boot_ok: bool


def _study_keys():
    return [(d, t) for d in DECOMPOSITIONS for t in STUDY_TARGETS]


def replicate(config: ScenarioConfig, index: int, alpha=0.05) -> ReplicateResult:
    """Generate dataset ``index``, estimate every study target, and compute
    its asymptotic and bootstrap uncertainty at ``config.eval_times``."""
    data = generate_arrays(config, index)
    arms = {arm: data.arm(arm) for arm in (0, 1)}
    sizes = (len(arms[0]), len(arms[1]))
    if min(sizes) == 0:
        raise RuntimeError(f"replicate {index}: an arm is empty")
    grid = pooled_grid(data)
    idx = eval_index(grid, config.eval_times)
    keys = _study_keys()

    boot = _replicate_weights(sizes, _boot_seed(config, index), range(config.n_boot))
    weights = {arm: np.vstack((np.ones((1, sizes[arm])), boot[arm])) for arm in (0, 1)}
    values, terminal = weighted_targets(arms, grid, weights, keys, idx)
    estimate = np.stack([values[k][0] for k in keys])
    reps = {k: v[1:] for k, v in values.items()}
    bad = replicate_failures(reps, terminal[1:], terminal[0])
    n_failed = int(bad.sum())
    boot_ok = n_failed <= MAX_FAILED_FRACTION * config.n_boot

    counts = {arm: panel_counts(arms[arm], grid) for arm in (0, 1)}
    cells = {d: cell_arrays(counts, d) for d in DECOMPOSITIONS}
    asym = np.full(estimate.shape, np.nan)
    boot_se = np.full(estimate.shape, np.nan)
    boot_lo = np.full(estimate.shape, np.nan)
    boot_hi = np.full(estimate.shape, np.nan)
    for row, (d, target) in enumerate(keys):
        if d == "haz":
            var, _ = haz_variance(counts, cells[d], target, idx)
        else:
            var, _, partial = prev_partial_variance(counts, cells[d], target, idx)
        asym[row] = np.sqrt(var)
        if boot_ok:
            good = reps[d, target][~bad]
            boot_se[row] = np.std(good, axis=0, ddof=1)
            boot_lo[row], boot_hi[row] = percentile_band(estimate[row], good, alpha, _lower(target))
    return ReplicateResult(index, estimate, asym, boot_se, boot_lo, boot_hi, n_failed, boot_ok)


def _lower(target):
    return 0.0 if target.startswith("F") else -1.0


def _partial(decomposition, target):
    return decomposition == "prev" and any(z1 != z2 for z1, z2 in TARGETS[target])


SUMMARY_COLUMNS = ("setting", "effect", "decomposition", "truth_assumption", "stat", "t", "value")
REPLICATE_COLUMNS = (
    "replicate", "decomposition", "target", "t", "estimate",
    "asymptotic_se", "bootstrap_se", "bootstrap_lo", "bootstrap_hi",
)


def _fmt(value):
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class StudySummary:
    """Aggregated replication study.

    ``rows`` follow :data:`SUMMARY_COLUMNS`.  Truth-free statistics (SD and
    standard errors) are listed under both truth assumptions so that each
    block reads like a complete table.
    """

    config: ScenarioConfig
    rows: list
    replicates: list = field(repr=False)
    truth: OracleCurves = field(repr=False)
    n_failed_replicates: int = 0

    def value(self, effect, decomposition, stat, t, truth_assumption="A7"):
        for row in self.rows:
            if (
                row["effect"] == effect
                and row["decomposition"] == decomposition
                and row["stat"] == stat
                and row["truth_assumption"] == truth_assumption
                and row["t"] == float(t)
            ):
                return row["value"]
        raise KeyError((effect, decomposition, stat, t, truth_assumption))

    def to_csv(self, fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])

    def replicates_to_csv(self, fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPLICATE_COLUMNS)
        keys = _study_keys()
        for rep in self.replicates:
            for row, (d, target) in enumerate(keys):
                for j, t in enumerate(self.config.eval_times):
                    writer.writerow([
                        rep.index, d, target, _fmt(t), _fmt(rep.estimate[row, j]),
                        _fmt(rep.asym_se[row, j]) if not _partial(d, target) else "",
                        _fmt(rep.boot_se[row, j]), _fmt(rep.boot_lo[row, j]), _fmt(rep.boot_hi[row, j]),
                    ])

    def pretty(self, effects=("DE", "IE")):
        """Fixed-width table of the main statistics per truth block."""
        times = self.config.eval_times
        out = io.StringIO()
        head = f"{'block':<5} {'effect':<7} {'decomp':<6} {'stat':<24}" + "".join(f"{'t=' + format(t, 'g'):>9}" for t in times)
        out.write(head + "\n" + "-" * len(head) + "\n")
        order = ("SD", "Asymptotic SE", "Bootstrap SE", "Asymptotic coverage", "Bootstrap coverage")
        for block in ASSUMPTION:
            for eff in effects:
                for d in DECOMPOSITIONS:
                    for stat in order:
                        vals = []
                        for t in times:
                            try:
                                vals.append(self.value(eff, d, stat, t, block))
                            except KeyError:
                                vals = None
                                break
                        if vals:
                            out.write(
                                f"{block:<5} {eff:<7} {d:<6} {stat:<24}"
                                + "".join(f"{v:>9.3f}" for v in vals)
                                + "\n"
                            )
        return out.getvalue()


def summarize(config: ScenarioConfig, results, truth: OracleCurves) -> StudySummary:
    keys = _study_keys()
    times = config.eval_times
    est = np.stack([r.estimate for r in results])  # (R, K, T)
    asym = np.stack([r.asym_se for r in results])
    ok = np.array([r.boot_ok for r in results])
    boot_se = np.stack([r.boot_se for r in results])[ok]
    boot_lo = np.stack([r.boot_lo for r in results])[ok]
    boot_hi = np.stack([r.boot_hi for r in results])[ok]
    rows = []

    def add(effect, d, block, stat, values):
        for t, v in zip(times, values):
            rows.append({
                "setting": config.name, "effect": effect, "decomposition": d,
                "truth_assumption": block, "stat": stat, "t": float(t), "value": float(v),
            })

    n_reps = est.shape[0]
    for k, (d, target) in enumerate(keys):
        partial = _partial(d, target)
        sd = np.std(est[:, k], axis=0, ddof=1) if n_reps > 1 else np.zeros(len(times))
        for block, truth_d in ASSUMPTION.items():
            true = truth.target(truth_d, target)
            add(target, d, block, "Truth", true)
            add(target, d, block, "Mean estimate", est[:, k].mean(axis=0))
            add(target, d, block, "SD", sd)
            if partial:
                add(target, d, block, "Partial asymptotic SE", asym[:, k].mean(axis=0))
            else:
                add(target, d, block, "Asymptotic SE", asym[:, k].mean(axis=0))
                lo, hi = wald_band(est[:, k], asym[:, k], 0.05, _lower(target))
                add(target, d, block, "Asymptotic coverage", np.mean((lo <= true) & (true <= hi), axis=0))
            if ok.any():
                add(target, d, block, "Bootstrap SE", boot_se[:, k].mean(axis=0))
                inside = (boot_lo[:, k] <= true) & (true <= boot_hi[:, k])
                add(target, d, block, "Bootstrap coverage", inside.mean(axis=0))
    return StudySummary(config, rows, list(results), truth, int((~ok).sum()))


def run_study(config: ScenarioConfig, threads=1, progress=None) -> StudySummary:
    """Run ``config.n_reps`` replicates and summarize them.

    Each replicate draws its data and bootstrap resamples from substreams
    keyed by ``(seed, a, b, c)`` and the replicate index, so the summary is
    identical for any ``threads``.
    """
    truth = oracle(config, config.eval_times)
    indices = range(config.n_reps)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: replicate(config, i), indices))
    else:
        results = []
        for i in indices:
            results.append(replicate(config, i))
            if progress is not None:
                progress(i + 1, config.n_reps)
    return summarize(config, results, truth)


def oracle_rows(config: ScenarioConfig, grid):
    """Long-format truth table: ``(time, decomposition, target, value)``."""
    truth = oracle(config, grid)
    for d in DECOMPOSITIONS:
        for target in STUDY_TARGETS:
            values = truth.target(d, target)
            for t, v in zip(truth.grid, values):
                yield float(t), d, target, float(v)


def config_replace(config, **changes):
    return replace(config, **changes)


def config_dict(config):
    out = asdict(config)
    out["eval_times"] = list(config.eval_times)
    return out
