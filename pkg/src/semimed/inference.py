"""Pointwise uncertainty for incidence and effect curves.

Decomposition 2 ('haz') has a fully specified martingale expansion in
three independent processes per arm (``M0``, ``M*``, ``M1``).  For any
signed combination of cells the influence integrands of cells sharing a
martingale are added first, then the variance is the plug-in::

    Var(t) = sum_{martingale k, arm z} sum_{s <= t} h_k(t, s)^2 dN_k(s; z) / Y_k(s; z)^2

Decomposition 1 ('prev') also depends on the fluctuation of the estimated
prevalence, whose covariance is not available in closed form.  Only the
martingale part is computed; it is exact for cells with ``z1 == z2`` and a
lower bound otherwise, and confidence intervals for those targets come
from the bootstrap.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .decomposition import (
    EFFECTS,
    TARGETS,
    EffectEstimate,
    IncidenceSurface,
    cell_arrays,
    last_at_risk_index,
    lattice,
)
from .event_data import as_arrays, panel_counts, pooled_grid
from .hazards import prevalence_weights, ratio
from .stepfunction import StepFunction

__all__ = [
    "BootstrapFailureError",
    "BootstrapResult",
    "PartialVarianceError",
    "TailInstabilityWarning",
    "VarianceCurve",
    "bootstrap",
    "ci_pointwise",
    "haz_variance",
    "prev_partial_variance",
    "resample_indices",
    "target_values",
    "var_haz",
    "var_haz_effects",
    "var_haz_incidence",
    "var_prev_partial",
]

MIN_STABLE_RISK = 5
MAX_FAILED_FRACTION = 0.10
_CHUNK_ROWS = 32
_CHUNK_TIMES = 256


class TailInstabilityWarning(UserWarning):
    """A plug-in integral used jumps with fewer than 5 subjects at risk."""


class PartialVarianceError(ValueError):
    """Confidence intervals were requested from a partial variance."""


class BootstrapFailureError(RuntimeError):
    """More than 10% of bootstrap replicates failed."""


@dataclass(frozen=True)
class VarianceCurve:
    """Estimated ``Var(estimate(t))`` (squared standard error) on a grid.

    ``partial`` marks a Decomposition 1 martingale-only variance of a
    cross-world target; such curves can be reported but never turned into
    confidence intervals.  Bootstrap curves keep their replicate matrix
    (``replicates``, shape ``(n_ok, len(curve))``) for percentile bands.
    """

    target: str
    decomposition: str
    method: str
    curve: StepFunction
    n_boot: int | None = None
    seed: object = None
    partial: bool = False
    replicates: np.ndarray | None = field(default=None, repr=False)

    @property
    def se(self) -> StepFunction:
        return self.curve.map(np.sqrt)


# -- evaluation on a grid -----------------------------------------------------


def eval_index(grid, times):
    """Grid index holding the value at each time (``-1`` before the first)."""
    return np.searchsorted(np.asarray(grid), np.asarray(times, dtype=float), side="right") - 1


def _F_of(value):
    return value[0] if isinstance(value, tuple) else value


def target_values(cells, target, idx):
    """Target value ``sum c * F_cell`` at grid indices ``idx`` (lattice-snapped)."""
    idx = np.asarray(idx)
    total = 0.0
    for cell, coef in TARGETS[target].items():
        F = _F_of(cells[cell])
        at = np.where(idx >= 0, np.take(F, np.maximum(idx, 0), axis=-1), 0.0)
        total = total + coef * lattice(at)
    return total


# -- array-level plug-in variances (single dataset, 1-D grid arrays) --------


def _risk_check(dN, Y, upto):
    jumps = (dN[: upto + 1] > 0) & (Y[: upto + 1] > 0)
    return np.min(Y[: upto + 1][jumps]) if jumps.any() else np.inf


def haz_variance(counts, cells, target, idx, horizon_index=None):
    """Plug-in variance of a Decomposition 2 target at grid indices ``idx``.

    Parameters
    ----------
    counts : dict
        ``counts[arm] = (dN_star, dN_0, dN_1, Y_0, Y_1)``, 1-D arrays.
    cells : dict
        Output of ``cell_arrays(counts, 'haz', horizon_index)``.
    target : str
        Key of :data:`~semimed.decomposition.TARGETS`.
    idx : array of int
        Grid indices of the evaluation times.

    Returns
    -------
    var : ndarray
    min_risk : float
        Smallest at-risk count at a contributing jump.
    """
    n_grid = counts[0][0].shape[-1]
    if horizon_index is None:
        horizon_index = min(int(last_at_risk_index(c[3], c[4])) for c in counts.values())
    idx = np.minimum(np.asarray(idx), horizon_index)
    var = np.zeros(idx.shape)
    if n_grid == 0 or horizon_index < 0:
        return var, np.inf
    keep = np.arange(n_grid) <= horizon_index
    L1 = {arm: np.cumsum(np.where(keep, ratio(c[2], c[4]), 0.0)) for arm, c in counts.items()}
    weight = {}
    for arm, (dN_star, dN_0, dN_1, Y_0, Y_1) in counts.items():
        weight["0", arm] = np.where(keep, ratio(dN_0, Y_0.astype(float) ** 2), 0.0)
        weight["*", arm] = np.where(keep, ratio(dN_star, Y_0.astype(float) ** 2), 0.0)
        weight["1", arm] = np.where(keep, ratio(dN_1, Y_1.astype(float) ** 2), 0.0)
    combo = TARGETS[target]
    s = np.arange(n_grid)
    for lo in range(0, idx.size, _CHUNK_TIMES):
        k = idx[lo: lo + _CHUNK_TIMES]
        kk = np.maximum(k, 0)
        upto = (s[None, :] <= k[:, None])
        integrand = {}
        for (z1, z2), coef in combo.items():
            F, _, F1, Fstar, _ = cells[z1, z2]
            P1 = Fstar - F1
            Ft = F[kk][:, None]
            decay = np.exp(np.minimum(L1[z2][None, :] - L1[z2][kk][:, None], 0.0))
            parts = {
                ("0", z2): 1.0 - Ft - P1[None, :] * decay,
                ("*", z1): 1.0 - Ft - (1.0 - F[None, :]) * decay,
                ("1", z2): P1[None, :] * decay,
            }
            for key, h in parts.items():
                integrand[key] = integrand.get(key, 0.0) + coef * h
        for key, h in integrand.items():
            var[lo: lo + _CHUNK_TIMES] += np.sum(np.where(upto, h * h * weight[key][None, :], 0.0), axis=1)
    top = int(np.max(idx, initial=-1))
    min_risk = np.inf
    if top >= 0:
        for arm, (dN_star, dN_0, dN_1, Y_0, Y_1) in counts.items():
            min_risk = min(
                min_risk,
                _risk_check(dN_star + dN_0, Y_0, top),
                _risk_check(dN_1, Y_1, top),
            )
    return np.maximum(var, 0.0), min_risk


def prev_partial_variance(counts, cells, target, idx, horizon_index=None):
    """Martingale part of the Decomposition 1 variance at grid indices ``idx``.

    Returns ``(var, min_risk, partial)``; ``partial`` is False when every
    cell of ``target`` has ``z1 == z2``, in which case ``var`` is the exact
    plug-in ``(1 - F)^2 sum dN / (Y0 + Y1)^2`` per cell.
    """
    n_grid = counts[0][0].shape[-1]
    if horizon_index is None:
        horizon_index = min(int(last_at_risk_index(c[3], c[4])) for c in counts.values())
    idx = np.minimum(np.asarray(idx), horizon_index)
    var = np.zeros(idx.shape)
    combo = TARGETS[target]
    partial = any(z1 != z2 for z1, z2 in combo)
    if n_grid == 0 or horizon_index < 0:
        return var, np.inf, partial
    keep = np.arange(n_grid) <= horizon_index
    kk = np.maximum(idx, 0)
    live = (idx >= 0).astype(float)
    if not partial:
        for (z, _), coef in combo.items():
            dN_star, dN_0, dN_1, Y_0, Y_1 = counts[z]
            pooled = np.where(keep, ratio(dN_0 + dN_1, (Y_0 + Y_1).astype(float) ** 2), 0.0)
            F = cells[z, z]
            var += live * coef**2 * (1.0 - F[kk]) ** 2 * np.cumsum(pooled)[kk]
    else:
        w = {arm: prevalence_weights(c[3], c[4]) for arm, c in counts.items()}
        s = np.arange(n_grid)
        upto = s[None, :] <= idx[:, None]
        integrand = {}
        for (z1, z2), coef in combo.items():
            Ft = cells[z1, z2][kk][:, None]
            for n in (0, 1):
                key = (n, z2)
                integrand[key] = integrand.get(key, 0.0) + coef * (1.0 - Ft) * w[z1][n][None, :]
        for (n, arm), h in integrand.items():
            dN, Y = counts[arm][1 + n], counts[arm][3 + n]
            wt = np.where(keep, ratio(dN, Y.astype(float) ** 2), 0.0)
            var += np.sum(np.where(upto, h * h * wt[None, :], 0.0), axis=1)
    top = int(np.max(idx, initial=-1))
    min_risk = np.inf
    if top >= 0:
        for arm, c in counts.items():
            min_risk = min(min_risk, _risk_check(c[1] + c[2], c[3] + c[4], top))
    return np.maximum(var, 0.0), min_risk, partial


# -- curve-level API ----------------------------------------------------------


def _panel_counts(panels):
    return {arm: (p.dN_star, p.dN_0, p.dN_1, p.Y_0, p.Y_1) for arm, p in panels.items()}


def _surface_setup(panels, surface: IncidenceSurface, times):
    grid = panels[0].grid
    times = grid if times is None else np.asarray(times, dtype=float).reshape(-1)
    hidx = int(np.searchsorted(grid, surface.horizon, side="right") - 1)
    counts = _panel_counts(panels)
    return grid, times, hidx, counts


def _warn_tail(min_risk, what):
    if min_risk < MIN_STABLE_RISK:
        warnings.warn(
            f"{what}: fewer than {MIN_STABLE_RISK} subjects at risk (min {int(min_risk)}) at "
            "jumps inside the integration range; the variance estimate is unstable there",
            TailInstabilityWarning,
            stacklevel=3,
        )


def var_haz(panels, surface: IncidenceSurface, target: str, times=None) -> VarianceCurve:
    """Asymptotic variance of any Decomposition 2 target (cell or effect).

    ``times`` defaults to the panels' grid.
    """
    if surface.decomposition != "haz":
        raise ValueError("var_haz needs a 'haz' surface")
    grid, times, hidx, counts = _surface_setup(panels, surface, times)
    cells = cell_arrays(counts, "haz", hidx)
    var, min_risk = haz_variance(counts, cells, target, eval_index(grid, times), hidx)
    _warn_tail(min_risk, f"variance of {target} (haz)")
    return VarianceCurve(target, "haz", "asymptotic", StepFunction(times, var))


def var_haz_incidence(panels, surface: IncidenceSurface, cell, times=None) -> VarianceCurve:
    """Asymptotic variance of ``F_haz(t; z1, z2)`` for ``cell = (z1, z2)``."""
    z1, z2 = cell
    return var_haz(panels, surface, f"F{z1}{z2}", times)


def var_haz_effects(panels, surface: IncidenceSurface, effect: str, times=None) -> VarianceCurve:
    """Asymptotic variance of a Decomposition 2 effect curve.

    Integrands of the two cells are differenced on shared martingales, so
    e.g. DE combines five independent terms and IE four.
    """
    if effect not in EFFECTS:
        raise ValueError(f"unknown effect {effect!r}")
    return var_haz(panels, surface, effect, times)


def var_prev_partial(panels, surface: IncidenceSurface, target: str, times=None) -> VarianceCurve:
    """Martingale-only variance of a Decomposition 1 target.

    Exact for ``F00``, ``F11`` and ``total``; flagged ``partial`` (a lower
    bound) for targets that involve a cross-world cell.
    """
    if surface.decomposition != "prev":
        raise ValueError("var_prev_partial needs a 'prev' surface")
    grid, times, hidx, counts = _surface_setup(panels, surface, times)
    cells = cell_arrays(counts, "prev", hidx)
    var, min_risk, partial = prev_partial_variance(counts, cells, target, eval_index(grid, times), hidx)
    _warn_tail(min_risk, f"variance of {target} (prev)")
    return VarianceCurve(target, "prev", "asymptotic", StepFunction(times, var), partial=partial)


# -- bootstrap ----------------------------------------------------------------


def _substream(seed, replicate):
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (replicate,))
    return np.random.SeedSequence(seed, spawn_key=(replicate,))


def resample_indices(arm_sizes, seed, replicate):
    """Within-arm resample of replicate ``replicate``: one index array per
    arm, drawn with replacement from that arm's subjects in input order."""
    rng = np.random.default_rng(_substream(seed, replicate))
    return tuple(rng.integers(0, n, n) for n in arm_sizes)


def _replicate_weights(arm_sizes, seed, replicates):
    weights = [np.zeros((len(replicates), n)) for n in arm_sizes]
    for row, r in enumerate(replicates):
        for arm, draw in enumerate(resample_indices(arm_sizes, seed, r)):
            weights[arm][row] = np.bincount(draw, minlength=arm_sizes[arm])
    return weights


def weighted_targets(arms, grid, weights, keys, idx):
    """Targets for every weight row.

    Parameters
    ----------
    arms : dict
        ``arm -> CohortArrays``.
    grid : ndarray
        Grid containing every observed time.
    weights : dict
        ``arm -> (B, n_arm)`` frequency weights.
    keys : sequence of (decomposition, target)
    idx : array of int
        Evaluation grid indices.

    Returns
    -------
    values : dict
        ``key -> (B, T)`` array.
    terminal : ndarray, shape = (B, 2)
        Terminal-event counts per arm, used to detect degenerate replicates.
    """
    counts = {arm: panel_counts(arms[arm], grid, weights[arm]) for arm in (0, 1)}
    values = {}
    for decomposition in dict.fromkeys(d for d, _ in keys):
        cells = cell_arrays(counts, decomposition)
        for d, target in keys:
            if d == decomposition:
                values[d, target] = target_values(cells, target, idx)
    terminal = np.stack([(c[1] + c[2]).sum(axis=-1) for c in (counts[0], counts[1])], axis=-1)
    return values, terminal


def replicate_failures(values, terminal, original_terminal):
    """Rows that lost all terminal events in an arm (where the original had
    some) or produced non-finite estimates."""
    bad = np.any((terminal == 0) & (np.asarray(original_terminal) > 0), axis=-1)
    for v in values.values():
        bad |= ~np.all(np.isfinite(v), axis=-1)
    return bad


@dataclass(frozen=True)
class BootstrapResult:
    """Replicate estimates of several targets at common times.

    ``replicates[(decomposition, target)]`` has shape ``(n_ok, len(times))``
    (failed replicates removed).
    """

    times: np.ndarray
    replicates: dict
    n_boot: int
    n_failed: int
    seed: object

    def variance(self, decomposition, target) -> VarianceCurve:
        reps = self.replicates[decomposition, target]
        var = np.var(reps, axis=0, ddof=1)
        return VarianceCurve(
            target, decomposition, "bootstrap", StepFunction(self.times, var),
            n_boot=self.n_boot, seed=self.seed, replicates=reps,
        )

    def percentile(self, decomposition, target, alpha=0.05):
        reps = self.replicates[decomposition, target]
        return np.quantile(reps, [alpha / 2, 1 - alpha / 2], axis=0)


def bootstrap(
    records,
    targets=EFFECTS,
    decompositions=("prev", "haz"),
    n_boot=200,
    seed=0,
    times=None,
    threads=1,
) -> BootstrapResult:
    """Arm-stratified nonparametric bootstrap of effect and cell curves.

    Replicate ``r`` resamples each arm with replacement using its own
    substream of ``seed`` (see :func:`resample_indices`) and reruns the
    whole estimator on the original data's grid.  Results do not depend on
    ``threads`` or on the order replicates are computed in.

    Raises
    ------
    BootstrapFailureError
        If more than 10% of replicates fail.
    """
    if n_boot < 2:
        raise ValueError("n_boot must be at least 2")
    data = as_arrays(records)
    arms = {arm: data.arm(arm) for arm in (0, 1)}
    sizes = (len(arms[0]), len(arms[1]))
    grid = pooled_grid(data)
    times = grid if times is None else np.asarray(times, dtype=float).reshape(-1)
    idx = eval_index(grid, times)
    keys = [(d, t) for d in decompositions for t in targets]
    original = [int(np.sum(a.d2)) for a in (arms[0], arms[1])]

    def run(chunk):
        w0, w1 = _replicate_weights(sizes, seed, chunk)
        values, terminal = weighted_targets(arms, grid, {0: w0, 1: w1}, keys, idx)
        return values, replicate_failures(values, terminal, original)

    chunks = [range(lo, min(lo + _CHUNK_ROWS, n_boot)) for lo in range(0, n_boot, _CHUNK_ROWS)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    failed = np.concatenate([bad for _, bad in results])
    n_failed = int(failed.sum())
    if n_failed > MAX_FAILED_FRACTION * n_boot:
        raise BootstrapFailureError(f"{n_failed} of {n_boot} bootstrap replicates failed")
    if n_failed:
        warnings.warn(f"dropped {n_failed} of {n_boot} failed bootstrap replicates", RuntimeWarning, stacklevel=2)
    replicates = {
        key: np.concatenate([values[key] for values, _ in results])[~failed] for key in keys
    }
    return BootstrapResult(times, replicates, n_boot, n_failed, seed)


# -- confidence bands ---------------------------------------------------------


def wald_band(estimate, se, alpha=0.05, lower=-1.0, upper=1.0):
    """``estimate +/- z_{1-alpha/2} se`` clamped to ``[lower, upper]``."""
    z = stats.norm.ppf(1 - alpha / 2)
    return np.clip(estimate - z * se, lower, upper), np.clip(estimate + z * se, lower, upper)


def percentile_band(estimate, replicates, alpha=0.05, lower=-1.0, upper=1.0):
    """Percentile band of bootstrap replicates, widened if needed so that it
    contains the point estimate, then clamped to ``[lower, upper]``."""
    lo, hi = np.quantile(replicates, [alpha / 2, 1 - alpha / 2], axis=0)
    lo = np.minimum(lo, estimate)
    hi = np.maximum(hi, estimate)
    return np.clip(lo, lower, upper), np.clip(hi, lower, upper)


def ci_pointwise(estimate: EffectEstimate, variance: VarianceCurve, alpha=0.05) -> EffectEstimate:
    """Attach pointwise ``1 - alpha`` bands to ``estimate`` on the variance grid.

    Asymptotic variances give Wald bands; bootstrap variances give
    percentile bands from their replicates.  Bands are clamped to the valid
    range (``[0, 1]`` for cells, ``[-1, 1]`` for effects).

    Raises
    ------
    PartialVarianceError
        If ``variance`` is a partial (lower-bound) variance.
    """
    if variance.partial:
        raise PartialVarianceError(
            f"{variance.target} ({variance.decomposition}) has only a partial variance: the "
            "covariance of the estimated prevalence process is not available; use the bootstrap"
        )
    times = variance.curve.jump_times
    point = estimate.curve.value(times)
    se = np.sqrt(variance.curve.values)
    lower = 0.0 if estimate.effect in ("F00", "F01", "F10", "F11") else -1.0
    if variance.method == "bootstrap":
        if variance.replicates is None:
            raise ValueError("bootstrap variance without replicates")
        lo, hi = percentile_band(point, variance.replicates, alpha, lower)
    else:
        lo, hi = wald_band(point, se, alpha, lower)
    return EffectEstimate(
        estimate.effect,
        estimate.decomposition,
        estimate.curve,
        se=StepFunction(times, se),
        ci_lower=StepFunction(times, lo),
        ci_upper=StepFunction(times, hi),
        variance_method=variance.method,
        horizon=estimate.horizon,
    )
