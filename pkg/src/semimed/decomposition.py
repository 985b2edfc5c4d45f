"""Counterfactual cumulative incidences and natural direct/indirect effects.

Two identification strategies give the incidence ``F(t; z1, z2)`` of the
terminal event when the non-terminal pathway is set to arm ``z1`` and the
terminal pathway to arm ``z2``:

* ``'prev'`` holds the prevalence of the non-terminal event among
  survivors at its arm-``z1`` level::

      F(t; z1, z2) = 1 - exp(-sum_s [w0(s-; z1) dL0(s; z2) + w1(s-; z1) dL1(s; z2)])

* ``'haz'`` holds the non-terminal hazard ``L*`` at its arm-``z1`` level
  and runs the illness-death model forward with the arm-``z2`` terminal
  hazards ``L0`` (from the healthy state) and ``L1`` (after the
  non-terminal event).

The healthy-state survivor is ``S = exp(-L* - L0)``.  At a jump time the
mass leaving the healthy state, ``S(s-) - S(s)``, is split between the two
exits in proportion to their hazard increments.  This keeps every curve a
proper sub-distribution (``F = F0 + F1``, ``F1 <= F*``, all within
``[0, 1]``) and agrees with the integral forms to first order in the
jump sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .event_data import RiskSetPanel
from .hazards import HazardCurve, PrevalenceCurve, prevalence_weights, ratio
from .stepfunction import StepFunction

__all__ = [
    "CELLS",
    "EFFECTS",
    "TARGETS",
    "EffectEstimate",
    "HazIncidence",
    "HazParts",
    "IncidenceSurface",
    "build_surface",
    "cell_arrays",
    "effect_curve",
    "effects",
    "horizon_of",
    "incidence_haz",
    "incidence_prev",
    "haz_kernel",
    "last_at_risk_index",
    "lattice",
    "prev_kernel",
]

CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))
EFFECTS = ("total", "DE", "IE", "DE_alt", "IE_alt")

# Every estimand is a signed combination of the four counterfactual cells.
TARGETS = {
    "F00": {(0, 0): 1},
    "F01": {(0, 1): 1},
    "F10": {(1, 0): 1},
    "F11": {(1, 1): 1},
    "total": {(1, 1): 1, (0, 0): -1},
    "DE": {(0, 1): 1, (0, 0): -1},
    "IE": {(1, 1): 1, (0, 1): -1},
    "DE_alt": {(1, 1): 1, (1, 0): -1},
    "IE_alt": {(1, 0): 1, (0, 0): -1},
}

_LATTICE_BITS = 50


def lattice(values):
    """Round to the dyadic lattice ``2**-50``.

    Differences and sums of a few lattice points in ``[0, 1]`` are exact in
    binary64, so effect curves telescope exactly (``DE + IE == total``).
    """
    return np.ldexp(np.rint(np.ldexp(np.asarray(values, dtype=float), _LATTICE_BITS)), -_LATTICE_BITS)


# -- array kernels (last axis is the time grid, leading axes broadcast) -----


def prev_kernel(w0, w1, dL0, dL1):
    """Prevalence-controlling incidence on a common grid."""
    cumhaz = np.cumsum(w0 * dL0 + w1 * dL1, axis=-1)
    return -np.expm1(-cumhaz)


def _occupancy_after_entry(enter, dL1):
    """``P1(t) = sum_{s <= t} enter(s) exp(-(L1(t) - L1(s)))``."""
    L1 = np.cumsum(dL1, axis=-1)
    direct = np.exp(-L1) * np.cumsum(enter * np.exp(np.minimum(L1, 700.0)), axis=-1)
    # Rare rows with a huge post-transition hazard go through log space; the
    # choice is made per row so batching never changes a row's result.
    big = np.max(L1, axis=-1, initial=0.0) >= 600.0
    if not np.any(big):
        return direct
    with np.errstate(divide="ignore"):
        log_terms = np.log(enter[big]) + L1[big]
    direct[big] = np.exp(np.logaddexp.accumulate(log_terms, axis=-1) - L1[big])
    return direct


class HazParts(NamedTuple):
    """Arrays returned by :func:`haz_kernel`."""

    F: np.ndarray
    F0: np.ndarray
    F1: np.ndarray
    Fstar: np.ndarray
    closed_form: np.ndarray


def haz_kernel(dLs, dL0, dL1) -> HazParts:
    """Hazard-controlling incidence on a common grid.

    ``F0`` and ``F1`` are the terminal-event sub-distributions without and
    with a prior non-terminal event, ``Fstar`` the non-terminal incidence and
    ``closed_form`` the single-integral form ``1 - S(t) - P1(t)``.  The
    reported ``F = F0 + F1`` accumulates nonnegative increments only, so it
    is nondecreasing and within ``[0, 1]`` exactly; it agrees with
    ``closed_form`` to a few ulps.
    """
    dA = dLs + dL0
    A = np.cumsum(dA, axis=-1)
    S = np.exp(-A)
    S_left = np.concatenate((np.ones_like(S[..., :1]), S[..., :-1]), axis=-1)
    leave = S_left * -np.expm1(-dA)
    enter = leave * ratio(dLs, dA)
    F0 = np.cumsum(leave * ratio(dL0, dA), axis=-1)
    Fstar = np.cumsum(enter, axis=-1)
    P1 = _occupancy_after_entry(enter, dL1)
    P1_left = np.concatenate((np.zeros_like(P1[..., :1]), P1[..., :-1]), axis=-1)
    F1 = np.cumsum(P1_left * -np.expm1(-dL1), axis=-1)
    closed = -np.expm1(-A) - P1
    return HazParts(np.minimum(F0 + F1, 1.0), F0, F1, Fstar, closed)


# -- curve-level API ----------------------------------------------------------


def _union_grid(*curves):
    grid = np.empty(0)
    for c in curves:
        grid = np.union1d(grid, c.jump_times)
    return grid


def _hazard_increments(curve: StepFunction, grid, horizon):
    inc = curve.on_grid(grid).increments if grid.size else np.empty(0)
    if horizon is not None:
        inc = np.where(grid <= horizon, inc, 0.0)
    return inc


def incidence_prev(
    lambda0: HazardCurve, lambda1: HazardCurve, prevalence: PrevalenceCurve, horizon=None
) -> StepFunction:
    """Prevalence-controlling incidence from arm-``z2`` terminal hazards and
    the arm-``z1`` prevalence.  Increments past ``horizon`` are dropped."""
    grid = _union_grid(lambda0.curve, lambda1.curve)
    dL0 = _hazard_increments(lambda0.curve, grid, horizon)
    dL1 = _hazard_increments(lambda1.curve, grid, horizon)
    w0, w1 = prevalence.left(grid)
    return StepFunction(grid, prev_kernel(w0, w1, dL0, dL1))


@dataclass(frozen=True)
class HazIncidence:
    """Output of :func:`incidence_haz` (see :func:`haz_kernel`)."""

    F: StepFunction
    F0: StepFunction
    F1: StepFunction
    Fstar: StepFunction
    closed_form: StepFunction


def incidence_haz(
    lambda_star: HazardCurve, lambda0: HazardCurve, lambda1: HazardCurve, horizon=None
) -> HazIncidence:
    """Hazard-controlling incidence from the arm-``z1`` non-terminal hazard
    and the arm-``z2`` terminal hazards."""
    grid = _union_grid(lambda_star.curve, lambda0.curve, lambda1.curve)
    parts = haz_kernel(
        _hazard_increments(lambda_star.curve, grid, horizon),
        _hazard_increments(lambda0.curve, grid, horizon),
        _hazard_increments(lambda1.curve, grid, horizon),
    )
    return HazIncidence(*(StepFunction(grid, p) for p in parts))


@dataclass(frozen=True)
class IncidenceSurface:
    """The four counterfactual incidence curves of one decomposition.

    ``auxiliary[cell]`` holds ``F0``, ``F1``, ``Fstar`` and ``closed_form``
    for the ``'haz'`` decomposition and is empty for ``'prev'``.  Curves are frozen after
    ``horizon``.
    """

    decomposition: str
    curves: dict
    horizon: float
    auxiliary: dict = field(default_factory=dict)

    def __getitem__(self, cell):
        return self.curves[cell]


def last_at_risk_index(Y_0, Y_1):
    """Index of the last grid time with ``Y0 + Y1 > 0`` (``-1`` if none)."""
    alive = (np.asarray(Y_0) + np.asarray(Y_1)) > 0
    n = alive.shape[-1]
    if n == 0:
        return np.full(alive.shape[:-1], -1)
    last = n - 1 - np.argmax(alive[..., ::-1], axis=-1)
    return np.where(alive.any(axis=-1), last, -1)


def horizon_of(panels) -> float:
    """Largest time at which both arms still have someone at risk for the
    terminal event."""
    grid = panels[0].grid
    k = min(int(last_at_risk_index(p.Y_0, p.Y_1)) for p in panels.values())
    return float(grid[k]) if k >= 0 else 0.0


def cell_arrays(counts, decomposition, horizon_index=None):
    """Counterfactual incidences of all four cells from counting-process arrays.

    Parameters
    ----------
    counts : dict
        ``counts[arm]`` is ``(dN_star, dN_0, dN_1, Y_0, Y_1)`` on a common
        grid, each of shape ``(..., G)``.
    decomposition : {'prev', 'haz'}
    horizon_index : array-like of int, optional
        Last grid index used per leading position; increments after it are
        dropped.  Defaults to the last index where both arms have someone at
        risk.

    Returns
    -------
    dict
        ``(z1, z2) -> F`` for 'prev' and ``(z1, z2) ->`` :class:`HazParts`
        for 'haz'.
    """
    if decomposition not in ("prev", "haz"):
        raise ValueError(f"decomposition must be 'prev' or 'haz', got {decomposition!r}")
    if horizon_index is None:
        horizon_index = np.minimum(
            last_at_risk_index(counts[0][3], counts[0][4]),
            last_at_risk_index(counts[1][3], counts[1][4]),
        )
    n_grid = counts[0][0].shape[-1]
    keep = np.arange(n_grid) <= np.asarray(horizon_index)[..., None]
    inc = {}
    for arm, (dN_star, dN_0, dN_1, Y_0, Y_1) in counts.items():
        inc[arm] = (
            np.where(keep, ratio(dN_star, Y_0), 0.0),
            np.where(keep, ratio(dN_0, Y_0), 0.0),
            np.where(keep, ratio(dN_1, Y_1), 0.0),
        )
    out = {}
    if decomposition == "prev":
        weights = {arm: prevalence_weights(c[3], c[4]) for arm, c in counts.items()}
    for z1, z2 in CELLS:
        if decomposition == "prev":
            w0, w1 = weights[z1]
            out[z1, z2] = prev_kernel(w0, w1, inc[z2][1], inc[z2][2])
        else:
            out[z1, z2] = haz_kernel(inc[z1][0], inc[z2][1], inc[z2][2])
    return out


def _panel_arrays(panel: RiskSetPanel):
    return (panel.dN_star, panel.dN_0, panel.dN_1, panel.Y_0, panel.Y_1)


def build_surface(panels, decomposition: str, horizon=None) -> IncidenceSurface:
    """All four cells of ``decomposition`` ('prev' or 'haz') from two panels
    sharing a grid (see :func:`semimed.event_data.build_panels`).

    ``horizon`` defaults to :func:`horizon_of`; curves stay flat after it.
    """
    grid = panels[0].grid
    if not np.array_equal(grid, panels[1].grid):
        raise ValueError("panels must share a grid; build them with build_panels()")
    horizon = horizon_of(panels) if horizon is None else float(horizon)
    k = np.searchsorted(grid, horizon, side="right") - 1
    arrays = cell_arrays({arm: _panel_arrays(panels[arm]) for arm in (0, 1)}, decomposition, k)
    curves, aux = {}, {}
    for cell, value in arrays.items():
        if decomposition == "prev":
            curves[cell] = StepFunction(grid, value)
        else:
            curves[cell] = StepFunction(grid, value.F)
            aux[cell] = {
                "F0": StepFunction(grid, value.F0),
                "F1": StepFunction(grid, value.F1),
                "Fstar": StepFunction(grid, value.Fstar),
                "closed_form": StepFunction(grid, value.closed_form),
            }
    return IncidenceSurface(decomposition, curves, horizon, aux)


@dataclass(frozen=True)
class EffectEstimate:
    """A named estimand curve with optional pointwise uncertainty.

    ``effect`` is one of :data:`EFFECTS` or a cell name ``'F<z1><z2>'``.
    """

    effect: str
    decomposition: str
    curve: StepFunction
    se: StepFunction | None = None
    ci_lower: StepFunction | None = None
    ci_upper: StepFunction | None = None
    variance_method: str = "none"
    horizon: float | None = None


def effect_curve(surface: IncidenceSurface, target: str) -> StepFunction:
    """Curve of ``target`` (an effect or cell name) on the merged grid."""
    combo = TARGETS[target]
    grid = _union_grid(*(surface.curves[c] for c in combo))
    total = np.zeros(grid.size)
    for cell, coef in combo.items():
        total = total + coef * lattice(surface.curves[cell].value(grid))
    return StepFunction(grid, total)


def effects(surface: IncidenceSurface, names=EFFECTS):
    """Point estimates of the total, direct and indirect effects (both
    two-way splits) as :class:`EffectEstimate` objects."""
    return [
        EffectEstimate(name, surface.decomposition, effect_curve(surface, name), horizon=surface.horizon)
        for name in names
    ]
