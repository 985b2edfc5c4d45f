"""Nelson-Aalen transition hazards and the prevalence of the non-terminal event."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .event_data import RiskSetPanel
from .stepfunction import StepFunction

__all__ = [
    "HAZARD_KINDS",
    "HazardCurve",
    "PrevalenceCurve",
    "nelson_aalen",
    "prevalence",
]

HAZARD_KINDS = ("terminal_from_state0", "terminal_from_state1", "nonterminal")


def ratio(num, den):
    """``num / den`` with the ``I{den > 0}`` guard (0 where ``den == 0``)."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros(np.broadcast_shapes(num.shape, den.shape))
    np.divide(num, den, out=out, where=den > 0)
    return out


def prevalence_weights(Y_0, Y_1):
    """Predictable prevalence ``(w0(s-), w1(s-))`` from at-risk counts at ``s``."""
    total = np.asarray(Y_0, dtype=float) + Y_1
    return ratio(Y_0, total), ratio(Y_1, total)


@dataclass(frozen=True)
class HazardCurve:
    """Nelson-Aalen cumulative hazard of one transition in one arm.

    ``kind`` is ``'terminal_from_state0'`` (death without prior
    non-terminal event), ``'terminal_from_state1'`` (death after it) or
    ``'nonterminal'``.
    """

    kind: str
    arm: int
    curve: StepFunction

    @property
    def increments(self):
        return self.curve.increments


@dataclass(frozen=True)
class PrevalenceCurve:
    """Estimated prevalence ``w1(t) = Y1 / (Y0 + Y1)`` among subjects still
    at risk for the terminal event.

    ``curve`` is right-continuous, so ``curve.left_value(s)`` is the
    predictable weight used at a death time ``s``.  Both weights are 0 once
    nobody is at risk.  On ``[g_k, g_{k+1})`` between grid times the curve
    holds the weight used at ``g_{k+1}``; a relapse recorded at the same
    time as the subject's exit counts as already prevalent there.
    """

    arm: int
    curve: StepFunction
    w0: StepFunction

    def left(self, t):
        """``(w0(t-), w1(t-))``."""
        return self.w0.left_value(t), self.curve.left_value(t)


def nelson_aalen(panel: RiskSetPanel, kind: str) -> HazardCurve:
    """Nelson-Aalen estimator: increment ``dN/Y`` at each grid time, 0 where
    nobody is at risk."""
    dN, Y = panel.counts(kind)
    return HazardCurve(kind, panel.arm, StepFunction.from_increments(panel.grid, ratio(dN, Y)))


def _right_continuous(grid, left_values):
    # left_values[k] is the value on (grid[k-1], grid[k]]; after the last
    # grid time the risk set is empty, so the guard gives 0.
    return StepFunction(grid, np.append(left_values[1:], 0.0), left_values[0] if left_values.size else 0.0)


def prevalence(panel: RiskSetPanel) -> PrevalenceCurve:
    """Prevalence of the non-terminal event among subjects alive and
    under observation, changing wherever either risk set changes."""
    w0, w1 = prevalence_weights(panel.Y_0, panel.Y_1)
    return PrevalenceCurve(panel.arm, _right_continuous(panel.grid, w1), _right_continuous(panel.grid, w0))
