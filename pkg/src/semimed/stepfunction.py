"""Right-continuous piecewise-constant curves."""

from __future__ import annotations

import numpy as np

__all__ = ["StepFunction"]


class StepFunction:
    """Right-continuous step function on ``[0, inf)``.

    The function equals ``initial`` before the first jump time and
    ``values[k]`` on ``[jump_times[k], jump_times[k + 1])``.  Values are
    stored directly (not re-accumulated from increments) so that curves
    built by exact arithmetic stay exact.

    Parameters
    ----------
    jump_times : array-like, shape = (n_jumps,)
        Strictly increasing, finite times.
    values : array-like, shape = (n_jumps,)
        Value of the function from each jump time onwards.
    initial : float, default: 0.0
        Value before the first jump time.
    """

    __slots__ = ("jump_times", "values", "initial")

    def __init__(self, jump_times, values, initial=0.0):
        jump_times = np.asarray(jump_times, dtype=float).reshape(-1)
        values = np.asarray(values, dtype=float).reshape(-1)
        if jump_times.shape != values.shape:
            raise ValueError("jump_times and values must have the same length")
        if jump_times.size and not np.all(np.isfinite(jump_times)):
            raise ValueError("jump times must be finite")
        if jump_times.size > 1 and np.any(np.diff(jump_times) <= 0):
            raise ValueError("jump times must be strictly increasing")
        jump_times.flags.writeable = False
        values.flags.writeable = False
        self.jump_times = jump_times
        self.values = values
        self.initial = float(initial)

    @classmethod
    def from_increments(cls, jump_times, increments, initial=0.0):
        """Build ``value(t) = initial + sum_{s <= t} increment(s)``."""
        increments = np.asarray(increments, dtype=float)
        return cls(jump_times, float(initial) + np.cumsum(increments), initial)

    @classmethod
    def zero(cls):
        return cls(np.empty(0), np.empty(0))

    @property
    def increments(self):
        """Jump sizes aligned with ``jump_times``."""
        return np.diff(np.concatenate(([self.initial], self.values)))

    def __len__(self):
        return self.jump_times.size

    def __call__(self, t):
        return self.value(t)

    def value(self, t):
        """Evaluate ``f(t)``; scalars in, scalars out."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t_arr, side="right") - 1
        out = np.where(idx >= 0, self._take(idx), self.initial)
        return float(out) if out.ndim == 0 else out

    def left_value(self, t):
        """Evaluate the left limit ``f(t-)``."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t_arr, side="left") - 1
        out = np.where(idx >= 0, self._take(idx), self.initial)
        return float(out) if out.ndim == 0 else out

    def _take(self, idx):
        if self.values.size == 0:
            return np.full(np.shape(idx), self.initial)
        return self.values[np.clip(idx, 0, None)]

    def on_grid(self, grid):
        """Re-express on ``grid``, which must contain every jump time with a
        nonzero increment."""
        grid = np.asarray(grid, dtype=float)
        return StepFunction(grid, self.value(grid), self.initial)

    def compress(self):
        """Drop jump times where the value does not change."""
        keep = self.increments != 0
        return StepFunction(self.jump_times[keep], self.values[keep], self.initial)

    def map(self, fn):
        """Apply ``fn`` pointwise to the values (and the initial value)."""
        return StepFunction(self.jump_times, fn(self.values), fn(np.float64(self.initial)))

    def _binary(self, other, op):
        if isinstance(other, StepFunction):
            grid = np.union1d(self.jump_times, other.jump_times)
            return StepFunction(
                grid, op(self.value(grid), other.value(grid)), op(self.initial, other.initial)
            )
        other = float(other)
        return StepFunction(self.jump_times, op(self.values, other), op(self.initial, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: np.subtract(b, a))

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return StepFunction(self.jump_times, -self.values, -self.initial)

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return (
            self.initial == other.initial
            and np.array_equal(self.jump_times, other.jump_times)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return (
            f"StepFunction(n_jumps={len(self)}, initial={self.initial!r}, "
            f"range=[{self.jump_times[:1]}, {self.jump_times[-1:]}])"
        )
