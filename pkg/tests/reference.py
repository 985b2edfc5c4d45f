"""Independent reference implementations used as test oracles.

Nothing here imports the estimation code: the counting processes are
evaluated literally, subject by subject, and the population truths come
from integrating the illness-death forward equations with ``solve_ivp``.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp


# -- literal counting processes -------------------------------------------------


def at_risk_0(records, t):
    """Alive, uncensored and free of the non-terminal event just before t."""
    return sum(1 for r in records if r.x1 >= t and r.x2 >= t)


def at_risk_1(records, t):
    """Alive and uncensored after a non-terminal event just before t; a
    same-time relapse and death counts as relapse first."""
    return sum(
        1
        for r in records
        if r.delta1 == 1 and (r.x1 < t or (r.x1 == r.x2 == t)) and r.x2 >= t
    )


def jumps(records, t):
    """``(dN_star, dN_0, dN_1)`` at t."""
    star = sum(1 for r in records if r.delta1 == 1 and r.x1 == t)
    dead0 = sum(1 for r in records if r.delta1 == 0 and r.delta2 == 1 and r.x2 == t)
    dead1 = sum(1 for r in records if r.delta1 == 1 and r.delta2 == 1 and r.x2 == t)
    return star, dead0, dead1


def after(records, t):
    """At-risk counts just after t (``Y(t+)``)."""
    y0 = sum(1 for r in records if r.x1 > t)
    y1 = sum(1 for r in records if r.delta1 == 1 and r.x1 <= t < r.x2)
    return y0, y1


def nelson_aalen_increment(dN, Y):
    return dN / Y if Y > 0 else 0.0


# -- illness-death forward equations ---------------------------------------------


def forward_incidence(rates_star, rates_terminal, times, rtol=1e-12, atol=1e-14):
    """Terminal-event incidence of the hazard-controlling cell.

    ``rates_star = r*`` and ``rates_terminal = (r0, r1)``; every hazard is
    ``r t``.  States: healthy, ill, dead (without/with prior event).
    """
    rs = rates_star
    r0, r1 = rates_terminal

    def rhs(t, y):
        healthy, ill = y[0], y[1]
        return [
            -(rs + r0) * t * healthy,
            rs * t * healthy - r1 * t * ill,
            r0 * t * healthy,
            r1 * t * ill,
        ]

    sol = solve_ivp(rhs, (0.0, float(np.max(times))), [1.0, 0.0, 0.0, 0.0],
                    method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    y = sol.sol(np.asarray(times, dtype=float))
    return y[2] + y[3]


def forward_prevalence_incidence(world_rates, rates_terminal, times, rtol=1e-12, atol=1e-14):
    """Prevalence-controlling incidence: the survivors' prevalence comes
    from ``world_rates = (r0, r*, r1)`` and is combined with the terminal
    hazards ``rates_terminal = (r0', r1')``."""
    w0_rate, ws_rate, w1_rate = world_rates
    r0, r1 = rates_terminal

    def rhs(t, y):
        healthy, ill = y[0], y[1]
        alive = healthy + ill
        hazard = (healthy * r0 + ill * r1) * t / alive
        return [
            -(ws_rate + w0_rate) * t * healthy,
            ws_rate * t * healthy - w1_rate * t * ill,
            hazard,
        ]

    sol = solve_ivp(rhs, (0.0, float(np.max(times))), [1.0, 0.0, 0.0],
                    method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    return -np.expm1(-sol.sol(np.asarray(times, dtype=float))[2])
