"""Time evolution: semi-implicit stepping, adaptive steps, run classification.

One step treats diffusion implicitly and the reaction explicitly,

    (I + dt A) u_new = u + dt*(|v|^(p-1) v + lam f),

and symmetrically in v.  First order in dt, but it inherits the structure
the qualitative classification rests on: the implicit operator is an
M-matrix and the explicit reaction is monotone, so nonnegativity, nodewise
ordering of co-evolved states, and monotonicity in time from strict
super-/sub-solution data all hold step by step for any step-size sequence.
Accuracy is bought with small dt, not scheme order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analysis import TrajectoryRecord
from .discrete import DiscreteLaplacian, FieldPair, integrate, solve_shifted
from .elliptic import forcing_arrays, signed_power
from .problem import ExponentPair, ProblemSpec

__all__ = [
    "IntegratorConfig",
    "Outcome",
    "OrderingReport",
    "step",
    "adapt_dt",
    "evolve",
    "evolve_ordered",
    "NumericalFailureError",
]


class NumericalFailureError(RuntimeError):
    """NaN/Inf appeared before any classification fired (not a blow-up call)."""

    def __init__(self, t: float):
        super().__init__(f"non-finite state at t={t:.6g} before classification")
        self.t = t


@dataclass(frozen=True)
class IntegratorConfig:
    """Stepping and classification parameters (scaled time units).

    dt0 caps every step and is the knob refinement studies halve; eta is the
    reaction safety factor keeping the explicit reaction stable and the
    blow-up resolved.  Classification thresholds: sup-norm >= m_blow with
    the step at its floor declares blow-up, relative sup-norm <= eps_decay
    declares decay (unforced runs), relative change per unit time <=
    eps_steady declares convergence to a steady state.
    """

    dt0: float = 1e-3
    dt_min: float = 1e-10
    dt_max: float = 1e-2
    eta: float = 0.1
    m_blow: float = 1e6
    eps_decay: float = 1e-8
    eps_steady: float = 1e-8
    t_max: float = 50.0

    def __post_init__(self):
        if not 0 < self.dt_min <= self.dt0 <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt0 <= dt_max")
        if self.m_blow <= 1:
            raise ValueError("m_blow must exceed 1")
        if not 0 < self.eps_decay < 1:
            raise ValueError("eps_decay must lie in (0, 1)")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")


@dataclass(frozen=True)
class Outcome:
    """Classification of a run.

    kind: "decay" | "blowup" | "steady" | "undecided".  Blow-up carries the
    stopping time t_est (an upper-bound estimate: the time at which the
    sup-norm passed m_blow with the step at its floor; no extrapolation is
    attempted) and the sup-norm at stop.  Steady convergence carries the
    limit state.
    """

    kind: str
    t_end: float
    t_est: Optional[float] = None
    sup_at_stop: Optional[float] = None
    limit: Optional[FieldPair] = None

    @classmethod
    def decay(cls, t: float) -> "Outcome":
        return cls("decay", t)

    @classmethod
    def blow_up(cls, t: float, sup: float) -> "Outcome":
        return cls("blowup", t, t_est=t, sup_at_stop=sup)

    @classmethod
    def steady(cls, t: float, limit: FieldPair) -> "Outcome":
        return cls("steady", t, limit=limit)

    @classmethod
    def undecided(cls, t: float) -> "Outcome":
        return cls("undecided", t)


def adapt_dt(state: FieldPair, exponents: ExponentPair, config: IntegratorConfig) -> float:
    """Reaction-limited step: clamp(eta / rate, dt_min, dt_max).

    rate = max(p ||v||_inf^(p-1), q ||u||_inf^(q-1), eta/dt_max); the guard
    term makes the reaction-free limit exactly dt_max.
    """
    p, q = exponents.p, exponents.q
    try:
        rate = max(
            p * state.sup_v ** (p - 1),
            q * state.sup_u ** (q - 1),
            config.eta / config.dt_max,
        )
    except OverflowError:
        rate = math.inf
    return min(max(config.eta / rate, config.dt_min), config.dt_max)


def step(
    spec: ProblemSpec,
    A: DiscreteLaplacian,
    state: FieldPair,
    t: float,
    dt: float,
    _forcing: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> FieldPair:
    """One semi-implicit step of length dt from time t."""
    p, q = spec.p, spec.q
    fu, gv = forcing_arrays(spec, A.grid) if _forcing is None else _forcing
    rhs = np.column_stack(
        [
            state.u + dt * (signed_power(state.v, p) + fu),
            state.v + dt * (signed_power(state.u, q) + gv),
        ]
    )
    # (I + dt A) x = b  <=>  (1/dt I + A) x = b/dt
    new = solve_shifted(A, 1.0 / dt, rhs / dt)
    return FieldPair(new[:, 0], new[:, 1], A.grid)


def evolve(
    spec: ProblemSpec,
    A: DiscreteLaplacian,
    initial: FieldPair,
    config: IntegratorConfig = IntegratorConfig(),
    squeeze_upper: Optional[FieldPair] = None,
    snapshot_every: int = 0,
) -> tuple[Outcome, TrajectoryRecord]:
    """Evolve nonnegative initial data and classify the run.

    Diagnostics are recorded every accepted step.  Classification order per
    step: blow-up (sup >= m_blow with dt at the floor), decay (unforced runs
    whose relative sup-norm fell to eps_decay), steady convergence (relative
    change per unit time at most eps_steady; this also catches unforced runs
    parked at a metastable discrete equilibrium), undecided at the horizon.
    ``squeeze_upper`` tracks the largest exceedance over a prescribed upper
    state without storing trajectories; ``snapshot_every`` > 0 stores a copy
    of the state every that many accepted steps in ``record.snapshots``.
    """
    if np.min(initial.u) < 0 or np.min(initial.v) < 0:
        raise ValueError("initial data must be nonnegative")
    grid = A.grid
    exponents = spec.exponents
    forcing = forcing_arrays(spec, grid)
    record = TrajectoryRecord(exponents=exponents, volume=grid.volume)
    state = initial.copy()
    s0 = state.sup
    t = 0.0
    steps = 0
    _record_row(record, A, state, t, 0.0, exponents)

    if spec.lam == 0.0 and s0 == 0.0:
        record.final_state = state
        return Outcome.decay(0.0), record.finalize()

    while True:
        dt = min(adapt_dt(state, exponents, config), config.dt0)
        try:
            new = step(spec, A, state, t, dt, _forcing=forcing)
        except ValueError as exc:          # non-finite data rejected by the solver
            raise NumericalFailureError(t + dt) from exc
        if not (np.all(np.isfinite(new.u)) and np.all(np.isfinite(new.v))):
            raise NumericalFailureError(t + dt)
        du = new.u - state.u
        dv = new.v - state.v
        record.max_step_increase = max(record.max_step_increase, du.max(), dv.max())
        record.max_step_decrease = min(record.max_step_decrease, du.min(), dv.min())
        record.squeeze_low = min(record.squeeze_low, float(new.u.min()), float(new.v.min()))
        if squeeze_upper is not None:
            record.squeeze_high = max(
                record.squeeze_high,
                float(np.max(new.u - squeeze_upper.u)),
                float(np.max(new.v - squeeze_upper.v)),
            )
        t += dt
        steps += 1
        prev_sup = state.sup
        state = new
        _record_row(record, A, state, t, dt, exponents)
        if snapshot_every > 0 and steps % snapshot_every == 0:
            record.snapshots.append((t, state.copy()))

        sup = state.sup
        if sup >= config.m_blow and dt <= config.dt_min * (1 + 1e-9):
            record.final_state = state
            return Outcome.blow_up(t, sup), record.finalize()
        if spec.lam == 0.0 and sup <= config.eps_decay * s0:
            record.final_state = state
            return Outcome.decay(t), record.finalize()
        change = max(float(np.max(np.abs(du))), float(np.max(np.abs(dv))))
        scale = max(sup, prev_sup)
        if scale > 0 and change / (dt * scale) <= config.eps_steady:
            record.final_state = state
            return Outcome.steady(t, state), record.finalize()
        if t >= config.t_max:
            record.final_state = state
            return Outcome.undecided(t), record.finalize()


def _record_row(record, A, state, t, dt, exponents):
    grid = A.grid
    p, q = exponents.p, exponents.q
    cross = A.quadratic_form(state.u, state.v)
    iu = integrate(grid, np.abs(state.u) ** (q + 1))
    iv = integrate(grid, np.abs(state.v) ** (p + 1))
    record.append(
        t,
        dt,
        integrate(grid, state.u * state.v),
        cross - iv / (p + 1) - iu / (q + 1),
        iu,
        iv,
        state.sup_u,
        state.sup_v,
    )


@dataclass
class OrderingReport:
    """Result of co-evolving an ordered pair of states with a shared dt sequence."""

    ok: bool
    steps: int
    t_end: float
    max_gap: float                      # largest nodewise amount by which low exceeded high
    first_violation: Optional[tuple[float, int, float]] = None   # (t, node, gap)
    outcome_low: Optional[Outcome] = None
    outcome_high: Optional[Outcome] = None


def evolve_ordered(
    spec: ProblemSpec,
    A: DiscreteLaplacian,
    low: FieldPair,
    high: FieldPair,
    config: IntegratorConfig = IntegratorConfig(),
    tol_order: float = 1e-10,
) -> OrderingReport:
    """Co-evolve low <= high under one dt sequence and watch the ordering.

    The scheme is order preserving (M-matrix solve plus monotone reaction),
    so any violation beyond tol_order * scale indicates a scheme bug; the
    first one is reported with its time and node.  Runs stop when both
    states classify or the horizon is reached.
    """
    if np.min(high.u - low.u) < -tol_order or np.min(high.v - low.v) < -tol_order:
        raise ValueError("initial states are not ordered low <= high")
    exponents = spec.exponents
    forcing = forcing_arrays(spec, A.grid)
    a, b = low.copy(), high.copy()
    sa0, sb0 = a.sup, b.sup
    t, steps = 0.0, 0
    max_gap = -math.inf
    first = None
    out_a = out_b = None

    while t < config.t_max and (out_a is None or out_b is None):
        dt = min(adapt_dt(a, exponents, config), adapt_dt(b, exponents, config), config.dt0)
        a = step(spec, A, a, t, dt, _forcing=forcing)
        b = step(spec, A, b, t, dt, _forcing=forcing)
        t += dt
        steps += 1
        scale = max(1.0, b.sup)
        gap = max(float(np.max(a.u - b.u)), float(np.max(a.v - b.v)))
        max_gap = max(max_gap, gap)
        if gap > tol_order * scale and first is None:
            node = int(np.argmax(np.maximum(a.u - b.u, a.v - b.v)))
            first = (t, node, gap)
        if out_a is None:
            out_a = _classify_simple(spec, a, sa0, dt, config, t)
        if out_b is None:
            out_b = _classify_simple(spec, b, sb0, dt, config, t)
        if (out_a or out_b) and "blowup" in {o.kind for o in (out_a, out_b) if o}:
            break    # a blown-up state cannot be stepped further

    return OrderingReport(
        ok=first is None,
        steps=steps,
        t_end=t,
        max_gap=max_gap,
        first_violation=first,
        outcome_low=out_a,
        outcome_high=out_b,
    )


def _classify_simple(spec, state, s0, dt, config, t) -> Optional[Outcome]:
    sup = state.sup
    if sup >= config.m_blow and dt <= config.dt_min * (1 + 1e-9):
        return Outcome.blow_up(t, sup)
    if spec.lam == 0.0 and sup <= config.eps_decay * max(s0, 1e-300):
        return Outcome.decay(t)
    return None
