"""Temporal-stability indicator and the demand-driven scaling step."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .fsm import (
    Constraint,
    DemandParams,
    Directive,
    FsmMode,
    IllegalTransition,
    Outcome,
    ServiceState,
    Trigger,
    apply_transition,
    compute_demand,
    kappa_low,
    kappa_max,
    kappa_min,
    kappa_up,
)

INDICATOR_MEAN = "mean"          # k / n, mean sampled request rate
INDICATOR_PER_TIME = "per_time"  # k / delta_t


@dataclass(frozen=True)
class StabilityWindow:
    delta_t: float
    i_r_min: float
    i_r_max: float
    k: float = 0.0
    n: int = 0
    t: Optional[float] = None   # None until the first sample starts the window
    i_r: Optional[float] = None
    indicator: str = INDICATOR_MEAN

    @property
    def started(self) -> bool:
        return self.t is not None

    def start(self, now: float, r_req: float) -> "StabilityWindow":
        # initialization step: t <- now, I_R <- first request rate
        return replace(self, t=float(now), i_r=float(r_req), k=0.0, n=0)


@dataclass(frozen=True)
class ScalerConfig:
    demand: DemandParams = field(default_factory=DemandParams)
    delta_t: float = 600.0
    i_r_min: float = 1.0
    i_r_max: float = 250.0
    indicator: str = INDICATOR_MEAN
    fsm_mode: FsmMode = FsmMode.PERMISSIVE

    def violations(self) -> list[str]:
        out = list(self.demand.violations())
        if not 0 <= self.i_r_min < self.i_r_max:
            out.append(f"need 0 <= i_r_min < i_r_max (got {self.i_r_min}, {self.i_r_max})")
        if self.demand.f_d > 0 and self.delta_t < 10.0 / self.demand.f_d:
            out.append(
                f"delta_t must be >= 10/f_d = {10.0 / self.demand.f_d:g} s (got {self.delta_t:g})"
            )
        if self.indicator not in (INDICATOR_MEAN, INDICATOR_PER_TIME):
            out.append(f"indicator must be '{INDICATOR_MEAN}' or '{INDICATOR_PER_TIME}'")
        return out

    def new_window(self) -> StabilityWindow:
        return StabilityWindow(
            delta_t=self.delta_t,
            i_r_min=self.i_r_min,
            i_r_max=self.i_r_max,
            indicator=self.indicator,
        )


@dataclass(frozen=True)
class ScalerDecision:
    next_state: ServiceState
    spawn: bool = False
    guard: int = 0

    @property
    def label(self) -> str:
        return {1: "scale-down", 2: "discoverable", 3: "scale-up", 4: "low-demand"}[self.guard]


def calc_temp_stability(window: StabilityWindow, r_req: float, now: float) -> StabilityWindow:
    """Accumulate ``r_req`` until the observation period elapses, then refresh ``i_r``."""
    if not window.started:
        window = window.start(now, r_req)
    if now < window.t:
        raise ValueError(f"sample at {now} precedes window start {window.t}")
    if now <= window.t + window.delta_t:
        return replace(window, k=window.k + r_req, n=window.n + 1)
    if window.n == 0:
        i_r = 0.0
    elif window.indicator == INDICATOR_PER_TIME:
        i_r = abs(window.k / window.delta_t)
    else:
        i_r = window.k / window.n
    return replace(window, i_r=i_r, k=0.0, n=0, t=float(now))


def update_service(
    u: float, window: StabilityWindow, state: ServiceState, params: DemandParams
) -> ScalerDecision:
    if state is ServiceState.FINAL:
        raise IllegalTransition("update_service called on a finalized instance")
    i_r = window.i_r if window.i_r is not None else 0.0
    if not kappa_min(u) or i_r < window.i_r_min:
        return ScalerDecision(ServiceState.FINAL, False, 1)
    if kappa_up(u, params) and not kappa_max(u, params):
        return ScalerDecision(ServiceState.DISCOVERABLE, False, 2)
    if kappa_max(u, params) or i_r >= window.i_r_max:
        return ScalerDecision(ServiceState.DISCOVERABLE, True, 3)
    return ScalerDecision(ServiceState.UNDISCOVERABLE, False, 4)


def decision_trigger(
    decision: ScalerDecision, state: ServiceState, u: float, params: DemandParams
) -> Optional[Trigger]:
    """Map a decision onto the FSM trigger that moves ``state`` toward it.

    The trigger carries the *evaluated* constraint, so hysteresis is enforced
    by the state machine: in the dead band neither kappa_low nor kappa_up
    holds and the instance keeps its state.
    """
    target = decision.next_state
    if target is ServiceState.FINAL:
        return Directive.FINALIZE
    if target is state:
        return None
    if state is ServiceState.STORED:
        return Outcome(Constraint.MIN, kappa_min(u))
    if state is ServiceState.DISCOVERABLE and target is ServiceState.UNDISCOVERABLE:
        return Outcome(Constraint.LOW, kappa_low(u, params))
    if state is ServiceState.UNDISCOVERABLE and target is ServiceState.DISCOVERABLE:
        return Outcome(Constraint.UP, kappa_up(u, params))
    # Inactive instances only move on operator events
    return None


def scale_service_step(instance, r_req: float, now: float, params: ScalerConfig) -> ScalerDecision:
    """One iteration of the scaling loop for ``instance``.

    Mutates ``instance.window`` and ``instance.state``; the applied trigger
    (or None) is left on ``instance.last_trigger`` for event logging.
    """
    if instance.state is ServiceState.FINAL:
        raise IllegalTransition(f"instance {instance.id} is already final")
    u = compute_demand(r_req, params.demand.f_d)
    instance.window = calc_temp_stability(instance.window, r_req, now)
    decision = update_service(u, instance.window, instance.state, params.demand)
    trigger = decision_trigger(decision, instance.state, u, params.demand)
    instance.last_trigger = trigger
    if trigger is not None:
        instance.state = apply_transition(instance.state, trigger, params.fsm_mode).state
    return decision
