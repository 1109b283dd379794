"""Service lifecycle state machine.

States, maintenance events, the four demand constraints and the transition
relation.  Everything here is pure; the per-instance state cell lives on
:class:`lifecycle_sim.control.ServiceInstance`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Union


class ConfigError(ValueError):
    """Invalid parameter combination (rejected at config load)."""


class IllegalTransition(RuntimeError):
    """A trigger was applied to an instance that admits no transitions."""


class ServiceState(str, Enum):
    STORED = "stored"
    DISCOVERABLE = "discoverable"
    UNDISCOVERABLE = "undiscoverable"
    INACTIVE = "inactive"
    FINAL = "final"


class MaintenanceEvent(str, Enum):
    INACTIVATE = "inactivate"
    REACTIVATE = "reactivate"


class Constraint(str, Enum):
    MIN = "kappa_min"
    LOW = "kappa_low"
    UP = "kappa_up"
    MAX = "kappa_max"


class Directive(str, Enum):
    # scale-down: vanished demand finalizes from any state (permissive mode only)
    FINALIZE = "finalize"


class FsmMode(str, Enum):
    STRICT = "strict"
    PERMISSIVE = "permissive"


@dataclass(frozen=True)
class Outcome:
    """Evaluated demand constraint, e.g. ``Outcome(Constraint.LOW, True)``."""

    constraint: Constraint
    value: bool

    def __str__(self):
        return f"{self.constraint.value}={'t' if self.value else 'f'}"


Trigger = Union[MaintenanceEvent, Outcome, Directive]


class Transition(NamedTuple):
    state: ServiceState
    changed: bool


@dataclass(frozen=True)
class DemandParams:
    u_min: float = 2.0
    u_max: float = 25.0
    sigma: float = 1.0
    f_d: float = 5.0

    def violations(self) -> list[str]:
        out = []
        if self.u_min < 0:
            out.append(f"u_min must be >= 0 (got {self.u_min})")
        if self.sigma < 0:
            out.append(f"sigma must be >= 0 (got {self.sigma})")
        if self.f_d <= 0:
            out.append(f"f_d must be > 0 (got {self.f_d})")
        if not self.u_min + self.sigma < self.u_max:
            out.append(
                f"u_min + sigma must be < u_max "
                f"({self.u_min} + {self.sigma} >= {self.u_max}; dead band overlaps upscale)"
            )
        return out

    def check(self) -> "DemandParams":
        errs = self.violations()
        if errs:
            raise ConfigError("; ".join(errs))
        return self


def compute_demand(r_req: float, f_d: float) -> float:
    """Demand ``U`` as request rate over update frequency."""
    if f_d <= 0:
        raise ConfigError(f"update frequency must be positive, got {f_d}")
    if r_req < 0:
        raise ValueError(f"request rate must be non-negative, got {r_req}")
    return r_req / f_d


def kappa_min(u: float) -> bool:
    return u > 0


def kappa_low(u: float, params: DemandParams) -> bool:
    return u + params.sigma <= params.u_min


def kappa_up(u: float, params: DemandParams) -> bool:
    # false branch is the exact complement, u - sigma < u_min
    return u - params.sigma >= params.u_min


def kappa_max(u: float, params: DemandParams) -> bool:
    return u >= params.u_max


_S = ServiceState

# (state, trigger) -> successor; anything absent is a no-transition.
_RELATION: dict[tuple[ServiceState, Trigger], ServiceState] = {
    (_S.STORED, Outcome(Constraint.MIN, True)): _S.DISCOVERABLE,
    (_S.DISCOVERABLE, Outcome(Constraint.LOW, True)): _S.UNDISCOVERABLE,
    (_S.UNDISCOVERABLE, Outcome(Constraint.UP, True)): _S.DISCOVERABLE,
    (_S.UNDISCOVERABLE, MaintenanceEvent.INACTIVATE): _S.INACTIVE,
    (_S.INACTIVE, MaintenanceEvent.REACTIVATE): _S.DISCOVERABLE,
    (_S.INACTIVE, Outcome(Constraint.MIN, False)): _S.FINAL,
    (_S.INACTIVE, Directive.FINALIZE): _S.FINAL,
}


def apply_transition(
    state: ServiceState, trigger: Trigger, mode: FsmMode = FsmMode.STRICT
) -> Transition:
    """Return the successor of ``state`` under ``trigger``.

    Pairs outside the relation leave the state unchanged with
    ``changed=False``.  In permissive mode :attr:`Directive.FINALIZE` is legal
    from every non-final state.
    """
    if state is ServiceState.FINAL:
        raise IllegalTransition(f"no transitions leave {state.value} (trigger {trigger})")
    nxt = _RELATION.get((state, trigger))
    if nxt is None and trigger is Directive.FINALIZE and mode is FsmMode.PERMISSIVE:
        nxt = ServiceState.FINAL
    if nxt is None:
        return Transition(state, False)
    return Transition(nxt, True)


def trigger_name(trigger: Trigger) -> str:
    if isinstance(trigger, Outcome):
        return str(trigger)
    return trigger.value
