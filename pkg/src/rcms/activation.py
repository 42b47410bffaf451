"""Hysteresis-band switching between the nominal planner and the crash mitigation planner."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

from .risk_metrics import RiskAssessment

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    MP = "MP"
    RCMS = "RCMS"


@dataclass(frozen=True)
class HysteresisConfig:
    kappa_a: float = 0.6
    kappa_d: float = 0.3
    tau_a: float = 0.5   # 1/s
    tau_d: float = 0.25  # 1/s

    def __post_init__(self):
        if not self.kappa_a > self.kappa_d > 0:
            raise ValueError(f"need kappa_a > kappa_d > 0, got {self.kappa_a}, {self.kappa_d}")
        if not self.tau_a > self.tau_d > 0:
            raise ValueError(f"need tau_a > tau_d > 0, got {self.tau_a}, {self.tau_d}")


@dataclass(frozen=True)
class PlannerMode:
    mode: Mode = Mode.MP
    last_transition: Optional[int] = None


def activation_step(
    mode: PlannerMode, assessment: RiskAssessment, cfg: HysteresisConfig, tick: Optional[int] = None
) -> PlannerMode:
    """Either metric above its activation threshold switches to RCMS; both
    below their deactivation thresholds switch back. Anything else holds."""
    kappa, tau = assessment.kappa, assessment.tau_risk
    if kappa > cfg.kappa_a or tau > cfg.tau_a:
        target = Mode.RCMS
    elif kappa < cfg.kappa_d and tau < cfg.tau_d:
        target = Mode.MP
    else:
        return mode
    if target is mode.mode:
        return mode
    log.debug("mode %s -> %s at tick %s (kappa=%.3f tau=%.3f)", mode.mode.value, target.value, tick, kappa, tau)
    return PlannerMode(target, tick)


class ActivationMachine:
    """Stateful wrapper owning one ego's mode."""

    def __init__(self, cfg: HysteresisConfig, initial: Mode = Mode.MP):
        self.cfg = cfg
        self.state = PlannerMode(initial)
        self.transitions: list[tuple[int, Mode]] = []

    @property
    def mode(self) -> Mode:
        return self.state.mode

    def update(self, assessment: RiskAssessment, tick: int) -> Mode:
        new = activation_step(self.state, assessment, self.cfg, tick)
        if new is not self.state:
            self.transitions.append((tick, new.mode))
        self.state = new
        return new.mode
