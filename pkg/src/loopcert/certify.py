"""Incremental-stability certificates for negative feedback interconnections.

Three routes are provided: the incremental small-gain contraction, separation
of scaled relative graphs (with a certified sweep of the feedback fraction
and a homotopy schedule carrying stability from open loop to full feedback),
and a relaxed mode that additionally records externally assumed
well-posedness.  Certificates are plain data and serialize to JSON.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .loop import DivergenceError, closed_loop_gain_estimate, solve_feedback
from .operators import OperatorSpec, causality_check, feedback
from .signals import Signal, norm, probe_pairs
from .srg import (
    Region,
    chord_closure,
    invert_region,
    max_radius,
    separation_sweep,
)

__all__ = [
    "HomotopySchedule",
    "EmpiricalSummary",
    "Certificate",
    "Refusal",
    "check_small_gain",
    "build_schedule",
    "certify_srg",
    "certify_relaxed",
    "verify_feedback_identity",
]

# Strict inequalities in the homotopy construction are enforced with a
# deterministic safety factor instead of an arbitrarily small epsilon.
_SAFETY = 0.9


@dataclass(frozen=True)
class HomotopySchedule:
    """Feedback homotopy: start at fraction ``nu``, advance ``steps`` times by
    ``tau_step`` to reach full feedback without losing the contraction."""

    nu: float
    tau_step: float
    steps: int
    gamma1: float
    gamma2: float
    gamma: float

    def __post_init__(self) -> None:
        if not 0.0 < self.nu <= 1.0:
            raise ValueError("nu must lie in (0, 1]")
        if self.tau_step <= 0.0:
            raise ValueError("tau_step must be positive")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.nu * self.gamma1 * self.gamma2 > _SAFETY + 1e-12:
            raise ValueError("nu violates the small-gain start condition")
        if self.tau_step * self.gamma * self.gamma2 > _SAFETY + 1e-12:
            raise ValueError("tau_step violates the step condition")
        if self.nu + self.steps * self.tau_step < 1.0 - 1e-12:
            raise ValueError("schedule does not reach full feedback")
        if self.steps > 0 and self.nu + (self.steps - 1) * self.tau_step >= 1.0:
            raise ValueError("schedule has more steps than necessary")


def build_schedule(gamma1: float, gamma2: float, gamma: float) -> HomotopySchedule:
    """Deterministic homotopy schedule from the component and loop bounds.

    ``nu = min(1, 0.9/(gamma1*gamma2))`` and ``tau_step = 0.9/(gamma*gamma2)``
    keep both small-gain products at or below 0.9; the step count is the
    minimal one reaching full feedback.
    """
    if gamma1 <= 0.0 or gamma2 <= 0.0 or gamma <= 0.0:
        raise ValueError("gains must be positive and finite")
    if not (math.isfinite(gamma1) and math.isfinite(gamma2)
            and math.isfinite(gamma)):
        raise ValueError("gains must be positive and finite")
    nu = min(1.0, _SAFETY / (gamma1 * gamma2))
    tau_step = _SAFETY / (gamma * gamma2)
    steps = 0 if nu >= 1.0 else math.ceil((1.0 - nu) / tau_step - 1e-12)
    return HomotopySchedule(nu, tau_step, steps, gamma1, gamma2, gamma)


def _schedule_for(gamma1: float, gamma2: float, gamma: float) -> HomotopySchedule:
    # Zero gains collapse the homotopy: the open loop already covers tau = 1.
    if gamma1 * gamma2 == 0.0 or gamma * gamma2 == 0.0:
        return HomotopySchedule(1.0, 1.0, 0, gamma1, gamma2, gamma)
    return build_schedule(gamma1, gamma2, gamma)


@dataclass(frozen=True)
class EmpiricalSummary:
    max_ratio: float
    pair_count: int
    tau: float

    def to_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "pairs": self.pair_count,
                "tau": self.tau}


@dataclass(frozen=True)
class Certificate:
    route: str
    r_min: float
    gamma: float
    schedule: HomotopySchedule | None
    premises: tuple[str, ...]
    empirical: EmpiricalSummary | None = None
    mode: str = "incremental"
    iqc: dict | None = None

    def __post_init__(self) -> None:
        if self.route == "SRG" and self.r_min > 0.0:
            if abs(self.gamma * self.r_min - 1.0) > 1e-12:
                raise ValueError("SRG certificate requires gamma * r_min = 1")

    def to_dict(self) -> dict:
        sched = None
        if self.schedule is not None:
            sched = {"nu": self.schedule.nu, "tau_step": self.schedule.tau_step,
                     "steps": self.schedule.steps,
                     "gamma1": self.schedule.gamma1,
                     "gamma2": self.schedule.gamma2,
                     "gamma": self.schedule.gamma}
        return {
            "kind": "certificate",
            "route": self.route,
            "mode": self.mode,
            "r_min": self.r_min,
            "gamma": self.gamma,
            "schedule": sched,
            "premises": list(self.premises),
            "empirical": None if self.empirical is None
            else self.empirical.to_dict(),
            "iqc": self.iqc,
        }


@dataclass(frozen=True)
class Refusal:
    route: str
    reason: str
    witness: dict = field(default_factory=dict)
    mode: str = "incremental"

    def to_dict(self) -> dict:
        return {"kind": "refusal", "route": self.route, "mode": self.mode,
                "reason": self.reason, "witness": dict(self.witness)}


def check_small_gain(gamma1: float, gamma2: float) -> Certificate | Refusal:
    """Certify the loop by contraction when ``gamma1 * gamma2 < 1``.

    The emitted closed-loop incremental gain bound is
    ``gamma1 / (1 - gamma1*gamma2)``, the geometric-series constant of the
    contraction argument.
    """
    if gamma1 < 0.0 or gamma2 < 0.0:
        raise ValueError("gains must be nonnegative")
    product = gamma1 * gamma2
    if product >= 1.0:
        return Refusal("SmallGain",
                       "small-gain product is not below one",
                       {"gamma1": gamma1, "gamma2": gamma2,
                        "product": product})
    bound = gamma1 / (1.0 - product)
    schedule = _schedule_for(gamma1, gamma2, bound if bound > 0.0 else 1.0)
    premises = (
        f"declared incremental gains: gamma1={gamma1:.12g}, "
        f"gamma2={gamma2:.12g}",
        "closed-loop bound gamma1/(1 - gamma1*gamma2) derived from the "
        "contraction construction",
    )
    return Certificate("SmallGain", 0.0, bound, schedule, premises)


# ---------------------------------------------------------------------------
# SRG separation route.


def _declared(op: OperatorSpec, name: str) -> tuple[float, Region]:
    gain = op.effective_inc_gain()
    if gain is None or not math.isfinite(gain):
        raise ValueError(f"{name} needs a finite declared incremental gain")
    region = op.effective_srg()
    if region is None:
        raise ValueError(f"{name} needs a declared SRG region")
    return gain, region


def _empirical_cross_check(
    h1: OperatorSpec, h2: OperatorSpec, probe_seed: int, probe_count: int,
) -> tuple[EmpiricalSummary | None, str]:
    dim = h1.input_dim or 1
    pairs = probe_pairs(dim=dim, seed=probe_seed, count=probe_count)
    try:
        est = closed_loop_gain_estimate(h1, h2, 1.0, pairs)
    except DivergenceError:
        return None, ("empirical cross-check unavailable: fixed-point solver "
                      "is not contractive at full feedback")
    return (EmpiricalSummary(est.gamma, est.sample_count, 1.0),
            f"empirical closed-loop gain over {est.sample_count} probe pairs: "
            f"{est.gamma:.6g}")


def certify_srg(
    h1: OperatorSpec, h2: OperatorSpec, tau_lo: float = 1e-9,
    probe_seed: int = 0, probe_count: int = 12,
) -> Certificate | Refusal:
    """Certify via strict separation of declared SRG regions.

    Inverts the declared region of the forward block, chord-closes the
    declared region of the feedback block, and sweeps the feedback fraction.
    A positive certified margin ``r_min`` yields the incremental gain bound
    ``1/r_min`` and a homotopy schedule; a vanishing margin is a refusal
    carrying the violating fraction.
    """
    gamma1, region1 = _declared(h1, "forward operator")
    gamma2, region2 = _declared(h2, "feedback operator")
    s1_inv = invert_region(region1)
    s2 = chord_closure(region2)
    if not s2.is_bounded():
        raise ValueError("feedback operator's declared region must be bounded")
    sweep = separation_sweep(s1_inv, s2, tau_lo, 1.0)
    premises = [
        f"declared incremental gains: gamma1={gamma1:.12g}, "
        f"gamma2={gamma2:.12g}",
        "separation computed against the chord closure of the feedback "
        "block's declared region",
        f"feedback-fraction sweep residual slack: {sweep.slack:.3g} "
        f"({sweep.evaluations} evaluations)",
    ]
    for tag in region1.tags + region2.tags:
        premises.append(f"declared region flagged: {tag}")
    if sweep.margin <= 0.0:
        return Refusal("SRG", "declared SRG regions are not strictly "
                              "separated over the feedback sweep",
                       {"tau_star": sweep.tau_star})
    gamma = 1.0 / sweep.margin
    if gamma >= gamma1:
        premises.append(
            "uniform bound check: 1/r_min >= gamma1, open-loop end covered")
    else:
        premises.append(
            f"uniform bound check: 1/r_min = {gamma:.6g} < gamma1; schedule "
            "built with max(gamma1, 1/r_min)")
    schedule = _schedule_for(gamma1, gamma2, max(gamma, gamma1))
    empirical, note = _empirical_cross_check(h1, h2, probe_seed, probe_count)
    premises.append(note)
    return Certificate("SRG", sweep.margin, gamma, schedule,
                       tuple(premises), empirical)


def certify_relaxed(
    h1: OperatorSpec, h2: OperatorSpec, well_posedness_assumed: bool,
    tau_lo: float = 1e-9, probe_seed: int = 0, probe_count: int = 12,
) -> Certificate | Refusal:
    """SRG-separation certificate under relaxed premises.

    The geometric computation matches :func:`certify_srg`; the certificate
    additionally records finite-gain-with-zero-offset declarations and that
    well-posedness of the loop along the feedback sweep is assumed
    externally, not verified.  Causality of both blocks is probed before
    certifying.
    """
    if not well_posedness_assumed:
        return Refusal(
            "SRG", "relaxed mode requires well-posedness to be assumed "
                   "externally; pass well_posedness_assumed=True to record "
                   "that assumption", mode="relaxed")
    dim = h1.input_dim or 1
    probe = probe_pairs(dim=dim, seed=probe_seed, count=3)[0][0]
    t_checks = [0.25 * probe.horizon, 0.5 * probe.horizon,
                0.75 * probe.horizon]
    for name, op in (("forward", h1), ("feedback", h2)):
        result = causality_check(op, probe, t_checks)
        if not result.passed:
            raise ValueError(
                f"causality probe failed for the {name} operator "
                f"(violation {result.max_violation:.3g})")
    result = certify_srg(h1, h2, tau_lo, probe_seed, probe_count)
    extra = (
        "components declared with finite gain and zero offset (beta = 0)",
        "well-posedness of the loop for all feedback fractions is assumed "
        "externally, not verified",
        "causality probes passed for both components",
    )
    if isinstance(result, Refusal):
        return replace(result, mode="relaxed")
    return replace(result, mode="relaxed", premises=result.premises + extra)


def verify_feedback_identity(
    h1: OperatorSpec, h2: OperatorSpec, tau: float, nu: float,
    u_list: list[Signal],
) -> float:
    """Maximum discrepancy between the direct loop at fraction ``tau + nu``
    and the nested loop (inner fraction ``tau``, outer fraction ``nu``)."""
    if tau < 0.0 or nu < 0.0 or tau + nu > 1.0:
        raise ValueError("require tau, nu >= 0 and tau + nu <= 1")
    inner = feedback(h1, h2, tau)
    worst = 0.0
    for u in u_list:
        direct = solve_feedback(u, h1, h2, tau + nu).y
        nested = solve_feedback(u, inner, h2, nu).y
        worst = max(worst, norm(direct - nested))
    return worst
