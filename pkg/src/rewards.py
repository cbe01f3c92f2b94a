"""Per-step Blue and Red rewards with component breakdowns"""
from dataclasses import dataclass
from typing import Iterable, Optional

from src.schemas import BlueRewardBreakdown, EffectKind, RedRewardBreakdown, Team
from src.state import Compromise, WorldState
import config


@dataclass(frozen=True)
class CompletedEvent:
    """What the reward engine needs from one completed event"""
    team: Team
    kind: EffectKind
    energy: float
    success: bool
    target_was_compromised: bool = False
    prev_compromise: Compromise = Compromise.HEALTHY
    new_compromise: Compromise = Compromise.HEALTHY
    honeytoken_tripped: bool = False


def blue_step_reward(state: WorldState, completed: Iterable[CompletedEvent],
                     honeytoken_bonus: bool = True) -> BlueRewardBreakdown:
    """tactical + health - economics - cost

    Correctness of isolation and cleanup uses ground truth at completion.
    Health counts hosts that are Healthy and not isolated.
    """
    total_hosts = state.topology.node_count
    tactical = 0.0
    cost = 0.0
    for event in completed:
        if event.team == Team.BLUE:
            cost += event.energy
            if not event.success:
                continue
            if event.kind == EffectKind.ISOLATE:
                tactical += (config.REWARD_CORRECT_ISOLATION if event.target_was_compromised
                             else config.REWARD_FALSE_POSITIVE_ISOLATION)
            elif event.kind == EffectKind.CLEANUP and event.target_was_compromised:
                tactical += config.REWARD_CLEANUP
        elif event.honeytoken_tripped and honeytoken_bonus:
            tactical += config.REWARD_HONEYTOKEN_TRIP

    health = config.REWARD_HEALTH_SCALE * state.healthy_count / total_hosts
    economics = config.REWARD_ECONOMICS_SCALE * state.isolated_count / total_hosts
    return BlueRewardBreakdown(
        tactical=tactical,
        health=health,
        economics=economics,
        cost=cost,
        total=tactical + health - economics - cost,
    )


def red_step_reward(state: WorldState,
                    completed: Iterable[CompletedEvent]) -> RedRewardBreakdown:
    """tactical + progression - cost"""
    tactical = 0.0
    cost = 0.0
    for event in completed:
        if event.team != Team.RED:
            continue
        cost += event.energy
        if not event.success:
            continue
        if event.new_compromise == Compromise.ROOT and event.prev_compromise < Compromise.ROOT:
            tactical += config.REWARD_RED_ROOT
        elif (event.new_compromise == Compromise.USER_SHELL
              and event.prev_compromise == Compromise.HEALTHY):
            tactical += config.REWARD_RED_SHELL

    progression = (config.REWARD_RED_PROGRESSION_SCALE * state.compromised_count
                   / state.topology.node_count)
    return RedRewardBreakdown(
        tactical=tactical,
        progression=progression,
        cost=cost,
        total=tactical + progression - cost,
    )


def from_outcome(team: Team, kind: Optional[EffectKind], energy: float, delta) -> CompletedEvent:
    return CompletedEvent(
        team=team,
        kind=kind if kind is not None else EffectKind.NO_OP,
        energy=energy,
        success=delta.success,
        target_was_compromised=delta.target_was_compromised,
        prev_compromise=delta.prev_compromise,
        new_compromise=delta.new_compromise,
        honeytoken_tripped=delta.honeytoken_tripped,
    )
