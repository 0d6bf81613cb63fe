"""
Flow-matching action sampling and closed-loop rollouts
"""

from .rollout import (
    GateTrace, Rollout, ActionSample, PolicyAgent, ExpertAgent, ZeroAgent,
    sample_actions, sample_batch, integrate_flow, decide_gate, run_rollouts, rollout, episode_rng,
)
