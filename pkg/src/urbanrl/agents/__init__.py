"""Tabular Q-learning, DQN and SAC agents for the HVAC environment."""

from urbanrl.agents.dqn import DqnAgent, DqnConfig, dqn_td_target, linear_epsilon
from urbanrl.agents.qlearning import (
    EncodingError,
    QLearningAgent,
    QLearningConfig,
    QTable,
    encode_state,
    epsilon_exponential,
    q_update,
)
from urbanrl.agents.replay import Batch, ReplayBuffer, Transition
from urbanrl.agents.sac import SacAgent, SacConfig, sac_td_target, squashed_gaussian_log_prob

AGENT_KINDS = ("qlearning", "dqn", "sac")

__all__ = [
    "AGENT_KINDS", "Batch", "DqnAgent", "DqnConfig", "EncodingError", "QLearningAgent",
    "QLearningConfig", "QTable", "ReplayBuffer", "SacAgent", "SacConfig", "Transition",
    "dqn_td_target", "encode_state", "epsilon_exponential", "linear_epsilon", "q_update",
    "sac_td_target", "squashed_gaussian_log_prob",
]
