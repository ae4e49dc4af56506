"""Networked algorithms over a simulated network of agents."""

from .problem import DistributedProblem
from .rounds import (NetworkState, abg_round, check_network_steps, consensus_residual,
                     dadmm_plus_round, dapd_operator, dapd_round, dgd_round,
                     initial_network_state, is_antisymmetric, pack_agent_blocks, pwg_round,
                     unpack_agent_blocks)
from .runner import ALGORITHMS, ActivationProcess, decaying_step, run_distributed
from .simnet import AgentState, SimNetwork, simulate
