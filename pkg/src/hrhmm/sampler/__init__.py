"""Posterior sampling: Metropolis-within-Gibbs with FFBS for the elite paths."""

from .diagnostics import chain_rhat, gelman_rubin
from .gibbs import GibbsChain, SamplerConfig, initial_state, run_chain, run_gibbs
from .store import ChainStore, pooled, read_chain, write_chain

__all__ = [
    "ChainStore", "GibbsChain", "SamplerConfig", "chain_rhat", "gelman_rubin", "initial_state",
    "pooled", "read_chain", "run_chain", "run_gibbs", "write_chain",
]
