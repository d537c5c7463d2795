"""loopsim: a deterministic simulator for closed-loop network automation.

MAPE-K style control loops are expressed as step chains with per-step QoS,
embedded into a modeled software-defined infrastructure, and executed under
an orchestrator that detects cross-loop conflicts, arbitrates by priority
and dry-runs surviving actions on a cloned world before applying them.
"""

__version__ = "0.1.0"

from .errors import ConfigError, SimError

__all__ = ["ConfigError", "SimError", "__version__"]
