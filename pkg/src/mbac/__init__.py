"""Model-based actor-critic and an A2C baseline for a simulated voice-editing task.

The library is plain numpy.  The pieces, from the bottom up:

- :mod:`mbac.nn`: layers with hand-written backward passes, Adam, clipping
- :mod:`mbac.corpus`: sentences, train/test halves, token embeddings
- :mod:`mbac.env`: the editing simulator and its reward rule
- :mod:`mbac.state`, :mod:`mbac.model`, :mod:`mbac.policy`, :mod:`mbac.planner`
- :mod:`mbac.agent`: per-interaction learning rules
- :mod:`mbac.harness`: training runs, metrics, checkpoints, evaluation
"""

from .config import PRESETS, ConfigError, RunConfig
from .env import N_ACTIONS, reward_oracle
from .harness import detach_lite, evaluate, train

__version__ = "0.1.0"

__all__ = ["PRESETS", "ConfigError", "RunConfig", "N_ACTIONS", "reward_oracle",
           "detach_lite", "evaluate", "train", "__version__"]
