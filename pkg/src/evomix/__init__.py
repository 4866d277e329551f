"""Task-free continual learning with an expanding mixture of VAE experts.

A stream of small batches feeds a bounded replay memory; one expert (a
VAE plus classifier) trains on the memory at a time.  When the memory
is full, a kernel dependence statistic between each expert's generative
replay and the memory decides whether the distribution has shifted; if
so the active expert is frozen, a fresh one is spawned and the memory
is cleared.  Prediction routes each input to the expert with the best
likelihood score.
"""

from .config import ModelConfig, RunConfig, StreamConfig, load_config
from .expert import Expert, ExpertArchitecture
from .hsic import HsicConfig, KernelSpec
from .memory import MemoryBuffer, Sample
from .mixture import HsicReport, MixtureModel, TrainConfig
from .stream import Dataset, Stream, StreamSpec

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Expert",
    "ExpertArchitecture",
    "HsicConfig",
    "HsicReport",
    "KernelSpec",
    "MemoryBuffer",
    "MixtureModel",
    "ModelConfig",
    "RunConfig",
    "Sample",
    "Stream",
    "StreamSpec",
    "TrainConfig",
    "load_config",
    "__version__",
]
