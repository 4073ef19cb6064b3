"""EMG-driven joint angle estimation with a physics-informed loss.

Modules: ``dynamics`` (two-link arm), ``signals`` (EMG conditioning),
``autodiff`` (reverse mode), ``network`` (MLP), ``training``, ``data``,
``evaluation`` and the ``cli``.
"""
from . import autodiff, config, data, dynamics, evaluation, network, signals, training
from ._accel import BACKEND

__version__ = "0.1.0"

__all__ = ["autodiff", "config", "data", "dynamics", "evaluation", "network", "signals",
           "training", "BACKEND", "__version__"]
