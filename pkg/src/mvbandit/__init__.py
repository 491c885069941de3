"""Risk-averse multi-armed bandits under the mean-variance measure."""

from .core import (Bernoulli, BanditInstance, Gaussian, InfeasibleInstanceError, RandomStream,
                   make_instance, sample, true_mean_variance)
from .estimators import StreamingMoments
from .policies import (CounterexampleThreshold, MvDsee, MvUcb, RiskNeutralUcb, RunTrace,
                       SingleArm, TraceBatch, run_policy, simulate)

__version__ = "0.1.0"

__all__ = [
    "BanditInstance", "Bernoulli", "CounterexampleThreshold", "Gaussian", "InfeasibleInstanceError",
    "MvDsee", "MvUcb", "RandomStream", "RiskNeutralUcb", "RunTrace", "SingleArm", "StreamingMoments",
    "TraceBatch", "make_instance", "run_policy", "sample", "simulate", "true_mean_variance",
]
