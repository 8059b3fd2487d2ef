from fluxamba.services.ablation import run_ablation
from fluxamba.services.benchmark import benchmark
from fluxamba.services.datasets import generate_dataset
from fluxamba.services.evaluation import evaluate_checkpoint
from fluxamba.services.gradcheck import run_gradcheck
from fluxamba.services.inference import infer
from fluxamba.services.training import train_model

__all__ = [
    # Data
    "generate_dataset",
    # Model lifecycle
    "train_model",
    "infer",
    "evaluate_checkpoint",
    # Diagnostics
    "benchmark",
    "run_gradcheck",
    "run_ablation",
]
