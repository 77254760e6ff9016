"""K-LID-SVM: kernel-LID sample weighting against label-flip and poisoning attacks on SVMs."""
__version__ = "0.1.0"

from .data import Dataset, DataError, load_dataset, generate_synthetic  # noqa: E402
from .kernel import KernelSpec  # noqa: E402
from .lid import LidConfig  # noqa: E402
from .svm import SvmConfig, TrainedModel, train_weighted_svm, predict, error_rate  # noqa: E402
from .defense import compute_weights  # noqa: E402
from .attacks import run_attack  # noqa: E402
from .dsvm import DsvmConfig, train_distributed  # noqa: E402

__all__ = [
    "Dataset", "DataError", "load_dataset", "generate_synthetic", "KernelSpec", "LidConfig",
    "SvmConfig", "TrainedModel", "train_weighted_svm", "predict", "error_rate",
    "compute_weights", "run_attack", "DsvmConfig", "train_distributed",
]
