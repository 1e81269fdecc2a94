"""Decision field theory and multinomial logit choice models with physiological inputs."""
from .data import Dataset, read_dataset, write_dataset
from .dft import ChoiceTask, DftParams, task_moments, task_probabilities
from .errors import PhysioDftError
from .estimation import FitResult, estimate, fit_stats, log_likelihood, lr_test, null_log_likelihood
from .models import get_variant, variant_keys
from .simulate import GapDesign, StaticDesign, generate_dataset

__all__ = [
    "ChoiceTask", "Dataset", "DftParams", "FitResult", "GapDesign", "PhysioDftError", "StaticDesign",
    "estimate", "fit_stats", "generate_dataset", "get_variant", "log_likelihood", "lr_test",
    "null_log_likelihood", "read_dataset", "task_moments", "task_probabilities", "variant_keys",
    "write_dataset",
]
