"""Sequence models for early sepsis risk from bedside vital signs.

Class-conditional hidden Markov models with Gaussian-mixture or
normalizing-flow emissions, optional discriminative fine-tuning of the
flow variant, static-feature baselines, a synthetic cohort generator,
and a reproducible experiment harness.
"""

from .baselines import ElmModel, LogisticModel, elm_fit, logreg_cv_grid, logreg_fit
from .dataset import (
    CHANNELS,
    FRAME_LEN,
    Dataset,
    EhrEvent,
    Frame,
    Recording,
    label_frames,
    patient_split,
    segment,
)
from .discriminative import (
    DiscriminativeConfig,
    discriminative_finetune,
    posterior_objective,
)
from .errors import (
    ConfigError,
    ContractError,
    NumericalError,
    TrainingError,
    VitalHmmError,
)
from .features import (
    Standardizer,
    extend_derivatives,
    hrci,
    pops,
    sample_asymmetry,
    standardize_fit,
)
from .flow import (
    FlowEmission,
    flow_forward,
    flow_init,
    flow_inverse,
    flow_log_density,
    flow_mstep,
    init_flow_hmm,
    train_flow_hmm,
)
from .gmm import GmmEmission, gmm_init
from .harness import ExperimentConfig, run_experiment, write_results
from .hmm import (
    BaumWelchConfig,
    ClassifierPair,
    HmmModel,
    baum_welch,
    forward_log,
    posteriors,
    sequence_log_likelihood,
    train_gmm_hmm,
    viterbi,
)
from .model_io import load_baseline, load_pair, save_baseline, save_pair
from .optim import AdamConfig, AdamState, adam_step
from .synth import SynthSpec, default_truth_pair, generate_dataset, write_cohort

__version__ = "0.1.0"

__all__ = [
    "AdamConfig",
    "AdamState",
    "BaumWelchConfig",
    "CHANNELS",
    "ClassifierPair",
    "ConfigError",
    "ContractError",
    "Dataset",
    "DiscriminativeConfig",
    "EhrEvent",
    "ElmModel",
    "ExperimentConfig",
    "FRAME_LEN",
    "FlowEmission",
    "Frame",
    "GmmEmission",
    "HmmModel",
    "LogisticModel",
    "NumericalError",
    "Recording",
    "Standardizer",
    "SynthSpec",
    "TrainingError",
    "VitalHmmError",
    "adam_step",
    "baum_welch",
    "default_truth_pair",
    "discriminative_finetune",
    "elm_fit",
    "extend_derivatives",
    "flow_forward",
    "flow_init",
    "flow_inverse",
    "flow_log_density",
    "flow_mstep",
    "forward_log",
    "generate_dataset",
    "gmm_init",
    "hrci",
    "init_flow_hmm",
    "label_frames",
    "load_baseline",
    "load_pair",
    "logreg_cv_grid",
    "logreg_fit",
    "patient_split",
    "pops",
    "posterior_objective",
    "posteriors",
    "run_experiment",
    "sample_asymmetry",
    "save_baseline",
    "save_pair",
    "segment",
    "sequence_log_likelihood",
    "standardize_fit",
    "train_flow_hmm",
    "train_gmm_hmm",
    "viterbi",
    "write_cohort",
    "write_results",
]
