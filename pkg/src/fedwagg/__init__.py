"""Secure weighted aggregation for federated learning.

Library + protocol simulator: Paillier-encrypted data-disparity weighting,
zero-knowledge verification of published decryptions and weighted models,
and dropout-resilient masked aggregation, with a benchmark harness that
reports per-step run time and exact communication bytes.
"""

from .fixedpoint import FixedPointCodec, ScaledResidue
from .logreg import CubicPoly, LogRegModel, TrainConfig, fit_cubic, sigmoid, train
from .paillier import (
    Ciphertext,
    PaillierPublicKey,
    PaillierSecretKey,
    decrypt,
    encrypt,
    generate_keypair,
    he_add,
    he_scalar_mul,
    keygen,
)
from .disparity import WeightRecord, compute_weights, renormalize_for_dropout
from .harness import ExperimentSpec, MetricsReport, emit_report, load_dataset, run_experiment
from .protocol import (
    AdversaryScript,
    DropoutSchedule,
    ProtocolAbort,
    ProtocolConfig,
    ProtocolRunner,
    tolerance_bounds,
    validate_tolerance,
)
from .secagg import mask_generation, masked_model_aggregation, model_aggregation_recovery, prg_expand
from .shamir import ShamirShare, reconstruct, share
from .zkpopk import PopkVerdict, ZeroProofSession, ppopk, ppopk_vector, zkpopk_zero

__version__ = "0.1.0"

__all__ = [
    "AdversaryScript",
    "Ciphertext",
    "CubicPoly",
    "DropoutSchedule",
    "ExperimentSpec",
    "FixedPointCodec",
    "LogRegModel",
    "MetricsReport",
    "PaillierPublicKey",
    "PaillierSecretKey",
    "PopkVerdict",
    "ProtocolAbort",
    "ProtocolConfig",
    "ProtocolRunner",
    "ScaledResidue",
    "ShamirShare",
    "TrainConfig",
    "WeightRecord",
    "ZeroProofSession",
    "compute_weights",
    "decrypt",
    "emit_report",
    "encrypt",
    "fit_cubic",
    "generate_keypair",
    "he_add",
    "he_scalar_mul",
    "keygen",
    "load_dataset",
    "mask_generation",
    "masked_model_aggregation",
    "model_aggregation_recovery",
    "ppopk",
    "ppopk_vector",
    "prg_expand",
    "reconstruct",
    "renormalize_for_dropout",
    "run_experiment",
    "share",
    "sigmoid",
    "tolerance_bounds",
    "train",
    "validate_tolerance",
    "zkpopk_zero",
]
