"""Memorization audits for score-based generative models.

A synthetic fingerprint is planted in one training row; the audit measures
how readily the model regenerates that row (the ``t'`` indicator, a Darboux
bound on the reproduction probability and a sampling census).
"""
from .audit import (AuditReport, QCurve, binomial_test, census, darboux_bound, find_t_prime,
                    frechet_gaussian_distance, mae_to_target, q_hat, wilson_interval)
from .classifier import LinearClassifier, joint_positive, predict
from .config import ExperimentConfig, load_config
from .data import Dataset, DataSpec, gen_toy_dataset
from .errors import AuditError, CapabilityError, ConfigError, NumericError, StiffnessError
from .experiment import run_experiment, run_sweep
from .fingerprint import Disc, FingerprintSpec, Interval, inject, make_mask
from .likelihood import exact_nll, hutchinson_divergence
from .sampler import SamplerConfig, flow_ode_sample, renoise_denoise, reverse_sde_sample
from .score import EmpiricalOracle, MlpScore, TrainConfig, train_score
from .sde import SdeSpec, marginal_params

__version__ = "0.1.0"
