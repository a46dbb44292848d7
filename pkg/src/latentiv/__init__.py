"""Causal effect estimation with a learned instrumental-variable representation.

The library learns a latent instrument from pretreatment covariates with a
disentangling variational autoencoder and feeds it into classical /
orthogonal IV estimators.  Seeded synthetic structural causal models with
known effect (2.0) are included for benchmarking.
"""

from .autodiff import (AdamState, GradCheckReport, MlpLayer, MlpParams,
                       Tensor, adam_step, grad_check, mlp_apply, mlp_init)
from .dataio import ColumnMapping, load_tabular_dataset
from .errors import (LatentIVError, NumericError, SchemaError,
                     ShapeMismatchError, SpecError, TrainingError,
                     WeakInstrumentError)
from .estimators import (EstimationReport, estimate_effect, ortho_iv, tsls,
                         wald_ratio)
from .evaluation import (PdfComparison, ReplicationSummary, estimation_bias,
                         pcc_profile, pdf_compare, replicate)
from .model import (ForwardOutputs, ModelParams, VaeConfig, extract_iv,
                    kl_diag_gauss, latent_decorrelation, model_forward, opr,
                    total_loss, train)
from .scm import (Dataset, ScenarioSpec, generate, generate_highdim,
                  generate_multi_siv, generate_single_siv,
                  propensity_single_siv)

__version__ = "0.1.0"
