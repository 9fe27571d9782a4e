"""Grey-box system identification with RK4-templated, delay-embedded
neural models of partially observed dynamical systems."""

from .embedding import EmbeddingSpec, HistoryBuffer, embed_at, embed_interpolated
from .errors import (ColdStartError, ConfigError, ContractError,
                     DivergenceError, GreyboxError, NumericError, ShapeError,
                     TrainingFailure)
from .nncore import (AdamState, MlpParams, MlpSpec, Tape, adam_step,
                     glorot_init, loss_gradient, mlp_forward)
from .physics import (BioGrey, MMGrey, NormalizedPhysics, PhenomPriors,
                      PhysicsModel, UnitPrior, evaluate_g, evaluate_prior,
                      trainable_parameters)
from .rkmodel import (BBAnnModel, GBAnnModel, free_run, load_model,
                      predict_step, save_model, step_loss_and_grad)
from .series import TimeSeries, load_series
from .simulators import (BioTruthParams, MMTruthParams, StepSignal,
                         integrate_truth, make_chirp_signal, make_step_signal)
from .systems import SystemDef, get_system
from .train import (Dataset, ExperimentConfig, Normalizer, evaluate_offline,
                    evaluate_online, fit_normalizer, run_experiment,
                    train_model)

__version__ = "0.1.0"
