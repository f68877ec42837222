"""Loss-guided decentralized federated learning simulator.

Clients train locally, exchange models only with peers whose validation loss
is worse than the sender's, aggregate by unweighted averaging and record a
lambda-weighted external loss term for the next round.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    CSVParseError,
    IncompatibleModelsError,
    NumericFailure,
)
from .data import (
    ClientShard,
    Dataset,
    generate_synthetic,
    load_csv,
    partition_clients,
    split_train_test,
)
from .model import (
    ModelConfig,
    ParameterVector,
    TrainSettings,
    adjusted_loss,
    evaluate_loss,
    forward,
    gradient,
    init_model,
    sgd_epochs,
)
from .protocol import (
    ClientState,
    Delivery,
    RoundPlan,
    aggregate,
    correction_term,
    plan_sharing,
    select_best,
)
from .metrics import ConfusionMatrix, confusion, scores, summarize
from .engine import ClientEntry, ExperimentConfig, RoundRecord, run_experiment, run_round

__all__ = [name for name in dir() if not name.startswith("_")]
