"""Round loop: local training, validation, sharing plan, averaging and correction."""

from __future__ import annotations

import logging
from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .data import SYNTHETIC_PRESETS, ClientShard, Dataset, load_csv, partition_clients, synthetic_preset
from .errors import ConfigError, NumericFailure
from .metrics import confusion, scores
from .model import ModelConfig, TrainSettings, adjusted_loss, evaluate_loss, init_model, sgd_epochs
from .protocol import LOSS_SOURCES, ClientState, RoundPlan, aggregate, correction_term, plan_sharing

log = logging.getLogger(__name__)

# Stream identifiers for seed derivation.
_DATA, _INIT, _TRAIN, _PARTITION, _GEOMETRY = 0, 1, 2, 3, 4


def derive_seed(master_seed: int, purpose: int, *key: int) -> int:
    """Independent 64-bit seed for ``(master_seed, purpose, *key)``."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(purpose, *key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    clients: int = 6
    rounds: int = 50
    n_best: int = 1
    lam: float = 0.25
    loss_source: str = "val"
    epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 0.01
    model: str = "softmax"
    hidden: tuple[int, ...] = (32,)
    datasets: tuple[str, ...] = ("grape", "apple", "corn")
    train_fraction: float = 0.8
    dim: int = 128
    spread: float = 5.0
    heterogeneity: float = 0.25
    sharing: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "datasets", tuple(str(d) for d in self.datasets))
        self.validate()

    def validate(self) -> None:
        if self.clients < 2:
            raise ConfigError("clients", "need at least 2 clients")
        if self.rounds < 1:
            raise ConfigError("rounds", "need at least 1 round")
        if not 1 <= self.n_best <= self.clients:
            raise ConfigError("n_best", f"must lie in [1, clients={self.clients}]")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lambda", "must lie in [0, 1]")
        if self.loss_source not in LOSS_SOURCES:
            raise ConfigError("loss_source", f"must be one of {LOSS_SOURCES}")
        if self.epochs < 1:
            raise ConfigError("epochs", "must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be at least 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate", "must be positive")
        if self.model not in ("softmax", "mlp"):
            raise ConfigError("model", "must be softmax or mlp")
        if self.model == "mlp" and (not self.hidden or min(self.hidden) < 1):
            raise ConfigError("hidden", "mlp needs positive hidden layer sizes")
        if not self.datasets:
            raise ConfigError("datasets", "need at least one dataset")
        for name in self.datasets:
            if name not in SYNTHETIC_PRESETS and not name.endswith(".csv"):
                raise ConfigError("datasets", f"{name!r} is neither a preset nor a .csv path")
        if self.clients % len(self.datasets):
            raise ConfigError(
                "clients", f"{self.clients} clients do not divide over {len(self.datasets)} datasets"
            )
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction", "must lie strictly between 0 and 1")
        if self.dim < 2:
            raise ConfigError("dim", "must be at least 2")
        if not self.spread > 0:
            raise ConfigError("spread", "must be positive")
        if self.heterogeneity < 0:
            raise ConfigError("heterogeneity", "must be non-negative")

    @property
    def clients_per_dataset(self) -> int:
        return self.clients // len(self.datasets)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["datasets"] = list(self.datasets)
        return d


@dataclass(frozen=True)
class ClientEntry:
    client_id: int
    train_loss: float
    val_loss: float
    adjusted_loss: float
    received_from: tuple[int, ...]
    accuracy: float
    precision: float
    recall: float
    f1: float

    @property
    def received_count(self) -> int:
        return len(self.received_from)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    entries: tuple[ClientEntry, ...]


@dataclass
class Simulation:
    """Everything a run needs besides the config: shards, model shape, worker count."""

    config: ExperimentConfig
    shards: list[ClientShard]
    model_config: ModelConfig
    workers: int = 1
    states: list[ClientState] = field(default_factory=list)


def build_datasets(config: ExperimentConfig) -> list[Dataset]:
    datasets = []
    for i, name in enumerate(config.datasets):
        if name.endswith(".csv"):
            datasets.append(load_csv(Path(name)))
        else:
            datasets.append(
                synthetic_preset(
                    name,
                    derive_seed(config.seed, _DATA, i),
                    config.dim,
                    config.spread,
                    geometry_seed=derive_seed(config.seed, _GEOMETRY),
                    heterogeneity=config.heterogeneity,
                )
            )
    dims = {ds.dim for ds in datasets}
    classes = {ds.class_count for ds in datasets}
    if len(dims) != 1 or len(classes) != 1:
        raise ConfigError("datasets", "all datasets must share feature dimension and class count")
    return datasets


def model_config_for(config: ExperimentConfig, ds: Dataset) -> ModelConfig:
    hidden = config.hidden if config.model == "mlp" else ()
    return ModelConfig(config.model, ds.dim, ds.class_count, hidden)


def initial_states(config: ExperimentConfig, model_config: ModelConfig) -> list[ClientState]:
    """All clients start from one shared initial model."""
    params = init_model(model_config, derive_seed(config.seed, _INIT))
    return [ClientState(k, params) for k in range(config.clients)]


def prepare(config: ExperimentConfig, workers: int = 1, shards: Sequence[ClientShard] | None = None) -> Simulation:
    if shards is None:
        datasets = build_datasets(config)
        shards = partition_clients(
            datasets, config.clients_per_dataset, config.train_fraction, derive_seed(config.seed, _PARTITION)
        )
    shards = list(shards)
    if len(shards) != config.clients:
        raise ConfigError("clients", f"{len(shards)} shards for {config.clients} clients")
    model_config = model_config_for(config, shards[0].train)
    return Simulation(config, shards, model_config, workers, initial_states(config, model_config))


@contextmanager
def _pool(workers: int):
    if workers <= 1:
        yield None
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            yield pool


def _map(pool: Executor | None, fn, items):
    if pool is None:
        return [fn(item) for item in items]
    return list(pool.map(fn, items))


def run_round(
    states: Sequence[ClientState],
    shards: Sequence[ClientShard],
    config: ExperimentConfig,
    t: int,
    model_config: ModelConfig | None = None,
    pool: Executor | None = None,
) -> tuple[list[ClientState], RoundRecord, RoundPlan]:
    """Advance every client by one communication round ``t`` (1-based)."""
    if t < 1:
        raise ValueError("round index starts at 1")
    if model_config is None:
        model_config = model_config_for(config, shards[0].train)

    def train(k: int):
        state, shard = states[k], shards[k]
        settings = TrainSettings(
            config.epochs,
            config.batch_size,
            config.learning_rate,
            config.lam,
            derive_seed(config.seed, _TRAIN, state.client_id, t),
        )
        try:
            local, train_loss, _ = sgd_epochs(
                state.params, model_config, shard.train, settings, state.pending_correction
            )
        except NumericFailure as exc:
            raise NumericFailure(
                f"round {t}, client {state.client_id}: {exc}", exc.batch_index
            ) from exc
        val_loss = evaluate_loss(local, model_config, shard.test)
        return local, train_loss, val_loss

    ids = range(len(states))
    trained = _map(pool, train, ids)
    locals_ = [r[0] for r in trained]
    train_losses = {states[k].client_id: trained[k][1] for k in ids}
    val_losses = {states[k].client_id: trained[k][2] for k in ids}

    if config.sharing:
        plan = plan_sharing(val_losses, config.n_best, train_losses)
    else:
        plan = RoundPlan.empty(val_losses)
    position = {s.client_id: k for k, s in enumerate(states)}

    def combine(k: int):
        cid = states[k].client_id
        senders = sorted(plan.senders_for(cid))
        merged = aggregate(locals_[k], [locals_[position[m]] for m in senders])
        cm = confusion(merged, model_config, shards[k].test)
        return merged, scores(cm)

    combined = _map(pool, combine, ids)

    new_states, entries = [], []
    for k in ids:
        cid = states[k].client_id
        received = plan.deliveries.get(cid, ())
        correction = correction_term(received, config.loss_source)
        adjusted = adjusted_loss(train_losses[cid], correction, config.lam)
        merged, sc = combined[k]
        new_states.append(
            ClientState(cid, merged, train_losses[cid], val_losses[cid], adjusted, correction)
        )
        entries.append(
            ClientEntry(
                cid,
                train_losses[cid],
                val_losses[cid],
                adjusted,
                tuple(sorted(d.sender_id for d in received)),
                sc.accuracy,
                sc.precision,
                sc.recall,
                sc.f1,
            )
        )
    return new_states, RoundRecord(t, tuple(entries)), plan


def iter_rounds(sim: Simulation) -> Iterator[tuple[RoundRecord, list[ClientState], RoundPlan]]:
    """Yield ``(record, states, plan)`` after each round; ``sim.states`` tracks progress."""
    with _pool(sim.workers) as pool:
        for t in range(1, sim.config.rounds + 1):
            sim.states, record, plan = run_round(
                sim.states, sim.shards, sim.config, t, sim.model_config, pool
            )
            log.debug("round %d done", t)
            yield record, sim.states, plan


def run_experiment(config: ExperimentConfig, workers: int = 1) -> list[RoundRecord]:
    sim = prepare(config, workers)
    return [record for record, _, _ in iter_rounds(sim)]
