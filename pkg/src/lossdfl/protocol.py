"""One sharing round: loss exchange, best-model selection, delivery and averaging."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import IncompatibleModelsError
from .model import ParameterVector

LOSS_SOURCES = ("val", "train")


@dataclass(frozen=True)
class ClientState:
    client_id: int
    params: ParameterVector
    last_train_loss: float = 0.0
    last_val_loss: float = 0.0
    last_adjusted_loss: float = 0.0
    pending_correction: float = 0.0


class Delivery(NamedTuple):
    sender_id: int
    sender_val_loss: float
    sender_train_loss: float


@dataclass(frozen=True)
class RoundPlan:
    best_ids: tuple[int, ...]
    deliveries: dict[int, tuple[Delivery, ...]] = field(default_factory=dict)

    def senders_for(self, client_id: int) -> tuple[int, ...]:
        return tuple(d.sender_id for d in self.deliveries.get(client_id, ()))

    @classmethod
    def empty(cls, client_ids) -> "RoundPlan":
        return cls(best_ids=(), deliveries={k: () for k in client_ids})


def _ranked(loss_table: Mapping[int, float]) -> list[int]:
    return sorted(loss_table, key=lambda k: (loss_table[k], k))


def select_best(loss_table: Mapping[int, float], n: int) -> list[int]:
    """Ids of the ``n`` lowest losses, ties resolved toward the smaller id."""
    if not loss_table:
        raise ValueError("loss table is empty")
    if n < 1:
        raise ValueError("n must be at least 1")
    return _ranked(loss_table)[:n]


def plan_sharing(
    loss_table: Mapping[int, float],
    n_best: int,
    train_losses: Mapping[int, float] | None = None,
) -> RoundPlan:
    """Deliver each of the ``n_best`` best models to every client with a strictly higher loss.

    With ``n_best`` equal to the client count this is the plain pairwise rule:
    every model goes to every peer that does worse.
    """
    if len(loss_table) < 2:
        raise ValueError("sharing needs at least two clients")
    best = select_best(loss_table, n_best)
    deliveries: dict[int, tuple[Delivery, ...]] = {}
    for k in sorted(loss_table):
        deliveries[k] = tuple(
            Delivery(
                m,
                float(loss_table[m]),
                float(train_losses[m]) if train_losses is not None else math.nan,
            )
            for m in best
            if m != k and loss_table[m] < loss_table[k]
        )
    return RoundPlan(tuple(best), deliveries)


def aggregate(own: ParameterVector, received: Sequence[ParameterVector]) -> ParameterVector:
    """Unweighted coordinate-wise mean of ``own`` and every received vector.

    Inputs are put in a canonical per-coordinate order (ascending value) and
    averaged as ``base + sum(x - base) / n``. The result therefore does not
    depend on the order of ``received`` and averaging identical vectors
    returns them exactly.
    """
    if not received:
        return own
    for other in received:
        if not own.compatible(other):
            raise IncompatibleModelsError(f"cannot average {own.shape_tag} with {other.shape_tag}")
        if len(other) != len(own):
            raise IncompatibleModelsError("parameter vectors differ in length")
    stack = np.sort(np.vstack([own.values, *(r.values for r in received)]), axis=0)
    base = stack[0]
    mean = base + (stack[1:] - base).sum(axis=0) / stack.shape[0]
    return ParameterVector(mean, own.shape_tag)


def correction_term(deliveries: Sequence[Delivery], source: str = "val") -> float:
    """Mean validation (or training) loss of the models a client received; 0 if none."""
    if source not in LOSS_SOURCES:
        raise ValueError(f"source must be one of {LOSS_SOURCES}")
    if not deliveries:
        return 0.0
    values = [d.sender_val_loss if source == "val" else d.sender_train_loss for d in deliveries]
    if any(math.isnan(v) for v in values):
        raise ValueError(f"deliveries carry no {source} losses")
    return math.fsum(values) / len(values)
