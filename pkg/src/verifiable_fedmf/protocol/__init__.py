"""Four-phase protocol: messages, actors, adversarial servers and the driver."""

from .actors import FULLTEXT, PARTTEXT, PLAINTEXT, ProtocolConfig, ServerActor, UserActor
from .adversary import (
    AdversaryMode,
    DropMessage,
    FlipBit,
    Honest,
    ReplayMaskedVec,
    TamperAggregate,
    TamperDecommit,
    parse_adversary,
)
from .runner import (
    Rejection,
    Session,
    TimingRecord,
    comm_table,
    create_session,
    run_initialization,
    run_iteration,
    transcript,
)
from .training import TrainedModel, TrainingConfig, compute_seconds, run_training, step_times

__all__ = [
    "FULLTEXT",
    "PARTTEXT",
    "PLAINTEXT",
    "AdversaryMode",
    "DropMessage",
    "FlipBit",
    "Honest",
    "ProtocolConfig",
    "Rejection",
    "ReplayMaskedVec",
    "ServerActor",
    "Session",
    "TrainedModel",
    "TrainingConfig",
    "TamperAggregate",
    "TamperDecommit",
    "TimingRecord",
    "UserActor",
    "comm_table",
    "compute_seconds",
    "create_session",
    "parse_adversary",
    "run_initialization",
    "run_iteration",
    "run_training",
    "step_times",
    "transcript",
]
