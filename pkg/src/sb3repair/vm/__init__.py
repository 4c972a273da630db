"""Block-language execution and staged verification."""
from .interpreter import ExecutionTrace, SpriteState, VmState, execute
from .snapshot import StageSnapshot, capture_snapshot
from .verifier import (
    Check,
    GoldFailsSuite,
    ProbeReport,
    RunSchedule,
    TestSuite,
    VerdictReport,
    full_verify,
    precheck,
    probe,
)

__all__ = [
    "Check",
    "ExecutionTrace",
    "GoldFailsSuite",
    "ProbeReport",
    "RunSchedule",
    "SpriteState",
    "StageSnapshot",
    "TestSuite",
    "VerdictReport",
    "VmState",
    "capture_snapshot",
    "execute",
    "full_verify",
    "precheck",
    "probe",
]
