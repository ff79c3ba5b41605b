"""Crawl simulator: centralized and distributed architectures under API quotas."""

from .corpus import Corpus
from .engine import (
    Architecture,
    MachineState,
    Migration,
    QuotaExhausted,
    QuotaPolicy,
    RebalanceResult,
    ScheduleModel,
    SimConfig,
    SimState,
    Simulation,
    assign_task_centralized,
    crawl_user,
    rebalance,
    run,
    run_centralized,
    run_distributed,
    simulate,
)
from .metrics import REPORT_COLUMNS, EventLog, SimReport, compute_metrics

__all__ = [
    "Architecture", "Corpus", "EventLog", "MachineState", "Migration", "QuotaExhausted",
    "QuotaPolicy", "REPORT_COLUMNS", "RebalanceResult", "ScheduleModel", "SimConfig",
    "SimReport", "SimState", "Simulation", "assign_task_centralized", "compute_metrics",
    "crawl_user", "rebalance", "run", "run_centralized", "run_distributed", "simulate",
]
