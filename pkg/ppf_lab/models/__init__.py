# Domain types
from .network import AdmittanceMatrix, Branch, Bus, BusKind, Gen, NetworkCase
from .states import (
    BranchFlows,
    Dataset,
    InjectionSample,
    PfSolution,
    PfState,
    StateEstimate,
    StateSample,
)
from .estimators import BusSplit, LinearModel, MethodBundle, MlpModel, Standardizer, StateLayout
from .reports import EvalReport, MetricsReport, ResponseMatrixPair

__all__ = [
    "AdmittanceMatrix",
    "Branch",
    "Bus",
    "BusKind",
    "Gen",
    "NetworkCase",
    "BranchFlows",
    "Dataset",
    "InjectionSample",
    "PfSolution",
    "PfState",
    "StateEstimate",
    "StateSample",
    "BusSplit",
    "LinearModel",
    "MethodBundle",
    "MlpModel",
    "Standardizer",
    "StateLayout",
    "EvalReport",
    "MetricsReport",
    "ResponseMatrixPair",
]
