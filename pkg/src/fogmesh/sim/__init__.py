from .core import ClockError, EventQueue, Server, Signal, Simulator
from .metrics import CSV_COLUMNS, MetricsSink, PRTimeline, ResponseSample, percentile
from .traffic import Replayer, TrafficModel, hop_latency, replay_traffic, service_label

__all__ = [
    "CSV_COLUMNS",
    "ClockError",
    "EventQueue",
    "MetricsSink",
    "PRTimeline",
    "Replayer",
    "ResponseSample",
    "Server",
    "Signal",
    "Simulator",
    "TrafficModel",
    "hop_latency",
    "percentile",
    "replay_traffic",
    "service_label",
]
