"""Simulator of centralized, blockchain and gossip federated learning."""

from pathlib import Path

from ._fedsim import (
    ConfigError,
    comm_overhead,
    control_frame_us,
    convergence_time,
    fedavg,
    merge,
    model_param_count,
    packet_exchange_s,
    pow_energy_wh,
    run,
    simulate_chain,
)


def run_file(path, counting_only=False):
    """Runs a YAML config file; relative dataset paths follow the file."""
    path = Path(path)
    return run(path.read_text(), path.parent, counting_only)


__all__ = [
    "ConfigError",
    "comm_overhead",
    "control_frame_us",
    "convergence_time",
    "fedavg",
    "merge",
    "model_param_count",
    "packet_exchange_s",
    "pow_energy_wh",
    "run",
    "run_file",
    "simulate_chain",
]
