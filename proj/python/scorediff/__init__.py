# Copyright (C) 2026 The scorediff Authors
# SPDX-License-Identifier: Apache-2.0
"""Score diffusion for video summarization (C++ core)."""

from ._core import (
    ConfigError,
    ContractError,
    DimensionError,
    ValidationError,
    budget_capacity,
    cmd_evaluate,
    cmd_kp_study,
    cmd_sample,
    cmd_synth,
    cmd_train,
    default_config,
    enumerate_optima,
    generate_summary,
    kendall_tau,
    kts_segment,
    load_dataset,
    map_at_rho,
    sensitivity,
    solve_kp,
    spearman_rho,
    synth_generate,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "ValidationError",
    "budget_capacity",
    "cmd_evaluate",
    "cmd_kp_study",
    "cmd_sample",
    "cmd_synth",
    "cmd_train",
    "default_config",
    "enumerate_optima",
    "generate_summary",
    "kendall_tau",
    "kts_segment",
    "load_dataset",
    "map_at_rho",
    "sensitivity",
    "solve_kp",
    "spearman_rho",
    "synth_generate",
]
__version__ = "0.1.0"
