"""
配置模块

提供项目的配置管理功能
"""

from .settings import (
    CONFIG_SCHEMA,
    PATHS,
    SENT_END,
    SENT_START,
    SPECIAL_TOKENS,
    UNK,
    RunConfig,
    load_production_config,
    load_run_config,
)

__all__ = [
    "CONFIG_SCHEMA",
    "PATHS",
    "SENT_START",
    "SENT_END",
    "UNK",
    "SPECIAL_TOKENS",
    "RunConfig",
    "load_run_config",
    "load_production_config",
]
