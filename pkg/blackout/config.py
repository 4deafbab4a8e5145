"""
Config module for blackout
"""


import logging
import os
from typing import Any, Dict, Optional

from blackout.utils import dict_deep_update, drop_none

LOG = None

# environment variable that takes precedence over the --out option
OUT_ENV_VAR = "BD_OUT"


def get_log() -> logging.Logger:
    if LOG is None:
        return logging.getLogger("blackout")
    return LOG


def get_settings_with_precedence(
    defaults: Dict, file_overrides: Optional[Dict], cli_overrides: Optional[Dict]
) -> Dict[str, Any]:
    """Return the resulting settings dict from the provided override values.
    CLI values that were left at ``None`` do not override anything.
    """
    # settings override order:
    # 1. schema defaults
    settings: Dict[str, Any] = {}
    dict_deep_update(settings, defaults)
    # 2. settings from a --config yaml file
    if file_overrides:
        dict_deep_update(settings, file_overrides)
    # 3. explicit CLI flags
    if cli_overrides:
        dict_deep_update(settings, drop_none(cli_overrides))

    return settings


def resolve_out_dir(out_dir: Optional[str]) -> str:
    """Return the output directory, honoring the BD_OUT environment variable,
    and make sure it exists.
    """
    env_dir = os.environ.get(OUT_ENV_VAR)
    if env_dir:
        out_dir = env_dir
    if not out_dir:
        out_dir = os.getcwd()
    os.makedirs(out_dir, exist_ok=True)
    return out_dir
