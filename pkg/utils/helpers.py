import logging
import random

import numpy as np
import torch
import yaml


def load_config(config_path: str = "config.yaml"):
    """
    Load configuration from a YAML file.
    """
    try:
        with open(config_path, 'r') as f:
            config = yaml.safe_load(f)
            return config if config is not None else {}
    except Exception as e:
        logging.error(f"Failed to load config file {config_path}: {e}")
        return None


def setup_logging(level: str = "INFO", log_file: str = None):
    """
    Configure logging for the tractography pipeline. Outputs to stderr or a file based on config.
    """
    log_level = getattr(logging, str(level).upper(), logging.INFO)
    if log_file:
        logging.basicConfig(filename=log_file, level=log_level,
                            format="%(asctime)s [%(levelname)s] %(message)s", force=True)
    else:
        logging.basicConfig(level=log_level,
                            format="%(asctime)s [%(levelname)s] %(message)s", force=True)
    logging.debug("Logging is configured.")


def seed_everything(seed: int):
    """
    Seed python, numpy and torch, and make torch pick deterministic kernels.
    """
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


def configure_threads(n_threads: int = 1):
    """
    Torch intra-op parallelism is pinned to one thread so results never depend on
    the worker count; `n_threads` is returned for seed-level fan-out.
    """
    torch.set_num_threads(1)
    return max(1, int(n_threads or 1))


def deep_merge(base: dict, override: dict) -> dict:
    """
    Recursively merge `override` into a copy of `base`. Values of None in override are skipped.
    """
    merged = dict(base)
    for key, value in (override or {}).items():
        if value is None:
            continue
        if isinstance(value, dict):
            base_value = merged.get(key)
            merged[key] = deep_merge(base_value if isinstance(base_value, dict) else {}, value)
        else:
            merged[key] = value
    return merged
