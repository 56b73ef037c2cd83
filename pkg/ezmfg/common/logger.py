"""
Per-layer loggers with automatic prefix tagging

Handlers live on the package logger `ezmfg` and are installed once; the layer
loggers (`ezmfg.solver`, `ezmfg.sim`, `ezmfg.pipeline`, `ezmfg.output`)
propagate to it, so a single rotating file serves every layer.
"""
import inspect
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from ezmfg.core.config import app_config

PACKAGE = 'ezmfg'
LOG_FILE = 'ezmfg.log'
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class AutoPrefixLogger:
    """Logger wrapper that prefixes messages with the calling class or function name"""

    _log_methods = frozenset({'debug', 'info', 'warning', 'error', 'critical', 'exception'})

    def __init__(self, base_logger: logging.Logger):
        self.base_logger = base_logger

    @staticmethod
    def _caller_name() -> Optional[str]:
        # frames: _caller_name, log_method, caller
        frame = inspect.currentframe()
        for _ in range(2):
            if frame is None:
                return None
            frame = frame.f_back
        if frame is None:
            return None
        local = frame.f_locals
        if 'self' in local:
            return type(local['self']).__name__
        if isinstance(local.get('cls'), type):
            return local['cls'].__name__
        name = frame.f_code.co_name
        return None if name == '<module>' else name

    def __getattr__(self, name):
        if name not in self._log_methods:
            return getattr(self.base_logger, name)
        base_method = getattr(self.base_logger, name)
        level = logging.ERROR if name == 'exception' else logging.getLevelName(name.upper())

        def log_method(msg, *args, **kwargs):
            # solver loops log at DEBUG; skip the frame lookup when it is filtered out
            if not self.base_logger.isEnabledFor(level):
                return None
            caller = self._caller_name()
            return base_method(f"[{caller}] {msg}" if caller else msg, *args, **kwargs)

        return log_method


def _configure_package() -> logging.Logger:
    package = logging.getLogger(PACKAGE)
    if package.handlers:
        return package

    runtime = app_config.runtime_config
    package.setLevel(logging.DEBUG if runtime['debug'] else logging.INFO)
    package.propagate = False
    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    package.addHandler(console_handler)

    if runtime['log_to_file']:
        log_dir = Path(runtime['log_dir'])
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_dir / LOG_FILE,
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5,
            encoding='utf-8'
        )
        file_handler.setFormatter(formatter)
        package.addHandler(file_handler)
    return package


def setup_logger(layer_name: str) -> AutoPrefixLogger:
    """
    Logger for one layer of the package.

    Args:
        layer_name: 'solver', 'sim', 'pipeline' or 'output'

    Returns:
        AutoPrefixLogger writing through the package handlers
    """
    _configure_package()
    return AutoPrefixLogger(logging.getLogger(f'{PACKAGE}.{layer_name}'))
