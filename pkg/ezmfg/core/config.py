"""
Configuration management using python-dotenv for environment variables
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file at the project root (optional)
env_path = Path(__file__).parent.parent.parent / '.env'
load_dotenv(dotenv_path=env_path, override=False)


def _env_flag(name: str, default: str = 'false') -> bool:
    return os.getenv(name, default).lower() == 'true'


class AppConfig:
    """Process-level settings. Values are re-read on every access so that
    tests and subprocesses can change them through the environment."""

    @property
    def runtime_config(self) -> dict:
        """Logging and debug switches"""
        return {
            'debug': _env_flag('DEBUG'),
            'log_to_file': _env_flag('LOG_TO_FILE'),
            'log_dir': os.getenv('EZMFG_LOG_DIR', 'logs'),
        }

    @property
    def sim_threads(self) -> int:
        """Worker cap for Monte Carlo block evaluation"""
        raw = os.getenv('EZMFG_THREADS')
        if not raw:
            return os.cpu_count() or 1
        try:
            threads = int(raw)
        except ValueError:
            raise RuntimeError(f"EZMFG_THREADS must be an integer, got {raw!r}")
        if threads < 1:
            raise RuntimeError(f"EZMFG_THREADS must be at least 1, got {threads}")
        return threads

    @property
    def sim_defaults(self) -> dict:
        """Defaults applied when a run config omits the sim section"""
        return {
            'n_paths': int(os.getenv('EZMFG_DEFAULT_PATHS', '10000')),
            'seed': int(os.getenv('EZMFG_DEFAULT_SEED', '0')),
            'block_size': int(os.getenv('EZMFG_BLOCK_SIZE', '2048')),
        }


# Create singleton instance
app_config = AppConfig()
