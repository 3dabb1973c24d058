from pathlib import Path

from environs import Env, EnvError

env = Env()
env.read_env()  # read .env file, if it exists

FIGURES_DIR: Path = env.path("XROFFLOAD_FIGURES_DIR", Path("figures"))
WORKERS: int = env.int("XROFFLOAD_WORKERS", 1)

__all__ = ("env", "EnvError", "FIGURES_DIR", "WORKERS")
