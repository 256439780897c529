import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


LOG_LEVEL = os.getenv("COSEG_LOG_LEVEL", "INFO")
LOGGING_INI = os.getenv(
    "COSEG_LOGGING_INI", str(Path(__file__).resolve().parent.parent / "coseg" / "logging.ini")
)

_threads = {"workers": int(os.getenv("COSEG_THREADS", "1"))}


def get_workers() -> int:
    """Número de threads permitido para consultas paralelas (KD-tree)."""
    return _threads["workers"]


def set_workers(threads: int):
    """
    Limita o paralelismo interno.

    Com `threads=1` todas as reduções seguem a ordem dos índices, garantindo
    saídas idênticas byte a byte entre execuções.
    """
    if threads < 1:
        threads = 1
    _threads["workers"] = int(threads)
