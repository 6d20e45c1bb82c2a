import os

from dotenv import load_dotenv

# Load environment variables from .env file for local development
load_dotenv()

LOG_LEVEL = os.getenv("SMPCONV_LOG_LEVEL", "INFO").upper()
DEFAULT_OUT_DIR = os.getenv("SMPCONV_OUT_DIR", "runs")
# Multi-threaded BLAS only if SMPCONV_PARALLEL is set to "true" or "1"
PARALLEL = os.getenv("SMPCONV_PARALLEL", "false").lower() in ("true", "1")

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def pin_single_thread() -> None:
    """Default BLAS thread pools to one thread unless parallel mode is enabled.

    Only effective when called before numpy is first imported.
    """
    if PARALLEL:
        return
    for name in _THREAD_VARS:
        os.environ.setdefault(name, "1")
