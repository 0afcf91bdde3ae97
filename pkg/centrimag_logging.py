import json
import logging
import os
from datetime import datetime, timezone

# init log file names
_RUN_LOG_FILENAME = ""
_SYSTEM_LOG_FILENAME = ""

# Module-level loggers for run events and system messages
run_logger = logging.getLogger('centrimag_run')
system_logger = logging.getLogger('centrimag_system')


def init(run_name: str, log_dir: str = "log/") -> None:
    """Ensure the log directory exists and attach the run and system file handlers."""
    global _RUN_LOG_FILENAME, _SYSTEM_LOG_FILENAME
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
    _RUN_LOG_FILENAME = os.path.join(log_dir, f"{run_name}.jsonl")
    _SYSTEM_LOG_FILENAME = os.path.join(log_dir, f"{run_name}.log")
    close()
    # Run logger (JSON lines)
    run_logger.setLevel(logging.INFO)
    rh = logging.FileHandler(_RUN_LOG_FILENAME, encoding='utf-8')
    rh.setFormatter(logging.Formatter('%(message)s'))
    run_logger.addHandler(rh)
    run_logger.propagate = False
    # System logger (timestamped text); library loggers end up here too
    system_logger.setLevel(logging.INFO)
    sh = logging.FileHandler(_SYSTEM_LOG_FILENAME, encoding='utf-8')
    sh.setFormatter(logging.Formatter('%(asctime)s %(name)s %(levelname)s %(message)s'))
    system_logger.addHandler(sh)
    system_logger.propagate = False
    for name in ("centrimag_spectrum", "centrimag_dynamics", "centrimag_coil", "centrimag_waveform"):
        library = logging.getLogger(name)
        library.setLevel(logging.INFO)
        library.addHandler(sh)


def close() -> None:
    """Detach and close every handler init() attached."""
    handlers = list(run_logger.handlers) + list(system_logger.handlers)
    for handler in list(run_logger.handlers):
        run_logger.removeHandler(handler)
    for handler in list(system_logger.handlers):
        system_logger.removeHandler(handler)
    for name in ("centrimag_spectrum", "centrimag_dynamics", "centrimag_coil", "centrimag_waveform"):
        library = logging.getLogger(name)
        for handler in list(library.handlers):
            if handler in handlers:
                library.removeHandler(handler)
    for handler in handlers:
        handler.close()


def log_paths() -> tuple[str, str]:
    return _RUN_LOG_FILENAME, _SYSTEM_LOG_FILENAME


def system_log(message: str) -> None:
    """Log a system message with timestamp."""
    system_logger.info(str(message))


def run_log_json(data: dict) -> None:
    """Log a run event as JSON with a UTC timestamp."""
    data = dict(data)
    data["timestamp"] = datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")
    run_logger.info(json.dumps(data, default=str))
