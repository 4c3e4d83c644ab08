import functools
import logging
import time


def log_execution_time(logger=None):
    """Decorator to log the execution time of a function"""

    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            start_time = time.time()
            result = func(*args, **kwargs)
            elapsed_time = time.time() - start_time
            msg = f"{func.__name__} took {elapsed_time:.2f} seconds to execute."
            if logger is None:
                print(msg)
            else:
                logger.info(msg)
            return result

        return wrapper

    return decorator


class Timer:
    """Seconds since construction or the last reset"""

    def __init__(self):
        self._start = time.time()

    def __call__(self, reset=True):
        now = time.time()
        diff = now - self._start
        if reset:
            self._start = now
        return diff


def log_summary(log: logging.Logger, title: str, rows: dict):
    """Log a block of key/value lines framed by a ======= title ======= banner"""
    log.info(f"============ {title} ============")
    width = max((len(k) for k in rows), default=0)
    for key, value in rows.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        log.info(f"{key:<{width}} : {value}")
    log.info("=" * (len(title) + 26))
