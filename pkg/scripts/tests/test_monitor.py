import logging

from src.utils import monitor
from src.utils.monitor import Timer, log_summary


def test_timer_resets(monkeypatch):
    clock = iter([10.0, 12.5, 13.0, 20.0])
    monkeypatch.setattr(monitor.time, "time", lambda: next(clock))
    timer = Timer()
    assert timer() == 2.5
    assert timer(reset=False) == 0.5
    assert timer() == 7.5


def test_log_summary_banner(caplog):
    log = logging.getLogger("mfou.test")
    with caplog.at_level(logging.INFO, logger="mfou.test"):
        log_summary(log, "Study", {"variance": 2.0 / 3.0, "reps": 400})
    lines = [r.getMessage() for r in caplog.records]
    assert lines[0] == "============ Study ============"
    assert lines[1].startswith("variance") and lines[1].endswith("0.666667")
    assert lines[2] == "reps     : 400"
