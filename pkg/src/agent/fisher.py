"""
Fisher information table: I_1, I_2, their sum and the asymptotic rate I(theta).

"""

import logging

from src.agent.base import BaseAgent
from src.inference.design import fisher_information
from src.utils.io import write_table
from src.utils.monitor import log_summary

log = logging.getLogger(__name__)

FISHER_COLUMNS = ("theta", "T", "H", "input", "i1", "i2", "total", "rate", "asymptotic")


class FisherAgent(BaseAgent):
    command = "fisher"

    def run(self):
        kernel = self.kernel
        signal = self.signal()
        report = fisher_information(signal, self.theta, kernel)
        manifest = self.save_manifest(kernel.cache_key())
        row = (
            self.theta,
            kernel.horizon,
            self.hurst.value,
            signal.kind,
            report.i1,
            report.i2,
            report.total,
            report.rate,
            report.asymptotic,
        )
        write_table(self.log_dir, "fisher", FISHER_COLUMNS, [row], fmt=self.fmt, manifest=manifest)
        log_summary(
            log,
            "Fisher Summary",
            {
                "I_1 / T": report.i1 / report.horizon,
                "I_2 / T": report.i2 / report.horizon,
                "(I_1 + I_2) / T": report.rate,
                "I(theta)": report.asymptotic,
            },
        )
        return report
