"""Metrics, reports and the experiment matrix.

Experiments live in ``crossl.eval.experiments`` and drift in
``crossl.eval.drift``; both depend on ``crossl.train``, which itself imports
the metrics from here.
"""

from crossl.eval.metrics import confusion_matrix, macro_f1
from crossl.eval.report import AggregateRow, EvalReport, ReportRow, emit_report, load_report, report_csv
