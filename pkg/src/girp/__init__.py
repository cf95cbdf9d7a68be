"""Generalized isotonic regression by recursive partitioning.

Fits monotone models under the coordinate-wise partial order for any
separable convex differentiable loss, producing the whole path of
isotonic models from the constant fit to the global optimum.
"""

from girp.dataset import DataError, Dataset, PartialOrder, build_order, from_arrays, ingest, read_csv
from girp.engine import CertificateReport, Path, PathRecord, certify, check_path, fit
from girp.losses import (BernoulliNLL, GroupWeight, Huber, LogPoissonNLL, Loss, LossError,
                         PNorm, PoissonNLL, SquaredError, parse_loss)
from girp.model import (IsotonicModel, evaluate, read_model, select_stopping,
                        validation_curve, write_model)

__version__ = "0.1.0"

__all__ = [
    "BernoulliNLL", "CertificateReport", "DataError", "Dataset", "GroupWeight", "Huber",
    "IsotonicModel", "LogPoissonNLL", "Loss", "LossError", "PNorm", "PartialOrder", "Path",
    "PathRecord", "PoissonNLL", "SquaredError", "build_order", "certify", "check_path",
    "evaluate", "fit", "from_arrays", "ingest", "parse_loss", "read_csv", "read_model",
    "select_stopping", "validation_curve", "write_model",
]
