import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel
from scipy import stats

from utils.errors import PreconditionError

logger = logging.getLogger(__name__)


class Metrics(BaseModel):
    rmse: float
    mae: float
    pearson: Optional[float] = None
    spearman: Optional[float] = None
    count: int = 0


def compute_metrics(predictions, labels) -> Metrics:
    """RMSE, MAE, Pearson and Spearman (average ranks for ties).

    Correlations are None when either side has zero variance.
    """
    pred = np.ravel(np.asarray(predictions, dtype=np.float64))
    true = np.ravel(np.asarray(labels, dtype=np.float64))
    if pred.shape != true.shape:
        raise PreconditionError(f"{pred.size} predictions for {true.size} labels")
    if pred.size == 0:
        raise PreconditionError("Metrics need at least one prediction")
    error = pred - true
    rmse = float(np.sqrt(np.mean(error**2)))
    mae = float(np.mean(np.abs(error)))

    pearson = spearman = None
    if pred.size >= 2 and np.ptp(pred) > 0 and np.ptp(true) > 0:
        pearson = float(stats.pearsonr(pred, true)[0])
        spearman = float(stats.spearmanr(pred, true)[0])
    else:
        logger.warning("Correlation metrics undefined for zero-variance predictions or labels")
    return Metrics(rmse=rmse, mae=mae, pearson=pearson, spearman=spearman, count=int(pred.size))
