"""scikit-learn compatible wrappers around the latency model and ProbSelect.

Devices are rows of a feature matrix with the columns in ``DEVICE_FEATURES``
(use :func:`profiles_to_array` to build one), so both estimators drop into
pipelines, grid searches and ``pandas`` workflows.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import ndtr
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .fleet import default_slo, get_workload
from .model import DeviceProfile, InfeasibleMeasurementError, Workload, peak_flops

DEVICE_FEATURES = ("peak_flops", "pcie_bandwidth", "dataset_size", "upload_bps", "download_bps")
PEAK, PCIE, DATASET, UP, DOWN = range(len(DEVICE_FEATURES))


def profiles_to_array(profiles: Sequence[DeviceProfile]) -> np.ndarray:
    rows = []
    for p in profiles:
        if not p.has_bandwidths:
            raise ValueError(f"{p.device_id}: bandwidths have not been assigned")
        rows.append((peak_flops(p.gpu), p.gpu.pcie_bandwidth, p.dataset_size,
                     p.upload_bandwidth, p.download_bandwidth))
    return np.array(rows, dtype=float).reshape(-1, len(DEVICE_FEATURES))


def _resolve_workload(workload, epoch_factor: float) -> Workload:
    if workload is None:
        raise ValueError("workload must be set")
    if isinstance(workload, str):
        workload = get_workload(workload)
    return Workload(workload.name, workload.model_size, workload.flops_per_sample,
                    workload.sample_size, workload.dataset_size, epoch_factor)


def _validate(X) -> np.ndarray:
    X = check_array(X, dtype=float)
    if X.shape[1] != len(DEVICE_FEATURES):
        raise ValueError(f"expected {len(DEVICE_FEATURES)} columns {DEVICE_FEATURES}, got {X.shape[1]}")
    if np.any(X[:, [PEAK, PCIE, UP, DOWN]] <= 0) or np.any(X[:, DATASET] < 0):
        raise ValueError("peak_flops, pcie_bandwidth and bandwidths must be > 0; dataset_size >= 0")
    return X


def _overhead(X, w: Workload):
    return w.model_size / X[:, PCIE] + w.epoch_factor * X[:, DATASET] * w.sample_size / X[:, PCIE]


def _work(X, w: Workload):
    return w.epoch_factor * X[:, DATASET] * w.flops_per_sample


def _network(X, w: Workload):
    return w.model_size * 8.0 / X[:, DOWN] + w.model_size * 8.0 / X[:, UP]


class LatencyRegressor(RegressorMixin, BaseEstimator):
    """Fit an efficiency factor from measured compute times, then predict latency.

    ``fit`` inverts the latency model row by row and pools the extracted
    efficiencies with ``aggregate`` ("mean" or "median").  ``predict``
    returns compute-phase seconds so that ``score`` compares like with like;
    :meth:`predict_breakdown` adds the network phases.
    """

    def __init__(self, workload=None, epoch_factor=1.0, aggregate="mean"):
        self.workload = workload
        self.epoch_factor = epoch_factor
        self.aggregate = aggregate

    def fit(self, X, y):
        X = _validate(X)
        y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), dtype=float).ravel()
        if len(y) != len(X):
            raise ValueError("X and y have different lengths")
        if self.aggregate not in ("mean", "median"):
            raise ValueError(f"aggregate must be 'mean' or 'median', got {self.aggregate!r}")
        w = _resolve_workload(self.workload, self.epoch_factor)
        net = y - _overhead(X, w)
        bad = np.flatnonzero(net <= 0)
        if bad.size:
            raise InfeasibleMeasurementError(f"rows {bad.tolist()} do not exceed data-movement overhead")
        self.workload_ = w
        self.efficiencies_ = _work(X, w) / (X[:, PEAK] * net)
        self.efficiency_ = float(getattr(np, self.aggregate)(self.efficiencies_))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "efficiency_")
        X = _validate(X)
        w = self.workload_
        return _overhead(X, w) + _work(X, w) / (X[:, PEAK] * self.efficiency_)

    def predict_breakdown(self, X):
        """Columns: download, compute, upload seconds."""
        compute = self.predict(X)
        X = _validate(X)
        ms = self.workload_.model_size * 8.0
        return np.column_stack([ms / X[:, DOWN], compute, ms / X[:, UP]])


class ProbSelectClassifier(ClassifierMixin, BaseEstimator):
    """Select devices whose chance of meeting the deadline reaches the SLO threshold.

    Nothing is learned; ``fit`` validates parameters and resolves the SLO,
    taking the workload's default deadline and threshold when left as None.
    """

    def __init__(self, workload=None, deadline=None, probability_threshold=None, mean=0.5,
                 std_dev=0.25, epoch_factor=1.0):
        self.workload = workload
        self.deadline = deadline
        self.probability_threshold = probability_threshold
        self.mean = mean
        self.std_dev = std_dev
        self.epoch_factor = epoch_factor

    def fit(self, X, y=None):
        X = _validate(X)
        w = _resolve_workload(self.workload, self.epoch_factor)
        deadline, threshold = self.deadline, self.probability_threshold
        if deadline is None or threshold is None:
            base = default_slo(w.name)
            deadline = base.deadline if deadline is None else deadline
            threshold = base.probability_threshold if threshold is None else threshold
        if not deadline > 0 or not 0 <= threshold <= 1:
            raise ValueError("need deadline > 0 and probability_threshold in [0, 1]")
        if not 0 < self.mean <= 1 or not self.std_dev > 0:
            raise ValueError("need 0 < mean <= 1 and std_dev > 0")
        self.workload_ = w
        self.deadline_ = float(deadline)
        self.threshold_ = float(threshold)
        self.classes_ = np.array([False, True])
        self.n_features_in_ = X.shape[1]
        return self

    def efficiency_threshold(self, X):
        check_is_fitted(self, "classes_")
        X = _validate(X)
        w = self.workload_
        net = self.deadline_ - _network(X, w) - _overhead(X, w)
        with np.errstate(divide="ignore", invalid="ignore"):
            eta = _work(X, w) / (X[:, PEAK] * net)
        return np.where(net > 0, eta, np.inf)

    def _tail(self, eta):
        return np.where(np.isinf(eta), 0.0, ndtr((self.mean - eta) / self.std_dev))

    def compliance_probability(self, X):
        return self._tail(self.efficiency_threshold(X))

    def predict_proba(self, X):
        p = self.compliance_probability(X)
        return np.column_stack([1.0 - p, p])

    def decision_function(self, X):
        return self.compliance_probability(X) - self.threshold_

    def predict(self, X):
        eta = self.efficiency_threshold(X)
        return np.isfinite(eta) & (self._tail(eta) >= self.threshold_)
