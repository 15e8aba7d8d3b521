"""Bayesian latent-variable models for peer grading.

Thin wrapper over the C++ core: configs are plain dicts, draws are numpy arrays.
"""

import json

import numpy as np

from . import _core
from ._core import Dataset, Fit, PeerGradeError, __version__

__all__ = [
    "Dataset",
    "Fit",
    "PeerGradeError",
    "compare",
    "dataset",
    "ess_bulk",
    "fit",
    "read_dataset",
    "recovery",
    "loo",
    "simulate",
    "split_rhat",
    "summary",
    "waic",
]


def error_code(exc):
    """Machine-readable code of a PeerGradeError, e.g. "DATA_SCHEMA"."""
    return str(exc).split(":", 1)[0]


def dataset(records, scale=None, students=()):
    """Build a dataset from (examinee, grader, assessment, grade) tuples."""
    scale = scale or {"scale": {"type": "continuous"}}
    return _core.dataset_from_records(list(records), json.dumps(scale), list(students))


def read_dataset(path, meta_path=""):
    return _core.read_dataset(str(path), str(meta_path))


def simulate(config):
    """Generate a dataset; returns (Dataset, truth CSV text)."""
    return _core.simulate(json.dumps(config))


def _model(model):
    return {"model": model} if isinstance(model, str) else model


def fit(data, model, sampler=None):
    """Fit `model` (variant name or model dict) with NUTS."""
    return _core.fit(data, json.dumps(_model(model)), json.dumps(sampler or {}))


def summary(result):
    """Structural posterior summaries as a list of dicts."""
    return json.loads(result.summary_json())


def diagnostics(result):
    return json.loads(result.diagnostics_json())


def loo(pointwise_loglik):
    """PSIS-LOO of an S x n pointwise log-likelihood matrix."""
    return json.loads(_core.psis_loo(np.asarray(pointwise_loglik, dtype=float)))


def waic(pointwise_loglik):
    return json.loads(_core.waic(np.asarray(pointwise_loglik, dtype=float)))


def compare(models):
    """Rank {name: pointwise log-likelihood} by elpd_loo, best first."""
    items = [(name, np.asarray(pll, dtype=float)) for name, pll in models.items()]
    return json.loads(_core.compare(items))


def split_rhat(draws):
    return _core.split_rhat(np.asarray(draws, dtype=float))


def ess_bulk(draws):
    return _core.ess_bulk(np.asarray(draws, dtype=float))


def recovery(experiment):
    """Run a recovery experiment; one report dict per scenario and replication."""
    return [json.loads(r) for r in _core.recovery(json.dumps(experiment))]


def score(fit_dir):
    """scores.csv text for a fit output directory."""
    return _core.score_fit_dir(str(fit_dir))
