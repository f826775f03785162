"""Python front end to the cirgps C++ core.

Every pipeline call takes an optional config file and a list of
``section.key=value`` overrides, writes its output directory and returns the
decoded report.
"""

import json
import os

from . import _cirgps
from ._cirgps import Config, ConfigError, DataError, DivergenceError, dspd, roc_auc

__all__ = [
    "Config", "ConfigError", "DataError", "DivergenceError",
    "make_config", "convert", "sample", "pretrain", "finetune", "evaluate", "predict", "synth",
    "synth_text", "classification_metrics", "regression_metrics", "roc_auc", "dspd",
]


def make_config(config=None, overrides=()):
    cfg = Config()
    if config is not None:
        cfg.load_file(os.fspath(config))
    for item in overrides:
        cfg.apply_override(item)
    return cfg


def _cfg(config, overrides):
    return config if isinstance(config, Config) else make_config(config, overrides)


def convert(netlist, labels, out, config=None, overrides=()):
    return json.loads(_cirgps.convert(_cfg(config, overrides), netlist, labels, out))


def sample(graph_dir, out, config=None, overrides=()):
    return json.loads(_cirgps.sample(_cfg(config, overrides), graph_dir, out))


def pretrain(dataset, out, config=None, overrides=()):
    return json.loads(_cirgps.pretrain(_cfg(config, overrides), dataset, out))


def finetune(dataset, out, config=None, overrides=()):
    return json.loads(_cirgps.finetune(_cfg(config, overrides), dataset, out))


def evaluate(checkpoint, dataset, out, split="test", config=None, overrides=()):
    return json.loads(_cirgps.evaluate(_cfg(config, overrides), checkpoint, dataset, split, out))


def predict(checkpoint, dataset, out, split="test", config=None, overrides=()):
    report = json.loads(_cirgps.predict(_cfg(config, overrides), checkpoint, dataset, split, out))
    with open(os.path.join(out, "predictions.jsonl")) as fh:
        report["predictions"] = [json.loads(line) for line in fh]
    return report


def synth(out, config=None, overrides=()):
    return json.loads(_cirgps.synth(_cfg(config, overrides), out))


def synth_text(config=None, overrides=()):
    return _cirgps.synth_text(_cfg(config, overrides))


def classification_metrics(scores, labels, threshold=0.5):
    return json.loads(_cirgps.classification_metrics(list(scores), list(labels), threshold))


def regression_metrics(predictions, targets):
    return json.loads(_cirgps.regression_metrics(list(predictions), list(targets)))
