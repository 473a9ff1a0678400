"""Command-line entry point.

Usage::

    everlast SUBCOMMAND [--config PATH] [--seed N] [--trials N] [--output DIR]
                        [--mode {paper-exact,scaled}] [--adversary NAME] [--rounds N]

Subcommands: ``predict``, ``privacy-game``, ``bt-suite``, ``labelboost-suite``,
``reduction-suite``, ``preflight``.  Each writes ``results.csv`` and
``summary.json`` into the output directory.  Exit status is 0 on success, 1
when a predictor failed (gap budget exhausted) and 2 on configuration errors.
"""

import argparse
import copy
import csv
import json
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import child_stream
from .between_thresholds import bt_min_n
from .concepts import Distribution
from .generic_bbl import GenericBBL, PredictorConfig, preflight_validate, required_sample_size
from .harness import (
    ADVERSARIES,
    EchoPredictor,
    binomial_slack,
    boost_majority_suite,
    bt_accuracy_suite,
    bt_halt_suite,
    labelboost_suite,
    learner_failure_suite,
    map_trials,
    transcript_smoke_test,
    trial_seed,
)
from .reduction import learner_rounds

SUBCOMMANDS = ("predict", "privacy-game", "bt-suite", "labelboost-suite", "reduction-suite", "preflight")

# csv schemas; bump the version whenever the columns change
SCHEMAS = {
    "predict": (1, ["trial", "ordinal", "phase", "point", "answer", "label"]),
    "privacy-game": (1, ["trial", "b", "outcome"]),
    "bt-suite": (1, ["suite", "trial", "stream", "answered", "n_top", "violated", "halted", "exact"]),
    "labelboost-suite": (1, ["trial", "target", "chosen", "error_s", "exceeds_alpha", "realizable", "n_hypotheses"]),
    "reduction-suite": (1, ["suite", "trial", "failed", "exact", "extracted_good", "premise", "boosted_error", "holds"]),
    "preflight": (1, ["phase", "check", "lhs", "relation", "rhs", "ok"]),
}


class ConfigError(ValueError):
    """Malformed or incomplete configuration."""


def default_config():
    """The scaled default configuration shipped with the package."""
    text = resources.files("everlast").joinpath("configs/default.json").read_text()
    return json.loads(text)


def _load_config(path):
    if path is None:
        return default_config()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"field 'config': file {path} does not exist")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"field 'config': invalid JSON ({exc})") from None


def _section(cfg, name):
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"field '{name}' must be an object")
    return sec


def _get(sec, key, where, kind=None):
    if key not in sec:
        raise ConfigError(f"field '{where}.{key}' is required")
    v = sec[key]
    if kind is not None and not isinstance(v, kind) or isinstance(v, bool) and kind is not bool:
        raise ConfigError(f"field '{where}.{key}' has the wrong type")
    return v


def _predictor_config(cfg, mode=None):
    sec = copy.deepcopy(_section(cfg, "predictor"))
    if mode is not None:
        sec["mode"] = mode
    try:
        return PredictorConfig.from_dict(sec)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"field 'predictor': {exc}") from None


def _resolve(args):
    cfg = _load_config(args.config)
    if not isinstance(cfg, dict):
        raise ConfigError("field 'config': top level must be an object")
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.mode is not None:
        cfg.setdefault("predictor", {})["mode"] = args.mode
    sec_name = args.command.replace("-", "_")
    sec = cfg.setdefault(sec_name, {})
    if args.trials is not None:
        sec["trials"] = args.trials
    if args.adversary is not None:
        sec["adversary"] = args.adversary
    if args.rounds is not None:
        sec["rounds"] = args.rounds
    if args.command != "preflight":
        seed = cfg.get("seed")
        if seed is None:
            raise ConfigError("field 'seed' is required (pass --seed or set it in the config)")
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise ConfigError("field 'seed' must be an unsigned 64-bit integer")
    return cfg


def _trials(sec, where):
    n = sec.get("trials", 1)
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ConfigError(f"field '{where}.trials' must be a positive integer")
    return n


def _fmt(v):
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(outdir, command, rows, summary, resolved):
    outdir.mkdir(parents=True, exist_ok=True)
    version, cols = SCHEMAS[command]
    with open(outdir / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])
    doc = {
        "experiment": command,
        "package_version": __version__,
        "csv_schema": {"name": command, "version": version, "columns": cols},
        "config": resolved,
        "summary": summary,
    }
    (outdir / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


# -- experiments -----------------------------------------------------------------


def _predict_trial(args):
    pcfg, dist, target, stream_length, horizon, seed, k = args
    data_rng = child_stream(seed, k, 0)
    query_rng = child_stream(seed, k, 1)
    n = required_sample_size(pcfg)
    X = dist.sample(n, data_rng)
    model = GenericBBL.from_config(pcfg, random_state=trial_seed(seed, k, 2))
    model.fit(X, target.predict(X))
    rows = []
    answered = 0
    while answered < stream_length and not model.failed_ and len(model.phases_) - 1 < horizon:
        room = model.scalars_.R_i - model._n_queries
        xs = dist.sample(min(room, stream_length - answered, 1 << 16), query_rng)
        res = model.predict_stream(xs)
        for rec in res.records(answered):
            rows.append(
                {"trial": k, "ordinal": rec.ordinal, "phase": rec.phase, "point": rec.point, "answer": rec.answer.value, "label": rec.label}
            )
        answered += len(res)
    snap = model.snapshot()
    return rows, {
        "trial": k,
        "answered": answered,
        "failed": bool(model.failed_),
        "phases": snap["phases"],
        "expected_error": model.expected_error(target, dist),
    }


def run_predict(cfg, outdir):
    pcfg = _predictor_config(cfg)
    sec = _section(cfg, "predict")
    N = pcfg.concept_class.domain_size
    try:
        dist = Distribution.from_spec(sec.get("distribution", "uniform"), N)
        target = pcfg.concept_class.member(int(_get(sec, "target_index", "predict", int)))
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"field 'predict': {exc}") from None
    stream_length = _get(sec, "stream_length", "predict", int)
    horizon = sec.get("phases", 5)
    trials = _trials(sec, "predict")
    out = map_trials(_predict_trial, [(pcfg, dist, target, stream_length, horizon, cfg["seed"], k) for k in range(trials)])
    rows = [r for rs, _ in out for r in rs]
    reports = [rep for _, rep in out]
    summary = {
        "target": target.identifier,
        "required_sample_size": required_sample_size(pcfg),
        "trials": reports,
        "failures": sum(r["failed"] for r in reports),
    }
    _write(outdir, "predict", rows, summary, cfg)
    return 1 if summary["failures"] else 0


def _game_factory(kind, pcfg, flip):
    if kind == "echo":
        return _EchoFactory(flip)
    if kind == "generic-bbl":
        return _BBLFactory(pcfg)
    raise ConfigError(f"field 'privacy_game.predictor' must be 'generic-bbl' or 'echo', got {kind!r}")


class _EchoFactory:
    def __init__(self, flip):
        self.flip = flip

    def __call__(self, seed):
        return EchoPredictor(self.flip, random_state=seed)


class _BBLFactory:
    def __init__(self, pcfg):
        self.pcfg = pcfg

    def __call__(self, seed):
        return GenericBBL.from_config(self.pcfg, random_state=seed)


def run_privacy_game_cmd(cfg, outdir):
    pcfg = _predictor_config(cfg)
    sec = _section(cfg, "privacy_game")
    name = sec.get("adversary", "one-diff-training")
    if name not in ADVERSARIES:
        raise ConfigError(f"field 'privacy_game.adversary' must be one of {sorted(ADVERSARIES)}")
    rounds = sec.get("rounds", 20)
    if not isinstance(rounds, int) or rounds < 1:
        raise ConfigError("field 'privacy_game.rounds' must be a positive integer")
    trials = _trials(sec, "privacy_game")
    kind = sec.get("predictor", "generic-bbl")
    factory = _game_factory(kind, pcfg, sec.get("flip", 0.0))
    n = sec.get("n") or required_sample_size(pcfg)
    adversary = ADVERSARIES[name](pcfg.concept_class.domain_size, n)
    eps = sec.get("epsilon", pcfg.epsilon)
    dlt = sec.get("delta", pcfg.delta)
    rep = transcript_smoke_test(adversary, rounds, factory, trials, eps, dlt, cfg["seed"])
    rows = []
    for k, (o0, o1) in enumerate(rep["per_trial"]):
        rows.append({"trial": k, "b": 0, "outcome": o0})
        rows.append({"trial": k, "b": 1, "outcome": o1})
    drop = ("distribution_b0", "distribution_b1", "outcomes", "per_trial")
    rep = {k: v for k, v in rep.items() if k not in drop} | {"predictor": kind}
    _write(outdir, "privacy-game", rows, rep, cfg)
    return 0


def run_bt_suite(cfg, outdir):
    sec = _section(cfg, "bt_suite")
    alpha = sec.get("alpha", 0.1)
    beta = sec.get("beta", 0.05)
    eps = sec.get("epsilon", 1.0)
    k = sec.get("k", 100)
    trials = _trials(sec, "bt_suite")
    try:
        n = sec.get("n") or bt_min_n(alpha, beta, eps, k)
        acc = bt_accuracy_suite(alpha, beta, eps, k, n, trials, cfg["seed"])
        halt = bt_halt_suite(sec.get("c", 4), sec.get("halt_trials", trials), cfg["seed"])
    except ValueError as exc:
        raise ConfigError(f"field 'bt_suite': {exc}") from None
    rows = [{"suite": "accuracy", "stream": "adaptive", **r} for r in acc]
    rows += [{"suite": "halt", **r} for r in halt]
    freq = sum(r["violated"] for r in acc) / trials
    summary = {
        "n": n,
        "accuracy_violation_frequency": freq,
        "accuracy_bound": beta + binomial_slack(beta, trials),
        "accuracy_ok": freq <= beta + binomial_slack(beta, trials),
        "halt_exact": all(r["exact"] for r in halt),
    }
    _write(outdir, "bt-suite", rows, summary, cfg)
    return 0


def run_labelboost_suite(cfg, outdir):
    sec = _section(cfg, "labelboost_suite")
    alpha = sec.get("alpha", 0.1)
    beta = sec.get("beta", 0.05)
    trials = _trials(sec, "labelboost_suite")
    try:
        rows = labelboost_suite(
            sec.get("domain_size", 32), sec.get("size_s", 200), sec.get("size_t", 64), alpha, beta, trials, cfg["seed"]
        )
    except ValueError as exc:
        raise ConfigError(f"field 'labelboost_suite': {exc}") from None
    freq = sum(r["exceeds_alpha"] for r in rows) / trials
    summary = {
        "exceed_frequency": freq,
        "bound": beta + binomial_slack(beta, trials),
        "utility_ok": freq <= beta + binomial_slack(beta, trials),
        "all_realizable": all(r["realizable"] for r in rows),
    }
    _write(outdir, "labelboost-suite", rows, summary, cfg)
    return 0


def run_reduction_suite(cfg, outdir):
    sec = _section(cfg, "reduction_suite")
    N = sec.get("domain_size", 8)
    beta = sec.get("beta", 1 / 8)
    trials = _trials(sec, "reduction_suite")
    try:
        learn = learner_failure_suite(N, beta, trials, cfg["seed"])
        boost = boost_majority_suite(
            N, sec.get("alpha", 1 / 64), sec.get("boost_beta", 0.05), sec.get("boost_trials", 50), cfg["seed"]
        )
    except ValueError as exc:
        raise ConfigError(f"field 'reduction_suite': {exc}") from None
    rows = [{"suite": "learner", **r} for r in learn]
    rows += [{"suite": "boost", **r} for r in boost]
    freq = sum(r["failed"] for r in learn) / trials
    summary = {
        "learner_rounds": learner_rounds(N, beta),
        "learner_failure_frequency": freq,
        "learner_bound": beta + binomial_slack(beta, trials),
        "learner_ok": freq <= beta + binomial_slack(beta, trials),
        "boost_always_good": all(r["holds"] for r in boost),
    }
    _write(outdir, "reduction-suite", rows, summary, cfg)
    return 0


def run_preflight(cfg, outdir):
    pcfg = _predictor_config(cfg)
    horizon = _section(cfg, "preflight").get("phases", 5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = preflight_validate(pcfg, horizon)
    rows = []
    for c in rep.checks:
        rows.append({"phase": c.phase, "check": c.name, "lhs": c.lhs, "relation": c.relation, "rhs": c.rhs, "ok": c.ok})
        print(f"phase {c.phase} {c.name:17s} {'ok  ' if c.ok else 'FAIL'} {c.lhs} {c.relation} {c.rhs}")
    _write(outdir, "preflight", rows, {"mode": rep.mode, "passed": rep.passed}, cfg)
    return 0


RUNNERS = {
    "predict": run_predict,
    "privacy-game": run_privacy_game_cmd,
    "bt-suite": run_bt_suite,
    "labelboost-suite": run_labelboost_suite,
    "reduction-suite": run_reduction_suite,
    "preflight": run_preflight,
}


def build_parser():
    p = argparse.ArgumentParser(prog="everlast", description="Private everlasting prediction experiments.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON configuration file (default: the bundled scaled config)")
    p.add_argument("--seed", type=int, help="top-level seed (required unless set in the config)")
    p.add_argument("--trials", type=int)
    p.add_argument("--output", default="everlast-out", help="output directory")
    p.add_argument("--mode", choices=("paper-exact", "scaled"))
    p.add_argument("--adversary", choices=sorted(ADVERSARIES))
    p.add_argument("--rounds", type=int)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _resolve(args)
        return RUNNERS[args.command](cfg, Path(args.output))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
