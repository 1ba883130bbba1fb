"""Command-line pipeline: synth -> features -> train / gridsearch / baseline -> eval.

Every stage reads and writes files under the output directory, so stages can
be rerun independently. Configuration comes from a JSON manifest; flags
override manifest fields. Exit codes: 0 success, 2 validation error,
3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import TARGETS
from .errors import GazeAffectError, ValidationError

log = logging.getLogger("gazeaffect")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

SECTIONS = ("signal", "events", "roi", "synth", "model", "train", "split", "grid", "svm")


def derive_seed(seed: int, name: str) -> int:
    """Stable 32-bit seed for a named component, independent of every other component."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


@dataclass
class PipelineManifest:
    seed: int = 0
    out: Path = Path("out")
    sessions: Path | None = None
    landmarks: Path | None = None
    ratings: Path | None = None
    feature_set: str = "eye+personality+stimulus"
    target: str = "perceived_valence"
    sections: dict = field(default_factory=dict)

    # default input locations follow the synth stage's layout under ``out``
    @property
    def sessions_dir(self) -> Path:
        return self.sessions or self.out / "sessions"

    @property
    def landmarks_dir(self) -> Path:
        return self.landmarks or self.out / "landmarks"

    @property
    def ratings_path(self) -> Path:
        return self.ratings or self.out / "ratings.csv"

    @property
    def features_path(self) -> Path:
        return self.out / "features.csv"

    def section(self, name) -> dict:
        return dict(self.sections.get(name, {}))

    @classmethod
    def load(cls, path) -> "PipelineManifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw, base=path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base=Path(".")) -> "PipelineManifest":
        known = {"seed", "paths", "feature_set", "target", *SECTIONS}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValidationError(f"manifest: unknown field(s) {unknown}")
        paths = raw.get("paths", {})
        bad = sorted(set(paths) - {"out", "sessions", "landmarks", "ratings"})
        if bad:
            raise ValidationError(f"manifest: unknown path key(s) {bad}")

        def resolve(key):
            return None if paths.get(key) is None else Path(base) / paths[key]

        m = cls(seed=int(raw.get("seed", 0)),
                out=resolve("out") or Path(base) / "out",
                sessions=resolve("sessions"), landmarks=resolve("landmarks"), ratings=resolve("ratings"),
                feature_set=raw.get("feature_set", cls.feature_set),
                target=raw.get("target", cls.target),
                sections={k: dict(raw[k]) for k in SECTIONS if k in raw})
        return m


def _build(cls, values: dict, section: str):
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ValidationError(f"manifest section {section!r}: unknown field(s) {unknown}")
    for k, v in values.items():
        if isinstance(v, list):
            values[k] = tuple(v)
    try:
        return cls(**values)
    except TypeError as exc:
        raise ValidationError(f"manifest section {section!r}: {exc}") from None


# -- config assembly ----------------------------------------------------------------

def signal_config(m):
    from .preprocessing import SignalConfig
    return _build(SignalConfig, m.section("signal"), "signal")


def event_config(m):
    from .events import EventConfig
    return _build(EventConfig, m.section("events"), "events")


def roi_config(m):
    from .pipeline import RoiConfig
    return _build(RoiConfig, m.section("roi"), "roi")


def synth_config(m):
    from .synth import SynthConfig
    values = m.section("synth")
    values.setdefault("seed", m.seed)
    return _build(SynthConfig, values, "synth")


def split_spec(m, target):
    from .dataset import SplitSpec
    values = m.section("split")
    values.setdefault("seed", derive_seed(m.seed, "split"))
    values.setdefault("stratify_on", target)
    return _build(SplitSpec, values, "split")


def model_config(m, feature_set):
    from .net import FEATURE_SETS, ModelConfig
    if feature_set not in FEATURE_SETS:
        raise ValidationError(f"unknown feature set {feature_set!r}; choose from {sorted(FEATURE_SETS)}")
    values = m.section("model")
    values.update(FEATURE_SETS[feature_set])
    return _build(ModelConfig, values, "model")


def train_config(m, target):
    from .net import TrainConfig
    values = m.section("train")
    values.setdefault("seed", derive_seed(m.seed, "train"))
    values["target_label"] = target
    return _build(TrainConfig, values, "train")


# -- stage helpers --------------------------------------------------------------------

def _require(path: Path, what: str):
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")


def _write_json(path: Path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _labelled(records, target):
    out = [r for r in records if target in r.labels]
    if not out:
        raise ValidationError(f"no feature rows carry a {target!r} label")
    return out


def _load_split(m, target, spec=None):
    from .dataset import stratified_split
    from .io import read_features

    _require(m.features_path, "feature file")
    records = _labelled(read_features(m.features_path), target)
    spec = spec or split_spec(m, target)
    return stratified_split(records, spec), spec


def _run_name(target, feature_set):
    return f"{target}__{feature_set}"


def _results_row(label, f1, lr, dropout):
    return {"label": label, "F1_low": f1[0], "F1_medium": f1[1], "F1_high": f1[2],
            "macro_F1": float(np.mean(f1)), "learning_rate": lr, "dropout": dropout}


# -- commands -----------------------------------------------------------------------

def cmd_synth(m: PipelineManifest, args) -> int:
    from .synth import synth_generate, write_dataset

    cfg = synth_config(m)
    ds = synth_generate(cfg)
    written = write_dataset(ds, m.sessions_dir, m.landmarks_dir, m.ratings_path)
    n_trials = sum(len(s.trials) for s in ds.sessions)
    print(f"synth: {cfg.n_participants} participants, {n_trials} trials, {len(written)} files -> {m.out}")
    return EXIT_OK


def cmd_features(m: PipelineManifest, args) -> int:
    from .io import read_landmarks, read_ratings, read_session, session_paths, write_features
    from .pipeline import extract_all

    for p, what in ((m.sessions_dir, "sessions directory"), (m.landmarks_dir, "landmarks directory"),
                    (m.ratings_path, "ratings file")):
        _require(p, what)
    sessions = [read_session(p) for p in session_paths(m.sessions_dir)]
    landmarks = {p.stem: read_landmarks(p) for p in sorted(m.landmarks_dir.glob("*.json"))}
    ratings = read_ratings(m.ratings_path)
    records, drops = extract_all(sessions, landmarks, ratings,
                                 signal_config(m), event_config(m), roi_config(m))
    m.out.mkdir(parents=True, exist_ok=True)
    write_features(m.features_path, records)
    drop_path = m.out / "drop_log.csv"
    with drop_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant_id", "trial_id", "loss_fraction", "reason"])
        for d in drops:
            w.writerow([d["participant_id"], d["trial_id"], f"{d['loss_fraction']:.6f}", d["reason"]])
            print(f"dropped {d['participant_id']}/{d['trial_id']}: {d['reason']} "
                  f"(loss {d['loss_fraction']:.3f})")
    print(f"features: {len(records)} rows, {len(drops)} dropped -> {m.features_path}")
    return EXIT_OK


def cmd_train(m: PipelineManifest, args) -> int:
    from .evaluation import per_class_f1, confusion
    from .io import write_results
    from .net import predict_batch, train

    target, fs = m.target, m.feature_set
    mcfg, tcfg = model_config(m, fs), train_config(m, target)
    (tr, va, te), spec = _load_split(m, target)
    ckpt = train(tr, va, mcfg, tcfg)
    ckpt.meta = {"feature_set": fs, "split": asdict(spec)}
    pred, _ = predict_batch(ckpt, te)
    f1, _ = per_class_f1(confusion([int(r.labels[target]) for r in te], pred))
    name = _run_name(target, fs)
    ckpt_path = m.out / "checkpoints" / f"{name}.json"
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    ckpt_path.write_text(ckpt.to_json() + "\n", encoding="utf-8")
    res_path = m.out / "results" / f"{name}.csv"
    res_path.parent.mkdir(parents=True, exist_ok=True)
    write_results(res_path, [_results_row(name, f1, tcfg.learning_rate, mcfg.dropout_rate)])
    print(f"train: best epoch {ckpt.best_epoch}, test macro F1 {np.mean(f1):.4f} -> {ckpt_path}")
    return EXIT_OK


def cmd_gridsearch(m: PipelineManifest, args) -> int:
    from .net import DEFAULT_DROPOUTS, DEFAULT_LEARNING_RATES, DEFAULT_WEIGHT_DECAYS, grid_search

    target, fs = m.target, m.feature_set
    grid = m.section("grid")
    unknown = sorted(set(grid) - {"learning_rates", "dropouts", "weight_decays"})
    if unknown:
        raise ValidationError(f"manifest section 'grid': unknown field(s) {unknown}")
    lrs = grid.get("learning_rates", DEFAULT_LEARNING_RATES)
    drs = grid.get("dropouts", DEFAULT_DROPOUTS)
    wds = grid.get("weight_decays", DEFAULT_WEIGHT_DECAYS)
    if not (lrs and drs and wds):
        raise ValidationError("hyperparameter grid is empty")
    (tr, va, _), spec = _load_split(m, target)
    best, results, failures = grid_search(tr, va, model_config(m, fs), train_config(m, target), lrs, drs, wds)
    for f in failures:
        print(f"grid cell failed: lr={f['learning_rate']} dropout={f['dropout']} "
              f"weight_decay={f['weight_decay']}: {f['error']}", file=sys.stderr)
    name = _run_name(target, fs)
    path = m.out / "grid" / f"{name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(results, key=lambda r: (-r.macro_f1, r.learning_rate, r.dropout, r.weight_decay))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["learning_rate", "dropout", "weight_decay", "F1_low", "F1_medium", "F1_high",
                    "macro_F1", "best_epoch"])
        for r in ordered:
            w.writerow([repr(float(r.learning_rate)), repr(float(r.dropout)), repr(float(r.weight_decay))]
                       + [f"{v:.6f}" for v in r.per_class_f1] + [f"{r.macro_f1:.6f}", r.checkpoint.best_epoch])
    if best is None:
        print("gridsearch: every cell failed", file=sys.stderr)
        return EXIT_NUMERIC
    best.checkpoint.meta = {"feature_set": fs, "split": asdict(spec)}
    ckpt_path = m.out / "checkpoints" / f"{name}__grid_best.json"
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    ckpt_path.write_text(best.checkpoint.to_json() + "\n", encoding="utf-8")
    print(f"gridsearch: {len(results)} cells, best lr={best.learning_rate} dropout={best.dropout} "
          f"weight_decay={best.weight_decay} val macro F1 {best.macro_f1:.4f} -> {path}")
    return EXIT_OK


def cmd_baseline(m: PipelineManifest, args) -> int:
    from .baseline import svm_predict_batch, svm_train
    from .evaluation import confusion, per_class_f1
    from .io import write_results

    target = m.target
    values = m.section("svm")
    layout = values.pop("layout", "stimulus")
    reg = float(values.pop("reg_strength", 1.0))
    epochs = int(values.pop("epochs", 50))
    if values:
        raise ValidationError(f"manifest section 'svm': unknown field(s) {sorted(values)}")
    (tr, _, te), _ = _load_split(m, target)
    model = svm_train(tr, [r.labels[target] for r in tr], layout=layout, reg_strength=reg,
                      epochs=epochs, seed=derive_seed(m.seed, "svm"))
    pred = svm_predict_batch(model, te)
    f1, _ = per_class_f1(confusion([int(r.labels[target]) for r in te], pred))
    name = f"{target}__svm_{layout}"
    path = m.out / "results" / f"{name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_results(path, [_results_row(name, f1, None, None)])
    print(f"baseline: SVM ({layout}) test macro F1 {np.mean(f1):.4f} -> {path}")
    return EXIT_OK


def cmd_eval(m: PipelineManifest, args) -> int:
    from .dataset import SplitSpec, agreement_by_label
    from .evaluation import build_report, validate_report
    from .io import read_ratings
    from .net import Checkpoint, predict_batch

    ckpt_path = Path(args.checkpoint)
    _require(ckpt_path, "checkpoint")
    try:
        ckpt = Checkpoint.from_json(ckpt_path.read_text(encoding="utf-8"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{ckpt_path}: not a valid checkpoint ({exc})") from None
    target = ckpt.train_config.target_label
    spec = SplitSpec(**ckpt.meta["split"]) if "split" in ckpt.meta else None
    splits, _ = _load_split(m, target, spec)
    records = splits[("train", "val", "test").index(args.split)]
    if not records:
        raise ValidationError(f"split {args.split!r} is empty")
    pred, _ = predict_batch(ckpt, records)
    # agreement needs the raw ratings; a features-only run reports none
    agreement = {}
    if m.ratings_path.exists():
        agreement = agreement_by_label(read_ratings(m.ratings_path))
    else:
        log.warning("no ratings file at %s, agreement left empty", m.ratings_path)
    report = build_report(
        target=target, split=args.split,
        true_labels=[int(r.labels[target]) for r in records], predicted=pred.tolist(),
        agreement=agreement,
        checkpoint_sha256=ckpt.sha256(),
        model_config=asdict(ckpt.model_config), train_config=asdict(ckpt.train_config),
        feature_set=ckpt.meta.get("feature_set", "unknown"),
    )
    validate_report(report)
    path = m.out / "reports" / f"{ckpt_path.stem}__{args.split}.json"
    _write_json(path, report)
    print(f"eval: {args.split} macro F1 {report['macro_f1']:.4f} on {len(records)} trials -> {path}")
    return EXIT_OK


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic dataset (gaze CSV, session JSON, landmarks, ratings)"),
    "features": (cmd_features, "extract per-trial feature rows into features.csv"),
    "train": (cmd_train, "train one fusion model and write its checkpoint and results row"),
    "gridsearch": (cmd_gridsearch, "grid over learning rate, dropout and weight decay"),
    "baseline": (cmd_baseline, "train the linear SVM baseline on static features"),
    "eval": (cmd_eval, "evaluate a checkpoint on a split and write a JSON report"),
}


def _parse_override(text):
    key, sep, value = text.partition("=")
    if not sep or "." not in key:
        raise ValidationError(f"--set expects section.field=value, got {text!r}")
    section, name = key.split(".", 1)
    if section not in SECTIONS:
        raise ValidationError(f"--set: unknown section {section!r}; choose from {list(SECTIONS)}")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return section, name, parsed


def build_parser() -> argparse.ArgumentParser:
    from .net import FEATURE_SETS

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", type=Path, help="JSON manifest; relative paths resolve against its directory")
    common.add_argument("--seed", type=int, help="global seed; every component derives a named substream from it")
    common.add_argument("--out", type=Path, help="output directory (default: manifest paths.out, else ./out)")
    common.add_argument("--feature-set", choices=sorted(FEATURE_SETS),
                        help="model input groups (default eye+personality+stimulus)")
    common.add_argument("--target", choices=TARGETS, help="rating to classify (default perceived_valence)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                        help="override one manifest field, value parsed as JSON when possible (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="gazeaffect", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "eval":
            p.add_argument("--checkpoint", required=True, type=Path)
            p.add_argument("--split", choices=("train", "val", "test"), default="test")
    return parser


def resolve_manifest(args) -> PipelineManifest:
    m = PipelineManifest.load(args.manifest) if args.manifest else PipelineManifest()
    if args.seed is not None:
        m.seed = args.seed
    if args.out is not None:
        m.out = args.out
    if args.feature_set is not None:
        m.feature_set = args.feature_set
    if args.target is not None:
        m.target = args.target
    for text in args.overrides:
        section, name, value = _parse_override(text)
        m.sections.setdefault(section, {})[name] = value
    return m


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        return handler(resolve_manifest(args), args)
    except GazeAffectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
