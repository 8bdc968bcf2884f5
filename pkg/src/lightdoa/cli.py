"""Command-line entry point: ``lightdoa {generate,train,eval,infer,classical}``.

Every subcommand prints one JSON document on stdout. Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .angles import SUPPORTED_CLASS_COUNTS, AngleGrid
from .classic import estimate_azimuth
from .data import GenConfig, class_histogram, generate_dataset, load_arrays, load_split, read_wav
from .dsp import ipd_features
from .errors import LightDoaError
from .model import build_lightdoa, load_model, param_count, save_model
from .nn import TrainConfig, train

log = logging.getLogger("lightdoa")


@dataclass
class EvalReport:
    resolution: int
    top1_accuracy: float
    mean_abs_angular_error: float
    per_class_accuracy: list
    confusion: list
    num_samples: int


def evaluate(model, features: np.ndarray, labels: np.ndarray, angles: np.ndarray, batch_size: int = 256) -> EvalReport:
    """Top-1 class accuracy and mean |expected angle - folded label| in degrees."""
    K = model.num_classes
    probs = np.concatenate([model.predict_proba(features[i : i + batch_size]) for i in range(0, len(features), batch_size)])
    predicted = probs.argmax(axis=1)
    expected = probs @ model.grid.centers()
    confusion = np.zeros((K, K), dtype=np.int64)
    np.add.at(confusion, (labels, predicted), 1)
    support = confusion.sum(axis=1)
    per_class = [float(confusion[k, k] / support[k]) if support[k] else None for k in range(K)]
    return EvalReport(
        resolution=K,
        top1_accuracy=float(np.mean(predicted == labels)),
        mean_abs_angular_error=float(np.mean(np.abs(expected - angles))),
        per_class_accuracy=per_class,
        confusion=confusion.tolist(),
        num_samples=int(len(labels)),
    )


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_generate(args) -> int:
    cfg = GenConfig(counts={"train": args.train, "val": args.val, "test": args.test}, duration=args.duration)
    if args.mixture:
        try:
            mixture = json.loads(args.mixture)
        except json.JSONDecodeError as exc:
            raise LightDoaError(f"--mixture is not valid JSON: {exc}") from exc
        cfg = cfg.with_mixture(mixture)
    manifests = generate_dataset(cfg, args.seed, args.out)
    grid = AngleGrid(37)
    summary = {}
    for split, path in manifests.items():
        summary[split] = class_histogram(load_split(path), grid).to_dict()
    _emit({"manifests": {k: str(v) for k, v in manifests.items()}, "histogram_k37": summary})
    return 0


def _load(data_dir, split, grid):
    return load_arrays(load_split(Path(data_dir) / f"{split}.jsonl"), grid)


def cmd_train(args) -> int:
    grid = AngleGrid(args.k)
    x_train, y_train, _ = _load(args.data, "train", grid)
    x_val, y_val, _ = _load(args.data, "val", grid)
    config = TrainConfig(
        learning_rate=args.lr, batch_size=args.batch, max_epochs=args.epochs, patience=args.patience, seed=args.seed
    )
    model = build_lightdoa(args.k, seed=args.seed)
    model, history = train(model, (x_train, y_train), (x_val, y_val), config)
    out = Path(args.out)
    save_model(out, model, extra={"train_config": asdict(config), "history": history.to_dict()})
    history_path = out.with_name(out.name + ".history.json")
    history_path.write_text(json.dumps(history.to_dict(), indent=2) + "\n", encoding="utf-8")
    _emit(
        {
            "checkpoint": str(out),
            "history": str(history_path),
            "num_classes": args.k,
            "param_count": param_count(model),
            "epochs_run": history.epochs_run,
            "best_epoch": history.best_epoch,
            "val_accuracy": history.best_val_accuracy,
        }
    )
    return 0


def cmd_eval(args) -> int:
    model, _ = load_model(args.ckpt, num_classes=args.k)
    x, y, angles = _load(args.data, args.split, model.grid)
    _emit(asdict(evaluate(model, x, y, angles)))
    return 0


def predict_file(model, wav_path) -> tuple[float, np.ndarray]:
    probs = model.predict_proba(ipd_features(read_wav(wav_path))[None])[0]
    return float(probs @ model.grid.centers()), probs


def cmd_infer(args) -> int:
    model, _ = load_model(args.ckpt)
    angle, probs = predict_file(model, args.wav)
    _emit(
        {
            "angle": angle,
            "predicted_class": int(probs.argmax()),
            "class_centers": model.grid.centers().tolist(),
            "probabilities": probs.tolist(),
        }
    )
    return 0


def cmd_classical(args) -> int:
    audio = read_wav(args.wav)
    azimuth, est = estimate_azimuth(audio.samples[0], audio.samples[1], audio.sample_rate, args.spacing)
    _emit({"azimuth": azimuth, "tau": est.tau, "peak_value": est.peak_value})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lightdoa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, required=True)
    p.add_argument("--val", type=int, required=True)
    p.add_argument("--test", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mixture", help='JSON class weights, e.g. \'{"room": {"Small": 1}}\'')
    p.add_argument("--duration", type=float, default=4.0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train LightDOA on a generated dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True, choices=SUPPORTED_CLASS_COUNTS)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=5e-3)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--ckpt", required=True)
    p.add_argument("--k", type=int, choices=SUPPORTED_CLASS_COUNTS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="predict the azimuth of one stereo WAV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--wav", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("classical", help="GCC-PHAT azimuth of one stereo WAV")
    p.add_argument("--wav", required=True)
    p.add_argument("--spacing", type=float, required=True)
    p.set_defaults(func=cmd_classical)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (LightDoaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
