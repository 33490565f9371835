"""Command-line entry point: ``uit <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import complexity, gradcheck, metrics, runtime, train, weightfile
from . import model as M
from .dsp import log_mel, read_wav
from .labels import LabelSpace, read_event_names


def _emit(data: dict, fmt: str, text: str | None = None):
    if fmt == "kv":
        print("\n".join(f"{k}={v}" for k, v in data.items()))
    elif text is not None:
        print(text)
    else:
        width = max(len(k) for k in data)
        print("\n".join(f"{k:<{width}}  {v}" for k, v in data.items()))


def _config(args) -> M.UiTConfig:
    labels = None
    if getattr(args, "labels", None):
        labels = LabelSpace.merged(read_event_names(args.labels))
    extra = {"labels": labels} if labels else {}
    return M.preset(args.model, attention=args.attention, activation=args.activation, **extra)


def cmd_analyze(args):
    cfg = _config(args)
    rep = complexity.analyze(cfg, args.model)
    if args.format == "kv":
        print(rep.to_kv())
    else:
        print(rep.to_text())
    return 0


def cmd_features(args):
    sg = log_mel(read_wav(args.wav))
    if args.out:
        weightfile.save(args.out, {"logmel": sg})
    _emit({"wav": args.wav, "frames": sg.shape[0], "mels": sg.shape[1],
           "min": round(float(sg.min()), 4), "max": round(float(sg.max()), 4),
           "out": args.out or "-"}, args.format)
    return 0


def cmd_init(args):
    cfg = _config(args)
    rng = np.random.default_rng(args.seed)
    w = M.random_weights(cfg, rng) if args.random else M.init_weights(cfg, rng)
    weightfile.save(args.out, w)
    _emit({"model": args.model, "tensors": len(w), "params": sum(v.size for v in w.values()),
           "out": args.out}, args.format)
    return 0


def cmd_infer(args):
    cfg = _config(args)
    w = weightfile.load_weights(args.weights, cfg)
    wave = read_wav(args.wav)
    probs = runtime.infer_clip(wave, w, cfg)
    labels = cfg.labels
    decision = metrics.kws_decide(probs, labels, args.threshold)
    ev = np.asarray(labels.event_indices)
    top = ev[np.argsort(-probs[ev], kind="stable")[: args.top_k]]
    out = {
        "wav": args.wav,
        "chunks": runtime.split_chunks(wave).shape[0],
        "keyword": labels.names[decision] if decision != metrics.NON_KEYWORD else "<none>",
        "keyword_prob": round(float(probs[decision]), 6) if decision != metrics.NON_KEYWORD else 0.0,
    }
    for rank, idx in enumerate(top, 1):
        out[f"event.{rank}"] = f"{labels.names[idx]}:{probs[idx]:.6f}"
    _emit(out, args.format)
    return 0


def cmd_bench(args):
    reports = runtime.bench(args.models, trials=args.trials, warmup=args.warmup,
                            with_features=args.with_features, seed=args.seed)
    if args.format == "kv":
        for r in reports:
            for k, v in r.summary().items():
                if k != "model":
                    print(f"{r.model}.{k}={v}")
    else:
        print(f"{'model':<10}{'mean':>9}{'median':>9}{'p95':>9}{'std':>9}   (ms, {args.trials} trials, "
              f"{args.warmup} warmup)")
        for r in reports:
            print(f"{r.model:<10}{r.mean_ms:>9.3f}{r.median_ms:>9.3f}{r.p95_ms:>9.3f}{r.std_ms:>9.3f}")
    return 0


def cmd_gradcheck(args):
    worst = gradcheck.run(args.seeds)
    ok = True
    out = {}
    for name, err in worst.items():
        passed = err < gradcheck.tolerance(name)
        ok &= passed
        out[name] = f"{err:.3e} {'ok' if passed else 'FAIL'}"
    out["status"] = "pass" if ok else "fail"
    _emit(out, args.format)
    return 0 if ok else 1


def cmd_train_toy(args):
    res = train.train_toy(seed=args.seed, epochs=args.epochs, steps_per_epoch=args.steps_per_epoch,
                          lr0=args.lr, log_path=args.log)
    if args.out:
        weightfile.save(args.out, res.weights)
    if args.format == "kv":
        for e, (loss, lr) in enumerate(zip(res.losses, res.lrs), 1):
            print(f"epoch.{e}.loss={loss:.6f}")
            print(f"epoch.{e}.lr={lr:.6g}")
        print(f"final_loss={res.losses[-1]:.6f}")
    else:
        print("epoch loss lr")
        print("\n".join(res.log_lines()))
    return 0


def _single_tensor(path):
    tensors = weightfile.load(path)
    if len(tensors) != 1:
        raise ValueError(f"{path}: expected exactly one tensor, found {len(tensors)}")
    return next(iter(tensors.values()))


def cmd_eval(args):
    scores = _single_tensor(args.scores)
    truths = _single_tensor(args.truths)
    out = {"items": scores.shape[0], "classes": scores.shape[1] if scores.ndim == 2 else 1,
           "mAP": round(metrics.mean_ap(scores, truths), 6)}
    if scores.ndim == 2 and scores.shape[1] == len(M.DEFAULT_LABELS):
        labels = M.DEFAULT_LABELS
        dec = metrics.kws_decide(scores, labels, args.threshold)
        truth = [metrics.kws_truth(t, labels) for t in truths]
        out["kws_accuracy"] = round(metrics.kws_accuracy(dec, truth), 6)
    _emit(out, args.format)
    return 0


def _add_model_args(p, default="uit-xs"):
    p.add_argument("--model", default=default, help="uit-xs | uit-2xs | uit-3xs")
    p.add_argument("--attention", choices=("bottleneck", "standard"), default="bottleneck")
    p.add_argument("--activation", choices=("relu", "gelu"), default="relu")
    p.add_argument("--labels", help="Audioset class index CSV (index,mid,display_name) for event names")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uit", description="UiT keyword spotting + audio tagging engine")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentParser(add_help=False)
    fmt.add_argument("--format", choices=("text", "kv"), default="text")

    p = sub.add_parser("analyze", parents=[fmt], help="parameter / FLOP / memory report")
    _add_model_args(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("features", parents=[fmt], help="log-Mel features of a WAV file")
    p.add_argument("wav")
    p.add_argument("--out", help="write the spectrogram as a tensor file")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("init", parents=[fmt], help="write freshly initialised weights")
    _add_model_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--random", action="store_true", help="dense random weights instead of training init")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("infer", parents=[fmt], help="score a WAV clip in 1 s chunks")
    p.add_argument("wav")
    p.add_argument("--weights", required=True)
    _add_model_args(p)
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--top-k", type=int, default=5)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", parents=[fmt], help="model forward latency")
    p.add_argument("--models", nargs="+", default=list(M.PRESETS))
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--with-features", action="store_true", help="include log-Mel extraction in timing")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", parents=[fmt], help="finite-difference check of all backward passes")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-toy", parents=[fmt], help="train a tiny model on a synthetic tone task")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--steps-per-epoch", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--log", help="write 'epoch loss lr' rows to this file")
    p.add_argument("--out", help="write final weights to this file")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval", parents=[fmt], help="mAP (and KWS accuracy) from score/truth tensor files")
    p.add_argument("--scores", required=True)
    p.add_argument("--truths", required=True)
    p.add_argument("--threshold", type=float, default=0.2)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, FloatingPointError) as err:
        print(f"uit {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
