"""Acceptance suite: one test per headline criterion, each printing a verdict line.

The ``verdict`` fixture also repeats every line in the terminal summary, so
``pytest -v tests/test_acceptance.py`` ends with a compact pass/fail table.
"""
import time

import numpy as np
import pytest

from uit import complexity, gradcheck, metrics, runtime, train, weightfile
from uit import model as M
from uit.dsp import log_mel
from uit.labels import LabelSpace

from oracles import ap_bruteforce

TARGET_PARAMS = {"uit-xs": 1.5e6, "uit-2xs": 0.8e6, "uit-3xs": 574e3}
TARGET_MFLOPS = {"uit-xs": 34, "uit-2xs": 18, "uit-3xs": 13}
MPK_UPPER_MB = {"uit-xs": 7.59, "uit-2xs": 4.10, "uit-3xs": 3.15}


def test_param_counts(verdict):
    t0 = time.perf_counter()
    got = {n: complexity.count_params(M.preset(n)) for n in M.PRESETS}
    dev = {n: got[n] / TARGET_PARAMS[n] - 1 for n in got}
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"{n}={got[n]:,} ({dev[n]:+.1%})" for n in got) + f"; {elapsed:.2f}s"
    verdict("params within 5%", all(abs(d) <= 0.05 for d in dev.values()) and elapsed < 1, detail)


def test_flop_counts(verdict):
    t0 = time.perf_counter()
    got = {n: complexity.count_flops(M.preset(n)) / 1e6 for n in M.PRESETS}
    dev = {n: got[n] / TARGET_MFLOPS[n] - 1 for n in got}
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"{n}={got[n]:.2f}M ({dev[n]:+.1%})" for n in got) + f"; {elapsed:.2f}s"
    verdict("MFLOPs within 15%", all(abs(d) <= 0.15 for d in dev.values()) and elapsed < 1, detail)


def test_memory_bracketing(verdict):
    ok, parts = True, []
    for n in M.PRESETS:
        rep = complexity.analyze(M.preset(n), n)
        ok &= rep.weight_bytes <= rep.m_pk_bytes
        ok &= abs(rep.weight_bytes / (4 * rep.params) - 1) <= 0.10
        ok &= rep.m_pk_bytes / 1e6 <= MPK_UPPER_MB[n]
        parts.append(f"{n} weights={rep.weight_bytes / 1e6:.2f}MB m_pk={rep.m_pk_bytes / 1e6:.2f}MB"
                     f" (<= {MPK_UPPER_MB[n]})")
    verdict("peak memory bracketing", ok, "; ".join(parts))


def test_ablation_directionality(verdict):
    base = complexity.analyze(M.preset("uit-xs"))
    std = complexity.analyze(M.preset("uit-xs", attention="standard"))
    gelu = complexity.analyze(M.preset("uit-xs", activation="gelu"))
    ok = (std.params > base.params and std.flops > base.flops and std.m_pk_bytes > base.m_pk_bytes
          and gelu.params == base.params and gelu.m_pk_bytes == base.m_pk_bytes)
    detail = (f"standard attention params {base.params:,}->{std.params:,}, MFLOPs {base.mflops:.1f}->"
              f"{std.mflops:.1f}, m_pk {base.m_pk_bytes / 1e6:.2f}->{std.m_pk_bytes / 1e6:.2f}MB; "
              f"gelu params {gelu.params:,}, m_pk {gelu.m_pk_bytes / 1e6:.2f}MB")
    verdict("attention/activation ablation direction", ok, detail)


def test_bottleneck_equals_standard_at_full_width(verdict):
    t0 = time.perf_counter()
    bn = gradcheck.tiny_config().replace(bottleneck=8)
    std = bn.replace(attention="standard")
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        w = M.random_weights(bn, rng)
        tokens = rng.normal(size=(3, bn.n_tokens, bn.patch_size)).astype(np.float32)
        worst = max(worst, float(np.abs(M.forward(tokens, w, std) - M.forward(tokens, w, bn)).max()))
    verdict("bottleneck U=D matches standard attention", worst <= 1e-6,
            f"max |diff| {worst:.2e} over 50 seeds; {time.perf_counter() - t0:.2f}s")


def test_gradcheck_suite(verdict):
    t0 = time.perf_counter()
    worst = gradcheck.run(20)
    elapsed = time.perf_counter() - t0
    ok = all(err < gradcheck.tolerance(n) for n, err in worst.items()) and elapsed < 60
    detail = ", ".join(f"{n}={e:.1e}" for n, e in worst.items()) + f"; {elapsed:.1f}s"
    verdict("gradcheck (op < 1e-4, model < 1e-3, float64, 20 seeds)", ok, detail)


def test_delay_invariant(verdict):
    cfg = M.preset("uit-3xs")
    rng = np.random.default_rng(7)
    w = M.random_weights(cfg, rng)
    wave = (0.1 * rng.standard_normal(16000)).astype(np.float32)
    base = M.forward(M.patchify(log_mel(wave), cfg), w, cfg)
    # frame 95 is the last one the model reads; it ends at sample 95*160 + 512
    first_unused = (cfg.input_frames - 1) * 160 + 512
    changed = 0
    for _ in range(100):
        x = wave.copy()
        idx = rng.integers(first_unused, wave.size, size=rng.integers(1, 20))
        x[idx] = rng.uniform(-1, 1, size=idx.size)
        changed += not np.array_equal(M.forward(M.patchify(log_mel(x), cfg), w, cfg), base)
    sg = log_mel(wave)
    for _ in range(100):
        s = sg.copy()
        s[rng.integers(cfg.input_frames, s.shape[0]), rng.integers(0, 64)] += rng.normal() * 50
        changed += not np.array_equal(M.forward(M.patchify(s, cfg), w, cfg), base)
    verdict("delay invariant", changed == 0,
            f"{changed} of 200 perturbations (100 samples >= {first_unused}, 100 frames >= 96) changed logits")


def test_map_oracle(verdict):
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(1000):
        m = int(rng.integers(1, 13))
        scores = rng.integers(0, 4, m).astype(float) if rng.uniform() < 0.5 else rng.uniform(size=m)
        truths = rng.integers(0, 2, m)
        ref = ap_bruteforce(list(scores), list(truths))
        got = metrics.average_precision(scores, truths)
        if ref is None:
            mismatches += got is not None
        else:
            mismatches += got is None or abs(got - float(ref)) > 1e-15
    verdict("average precision matches exhaustive oracle", mismatches == 0,
            f"{mismatches} mismatches on 1000 instances (M <= 12, half with tied scores)")


def test_toy_training(verdict):
    t0 = time.perf_counter()
    finals = []
    for seed in range(10):
        res = train.train_toy(seed=seed, epochs=20, steps_per_epoch=10)
        finals.append(res.losses[-1])
    st = train.OptimState()
    ends = (train.lr_at(0, st), train.lr_at(20, st), train.lr_at(800, st))
    elapsed = time.perf_counter() - t0
    good = sum(f < 0.1 for f in finals)
    ok = good >= 9 and ends[0] == 0 and ends[1] == pytest.approx(1e-3, abs=1e-12) \
        and abs(ends[2]) < 1e-12 and elapsed < 120
    detail = (f"{good}/10 seeds below 0.1 after 20x10 = 200 steps (worst {max(finals):.4f}); "
              f"lr at epochs 0/20/800 = {ends[0]:g}/{ends[1]:g}/{ends[2]:.1g}; {elapsed:.1f}s")
    verdict("toy training", ok, detail)


def test_latency_ordering(verdict):
    reports = {r.model: r for r in runtime.bench(["uit-3xs", "uit-2xs", "uit-xs"])}
    ms = {n: r.mean_ms for n, r in reports.items()}
    ratio = ms["uit-xs"] / ms["uit-3xs"]
    ok = ms["uit-3xs"] < ms["uit-2xs"] < ms["uit-xs"] and 1.5 <= ratio <= 4.5
    detail = ", ".join(f"{n}={v:.3f}ms" for n, v in ms.items()) + f"; xs/3xs ratio {ratio:.2f}"
    verdict("latency ordering", ok, detail)


def test_chunked_inference(verdict):
    cfg = M.UiTConfig(layers=2, dim=16, bottleneck=4, heads=2, mlp_dim=48, labels=LabelSpace.small(3, 4))
    rng = np.random.default_rng(3)
    w = M.random_weights(cfg, rng)
    clip = (0.1 * rng.standard_normal(160000)).astype(np.float32)
    per = np.stack([M.score(M.forward(M.patchify(log_mel(c), cfg), w, cfg))
                    for c in clip.reshape(10, 16000)])
    mean_err = float(np.abs(runtime.infer_clip(clip, w, cfg) - per.mean(axis=0)).max())
    short = clip[:48000]
    concat_err = float(np.abs(runtime.infer_clip(np.concatenate([short, short]), w, cfg)
                              - runtime.infer_clip(short, w, cfg)).max())
    verdict("chunked inference", mean_err <= 1e-6 and concat_err <= 1e-6,
            f"10 s mean-of-chunks err {mean_err:.1e}, self-concatenation err {concat_err:.1e}")


def test_weight_file_roundtrip(tmp_path, verdict):
    identical, rejected, cuts = 0, 0, 0
    rng = np.random.default_rng(11)
    for n in M.PRESETS:
        cfg = M.preset(n)
        path = tmp_path / f"{n}.uitw"
        weightfile.save(path, M.random_weights(cfg, rng))
        buf = path.read_bytes()
        weightfile.save(tmp_path / "again.uitw", weightfile.load_weights(path, cfg))
        identical += (tmp_path / "again.uitw").read_bytes() == buf
        # every header byte, then a random sample of cut points in the payload
        for cut in [*range(64), *rng.integers(64, len(buf), 100), len(buf) - 1]:
            cuts += 1
            try:
                weightfile.loads(buf[:cut])
            except weightfile.WeightFileError:
                rejected += 1
    verdict("weight file round-trip and truncation", identical == 3 and rejected == cuts,
            f"{identical}/3 presets byte-identical, {rejected}/{cuts} truncations rejected")
