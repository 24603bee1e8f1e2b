"""Acceptance criteria 1-11.

Each ``criterion_N`` returns ``(ok, detail)``.  The pytest wrappers record a
PASS/FAIL line per criterion (printed in the terminal summary by conftest)
and assert the outcome.  Run this file directly to print the lines without
pytest.
"""
import json
import math
import sys
import tempfile
import time
from functools import partial
from pathlib import Path

import numpy as np
import pytest

from tsgan import nn
from tsgan.autodiff import Tensor, grad_check, ops
from tsgan.checkpoint import load_checkpoint
from tsgan.cli import _train_arrays, mean_wfd_to_reference, run_training
from tsgan.config import RunConfig
from tsgan.corpus import Corpus
from tsgan.datasets import DEFAULT_CLASSES, fit_norm, gen_artificial_dataset, split_dataset
from tsgan.gan import (ConditionLabel, CriticConfig, GeneratorConfig, LossConfig, ModelConfig,
                       condition_embed, critic_forward, critic_loss, generator_forward, generator_loss,
                       init_critic, init_generator, init_state, synthesize, train_step)
from tsgan.spectral import NPSD, NPSDSet, freq_grid, npsd, segment_distance, standard_distance, wasserstein2_1d

sys.path.insert(0, str(Path(__file__).parent))
from test_autodiff import _primitive_cases  # noqa: E402

RESULTS: list[str] = []
SEEDS = (0, 1, 2)


def report(n: int, ok: bool, detail: str) -> str:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return line


# ------------------------------------------------------------- criterion 1

def _block_cases(rng):
    """(name, f, inputs) covering every composite block, inputs from N(0, 1)."""
    def r(*s):
        return Tensor(rng.normal(size=s), requires_grad=True)

    def const(*s):
        return Tensor(rng.normal(size=s))

    cases = []
    c8 = const(2, 8, 8)
    cases.append(("rope_rotate", lambda x: ops.sum(ops.mul(nn.rope_rotate(x), c8)), [r(2, 8, 8)]))
    cases.append(("lape_add", lambda x, t: ops.sum(ops.mul(ops.square(nn.lape_add(x, t)), c8)), [r(2, 8, 8), r(8, 8)]))
    cases.append(("instance_norm", lambda x, g, b: ops.sum(ops.mul(nn.instance_norm(x, g, b), c8)),
                  [r(2, 8, 8), r(8), r(8)]))
    for kind in ("canonical", "grid", "psa"):
        p = nn.BlockParams(d_model=8, n_heads=2, ffn_mult=2, attn_kind=kind,
                           partition_len=4 if kind == "grid" else None, psa_factor=1.0)
        w = nn.init_attention(rng, 8)
        names = list(w)
        x = r(2, 8, 8)
        cases.append((f"attention_{kind}",
                      lambda x_, *ws, p=p, names=names: ops.sum(ops.mul(nn.attention(x_, p, dict(zip(names, ws)), 1), c8)),
                      [x] + [w[k] for k in names]))
        ew = nn.init_encoder(rng, p)
        flat = nn.flatten_params(ew)
        enames = list(flat)

        def enc(x_, *ps, p=p, ew=ew, enames=enames):
            tree = _rebuild(ew, dict(zip(enames, ps)))
            return ops.sum(ops.mul(nn.encoder_block(x_, p, tree, rng_seed=1), c8))
        cases.append((f"encoder_{kind}", enc, [r(2, 8, 8)] + [flat[k] for k in enames]))
    c4 = const(2, 4, 8)
    cases.append(("patch_embed", lambda x, w, b: ops.sum(ops.mul(nn.patch_embed(x, 2, {"w": w, "b": b}), c4)),
                  [r(2, 8, 2), r(4, 8), r(8)]))
    dw = nn.init_distill(rng, 8)
    cases.append(("distill_halve", lambda x, w, b: ops.sum(ops.mul(nn.distill_halve(x, {"w": w, "b": b}), c4)),
                  [r(2, 8, 8), dw["w"], dw["b"]]))
    c16 = const(2, 16, 8)
    cases.append(("upsample_bicubic", lambda x: ops.sum(ops.mul(nn.upsample_bicubic(x), c16)), [r(2, 8, 8)]))
    c16h = const(2, 16, 4)
    cases.append(("pixel_shuffle", lambda x: ops.sum(ops.mul(nn.pixel_shuffle(x), c16h)), [r(2, 8, 8)]))
    cases.append(("pixel_unshuffle", lambda x: ops.sum(ops.mul(nn.pixel_unshuffle(x), c8)), [r(2, 16, 4)]))
    gc = GeneratorConfig(noise_dim=4, label_proj_dim=4, t_seed=4, d_seed=8, t_target=4, label_dim=3, n_heads=2)
    cw = init_generator(rng, gc)["cond"]
    cseed = const(2, 4, 8)
    cases.append(("condition_embed", lambda z, y: ops.sum(ops.mul(condition_embed(z, y, cw, gc), cseed)),
                  [r(2, 4), r(2, 3)]))
    return cases


def _rebuild(tree, flat, prefix=""):
    out = {}
    for k, v in tree.items():
        name = f"{prefix}{k}"
        out[k] = _rebuild(v, flat, name + ".") if isinstance(v, dict) else flat[name]
    return out


SMALL_CRITIC = CriticConfig(t=16, d_in=2, d_model=16, head_hidden=16, label_dim=3, ffn_mult=2)
SMALL_GEN = GeneratorConfig(noise_dim=8, label_proj_dim=8, t_seed=4, d_seed=16, t_target=16, d_out=2,
                            shuffle_threshold=8, ga_threshold=8, ffn_mult=2)
CRITIC_PARAMS = ("adv.o.w", "adv.o.b", "label.o.w", "label.o.b", "stages.3.distill.b", "stages.0.block.norm1.gain",
                 "stages.2.block.attn.bq", "embed.b", "stages.1.inject.b")
GEN_PARAMS = ("out.w", "out.b", "cond.label.w", "cond.label.b", "stages.0.block.norm2.bias",
              "stages.1.block.attn.bv", "stages.0.lape_in")


def _loss_checks(seed):
    """Full critic and generator losses: every input coordinate plus a spread of parameter tensors."""
    rng = np.random.default_rng(seed)
    gw, cw = init_generator(rng, SMALL_GEN), init_critic(rng, SMALL_CRITIC)
    real, syn = Tensor(rng.normal(size=(2, 16, 2))), Tensor(rng.normal(size=(2, 16, 2)))
    noise = Tensor(rng.normal(size=(2, 8)))
    labels, mix = np.eye(3)[rng.integers(0, 3, size=2)], rng.uniform(size=2)
    crit = partial(critic_forward, w=cw, cfg=SMALL_CRITIC, seed=seed)
    lc = LossConfig()

    def c_loss(*_):
        return critic_loss(crit, real, labels, syn, lc, mix)[0]

    def g_loss(*_):
        return generator_loss(crit, generator_forward(noise, labels, gw, SMALL_GEN), labels, lc)[0]

    cflat, gflat = nn.flatten_params(cw), nn.flatten_params(gw)
    out = [("critic_loss[inputs]", grad_check(c_loss, [real, syn])),
           ("critic_loss[params]", grad_check(c_loss, [cflat[k] for k in CRITIC_PARAMS])),
           ("generator_loss[noise]", grad_check(g_loss, noise)),
           ("generator_loss[params]", grad_check(g_loss, [gflat[k] for k in GEN_PARAMS]))]
    return out


def criterion_1():
    t0 = time.perf_counter()
    worst, failures, count = 0.0, [], 0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        checks = [(n, grad_check(f, xs, step=1e-4, tol=1e-4)) for n, f, xs in _primitive_cases(rng)]
        checks += [(n, grad_check(f, xs, step=1e-4, tol=1e-4)) for n, f, xs in _block_cases(rng)]
        checks += _loss_checks(seed)
        for name, rep in checks:
            count += 1
            worst = max(worst, rep.max_rel_err)
            if not rep.passed:
                failures.append(f"{name}@seed{seed}={rep.max_rel_err:.2e}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 120
    detail = f"{count} checks, worst rel err {worst:.2e}, {elapsed:.1f}s"
    if failures:
        detail += " failing: " + ", ".join(failures)
    return ok, detail


# ------------------------------------------------------------ criteria 2-4

def criterion_2():
    worst = 0.0
    for t in (8, 32):
        rng = np.random.default_rng(t)
        w = nn.init_attention(rng, 16)
        x = Tensor(rng.normal(size=(2, t, 16)))
        canon = nn.attention_canonical(x, nn.BlockParams(d_model=16, n_heads=2), w).data
        p = nn.BlockParams(d_model=16, n_heads=2, attn_kind="psa", psa_factor=100.0)
        assert nn.psa_budget(t, p.psa_factor) == t
        worst = max(worst, np.max(np.abs(nn.attention_psa(x, p, w, rng_seed=5).data - canon)))
    return worst <= 1e-6, f"max |psa - canonical| = {worst:.2e} (T in 8, 32)"


def criterion_3():
    same = True
    for t in (4, 16, 64):
        rng = np.random.default_rng(t)
        w = nn.init_attention(rng, 16)
        x = Tensor(rng.normal(size=(3, t, 16)))
        a = nn.attention_canonical(x, nn.BlockParams(d_model=16, n_heads=2), w).data
        g = nn.attention_grid(x, nn.BlockParams(d_model=16, n_heads=2, attn_kind="grid", partition_len=t), w).data
        same &= a.tobytes() == g.tobytes()
    return same, "grid with partition_len == T bit-identical to canonical (T in 4, 16, 64)"


def criterion_4():
    rng = np.random.default_rng(4)
    ok = True
    for _ in range(100):
        b, t, d = rng.integers(1, 4), rng.integers(1, 9), 2 * rng.integers(1, 5)
        x = rng.normal(size=(b, t, d))
        y = nn.pixel_shuffle(Tensor(x)).data
        ok &= y.shape == (b, 2 * t, d // 2)
        ok &= np.array_equal(np.sort(y, axis=None), np.sort(x, axis=None))
        ok &= nn.pixel_unshuffle(Tensor(y)).data.tobytes() == x.tobytes()
    return bool(ok), "100 random tensors: exact round trip, multiset preserved"


# ------------------------------------------------------------ criteria 5-7

def _dense_w2(a, b, n=1_000_000):
    u = (np.arange(n) + 0.5) / n
    qa = a.freqs[np.minimum(np.searchsorted(np.cumsum(a.mass), u), a.mass.size - 1)]
    qb = b.freqs[np.minimum(np.searchsorted(np.cumsum(b.mass), u), b.mass.size - 1)]
    return math.sqrt(np.mean((qa - qb) ** 2))


def _random_npsd(rng, t):
    m = rng.exponential(size=t // 2 + 1) * (rng.uniform(size=t // 2 + 1) < rng.uniform(0.2, 1.0))
    m[rng.integers(m.size)] += rng.uniform(0.1, 1)
    return NPSD(freq_grid(t), m / m.sum())


def criterion_5():
    rng = np.random.default_rng(5)
    sym_ok, self_worst, slack_worst = True, 0.0, -np.inf
    for _ in range(200):
        t = int(rng.choice([8, 16, 64, 256]))
        a, b, c = (_random_npsd(rng, t) for _ in range(3))
        ab, ba = wasserstein2_1d(a, b), wasserstein2_1d(b, a)
        sym_ok &= ab == ba
        self_worst = max(self_worst, wasserstein2_1d(a, a))
        slack_worst = max(slack_worst, ab - (wasserstein2_1d(a, c) + wasserstein2_1d(c, b)))
    dense_worst = 0.0
    for t in (16, 64, 256):
        for _ in range(5):
            a, b = _random_npsd(rng, t), _random_npsd(rng, t)
            dense_worst = max(dense_worst, abs(wasserstein2_1d(a, b) - _dense_w2(a, b)))
    ok = sym_ok and self_worst <= 1e-12 and slack_worst <= 1e-9 and dense_worst <= 1e-6
    return ok, (f"symmetry exact={sym_ok}, self <= {self_worst:.1e}, triangle excess {slack_worst:.1e}, "
                f"dense quantile gap {dense_worst:.1e}")


def criterion_6():
    t = 64
    grid = freq_grid(t)
    fa, fb = 3, 11
    pa, pb = NPSD(grid, np.eye(grid.size)[fa]), NPSD(grid, np.eye(grid.size)[fb])
    half = NPSD(grid, (np.eye(grid.size)[fa] + np.eye(grid.size)[fb]) / 2)
    e1 = abs(wasserstein2_1d(pa, pb) - (fb - fa) / t)
    e2 = abs(wasserstein2_1d(pa, half) - (fb - fa) / t / math.sqrt(2))
    e3 = abs(standard_distance(NPSDSet.from_members([pa, pb])) - (fb - fa) / t / math.sqrt(2))
    conc = min(npsd(np.cos(2 * np.pi * k * np.arange(t) / t)).mass[k] for k in (1, 7, 20, 31))
    ok = bool(max(e1, e2, e3) <= 1e-9 and conc >= 0.999)
    return ok, f"errors {e1:.1e}/{e2:.1e}/{e3:.1e}, min cosine bin mass {conc:.6f}"


def criterion_7():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        x = rng.normal(size=(64, 2)) + rng.normal(size=2)
        for alpha in (0.1, 10.0):
            worst = max(worst, segment_distance(x, alpha * x))
        worst = max(worst, segment_distance(x, np.roll(x, int(rng.integers(1, 64)), axis=0)))
    return worst <= 1e-9, f"max WFD under scaling/shift {worst:.1e}"


# ------------------------------------------------------------- criterion 8

def criterion_8():
    rng = np.random.default_rng(8)
    cc = CriticConfig(t=256, d_in=2, d_model=8, n_heads=2, head_hidden=8, ffn_mult=1, patch_len0=1)
    trace = []
    adv, lab = critic_forward(rng.normal(size=(1, 256, 2)), init_critic(rng, cc), cc, trace=trace)
    halvings = sum(1 for a, b in zip(trace, trace[1:]) if b == a // 2)
    gc = GeneratorConfig(noise_dim=4, label_proj_dim=4, t_seed=16, t_target=256, d_seed=256,
                         shuffle_threshold=64, ga_threshold=64, d_out=2, ffn_mult=1)
    gtrace = []
    generator_forward(rng.normal(size=(1, 4)), np.eye(3)[:1], init_generator(rng, gc), gc, gtrace)
    want = [(16, 256), (32, 256), (64, 256), (128, 128), (256, 64)]
    ok = halvings == 8 and trace[-1] == 1 and adv.shape == (1,) and gtrace == want
    return ok, f"critic halvings {halvings} ({trace[0]}->{trace[-1]}), generator trace {gtrace}"


# ------------------------------------------------------------- criterion 9

def criterion_9():
    recs = gen_artificial_dataset(50_000, 64, 2, seed=42)
    labels = np.array([int(np.argmax(r.label.onehot)) for r in recs])
    counts = np.bincount(labels, minlength=3)
    windows = np.stack([r.window for r in recs])
    bands = []
    for k in range(3):
        sel = windows[labels == k]
        occ = np.concatenate([np.nonzero((NPSDSet.from_signals(sel[:, :, c]).masses > 1e-9).any(axis=0))[0]
                              for c in range(2)])
        bands.append((int(occ.min()), int(occ.max())))
    disjoint = all(bands[i][1] < bands[j][0] for i in range(3) for j in range(i + 1, 3))
    test, train, val = split_dataset(list(range(50_000)), seed=42)
    sizes = (len(test), len(train), len(val))
    split_ok = all(abs(s - f * 50_000) <= 1 for s, f in zip(sizes, (0.2, 0.7, 0.1)))
    norms = [fit_norm(windows[np.asarray(s)]) for s in (test, train, val)]
    independent = all(not np.array_equal(norms[i].mean, norms[j].mean) for i in range(3) for j in range(i + 1, 3))
    z = norms[1].apply(windows[np.asarray(train)]).reshape(-1, 2)
    mean_err, std_err = np.max(np.abs(z.mean(axis=0))), np.max(np.abs(z.std(axis=0) - 1))
    exact_even = np.bincount([int(np.argmax(r.label.onehot)) for r in gen_artificial_dataset(49_998, 8, 1)]).tolist()
    rest_ok = (disjoint and split_ok and independent and mean_err <= 1e-9 and std_err <= 1e-9
               and len(recs) == 50_000 and exact_even == [16_666] * 3 and counts.max() - counts.min() <= 1)
    exact = bool(counts.min() == counts.max())
    detail = (f"counts {counts.tolist()} (exact balance {'holds' if exact else 'impossible: 50000 % 3 = 2'}), "
              f"bands {bands}, split {sizes}, train mean {mean_err:.1e} std {std_err:.1e}")
    return rest_ok, exact, detail


# ----------------------------------------------------------- criteria 10-11

def smoke_config(max_steps=500, seed=0) -> RunConfig:
    gen = GeneratorConfig(noise_dim=32, label_proj_dim=32, t_seed=8, d_seed=64, t_target=64, d_out=2,
                          shuffle_threshold=32, ga_threshold=16, label_dim=3, n_heads=4, ffn_mult=2)
    crit = CriticConfig(t=64, d_in=2, d_model=32, n_heads=4, head_hidden=32, label_dim=3, ffn_mult=2)
    cfg = RunConfig(ModelConfig(gen, crit, LossConfig()), seed=seed, max_steps=max_steps, batch_size=16)
    return cfg.validate()


def easy_corpus(n_easy=1000, t=64, seed=0) -> Corpus:
    recs = gen_artificial_dataset(3 * n_easy, t, 2, seed=seed)
    easy = [r for r in recs if r.source["class"] == DEFAULT_CLASSES[0].name]
    windows = np.stack([r.window for r in easy])
    return Corpus.from_records(easy, norm={"train": fit_norm(windows)})


def _synth_wfd(state, cfg, norm, refs, n=64, seed=123):
    windows = synthesize(state.gen_w, cfg.model.generator, [ConditionLabel.from_class(0, 3)], n, norm, seed)
    return mean_wfd_to_reference(windows, refs)


def criterion_10(steps=500):
    cfg = smoke_config(steps)
    corpus = easy_corpus()
    norm = corpus.norm["train"]
    refs = [NPSDSet.from_signals(corpus.windows[:, :, c]) for c in range(corpus.d)]
    before = _synth_wfd(init_state(cfg.model, cfg.seed), cfg, norm, refs)
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        rc = run_training(cfg, corpus, Path(tmp))
        elapsed = time.perf_counter() - t0
        recs = [json.loads(x) for x in (Path(tmp) / "metrics.jsonl").read_text().splitlines()]
        state, *_ = load_checkpoint(Path(tmp) / "checkpoint.tsck")
    after = _synth_wfd(state, cfg, norm, refs)
    finite = all(np.isfinite(v) for r in recs for v in r.values())
    ok = rc == 0 and len(recs) == steps and finite and after < before and elapsed <= 1800
    return ok, f"WFD {before:.5f} -> {after:.5f}, {len(recs)} steps in {elapsed / 60:.1f} min, losses finite={finite}"


def criterion_11():
    cfg = smoke_config(6, seed=11)
    cfg.model.critic = CriticConfig(t=16, d_in=2, d_model=16, head_hidden=16, label_dim=3, ffn_mult=2)
    cfg.model.generator = GeneratorConfig(noise_dim=8, label_proj_dim=8, t_seed=4, d_seed=16, t_target=16,
                                          d_out=2, shuffle_threshold=8, ga_threshold=8, ffn_mult=2)
    cfg.model.loss = LossConfig(n_critic=2)
    cfg.batch_size = 4
    cfg.validate()
    corpus = easy_corpus(40, t=16)
    with tempfile.TemporaryDirectory() as tmp:
        outs = [Path(tmp) / "a", Path(tmp) / "b"]
        rcs = [run_training(cfg, corpus, o) for o in outs]
        logs = [(o / "metrics.jsonl").read_bytes() for o in outs]
        ckpts = [(o / "checkpoint.tsck").read_bytes() for o in outs]
        state, *_ = load_checkpoint(outs[0] / "checkpoint.tsck")
    # replay the same run in memory to compare against the reloaded weights
    live = init_state(cfg.model, cfg.seed)
    x, y, _ = _train_arrays(corpus)
    while live.step < cfg.max_steps:
        batches = []
        for _ in range(cfg.model.loss.n_critic):
            sel = live.rng.choice(x.shape[0], size=min(cfg.batch_size, x.shape[0]), replace=False)
            batches.append((x[sel], y[sel]))
        train_step(live, batches)
    rng = np.random.default_rng(0)
    z, lab = rng.normal(size=(8, 8)), np.eye(3)[rng.integers(0, 3, size=8)]
    g0 = generator_forward(z, lab, live.gen_w, cfg.model.generator).data
    g1 = generator_forward(z, lab, state.gen_w, cfg.model.generator).data
    win = rng.normal(size=(8, 16, 2))
    a0, l0 = critic_forward(win, live.critic_w, cfg.model.critic)
    a1, l1 = critic_forward(win, state.critic_w, cfg.model.critic)
    rel = max(np.max(np.abs(g1 - g0)) / np.max(np.abs(g0)),
              np.max(np.abs(a1.data - a0.data)) / np.max(np.abs(a0.data)),
              np.max(np.abs(l1.data - l0.data)) / np.max(np.abs(l0.data)))
    same = rcs == [0, 0] and logs[0] == logs[1] and ckpts[0] == ckpts[1]
    return bool(same and rel <= 1e-6), f"logs/checkpoints identical={same}, reload forward rel err {rel:.1e}"


# ------------------------------------------------------------------ pytest

def _run(n, fn):
    ok, detail = fn()
    report(n, ok, detail)
    assert ok, detail


def test_criterion_01_gradient_suite():
    _run(1, criterion_1)


def test_criterion_02_psa_equivalence():
    _run(2, criterion_2)


def test_criterion_03_grid_equivalence():
    _run(3, criterion_3)


def test_criterion_04_pixel_shuffle():
    _run(4, criterion_4)


def test_criterion_05_metric_axioms():
    _run(5, criterion_5)


def test_criterion_06_analytic_oracles():
    _run(6, criterion_6)


def test_criterion_07_invariances():
    _run(7, criterion_7)


def test_criterion_08_shape_law():
    _run(8, criterion_8)


@pytest.fixture(scope="module")
def c9():
    return criterion_9()


def test_criterion_09_dataset_protocol(c9):
    rest_ok, exact, detail = c9
    report(9, rest_ok and exact, detail)
    assert rest_ok, detail


@pytest.mark.xfail(strict=True, reason="3 classes cannot split 50,000 windows evenly")
def test_criterion_09_exact_balance_at_50000(c9):
    assert c9[1]


def test_criterion_10_training_smoke():
    _run(10, criterion_10)


def test_criterion_11_determinism():
    _run(11, criterion_11)


if __name__ == "__main__":
    fns = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
           criterion_8]
    for i, fn in enumerate(fns, start=1):
        report(i, *fn())
    rest, exact, detail = criterion_9()
    report(9, rest and exact, detail)
    report(10, *criterion_10())
    report(11, *criterion_11())
