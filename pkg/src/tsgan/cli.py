"""Command-line entry point: ``tsgan <verb> [flags]``.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric abort.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import spectral
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, bind_to_corpus, load_config
from .corpus import Corpus, _atomic_write, read_corpus, write_corpus
from .datasets import (
    DEFAULT_CLASSES,
    SPLIT_NAMES,
    DataError,
    NormParams,
    discover_runs,
    fit_norm,
    gen_artificial_dataset,
    ingest_accel_csv,
    is_pow2,
    split_indices,
    window_series,
)
from .gan.config import ConditionLabel
from .gan.train import NumericAbort, init_state, synthesize, train_step

log = logging.getLogger("tsgan")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _split_and_norm(windows: np.ndarray, seed: int):
    idx = split_indices(windows.shape[0], seed=seed)
    split = [""] * windows.shape[0]
    norm = {}
    for name in SPLIT_NAMES:
        for i in idx[name]:
            split[i] = name
        # fit on float32-rounded values, as they will be read back
        if len(idx[name]):
            norm[name] = fit_norm(windows[idx[name]].astype(np.float32).astype(np.float64))
    return split, norm


# ------------------------------------------------------------------- verbs

def cmd_gen_data(args) -> int:
    if args.n < 1 or args.t < 8 or args.d < 1:
        raise UsageError("--n must be >= 1, --t >= 8 and --d >= 1")
    if not is_pow2(args.t):
        raise UsageError(f"--t {args.t} is not a power of two")
    records = gen_artificial_dataset(args.n, args.t, args.d, DEFAULT_CLASSES, args.seed)
    windows = np.stack([r.window for r in records])
    split, norm = _split_and_norm(windows, args.seed) if args.n >= 3 else (None, None)
    corpus = Corpus.from_records(records, split=split, norm=norm,
                                 extra={"classes": [c.name for c in DEFAULT_CLASSES]})
    write_corpus(args.out, corpus)
    counts = Counter(r.source["class"] for r in records)
    print(" ".join(f"{c.name}={counts[c.name]}" for c in DEFAULT_CLASSES))
    return EXIT_OK


def cmd_ingest(args) -> int:
    if not is_pow2(args.window):
        raise UsageError(f"--window {args.window} is not a power of two")
    if args.stride is not None and args.stride < 1:
        raise UsageError("--stride must be >= 1")
    columns = [int(c) for c in args.columns.split(",")]
    runs = discover_runs(args.dir)
    names = sorted(runs)
    records = []
    for k, name in enumerate(names):
        series = ingest_accel_csv(runs[name], columns)
        onehot = np.zeros(len(names))
        onehot[k] = 1.0
        records.extend(window_series(series, args.window, onehot, args.stride, run_id=name))
    windows = np.stack([r.window for r in records])
    split, norm = _split_and_norm(windows, args.seed)
    corpus = Corpus.from_records(records, split=split, norm=norm, extra={"runs": names})
    write_corpus(args.out, corpus)
    print(f"runs={len(names)} windows={corpus.n}")
    return EXIT_OK


def _train_arrays(corpus: Corpus):
    idx = corpus.subset("train")
    if idx.size == 0:
        raise DataError("corpus has no training records")
    norm = (corpus.norm or {}).get("train") or fit_norm(corpus.windows[idx])
    return norm.apply(corpus.windows[idx]), corpus.labels[idx], norm


def _eval_wfd(state, norm, x_labels, reference_sets, n: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    labels = x_labels[rng.integers(0, x_labels.shape[0], size=n)]
    syn = synthesize(state.gen_w, state.config.generator, labels, 1, norm, seed)
    return mean_wfd_to_reference(syn, reference_sets)


def mean_wfd_to_reference(windows: np.ndarray, reference_sets: list) -> float:
    """Mean over windows of the channel-averaged W2 to each channel's mean spectrum."""
    per_channel = []
    for c, ref in enumerate(reference_sets):
        syn_set = spectral.NPSDSet.from_signals(windows[:, :, c])
        per_channel.append(spectral.distances_to(syn_set, spectral.mean_npsd(ref)))
    return float(np.mean(np.mean(per_channel, axis=0)))


def run_training(cfg, corpus: Corpus, out: Path, resume: Path | None = None) -> int:
    x, y, norm = _train_arrays(corpus)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.jsonl"
    ckpt_path = out / "checkpoint.tsck"
    if resume is not None:
        state, saved, _, _ = load_checkpoint(resume)
        if saved.model != cfg.model:
            raise ConfigError("resume checkpoint was produced by a different model config")
        mode = "a"
    else:
        state = init_state(cfg.model, cfg.seed)
        mode = "w"
    refs = spectral.channel_sets(norm.invert(x)) if cfg.eval_every else None
    every = cfg.checkpoint_every or cfg.max_steps
    b = min(cfg.batch_size, x.shape[0])
    with open(metrics_path, mode) as mfh:
        while state.step < cfg.max_steps:
            batches = []
            for _ in range(cfg.model.loss.n_critic):
                sel = state.rng.choice(x.shape[0], size=b, replace=False)
                batches.append((x[sel], y[sel]))
            try:
                train_step(state, batches)
            except NumericAbort as exc:
                log.error("numeric abort at step %d: %s", state.step, exc)
                return EXIT_NUMERIC
            rec = dict(state.telemetry)
            if cfg.eval_every and state.step % cfg.eval_every == 0:
                rec["eval_wfd"] = _eval_wfd(state, norm, y, refs, cfg.eval_samples, cfg.seed + state.step)
            mfh.write(json.dumps(rec, sort_keys=True) + "\n")
            mfh.flush()
            if state.step % every == 0 or state.step == cfg.max_steps:
                save_checkpoint(ckpt_path, state, cfg, norm, corpus.onehot_dim)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, explicit = load_config(args.config)
    data = args.data or cfg.data_path
    if not data:
        raise UsageError("no corpus given (--data or [data] path)")
    corpus = read_corpus(data)
    bind_to_corpus(cfg, explicit, corpus.t, corpus.d, corpus.label_dim, corpus.onehot_dim)
    if args.max_steps is not None:
        cfg.max_steps = args.max_steps
    return run_training(cfg, corpus, Path(args.out), Path(args.resume) if args.resume else None)


def _read_labels(path) -> list[ConditionLabel]:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read labels {path}: {exc}") from None
    if not isinstance(obj, list) or not obj:
        raise DataError("label file must hold a non-empty JSON list")
    try:
        return [ConditionLabel.from_json(o) for o in obj]
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"invalid label in {path}: {exc}") from None


def cmd_synth(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    state, run, norm, onehot_dim = load_checkpoint(args.ckpt)
    labels = _read_labels(args.labels)
    gcfg = run.model.generator
    for lab in labels:
        if lab.dim != gcfg.label_dim:
            raise DataError(f"label of size {lab.dim} but checkpoint expects {gcfg.label_dim}")
    windows = synthesize(state.gen_w, gcfg, labels, args.n, norm, args.seed)
    vecs = np.repeat(np.stack([lab.vector() for lab in labels]), args.n, axis=0)
    prov = [{"synthetic": True, "label_index": i // args.n, "sample": i % args.n}
            for i in range(windows.shape[0])]
    write_corpus(args.out, Corpus(windows, vecs, prov, onehot_dim=onehot_dim, synthetic=True))
    print(f"windows={windows.shape[0]}")
    return EXIT_OK


def eval_report(real: Corpus, synth: Corpus, max_pairs: int | None = 1_000_000) -> dict:
    if (real.t, real.d) != (synth.t, synth.d):
        raise DataError(f"corpora differ in shape: T×D {real.t}×{real.d} vs {synth.t}×{synth.d}")
    chans = [spectral.set_report(a, b, max_pairs)
             for a, b in zip(spectral.channel_sets(real.windows), spectral.channel_sets(synth.windows))]
    reports = [c.to_json() for c in chans]
    out = {k: float(np.mean([r[k] for r in reports]))
           for k in ("intra_a", "intra_b", "inter", "pairwise_mean")}
    out["grid"] = reports[0]["grid"]
    out["mean_a"] = [r["mean_a"] for r in reports]
    out["mean_b"] = [r["mean_b"] for r in reports]
    out["channels"] = [{k: r[k] for k in ("intra_a", "intra_b", "inter", "pairwise_mean")} for r in reports]
    return out


def cmd_eval(args) -> int:
    real, synth = read_corpus(args.real), read_corpus(args.synth)
    report = eval_report(real, synth, args.max_pairs)
    text = json.dumps(report, sort_keys=True, indent=1)
    if args.report:
        _atomic_write(Path(args.report), text.encode())
    else:
        print(text)
    return EXIT_OK


def _group_key(prov: dict) -> str:
    for k in ("run", "class", "label_index"):
        if k in prov:
            return str(prov[k])
    return "all"


def _member_name(prov: dict, i: int) -> str:
    pos = prov.get("start", prov.get("index", prov.get("sample", i)))
    return f"{_group_key(prov)}@{pos}"


def even_indices(n: int, count: int) -> list[int]:
    """``count`` evenly spaced positions in ``range(n)``, first and last included."""
    if count < 1 or count > n:
        raise DataError(f"cannot pick {count} windows out of {n}")
    if count == 1:
        return [0]
    return [i * (n - 1) // (count - 1) for i in range(count)]


def spectra_table(corpus: Corpus, count: int) -> str:
    groups: dict[str, list[int]] = {}
    for i, prov in enumerate(corpus.provenance):
        groups.setdefault(_group_key(prov), []).append(i)
    picks = []
    for key in groups:
        members = groups[key]
        picks.extend(members[j] for j in even_indices(len(members), count))
    sets = spectral.channel_sets(corpus.windows[picks])
    header, cols = ["freq"], [spectral.freq_grid(corpus.t)]
    for j, rec in enumerate(picks):
        for c in range(corpus.d):
            header.append(f"{_member_name(corpus.provenance[rec], rec)}:ch{c}")
            cols.append(sets[c].masses[j])
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in np.column_stack(cols):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def cmd_spectra(args) -> int:
    corpus = read_corpus(args.data)
    text = spectra_table(corpus, args.count)
    _atomic_write(Path(args.out), text.encode())
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tsgan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate the compound-sine corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=50000)
    g.add_argument("--t", type=int, default=64)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_gen_data)

    g = sub.add_parser("ingest", help="window a directory of accelerometer CSV runs")
    g.add_argument("--dir", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--window", type=int, default=256)
    g.add_argument("--stride", type=int, default=None)
    g.add_argument("--columns", default="4,5", help="comma-separated channel column indices")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_ingest)

    g = sub.add_parser("train", help="train the GAN")
    g.add_argument("--config", required=True)
    g.add_argument("--data", default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--resume", default=None)
    g.add_argument("--max-steps", type=int, default=None)
    g.set_defaults(fn=cmd_train)

    g = sub.add_parser("synth", help="generate windows from a checkpoint")
    g.add_argument("--ckpt", required=True)
    g.add_argument("--labels", required=True)
    g.add_argument("--n", type=int, default=64)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_synth)

    g = sub.add_parser("eval", help="Wasserstein-Fourier report between two corpora")
    g.add_argument("--real", required=True)
    g.add_argument("--synth", required=True)
    g.add_argument("--report", default=None)
    g.add_argument("--max-pairs", type=int, default=1_000_000)
    g.set_defaults(fn=cmd_eval)

    g = sub.add_parser("spectra", help="export normalized spectra as CSV")
    g.add_argument("--data", required=True)
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_spectra)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigError, spectral.SpectralError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
