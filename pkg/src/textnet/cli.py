"""Command-line surface: prepare -> train -> evaluate -> post-train-unseen
-> classify -> export.

Exit codes: 0 success, 2 usage/input error, 3 numerical failure. Heavy
imports happen after --threads is applied so the BLAS pool size takes
effect.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

log = logging.getLogger("textnet")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path: str, payload: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def _require(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_prepare(args) -> int:
    from . import corpus

    graph = corpus.load_graph(_require(args.edges, "edge file"),
                              _require(args.texts, "text file"),
                              _require(args.labels, "label file")
                              if args.labels else None)
    vocab = corpus.build_vocab(graph, args.min_count)
    if args.split_mode == "nodes":
        split = corpus.split_nodes_unseen(graph, args.ratio, args.seed)
    else:
        split = corpus.split_edges(graph, args.ratio, args.seed)
    os.makedirs(args.out, exist_ok=True)
    corpus.save_graph(graph, args.out)
    corpus.save_vocab(vocab, os.path.join(args.out, "vocab.txt"))
    corpus.save_split(split, os.path.join(args.out, "split.json"))
    manifest = {
        "inputs": {os.path.basename(p): _sha256(p)
                   for p in (args.edges, args.texts, args.labels) if p},
        "tokenizer": "lowercase, split on non-alphanumeric runs",
        "seed": args.seed,
        "ratio": args.ratio,
        "split_mode": args.split_mode,
        "min_count": args.min_count,
        "node_count": graph.node_count,
        "edge_count": int(len(graph.edges)),
        "vocab_size": vocab.size,
        "self_loops_dropped": graph.self_loops_dropped,
        "duplicates_dropped": graph.duplicates_dropped,
    }
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    log.info("prepared %d nodes, %d edges, vocab %d -> %s",
             graph.node_count, len(graph.edges), vocab.size, args.out)
    return 0


def _load_prepared(prepared: str):
    from . import corpus
    _require(os.path.join(prepared, "nodes.tsv"), "prepared graph")
    graph = corpus.load_saved_graph(prepared)
    vocab = corpus.load_vocab(_require(os.path.join(prepared, "vocab.txt"),
                                       "vocabulary"))
    split = corpus.load_split(_require(os.path.join(prepared, "split.json"),
                                       "split manifest"), graph)
    return graph, vocab, split


def _export_embeddings(run_dir: str, embeddings, node_ids) -> None:
    import numpy as np
    from .numerics import write_matrix

    write_matrix(os.path.join(run_dir, "embeddings.mat"), embeddings)
    with open(os.path.join(run_dir, "embeddings.txt"), "w", encoding="utf-8") as f:
        f.write(f"{embeddings.shape[0]} {embeddings.shape[1]}\n")
        for i, raw in enumerate(node_ids):
            vals = " ".join(np.format_float_scientific(v, precision=17)
                            for v in embeddings[i])
            f.write(f"{raw} {vals}\n")


def cmd_train(args) -> int:
    import shutil

    from . import corpus, trainer
    from .config import TrainConfig, apply_overrides
    from .numerics import RngFactory

    graph, vocab, split = _load_prepared(args.prepared)
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = list(args.set or [])
    if args.mode:
        overrides.append(f"mode={args.mode}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = apply_overrides(cfg, overrides)
    cfg = cfg.resolved(split.ratio)

    os.makedirs(args.out, exist_ok=True)
    ckpt_dir = os.path.join(args.out, "checkpoint")
    t0 = time.time()
    if args.resume and os.path.exists(os.path.join(ckpt_dir, "state.json")):
        params, rngs, start_epoch, history, cfg, best = \
            trainer.load_checkpoint(ckpt_dir)
        # overrides still apply so a finished run can be extended (epochs=N)
        cfg = apply_overrides(cfg, overrides)
        ctx = trainer.TrainContext.build(graph, vocab, split, cfg,
                                         RngFactory(cfg.seed))
        log.info("resuming from epoch %d", start_epoch)
    else:
        rngs = RngFactory(cfg.seed)
        ctx = trainer.TrainContext.build(graph, vocab, split, cfg, rngs)
        params = trainer.ModelParams.init(graph.node_count, vocab.size,
                                          cfg.dim, rngs.stream("init"))
        start_epoch, history, best = 0, [], None
        if cfg.adversarial and cfg.pretrain_epochs > 0:
            pre = trainer.pretrain_generator(ctx, params, cfg, rngs)
            log.info("pretrain loss %.4f -> %.4f", pre[0], pre[-1])

    result = trainer.train(ctx, params, cfg, rngs, checkpoint_dir=ckpt_dir,
                           start_epoch=start_epoch, history=history, best=best)
    train_seconds = time.time() - t0

    t0 = time.time()
    embeddings = trainer.aggregate_embeddings(ctx.text, params, cfg, rngs,
                                              active=ctx.active,
                                              nodes=ctx.active,
                                              degree_cdf=ctx.degree_cdf)
    _export_embeddings(args.out, embeddings, graph.node_ids)
    shutil.copy(os.path.join(args.prepared, "nodes.tsv"),
                os.path.join(args.out, "nodes.tsv"))
    cfg.to_file(os.path.join(args.out, "config.resolved.txt"))

    from .report import write_loss_curves
    write_loss_curves(os.path.join(args.out, "loss_curves"), result.history)
    manifest = {
        "command": "train",
        "prepared": {name: _sha256(os.path.join(args.prepared, name))
                     for name in ("edges.tsv", "texts.tsv", "vocab.txt",
                                  "split.json")},
        "config": cfg.to_mapping(),
        "seed": cfg.seed,
        "best_epoch": result.best_epoch,
        "best_val_auc": result.best_val_auc,
        "artifacts": {"embeddings.mat":
                      _sha256(os.path.join(args.out, "embeddings.mat"))},
        "timings": {"train_s": round(train_seconds, 3),
                    "aggregate_s": round(time.time() - t0, 3)},
    }
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    log.info("trained %s in %.1fs (best epoch %d, val AUC %.4f)",
             cfg.mode, train_seconds, result.best_epoch, result.best_val_auc)
    return 0


def cmd_eval_link(args) -> int:
    from . import evaluation
    from .numerics import RngFactory, read_matrix
    from .report import write_link_report

    graph, _, split = _load_prepared(args.prepared)
    if len(split.test_edges) == 0:
        raise ValueError("test set is empty (100% training split); "
                         "nothing to evaluate")
    Z = read_matrix(_require(os.path.join(args.run, "embeddings.mat"),
                             "trained embeddings"))
    edge_set = {(int(u), int(v)) for u, v in graph.edges}
    mode = _run_mode(args.run)
    report = evaluation.link_prediction_eval(
        Z, split.test_edges, edge_set, graph.node_count,
        RngFactory(args.seed), repetitions=args.repetitions,
        ratio=split.ratio, mode=mode)
    os.makedirs(args.out, exist_ok=True)
    write_link_report(os.path.join(args.out, "link_report"), report)
    from .report import format_table
    print(format_table("link prediction AUC", ["ratio", "mean", "std"],
                       [[mode, report.ratio, report.mean * 100,
                         report.std * 100]]))
    log.info("AUC mean %.4f std %.4f over %d repetitions",
             report.mean, report.std, report.repetitions)
    return 0


def _run_mode(run_dir: str) -> str:
    path = os.path.join(run_dir, "config.resolved.txt")
    if os.path.exists(path):
        from .config import TrainConfig
        return TrainConfig.from_file(path).mode
    return ""


def cmd_posttrain_unseen(args) -> int:
    from . import corpus, inductive, trainer
    from .config import TrainConfig
    from .numerics import RngFactory, write_matrix

    graph, vocab, split = _load_prepared(args.prepared)
    if not isinstance(split, corpus.NodeSplit):
        raise ValueError("posttrain-unseen needs a prepared directory with "
                         "--split-mode nodes")
    cfg = TrainConfig.from_file(_require(
        os.path.join(args.run, "config.resolved.txt"), "resolved config"))
    params, _, _, _, _, _ = trainer.load_checkpoint(
        _require(os.path.join(args.run, "checkpoint"), "training checkpoint"))
    rngs = RngFactory(cfg.seed if args.seed is None else args.seed)
    ctx = trainer.TrainContext.build(graph, vocab, split, cfg, rngs)

    t0 = time.time()
    mapper, mapper_loss = inductive.fit_mapper(split.seen, params.struct,
                                               params.words, ctx.text, cfg, rngs)
    state = inductive.init_unseen_state(split.unseen, params.struct,
                                        params.words, ctx.text, mapper,
                                        ctx.degree_cdf, cfg.lambda_reg)
    inductive.posttrain_unseen(state, ctx.text, cfg, rngs)

    os.makedirs(args.out, exist_ok=True)
    combined = trainer.ModelParams(state.struct, params.words,
                                   params.adam_struct, params.adam_words)
    embeddings = trainer.aggregate_embeddings(ctx.text, combined, cfg, rngs,
                                              struct=state.struct,
                                              degree_cdf=ctx.degree_cdf)
    _export_embeddings(args.out, embeddings, graph.node_ids)
    write_matrix(os.path.join(args.out, "struct_combined.mat"), state.struct)
    d = cfg.dim
    write_matrix(os.path.join(args.out, "mapper_conv.mat"),
                 mapper.conv.reshape(d, -1))
    write_matrix(os.path.join(args.out, "mapper_bias.mat"),
                 mapper.bias.reshape(1, -1))
    write_matrix(os.path.join(args.out, "mapper_proj1.mat"), mapper.proj1)
    write_matrix(os.path.join(args.out, "mapper_proj2.mat"), mapper.proj2)
    cfg.to_file(os.path.join(args.out, "config.resolved.txt"))
    _write_json(os.path.join(args.out, "mapper_manifest.json"), {
        "tensors": {
            "mapper_conv.mat": {"shape": [d, cfg.mapper_window, d],
                                "stored_as": [d, cfg.mapper_window * d]},
            "mapper_bias.mat": {"shape": [d]},
            "mapper_proj1.mat": {"shape": [d, d]},
            "mapper_proj2.mat": {"shape": [d, d]},
        },
        "window": cfg.mapper_window,
        "mapper_final_loss": mapper_loss[-1],
    })
    _write_json(os.path.join(args.out, "manifest.json"), {
        "command": "posttrain-unseen",
        "seed": rngs.seed,
        "unseen_count": int(len(split.unseen)),
        "timings": {"posttrain_s": round(time.time() - t0, 3)},
        "artifacts": {"embeddings.mat":
                      _sha256(os.path.join(args.out, "embeddings.mat"))},
    })
    log.info("post-trained %d unseen nodes", len(split.unseen))
    return 0


def cmd_eval_classify(args) -> int:
    from . import evaluation
    from .numerics import RngFactory, read_matrix
    from .report import write_classify_report

    graph, _, _ = _load_prepared(args.prepared)
    if graph.labels is None:
        raise ValueError("prepared dataset has no labels")
    Z = read_matrix(_require(os.path.join(args.run, "embeddings.mat"),
                             "trained embeddings"))
    report = evaluation.classify_nodes(Z, graph.labels, args.labeled_ratio,
                                       RngFactory(args.seed),
                                       repetitions=args.repetitions)
    os.makedirs(args.out, exist_ok=True)
    write_classify_report(os.path.join(args.out, "classify_report"), report)
    from .report import format_table
    print(format_table("node classification macro-F1",
                       ["labeled %", "mean", "std"],
                       [["run", report.labeled_ratio, report.mean * 100,
                         report.std * 100]]))
    return 0


def cmd_export(args) -> int:
    from .numerics import read_matrix, write_matrix

    Z = read_matrix(_require(os.path.join(args.run, "embeddings.mat"),
                             "trained embeddings"))
    node_ids = []
    with open(_require(os.path.join(args.run, "nodes.tsv"),
                       "node id table"), encoding="utf-8") as f:
        for line in f:
            node_ids.append(line.rstrip("\n").split("\t", 1)[1])
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    write_matrix(args.out + ".mat", Z)
    import numpy as np
    with open(args.out + ".txt", "w", encoding="utf-8") as f:
        f.write(f"{Z.shape[0]} {Z.shape[1]}\n")
        for i, raw in enumerate(node_ids):
            vals = " ".join(np.format_float_scientific(v, precision=17)
                            for v in Z[i])
            f.write(f"{raw} {vals}\n")
    log.info("exported %s.txt and %s.mat", args.out, args.out)
    return 0


def read_text_embeddings(path: str):
    """Parse the text export format back into (node_ids, matrix)."""
    import numpy as np
    with open(path, encoding="utf-8") as f:
        n, dim = map(int, f.readline().split())
        ids, rows = [], []
        for line in f:
            parts = line.rstrip("\n").split(" ")
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    mat = np.array(rows, dtype=np.float64)
    if mat.shape != (n, dim):
        raise ValueError(f"{path}: header says {(n, dim)}, data is {mat.shape}")
    return ids, mat


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="textnet",
        description="Adversarial context-aware embeddings for textual networks")
    p.add_argument("--threads", type=int, default=0,
                   help="BLAS thread cap (default: leave library defaults)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prepare", help="ingest raw files and write artifacts")
    sp.add_argument("--edges", required=True)
    sp.add_argument("--texts", required=True)
    sp.add_argument("--labels")
    sp.add_argument("--out", required=True)
    sp.add_argument("--ratio", type=float, default=55.0)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--split-mode", choices=("edges", "nodes"), default="edges")
    sp.add_argument("--min-count", type=int, default=1)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="train embeddings on prepared artifacts")
    sp.add_argument("--prepared", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--config")
    sp.add_argument("--mode")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--resume", action="store_true")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="config override (repeatable; flags win over file)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval-link", help="link prediction AUC report")
    sp.add_argument("--prepared", required=True)
    sp.add_argument("--run", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--repetitions", type=int, default=10)
    sp.add_argument("--seed", type=int, default=1)
    sp.set_defaults(func=cmd_eval_link)

    sp = sub.add_parser("posttrain-unseen",
                        help="learn unseen-node embeddings from a trained run")
    sp.add_argument("--prepared", required=True)
    sp.add_argument("--run", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_posttrain_unseen)

    sp = sub.add_parser("eval-classify", help="node classification report")
    sp.add_argument("--prepared", required=True)
    sp.add_argument("--run", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--labeled-ratio", type=float, default=50.0)
    sp.add_argument("--repetitions", type=int, default=10)
    sp.add_argument("--seed", type=int, default=1)
    sp.set_defaults(func=cmd_eval_classify)

    sp = sub.add_parser("export", help="write text + binary embedding exports")
    sp.add_argument("--run", required=True)
    sp.add_argument("--out", required=True,
                    help="output path prefix (.txt and .mat are appended)")
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        from .numerics import NonFiniteError
        if isinstance(exc, NonFiniteError):
            log.error("numerical failure: %s", exc)
            return 3
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
