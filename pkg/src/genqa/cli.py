"""Command-line pipeline: synth, ground, split, train, eval, answer, repl.

Data goes to stdout or the named output files; progress and diagnostics go
to stderr (JSON lines with --json-logs). Output files are written to a
temporary sibling and renamed, so a failed run never leaves partial output.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import baselines, config as cfg, evaluate as ev, synth
from .kb import (
    DegenerateSplitError,
    TokenSequence,
    load_grounded,
    load_qa_pairs,
    load_triples,
    grounded_to_json,
    split_triple_keys,
)
from .model import Model
from .search import answer as generate_answer
from .training import CheckpointError, load_checkpoint, load_model, save_model, train
from .vocab import tokenize

log = logging.getLogger("genqa")

GENERATIVE_SYSTEMS = ("genqa", "genqa-cnn", "nrm")
ALL_SYSTEMS = GENERATIVE_SYSTEMS + ("retrieval", "embedding")


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps(
            {"level": record.levelname.lower(), "message": record.getMessage()},
            sort_keys=True,
        )


def _setup_logging(json_logs: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(
        _JsonFormatter() if json_logs else logging.Formatter("%(levelname)s %(message)s")
    )
    root = logging.getLogger("genqa")
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


def _atomic_jsonl(path: Path, rows) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    tmp.replace(path)


def _plain_seq(text: str) -> TokenSequence:
    toks = tokenize(text)
    return TokenSequence(ids=tuple(0 for _ in toks), surfaces=tuple(toks))


@click.group()
@click.option("--json-logs", is_flag=True, help="Emit machine-readable logs on stderr.")
@click.pass_context
def main(ctx, json_logs):
    """Generative question answering over a triple knowledge-base."""
    ctx.ensure_object(dict)
    ctx.obj["json_logs"] = json_logs
    _setup_logging(json_logs)


@main.command("synth")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--entities", type=int, default=None)
@click.option("--noise-rate", type=float, default=None)
@click.option("--pairs-per-triple", type=int, default=None)
def synth_cmd(spec_path, out_dir, seed, entities, noise_rate, pairs_per_triple):
    """Generate a synthetic corpus: triples, QA pairs, and gold grounding."""
    spec = synth.load_spec(spec_path) if spec_path else synth.SyntheticSpec()
    overrides = {
        k: v
        for k, v in {
            "seed": seed,
            "entities": entities,
            "noise_rate": noise_rate,
            "pairs_per_triple": pairs_per_triple,
        }.items()
        if v is not None
    }
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    corpus = synth.generate(spec)
    paths = synth.write_corpus(corpus, out_dir)
    log.info(
        "wrote %d triples, %d QA pairs to %s", len(corpus.triples), len(corpus.qa_pairs), out_dir
    )
    for p in paths.values():
        click.echo(str(p))


@main.command("ground")
@click.option("--kb", "kb_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--qa", "qa_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--cap", type=int, default=256, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
def ground_cmd(kb_path, qa_path, out_path, cap, threads):
    """Attach supporting facts to QA pairs (distant supervision)."""
    try:
        store = load_triples(kb_path)
        pairs = load_qa_pairs(qa_path)
    except ValueError as exc:
        raise _fail(str(exc))

    def ground_one(pair):
        q, a = pair
        return store.ground(_plain_seq(q), _plain_seq(a), cap=cap)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            grounded = list(pool.map(ground_one, pairs))
    else:
        grounded = [ground_one(p) for p in pairs]
    rows = [grounded_to_json(g, store) for g in grounded if g is not None]
    _atomic_jsonl(Path(out_path), rows)
    dropped = len(pairs) - len(rows)
    log.info("grounded %d/%d pairs (%d unmatched) -> %s", len(rows), len(pairs), dropped, out_path)


@main.command("split")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--test-fraction", type=float, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out-train", type=click.Path(dir_okay=False), required=True)
@click.option("--out-test", type=click.Path(dir_okay=False), required=True)
def split_cmd(in_path, test_fraction, seed, out_train, out_test):
    """Partition grounded instances with the triple as the split key."""
    rows = []
    with open(in_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                t = obj["triple"]
                key = (t["subject"], t["predicate"], t["object"])
            except (json.JSONDecodeError, KeyError, TypeError):
                raise _fail(f"{in_path}:{lineno}: not a grounded JSONL row")
            rows.append((key, obj))
    try:
        test_keys = split_triple_keys((k for k, _ in rows), test_fraction, seed)
    except (DegenerateSplitError, ValueError) as exc:
        raise _fail(str(exc))
    _atomic_jsonl(Path(out_train), [obj for k, obj in rows if k not in test_keys])
    _atomic_jsonl(Path(out_test), [obj for k, obj in rows if k in test_keys])
    n_test = sum(1 for k, _ in rows if k in test_keys)
    log.info(
        "split %d instances over %d triples: %d train / %d test",
        len(rows), len({k for k, _ in rows}), len(rows) - n_test, n_test,
    )


@main.command("check-split")
@click.option("--train", "train_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--test", "test_path", type=click.Path(exists=True, dir_okay=False), required=True)
def check_split_cmd(train_path, test_path):
    """Verify that two grounded files share no gold triple."""

    def keys(path):
        out = set()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    t = json.loads(line)["triple"]
                    out.add((t["subject"], t["predicate"], t["object"]))
        return out

    overlap = keys(train_path) & keys(test_path)
    if overlap:
        raise _fail(f"{len(overlap)} triples appear on both sides, e.g. {sorted(overlap)[0]}")
    click.echo("disjoint")


_CONFIG_OVERRIDES = (
    ("--learning-rate", "learning_rate", float),
    ("--l2", "l2", float),
    ("--batch-size", "batch_size", int),
    ("--epochs", "epochs", int),
    ("--seed", "seed", int),
    ("--precision", "precision", str),
    ("--grad-clip", "grad_clip", float),
    ("--enquirer", "enquirer", str),
    ("--hidden-size", "hidden_size", int),
    ("--embed-size", "embed_size", int),
    ("--threads", "threads", int),
    ("--beam-width", "beam_width", int),
)


def _with_config_overrides(fn):
    for flag, key, kind in reversed(_CONFIG_OVERRIDES):
        fn = click.option(flag, key, type=kind, default=None)(fn)
    return fn


def _resolved(config_path, kwargs) -> dict:
    overrides = {key: kwargs.pop(key) for _, key, _ in _CONFIG_OVERRIDES}
    try:
        return cfg.resolve(config_path, overrides=overrides)
    except cfg.ConfigError as exc:
        raise _fail(str(exc))


@main.command("train")
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--kb", "kb_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--checkpoint", "ckpt_path", type=click.Path(dir_okay=False), required=True)
@click.option(
    "--system",
    type=click.Choice(("genqa", "genqa-cnn", "nrm", "embedding")),
    default="genqa",
    show_default=True,
)
@_with_config_overrides
def train_cmd(data_path, kb_path, config_path, ckpt_path, system, **kwargs):
    """Train a system on grounded data and write a checkpoint."""
    values = _resolved(config_path, kwargs)
    if system == "genqa-cnn":
        values["enquirer"] = "cnn"
    elif system == "genqa":
        values["enquirer"] = "bilinear"
    try:
        store = load_triples(kb_path)
        instances = load_grounded(data_path, store)
    except ValueError as exc:
        raise _fail(str(exc))
    if not instances:
        raise _fail(f"{data_path}: no grounded instances")
    json_logs = click.get_current_context().obj.get("json_logs", False)

    if system == "embedding":
        qa = baselines.EmbeddingQA.build(
            _question_vocab_for_embedding(values, store, instances),
            store,
            embed_size=values["embed_size"],
            seed=values["seed"],
        )
        ranking = baselines.RankingConfig(
            margin=values["ranking_margin"],
            negatives=values["ranking_negatives"],
            epochs=values["epochs"],
            learning_rate=values["learning_rate"],
            seed=values["seed"],
        )
        history = baselines.train_embedding_qa(
            qa, instances, ranking, candidate_cap=values["candidate_cap"]
        )
        for epoch, loss in enumerate(history):
            _emit_epoch(json_logs, epoch=epoch, mean_loss=loss)
        baselines.save_embedding_qa(ckpt_path, qa, {"ranking": dataclasses.asdict(ranking)})
        log.info("saved embedding checkpoint -> %s", ckpt_path)
        return

    model = Model.build(
        cfg.model_config(values),
        store,
        instances,
        seed=values["seed"],
        kb_disabled=(system == "nrm"),
    )
    dataset, dropped = model.prepare_dataset(instances)
    if dropped:
        log.info("dropped %d instances whose gold fact left the candidate set", dropped)
    if not dataset:
        raise _fail("no trainable instances after preparation")
    tc = cfg.training_config(values)

    def log_epoch(line: str) -> None:
        # epoch logs are the command's data: stdout
        click.echo(line)

    if json_logs:
        history = train(model, dataset, tc)
        for h in history:
            _emit_epoch(
                True,
                epoch=h.epoch,
                mean_loss=h.mean_loss,
                nll_per_token=h.nll_per_token,
                learning_rate=h.learning_rate,
            )
    else:
        train(model, dataset, tc, log=log_epoch)
    save_model(ckpt_path, model, system=system, training=tc)
    log.info("saved %s checkpoint -> %s", system, ckpt_path)


def _question_vocab_for_embedding(values, store, instances):
    from .vocab import build_vocab

    predicate_tokens = {tok for t in store.triples for tok in tokenize(t.predicate)}
    return build_vocab(
        (list(i.question.surfaces) for i in instances),
        values["question_vocab_size"],
        predicate_tokens,
    )


def _emit_epoch(json_logs: bool, **fields) -> None:
    if json_logs:
        click.echo(json.dumps({"event": "epoch", **fields}, sort_keys=True))
    else:
        click.echo(" ".join(f"{k}={v}" for k, v in fields.items()))


def _load_any_checkpoint(path):
    try:
        _, meta, _ = load_checkpoint(path)
    except (CheckpointError, OSError) as exc:
        raise _fail(str(exc))
    return meta


@main.command("eval")
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--test", "test_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option(
    "--system", "systems", type=click.Choice(ALL_SYSTEMS), multiple=True, required=True
)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), required=True)
@click.option("--threads", type=int, default=1, show_default=True)
def eval_cmd(ckpt_path, test_path, systems, report_path, threads):
    """Evaluate one or more systems from a checkpoint on held-out data."""
    meta = _load_any_checkpoint(ckpt_path)
    kind = meta.get("kind")
    model = qa = None
    results = []
    try:
        if kind == "genqa-model":
            model, _ = load_model(ckpt_path)
            store = model.store
        elif kind == "embedding-qa":
            qa, _ = baselines.load_embedding_qa(ckpt_path)
            store = qa.store
        else:
            raise _fail(f"{ckpt_path}: unsupported checkpoint kind {kind!r}")
        instances = load_grounded(test_path, store)
    except (ValueError, CheckpointError) as exc:
        raise _fail(str(exc))
    if not instances:
        raise _fail(f"{test_path}: no test instances")
    for system in systems:
        results.append(
            _evaluate_one(system, kind, meta, model, qa, store, instances, threads)
        )
        log.info("%s accuracy: %.3f", system, results[-1].accuracy)
    report = ev.EvalReport(systems=results)
    paths = ev.write_report(report, report_path)
    log.info("report written -> %s", ", ".join(str(p) for p in paths.values()))
    click.echo(ev.report_table(report), nl=False)


def _evaluate_one(system, kind, meta, model, qa, store, instances, threads):
    if system == "retrieval":
        index = baselines.TfidfIndex(store)
        return ev.evaluate_fact_system(
            system,
            lambda inst: baselines.retrieval_answer(index, inst.question),
            store.triples,
            instances,
        )
    if system == "embedding":
        if kind != "embedding-qa":
            raise _fail("--system embedding needs a checkpoint trained with --system embedding")
        return ev.evaluate_fact_system(
            system,
            lambda inst: baselines.embedding_answer(
                qa, qa.question_vocab.encode(inst.question.surfaces)
            ),
            store.triples,
            instances,
        )
    if kind != "genqa-model":
        raise _fail(f"--system {system} needs a generative model checkpoint")
    trained_as = meta.get("system")
    if system == "nrm":
        use = baselines.nrm_mode(model)
    elif system == trained_as and not model.kb_disabled:
        use = model
    else:
        raise _fail(
            f"checkpoint was trained as {trained_as!r}; evaluate it as that system or as nrm/retrieval"
        )
    return ev.evaluate_generative(system, use, instances, threads=threads)


@main.command("answer")
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--question", required=True)
@click.option("--beam-width", type=int, default=None)
@click.option("--max-len", type=int, default=None)
def answer_cmd(ckpt_path, question, beam_width, max_len):
    """Answer one question; prints the result as JSON on stdout."""
    try:
        model, _ = load_model(ckpt_path)
        result = generate_answer(model, question, beam_width=beam_width, max_len=max_len)
    except (CheckpointError, ValueError) as exc:
        raise _fail(str(exc))
    click.echo(json.dumps(result.to_json(), sort_keys=True))


@main.command("repl")
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--beam-width", type=int, default=None)
def repl_cmd(ckpt_path, beam_width):
    """Interactive loop: read a question per line; :quit exits."""
    try:
        model, _ = load_model(ckpt_path)
    except CheckpointError as exc:
        raise _fail(str(exc))
    prompt = sys.stderr.isatty()
    while True:
        if prompt:
            sys.stderr.write("> ")
            sys.stderr.flush()
        line = sys.stdin.readline()
        if not line or line.strip() == ":quit":
            break
        question = line.strip()
        if not question:
            continue
        try:
            result = generate_answer(model, question, beam_width=beam_width)
        except ValueError as exc:
            click.echo(f"error: {exc}")
            continue
        click.echo(result.answer)
        for use in result.kb_words:
            click.echo(f"  [kb] {use.word} <- ({use.subject}, {use.predicate})")
        if result.ungrounded:
            click.echo("  [ungrounded: no matching facts]")
        elif result.relevance:
            top = sorted(result.relevance, key=lambda p: -p[1])[:3]
            shown = ", ".join(
                f"({t.subject}, {t.predicate}, {t.object})={p:.3f}" for t, p in top
            )
            click.echo(f"  relevance: {shown}")


if __name__ == "__main__":
    main()
