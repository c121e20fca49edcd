"""Command-line front: index building, interactive/scripted chat, the
HTTP service, evaluation runs, router training, and dataset validation.

Every subcommand takes ``--config``; config values can also be overridden
through ``CHATPIPE_``-prefixed environment variables.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import data as datamod
from . import knowledge, metrics, report, router
from .config import ConfigError
from .core import tokenize
from .generator import UniformLm, ZeroProbabilityError, sequence_logprob
from .pipeline import Engine

__all__ = ["main"]


@click.group()
def main():
    """Conversational pipeline engine."""


def _engine(config_path: str) -> Engine:
    try:
        return Engine.from_config_file(config_path)
    except (ConfigError, OSError, ValueError) as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--corpus", required=True, type=click.Path(), help="JSONL passage corpus.")
@click.option("--out", required=True, type=click.Path(), help="Index file to write.")
@click.option("--k1", default=1.2, show_default=True)
@click.option("--b", default=0.75, show_default=True)
def index(corpus: str, out: str, k1: float, b: float):
    """Build a passage index from a corpus file."""
    if not Path(corpus).exists():
        raise click.ClickException(f"corpus file not found: {corpus}")
    try:
        idx = knowledge.build_index(knowledge.load_corpus(corpus), k1=k1, b=b)
        knowledge.save_index(idx, out)
    except knowledge.CorpusError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"indexed {idx.N} passages -> {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--session", "session_id", default="cli", show_default=True)
def chat(config_path: str, session_id: str):
    """Interactive chat loop; /trace toggles traces, /reset starts over."""
    engine = _engine(config_path)
    show_trace = False
    prompt = "you> " if sys.stdin.isatty() else ""
    click.echo("ready (/trace toggles traces, /reset restarts, ctrl-d exits)")
    while True:
        try:
            line = input(prompt)
        except EOFError:
            break
        line = line.strip()
        if not line:
            continue
        if line == "/trace":
            show_trace = not show_trace
            click.echo(f"trace {'on' if show_trace else 'off'}")
            continue
        if line == "/reset":
            engine.sessions.delete(session_id)
            click.echo("session reset")
            continue
        result = engine.chat(session_id, line)
        click.echo(f"bot> {result.response}")
        if show_trace:
            t = result.trace
            click.echo(
                f"  [turn={result.turn_no} route={t.route} score={t.factual_score:.4f} "
                f"rewritten={t.rewritten_text!r} verdicts={t.verdicts}]"
            )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--ui-dir", default=None, type=click.Path(exists=True, file_okay=False),
              help="Serve a static chat client from this directory at /.")
def serve(config_path: str, host: str, port: int, ui_dir: str | None):
    """Serve the chat API over HTTP."""
    import uvicorn

    from .server import create_app

    engine = _engine(config_path)
    uvicorn.run(create_app(engine, ui_dir=ui_dir), host=host, port=port, log_level="info")


@main.command(name="train-router")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--epochs", default=5, show_default=True)
@click.option("--lr", default=0.1, show_default=True)
@click.option("--dim", default=1 << 18, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option(
    "--from-dialog-dataset",
    is_flag=True,
    help="Treat --data as a dialog dataset and derive labels from is_factual.",
)
def train_router_cmd(
    data_path: str, out: str, epochs: int, lr: float, dim: int, seed: int,
    from_dialog_dataset: bool,
):
    """Train the factual/subjective classifier and write the model file."""
    try:
        if from_dialog_dataset:
            records = datamod.load_dialog_dataset(data_path)
            examples, skipped = datamod.derive_router_training(records)
            if skipped:
                click.echo(f"skipped {skipped} unlabeled records")
        else:
            examples = router.load_training_jsonl(data_path)
        model = router.train_router(examples, epochs=epochs, learning_rate=lr, dim=dim, seed=seed)
        router.save_model(model, out)
    except (ValueError, datamod.DatasetError) as exc:
        raise click.ClickException(str(exc))
    f1 = router.eval_router_f1(model, examples)
    click.echo(f"trained on {len(examples)} examples; training F1 at threshold 0.8: {f1:.4f}")
    click.echo(f"model -> {out}")


@main.command(name="validate-data")
@click.argument("dataset", type=click.Path(exists=True))
@click.option(
    "--profile",
    type=click.Choice([p.value for p in datamod.Profile]),
    required=True,
)
def validate_data(dataset: str, profile: str):
    """Validate a dialog dataset against a schema profile."""
    try:
        records = datamod.load_dialog_dataset(dataset)
        rep = datamod.validate_dataset(records, datamod.Profile(profile))
    except datamod.DatasetError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"{rep.record_count} records checked")
    for v in rep.violations:
        click.echo(f"violation [{v.rule}] {v.locator}: {v.message}")
    if rep.violations:
        sys.exit(1)
    click.echo("dataset is valid")


@main.command(name="eval")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--out", "outdir", required=True, type=click.Path())
@click.option(
    "--metrics",
    "selection",
    default="rouge,f1,em,recall,mrr,ppl",
    show_default=True,
    help="Comma-separated metric selection.",
)
@click.option("--recall-k", default=10, show_default=True)
@click.option(
    "--logprob-source",
    type=click.Choice(["none", "uniform"]),
    default="none",
    show_default=True,
    help="Log-probability source for perplexity.",
)
def eval_cmd(
    config_path: str, dataset: str, outdir: str, selection: str,
    recall_k: int, logprob_source: str,
):
    """Run the pipeline over a dataset and write metric reports."""
    engine = _engine(config_path)
    try:
        records = datamod.load_dialog_dataset(dataset)
    except datamod.DatasetError as exc:
        raise click.ClickException(str(exc))
    if not records:
        raise click.ClickException(f"dataset {dataset} is empty")
    wanted = {m.strip() for m in selection.split(",") if m.strip()}

    conversations: dict[str, list[datamod.DialogTurnRecord]] = {}
    for rec in records:
        conversations.setdefault(rec.conversation_id, []).append(rec)

    url_of = {}
    if engine.index is not None:
        url_of = {p.id: p.url for p in engine.index.passages}

    rouge1s: list[float] = []
    rougels: list[float] = []
    f1s: list[float] = []
    ems: list[float] = []
    judgments: list[metrics.RankJudgment] = []
    ppl_texts: list[str] = []

    for conv_id, turns in conversations.items():
        session = f"eval-{conv_id}"
        engine.sessions.delete(session)
        for rec in sorted(turns, key=lambda t: t.turn_no):
            result = engine.chat(session, rec.question)
            trace = result.trace
            r1, rl = metrics.rouge(trace.rewritten_text, rec.rewrite)
            rouge1s.append(r1)
            rougels.append(rl)
            if rec.answer and trace.span is not None:
                f1s.append(metrics.token_f1(trace.span["text"], rec.answer))
                ems.append(metrics.exact_match(trace.span["text"], rec.answer))
            if rec.answer_url and trace.retrieval:
                ranked = tuple(
                    dict.fromkeys(url_of.get(pid, pid) for pid, _ in trace.retrieval)
                )
                judgments.append(
                    metrics.RankJudgment(ranked=ranked, relevant=frozenset([rec.answer_url]))
                )
            if rec.paraphrase or rec.answer:
                ppl_texts.append(rec.paraphrase or rec.answer)

    computed: dict[str, float] = {}
    skipped: dict[str, str] = {}
    if "rouge" in wanted and rouge1s:
        computed["rouge1"] = sum(rouge1s) / len(rouge1s)
        computed["rougeL"] = sum(rougels) / len(rougels)
    if "f1" in wanted:
        if f1s:
            computed["token_f1"] = sum(f1s) / len(f1s)
        else:
            skipped["token_f1"] = "no factual answers produced against gold answers"
    if "em" in wanted:
        if ems:
            computed["exact_match"] = sum(ems) / len(ems)
        else:
            skipped["exact_match"] = "no factual answers produced against gold answers"
    if "recall" in wanted:
        if judgments:
            computed[f"recall@{recall_k}"] = metrics.recall_at_k(judgments, recall_k)
        else:
            skipped[f"recall@{recall_k}"] = "no retrieval results against gold urls"
    if "mrr" in wanted:
        if judgments:
            computed["mrr"] = metrics.mrr(judgments)
        else:
            skipped["mrr"] = "no retrieval results against gold urls"
    if "ppl" in wanted:
        if logprob_source == "uniform" and ppl_texts:
            vocab = sorted({t for text in ppl_texts for t in tokenize(text)})
            lm = UniformLm(vocab)
            recs = []
            for text in ppl_texts:
                toks = tokenize(text)
                if not toks:
                    continue
                try:
                    logprobs = tuple(
                        sequence_logprob(lm, [tok], prompt=toks[:i])
                        for i, tok in enumerate(toks)
                    )
                except ZeroProbabilityError:
                    continue
                recs.append(metrics.PplRecord(logprobs=logprobs))
            if recs:
                computed["perplexity"] = metrics.perplexity(recs)
            else:
                skipped["perplexity"] = "no scoreable gold responses"
        else:
            skipped["perplexity"] = "no log-probability backend configured"
            click.echo("warning: perplexity requested but no log-probability backend configured", err=True)

    paths = report.write_report(computed, skipped, outdir)
    click.echo(report.format_table(computed, skipped))
    click.echo(f"report -> {paths['json']}")


if __name__ == "__main__":
    main()
