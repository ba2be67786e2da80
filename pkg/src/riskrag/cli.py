"""`riskrag` command line: ingest, stats, index, generate, evaluate, calibrate, render.

Exit codes: 0 success, 1 usage error, 2 provider failure, 3 data error.
Every successful subcommand writes a run manifest next to its outputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import click

from . import corpus as corpus_mod
from .corpus import dedup_by_risk_text, load_cards, load_incidents
from .errors import DataError, ProviderError, RiskRagError
from .evaluation import (
    EvalConfig,
    calibrate_threshold,
    results_to_csv,
    results_to_json,
    results_to_markdown,
    run_grid,
    select_eval_set,
)
from .generation import prompt_hashes
from .pipeline import generate_report
from .providers import (
    OfflineChatProvider,
    OfflineEmbeddingProvider,
    OpenAIChatProvider,
    OpenAIEmbeddingProvider,
    ProviderConfig,
)
from .report import RiskReport, render
from .retrieval import Retriever, build_retriever, load_index, save_index


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(
    anchor: Path,
    subcommand: str,
    config: dict,
    inputs: dict[str, str | Path],
    outputs: list[Path],
    started_at: str,
    provider_models: dict | None = None,
) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items()},
        "provider_models": provider_models or {},
        "prompt_hashes": prompt_hashes(),
        "started_at": started_at,
        "finished_at": _utcnow(),
        "outputs": [str(p) for p in outputs],
    }
    target = anchor / "manifest.json" if anchor.is_dir() else anchor.with_suffix(anchor.suffix + ".manifest.json")
    _write_atomic(target, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _providers(offline: bool, config: str | None, jobs: int):
    """Resolve (chat, embed) providers; offline forces the deterministic pair."""
    if offline or not config:
        return OfflineChatProvider(), OfflineEmbeddingProvider()
    chat_cfg = ProviderConfig.from_toml(config, "chat")
    embed_cfg = ProviderConfig.from_toml(config, "embeddings")
    if jobs:
        chat_cfg = ProviderConfig(**{**chat_cfg.__dict__, "parallelism": jobs})
        embed_cfg = ProviderConfig(**{**embed_cfg.__dict__, "parallelism": jobs})
    return OpenAIChatProvider(chat_cfg), OpenAIEmbeddingProvider(embed_cfg)


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None, help="Providers TOML file.")
@click.option("--jobs", type=int, default=0, help="Bound on provider parallelism.")
@click.option("--offline", is_flag=True, help="Force deterministic offline providers.")
@click.option("--seed", type=int, default=None, help="Reserved; the offline path is seed-free deterministic.")
@click.pass_context
def cli(ctx, config, jobs, offline, seed):
    """Generate and evaluate retrieval-augmented AI model risk reports."""
    ctx.ensure_object(dict)
    ctx.obj.update(config=config, jobs=jobs, offline=offline, seed=seed)


@cli.command()
@click.option("--cards", "cards_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def ingest(ctx, cards_path, out_path):
    """Parse raw cards JSONL into structured records (sections extracted, deduped)."""
    started = _utcnow()
    records = load_cards(cards_path)
    with_risk = [r for r in records if r.risk_sections]
    dedup = dedup_by_risk_text(with_risk)
    out = Path(out_path)
    lines = [json.dumps(r.to_dict(), sort_keys=True) for r in dedup.retained]
    _write_atomic(out, ("\n".join(lines) + "\n").encode("utf-8") if lines else b"")
    click.echo(
        f"parsed {len(records)} cards, {len(with_risk)} with risk sections, "
        f"{len(dedup.retained)} retained after dedup"
    )
    _write_manifest(out, "ingest", {"cards": str(cards_path)}, {"cards": cards_path}, [out], started)


@cli.command()
@click.option("--cards", "cards_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def stats(ctx, cards_path, out_path):
    """Corpus statistics (counts, duplicate fraction) as JSON on stdout."""
    started = _utcnow()
    total = 0
    with_cards = 0
    for _, obj in corpus_mod._iter_jsonl(cards_path):
        total += 1
        if str(obj.get("card_markdown", "")).strip():
            with_cards += 1
    records = load_cards(cards_path)
    with_risk = [r for r in records if r.risk_sections]
    dedup = dedup_by_risk_text(with_risk)
    stats_obj = corpus_mod.corpus_stats(total, with_cards, len(with_risk), dedup)
    payload = json.dumps(stats_obj.to_dict(), indent=2, sort_keys=True) + "\n"
    click.echo(payload, nl=False)
    if out_path:
        out = Path(out_path)
        _write_atomic(out, payload.encode("utf-8"))
        _write_manifest(out, "stats", {"cards": str(cards_path)}, {"cards": cards_path}, [out], started)


@cli.command()
@click.option("--cards", "cards_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--incidents", "incidents_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", type=click.Choice(["tfidf", "dense"]), default="tfidf")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def index(ctx, cards_path, incidents_path, backend, out_dir):
    """Build and persist card + incident indices plus their payload records."""
    started = _utcnow()
    chat, embed = _providers(ctx.obj["offline"], ctx.obj["config"], ctx.obj["jobs"])
    records = load_cards(cards_path)
    with_risk = [r for r in records if r.risk_sections]
    dedup = dedup_by_risk_text(with_risk)
    incidents = load_incidents(incidents_path)
    retriever = build_retriever(dedup, incidents, backend=backend, embed_provider=embed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_index(retriever.card_index, out / "cards")
    save_index(retriever.incident_index, out / "incidents")
    records_lines = "\n".join(
        json.dumps(c.to_dict(), sort_keys=True) for c in dedup.retained
    )
    _write_atomic(out / "records.jsonl", (records_lines + "\n").encode("utf-8"))
    _write_atomic(out / "incidents.jsonl", Path(incidents_path).read_bytes())
    click.echo(f"indexed {len(dedup.retained)} cards and {len(incidents)} incidents ({backend})")
    _write_manifest(
        out,
        "index",
        {"backend": backend},
        {"cards": cards_path, "incidents": incidents_path},
        [out / "cards", out / "incidents", out / "records.jsonl", out / "incidents.jsonl"],
        started,
        provider_models={"embeddings": getattr(embed, "model", None)},
    )


def _retriever_from_index_dir(index_dir: Path, embed_provider) -> Retriever:
    cards = [
        corpus_mod.ModelCardRecord.from_dict(json.loads(line))
        for line in (index_dir / "records.jsonl").read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    incidents = load_incidents(index_dir / "incidents.jsonl")
    card_index = load_index(index_dir / "cards", embed_provider=embed_provider)
    incident_index = load_index(index_dir / "incidents", embed_provider=embed_provider)
    return Retriever(card_index, incident_index, cards, incidents)


@cli.command()
@click.option("--model-id", default=None, help="Evaluate a corpus card (self-excluded from retrieval).")
@click.option("--description-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Novel model description (no self to exclude).")
@click.option("--index", "index_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--cards", "cards_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--incidents", "incidents_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--backend", type=click.Choice(["tfidf", "dense"]), default="tfidf")
@click.option("--k", type=int, default=10)
@click.option("--providers", "providers_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "markdown", "html"]), default="json")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def generate(ctx, model_id, description_file, index_dir, cards_path, incidents_path,
             backend, k, providers_path, fmt, out_path):
    """Generate a prioritized, use-contextualized risk report."""
    started = _utcnow()
    if (model_id is None) == (description_file is None):
        raise click.UsageError("provide exactly one of --model-id or --description-file")
    offline = ctx.obj["offline"] or not (providers_path or ctx.obj["config"])
    chat, embed = _providers(offline, providers_path or ctx.obj["config"], ctx.obj["jobs"])

    inputs: dict[str, str | Path] = {}
    if index_dir:
        retriever = _retriever_from_index_dir(Path(index_dir), embed)
        inputs["records"] = Path(index_dir) / "records.jsonl"
        inputs["incidents"] = Path(index_dir) / "incidents.jsonl"
        if retriever.backend != backend:
            raise click.UsageError(
                f"index at {index_dir} was built with backend {retriever.backend!r}, not {backend!r}"
            )
    elif cards_path and incidents_path:
        records = load_cards(cards_path)
        dedup = dedup_by_risk_text([r for r in records if r.risk_sections])
        retriever = build_retriever(dedup, load_incidents(incidents_path), backend=backend, embed_provider=embed)
        inputs["cards"] = cards_path
        inputs["incidents"] = incidents_path
    else:
        raise click.UsageError("provide --index or both --cards and --incidents")

    if model_id is not None:
        if model_id not in retriever.cards_by_id:
            raise DataError(f"model id {model_id!r} not present in the corpus")
        description = retriever.cards_by_id[model_id].description
        exclude = model_id
        report_id = model_id
    else:
        description = Path(description_file).read_text(encoding="utf-8").strip()
        inputs["description"] = description_file
        exclude = None
        report_id = Path(description_file).stem

    # Offline runs pin the provenance timestamp to keep reports byte-reproducible.
    report = generate_report(
        retriever,
        description,
        k,
        chat,
        model_id=report_id,
        exclude_id=exclude,
        timestamp=None if offline else started,
    )
    out = Path(out_path)
    _write_atomic(out, render(report, fmt))
    _write_manifest(
        out,
        "generate",
        {"backend": backend, "k": k, "format": fmt, "offline": offline, "model_id": report_id},
        inputs,
        [out],
        started,
        provider_models={"chat": chat.model, "embeddings": getattr(embed, "model", None)},
    )
    click.echo(f"wrote {out}")


@cli.command()
@click.option("--cards", "cards_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--incidents", "incidents_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backends", default="tfidf", help="Comma-separated: tfidf,dense")
@click.option("--k", "k_values", default="5,10,15", help="Comma-separated retrieval depths.")
@click.option("--threshold", type=float, default=0.6)
@click.option("--top-fraction", type=float, default=0.1)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def evaluate(ctx, cards_path, incidents_path, backends, k_values, threshold, top_fraction, out_dir):
    """Run the retriever x k evaluation grid against pseudo ground truth."""
    started = _utcnow()
    chat, embed = _providers(ctx.obj["offline"], ctx.obj["config"], ctx.obj["jobs"])
    records = load_cards(cards_path)
    dedup = dedup_by_risk_text([r for r in records if r.risk_sections])
    incidents = load_incidents(incidents_path)
    eval_cards = select_eval_set(dedup, top_fraction)
    configs = [
        EvalConfig(backend=b.strip(), k=int(k), match_threshold=threshold, top_fraction=top_fraction)
        for b in backends.split(",")
        for k in k_values.split(",")
    ]
    results = run_grid(dedup, incidents, eval_cards, configs, chat, embed_provider=embed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / "results.csv", results_to_csv(results).encode("utf-8"))
    _write_atomic(out / "aggregate.json", results_to_json(results).encode("utf-8"))
    _write_atomic(out / "table.md", results_to_markdown(results).encode("utf-8"))
    click.echo(results_to_markdown(results), nl=False)
    _write_manifest(
        out,
        "evaluate",
        {
            "backends": backends,
            "k": k_values,
            "threshold": threshold,
            "top_fraction": top_fraction,
        },
        {"cards": cards_path, "incidents": incidents_path},
        [out / "results.csv", out / "aggregate.json", out / "table.md"],
        started,
        provider_models={"chat": chat.model, "embeddings": getattr(embed, "model", None)},
    )


@cli.command()
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="CSV with columns text_a,text_b,label (match|no_match).")
@click.pass_context
def calibrate(ctx, labels_path):
    """Replay the threshold calibration sweep on human-labeled risk pairs."""
    pairs = []
    with open(labels_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            for col in ("text_a", "text_b", "label"):
                if col not in row or row[col] is None:
                    raise DataError(f"labels file missing column {col!r}")
            pairs.append((row["text_a"], row["text_b"], row["label"].strip() == "match"))
    if not pairs:
        raise DataError("labels file contains no rows")
    best_t, agreement = calibrate_threshold(pairs)
    click.echo(json.dumps({"threshold": best_t, "agreement": agreement, "pairs": len(pairs)}))


@cli.command("render")
@click.option("--report", "report_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["json", "markdown", "html"]), default="markdown")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def render_cmd(ctx, report_path, fmt, out_path):
    """Re-render a report JSON file to another format."""
    started = _utcnow()
    try:
        report = RiskReport.from_dict(json.loads(Path(report_path).read_text(encoding="utf-8")))
    except (KeyError, ValueError) as e:
        raise DataError(f"invalid report file: {e}") from e
    out = Path(out_path)
    _write_atomic(out, render(report, fmt))
    _write_manifest(out, "render", {"format": fmt}, {"report": report_path}, [out], started)
    click.echo(f"wrote {out}")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False, obj={})
        return 0
    except click.exceptions.Exit as e:
        return 0 if e.exit_code == 0 else 1
    except (click.UsageError, click.BadParameter) as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return 1
    except ProviderError as e:
        click.echo(f"provider error: {e}", err=True)
        return 2
    except (DataError, RiskRagError, OSError) as e:
        click.echo(f"data error: {e}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
