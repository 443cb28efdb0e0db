"""Command-line pipeline: parse | build-ipag | compress | link | stats |
embed | train | eval | predict | e2e.

Artifacts are written atomically (temp file + rename) and are stage-tagged;
a subcommand refuses inputs at the wrong stage. Exit codes: 0 success,
1 validation failure, 2 usage error.
"""

from __future__ import annotations

import glob as globmod
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import click

from .calls import caller_sample_ratio, index_call_depths, link_calls
from .compress import (
    CompressRuleset,
    compression_report,
    default_ruleset,
    merge_aggregations,
    merge_sequences,
)
from .embed import (
    CachingEmbedder,
    EmbeddingCache,
    HashEmbedder,
    ServiceEmbedder,
    embed_corpus,
    embedder_info,
    load_embedded,
    save_embedded,
)
from .errors import IpagError
from .frontend import load_ast_interchange, parse_mini_c, save_ast_interchange
from .graph import Stage, build_preliminary, load_corpus, save_corpus, validate_ipag
from .model import (
    NON_VULNERABLE,
    VULNERABLE,
    HagnnConfig,
    HagnnModel,
    evaluate,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)

log = logging.getLogger(__name__)

ENDPOINT_ENV = "IPAG_EMBED_ENDPOINT"


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix="tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_json(path: str, doc) -> None:
    _atomic_write(path, json.dumps(doc, indent=1, sort_keys=True).encode())


def _atomic_save(path: str, saver) -> None:
    """Run saver(tmp_path) then rename into place."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix="tmp-", suffix=".part")
    os.close(fd)
    try:
        saver(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def labels_load(path: str) -> dict[str, str]:
    """routine_name<TAB>0|1 lines -> label map; conflicting duplicates error."""
    labels: dict[str, str] = {}
    first_line: dict[str, tuple[int, str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise IpagError(
                    f"{path}:{lineno}: expected 'routine<TAB>0|1', got {line!r}"
                )
            name, flag = parts
            label = VULNERABLE if flag == "1" else NON_VULNERABLE
            if name in labels and labels[name] != label:
                prev = first_line[name][0]
                raise IpagError(
                    f"conflicting labels for {name!r}: line {prev} says "
                    f"{first_line[name][1]}, line {lineno} says {flag}"
                )
            labels[name] = label
            first_line.setdefault(name, (lineno, flag))
    return labels


def _map_jobs(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _make_embedder(mode: str, endpoint: str | None, width: int, strict: bool, seed: int,
                   cache_path: str | None = None):
    if mode == "service":
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise click.UsageError(
                f"--embed-mode service needs --embed-endpoint or ${ENDPOINT_ENV}"
            )
        embedder = ServiceEmbedder(endpoint, width=width, strict=strict, fallback_seed=seed)
    else:
        embedder = HashEmbedder(width=width, seed=seed)
    if cache_path:
        embedder = CachingEmbedder(embedder, EmbeddingCache(cache_path))
    return embedder


class _Fail(click.ClickException):
    exit_code = 1


def _wrap(fn):
    """Translate IpagError into exit code 1 with the message on stderr."""

    def run(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except IpagError as exc:
            raise _Fail(str(exc)) from exc

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@click.group()
@click.option("--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """Build, compress, link, embed, and classify inter-procedural graphs."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@main.command("parse")
@click.argument("sources", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--jobs", default=1, show_default=True)
@_wrap
def cmd_parse(sources, output, jobs):
    """Parse mini-C files into one AST interchange corpus."""

    def parse_file(path):
        with open(path, encoding="utf-8") as fh:
            return parse_mini_c(fh.read())

    asts = [a for group in _map_jobs(parse_file, list(sources), jobs) for a in group]
    _atomic_save(output, lambda tmp: save_ast_interchange(asts, tmp))
    click.echo(f"parsed {len(asts)} routines -> {output}")


@main.command("build-ipag")
@click.argument("sources", nargs=-1, type=click.Path(exists=True))
@click.option("--ast-in", type=click.Path(exists=True), help="AST interchange file to ingest instead of parsing.")
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--stage", default="preliminary", type=click.Choice(["preliminary"]), show_default=True)
@click.option("--jobs", default=1, show_default=True)
@_wrap
def cmd_build(sources, ast_in, output, stage, jobs):
    """Build preliminary graphs from sources or an interchange file."""
    if ast_in:
        asts = load_ast_interchange(ast_in).asts
    elif sources:
        asts = []
        for path in sources:
            with open(path, encoding="utf-8") as fh:
                asts.extend(parse_mini_c(fh.read()))
    else:
        raise click.UsageError("give SOURCES or --ast-in")
    graphs = _map_jobs(build_preliminary, asts, jobs)
    for g in graphs:
        problems = validate_ipag(g)
        if problems:
            raise IpagError(f"{g.origin}: " + "; ".join(map(str, problems)))
    _atomic_save(output, lambda tmp: save_corpus(graphs, tmp))
    click.echo(f"built {len(graphs)} preliminary graphs -> {output}")


@main.command("compress")
@click.option("-i", "--input", "input_", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--rules", type=click.Path(exists=True), help="Compression ruleset JSON (defaults to the built-in table).")
@click.option("--jobs", default=1, show_default=True)
@_wrap
def cmd_compress(input_, output, rules, jobs):
    """Merge sequences then aggregations on a preliminary corpus."""
    graphs = load_corpus(input_, expect_stage=Stage.PRELIMINARY)
    ruleset = CompressRuleset.load(rules) if rules else default_ruleset()
    reduced = _map_jobs(
        lambda g: merge_aggregations(merge_sequences(g), ruleset), graphs, jobs
    )
    _atomic_save(output, lambda tmp: save_corpus(reduced, tmp))
    click.echo(f"compressed {len(reduced)} graphs -> {output}")


@main.command("link")
@click.option("-i", "--input", "input_", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--max-call-depth", default=8, show_default=True)
@_wrap
def cmd_link(input_, output, max_call_depth):
    """Splice traceable callees to produce complete graphs."""
    graphs = load_corpus(input_, expect_stage=Stage.AGGREGATION_REDUCED)
    index = index_call_depths(graphs, max_call_depth=max_call_depth)
    linked = link_calls(graphs, index)
    _atomic_save(output, lambda tmp: save_corpus(linked, tmp))
    ratio = caller_sample_ratio(index, graphs)
    click.echo(f"linked {len(linked)} graphs -> {output}")
    click.echo(f"caller sample ratio: {ratio:.2%}")


@main.command("stats")
@click.option("--before", required=True, type=click.Path(exists=True))
@click.option("--after", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), help="Also write the report as JSON.")
@_wrap
def cmd_stats(before, after, output):
    """Compression ratios between two corpus files."""
    report = compression_report(load_corpus(before), load_corpus(after))
    click.echo(f"{'':14}{'before':>12}{'after':>12}{'reduction':>12}")
    click.echo(
        f"{'nodes':14}{report.nodes_before:>12}{report.nodes_after:>12}"
        f"{report.node_ratio:>11.1%}"
    )
    click.echo(
        f"{'edges':14}{report.edges_before:>12}{report.edges_after:>12}"
        f"{report.edge_ratio:>11.1%}"
    )
    if output:
        _atomic_write_json(output, report.as_dict())


_embed_options = [
    click.option("--embed-mode", default="hash", type=click.Choice(["hash", "service"]), show_default=True),
    click.option("--embed-endpoint", default=None, help=f"Service URL (default ${ENDPOINT_ENV})."),
    click.option("--strict-embed", is_flag=True, help="Fail instead of falling back to hash mode."),
    click.option("--width", default=768, show_default=True, help="Text embedding width d_t."),
    click.option("--seed", default=0, show_default=True),
]


def _with_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return wrap


@main.command("embed")
@click.option("-i", "--input", "input_", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--labels", type=click.Path(exists=True))
@click.option("--cache", type=click.Path(), help="Embedding cache file (npz).")
@_with_options(_embed_options)
@_wrap
def cmd_embed(input_, output, labels, cache, embed_mode, embed_endpoint, strict_embed, width, seed):
    """Embed a complete corpus into numeric features."""
    graphs = load_corpus(input_, expect_stage=Stage.COMPLETE)
    embedder = _make_embedder(embed_mode, embed_endpoint, width, strict_embed, seed, cache)
    label_map = labels_load(labels) if labels else None
    embedded, vocab = embed_corpus(graphs, embedder, labels=label_map)
    if cache:
        embedder.cache.save()
    info = embedder_info(embedder.inner if cache else embedder)
    _atomic_save(output, lambda tmp: save_embedded(embedded, vocab, tmp, info=info))
    click.echo(f"embedded {len(embedded)} graphs (d_t={width}) -> {output}")


_CONFIG_FIELDS = (
    "hidden", "layers", "passer", "learning_rate", "epochs", "batch_size",
    "seed", "max_depth",
)


def _config_from_options(config: str | None = None, **kw) -> HagnnConfig:
    """Flags override values from an optional JSON config file."""
    base: dict = {}
    if config:
        with open(config, encoding="utf-8") as fh:
            base = json.load(fh)
        unknown = set(base) - set(_CONFIG_FIELDS) - {"threshold"}
        if unknown:
            raise IpagError(f"unknown config fields: {sorted(unknown)}")
    values = {}
    for name in _CONFIG_FIELDS:
        if kw.get(name) is not None:
            values[name] = kw[name]
        elif name in base:
            values[name] = base[name]
    return HagnnConfig(**values)


_train_options = [
    click.option("--config", type=click.Path(exists=True),
                 help="JSON file of hyperparameters; flags override it."),
    click.option("--hidden", default=None, type=int, help="[default: 256]"),
    click.option("--layers", default=None, type=int, help="[default: 2]"),
    click.option("--passer", default=None, type=click.Choice(["sage_plus", "sage"])),
    click.option("--learning-rate", default=None, type=float, help="[default: 0.05]"),
    click.option("--epochs", default=None, type=int, help="[default: 50]"),
    click.option("--batch-size", default=None, type=int, help="[default: 16]"),
    click.option("--seed", default=None, type=int, help="[default: 0]"),
    click.option("--max-depth", default=None, type=int, help="[default: 8]"),
]


def _apply_labels(graphs, labels_path):
    """Attach labels and return the labelled subset (callees of labelled
    routines are usually unlabelled; they are embedded but not trained on)."""
    if labels_path:
        label_map = labels_load(labels_path)
        for g in graphs:
            if g.origin in label_map:
                g.label = label_map[g.origin]
    labelled = [g for g in graphs if g.label is not None]
    if len(labelled) < len(graphs):
        skipped = [g.origin for g in graphs if g.label is None]
        log.warning(
            "%d unlabelled routines excluded from training: %s%s",
            len(skipped),
            ", ".join(skipped[:5]),
            "..." if len(skipped) > 5 else "",
        )
    if not labelled:
        raise IpagError("no labelled routines in the corpus")
    return labelled


@main.command("train")
@click.option("-i", "--input", "input_", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--labels", type=click.Path(exists=True))
@_with_options(_train_options)
@_wrap
def cmd_train(input_, output, labels, **kw):
    """Train the classifier on an embedded, labelled corpus."""
    graphs, vocab, info = load_embedded(input_)
    labelled = _apply_labels(graphs, labels)
    config = _config_from_options(**kw)
    model, curve = train(labelled, config, vocab)
    _atomic_save(output, lambda tmp: save_checkpoint(model, tmp, embedder_info=info))
    if curve:
        last = curve[-1]
        click.echo(
            f"trained {len(curve)} epochs; final loss {last['loss']:.4f}, "
            f"train accuracy {last['accuracy']:.1%} -> {output}"
        )


@main.command("eval")
@click.option("-i", "--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--labels", type=click.Path(exists=True))
@click.option("--folds", default=5, show_default=True)
@click.option("-o", "--output", type=click.Path())
@_with_options(_train_options)
@_wrap
def cmd_eval(input_, labels, folds, output, **kw):
    """Stratified k-fold cross-validation with geometric-mean metrics."""
    graphs, vocab, _ = load_embedded(input_)
    labelled = _apply_labels(graphs, labels)
    config = _config_from_options(**kw)
    model = HagnnModel(config, vocab, labelled[0].d_t)
    report = evaluate(model, labelled, folds=folds)
    for f in report.folds:
        shown = {k: (f"{v:.3f}" if v is not None else "absent") for k, v in f.metrics.items()}
        click.echo(f"fold {f.fold}: tp={f.tp} tn={f.tn} fp={f.fp} fn={f.fn} {shown}")
    gm = {k: (f"{v:.3f}" if v is not None else "absent") for k, v in report.geometric.items()}
    click.echo(f"geometric mean: {gm}")
    if output:
        _atomic_write_json(output, report.as_dict())


@main.command("predict")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("-i", "--input", "input_", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path())
@click.option("--embed-mode", default=None, type=click.Choice(["hash", "service"]))
@click.option("--embed-endpoint", default=None)
@click.option("--strict-embed", is_flag=True)
@_wrap
def cmd_predict(model_path, input_, output, embed_mode, embed_endpoint, strict_embed):
    """Score a complete, unlabelled corpus with a trained model."""
    model, embedder_info = load_checkpoint(model_path)
    graphs = load_corpus(input_, expect_stage=Stage.COMPLETE)
    mode = embed_mode or ("service" if embedder_info.get("mode") == "external_service" else "hash")
    embedder = _make_embedder(
        mode,
        embed_endpoint,
        embedder_info.get("width", model.d_t),
        strict_embed,
        embedder_info.get("seed", 0),
    )
    embedded, _ = embed_corpus(graphs, embedder, vocab=model.vocab, strict_vocab=False)
    rows = predict(model, embedded)
    for origin, score, label in rows:
        click.echo(f"{origin}\t{score:.4f}\t{label}")
    if output:
        _atomic_write_json(
            output,
            [{"routine": o, "score": s, "label": l} for o, s, l in rows],
        )


# --- end-to-end -------------------------------------------------------------


@dataclass
class PipelineManifest:
    sources: list[str] = field(default_factory=list)
    ast_in: str | None = None
    labels: str | None = None
    rules: str | None = None
    out_dir: str = "."
    seed: int = 0
    max_call_depth: int = 8
    folds: int = 5
    checkpoints: bool = True
    embed: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str) -> "PipelineManifest":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        manifest = cls(**doc)
        manifest.validate(os.path.dirname(os.path.abspath(path)))
        return manifest

    def validate(self, base: str) -> None:
        def resolve(p):
            return p if os.path.isabs(p) else os.path.join(base, p)

        self.sources = [resolve(p) for p in self.sources]
        expanded = []
        for pattern in self.sources:
            hits = sorted(globmod.glob(pattern))
            if not hits and not os.path.exists(pattern):
                raise IpagError(f"manifest source matches nothing: {pattern}")
            expanded.extend(hits or [pattern])
        self.sources = expanded
        for attr in ("ast_in", "labels", "rules"):
            value = getattr(self, attr)
            if value is not None:
                value = resolve(value)
                setattr(self, attr, value)
                if not os.path.exists(value):
                    raise IpagError(f"manifest {attr} does not exist: {value}")
        self.out_dir = resolve(self.out_dir)
        os.makedirs(self.out_dir, exist_ok=True)
        if not os.access(self.out_dir, os.W_OK):
            raise IpagError(f"output directory not writable: {self.out_dir}")


@main.command("e2e")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@_wrap
def cmd_e2e(manifest):
    """Run the whole pipeline from a manifest and emit a report."""
    m = PipelineManifest.load(manifest)
    out = m.out_dir

    if m.ast_in:
        asts = load_ast_interchange(m.ast_in).asts
    else:
        asts = []
        for path in m.sources:
            with open(path, encoding="utf-8") as fh:
                asts.extend(parse_mini_c(fh.read()))
    preliminary = [build_preliminary(a) for a in asts]
    ruleset = CompressRuleset.load(m.rules) if m.rules else default_ruleset()
    reduced = [merge_aggregations(merge_sequences(g), ruleset) for g in preliminary]
    index = index_call_depths(reduced, max_call_depth=m.max_call_depth)
    linked = link_calls(reduced, index)
    if m.checkpoints:
        _atomic_save(os.path.join(out, "preliminary.ipag.json"),
                     lambda tmp: save_corpus(preliminary, tmp))
        _atomic_save(os.path.join(out, "reduced.ipag.json"),
                     lambda tmp: save_corpus(reduced, tmp))
        _atomic_save(os.path.join(out, "complete.ipag.json"),
                     lambda tmp: save_corpus(linked, tmp))

    report = {
        "routines": {},
        "compression": compression_report(preliminary, reduced).as_dict(),
        "caller_sample_ratio": caller_sample_ratio(index, reduced),
    }
    for pre, red, comp in zip(preliminary, reduced, linked):
        report["routines"][pre.origin] = {
            "preliminary": {
                "tokens": len(pre.tokens),
                "properties": len(pre.properties),
                "declarations": len(pre.declarations),
                **{k: len(pre.edges(k)) for k in ("e_pd", "e_pp", "e_tp", "e_tt", "e_td")},
            },
            "reduced": {
                "nodes": red.node_count(),
                "edges": red.edge_count(),
            },
            "complete": {
                "nodes": comp.node_count(),
                "e_dt": len(comp.e_dt),
            },
        }

    if m.labels:
        width = int(m.embed.get("width", 64))
        embedder = _make_embedder(
            m.embed.get("mode", "hash"),
            m.embed.get("endpoint"),
            width,
            bool(m.embed.get("strict", False)),
            m.seed,
        )
        label_map = labels_load(m.labels)
        embedded, vocab = embed_corpus(linked, embedder, labels=label_map)
        labelled = [g for g in embedded if g.label is not None]
        config = HagnnConfig(**{"seed": m.seed, **m.train})
        model, curve = train(labelled, config, vocab)
        _atomic_save(os.path.join(out, "model.ckpt"), lambda tmp: save_checkpoint(model, tmp))
        eval_report = evaluate(model, labelled, folds=m.folds)
        report["train"] = {"epochs": len(curve), "final": curve[-1] if curve else None}
        report["eval"] = eval_report.as_dict()

    report_path = os.path.join(out, "report.json")
    _atomic_write_json(report_path, report)
    click.echo(f"report -> {report_path}")


if __name__ == "__main__":
    main()
