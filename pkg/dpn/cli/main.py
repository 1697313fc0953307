import logging
from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from dpn.config.loader import build_run_config
from dpn.config.schema import DecodeConfig, ModelConfig
from dpn.config.settings import settings
from dpn.errors import ConfigError, DPNError

app = typer.Typer(
    name="dpn",
    help="DPN-S2S: double path networks for sequence to sequence learning",
    no_args_is_help=True,
    add_completion=False,
)
console = Console()
logger = logging.getLogger("dpn")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
METRICS = ("bleu", "rouge1", "rouge2", "rougeL")


def setup_logging(level: Optional[str] = None):
    root = logging.getLogger()
    if not any(isinstance(h, RichHandler) for h in root.handlers):
        root.addHandler(RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False))
    root.setLevel((level or settings.log_level).upper())


def _fail(error: Exception) -> typer.Exit:
    if isinstance(error, ConfigError):
        console.print(f"[red]Configuration error:[/red] {error}")
        return typer.Exit(EXIT_USAGE)
    console.print(f"[red]Error:[/red] {error}")
    return typer.Exit(EXIT_RUNTIME)


@app.callback(invoke_without_command=True)
def main(
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Override DPN_LOG_LEVEL"),
    version: bool = typer.Option(False, "--version", help="Print the version and exit"),
):
    if version:
        console.print(f"{settings.app_name} {settings.app_version}")
        raise typer.Exit(EXIT_OK)
    setup_logging(log_level)


@app.command("train")
def cmd_train(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Sectioned key=value run config"),
    preset: Optional[str] = typer.Option(None, help="Named preset (tiny, iwslt, nist, gigaword, ...)"),
    ablation: Optional[str] = typer.Option(None, help="Path grid id M1..M9"),
    task: Optional[str] = typer.Option(None, help="Synthetic task: copy, reverse or sort"),
    name: Optional[str] = typer.Option(None, help="Run name (directory under runs_dir)"),
    overrides: List[str] = typer.Option([], "--set", help="section.key=value override, repeatable"),
    runs_dir: Optional[str] = typer.Option(None, help="Override DPN_RUNS_DIR"),
    resume: bool = typer.Option(False, help="Continue from the run's last checkpoint"),
):
    """Train a model; writes config.json, checkpoints/ and train.log.jsonl to the run directory."""
    from dpn.data.dataset import prepare_corpus
    from dpn.storage.checkpoint import CheckpointStore
    from dpn.storage.run_dir import JsonlLog, RunDirectory
    from dpn.training.trainer import evaluate_loss, restore, train_loop

    try:
        run_config = build_run_config(str(config) if config else None, overrides, preset, ablation, task, name)
        corpus = prepare_corpus(run_config)
    except (DPNError, OSError) as e:
        raise _fail(e)

    run_dir = RunDirectory(run_config.name, runs_dir)
    store = CheckpointStore(run_dir.checkpoints)
    try:
        state = None
        if resume:
            checkpoint = store.latest()
            if checkpoint is None:
                raise ConfigError(f"--resume given but no checkpoint exists under {run_dir.checkpoints}")
            state, saved_config, _, _ = restore(checkpoint)
            if saved_config.model != run_config.model:
                raise ConfigError("Resumed checkpoint was trained with a different model config")
        run_dir.create(run_config)
        state = train_loop(
            run_config,
            corpus.train,
            corpus.valid,
            state=state,
            store=store,
            log=JsonlLog(run_dir.log_path),
            vocab_src=corpus.vocab_src,
            vocab_tgt=corpus.vocab_tgt,
        )
    except (DPNError, OSError) as e:
        raise _fail(e)

    if corpus.valid:
        loss, acc = evaluate_loss(state.params, corpus.valid, run_config.train.max_tokens)
        console.print(f"valid loss {loss:.4f}  token accuracy {acc:.4f}")
    console.print(f"Run directory: {run_dir.root}  (steps: {state.step}, epochs: {state.epoch})")


@app.command("decode")
def cmd_decode(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint file"),
    input_path: Path = typer.Option(..., "--input", "-i", help="Source sentences, one per line"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Output file (default: stdout)"),
    beam: Optional[int] = typer.Option(None, help="Beam size (default from the checkpoint config)"),
    min_len: Optional[int] = typer.Option(None, "--min-len", help="Minimum output length in tokens"),
    max_len: Optional[int] = typer.Option(None, "--max-len", help="Maximum output length in tokens"),
    alpha: Optional[float] = typer.Option(None, help="Length normalization exponent"),
    greedy: bool = typer.Option(False, help="Argmax decoding instead of beam search"),
    scores: Optional[Path] = typer.Option(None, help="Side file of per-sentence log-probabilities"),
):
    """Translate every line of --input with beam search (or greedy decoding)."""
    from dpn.inference.beam import decode_sentences
    from dpn.storage.checkpoint import load_checkpoint
    from dpn.training.trainer import load_model

    try:
        params, run_config, vocab_src, vocab_tgt = load_model(load_checkpoint(checkpoint))
        if vocab_src is None or vocab_tgt is None:
            raise ConfigError(f"Checkpoint {checkpoint} carries no vocabularies")
        updates = {k: v for k, v in (("beam", beam), ("min_len", min_len), ("max_len", max_len), ("alpha", alpha)) if v is not None}
        decode_config = DecodeConfig.model_validate({**run_config.decode.model_dump(), **updates})
        lines = input_path.read_text(encoding="utf-8").splitlines()
        sources = [vocab_src.encode(line) for line in lines]
        hyps = decode_sentences(params, sources, decode_config, greedy=greedy)
    except ValueError as e:
        if not isinstance(e, DPNError):
            e = ConfigError(str(e))
        raise _fail(e)
    except (DPNError, OSError) as e:
        raise _fail(e)

    texts = ["" if h is None else vocab_tgt.decode(h.output()) for h in hyps]
    body = "".join(t + "\n" for t in texts)
    if output:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(body, encoding="utf-8")
        logger.info(f"Wrote {len(texts)} translations to {output}")
    else:
        typer.echo(body, nl=False)
    if scores:
        scores.write_text("".join(f"{'' if h is None else repr(h.log_prob)}\n" for h in hyps), encoding="utf-8")


@app.command("evaluate")
def cmd_evaluate(
    hyp: Path = typer.Option(..., "--hyp", help="Hypothesis file"),
    ref: Path = typer.Option(..., "--ref", help="Reference file"),
    metric: str = typer.Option("bleu", help="bleu, rouge1, rouge2 or rougeL"),
):
    """Score line-aligned hypothesis/reference files."""
    from dpn.evaluation.metrics import bleu, rouge

    if metric not in METRICS:
        raise _fail(ConfigError(f"Unknown metric: {metric}. Use one of {', '.join(METRICS)}"))
    try:
        hyps = hyp.read_text(encoding="utf-8").splitlines()
        refs = ref.read_text(encoding="utf-8").splitlines()
        score = bleu(hyps, refs) if metric == "bleu" else rouge(hyps, refs, metric[len("rouge"):])
    except (DPNError, OSError) as e:
        raise _fail(e)
    console.print(f"{metric} = {score:.2f}")


@app.command("analyze")
def cmd_analyze(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint file"),
    out_dir: Path = typer.Option(..., "--out-dir", help="Directory for alignments.txt and entropy.txt"),
    src: Optional[Path] = typer.Option(None, help="Source file (default: the checkpoint's synthetic validation set)"),
    tgt: Optional[Path] = typer.Option(None, help="Target file paired with --src"),
    layer: int = typer.Option(-1, help="Decoder layer whose alignments are exported"),
):
    """Export decoder->encoder alignments and the path-by-path entropy table."""
    from dpn.data.corpus import load_parallel
    from dpn.data.dataset import prepare_corpus
    from dpn.evaluation.analysis import dump_alignments, entropy_report
    from dpn.storage.checkpoint import load_checkpoint
    from dpn.training.trainer import load_model

    try:
        params, run_config, vocab_src, vocab_tgt = load_model(load_checkpoint(checkpoint))
        if (src is None) != (tgt is None):
            raise ConfigError("--src and --tgt must be given together")
        if src is not None:
            pairs, _ = load_parallel(str(src), str(tgt), vocab_src, vocab_tgt, run_config.model.max_len)
        else:
            if run_config.data.task is None:
                raise ConfigError("Checkpoint was trained on files; pass --src and --tgt")
            pairs = prepare_corpus(run_config).valid
        if not (run_config.model.both_decoders and run_config.model.both_encoders):
            logger.warning("Single-path model: only the available flows are exported")
        records = dump_alignments(params, pairs, vocab_src, vocab_tgt, out_dir / "alignments.txt", layer)
        report = entropy_report(records)
        (out_dir / "entropy.txt").write_text(report.render(), encoding="utf-8")
    except (DPNError, OSError) as e:
        raise _fail(e)
    console.print(report.render(), markup=False, highlight=False)


def _model_config(preset: Optional[str], ablation: Optional[str], overrides: List[str]) -> ModelConfig:
    run_config = build_run_config(None, overrides, preset, ablation)
    return run_config.model


@app.command("count-params")
def cmd_count_params(
    preset: Optional[str] = typer.Option(None, help="Named preset"),
    ablation: Optional[str] = typer.Option(None, help="Path grid id M1..M9"),
    overrides: List[str] = typer.Option([], "--set", help="section.key=value override, repeatable"),
):
    """Print the closed-form parameter count of a configuration."""
    from dpn.models.ablation import count_parameters

    try:
        config = _model_config(preset, ablation, overrides)
    except DPNError as e:
        raise _fail(e)
    total = count_parameters(config)
    console.print(f"{total} parameters ({total / 1e6:.2f}M)")


@app.command("ablate")
def cmd_ablate(
    preset: str = typer.Option("tiny", help="Base preset"),
    task: str = typer.Option("copy", help="Synthetic task used with --train"),
    train: bool = typer.Option(False, "--train", help="Train every configuration and report accuracy"),
    steps: int = typer.Option(2000, help="Training steps per configuration"),
    overrides: List[str] = typer.Option([], "--set", help="section.key=value override, repeatable"),
):
    """List the M1-M9 path grid with parameter counts, optionally training each."""
    from dpn.data.dataset import prepare_corpus
    from dpn.models.ablation import ABLATIONS, count_parameters
    from dpn.training.trainer import evaluate_loss, train_loop

    table = Table(title=f"Path grid ({preset})")
    for column in ("id", "enc CNN", "enc SAN", "dec CNN", "dec SAN", "params"):
        table.add_column(column)
    if train:
        table.add_column("valid acc")

    try:
        for ablation_id, switches in ABLATIONS.items():
            run_config = build_run_config(
                None, [*overrides, f"train.max_steps={steps}"] if train else overrides,
                preset, ablation_id, task, f"ablate-{ablation_id}",
            )
            row = [ablation_id, *("x" if s else "" for s in switches)]
            if train:
                corpus = prepare_corpus(run_config)
                state = train_loop(run_config, corpus.train, corpus.valid)
                _, acc = evaluate_loss(state.params, corpus.valid, run_config.train.max_tokens)
                row += [str(count_parameters(run_config.model)), f"{acc:.4f}"]
            else:
                row.append(str(count_parameters(run_config.model)))
            table.add_row(*row)
    except (DPNError, OSError) as e:
        raise _fail(e)
    console.print(table)


@app.command("gradcheck")
def cmd_gradcheck(
    max_entries: Optional[int] = typer.Option(None, help="Coordinates checked per parameter (default: all)"),
    tol: float = typer.Option(1e-3, help="Maximum relative error"),
    seed: int = typer.Option(1, help="Initialization and batch seed"),
):
    """Finite-difference check of the full model loss on the f64 verification preset."""
    from dpn.training.gradients import check_model_gradients, verify_config

    config = verify_config()
    console.print(f"verify preset: d={config.d}, vocab {config.src_vocab_size}, dtype {config.dtype}")
    report = check_model_gradients(config, seed=seed, max_entries=max_entries, tol=tol)
    console.print(
        f"{len(report.names)} parameters, {sum(report.checked_entries)} coordinates, "
        f"max relative error {report.max_error:.3e} (worst: {report.worst()})"
    )
    if report.hidden_by_floor:
        console.print(
            f"[yellow]{report.hidden_by_floor} coordinates pass only through the eps={report.floor:g} floor[/yellow]"
        )
    if not report.passed:
        console.print(f"[red]FAILED[/red] tolerance {tol:g}")
        raise typer.Exit(EXIT_RUNTIME)
    console.print("[green]PASSED[/green]")


if __name__ == "__main__":
    app()
