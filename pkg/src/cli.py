"""Interface en ligne de commande : fit, prune, render, scan, synth, export-dot."""

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from typing import List, Optional

import torch
from dotenv import load_dotenv

from src.core.config import Settings, load_config
from src.core.errors import MixGraphError, SearchAbortedError
from src.core.executor import execute
from src.core.graph import build_mixing_console
from src.core.losses import Phase
from src.core.models import FULL_CHAIN, SubgroupSpec, parse_chain
from src.core.params import ParamStore
from src.core.pruning import PruningEngine, importance_correlation, importance_frame, importance_scan
from src.core.training import TrainingEngine
from src.data.documents import atomic_write_text, read_document, write_document
from src.data.dot import export_dot
from src.data.loaders import load_session, write_wav
from src.data.reports import GRAPH_FILE, emit_report
from src.data.synth import SynthSpec, parse_active, synth_generate, write_session

logger = logging.getLogger("mixgraph")


def _override(config, **values):
    """Remplace les champs dont la valeur CLI est fournie."""
    values = {k: v for k, v in values.items() if v is not None}
    return dataclasses.replace(config, **values) if values else config


def _apply_train_flags(settings: Settings, args) -> Settings:
    settings.train = _override(
        settings.train,
        learning_rate=args.lr,
        seed=args.seed,
        console_steps=getattr(args, "steps", None),
        console_steps_prune=getattr(args, "steps_console", None),
        finetune_steps=getattr(args, "steps_finetune", None),
    )
    if args.sample_rate:
        settings.sample_rate = args.sample_rate
    torch.manual_seed(settings.train.seed)
    return settings


def _trainer(settings: Settings, manifest: str) -> TrainingEngine:
    session = load_session(manifest, settings.sample_rate)
    return TrainingEngine(session, settings.train, settings.loss, settings.stft)


def cmd_fit(args, settings: Settings) -> int:
    """Entraîne la console complète."""
    settings = _apply_train_flags(settings, args)
    trainer = _trainer(settings, args.manifest)
    session = trainer.session
    chain = parse_chain(args.chain) if args.chain is not None else FULL_CHAIN

    console = build_mixing_console(session.track_count, session.subgroups, chain)
    store = ParamStore.for_graph(console, session.sample_rate, seed=settings.train.seed)
    started = time.perf_counter()
    trace = trainer.train(console, store, Phase.CONSOLE, settings.train.console_steps, rng=trainer.rng())
    timings = {"console": time.perf_counter() - started}
    loss = trainer.evaluate(console, store)

    config = settings.as_dict()
    config["chain"] = "".join(t.value for t in chain)
    write_document(os.path.join(args.out_dir, GRAPH_FILE), console, store)
    emit_report(
        args.out_dir, "fit", config, console, console, loss, loss, trace, timings=timings
    )
    logger.info("Console ajustée: L_a = %.5f", loss.audio)
    return 0


def cmd_prune(args, settings: Settings) -> int:
    """Recherche d'un graphe élagué."""
    settings = _apply_train_flags(settings, args)
    settings.prune = _override(
        settings.prune,
        tolerance=args.tolerance,
        sampler=args.sampler,
        rounds=args.rounds,
        seed=args.seed,
    )
    trainer = _trainer(settings, args.manifest)
    session = trainer.session
    console = build_mixing_console(session.track_count, session.subgroups)
    store = ParamStore.for_graph(console, session.sample_rate, seed=settings.train.seed)

    engine = PruningEngine(trainer, settings.prune)
    try:
        result = engine.search(console, store)
    except SearchAbortedError as e:
        checkpoint = e.checkpoint
        if checkpoint is not None:
            path = os.path.join(args.out_dir, "checkpoint.json")
            write_document(path, checkpoint.graph, checkpoint.store)
            logger.error("Recherche interrompue, checkpoint écrit dans %s", path)
        raise

    write_document(os.path.join(args.out_dir, GRAPH_FILE), result.graph, result.store)
    emit_report(
        args.out_dir,
        "prune",
        settings.as_dict(),
        result.console,
        result.graph,
        result.console_loss,
        result.final_loss,
        result.loss_trace,
        trials=result.trials,
        progress=result.progress,
        threshold=result.threshold,
        timings=result.timings,
    )
    return 0


def cmd_render(args, settings: Settings) -> int:
    """Rend le mix d'un document de graphe."""
    graph, store = read_document(args.graph)
    session = load_session(args.manifest, store.sample_rate)
    with torch.no_grad():
        sources = torch.tensor(session.tracks, dtype=store.dtype)
        mix = execute(graph, store, sources).mix.numpy()
    write_wav(args.out, mix, session.sample_rate)
    logger.info("Rendu écrit: %s (%.1f s)", args.out, session.duration)
    return 0


def cmd_scan(args, settings: Settings) -> int:
    """Mesure l'importance de chaque processeur."""
    graph, store = read_document(args.graph)
    session = load_session(args.manifest, store.sample_rate)
    trainer = TrainingEngine(session, settings.train, settings.loss, settings.stft, dtype=store.dtype)
    records = importance_scan(trainer, graph, store)
    frame = importance_frame(records)
    atomic_write_text(args.out, frame.to_csv(index=False))
    correlation = importance_correlation(records)
    atomic_write_text(os.path.splitext(args.out)[0] + "_correlation.json", json.dumps(correlation, indent=2))
    return 0


def cmd_synth(args, settings: Settings) -> int:
    """Génère une session synthétique."""
    subgroups = None
    if args.groups:
        subgroups = SubgroupSpec.from_labels([g.strip() for g in args.groups.split(",")])
    spec = SynthSpec(
        track_count=args.tracks,
        subgroups=subgroups,
        active=parse_active(args.active or ""),
        seconds=args.seconds,
        sample_rate=args.sample_rate or settings.sample_rate,
        seed=args.seed if args.seed is not None else 0,
    )
    result = synth_generate(spec)
    manifest = write_session(result, args.out_dir)
    logger.info("Session écrite: %s", manifest)
    return 0


def cmd_export_dot(args, settings: Settings) -> int:
    """Exporte un graphe en DOT."""
    graph, store = read_document(args.graph)
    text = export_dot(graph, weights=store.weights())
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixgraph", description="Recherche de graphes de mixage")
    parser.add_argument("--config", default=None, help="Fichier YAML de configuration")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING...")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_train(p):
        p.add_argument("--manifest", required=True)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default="runs/latest")
        p.add_argument("--sample-rate", type=int, default=None)

    fit = sub.add_parser("fit", help="Ajuste la console complète")
    common_train(fit)
    fit.add_argument("--chain", default=None, help="Processeurs de la chaîne, ex: ecnsgdr")
    fit.add_argument("--steps", type=int, default=None)
    fit.set_defaults(func=cmd_fit)

    prune = sub.add_parser("prune", help="Élague la console")
    common_train(prune)
    prune.add_argument("--tolerance", type=float, default=None)
    prune.add_argument("--sampler", choices=["brute_force", "dry_wet", "hybrid"], default=None)
    prune.add_argument("--rounds", type=int, default=None)
    prune.add_argument("--steps-console", type=int, default=None)
    prune.add_argument("--steps-finetune", type=int, default=None)
    prune.set_defaults(func=cmd_prune)

    render = sub.add_parser("render", help="Rend un graphe en WAV")
    render.add_argument("--graph", required=True)
    render.add_argument("--manifest", required=True)
    render.add_argument("--out", required=True)
    render.set_defaults(func=cmd_render)

    scan = sub.add_parser("scan", help="Importance des processeurs (CSV)")
    scan.add_argument("--graph", required=True)
    scan.add_argument("--manifest", required=True)
    scan.add_argument("--out", required=True)
    scan.set_defaults(func=cmd_scan)

    synth = sub.add_parser("synth", help="Génère une session synthétique")
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--tracks", type=int, default=4)
    synth.add_argument("--groups", default=None, help="Label de groupe par piste, ex: 0,0,1,1")
    synth.add_argument("--active", default="", help="ex: g:all,e:0,e:1")
    synth.add_argument("--seconds", type=float, default=30.0)
    synth.add_argument("--sample-rate", type=int, default=None)
    synth.add_argument("--seed", type=int, default=None)
    synth.set_defaults(func=cmd_synth)

    dot = sub.add_parser("export-dot", help="Exporte un graphe en DOT")
    dot.add_argument("--graph", required=True)
    dot.add_argument("--out", default=None)
    dot.set_defaults(func=cmd_export_dot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Point d'entrée de la commande `mixgraph`."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        settings = load_config(args.config)
    except MixGraphError as e:
        logging.basicConfig(level=logging.INFO)
        logger.error("%s", e)
        return 1
    level = (args.log_level or settings.log_level).upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        return args.func(args, settings)
    except MixGraphError as e:
        logger.error("%s", e)
        return 1
    except ValueError as e:
        logger.error("Argument invalide: %s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
