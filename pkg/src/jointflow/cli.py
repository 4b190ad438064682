"""Command-line pipeline: generate | graphs | pretrain | train | evaluate | compare.

Every command is deterministic given its flags and seeds, writes a manifest
recording the effective configuration and input digests, and never mutates
its input files. Flags override the optional key=value config file, which
overrides built-in defaults.

Exit codes: 0 success, 2 usage, 3 missing dependency artifact,
4 validation/config failure, 5 training divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import evaljoint, model as model_mod
from .graphs import (
    GraphStrategy,
    InteractionClass,
    InteractionGraph,
    crossing_labels,
    euclidean_graph,
    independence_graph,
    one_hot_label,
)
from .model import ModelConfig, ModelVariant, TrainingDiverged
from .scene import SceneFormatError, SceneValidationError, load_scenes, save_scenes, split_dataset
from .synth import HORIZON_PRESETS, ConfigError, GeneratorConfig, TEMPLATES, generate_synthetic

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEPENDENCY = 3
EXIT_VALIDATION = 4
EXIT_DIVERGENCE = 5

HEURISTIC_STRATEGIES = (
    "independence",
    "euclidean",
    "crossing",
    "hypothetical-crossing",
    "flipped-crossing",
    "flipped-hypothetical-crossing",
)


class UsageError(ValueError):
    pass


class DependencyError(ValueError):
    pass


# -- config plumbing ---------------------------------------------------------


def load_config_file(path: str | Path) -> dict:
    """Parse a `key = value` config file; values are JSON where possible."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        raw = raw.strip()
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def effective_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults <- config file <- explicitly passed flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        file_cfg = load_config_file(args.config)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(path: Path, command: str, config: dict, inputs: list, outputs: list) -> None:
    manifest = {
        "command": command,
        "effective_config": config,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if Path(p).is_file()},
        "outputs": [str(p) for p in outputs],
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@contextmanager
def bundle_lock(directory: Path):
    """Exclusive-create lock file guarding one bundle directory."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise UsageError(
            f"bundle {directory} is locked by another writer (stale? remove {lock})"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _require_file(path: str | Path, what: str, dependency: bool = False) -> Path:
    p = Path(path)
    if not p.exists():
        if dependency:
            raise DependencyError(f"missing {what}: {p}")
        raise UsageError(f"missing {what}: {p}")
    return p


def _model_config(cfg: dict) -> ModelConfig:
    fields = {
        k: cfg[k]
        for k in (
            "enc_dim", "embed_dim", "ctx_dim", "latent_dim", "ae_hidden",
            "flow_layers", "flow_hidden", "message_rounds", "eps_euclid",
            "ae_steps", "ae_batch", "ae_lr", "cls_epochs", "cls_batch",
            "cls_lr", "epochs", "batch_size", "lr",
        )
        if k in cfg and cfg[k] is not None
    }
    return ModelConfig(**fields)


_MODEL_DEFAULTS = {
    "enc_dim": 32, "embed_dim": 64, "ctx_dim": 32, "latent_dim": 16,
    "ae_hidden": 32, "flow_layers": 8, "flow_hidden": 64, "message_rounds": 1,
    "eps_euclid": 20.0, "ae_steps": 2000, "ae_batch": 16, "ae_lr": 1e-3,
    "cls_epochs": 15, "cls_batch": 16, "cls_lr": 1e-3, "epochs": 20,
    "batch_size": 8, "lr": 1e-3,
}


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    for key, default in _MODEL_DEFAULTS.items():
        flag = "--" + key.replace("_", "-")
        parser.add_argument(flag, type=type(default), default=None,
                            help=f"model hyperparameter (default {default})")


# -- generate -----------------------------------------------------------------

GENERATE_DEFAULTS = {
    "template": "crossing-intersection",
    "n": 100,
    "seed": 0,
    "preset": "interaction-like",
    "n_past": None,
    "n_future": None,
    "hz": None,
    "agents_min": 2,
    "agents_max": 2,
    "noise": 0.05,
    "priority_mode": "arrival",
    "arrival_spread": None,
    "gap_frac": 0.18,
}


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = effective_config(args, GENERATE_DEFAULTS)
    if cfg["template"] not in TEMPLATES:
        raise UsageError(f"unknown template {cfg['template']!r}; options: {TEMPLATES}")
    if cfg["n"] < 1:
        raise UsageError("--n must be at least 1")
    if cfg["preset"] not in HORIZON_PRESETS:
        raise UsageError(f"unknown preset {cfg['preset']!r}")
    n_past, n_future, hz = HORIZON_PRESETS[cfg["preset"]]
    gen = GeneratorConfig(
        template=cfg["template"],
        n_scenes=cfg["n"],
        agents_min=cfg["agents_min"],
        agents_max=cfg["agents_max"],
        n_past=cfg["n_past"] or n_past,
        n_future=cfg["n_future"] or n_future,
        sampling_hz=cfg["hz"] or hz,
        noise_std=cfg["noise"],
        priority_mode=cfg["priority_mode"],
        arrival_spread=cfg["arrival_spread"],
        gap_frac=cfg["gap_frac"],
    )
    scenes = generate_synthetic(gen, cfg["seed"])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scenes(scenes, out)
    counts = {}
    for s in scenes:
        counts[s.n_agents] = counts.get(s.n_agents, 0) + 1
    manifest_cfg = {**cfg, "agent_count_histogram": counts, "n_scenes_written": len(scenes)}
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "generate",
                   manifest_cfg, [], [out])
    print(f"wrote {len(scenes)} scenes to {out}")
    return EXIT_OK


# -- graphs -------------------------------------------------------------------


def _strategy_labels(scene, strategy: str, eps: float) -> dict:
    ids = sorted(a.agent_id for a in scene.agents)
    pairs = list(itertools.combinations(ids, 2))
    if strategy == "independence":
        return {p: one_hot_label(InteractionClass.NO_INTERACTION) for p in pairs}
    if strategy == "euclidean":
        graph = euclidean_graph(scene.past_view(), eps)
        return _labels_from_graph(graph, pairs)
    st = GraphStrategy(strategy)
    return crossing_labels(scene, use_hypothetical=st.hypothetical, flipped=st.flipped)


def _labels_from_graph(graph: InteractionGraph, pairs) -> dict:
    labels = {}
    for m, n in pairs:
        if (m, n) in graph.edges:
            labels[(m, n)] = one_hot_label(InteractionClass.M_INFLUENCES_N)
        elif (n, m) in graph.edges:
            labels[(m, n)] = one_hot_label(InteractionClass.N_INFLUENCES_M)
        else:
            labels[(m, n)] = one_hot_label(InteractionClass.NO_INTERACTION)
    return labels


def _strategy_graph(scene, strategy: str, eps: float) -> InteractionGraph:
    if strategy == "independence":
        return independence_graph(scene)
    if strategy == "euclidean":
        return euclidean_graph(scene.past_view(), eps)
    from .graphs import graph_from_labels

    return graph_from_labels(scene, _strategy_labels(scene, strategy, eps))


def _gt_labels(scene) -> dict | None:
    meta = scene.meta or {}
    if "interacting_pairs" not in meta:
        return None
    ids = sorted(a.agent_id for a in scene.agents)
    labels = {p: InteractionClass.NO_INTERACTION for p in itertools.combinations(ids, 2)}
    for src, dst in meta["interacting_pairs"]:
        m, n = min(src, dst), max(src, dst)
        labels[(m, n)] = (
            InteractionClass.M_INFLUENCES_N if src == m else InteractionClass.N_INFLUENCES_M
        )
    return labels


def cmd_graphs(args: argparse.Namespace) -> int:
    scenes_path = _require_file(args.scenes, "scene file")
    strategies = args.strategies or list(HEURISTIC_STRATEGIES)
    for s in strategies:
        if s not in HEURISTIC_STRATEGIES:
            raise UsageError(f"unknown strategy {s!r}; options: {HEURISTIC_STRATEGIES}")
    scenes = load_scenes(scenes_path)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    eps = args.eps_euclid if args.eps_euclid is not None else 20.0

    all_labels = {s: [] for s in strategies}
    outputs = []
    for strategy in strategies:
        dump = out_dir / f"graphs-{strategy}.jsonl"
        outputs.append(dump)
        with dump.open("w") as fh:
            for scene in scenes:
                graph = _strategy_graph(scene, strategy, eps)
                rec = {"scene_id": scene.scene_id, "strategy": strategy, **graph.to_json()}
                fh.write(json.dumps(rec) + "\n")
                all_labels[strategy].append(_strategy_labels(scene, strategy, eps))

    # pairwise label agreement between strategies, plus against ground truth
    gt_per_scene = [_gt_labels(s) for s in scenes]
    names = strategies + (["ground-truth"] if any(g is not None for g in gt_per_scene) else [])
    agreement = {a: {b: 0.0 for b in names} for a in names}
    for a in names:
        for b in names:
            agree = total = 0
            for i, scene in enumerate(scenes):
                la = gt_per_scene[i] if a == "ground-truth" else {
                    k: v.cls for k, v in all_labels[a][i].items()
                }
                lb = gt_per_scene[i] if b == "ground-truth" else {
                    k: v.cls for k, v in all_labels[b][i].items()
                }
                if la is None or lb is None:
                    continue
                for pair in la:
                    total += 1
                    agree += la[pair] == lb[pair]
            agreement[a][b] = agree / total if total else float("nan")
    agreement_path = out_dir / "agreement.csv"
    with agreement_path.open("w") as fh:
        fh.write("strategy," + ",".join(names) + "\n")
        for a in names:
            fh.write(a + "," + ",".join(repr(agreement[a][b]) for b in names) + "\n")
    outputs.append(agreement_path)

    # direction accuracy vs ground truth on interacting pairs only
    accuracy_path = out_dir / "direction_accuracy.csv"
    with accuracy_path.open("w") as fh:
        fh.write("strategy,interacting_pairs,direction_accuracy\n")
        for strategy in strategies:
            hits = total = 0
            for i in range(len(scenes)):
                gt = gt_per_scene[i]
                if gt is None:
                    continue
                for pair, cls in gt.items():
                    if cls is InteractionClass.NO_INTERACTION:
                        continue
                    total += 1
                    hits += all_labels[strategy][i][pair].cls == cls
            acc = hits / total if total else float("nan")
            fh.write(f"{strategy},{total},{repr(acc)}\n")
    outputs.append(accuracy_path)

    cfg = {"strategies": strategies, "eps_euclid": eps, "scenes": str(scenes_path)}
    write_manifest(out_dir / "graphs.manifest.json", "graphs", cfg, [scenes_path], outputs)
    print(f"wrote graph dumps and agreement reports to {out_dir}")
    return EXIT_OK


# -- pretrain ------------------------------------------------------------------


def cmd_pretrain(args: argparse.Namespace) -> int:
    scenes_path = _require_file(args.scenes, "scene file")
    scenes = load_scenes(scenes_path)
    if not scenes:
        raise UsageError(f"no scenes in {scenes_path}")
    cfg_dict = effective_config(args, dict(_MODEL_DEFAULTS))
    config = _model_config(cfg_dict)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    what = args.what
    if what in ("autoencoder", "both"):
        result = model_mod.pretrain_autoencoder(scenes, config, args.seed)
        ckpt = out_dir / "autoencoder.npz"
        model_mod.save_checkpoint(result.store, ckpt)
        curve = out_dir / "autoencoder_curve.csv"
        _write_curve(curve, result.curve)
        outputs += [ckpt, curve]
        print(f"autoencoder holdout per-step displacement error: {result.holdout_error:.4f} m")
    if what in ("classifier", "both"):
        if args.strategy is None:
            raise UsageError("--strategy is required when pretraining the classifier")
        strategy = GraphStrategy(args.strategy)
        if not strategy.uses_pretrained_classifier:
            raise UsageError(
                f"strategy {strategy.value!r} has no heuristic labels to pretrain on"
            )
        result = model_mod.pretrain_classifier(scenes, strategy, config, args.seed)
        ckpt = out_dir / "classifier.npz"
        model_mod.save_checkpoint(result.store, ckpt)
        curve = out_dir / "classifier_curve.csv"
        _write_curve(curve, result.curve)
        outputs += [ckpt, curve]
        report = result.extras["report"]
        print(f"classifier holdout accuracy: {report.accuracy:.4f}")
        print("per-class recall: " + ", ".join(
            f"{k}={v:.3f}" for k, v in report.per_class_recall.items()))
        print("confusion matrix (rows true, cols predicted):")
        for cls, row in zip(InteractionClass, report.confusion):
            print(f"  {cls.name:<16} {row.tolist()}")
    cfg_manifest = {**cfg_dict, "what": what, "seed": args.seed,
                    "strategy": args.strategy}
    write_manifest(out_dir / "pretrain.manifest.json", "pretrain", cfg_manifest,
                   [scenes_path], outputs)
    return EXIT_OK


def _write_curve(path: Path, curve: list) -> None:
    import csv as _csv

    with path.open("w", newline="") as fh:
        if not curve:
            fh.write("")
            return
        writer = _csv.DictWriter(fh, fieldnames=list(curve[0]))
        writer.writeheader()
        writer.writerows(curve)


# -- train ---------------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    scenes_path = _require_file(args.scenes, "scene file")
    scenes = load_scenes(scenes_path)
    strategy = GraphStrategy(args.variant)
    cfg_dict = effective_config(args, dict(_MODEL_DEFAULTS))
    config = _model_config(cfg_dict)
    variant = ModelVariant(strategy=strategy, seed=args.seed, config=config)

    ae_path = _require_file(args.autoencoder, "autoencoder checkpoint", dependency=True)
    ae_store = model_mod.load_checkpoint(ae_path)
    cls_store = None
    if strategy.uses_pretrained_classifier:
        if args.classifier is None:
            raise DependencyError(
                f"variant {strategy.value!r} needs --classifier (pretrained checkpoint)"
            )
        cls_path = _require_file(args.classifier, "classifier checkpoint", dependency=True)
        cls_store = model_mod.load_checkpoint(cls_path)

    if args.val_scenes:
        val = load_scenes(_require_file(args.val_scenes, "validation scene file"))
        train_set = scenes
    else:
        train_set, val = split_dataset(scenes, 1.0 - args.val_fraction, seed=args.seed)
    out_dir = Path(args.out)
    with bundle_lock(out_dir):
        bundle = model_mod.train(variant, train_set, val, ae_store, cls_store)
        bundle.save(out_dir)
        cfg_manifest = {**cfg_dict, "variant": strategy.value, "seed": args.seed,
                        "val_fraction": args.val_fraction}
        write_manifest(out_dir / "train.manifest.json", "train", cfg_manifest,
                       [scenes_path, ae_path] + ([args.classifier] if cls_store else []),
                       [out_dir / "model.npz"])
    best = bundle.history[-1]["best_val_nll"] if bundle.history else float("nan")
    print(f"trained {strategy.value} (seed {args.seed}); best validation NLL {best:.4f}")
    return EXIT_OK


# -- evaluate ------------------------------------------------------------------


def cmd_evaluate(args: argparse.Namespace) -> int:
    bundle_dir = Path(args.bundle)
    if not (bundle_dir / "manifest.json").exists():
        raise UsageError(f"missing model bundle at {bundle_dir}")
    scenes_path = _require_file(args.scenes, "scene file")
    scenes = load_scenes(scenes_path)
    if not scenes:
        raise UsageError(f"no scenes in {scenes_path}")
    bundle = model_mod.ModelBundle.load(bundle_dir)
    report = evaljoint.evaluate_variant(
        bundle,
        scenes,
        n_samples=args.samples,
        max_density_samples=args.max_density_samples,
        eval_seed=args.eval_seed,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    evaljoint.write_reports_csv([report], out)
    cfg = {
        "samples": args.samples,
        "max_density_samples": args.max_density_samples,
        "eval_seed": args.eval_seed,
        "bundle": str(bundle_dir),
    }
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "evaluate",
                   cfg, [scenes_path], [out])
    print(
        f"{report.variant} seed={report.seed}: minADE {report.joint_min_ade:.4f} "
        f"minFDE {report.joint_min_fde:.4f} NLL {report.joint_nll:.4f}"
    )
    return EXIT_OK


# -- compare -------------------------------------------------------------------


def cmd_compare(args: argparse.Namespace) -> int:
    reports = []
    for path in args.reports:
        reports.extend(evaljoint.read_reports_csv(_require_file(path, "report CSV")))
    if not reports:
        raise UsageError("no evaluation runs found in the given report files")
    summaries = evaljoint.aggregate_runs(reports)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    evaljoint.write_summary_csv(summaries, out)
    header = f"{'variant':<34}{'minADE':>16}{'minFDE':>16}{'NLL':>18}"
    print(header)
    for s in summaries:
        marks = lambda flag: "*" if flag else " "
        print(
            f"{s.variant:<34}"
            f"{s.min_ade_mean:>13.4f}±{s.min_ade_std:<.3f}{marks(s.best_min_ade)}"
            f"{s.min_fde_mean:>11.4f}±{s.min_fde_std:<.3f}{marks(s.best_min_fde)}"
            f"{s.nll_mean:>13.4f}±{s.nll_std:<.3f}{marks(s.best_nll)}"
        )
    outputs = [out]
    if args.plot:
        outputs += _plot_metrics(reports, Path(args.plot))
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "compare",
                   {"reports": [str(p) for p in args.reports]}, list(args.reports), outputs)
    return EXIT_OK


def _plot_metrics(reports, plot_dir: Path) -> list:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plot_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    metrics = [
        ("joint_min_ade", "joint minADE (m)"),
        ("joint_min_fde", "joint minFDE (m)"),
        ("joint_nll", "joint NLL (nats)"),
    ]
    variants = sorted({r.variant for r in reports})
    for attr, label in metrics:
        fig, ax = plt.subplots(figsize=(8, 4))
        for x, variant in enumerate(variants):
            ys = [getattr(r, attr) for r in reports if r.variant == variant]
            ax.scatter([x] * len(ys), ys, alpha=0.7)
        ax.set_xticks(range(len(variants)))
        ax.set_xticklabels(variants, rotation=30, ha="right")
        ax.set_ylabel(label)
        fig.tight_layout()
        path = plot_dir / f"{attr}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        outputs.append(path)
    return outputs


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointflow",
        description="joint multi-agent trajectory prediction experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic scene corpus")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--template", choices=None, default=None)
    p.add_argument("--n", type=int, default=None, help="number of scenes")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--preset", default=None, choices=sorted(HORIZON_PRESETS))
    p.add_argument("--n-past", type=int, default=None)
    p.add_argument("--n-future", type=int, default=None)
    p.add_argument("--hz", type=float, default=None)
    p.add_argument("--agents-min", type=int, default=None)
    p.add_argument("--agents-max", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--priority-mode", choices=("arrival", "random"), default=None)
    p.add_argument("--arrival-spread", type=float, default=None)
    p.add_argument("--gap-frac", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("graphs", help="dump heuristic graphs and agreement reports")
    p.add_argument("--scenes", required=True)
    p.add_argument("--strategies", nargs="*", default=None)
    p.add_argument("--eps-euclid", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graphs)

    p = sub.add_parser("pretrain", help="pretrain autoencoder and/or classifier")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--scenes", required=True)
    p.add_argument("--what", choices=("autoencoder", "classifier", "both"), default="both")
    p.add_argument("--strategy", default=None,
                   help="heuristic supplying classifier labels (crossing variants)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train one model variant")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--scenes", required=True)
    p.add_argument("--val-scenes", default=None)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--variant", required=True,
                   choices=[s.value for s in GraphStrategy])
    p.add_argument("--autoencoder", required=True, help="pretrained autoencoder .npz")
    p.add_argument("--classifier", default=None, help="pretrained classifier .npz")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="bundle output directory")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compute metrics for a trained bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--samples", type=int, default=6)
    p.add_argument("--max-density-samples", type=int, default=100)
    p.add_argument("--eval-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="aggregate evaluation runs across variants")
    p.add_argument("--reports", nargs="+", required=True, help="metrics CSV files")
    p.add_argument("--out", required=True, help="summary CSV path")
    p.add_argument("--plot", default=None, help="directory for metric plots")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, SceneFormatError, SceneValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
