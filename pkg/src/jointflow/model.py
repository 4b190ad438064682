"""Model assembly: pretraining, context encoding, joint loss, training, sampling.

The joint distribution over all agents' futures is factorized along a
directed acyclic interaction graph: each agent's abstracted future is
modeled by a conditional flow given the agent's context vector and the
sum-pooled abstracted futures of its graph parents. Training uses the
normalizing direction with ground-truth parent futures (teacher forcing);
sampling walks the graph in topological order and feeds sampled parents.
"""

from __future__ import annotations

import csv
import itertools
import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from . import flow as flow_mod
from .geom import approach_angle
from .graphs import (
    ClassifierParams,
    CyclicGraphError,
    GraphStrategy,
    InteractionClass,
    InteractionGraph,
    classifier_logits,
    crossing_labels,
    dagify,
    euclidean_graph,
    independence_graph,
    pair_feature_dim,
    pair_features,
    predicted_graph,
    topological_order,
)
from .neural import (
    Binding,
    ParamStore,
    glorot,
    gru_cell_from,
    gru_decode,
    gru_encode,
    init_gru,
    load_checkpoint,
    save_checkpoint,
    softmax,
    weighted_cross_entropy,
    adam_step,
)
from .scene import PastScene, Scene, future_displacements, past_displacements

BUNDLE_FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the last finite checkpoint."""

    def __init__(self, message: str, checkpoint: ParamStore | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and optimization hyperparameters (all overridable)."""

    enc_dim: int = 32
    embed_dim: int = 64
    ctx_dim: int = 32
    latent_dim: int = 16
    ae_hidden: int = 32
    flow_layers: int = 8
    flow_hidden: int = 64
    message_rounds: int = 1
    eps_euclid: float = 20.0
    ae_steps: int = 2000
    ae_batch: int = 16
    ae_lr: float = 1e-3
    cls_epochs: int = 15
    cls_batch: int = 16
    cls_lr: float = 1e-3
    epochs: int = 20
    batch_size: int = 8
    lr: float = 1e-3

    @property
    def cond_dim(self) -> int:
        return self.ctx_dim + self.latent_dim


@dataclass(frozen=True)
class ModelVariant:
    strategy: GraphStrategy
    seed: int
    config: ModelConfig = field(default_factory=ModelConfig)


# -- parameter initialization ----------------------------------------------


def init_autoencoder(store: ParamStore, cfg: ModelConfig, rng: np.random.Generator) -> None:
    init_gru(store, "ae.enc.gru", 2, cfg.ae_hidden, rng)
    store.add("ae.enc.head.w", glorot(rng, cfg.ae_hidden, cfg.latent_dim))
    store.add("ae.enc.head.b", np.zeros(cfg.latent_dim))
    store.add("ae.dec.head.w", glorot(rng, cfg.latent_dim, cfg.ae_hidden))
    store.add("ae.dec.head.b", np.zeros(cfg.ae_hidden))
    init_gru(store, "ae.dec.gru", 2, cfg.ae_hidden, rng)
    store.add("ae.dec.out.w", glorot(rng, cfg.ae_hidden, 2))
    store.add("ae.dec.out.b", np.zeros(2))


def init_classifier(store: ParamStore, cfg: ModelConfig, rng: np.random.Generator) -> None:
    init_gru(store, "cls.rnn", 2, cfg.enc_dim, rng)
    f = pair_feature_dim(cfg.enc_dim)
    store.add("cls.em.w", glorot(rng, f, cfg.embed_dim))
    store.add("cls.em.b", np.zeros(cfg.embed_dim))
    store.add("cls.out.w", glorot(rng, cfg.embed_dim, 3))
    store.add("cls.out.b", np.zeros(3))


def init_context(store: ParamStore, cfg: ModelConfig, rng: np.random.Generator) -> None:
    init_gru(store, "ctx.rnn", 2, cfg.ctx_dim, rng)
    store.add("ctx.self.w", glorot(rng, cfg.ctx_dim, cfg.ctx_dim))
    store.add("ctx.msg.w", glorot(rng, cfg.ctx_dim, cfg.ctx_dim))
    store.add("ctx.b", np.zeros(cfg.ctx_dim))


def make_flow_structure(variant: ModelVariant) -> flow_mod.FlowStack:
    cfg = variant.config
    return flow_mod.FlowStack(
        prefix="flow",
        dim=cfg.latent_dim,
        cond_dim=cfg.cond_dim,
        n_layers=cfg.flow_layers,
        hidden=cfg.flow_hidden,
        perm_seed=variant.seed,
    )


def classifier_params(params: Mapping) -> ClassifierParams:
    return ClassifierParams(
        params["cls.em.w"], params["cls.em.b"], params["cls.out.w"], params["cls.out.b"]
    )


def past_encoder_fn(params: Mapping, prefix: str) -> Callable:
    cell = gru_cell_from(params, prefix)
    return lambda deltas: gru_encode(deltas, cell)


# -- autoencoder --------------------------------------------------------------


def ae_encode(deltas, params: Mapping):
    """Displacement sequence (T, 2) or (T, B, 2) -> latent (L,) or (B, L)."""
    h = gru_encode(deltas, gru_cell_from(params, "ae.enc.gru"))
    return h @ params["ae.enc.head.w"] + params["ae.enc.head.b"]

def ae_decode(latent, steps: int, params: Mapping) -> list:
    """Latent -> autoregressive displacement rollout (list of step outputs)."""
    h0 = ad.tanh(latent @ params["ae.dec.head.w"] + params["ae.dec.head.b"])
    return gru_decode(
        h0,
        steps,
        gru_cell_from(params, "ae.dec.gru"),
        params["ae.dec.out.w"],
        params["ae.dec.out.b"],
    )


@dataclass
class PretrainResult:
    store: ParamStore
    curve: list
    holdout_error: float
    extras: dict = field(default_factory=dict)


def _future_delta_dataset(scenes: Sequence[Scene]) -> np.ndarray:
    seqs = [future_displacements(a) for s in scenes for a in s.agents]
    return np.stack(seqs)  # (N, T, 2)


def pretrain_autoencoder(
    train_scenes: Sequence[Scene], config: ModelConfig, seed: int
) -> PretrainResult:
    """Fit the displacement-sequence autoencoder by mean squared error.

    Returns frozen encoder/decoder parameters, the logged training curve,
    and the mean per-step displacement reconstruction error (meters) on a
    held-out tenth of the sequences.
    """
    if not train_scenes:
        raise ValueError("autoencoder pretraining needs scenes")
    rng = np.random.default_rng(seed)
    store = ParamStore()
    init_autoencoder(store, config, rng)
    data = _future_delta_dataset(train_scenes)
    n_hold = max(1, len(data) // 10)
    order = rng.permutation(len(data))
    hold, train = data[order[:n_hold]], data[order[n_hold:]]
    if len(train) == 0:
        train = hold
    steps_per_log = max(1, config.ae_steps // 40)
    curve = []
    last_good = store.clone()
    for step in range(config.ae_steps):
        idx = rng.integers(len(train), size=min(config.ae_batch, len(train)))
        batch = np.transpose(train[idx], (1, 0, 2))  # (T, B, 2)
        binding = Binding(store)
        loss = _ae_loss(batch, binding)
        if not np.isfinite(loss.value):
            raise TrainingDiverged(
                f"autoencoder loss non-finite at step {step}", last_good
            )
        loss.backward()
        binding.harvest()
        adam_step(store, lr=config.ae_lr)
        if step % steps_per_log == 0 or step == config.ae_steps - 1:
            curve.append({"step": step, "train_mse": float(loss.value)})
            last_good = store.clone()
    return PretrainResult(store, curve, _ae_holdout_error(hold, store))


def _ae_loss(batch_tbd: np.ndarray, params: Mapping):
    latent = ae_encode(batch_tbd, params)
    outs = ae_decode(latent, batch_tbd.shape[0], params)
    total = None
    for t, out in enumerate(outs):
        diff = out - batch_tbd[t]
        term = (diff * diff).sum()
        total = term if total is None else total + term
    return total * (1.0 / batch_tbd.size)


def _ae_holdout_error(hold: np.ndarray, store: ParamStore) -> float:
    batch = np.transpose(hold, (1, 0, 2))
    latent = ae_encode(batch, store)
    outs = ae_decode(latent, batch.shape[0], store)
    recon = np.stack([ad.value_of(o) for o in outs])
    return float(np.linalg.norm(recon - batch, axis=-1).mean())


# -- interaction classifier ----------------------------------------------------


@dataclass
class ClassifierReport:
    accuracy: float
    per_class_recall: dict
    confusion: np.ndarray  # (3, 3): rows true, cols predicted
    class_weights: np.ndarray
    curve: list


def heuristic_labels_for(scene: Scene, strategy: GraphStrategy) -> dict:
    if not strategy.uses_pretrained_classifier:
        raise ValueError(f"strategy {strategy.value} defines no heuristic labels")
    return crossing_labels(
        scene, use_hypothetical=strategy.hypothetical, flipped=strategy.flipped
    )


def _pair_dataset(scenes: Sequence[Scene], strategy: GraphStrategy) -> list:
    out = []
    for i, scene in enumerate(scenes):
        for (m, n), label in sorted(heuristic_labels_for(scene, strategy).items()):
            out.append((i, m, n, int(label.cls)))
    return out


def inverse_frequency_weights(classes: Sequence[int], n_classes: int = 3) -> np.ndarray:
    """Inverse class frequencies normalized to mean 1; absent classes get 1."""
    counts = np.bincount(list(classes), minlength=n_classes).astype(float)
    weights = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
    present = weights > 0
    if present.any():
        weights[present] *= present.sum() / weights[present].sum()
    weights[~present] = 1.0
    return weights


def pretrain_classifier(
    train_scenes: Sequence[Scene],
    strategy: GraphStrategy,
    config: ModelConfig,
    seed: int,
) -> PretrainResult:
    """Train the pair encoder and interaction classifier on heuristic labels.

    Weighted cross-entropy counters the class imbalance between interacting
    and non-interacting pairs. A tenth of the scenes is held out; the report
    carries 3-class accuracy, per-class recall and the confusion matrix.
    """
    if not train_scenes:
        raise ValueError("classifier pretraining needs scenes")
    rng = np.random.default_rng(seed)
    store = ParamStore()
    init_classifier(store, config, rng)
    n_hold = max(1, len(train_scenes) // 10) if len(train_scenes) > 1 else 0
    order = rng.permutation(len(train_scenes))
    hold_scenes = [train_scenes[i] for i in order[:n_hold]]
    fit_scenes = [train_scenes[i] for i in order[n_hold:]]
    pairs = _pair_dataset(fit_scenes, strategy)
    if not pairs:
        raise ValueError("no agent pairs in the training scenes")
    observed = {cls for _, _, _, cls in pairs}
    if len(observed) == 1:
        warnings.warn(
            f"classifier labels are single-class ({InteractionClass(next(iter(observed))).name}); "
            "training proceeds but the classifier will be degenerate"
        )
    weights = inverse_frequency_weights([cls for _, _, _, cls in pairs])
    features_const, classes = _pair_constant_features(fit_scenes, pairs)
    curve = []
    last_good = store.clone()
    for epoch in range(config.cls_epochs):
        perm = rng.permutation(len(pairs))
        epoch_loss = 0.0
        for start in range(0, len(perm), config.cls_batch):
            chunk = perm[start : start + config.cls_batch]
            binding = Binding(store)
            loss = _classifier_chunk_loss(
                features_const, classes, chunk, binding, weights, config
            )
            if not np.isfinite(loss.value):
                raise TrainingDiverged(f"classifier loss non-finite (epoch {epoch})", last_good)
            loss.backward()
            binding.harvest()
            adam_step(store, lr=config.cls_lr)
            epoch_loss += float(loss.value) * len(chunk)
        curve.append({"epoch": epoch, "train_wce": epoch_loss / len(pairs)})
        last_good = store.clone()
    report = _classifier_report(store, hold_scenes or fit_scenes, strategy, weights, curve)
    result = PretrainResult(store, curve, 1.0 - report.accuracy)
    result.extras["report"] = report
    return result


def _pair_constant_features(scenes: Sequence[Scene], pairs: list) -> tuple[list, np.ndarray]:
    """Per-pair constants: (past_m, past_n, non-encoded feature tail), classes."""
    delta_cache: dict = {}
    out = []
    for scene_i, m, n, _ in pairs:
        scene = scenes[scene_i]
        for aid in (m, n):
            if (scene_i, aid) not in delta_cache:
                delta_cache[(scene_i, aid)] = past_displacements(scene.agent(aid).past)
        am, an = scene.agent(m), scene.agent(n)
        d = am.past.positions[-1] - an.past.positions[-1]
        x_tilde = am.past.positions[-1] - am.past.positions[-2]
        alpha = approach_angle(d, x_tilde).angle
        tail = np.concatenate([am.atype.one_hot(), an.atype.one_hot(), d, [alpha]])
        out.append((delta_cache[(scene_i, m)], delta_cache[(scene_i, n)], tail))
    return out, np.array([cls for _, _, _, cls in pairs], dtype=int)


def _classifier_chunk_loss(
    features_const: list,
    classes: np.ndarray,
    chunk: np.ndarray,
    binding: Binding,
    weights: np.ndarray,
    config: ModelConfig,
):
    """Weighted cross-entropy over a minibatch, one batched tape.

    Both agents' pasts of every pair are encoded in a single (T, 2B, 2)
    recurrent pass; sequences of unequal length fall back to smaller groups.
    """
    by_len: dict[int, list[int]] = {}
    for k in chunk:
        by_len.setdefault(len(features_const[k][0]), []).append(int(k))
    cparams = classifier_params(binding)
    cell = gru_cell_from(binding, "cls.rnn")
    total = None
    for _, ks in sorted(by_len.items()):
        stacked = np.stack(
            [features_const[k][0] for k in ks] + [features_const[k][1] for k in ks]
        )  # (2B, T, 2)
        enc = gru_encode(np.transpose(stacked, (1, 0, 2)), cell)  # (2B, E)
        b = len(ks)
        tails = np.stack([features_const[k][2] for k in ks])
        feats = ad.concat([enc[:b], enc[b:], tails], axis=-1)
        probs = softmax(classifier_logits(feats, cparams))
        picked = ad.clip_min(probs[(np.arange(b), classes[ks])], 1e-12)
        group = -(ad.log(picked) * weights[classes[ks]]).sum()
        total = group if total is None else total + group
    return total * (1.0 / len(chunk))


def _classifier_report(store, scenes, strategy, weights, curve) -> ClassifierReport:
    encoder = past_encoder_fn(store, "cls.rnn")
    cparams = classifier_params(store)
    confusion = np.zeros((3, 3), dtype=int)
    for scene in scenes:
        for (m, n), label in heuristic_labels_for(scene, strategy).items():
            feats = pair_features(scene, m, n, encoder)
            logits = ad.value_of(classifier_logits(feats, cparams))
            confusion[int(label.cls), int(np.argmax(logits))] += 1
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    recalls = {}
    for cls in InteractionClass:
        support = confusion[int(cls)].sum()
        recalls[cls.name] = float(confusion[int(cls), int(cls)] / support) if support else float("nan")
    return ClassifierReport(accuracy, recalls, confusion, weights, curve)


def classifier_pair_accuracy(
    cls_store: ParamStore, scenes: Sequence[Scene], strategy: GraphStrategy
) -> float:
    """3-class accuracy of the trained classifier against heuristic labels."""
    report = _classifier_report(cls_store, scenes, strategy, np.ones(3), [])
    return report.accuracy


# -- context encoding ------------------------------------------------------------


def encode_context(
    scene,
    graph: InteractionGraph,
    params: Mapping,
    config: ModelConfig,
    weight_overrides: Mapping | None = None,
) -> dict:
    """Per-agent context vectors via weighted message passing over the graph.

    Each round: C_a = tanh(W_self h_a + sum_in w * W_msg h_src + b). Isolated
    agents keep a pure self-encoding. `weight_overrides` may supply autodiff
    Vars for edge weights so gradients can reach a graph-predicting
    classifier.
    """
    ids = sorted(a.agent_id for a in scene.agents)
    if set(ids) != set(graph.nodes):
        raise ValueError("graph nodes do not match scene agents")
    cell = gru_cell_from(params, "ctx.rnn")
    h = {a.agent_id: gru_encode(past_displacements(a.past), cell)
         for a in sorted(scene.agents, key=lambda a: a.agent_id)}
    in_edges: dict[str, list] = {i: [] for i in ids}
    for (src, dst), w in sorted(graph.edges.items()):
        weight = weight_overrides[(src, dst)] if weight_overrides else w
        in_edges[dst].append((src, weight))
    w_self, w_msg, b = params["ctx.self.w"], params["ctx.msg.w"], params["ctx.b"]
    for _ in range(config.message_rounds):
        new_h = {}
        for a in ids:
            acc = h[a] @ w_self + b
            for src, weight in in_edges[a]:
                acc = acc + weight * (h[src] @ w_msg)
            new_h[a] = ad.tanh(acc)
        h = new_h
    return h


# -- joint scene NLL ---------------------------------------------------------------


def abstracted_futures(scene: Scene, ae_store: ParamStore) -> dict:
    """Frozen-autoencoder latents of every agent's future displacements."""
    return {
        a.agent_id: ad.value_of(ae_encode(future_displacements(a), ae_store))
        for a in scene.agents
    }


def joint_scene_nll(
    scene: Scene,
    graph: InteractionGraph,
    params: Mapping,
    ae_store: ParamStore,
    flow: flow_mod.FlowStack,
    config: ModelConfig,
    weight_overrides: Mapping | None = None,
    latents: Mapping | None = None,
):
    """Negative log-likelihood of the scene's joint future under the DAG.

    Sum over agents of -log p(latent_a | context_a, sum-pooled ground-truth
    parent latents). Parentless agents pool to the zero vector. Returns a
    Var when `params` is a Binding, else a float.
    """
    if not graph.is_dag:
        raise CyclicGraphError("joint factorization requires a DAG")
    ids = sorted(a.agent_id for a in scene.agents)
    if set(ids) != set(graph.nodes):
        raise ValueError("graph nodes do not match scene agents")
    latents = latents or abstracted_futures(scene, ae_store)
    ctx = encode_context(scene, graph, params, config, weight_overrides)
    total = None
    for a in ids:
        pooled = _pool_parents(a, graph, latents, weight_overrides, config.latent_dim)
        cond = ad.concat([ctx[a], pooled], axis=-1)
        term = -flow_mod.log_prob(latents[a], cond, flow, params)
        total = term if total is None else total + term
    return total


def _pool_parents(agent_id, graph, latents, weight_overrides, latent_dim):
    """Sum-pool parent latents; learned-graph mode scales by edge probability."""
    parents = graph.parents(agent_id)
    if not parents:
        return np.zeros(latent_dim)
    terms = []
    for p in parents:
        if weight_overrides is not None:
            terms.append(weight_overrides[(p, agent_id)] * latents[p])
        else:
            terms.append(latents[p])
    return ad.stack_sum(terms)


# -- the trained bundle ---------------------------------------------------------------


@dataclass
class ModelBundle:
    """Everything needed to sample joint futures and score scenes."""

    variant: ModelVariant
    ae: ParamStore
    classifier: ParamStore | None
    params: ParamStore
    flow: flow_mod.FlowStack
    n_future: int
    trained: bool = False
    history: list = field(default_factory=list)

    def inference_graph(self, view: PastScene) -> InteractionGraph:
        """Interaction graph from pasts and model parameters only."""
        strategy = self.variant.strategy
        if strategy is GraphStrategy.INDEPENDENCE:
            return independence_graph(view)
        if strategy is GraphStrategy.EUCLIDEAN:
            return euclidean_graph(view, self.variant.config.eps_euclid)
        if strategy is GraphStrategy.NO_HEURISTIC:
            return predicted_graph(
                view, classifier_params(self.params), past_encoder_fn(self.params, "cls.rnn")
            )
        assert self.classifier is not None
        return predicted_graph(
            view,
            classifier_params(self.classifier),
            past_encoder_fn(self.classifier, "cls.rnn"),
        )

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "format_version": BUNDLE_FORMAT_VERSION,
            "strategy": self.variant.strategy.value,
            "seed": self.variant.seed,
            "config": asdict(self.variant.config),
            "n_future": self.n_future,
            "trained": self.trained,
            "has_classifier": self.classifier is not None,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        save_checkpoint(self.ae, directory / "autoencoder.npz")
        save_checkpoint(self.params, directory / "model.npz")
        if self.classifier is not None:
            save_checkpoint(self.classifier, directory / "classifier.npz")
        if self.history:
            with (directory / "training_log.csv").open("w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(self.history[0]))
                writer.writeheader()
                writer.writerows(self.history)

    @classmethod
    def load(cls, directory: str | Path) -> "ModelBundle":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest["format_version"] != BUNDLE_FORMAT_VERSION:
            raise ValueError(f"unsupported bundle format {manifest['format_version']}")
        variant = ModelVariant(
            strategy=GraphStrategy(manifest["strategy"]),
            seed=manifest["seed"],
            config=ModelConfig(**manifest["config"]),
        )
        classifier = None
        if manifest["has_classifier"]:
            classifier = load_checkpoint(directory / "classifier.npz")
        history = []
        log_path = directory / "training_log.csv"
        if log_path.exists():
            with log_path.open(newline="") as fh:
                history = list(csv.DictReader(fh))
        return cls(
            variant=variant,
            ae=load_checkpoint(directory / "autoencoder.npz"),
            classifier=classifier,
            params=load_checkpoint(directory / "model.npz"),
            flow=make_flow_structure(variant),
            n_future=manifest["n_future"],
            trained=manifest["trained"],
            history=history,
        )


def _learned_graph_in_tape(view: PastScene, binding: Binding, config: ModelConfig):
    """Classifier-predicted graph whose edge weights stay differentiable.

    The discrete argmax decides edge existence and direction (then
    dagification); the winning-class probability, kept as a Var, weights
    both GNN messages and parent pooling so the joint loss reaches the
    classifier parameters.
    """
    encoder = past_encoder_fn(binding, "cls.rnn")
    cparams = classifier_params(binding)
    ids = sorted(a.agent_id for a in view.agents)
    float_edges: dict = {}
    var_weights: dict = {}
    for m, n in itertools.combinations(ids, 2):
        probs = softmax(classifier_logits(pair_features(view, m, n, encoder), cparams))
        cls = InteractionClass(int(np.argmax(ad.value_of(probs))))
        if cls is InteractionClass.M_INFLUENCES_N:
            float_edges[(m, n)] = float(ad.value_of(probs)[1])
            var_weights[(m, n)] = probs[1]
        elif cls is InteractionClass.N_INFLUENCES_M:
            float_edges[(n, m)] = float(ad.value_of(probs)[2])
            var_weights[(n, m)] = probs[2]
    graph = dagify(InteractionGraph(tuple(ids), float_edges))
    overrides = {e: var_weights[e] for e in graph.edges}
    return graph, overrides


def train(
    variant: ModelVariant,
    train_scenes: Sequence[Scene],
    val_scenes: Sequence[Scene],
    ae_store: ParamStore,
    cls_store: ParamStore | None = None,
) -> ModelBundle:
    """Fit the context encoder and flow by minimizing mean joint scene NLL.

    The autoencoder is frozen throughout. Strategies backed by a pretrained
    classifier require `cls_store` (also frozen); the no-heuristic strategy
    instead trains a fresh classifier through the joint loss. Keeps the
    best-on-validation checkpoint; deterministic under the variant seed.
    """
    cfg = variant.config
    strategy = variant.strategy
    if strategy.uses_pretrained_classifier and cls_store is None:
        raise ValueError(f"strategy {strategy.value} requires a pretrained classifier")
    if not train_scenes or not val_scenes:
        raise ValueError("training needs nonempty train and validation scene lists")
    rng = np.random.default_rng(variant.seed)
    store = ParamStore()
    init_context(store, cfg, rng)
    fstack = make_flow_structure(variant)
    flow_mod.init_flow(store, fstack, rng)
    if strategy is GraphStrategy.NO_HEURISTIC:
        init_classifier(store, cfg, rng)

    bundle = ModelBundle(
        variant=variant,
        ae=ae_store,
        classifier=cls_store if strategy.uses_pretrained_classifier else None,
        params=store,
        flow=fstack,
        n_future=train_scenes[0].n_future,
    )
    latent_cache = {
        s.scene_id: abstracted_futures(s, ae_store)
        for s in list(train_scenes) + list(val_scenes)
    }
    graph_cache: dict[str, InteractionGraph] = {}
    if strategy is not GraphStrategy.NO_HEURISTIC:
        for s in list(train_scenes) + list(val_scenes):
            graph_cache[s.scene_id] = bundle.inference_graph(s.past_view())

    def scene_loss(scene: Scene, params: Mapping):
        if strategy is GraphStrategy.NO_HEURISTIC:
            if isinstance(params, Binding):
                graph, overrides = _learned_graph_in_tape(scene.past_view(), params, cfg)
            else:
                # evaluation path: plain float weights still scale the pooling
                graph = bundle.inference_graph(scene.past_view())
                overrides = dict(graph.edges)
        else:
            graph, overrides = graph_cache[scene.scene_id], None
        return joint_scene_nll(
            scene, graph, params, ae_store, fstack, cfg,
            weight_overrides=overrides, latents=latent_cache[scene.scene_id],
        )

    def validation_nll() -> float:
        return float(
            np.mean([ad.value_of(scene_loss(s, store)) for s in val_scenes])
        )

    best_val = validation_nll()
    init_val = best_val
    best_params = store.clone()
    history: list[dict] = []
    order = np.arange(len(train_scenes))
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            binding = Binding(store)
            total = None
            for i in chunk:
                term = scene_loss(train_scenes[i], binding)
                total = term if total is None else total + term
            loss = total * (1.0 / len(chunk))
            if not np.isfinite(loss.value):
                raise TrainingDiverged(
                    f"joint NLL non-finite in epoch {epoch}", best_params
                )
            loss.backward()
            binding.harvest()
            adam_step(store, lr=cfg.lr)
            epoch_loss += float(loss.value) * len(chunk)
        val_nll = validation_nll()
        if val_nll < best_val:
            best_val = val_nll
            best_params = store.clone()
        history.append(
            {
                "epoch": epoch,
                "train_nll": epoch_loss / len(order),
                "val_nll": val_nll,
                "best_val_nll": best_val,
            }
        )
    store.load_values(best_params)
    bundle.trained = True
    bundle.history = [{"init_val_nll": init_val, **row} for row in history]
    return bundle


# -- sampling -----------------------------------------------------------------------


def predict_scene(
    scene: Scene | PastScene,
    bundle: ModelBundle,
    n_samples: int,
    seed,
) -> np.ndarray:
    """Joint future samples, (n_samples, n_agents, n_future, 2).

    Only the past view of the scene reaches graph construction and context
    encoding; agents are sampled in topological order with each conditioned
    on its already-sampled parents, then decoded to displacements and
    integrated from the last observed position.
    """
    if not bundle.trained:
        raise RuntimeError("model bundle is not trained")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    view = scene.past_view() if isinstance(scene, Scene) else scene
    cfg = bundle.variant.config
    graph = bundle.inference_graph(view)
    overrides = dict(graph.edges) if bundle.variant.strategy is GraphStrategy.NO_HEURISTIC else None
    ctx = encode_context(view, graph, bundle.params, cfg, weight_overrides=overrides)
    order = topological_order(graph)
    ids = sorted(a.agent_id for a in view.agents)
    rng = np.random.default_rng(seed)
    sampled: dict[str, np.ndarray] = {}
    decoded: dict[str, np.ndarray] = {}
    for a in order:
        parents = graph.parents(a)
        assert all(p in sampled for p in parents), "ancestral order violated"
        if parents:
            if overrides is not None:
                pooled = sum(overrides[(p, a)] * sampled[p] for p in parents)
            else:
                pooled = sum(sampled[p] for p in parents)
        else:
            pooled = np.zeros((n_samples, cfg.latent_dim))
        cond = np.concatenate(
            [np.broadcast_to(ctx[a], (n_samples, cfg.ctx_dim)), pooled], axis=-1
        )
        z = rng.standard_normal((n_samples, cfg.latent_dim))
        lat = flow_mod.inverse_generate(z, cond, bundle.flow, bundle.params)
        sampled[a] = lat
        steps = ae_decode(lat, bundle.n_future, bundle.ae)
        deltas = np.stack([ad.value_of(s) for s in steps], axis=1)  # (S, T, 2)
        start = view.agent(a).past.positions[-1]
        decoded[a] = start + np.cumsum(deltas, axis=1)
    return np.stack([decoded[a] for a in ids], axis=1)


def scene_log_likelihood(scene: Scene, bundle: ModelBundle) -> float:
    """Log-likelihood of the ground-truth future under the trained model."""
    if not bundle.trained:
        raise RuntimeError("model bundle is not trained")
    graph = bundle.inference_graph(scene.past_view())
    overrides = dict(graph.edges) if bundle.variant.strategy is GraphStrategy.NO_HEURISTIC else None
    nll = joint_scene_nll(
        scene, graph, bundle.params, bundle.ae, bundle.flow, bundle.variant.config,
        weight_overrides=overrides,
    )
    return -float(ad.value_of(nll))


def classifier_accuracy(bundle: ModelBundle, scenes: Sequence[Scene]) -> float | None:
    """Accuracy of the bundle's pretrained classifier against its heuristic."""
    if bundle.classifier is None or not bundle.variant.strategy.uses_pretrained_classifier:
        return None
    scenes = [s for s in scenes if isinstance(s, Scene)]
    if not scenes:
        return None
    return classifier_pair_accuracy(bundle.classifier, scenes, bundle.variant.strategy)
