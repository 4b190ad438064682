"""Interaction labels and directed interaction graphs over scene agents.

Seven strategies produce the graph that factorizes the joint future
distribution: independence (no edges), a learned classifier ("no
heuristic"), a Euclidean viewing-angle rule, crossing order of ground-truth
futures, crossing order of hypothetically extrapolated futures, and the two
flipped variants. All graphs are forced acyclic before use.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Mapping, NamedTuple

import numpy as np

from . import autodiff as ad
from .geom import (
    crossing_threshold,
    extrapolate_hypothetical,
    first_crossing,
    heading,
    approach_angle,
    pairwise_distance_matrix,
    viewing_angle,
    GeometryError,
)
from .scene import Scene
from .synth import first_arrival_step


class CyclicGraphError(ValueError):
    """An operation that requires a DAG received a cyclic graph."""


class InteractionClass(int, Enum):
    NO_INTERACTION = 0
    M_INFLUENCES_N = 1
    N_INFLUENCES_M = 2


class GraphStrategy(str, Enum):
    INDEPENDENCE = "independence"
    NO_HEURISTIC = "no-heuristic"
    EUCLIDEAN = "euclidean"
    CROSSING = "crossing"
    HYPOTHETICAL_CROSSING = "hypothetical-crossing"
    FLIPPED_CROSSING = "flipped-crossing"
    FLIPPED_HYPOTHETICAL_CROSSING = "flipped-hypothetical-crossing"

    @property
    def uses_classifier(self) -> bool:
        return self is not GraphStrategy.INDEPENDENCE and self is not GraphStrategy.EUCLIDEAN

    @property
    def uses_pretrained_classifier(self) -> bool:
        return self in (
            GraphStrategy.CROSSING,
            GraphStrategy.HYPOTHETICAL_CROSSING,
            GraphStrategy.FLIPPED_CROSSING,
            GraphStrategy.FLIPPED_HYPOTHETICAL_CROSSING,
        )

    @property
    def flipped(self) -> bool:
        return self in (
            GraphStrategy.FLIPPED_CROSSING,
            GraphStrategy.FLIPPED_HYPOTHETICAL_CROSSING,
        )

    @property
    def hypothetical(self) -> bool:
        return self in (
            GraphStrategy.HYPOTHETICAL_CROSSING,
            GraphStrategy.FLIPPED_HYPOTHETICAL_CROSSING,
        )


@dataclass(frozen=True)
class InteractionLabel:
    cls: InteractionClass
    probs: np.ndarray  # (3,), on the simplex

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (3,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probs must be a 3-simplex vector, got {p}")
        object.__setattr__(self, "probs", p)

    def flip(self) -> "InteractionLabel":
        swap = {
            InteractionClass.NO_INTERACTION: InteractionClass.NO_INTERACTION,
            InteractionClass.M_INFLUENCES_N: InteractionClass.N_INFLUENCES_M,
            InteractionClass.N_INFLUENCES_M: InteractionClass.M_INFLUENCES_N,
        }
        return InteractionLabel(swap[self.cls], self.probs[[0, 2, 1]])


def one_hot_label(cls: InteractionClass) -> InteractionLabel:
    p = np.zeros(3)
    p[int(cls)] = 1.0
    return InteractionLabel(cls, p)


@dataclass(frozen=True)
class InteractionGraph:
    """Directed weighted graph over agent ids; at most one edge per pair order."""

    nodes: tuple[str, ...]
    edges: dict  # (src, dst) -> weight in [0, 1]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        node_set = set(self.nodes)
        for (src, dst), w in self.edges.items():
            if src == dst:
                raise ValueError(f"self-loop on {src}")
            if src not in node_set or dst not in node_set:
                raise ValueError(f"edge ({src}, {dst}) references unknown node")
            if not (0.0 <= w <= 1.0) or not math.isfinite(w):
                raise ValueError(f"edge ({src}, {dst}) weight {w} outside [0, 1]")

    @cached_property
    def is_dag(self) -> bool:
        try:
            topological_order(self)
            return True
        except CyclicGraphError:
            return False

    def parents(self, node: str) -> list[str]:
        return sorted(src for (src, dst) in self.edges if dst == node)

    def out_neighbors(self, node: str) -> list[str]:
        return sorted(dst for (src, dst) in self.edges if src == node)

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [[s, d, w] for (s, d), w in sorted(self.edges.items())],
        }

    @classmethod
    def from_json(cls, rec: dict) -> "InteractionGraph":
        return cls(tuple(rec["nodes"]), {(s, d): w for s, d, w in rec["edges"]})


def independence_graph(scene) -> InteractionGraph:
    """Every agent a root: no edges, trivially a DAG."""
    return InteractionGraph(tuple(a.agent_id for a in scene.agents), {})


# -- Euclidean viewing-angle heuristic -----------------------------------


def euclidean_graph(scene, eps: float = 20.0) -> InteractionGraph:
    """Viewing-angle proximity graph from last observed positions.

    A pair within `eps` of each other gets one directed edge: the agent that
    is seen more centrally by the other influences it. Stationary observers
    see everyone at the widest possible angle (pi), so they are never the
    more attentive side. Weight is (eps - d) / eps. Works on past data only.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    agents = sorted(scene.agents, key=lambda a: a.agent_id)
    headings = {a.agent_id: heading(a.past) for a in agents}
    last = {a.agent_id: a.past.positions[-1] for a in agents}
    edges: dict[tuple[str, str], float] = {}
    for am, an in itertools.combinations(agents, 2):
        m, n = am.agent_id, an.agent_id
        d = float(np.linalg.norm(last[m] - last[n]))
        if d >= eps:
            continue
        phi_mn = _attention_angle(last[m], headings[m], last[n])
        phi_nm = _attention_angle(last[n], headings[n], last[m])
        weight = (eps - d) / eps
        if phi_nm < phi_mn:
            edges[(m, n)] = weight
        elif phi_mn < phi_nm:
            edges[(n, m)] = weight
        else:
            # exact tie: keep the graph deterministic
            edges[(m, n)] = weight
    return dagify(InteractionGraph(tuple(a.agent_id for a in scene.agents), edges))


def _attention_angle(s_obs, gamma, s_other) -> float:
    if gamma is None:
        return math.pi
    try:
        return viewing_angle(s_obs, gamma, s_other)
    except GeometryError:
        return math.pi


# -- crossing heuristics --------------------------------------------------


def crossing_labels(
    scene: Scene,
    use_hypothetical: bool = False,
    flipped: bool = False,
    symmetric_eps: bool = False,
) -> dict[tuple[str, str], InteractionLabel]:
    """Influence labels for all unordered pairs from ground-truth futures.

    Plain variant: whoever's future reaches the first crossing cell earlier
    influences the other. Hypothetical variant: the crossing test runs on
    futures extrapolated to undo interaction-induced slowing, but the
    direction still comes from which real future reached the hypothetical
    crossing point first. Ties and non-crossing pairs are NoInteraction.
    """
    agents = sorted(scene.agents, key=lambda a: a.agent_id)
    hypo = {}
    if use_hypothetical:
        hypo = {
            a.agent_id: extrapolate_hypothetical(a.past, a.future, a.atype).trajectory
            for a in agents
        }
    labels = {}
    for am, an in itertools.combinations(agents, 2):
        eps = crossing_threshold(am.atype, an.atype, symmetric_eps)
        if use_hypothetical:
            cell = first_crossing(
                pairwise_distance_matrix(hypo[am.agent_id], hypo[an.agent_id]), eps
            )
            if cell is None:
                cls = InteractionClass.NO_INTERACTION
            else:
                point = 0.5 * (
                    hypo[am.agent_id].positions[cell.t_m]
                    + hypo[an.agent_id].positions[cell.t_n]
                )
                t_m = first_arrival_step(am.future.positions, point, radius=eps)
                t_n = first_arrival_step(an.future.positions, point, radius=eps)
                cls = _direction_class(t_m, t_n)
        else:
            cell = first_crossing(pairwise_distance_matrix(am.future, an.future), eps)
            cls = (
                InteractionClass.NO_INTERACTION
                if cell is None
                else _direction_class(cell.t_m, cell.t_n)
            )
        label = one_hot_label(cls)
        labels[(am.agent_id, an.agent_id)] = label.flip() if flipped else label
    return labels


def _direction_class(t_m: int, t_n: int) -> InteractionClass:
    if t_m < t_n:
        return InteractionClass.M_INFLUENCES_N
    if t_m > t_n:
        return InteractionClass.N_INFLUENCES_M
    return InteractionClass.NO_INTERACTION


def flip_labels(labels: Mapping) -> dict:
    return {pair: lab.flip() for pair, lab in labels.items()}


def graph_from_labels(scene, labels: Mapping) -> InteractionGraph:
    """Directed graph from pairwise labels; edge weight is the label's
    probability of its winning class."""
    edges = {}
    for (m, n), lab in labels.items():
        if lab.cls is InteractionClass.M_INFLUENCES_N:
            edges[(m, n)] = float(lab.probs[1])
        elif lab.cls is InteractionClass.N_INFLUENCES_M:
            edges[(n, m)] = float(lab.probs[2])
    return dagify(InteractionGraph(tuple(a.agent_id for a in scene.agents), edges))


# -- classifier-driven graphs ---------------------------------------------


class ClassifierParams(NamedTuple):
    """Two-layer MLP: embedding then 3-way classification head."""

    w_em: object  # (f, M)
    b_em: object  # (M,)
    w_cl: object  # (M, 3)
    b_cl: object  # (3,)


def pair_feature_dim(enc_dim: int) -> int:
    # two past encodings, two type one-hots, the 2D separation, the angle
    return 2 * enc_dim + 2 * 4 + 2 + 1


def pair_features(scene, m: str, n: str, past_encoder: Callable):
    """Feature vector describing the (m, n) pair from m's perspective.

    `past_encoder` maps a past displacement sequence (n_past-1, 2) to an
    encoding vector and may return either ndarrays or autodiff Vars.
    """
    if m == n:
        raise ValueError("pair features need two distinct agents")
    am, an = scene.agent(m), scene.agent(n)
    enc_m = past_encoder(np.diff(am.past.positions, axis=0))
    enc_n = past_encoder(np.diff(an.past.positions, axis=0))
    d = am.past.positions[-1] - an.past.positions[-1]
    x_tilde = am.past.positions[-1] - am.past.positions[-2]
    alpha = approach_angle(d, x_tilde).angle
    return ad.concat(
        [enc_m, enc_n, am.atype.one_hot(), an.atype.one_hot(), d, np.array([alpha])]
    )


def classifier_logits(features, params: ClassifierParams):
    emb = ad.tanh(features @ params.w_em + params.b_em)
    return emb @ params.w_cl + params.b_cl


def classify_pair(features, params: ClassifierParams) -> InteractionLabel:
    """Softmax classification with deterministic lowest-index tie-break."""
    logits = ad.value_of(classifier_logits(features, params))
    if logits.shape != (3,):
        raise ValueError(f"expected 3 logits, got shape {logits.shape}")
    shifted = np.exp(logits - logits.max())
    probs = shifted / shifted.sum()
    cls = InteractionClass(int(np.argmax(probs)))
    return InteractionLabel(cls, probs)


def predicted_graph(
    scene, params: ClassifierParams, past_encoder: Callable
) -> InteractionGraph:
    """Graph from classifier decisions on every unordered pair, dagified.

    The argmax class decides edge existence and direction; the winning
    probability becomes the edge weight. Consumes pasts only.
    """
    ids = sorted(a.agent_id for a in scene.agents)
    edges = {}
    for m, n in itertools.combinations(ids, 2):
        label = classify_pair(pair_features(scene, m, n, past_encoder), params)
        if label.cls is InteractionClass.M_INFLUENCES_N:
            edges[(m, n)] = float(label.probs[1])
        elif label.cls is InteractionClass.N_INFLUENCES_M:
            edges[(n, m)] = float(label.probs[2])
    return dagify(InteractionGraph(tuple(a.agent_id for a in scene.agents), edges))


# -- acyclicity -----------------------------------------------------------


def _strongly_connected(nodes, adj) -> dict:
    """Iterative Tarjan; returns node -> component id."""
    index: dict = {}
    low: dict = {}
    on_stack: set = set()
    stack: list = []
    comp: dict = {}
    counter = 0
    n_comps = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(adj[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            descended = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(adj[w])))
                    descended = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if descended:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                while True:
                    w = stack.pop()
                    on_stack.remove(w)
                    comp[w] = n_comps
                    if w == v:
                        break
                n_comps += 1
    return comp


def dagify_trace(graph: InteractionGraph) -> tuple[InteractionGraph, list]:
    """Remove cycles and report which edges were dropped, in order.

    While any directed cycle remains, the minimum-weight edge lying on a
    cycle is deleted (ties by lexicographic (src, dst)). An edge lies on a
    cycle exactly when both endpoints share a strongly connected component.
    """
    edges = dict(graph.edges)
    removed = []
    while True:
        adj = {n: [] for n in graph.nodes}
        for s, d in edges:
            adj[s].append(d)
        comp = _strongly_connected(graph.nodes, adj)
        cyclic = [e for e in edges if comp[e[0]] == comp[e[1]]]
        if not cyclic:
            break
        victim = min(cyclic, key=lambda e: (edges[e], e[0], e[1]))
        removed.append(victim)
        del edges[victim]
    return InteractionGraph(graph.nodes, edges), removed


def dagify(graph: InteractionGraph) -> InteractionGraph:
    """Acyclic subgraph per the minimum-weight-cycle-edge removal rule."""
    if graph.is_dag:
        return graph
    out, _ = dagify_trace(graph)
    return out


def topological_order(graph: InteractionGraph) -> list[str]:
    """Linear extension of a DAG; among ready nodes the smallest id goes first."""
    indegree = {n: 0 for n in graph.nodes}
    out_adj: dict[str, list[str]] = {n: [] for n in graph.nodes}
    for s, d in graph.edges:
        indegree[d] += 1
        out_adj[s].append(d)
    ready = [n for n, k in indegree.items() if k == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for m in out_adj[n]:
            indegree[m] -= 1
            if indegree[m] == 0:
                heapq.heappush(ready, m)
    if len(order) != len(graph.nodes):
        raise CyclicGraphError("graph has a directed cycle")
    return order
