"""Heterogeneous attention GNN over the six typed subgraphs.

Six message-passing units share one operation but own separate weights; each
unit sweeps its subgraph's edge-depth tiers from deepest to shallowest within
a layer (SAGE+). At the deepest tier a target aggregates its sources'
previous-layer states; at shallower tiers it sees the current, tier-updated
states. A target's update concatenates its own previous-layer state with the
mean of its transformed incoming messages:

    a_j = MEAN(W_d . h_i : (i, j) at tier d)
    h_j = ReLU(W_c . (h_j_prev (+) a_j))

Nodes with no incoming edge at a tier keep their state; because an edge's
depth is a function of its target, each node is updated at most once per
unit-layer. After each layer the per-type aggregator averages every active
unit's states for nodes of that type; types covered by no active unit pass
their projected inputs through. Global soft attention pools each node type
into one vector, and a linear + hidden + output head produces the sigmoid
score (vulnerable strictly above 0.5).

The plain "sage" passer is the same operation with every edge on a single
tier, which is exactly what SAGE+ degenerates to when all depths are equal.
"""

from __future__ import annotations

import logging
import math
import random
import weakref
from dataclasses import asdict, dataclass, field, replace

import torch
from torch import nn

from .embed import PROPERTY_WIDTH, EmbeddedGraph, PropertyVocabulary
from .errors import CheckpointError, IpagError
from .graph import EDGE_KINDS, EDGE_SIGNATURES

log = logging.getLogger(__name__)

NODE_TYPES = ("t", "p", "d")
VULNERABLE = "vulnerable"
NON_VULNERABLE = "non-vulnerable"

CHECKPOINT_VERSION = 1


@dataclass
class HagnnConfig:
    hidden: int = 256
    layers: int = 2
    passer: str = "sage_plus"  # "sage_plus" | "sage"
    learning_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    max_depth: int = 8  # depth tiers per unit-layer; deeper edges clamp
    threshold: float = 0.5  # fixed classification threshold

    def validate(self) -> None:
        if self.layers < 1:
            raise IpagError("layers must be >= 1")
        if self.hidden < 1:
            raise IpagError("hidden width must be >= 1")
        if self.passer not in ("sage_plus", "sage"):
            raise IpagError(f"unknown message passer {self.passer!r}")
        if self.threshold != 0.5:
            raise IpagError("classification threshold is fixed at 0.5")
        if self.max_depth < 1:
            raise IpagError("max_depth must be >= 1")


# --- message passing --------------------------------------------------------


@dataclass
class Tier:
    """One depth tier of a subgraph: edge endpoints plus the per-target
    incoming-edge counts (targets are the unique destinations)."""

    depth: int
    src_idx: torch.Tensor
    dst_idx: torch.Tensor
    targets: torch.Tensor
    counts: torch.Tensor  # aligned with targets


def build_tiers(
    src: torch.Tensor,
    dst: torch.Tensor,
    depth: torch.Tensor,
    max_depth: int,
    passer: str = "sage_plus",
) -> list[Tier]:
    """Partition a subgraph's edges into depth tiers, deepest first.

    Depths beyond max_depth clamp to max_depth; the plain "sage" passer puts
    every edge on a single tier.
    """
    if len(src) == 0:
        return []
    if passer == "sage":
        depth = torch.ones_like(depth)
    else:
        depth = depth.clamp(max=max_depth)
    tiers = []
    for d in sorted(torch.unique(depth).tolist(), reverse=True):
        mask = depth == d
        dst_idx = dst[mask]
        targets, inverse = torch.unique(dst_idx, return_inverse=True)
        counts = torch.zeros(len(targets), dtype=torch.float64)
        counts = counts.index_add(0, inverse, torch.ones(len(dst_idx), dtype=torch.float64))
        tiers.append(
            Tier(
                depth=int(d),
                src_idx=src[mask],
                dst_idx=dst_idx,
                targets=targets,
                counts=counts,
            )
        )
    return tiers


def sage_plus_forward(
    w_depth: list[torch.Tensor],
    w_concat: torch.Tensor,
    tiers: list[Tier],
    states: dict[str, torch.Tensor],
    src_type: str,
    dst_type: str,
) -> dict[str, torch.Tensor]:
    """One unit-layer sweep over precomputed depth tiers (deepest first).

    At the deepest tier sources are read from the previous-layer states; at
    shallower tiers from the current, tier-updated states (which only differs
    when source and target types coincide). A target's update is
    ReLU(W_c . (h_prev (+) mean of W_d . h_src)); nodes that are not a target
    at any tier keep their state. The mean over an empty neighbour set is the
    zero vector, though tiers never contain edge-less targets. Source-type
    states pass through unchanged when the types differ.
    """
    h_src_prev = states[src_type]
    h_dst_prev = states[dst_type]
    out = {dst_type: h_dst_prev}
    out.setdefault(src_type, h_src_prev)
    if not tiers:
        return out
    same = src_type == dst_type
    dst_new = h_dst_prev
    for i, tier in enumerate(tiers):
        src_states = h_src_prev if i == 0 else (dst_new if same else h_src_prev)
        w = w_depth[min(tier.depth, len(w_depth)) - 1]
        messages = src_states[tier.src_idx] @ w.T
        sums = torch.zeros(h_dst_prev.shape[0], messages.shape[1], dtype=messages.dtype)
        sums = sums.index_add(0, tier.dst_idx, messages)
        agg = sums[tier.targets] / tier.counts.unsqueeze(1)
        updated = torch.relu(
            torch.cat([h_dst_prev[tier.targets], agg], dim=1) @ w_concat.T
        )
        dst_new = dst_new.index_copy(0, tier.targets, updated)
    out[dst_type] = dst_new
    if same:
        out[src_type] = dst_new
    return out


def gsa_pool(
    states: torch.Tensor, gate: nn.Linear, transform: nn.Linear
) -> torch.Tensor:
    """Global soft attention readout: softmax-gated sum of transformed states.

    Returns the zero vector for an empty node set.
    """
    if states.shape[0] == 0:
        return torch.zeros(transform.out_features, dtype=states.dtype)
    weights = torch.softmax(gate(states), dim=0)
    return (weights * transform(states)).sum(dim=0)


class _UnitLayer(nn.Module):
    """Weights of one unit at one layer: per-tier W_d plus the shared W_c."""

    def __init__(self, hidden: int, tiers: int):
        super().__init__()
        self.w_depth = nn.ParameterList(
            nn.Parameter(torch.empty(hidden, hidden, dtype=torch.float64))
            for _ in range(tiers)
        )
        self.w_concat = nn.Parameter(torch.empty(hidden, 2 * hidden, dtype=torch.float64))


class HagnnModel(nn.Module):
    def __init__(self, config: HagnnConfig, vocab: PropertyVocabulary, d_t: int):
        super().__init__()
        config.validate()
        self.config = config
        self.vocab = vocab
        self.d_t = d_t
        h = config.hidden
        self.proj = nn.ModuleDict(
            {
                "t": nn.Linear(d_t + 6, h, dtype=torch.float64),
                "p": nn.Linear(PROPERTY_WIDTH + 6, h, dtype=torch.float64),
                "d": nn.Linear(d_t + 6, h, dtype=torch.float64),
            }
        )
        self.units = nn.ModuleDict(
            {
                kind: nn.ModuleList(
                    _UnitLayer(h, config.max_depth) for _ in range(config.layers)
                )
                for kind in EDGE_KINDS
            }
        )
        self.gate = nn.ModuleDict(
            {t: nn.Linear(h, 1, dtype=torch.float64) for t in NODE_TYPES}
        )
        self.transform = nn.ModuleDict(
            {t: nn.Linear(h, h, dtype=torch.float64) for t in NODE_TYPES}
        )
        self.head_linear = nn.Linear(3 * h, h, dtype=torch.float64)
        self.head_hidden = nn.Linear(h, h, dtype=torch.float64)
        self.head_out = nn.Linear(h, 1, dtype=torch.float64)
        self._cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
        self.reset_parameters(config.seed)

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        for name, p in sorted(self.named_parameters()):
            if p.dim() <= 1:
                with torch.no_grad():
                    p.zero_()
            else:
                std = math.sqrt(2.0 / p.shape[1])
                with torch.no_grad():
                    p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * std)

    # --- forward ---------------------------------------------------------

    def _graph_inputs(self, eg: EmbeddedGraph) -> dict:
        """Weight-independent per-graph tensors: the node features with each
        unit's edge one-hot appended, and the per-unit depth tiers. Cached on
        the model keyed by graph identity."""
        cached = self._cache.get(eg)
        if cached is not None:
            return cached
        raw = {
            "t": torch.as_tensor(eg.features.token_matrix, dtype=torch.float64),
            "p": torch.as_tensor(eg.features.property_matrix, dtype=torch.float64),
            "d": torch.as_tensor(eg.features.declaration_matrix, dtype=torch.float64),
        }

        def with_tail(x: torch.Tensor, tail: torch.Tensor) -> torch.Tensor:
            return torch.cat([x, tail.expand(x.shape[0], 6)], dim=1)

        base_in = {t: with_tail(x, torch.zeros(6, dtype=torch.float64)) for t, x in raw.items()}
        unit_in = {}
        tiers = {}
        active = []
        for kind in EDGE_KINDS:
            sub = eg.subgraphs[kind]
            if len(sub) == 0:
                continue
            active.append(kind)
            onehot = torch.as_tensor(sub.onehot, dtype=torch.float64)
            src_type, dst_type = EDGE_SIGNATURES[kind]
            unit_in[kind] = {t: with_tail(raw[t], onehot) for t in {src_type, dst_type}}
            tiers[kind] = build_tiers(
                torch.as_tensor(sub.src, dtype=torch.int64),
                torch.as_tensor(sub.dst, dtype=torch.int64),
                torch.as_tensor(sub.depth, dtype=torch.int64),
                self.config.max_depth,
                self.config.passer,
            )
        inputs = {"base_in": base_in, "unit_in": unit_in, "tiers": tiers, "active": active}
        self._cache[eg] = inputs
        return inputs

    def hetero_layer(
        self,
        inputs: dict,
        k: int,
        states: dict[str, torch.Tensor] | None,
    ) -> dict[str, torch.Tensor]:
        """One heterogeneous layer: every active unit sweeps its subgraph,
        then node states aggregate per type as the element-wise mean across
        the units that include the type. Types no active unit covers pass
        their projected inputs through."""
        contributions: dict[str, list[torch.Tensor]] = {t: [] for t in NODE_TYPES}
        for kind in inputs["active"]:
            src_type, dst_type = EDGE_SIGNATURES[kind]
            if k == 0:
                h_in = {
                    t: self.proj[t](x) for t, x in inputs["unit_in"][kind].items()
                }
            else:
                h_in = {t: states[t] for t in {src_type, dst_type}}
            unit = self.units[kind][k]
            out = sage_plus_forward(
                list(unit.w_depth),
                unit.w_concat,
                inputs["tiers"][kind],
                h_in,
                src_type,
                dst_type,
            )
            for t, h in out.items():
                contributions[t].append(h)
        new_states = {}
        for t in NODE_TYPES:
            if contributions[t]:
                stacked = contributions[t]
                new_states[t] = (
                    stacked[0] if len(stacked) == 1 else torch.stack(stacked).mean(dim=0)
                )
            elif states is not None:
                new_states[t] = states[t]
            else:
                new_states[t] = self.proj[t](inputs["base_in"][t])
        return new_states

    def forward(self, eg: EmbeddedGraph) -> torch.Tensor:
        """Logit for one embedded graph (apply sigmoid for the score)."""
        if eg.d_t != self.d_t:
            raise IpagError(
                f"graph embedded at d_t={eg.d_t} but model expects d_t={self.d_t}"
            )
        inputs = self._graph_inputs(eg)
        states: dict[str, torch.Tensor] | None = None
        for k in range(self.config.layers):
            states = self.hetero_layer(inputs, k, states)
        pooled = {
            t: gsa_pool(states[t], self.gate[t], self.transform[t])
            for t in NODE_TYPES
        }
        return self.classify_pooled(pooled["d"], pooled["p"], pooled["t"])

    def classify_pooled(
        self, v_d: torch.Tensor, v_p: torch.Tensor, v_t: torch.Tensor
    ) -> torch.Tensor:
        z = self.head_linear(torch.cat([v_d, v_p, v_t]))
        z = torch.relu(self.head_hidden(z))
        return self.head_out(z).squeeze(-1)

    def score(self, eg: EmbeddedGraph) -> float:
        with torch.no_grad():
            logit = self.forward(eg)
        value = float(torch.sigmoid(logit))
        if not math.isfinite(value):
            raise IpagError(f"non-finite classification score for {eg.origin!r}")
        return value


def classify(model: HagnnModel, eg: EmbeddedGraph) -> tuple[float, str]:
    """(score, label); vulnerable strictly above the 0.5 threshold."""
    score = model.score(eg)
    return score, VULNERABLE if score > 0.5 else NON_VULNERABLE


# --- training ---------------------------------------------------------------


def _label_target(label: str | None, origin: str) -> float:
    if label == VULNERABLE:
        return 1.0
    if label == NON_VULNERABLE:
        return 0.0
    raise IpagError(f"routine {origin!r} has no label")


def train(
    graphs: list[EmbeddedGraph],
    config: HagnnConfig,
    vocab: PropertyVocabulary,
    model: HagnnModel | None = None,
) -> tuple[HagnnModel, list[dict]]:
    """Fit the model with plain fixed-step SGD on binary cross-entropy.

    Deterministic for a fixed seed. Emits one curve entry per epoch with the
    mean loss and training accuracy; on divergence (non-finite loss) training
    aborts and the weights roll back to the last finished epoch.
    """
    config.validate()
    if len(graphs) < 2:
        raise IpagError("training needs at least 2 labelled graphs")
    targets = [_label_target(g.label, g.origin) for g in graphs]
    if len(set(targets)) < 2:
        raise IpagError("training corpus must contain both labels")
    torch.set_num_threads(1)  # tiny-tensor workloads; avoids sync overhead
    d_t = graphs[0].d_t
    if model is None:
        model = HagnnModel(config, vocab, d_t)
    opt = torch.optim.SGD(model.parameters(), lr=config.learning_rate)
    rng = random.Random(config.seed)
    curve: list[dict] = []
    snapshot = {k: v.detach().clone() for k, v in model.state_dict().items()}
    for epoch in range(config.epochs):
        order = list(range(len(graphs)))
        rng.shuffle(order)
        total_loss = 0.0
        diverged = False
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            opt.zero_grad()
            losses = []
            for i in batch:
                logit = model(graphs[i])
                y = torch.tensor(targets[i], dtype=torch.float64)
                losses.append(
                    torch.nn.functional.binary_cross_entropy_with_logits(logit, y)
                )
            loss = torch.stack(losses).mean()
            if not torch.isfinite(loss):
                diverged = True
                break
            loss.backward()
            opt.step()
            total_loss += float(loss.detach()) * len(batch)
        correct = 0
        if not diverged:
            with torch.no_grad():
                for i, g in enumerate(graphs):
                    logit = model(g)
                    if not torch.isfinite(logit):
                        diverged = True
                        break
                    if (float(torch.sigmoid(logit)) > 0.5) == (targets[i] == 1.0):
                        correct += 1
        if diverged:
            log.warning(
                "loss diverged at epoch %d; rolling back to last checkpoint", epoch
            )
            model.load_state_dict(snapshot)
            break
        snapshot = {k: v.detach().clone() for k, v in model.state_dict().items()}
        curve.append(
            {
                "epoch": epoch,
                "loss": total_loss / len(graphs),
                "accuracy": correct / len(graphs),
            }
        )
    return model, curve


def predict(
    model: HagnnModel, graphs: list[EmbeddedGraph]
) -> list[tuple[str, float, str]]:
    """Deterministic per-routine (origin, score, label), in input order."""
    out = []
    for eg in graphs:
        score, label = classify(model, eg)
        out.append((eg.origin, score, label))
    return out


# --- metrics and evaluation ---------------------------------------------------


METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "fpr", "fnr")


def metrics_from_counts(tp: int, tn: int, fp: int, fn: int) -> dict[str, float | None]:
    """Standard confusion-matrix metrics; undefined ratios are None, never 0."""

    def ratio(num: int, den: int) -> float | None:
        return num / den if den else None

    precision = ratio(tp, tp + fp)
    recall = ratio(tp, tp + fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return {
        "accuracy": ratio(tp + tn, tp + tn + fp + fn),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "fpr": ratio(fp, fp + tn),
        "fnr": ratio(fn, fn + tp),
    }


def geometric_mean(values: list[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    if any(v == 0.0 for v in defined):
        return 0.0
    return math.exp(sum(math.log(v) for v in defined) / len(defined))


@dataclass
class FoldMetrics:
    fold: int
    tp: int
    tn: int
    fp: int
    fn: int
    metrics: dict[str, float | None] = field(default_factory=dict)


@dataclass
class EvalReport:
    tp: int
    tn: int
    fp: int
    fn: int
    metrics: dict[str, float | None]
    folds: list[FoldMetrics]
    geometric: dict[str, float | None]

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "tn": self.tn,
            "fp": self.fp,
            "fn": self.fn,
            "metrics": self.metrics,
            "folds": [
                {"fold": f.fold, "tp": f.tp, "tn": f.tn, "fp": f.fp, "fn": f.fn, **f.metrics}
                for f in self.folds
            ],
            "geometric_mean": self.geometric,
        }


def evaluate(
    model: HagnnModel, graphs: list[EmbeddedGraph], folds: int = 5
) -> EvalReport:
    """Stratified k-fold cross-validation (80/20 at the default 5 folds).

    Each fold trains a fresh model from the passed model's config and
    vocabulary (fold seed = config.seed + fold + 1) on the other folds, then
    scores the held-out fold. Reports per-fold metrics and their geometric
    means; a fold whose metrics are undefined contributes nothing to the
    mean of those metrics.
    """
    if len(graphs) < folds:
        raise IpagError(f"corpus of {len(graphs)} graphs cannot split into {folds} folds")
    targets = [_label_target(g.label, g.origin) for g in graphs]
    rng = random.Random(model.config.seed)
    pos = [i for i, y in enumerate(targets) if y == 1.0]
    neg = [i for i, y in enumerate(targets) if y == 0.0]
    rng.shuffle(pos)
    rng.shuffle(neg)

    fold_reports: list[FoldMetrics] = []
    totals = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
    for fold in range(folds):
        test_idx = set(pos[fold::folds]) | set(neg[fold::folds])
        train_graphs = [g for i, g in enumerate(graphs) if i not in test_idx]
        test_graphs = [(i, graphs[i]) for i in sorted(test_idx)]
        cfg = replace(model.config, seed=model.config.seed + fold + 1)
        fitted, _ = train(train_graphs, cfg, model.vocab)
        tp = tn = fp = fn = 0
        for i, eg in test_graphs:
            predicted_vulnerable = fitted.score(eg) > 0.5
            actual = targets[i] == 1.0
            if predicted_vulnerable and actual:
                tp += 1
            elif predicted_vulnerable and not actual:
                fp += 1
            elif not predicted_vulnerable and actual:
                fn += 1
            else:
                tn += 1
        fold_reports.append(
            FoldMetrics(
                fold=fold, tp=tp, tn=tn, fp=fp, fn=fn,
                metrics=metrics_from_counts(tp, tn, fp, fn),
            )
        )
        totals["tp"] += tp
        totals["tn"] += tn
        totals["fp"] += fp
        totals["fn"] += fn

    geometric = {
        name: geometric_mean([f.metrics[name] for f in fold_reports])
        for name in METRIC_NAMES
    }
    return EvalReport(
        tp=totals["tp"],
        tn=totals["tn"],
        fp=totals["fp"],
        fn=totals["fn"],
        metrics=metrics_from_counts(**totals),
        folds=fold_reports,
        geometric=geometric,
    )


# --- checkpoints ----------------------------------------------------------------


def save_checkpoint(model: HagnnModel, path: str, embedder_info: dict | None = None) -> None:
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "kind": "hagnn-checkpoint",
            "config": asdict(model.config),
            "vocab": model.vocab.names,
            "d_t": model.d_t,
            "embedder": embedder_info or {},
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str) -> tuple[HagnnModel, dict]:
    try:
        doc = torch.load(path, weights_only=False)
    except Exception as exc:  # torch raises various unpickling errors
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("kind") != "hagnn-checkpoint":
        raise CheckpointError(f"{path} is not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    config = HagnnConfig(**doc["config"])
    model = HagnnModel(config, PropertyVocabulary(names=doc["vocab"]), doc["d_t"])
    model.load_state_dict(doc["state_dict"])
    return model, doc.get("embedder", {})
