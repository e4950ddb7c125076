"""Visual-prototype-based ZSL.

One learnable prototype per seen class is trained by softmax cross-entropy
over inner products with the training features (prototypes are the only
parameters this phase touches). A semantic MLP is then fitted to map each
seen class's attribute vector onto its prototype. The two phases alternate.
Test features are assigned to the class whose embedded attribute vector is
nearest.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import mlp
from .errors import ConfigError, DatasetError, ShapeError
from .tensor import Rng, as_matrix, nearest_class, softmax_row
from .trainlog import TrainLog

_STREAM_INIT = 11
_STREAM_SHUFFLE = 12


@dataclass(eq=False)
class PrototypeBank:
    protos: np.ndarray  # p × d, row i belongs to classes[i]
    classes: np.ndarray  # seen class ids, dataset order

    def __post_init__(self):
        self.protos = as_matrix(self.protos, "protos").copy()
        self.classes = np.asarray(self.classes, dtype=np.int64)
        if self.protos.shape[0] != self.classes.size:
            raise ShapeError(f"{self.protos.shape[0]} prototypes for {self.classes.size} classes")
        if not np.isfinite(self.protos).all():
            raise ValueError("prototypes must be finite")

    def copy(self):
        return PrototypeBank(self.protos, self.classes)

    def rows_of(self, labels):
        """Prototype rows for global class ids; raises for non-seen labels."""
        labels = np.asarray(labels, dtype=np.int64)
        order = np.argsort(self.classes)
        pos = np.searchsorted(self.classes[order], labels)
        pos = np.clip(pos, 0, self.classes.size - 1)
        rows = order[pos]
        bad = self.classes[rows] != labels
        if bad.any():
            raise DatasetError(f"labels {sorted(set(labels[bad].tolist()))} are not seen classes")
        return rows


@dataclass
class VpbConfig:
    """Training hyperparameters; defaults follow the AwA settings for this method."""

    batch_size: int = 100
    lr_proto: float = 1e-5
    lr_embed: float = 1e-6
    hidden: int = 800
    lambda_emb: float = 1e-4
    proto_iters_per_round: int = 500
    embed_iters_per_round: int = 1000
    rounds: int = 20
    seed: int = 0
    proto_mode: str = "learned"

    def validate(self):
        for name in ("lr_proto", "lr_embed"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("batch_size", "hidden", "proto_iters_per_round", "embed_iters_per_round", "rounds"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if self.lambda_emb < 0:
            raise ConfigError(f"lambda_emb must be >= 0, got {self.lambda_emb}")
        if self.proto_mode not in ("learned", "centroid"):
            raise ConfigError(f"proto_mode must be 'learned' or 'centroid', got {self.proto_mode!r}")
        return self

    def to_dict(self):
        return asdict(self)


def init_prototypes(ds):
    """Per-class mean of the training features, in ``ds.seen_classes`` order."""
    rows = []
    for c in ds.seen_classes:
        idx = ds.train_instances_of(c)
        if idx.size == 0:
            raise DatasetError(f"seen class {int(c)} has no training instances")
        rows.append(ds.features[idx].mean(axis=0))
    return PrototypeBank(np.stack(rows), ds.seen_classes)


def proto_loss_grad(bank, features, labels):
    """Summed cross-entropy of inner-product logits; gradient w.r.t. prototypes only."""
    x = as_matrix(features, "features")
    if x.shape[1] != bank.protos.shape[1]:
        raise ShapeError(f"features are {x.shape[1]}-dim, prototypes {bank.protos.shape[1]}-dim")
    rows = bank.rows_of(labels)
    logits = x @ bank.protos.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    n = x.shape[0]
    loss = float(np.sum(log_norm - shifted[np.arange(n), rows]))
    resid = softmax_row(logits)
    resid[np.arange(n), rows] -= 1.0
    return loss, resid.T @ x


def embed_loss_grad(net, bank, attributes, lambda_emb=0.0):
    """Prototype-fitting loss of the semantic net, including its L2 term."""
    loss, g = mlp.grad_sq_target(net, np.asarray(attributes)[bank.classes], bank.protos)
    loss += lambda_emb * mlp.l2_penalty(net)
    return loss, g


def _batches(rng, indices, batch_size):
    """Endless stream of shuffled mini-batches; reshuffles when a full batch no longer fits."""
    size = min(batch_size, indices.size)
    while True:
        perm = indices[rng.permutation(indices.size)]
        for start in range(0, perm.size - size + 1, size):
            yield perm[start:start + size]


@dataclass(eq=False)
class VpbModel:
    bank: PrototypeBank
    net: mlp.TwoLayerNet

    def embed_classes(self, attributes):
        return mlp.forward(self.net, attributes)

    def predict(self, attributes, features, candidates):
        return nearest_class(as_matrix(features), self.embed_classes(attributes), candidates)

    def recognizer(self, attributes):
        class_emb = self.embed_classes(attributes)
        return lambda features, candidates: nearest_class(as_matrix(features), class_emb, candidates)


def train(ds, cfg=None, log_every=1):
    """Alternate prototype learning and semantic embedding for ``cfg.rounds`` rounds.

    Returns ``(bank, net, log)``. The log has one row per iteration (or every
    ``log_every`` iterations) with columns ``iteration, phase, loss``.
    """
    cfg = (cfg or VpbConfig()).validate()
    root = Rng(cfg.seed)
    bank = init_prototypes(ds)
    net = mlp.init(root.substream(_STREAM_INIT), ds.k, cfg.hidden, ds.d, "xavier")
    batches = _batches(root.substream(_STREAM_SHUFFLE), ds.train_indices, cfg.batch_size)
    labels = ds.labels
    log = TrainLog(("iteration", "phase", "loss"))
    it = 0
    for _ in range(cfg.rounds):
        if cfg.proto_mode == "learned":
            for _ in range(cfg.proto_iters_per_round):
                batch = next(batches)
                loss, grad = proto_loss_grad(bank, ds.features[batch], labels[batch])
                bank.protos -= cfg.lr_proto * grad
                if it % log_every == 0:
                    log.append(it, "proto", loss)
                it += 1
        for _ in range(cfg.embed_iters_per_round):
            loss, g = embed_loss_grad(net, bank, ds.attributes, cfg.lambda_emb)
            mlp.sgd_step(net, g, cfg.lr_embed, cfg.lambda_emb)
            if it % log_every == 0:
                log.append(it, "embed", loss)
            it += 1
    return bank, net, log


def recognize(net, attributes, candidate_classes, x):
    """Class among ``candidate_classes`` whose embedded attributes are nearest ``x``."""
    x = as_matrix(x, "x")
    if x.shape[0] != 1:
        raise ShapeError("recognize takes a single 1×d feature")
    if net.out_dim != x.shape[1]:
        raise ShapeError(f"net emits {net.out_dim}-dim vectors but x is {x.shape[1]}-dim")
    return int(nearest_class(x, mlp.forward(net, attributes), candidate_classes)[0])


def prototype_accuracy(bank, features, labels):
    """Accuracy of argmax inner-product classification against the prototypes."""
    pred = bank.classes[np.argmax(as_matrix(features) @ bank.protos.T, axis=1)]
    return float(np.mean(pred == np.asarray(labels)))


def bank_as_net(bank):
    """Pack prototypes into a checkpoint record: in=d, hidden=p, out=0."""
    return mlp.TwoLayerNet(bank.protos, np.zeros((0, bank.protos.shape[0])))


def bank_from_net(net, classes):
    if net.out_dim != 0:
        raise ShapeError("prototype record must have out=0")
    return PrototypeBank(net.w1, classes)


def save_model(path, bank, net):
    mlp.save_checkpoint(path, [net, bank_as_net(bank)])


def load_model(path, seen_classes):
    nets = mlp.load_checkpoint(path)
    if len(nets) != 2:
        raise ShapeError(f"VPB checkpoint must hold 2 records, found {len(nets)}")
    return VpbModel(bank_from_net(nets[1], seen_classes), nets[0])
