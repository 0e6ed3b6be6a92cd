"""Multi-modal contrastive pretraining against precomputed embeddings.

Text and image encoders are frozen upstream; their outputs arrive as
PFEMB v1 files (one per building: prompt rows plus view rows) and a PFCLS
v1 class-prompt file used for zero-shot classification. Pretraining
aligns the point encoder's projected global feature with the averaged
text embedding and one randomly drawn image view through a symmetric
InfoNCE loss with per-modality learnable temperatures.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Dense, Module, Parameter

_EMB_MAGIC = b"PFEMB v1\n"
_CLS_MAGIC = b"PFCLS v1\n"


class EmbeddingError(IOError):
    """Malformed embedding container."""


@dataclass(frozen=True)
class EmbeddingTriplet:
    """Frozen-encoder outputs for one building."""

    name: str
    text_embeddings: np.ndarray  # (n_prompts, D)
    image_embeddings: np.ndarray  # (n_views, D)

    def __post_init__(self):
        if self.text_embeddings.ndim != 2 or self.image_embeddings.ndim != 2:
            raise EmbeddingError("embeddings must be 2-D row matrices")
        if self.text_embeddings.shape[1] != self.image_embeddings.shape[1]:
            raise EmbeddingError("text/image embedding widths differ")
        if not (
            np.isfinite(self.text_embeddings).all()
            and np.isfinite(self.image_embeddings).all()
        ):
            raise EmbeddingError("embeddings contain non-finite values")

    @property
    def dim(self) -> int:
        return self.text_embeddings.shape[1]


def save_embedding_triplet(triplet: EmbeddingTriplet, path) -> None:
    name = triplet.name.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_EMB_MAGIC)
        fh.write(struct.pack("<H", len(name)))
        fh.write(name)
        fh.write(
            struct.pack(
                "<III",
                triplet.dim,
                triplet.text_embeddings.shape[0],
                triplet.image_embeddings.shape[0],
            )
        )
        fh.write(triplet.text_embeddings.astype("<f4").tobytes())
        fh.write(triplet.image_embeddings.astype("<f4").tobytes())


def load_embedding_triplet(path) -> EmbeddingTriplet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_EMB_MAGIC):
        raise EmbeddingError(f"{path}: not a PFEMB v1 file")
    off = len(_EMB_MAGIC)
    (name_len,) = struct.unpack_from("<H", blob, off)
    off += 2
    name = blob[off : off + name_len].decode("utf-8")
    off += name_len
    dim, n_text, n_image = struct.unpack_from("<III", blob, off)
    off += 12
    text = np.frombuffer(blob, dtype="<f4", count=dim * n_text, offset=off)
    off += text.nbytes
    image = np.frombuffer(blob, dtype="<f4", count=dim * n_image, offset=off)
    off += image.nbytes
    if off != len(blob):
        raise EmbeddingError(f"{path}: payload size mismatch")
    return EmbeddingTriplet(
        name=name,
        text_embeddings=text.reshape(n_text, dim).astype(np.float32),
        image_embeddings=image.reshape(n_image, dim).astype(np.float32),
    )


def save_class_prompts(names, features: np.ndarray, path) -> None:
    """Class-prompt file: one embedded prompt vector per category."""
    if len(names) != features.shape[0]:
        raise EmbeddingError("one feature row per class name required")
    with open(path, "wb") as fh:
        fh.write(_CLS_MAGIC)
        fh.write(struct.pack("<II", len(names), features.shape[1]))
        for name, row in zip(names, features):
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(np.asarray(row, dtype="<f4").tobytes())


def load_class_prompts(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_CLS_MAGIC):
        raise EmbeddingError(f"{path}: not a PFCLS v1 file")
    off = len(_CLS_MAGIC)
    count, dim = struct.unpack_from("<II", blob, off)
    off += 8
    names = []
    rows = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        names.append(blob[off : off + name_len].decode("utf-8"))
        off += name_len
        rows[i] = np.frombuffer(blob, dtype="<f4", count=dim, offset=off)
        off += dim * 4
    if off != len(blob):
        raise EmbeddingError(f"{path}: payload size mismatch")
    return names, rows


def average_text_embedding(triplet: EmbeddingTriplet) -> np.ndarray:
    """Mean prompt row, L2-normalized; errors on a zero mean."""
    if triplet.text_embeddings.shape[0] < 1:
        raise EmbeddingError(f"{triplet.name}: no prompt rows")
    mean = triplet.text_embeddings.mean(axis=0)
    norm = float(np.sqrt((mean.astype(np.float64) ** 2).sum()))
    if norm < 1e-12:
        raise EmbeddingError(f"{triplet.name}: prompt rows average to the zero vector")
    return (mean / norm).astype(np.float32)


class ProjectionHead(Module):
    """Projection into the frozen embedding space with learnable temperatures.

    A single bias-free matrix maps encoder width to the embedding width;
    tau is kept positive by parameterizing log tau, one per modality.
    """

    TAU_INIT = 0.07

    def __init__(self, encoder_width: int, embed_dim: int):
        self.proj = Dense(encoder_width, embed_dim, bias=False)
        self.log_tau_text = Parameter(
            (), f"constant:{math.log(self.TAU_INIT)}", weight_decay_exempt=True
        )
        self.log_tau_image = Parameter(
            (), f"constant:{math.log(self.TAU_INIT)}", weight_decay_exempt=True
        )

    def project(self, features) -> Tensor:
        return ad.l2_normalize(self.proj(features))

    def tau(self, modality: str) -> Tensor:
        param = self.log_tau_text if modality == "text" else self.log_tau_image
        return ad.exp(param.tensor)


def contrastive_alignment_loss(point_features, target_features, tau) -> Tensor:
    """Symmetric InfoNCE between aligned rows of two feature matrices.

    Rows are L2-normalized here; ``tau`` may be a float or a scalar Tensor
    (gradients flow into a learnable temperature). Targets are constants.
    """
    p = point_features if isinstance(point_features, Tensor) else Tensor(np.asarray(point_features))
    t = target_features if isinstance(target_features, Tensor) else Tensor(np.asarray(target_features))
    if not (np.isfinite(p.data).all() and np.isfinite(t.data).all()):
        raise ValueError("contrastive loss inputs must be finite")
    b = p.data.shape[0]
    pn = ad.l2_normalize(p)
    tn = ad.l2_normalize(t)
    sims = ad.matmul(pn, ad.transpose(tn))
    if isinstance(tau, Tensor):
        logits = ad.mul(sims, ad.reciprocal(tau))
    else:
        logits = ad.mul(sims, 1.0 / float(tau))
    diag = np.arange(b)
    fwd = ad.softmax_cross_entropy(logits, diag)
    bwd = ad.softmax_cross_entropy(ad.transpose(logits), diag)
    return ad.mul(ad.add(fwd, bwd), 0.5)


def zero_shot_classify(point_feature, class_text_features):
    """Nearest class prompt by cosine similarity.

    Returns (argmax class index, top-5 indices in descending similarity).
    Ties resolve to the lower index; the prediction is invariant to
    positive rescaling of the point feature.
    """
    f = np.asarray(point_feature, dtype=np.float64).reshape(-1)
    rows = np.asarray(class_text_features, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1)
    sims = rows @ f / np.where(norms > 0, norms, 1.0)
    order = np.lexsort((np.arange(len(sims)), -sims))
    top5 = order[: min(5, len(sims))]
    return int(top5[0]), top5.astype(np.int64)


def pretraining_losses(head: ProjectionHead, global_features, text_targets, image_targets):
    """Point-text plus point-image contrastive terms, equally weighted."""
    projected = head.project(global_features)
    loss_text = contrastive_alignment_loss(projected, text_targets, head.tau("text"))
    loss_image = contrastive_alignment_loss(projected, image_targets, head.tau("image"))
    return ad.add(loss_text, loss_image)


def pretrain_step(model, head, optimizer, lr, coords, feats, triplets, rng):
    """One pretraining update; embedding targets never receive gradients.

    Per sample, the text target is the averaged prompt embedding and the
    image target a uniformly drawn view row.
    """
    text_targets = np.stack([average_text_embedding(t) for t in triplets])
    image_targets = np.stack(
        [t.image_embeddings[int(rng.integers(t.image_embeddings.shape[0]))] for t in triplets]
    )
    model.zero_grad()
    head.zero_grad()
    out = model.forward(coords, feats, training=True, rng=rng)
    loss = pretraining_losses(head, out.global_feature, text_targets, image_targets)
    loss.backward()
    optimizer.step(lr)
    return float(loss.data)


def encode_for_zero_shot(model, head, coords, feats) -> np.ndarray:
    """Deterministic projected features for a batch of clouds."""
    out = model.forward(coords, feats, training=False, rng=None)
    return head.project(out.global_feature).data
