"""Training orchestration: supervised pretraining, the semi-supervised
mean-teacher loop, EMA updates, tiled inference and metric evaluation.

Phases share one deterministic recipe: every step derives its RNG from
(seed, phase, iteration), so a resumed run samples exactly what an
uninterrupted one would, and two single-threaded runs of the same config
produce bit-identical loss trajectories.
"""

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from . import metrics
from .data import random_crop
from .errors import ConfigError, ContractViolation, NumericError
from .losses import LossWeights, bcp_loss, consistency_loss, seg_loss, total_loss
from .mixing import generate_mask, mix, mix_labels
from .model import ModelConfig, build
from .wavelet import frequency_triple

_PRETRAIN_STREAM = 11
_SSL_STREAM = 22


@dataclass
class TrainConfig:
    pretrain_iterations: int = 300
    ssl_iterations: int = 600
    batch_pairs: int = 4
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    poly_power: float = 0.9
    ema_decay: float = 0.99
    mask_ratio: float = 2.0 / 3.0
    unlabeled_weight: float = 0.5
    consistency_weight: float = 1.0
    wavelet_family: str = "haar"
    patch: tuple = (64, 64)
    eval_interval: int = 200
    seed: int = 1337
    threads: int = 1

    def __post_init__(self):
        self.patch = tuple(int(p) for p in self.patch)
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ConfigError(f"ema_decay must be in [0, 1], got {self.ema_decay}")
        if self.pretrain_iterations < 1 or self.ssl_iterations < 1:
            raise ConfigError("iteration counts must be positive")
        if self.batch_pairs < 1:
            raise ConfigError("batch_pairs must be >= 1")
        if not 0.0 < self.mask_ratio <= 1.0:
            raise ConfigError(f"mask_ratio must be in (0, 1], got {self.mask_ratio}")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")

    def loss_weights(self):
        return LossWeights(alpha=self.unlabeled_weight, consistency=self.consistency_weight)


def config_hash(model_config, train_config):
    blob = json.dumps(
        {"model": asdict(model_config), "train": asdict(train_config)},
        sort_keys=True, default=list,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    student_state: dict
    teacher_state: dict
    optimizer_state: dict | None
    iteration: int = 0
    phase: str = "pretrain"
    metric_history: list = field(default_factory=list)

    def __post_init__(self):
        s_keys = set(self.student_state)
        t_keys = set(self.teacher_state)
        if s_keys != t_keys:
            raise ContractViolation("student and teacher parameter name-sets differ")

    @property
    def hash(self):
        return config_hash(self.model_config, self.train_config)


def save_checkpoint(checkpoint, path):
    torch.save(
        {
            "model_config": asdict(checkpoint.model_config),
            "train_config": asdict(checkpoint.train_config),
            "student_state": checkpoint.student_state,
            "teacher_state": checkpoint.teacher_state,
            "optimizer_state": checkpoint.optimizer_state,
            "iteration": checkpoint.iteration,
            "phase": checkpoint.phase,
            "metric_history": checkpoint.metric_history,
            "config_hash": checkpoint.hash,
        },
        path,
    )
    return path


def load_checkpoint(path):
    blob = torch.load(path, map_location="cpu", weights_only=False)
    return Checkpoint(
        model_config=ModelConfig(**blob["model_config"]),
        train_config=TrainConfig(**blob["train_config"]),
        student_state=blob["student_state"],
        teacher_state=blob["teacher_state"],
        optimizer_state=blob["optimizer_state"],
        iteration=blob["iteration"],
        phase=blob["phase"],
        metric_history=blob["metric_history"],
    )


# ---------------------------------------------------------------------------
# Parameter updates
# ---------------------------------------------------------------------------


@torch.no_grad()
def ema_update(teacher, student, decay):
    """teacher <- decay * teacher + (1 - decay) * student, every parameter.

    Floating-point buffers (batch-norm running statistics) follow the same
    average so the teacher stays usable in eval mode; integer buffers are
    left untouched. decay=1 is an exact no-op, decay=0 an exact copy.
    """
    if not 0.0 <= decay <= 1.0:
        raise ConfigError(f"EMA decay must be in [0, 1], got {decay}")
    t_params = dict(teacher.named_parameters())
    s_params = dict(student.named_parameters())
    if t_params.keys() != s_params.keys():
        raise ContractViolation("teacher/student parameter name-sets differ")
    if decay == 1.0:
        return teacher

    def blend(dst, src):
        if decay == 0.0:
            dst.copy_(src)
        else:
            dst.mul_(decay).add_(src, alpha=1.0 - decay)

    for name, p_t in t_params.items():
        blend(p_t, s_params[name])
    t_buffers = dict(teacher.named_buffers())
    s_buffers = dict(student.named_buffers())
    if t_buffers.keys() != s_buffers.keys():
        raise ContractViolation("teacher/student buffer name-sets differ")
    for name, b_t in t_buffers.items():
        if b_t.dtype.is_floating_point:
            blend(b_t, s_buffers[name])
    return teacher


def poly_lr(base_lr, iteration, total, power):
    frac = min(max(iteration / max(total, 1), 0.0), 1.0)
    return base_lr * (1.0 - frac) ** power


class TrainingState:
    """Mutable student/teacher/optimizer triple behind the public phases."""

    def __init__(self, model_config, train_config):
        self.model_config = model_config
        self.train_config = train_config
        self.student = build(model_config, seed=train_config.seed)
        self.teacher = build(model_config, seed=train_config.seed)
        self.teacher.load_state_dict(self.student.state_dict())
        for p in self.teacher.parameters():
            p.requires_grad_(False)
        self.optimizer = torch.optim.SGD(
            self.student.parameters(),
            lr=train_config.base_lr,
            momentum=train_config.momentum,
            weight_decay=train_config.weight_decay,
        )
        self.iteration = 0
        self.phase = "pretrain"
        self.metric_history = []

    @classmethod
    def from_checkpoint(cls, checkpoint):
        state = cls(checkpoint.model_config, checkpoint.train_config)
        state.student.load_state_dict(checkpoint.student_state)
        state.teacher.load_state_dict(checkpoint.teacher_state)
        if checkpoint.optimizer_state is not None:
            state.optimizer.load_state_dict(checkpoint.optimizer_state)
        state.iteration = checkpoint.iteration
        state.phase = checkpoint.phase
        state.metric_history = list(checkpoint.metric_history)
        return state

    def to_checkpoint(self):
        return Checkpoint(
            model_config=self.model_config,
            train_config=self.train_config,
            student_state=copy.deepcopy(self.student.state_dict()),
            teacher_state=copy.deepcopy(self.teacher.state_dict()),
            optimizer_state=copy.deepcopy(self.optimizer.state_dict()),
            iteration=self.iteration,
            phase=self.phase,
            metric_history=list(self.metric_history),
        )

    def set_lr(self, lr):
        for group in self.optimizer.param_groups:
            group["lr"] = lr


def _set_threads(train_config):
    if train_config.threads > 0:
        torch.set_num_threads(train_config.threads)


def _step_rng(seed, stream, iteration):
    return np.random.default_rng([seed, stream, iteration])


def _triple_batch(images, family):
    """Wavelet companions for a list of (C, *spatial) arrays, as tensors."""
    triples = [frequency_triple(np.asarray(img, dtype=np.float32), family) for img in images]
    stack = lambda arrs: torch.from_numpy(np.stack(arrs).astype(np.float32))
    return (
        stack([t.low for t in triples]),
        stack([t.raw for t in triples]),
        stack([t.high for t in triples]),
    )


def _forward_triple(model, images, family):
    low, raw, high = _triple_batch(images, family)
    return model(low, raw, high)


def _check_finite(value, context):
    if not torch.isfinite(value):
        raise NumericError(f"non-finite loss at {context}")


# ---------------------------------------------------------------------------
# Pretraining
# ---------------------------------------------------------------------------


def _sample_labeled_crops(dataset, count, patch, rng):
    images, labels = [], []
    idx_pool = dataset.labeled_indices
    for _ in range(count):
        sample = dataset.samples[idx_pool[int(rng.integers(0, len(idx_pool)))]]
        img, lab = random_crop(sample.image, sample.label, patch, rng)
        images.append(img.data)
        labels.append(lab.data[0])
    return images, np.stack(labels).astype(np.int64)


def pretrain(dataset, model_config, train_config, log=None):
    """Supervised training on the labeled subset; returns a checkpoint with
    teacher parameters equal to the final student parameters."""
    if not dataset.labeled_indices:
        raise ConfigError("pretraining requires a non-empty labeled set")
    _set_threads(train_config)
    state = TrainingState(model_config, train_config)
    weights = train_config.loss_weights()
    state.student.train()

    for it in range(train_config.pretrain_iterations):
        rng = _step_rng(train_config.seed, _PRETRAIN_STREAM, it)
        lr = poly_lr(train_config.base_lr, it, train_config.pretrain_iterations,
                     train_config.poly_power)
        state.set_lr(lr)
        images, labels = _sample_labeled_crops(
            dataset, train_config.batch_pairs, train_config.patch, rng
        )
        preds = _forward_triple(state.student, images, train_config.wavelet_family)
        target = torch.from_numpy(labels)
        branch_losses = {k: seg_loss(p, target) for k, p in preds.items()}
        con = consistency_loss(preds)
        loss = sum(branch_losses.values()) + weights.consistency * con
        _check_finite(loss, f"pretrain iteration {it}")
        state.optimizer.zero_grad()
        loss.backward()
        state.optimizer.step()
        if log is not None:
            log({
                "phase": "pretrain",
                "iteration": it,
                "lr": lr,
                "loss": float(loss.detach()),
                "loss_seg": {k: float(v.detach()) for k, v in branch_losses.items()},
                "loss_con": float(con.detach()),
            })

    state.teacher.load_state_dict(state.student.state_dict())
    state.phase = "pretrained"
    state.iteration = 0
    return state.to_checkpoint()


# ---------------------------------------------------------------------------
# Semi-supervised loop
# ---------------------------------------------------------------------------


def ssl_step(state, labeled_pairs, unlabeled_pairs, rng, log=None):
    """One bidirectional copy-paste update.

    ``labeled_pairs``: list of ((img_i, lab_i), (img_j, lab_j)); and
    ``unlabeled_pairs``: list of (img_p, img_q); all crops (C, *patch).
    The teacher only contributes argmax pseudo-labels from its raw branch;
    the student takes the SGD step and the teacher follows by EMA.
    """
    cfg = state.train_config
    weights = cfg.loss_weights()
    family = cfg.wavelet_family
    patch = cfg.patch

    imgs_p = [p for p, _ in unlabeled_pairs]
    imgs_q = [q for _, q in unlabeled_pairs]
    state.teacher.eval()
    with torch.no_grad():
        pseudo_p = _forward_triple(state.teacher, imgs_p, family)["M"].argmax(dim=1)
        pseudo_q = _forward_triple(state.teacher, imgs_q, family)["M"].argmax(dim=1)
    pseudo_p = pseudo_p.numpy().astype(np.uint8)
    pseudo_q = pseudo_q.numpy().astype(np.uint8)

    masks = [generate_mask(patch, cfg.mask_ratio, rng) for _ in labeled_pairs]
    mask_stack = np.stack([m.mask for m in masks])

    x_in, x_out, y_in, y_out = [], [], [], []
    for b, ((img_i, lab_i), (img_j, lab_j)) in enumerate(labeled_pairs):
        img_p, img_q = unlabeled_pairs[b]
        x_in.append(mix(img_j, img_p, masks[b]))
        x_out.append(mix(img_q, img_i, masks[b]))
        y_in.append(mix_labels(lab_j[0], pseudo_p[b], masks[b], "in"))
        y_out.append(mix_labels(lab_i[0], pseudo_q[b], masks[b], "out"))
    y_in = torch.from_numpy(np.stack(y_in).astype(np.int64))
    y_out = torch.from_numpy(np.stack(y_out).astype(np.int64))

    state.student.train()
    preds_in = _forward_triple(state.student, x_in, family)
    preds_out = _forward_triple(state.student, x_out, family)

    in_terms = {
        k: bcp_loss(p, y_in, mask_stack, weights.alpha, "in") for k, p in preds_in.items()
    }
    out_terms = {
        k: bcp_loss(p, y_out, mask_stack, weights.alpha, "out") for k, p in preds_out.items()
    }
    con_terms = [consistency_loss(preds_in), consistency_loss(preds_out)]
    loss, breakdown = total_loss(in_terms, out_terms, con_terms, weights)
    _check_finite(loss, f"ssl iteration {state.iteration}")

    lr = poly_lr(cfg.base_lr, state.iteration, cfg.ssl_iterations, cfg.poly_power)
    state.set_lr(lr)
    state.optimizer.zero_grad()
    loss.backward()
    state.optimizer.step()
    ema_update(state.teacher, state.student, cfg.ema_decay)
    state.iteration += 1

    record = {
        "phase": "ssl",
        "iteration": state.iteration,
        "lr": lr,
        "ema_decay": cfg.ema_decay,
        **breakdown,
    }
    if log is not None:
        log(record)
    return record


def _sample_distinct_pair(indices, rng):
    pick = rng.choice(len(indices), size=2, replace=False)
    return indices[int(pick[0])], indices[int(pick[1])]


def _crop(sample, patch, rng):
    img, lab = random_crop(sample.image, sample.label, patch, rng)
    return img.data, (lab.data if lab is not None else None)


def train_ssl(checkpoint, dataset, val_dataset=None, log=None):
    """Run the semi-supervised phase from a pretrained checkpoint."""
    cfg = checkpoint.train_config
    if len(dataset.labeled_indices) < 2 or len(dataset.unlabeled_indices) < 2:
        raise ConfigError(
            "semi-supervised training needs at least 2 labeled and 2 unlabeled samples"
        )
    _set_threads(cfg)
    state = TrainingState.from_checkpoint(checkpoint)
    state.phase = "ssl"
    eval_data = val_dataset if val_dataset is not None else dataset

    while state.iteration < cfg.ssl_iterations:
        rng = _step_rng(cfg.seed, _SSL_STREAM, state.iteration)
        labeled_pairs, unlabeled_pairs = [], []
        for _ in range(cfg.batch_pairs):
            i, j = _sample_distinct_pair(dataset.labeled_indices, rng)
            p, q = _sample_distinct_pair(dataset.unlabeled_indices, rng)
            img_i, lab_i = _crop(dataset.samples[i], cfg.patch, rng)
            img_j, lab_j = _crop(dataset.samples[j], cfg.patch, rng)
            img_p, _ = _crop(dataset.samples[p], cfg.patch, rng)
            img_q, _ = _crop(dataset.samples[q], cfg.patch, rng)
            labeled_pairs.append(((img_i, lab_i), (img_j, lab_j)))
            unlabeled_pairs.append((img_p, img_q))
        ssl_step(state, labeled_pairs, unlabeled_pairs, rng, log=log)

        if cfg.eval_interval > 0 and (
            state.iteration % cfg.eval_interval == 0
            or state.iteration == cfg.ssl_iterations
        ):
            report = _evaluate_state(state, eval_data)
            state.metric_history.append({"iteration": state.iteration, "report": report})
            if log is not None:
                log({"phase": "eval", "iteration": state.iteration,
                     "mean_dice": report["mean"]["dice"]})

    state.phase = "ssl_done"
    return state.to_checkpoint()


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


def _window_starts(size, win):
    if size <= win:
        return [0]
    stride = max(win // 2, 1)
    starts = list(range(0, size - win + 1, stride))
    if starts[-1] != size - win:
        starts.append(size - win)
    return starts


def _predict_probs(model, model_config, train_config, image):
    """Average raw-branch probabilities over 50%-overlap sliding windows."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != model_config.spatial_rank + 1:
        raise ConfigError(
            f"image rank {image.ndim - 1} does not match model rank "
            f"{model_config.spatial_rank}"
        )
    spatial = image.shape[1:]
    factor = model_config.downsample_factor
    win = tuple(min(p, int(np.ceil(n / factor)) * factor)
                for p, n in zip(train_config.patch, spatial))
    # pad so every dim fits at least one window
    pad = [(0, 0)] + [(0, max(w - n, 0)) for w, n in zip(win, spatial)]
    padded = np.pad(image, pad, mode="reflect") if any(p[1] for p in pad) else image
    pshape = padded.shape[1:]

    probs = np.zeros((model_config.num_classes,) + pshape, dtype=np.float64)
    counts = np.zeros(pshape, dtype=np.float64)
    model.eval()
    starts = [_window_starts(n, w) for n, w in zip(pshape, win)]
    grids = np.meshgrid(*[np.arange(len(s)) for s in starts], indexing="ij")
    for idx in zip(*[g.ravel() for g in grids]):
        offset = tuple(starts[d][i] for d, i in enumerate(idx))
        sl = (slice(None),) + tuple(slice(o, o + w) for o, w in zip(offset, win))
        tile = padded[sl]
        with torch.no_grad():
            pred = _forward_triple(model, [tile], train_config.wavelet_family)["M"][0]
        region = (slice(None),) + sl[1:]
        probs[region] += pred.numpy()
        counts[sl[1:]] += 1.0
    probs /= counts
    crop = (slice(None),) + tuple(slice(0, n) for n in spatial)
    return probs[crop]


def predict(checkpoint, image, use_teacher=False):
    """Segment one (C, *spatial) image with the trained student network."""
    model = build(checkpoint.model_config, seed=checkpoint.train_config.seed)
    model.load_state_dict(
        checkpoint.teacher_state if use_teacher else checkpoint.student_state
    )
    probs = _predict_probs(model, checkpoint.model_config, checkpoint.train_config, image)
    return probs.argmax(axis=0).astype(np.uint8)


def _evaluate_state(state, dataset):
    was_training = state.student.training
    report = _evaluate_model(
        state.student, state.model_config, state.train_config, dataset
    )
    if was_training:
        state.student.train()
    return report


def _evaluate_model(model, model_config, train_config, dataset):
    records = []
    for i in dataset.labeled_indices:
        sample = dataset.samples[i]
        probs = _predict_probs(model, model_config, train_config, sample.image.data)
        pred = probs.argmax(axis=0)
        records.append(
            metrics.evaluate_pair(pred, sample.label.data[0], dataset.num_classes)
        )
    return metrics.aggregate(records, dataset.num_classes)


def evaluate(checkpoint, dataset):
    """Per-class and mean Dice/Jaccard/95HD/ASD over the labeled samples."""
    if not dataset.labeled_indices:
        raise ConfigError("evaluation requires labeled samples")
    model = build(checkpoint.model_config, seed=checkpoint.train_config.seed)
    model.load_state_dict(checkpoint.student_state)
    return _evaluate_model(model, checkpoint.model_config, checkpoint.train_config, dataset)
