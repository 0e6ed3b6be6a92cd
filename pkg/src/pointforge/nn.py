"""Modules, parameters, optimizers, LR schedules, and checkpoint IO.

Parameter initialization is a pure function of (parameter name, seed):
each tensor gets its own RNG derived by hashing its dotted name, so two
models sharing a backbone initialize the shared part identically no
matter what other heads they carry. That property is what makes the
multi-task-at-beta-endpoint trajectories bit-identical to the single-task
runs.

Checkpoints use the PFCKPT v1 container: a manifest of named tensors
followed by raw little-endian payloads and a trailing 64-bit FNV-1a
checksum of the payload bytes.
"""

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .kernels import fnv1a64


class Parameter:
    """Named trainable tensor with an init recipe and a decay-exemption flag."""

    __slots__ = ("name", "tensor", "weight_decay_exempt", "init_kind", "fan_in")

    def __init__(self, shape, init_kind, fan_in=0, weight_decay_exempt=False):
        self.name = ""
        self.tensor = Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)
        self.weight_decay_exempt = weight_decay_exempt
        self.init_kind = init_kind
        self.fan_in = fan_in
        # placeholder values so standalone layers work; Module.initialize
        # re-derives them per parameter name for name-stable init
        self.initialize(np.random.default_rng(0))

    @property
    def data(self):
        return self.tensor.data

    @data.setter
    def data(self, value):
        self.tensor.data = value

    @property
    def grad(self):
        return self.tensor.grad

    @property
    def size(self):
        return self.tensor.data.size

    def initialize(self, rng):
        shape = self.tensor.data.shape
        dtype = self.tensor.data.dtype
        if self.init_kind == "kaiming_uniform":
            bound = math.sqrt(6.0 / max(1, self.fan_in))
            self.tensor.data = rng.uniform(-bound, bound, size=shape).astype(dtype)
        elif self.init_kind == "zeros":
            self.tensor.data = np.zeros(shape, dtype=dtype)
        elif self.init_kind == "ones":
            self.tensor.data = np.ones(shape, dtype=dtype)
        elif self.init_kind.startswith("constant:"):
            value = float(self.init_kind.split(":", 1)[1])
            self.tensor.data = np.full(shape, value, dtype=dtype)
        else:
            raise ValueError(f"unknown init kind {self.init_kind!r}")


def fnv1a64_str(text: str) -> int:
    return fnv1a64(text.encode("utf-8"))


class Module:
    """Composable container; children are discovered from instance attributes."""

    def children(self):
        for attr, value in vars(self).items():
            if isinstance(value, Module):
                yield attr, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{attr}.{i}", item

    def named_parameters(self, prefix: str = ""):
        for attr, value in vars(self).items():
            if isinstance(value, Parameter):
                yield (prefix + attr, value)
        for attr, child in self.children():
            yield from child.named_parameters(prefix=f"{prefix}{attr}.")

    def named_buffers(self, prefix: str = ""):
        """Non-trainable state arrays (batch-norm running stats)."""
        for attr, value in vars(self).items():
            if isinstance(value, np.ndarray):
                yield (prefix + attr, value)
        for attr, child in self.children():
            yield from child.named_buffers(prefix=f"{prefix}{attr}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def initialize(self, seed: int):
        """Deterministic per-name initialization; also stamps parameter names."""
        for name, p in self.named_parameters():
            p.name = name
            rng = np.random.default_rng((fnv1a64_str(name) ^ (seed & 0xFFFFFFFF)) & 0xFFFFFFFFFFFFFFFF)
            p.initialize(rng)
        names = [p.name for p in self.parameters()]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in module tree")
        return self

    def state_arrays(self) -> dict:
        """Parameters plus buffers, keyed by dotted name (checkpoint payload)."""
        out = {name: p.tensor.data for name, p in self.named_parameters()}
        for name, buf in self.named_buffers():
            out[name] = buf
        return out

    def load_state_arrays(self, state: dict):
        for name, p in self.named_parameters():
            p.tensor.data = state[name].astype(p.tensor.data.dtype).reshape(p.tensor.data.shape)
        for name, buf in self.named_buffers():
            buf[...] = state[name]

    def cast(self, dtype):
        """Switch parameter dtype (float64 for gradient checks).

        Buffers are float64 already and stay that way.
        """
        for _, p in self.named_parameters():
            p.tensor.data = p.tensor.data.astype(dtype)
            p.tensor.grad = None
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.tensor.grad = None


class Dense(Module):
    def __init__(self, in_ch: int, out_ch: int, bias: bool = True):
        self.weight = Parameter((in_ch, out_ch), "kaiming_uniform", fan_in=in_ch)
        self.bias = Parameter((out_ch,), "zeros", weight_decay_exempt=True) if bias else None

    def __call__(self, x):
        from . import autodiff

        return autodiff.dense(x, self.weight.tensor, None if self.bias is None else self.bias.tensor)


class BatchNorm(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Parameter((channels,), "ones", weight_decay_exempt=True)
        self.beta = Parameter((channels,), "zeros", weight_decay_exempt=True)
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, training: bool):
        from . import autodiff

        return autodiff.batch_norm(
            x,
            self.gamma.tensor,
            self.beta.tensor,
            self.running_mean,
            self.running_var,
            training,
            momentum=self.momentum,
            eps=self.eps,
        )


@dataclass(frozen=True)
class LRSchedule:
    base_lr: float
    total_epochs: int
    kind: str = "cosine"
    min_lr: float = 0.0

    def __post_init__(self):
        if self.kind not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.min_lr > self.base_lr:
            raise ValueError("min_lr must not exceed base_lr")


def cosine_lr(schedule: LRSchedule, epoch: int) -> float:
    """Half-cosine decay from base_lr at epoch 0 to min_lr at total_epochs."""
    if not 0 <= epoch <= schedule.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {schedule.total_epochs}]")
    if schedule.kind == "constant":
        return schedule.base_lr
    span = schedule.base_lr - schedule.min_lr
    return schedule.min_lr + 0.5 * span * (1.0 + math.cos(math.pi * epoch / schedule.total_epochs))


class SGDMomentum:
    """Momentum SGD: v <- mu v + g + wd theta; theta <- theta - lr v."""

    def __init__(self, params, momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.tensor.data) for p in self.params]

    def step(self, lr: float):
        for p, v in zip(self.params, self.velocity):
            if p.tensor.grad is None:
                continue
            g = p.tensor.grad.astype(p.tensor.data.dtype, copy=False)
            if self.weight_decay and not p.weight_decay_exempt:
                g = g + np.asarray(self.weight_decay, dtype=p.tensor.data.dtype) * p.tensor.data
            v *= self.momentum
            v += g
            p.tensor.data = p.tensor.data - np.asarray(lr, dtype=p.tensor.data.dtype) * v


class Adam:
    """Adam with decoupled weight decay applied before the adaptive update."""

    def __init__(
        self,
        params,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.tensor.data) for p in self.params]
        self.v = [np.zeros_like(p.tensor.data) for p in self.params]
        self.t = 0

    def step(self, lr: float):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.tensor.grad is None:
                continue
            dtype = p.tensor.data.dtype
            g = p.tensor.grad.astype(dtype, copy=False)
            theta = p.tensor.data
            if self.weight_decay and not p.weight_decay_exempt:
                theta = theta - np.asarray(lr * self.weight_decay, dtype=dtype) * theta
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mhat = m / np.asarray(b1t, dtype=dtype)
            vhat = v / np.asarray(b2t, dtype=dtype)
            p.tensor.data = theta - np.asarray(lr, dtype=dtype) * mhat / (
                np.sqrt(vhat) + np.asarray(self.eps, dtype=dtype)
            )


def make_optimizer(name: str, params, momentum=0.9, weight_decay=0.0, beta1=0.9, beta2=0.999):
    if name == "sgd_momentum":
        return SGDMomentum(params, momentum=momentum, weight_decay=weight_decay)
    if name == "adam":
        return Adam(params, beta1=beta1, beta2=beta2, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {name!r}")


def gradient_check(fn, tensors, h: float = 1e-5, tol: float = 1e-6, max_coords: int = 0):
    """Central finite differences against analytic gradients.

    ``fn`` maps the current tensor values to a scalar Tensor; ``tensors``
    are float64 Tensors with requires_grad. Returns the max relative error
    over checked coordinates (all of them, or ``max_coords`` per tensor
    sampled deterministically when set). Relative error is
    |fd - an| / max(|fd|, |an|, 1e-12).
    """
    for t in tensors:
        if t.data.dtype != np.float64:
            raise ValueError("gradient_check requires float64 tensors")
        t.data = np.ascontiguousarray(t.data)
        t.grad = None
    out = fn()
    if not np.isfinite(out.data).all():
        raise ValueError("gradient_check: non-finite forward output")
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    worst = 0.0
    rng = np.random.default_rng(0)
    for t, an in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        if max_coords and n > max_coords:
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = range(n)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(fn().data)
            flat[i] = orig - h
            f_minus = float(fn().data)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            a = an.reshape(-1)[i]
            err = abs(fd - a) / max(abs(fd), abs(a), 1e-12)
            worst = max(worst, err)
    return worst


_DTYPE_CODES = {0: np.float32, 1: np.float64, 2: np.int64}
_DTYPE_IDS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.int64): 2}

_MAGIC = b"PFCKPT v1\n"


class CheckpointError(IOError):
    """Malformed or corrupted checkpoint container."""


def save_checkpoint(state: dict, path) -> None:
    """Write named arrays to a PFCKPT v1 container with a payload checksum."""
    names = list(state.keys())
    payload = bytearray()
    manifest = bytearray()
    manifest += struct.pack("<I", len(names))
    for name in names:
        arr = np.ascontiguousarray(state[name])
        if arr.dtype not in _DTYPE_IDS:
            arr = arr.astype(np.float64)
        encoded = name.encode("utf-8")
        manifest += struct.pack("<H", len(encoded))
        manifest += encoded
        manifest += struct.pack("<B", arr.ndim)
        for extent in arr.shape:
            manifest += struct.pack("<I", extent)
        manifest += struct.pack("<B", _DTYPE_IDS[arr.dtype])
        payload += arr.astype(arr.dtype.newbyteorder("<")).tobytes()
    checksum = fnv1a64(bytes(payload))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(bytes(manifest))
        fh.write(bytes(payload))
        fh.write(struct.pack("<Q", checksum))


def load_checkpoint_state(path) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_MAGIC):
        raise CheckpointError(f"{path}: not a PFCKPT v1 file")
    off = len(_MAGIC)

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    (count,) = take("<I")
    entries = []
    for _ in range(count):
        (name_len,) = take("<H")
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = take("<B")
        shape = tuple(take(f"<{rank}I")) if rank else ()
        (dtype_code,) = take("<B")
        if dtype_code not in _DTYPE_CODES:
            raise CheckpointError(f"{path}: unknown dtype code {dtype_code}")
        entries.append((name, shape, _DTYPE_CODES[dtype_code]))
    payload_end = len(blob) - 8
    payload = blob[off:payload_end]
    (stored_sum,) = struct.unpack_from("<Q", blob, payload_end)
    if fnv1a64(payload) != stored_sum:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    state = {}
    pos = 0
    for name, shape, dtype in entries:
        nbytes = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize if shape else np.dtype(dtype).itemsize
        arr = np.frombuffer(payload[pos : pos + nbytes], dtype=np.dtype(dtype).newbyteorder("<"))
        state[name] = arr.astype(dtype).reshape(shape)
        pos += nbytes
    if pos != len(payload):
        raise CheckpointError(f"{path}: payload size mismatch")
    return state


@dataclass(frozen=True)
class LoadReport:
    loaded: tuple
    skipped_checkpoint: tuple  # names present in the file but not used
    skipped_model: tuple  # model tensors left untouched


def load_into_module(module: Module, path, strict: bool = True) -> LoadReport:
    """Load a checkpoint into a module.

    Strict mode demands an exact name/shape match. Non-strict loads the
    intersection of matching name+shape pairs and reports both leftovers,
    which is how backbone-only transfer works.
    """
    state = load_checkpoint_state(path)
    target = module.state_arrays()
    matched = {
        name
        for name in state
        if name in target and state[name].shape == tuple(target[name].shape)
    }
    extra = sorted(set(state) - matched)
    missing = sorted(set(target) - matched)
    if strict and (extra or missing):
        raise CheckpointError(
            f"strict load mismatch: checkpoint-only={extra} model-only={missing}"
        )
    merged = dict(target)
    merged.update({name: state[name] for name in matched})
    module.load_state_arrays(merged)
    return LoadReport(
        loaded=tuple(sorted(matched)),
        skipped_checkpoint=tuple(extra),
        skipped_model=tuple(missing),
    )


def parameter_checksum(module: Module) -> int:
    """Order-stable FNV-1a over all parameter payload bytes."""
    state = module.state_arrays()
    blob = bytearray()
    for name in sorted(state):
        blob += np.ascontiguousarray(state[name]).tobytes()
    return fnv1a64(bytes(blob))


def save_metadata(path, **fields) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fields, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_metadata(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
