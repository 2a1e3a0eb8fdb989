"""Adam and Nesterov SGD with L2 weight decay, plus LR schedules.

Coupled decay (the default) adds ``wd * W`` to the gradient of weight
matrices; decoupled decay shrinks weights by ``lr * wd * W`` outside the
adaptive update. Bias vectors are never decayed. Updates are applied in
place and the (model, state) pair is returned.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from collapse.exceptions import ArgumentError, DivergenceError
from collapse.models import DecayKind, OptimizerKind, ScheduleKind


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = OptimizerKind.ADAM
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    nesterov: bool = True
    decay: str = DecayKind.COUPLED

    def __post_init__(self):
        if self.kind not in OptimizerKind.values:
            raise ArgumentError(f"unknown optimizer {self.kind!r}")
        object.__setattr__(self, "kind", OptimizerKind(self.kind))
        if self.lr <= 0:
            raise ArgumentError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ArgumentError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.decay not in DecayKind.values:
            raise ArgumentError(f"unknown weight decay kind {self.decay!r}")
        object.__setattr__(self, "decay", DecayKind(self.decay))

    def to_dict(self):
        data = asdict(self)
        data["kind"] = str(self.kind)
        data["decay"] = str(self.decay)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class ScheduleConfig:
    """LR schedule for each phase.

    With ``restart_each_phase`` (the default) the schedule restarts at the
    phase boundary: cosine spans one phase and MultiStep ``milestones`` count
    epochs from the start of each phase. After a 200-epoch Phase 1, global
    milestone 300 is Phase-2 milestone 100. Set it to False for one schedule
    over both phases, with milestones in global epochs.
    """

    kind: str = ScheduleKind.COSINE
    eta_min: float = 0.0
    milestones: tuple = ()
    gamma: float = 0.1
    restart_each_phase: bool = True

    def __post_init__(self):
        if self.kind not in ScheduleKind.values:
            raise ArgumentError(f"unknown schedule {self.kind!r}")
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        if self.eta_min < 0:
            raise ArgumentError(f"eta_min must be >= 0, got {self.eta_min}")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ArgumentError(f"milestones must increase strictly: {self.milestones}")

    def to_dict(self):
        data = asdict(self)
        data["kind"] = str(self.kind)
        data["milestones"] = list(self.milestones)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class Cosine:
    t_max: int
    eta_min: float = 0.0


@dataclass(frozen=True)
class MultiStep:
    milestones: tuple
    gamma: float = 0.1


def make_schedule(config, phase_epochs):
    if config.kind == ScheduleKind.COSINE:
        return Cosine(t_max=phase_epochs, eta_min=config.eta_min)
    return MultiStep(milestones=config.milestones, gamma=config.gamma)


def lr_at(schedule, epoch, base_lr):
    """Learning rate for a 0-based epoch index within the schedule's span."""
    if epoch < 0:
        raise ArgumentError(f"epoch must be >= 0, got {epoch}")
    if isinstance(schedule, Cosine):
        if epoch >= schedule.t_max:
            return schedule.eta_min
        cosine = (1.0 + math.cos(math.pi * epoch / schedule.t_max)) / 2.0
        return schedule.eta_min + (base_lr - schedule.eta_min) * cosine
    if isinstance(schedule, MultiStep):
        passed = sum(1 for milestone in schedule.milestones if milestone <= epoch)
        return base_lr * schedule.gamma**passed
    raise ArgumentError(f"unknown schedule {schedule!r}")


@dataclass
class AdamState:
    base_lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decoupled: bool = False
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


@dataclass
class SgdState:
    base_lr: float = 0.1
    weight_decay: float = 0.0
    momentum: float = 0.9
    nesterov: bool = True
    decoupled: bool = False
    buffers: list = field(default_factory=list)


def _zeros_like(model):
    return [[np.zeros_like(layer.weight), np.zeros_like(layer.bias)] for layer in model.layers]


def _check_grads(grads):
    for grad in grads:
        if not (np.isfinite(grad.weight).all() and np.isfinite(grad.bias).all()):
            raise DivergenceError("non-finite gradient")


def _effective_grads(model, grads, state, lr):
    for layer, grad in zip(model.layers, grads):
        weight_grad = grad.weight
        if state.weight_decay and state.decoupled:
            layer.weight -= lr * state.weight_decay * layer.weight
        elif state.weight_decay:
            weight_grad = weight_grad + state.weight_decay * layer.weight
        yield layer, weight_grad, grad.bias


def adam_step(model, grads, state, lr):
    _check_grads(grads)
    if not state.m:
        state.m = _zeros_like(model)
        state.v = _zeros_like(model)
    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t

    for index, (layer, weight_grad, bias_grad) in enumerate(
        _effective_grads(model, grads, state, lr)
    ):
        for slot, (param, grad) in enumerate(
            ((layer.weight, weight_grad), (layer.bias, bias_grad))
        ):
            m = state.m[index][slot]
            v = state.v[index][slot]
            m *= state.beta1
            m += (1.0 - state.beta1) * grad
            v *= state.beta2
            v += (1.0 - state.beta2) * grad * grad
            m_hat = m / correction1
            v_hat = v / correction2
            param -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return model, state


def sgd_step(model, grads, state, lr):
    _check_grads(grads)
    if not state.buffers:
        state.buffers = _zeros_like(model)

    for index, (layer, weight_grad, bias_grad) in enumerate(
        _effective_grads(model, grads, state, lr)
    ):
        for slot, (param, grad) in enumerate(
            ((layer.weight, weight_grad), (layer.bias, bias_grad))
        ):
            buffer = state.buffers[index][slot]
            buffer *= state.momentum
            buffer += grad
            update = grad + state.momentum * buffer if state.nesterov else buffer
            param -= lr * update
    return model, state


def make_state(config):
    if config.kind == OptimizerKind.ADAM:
        return AdamState(
            base_lr=config.lr,
            weight_decay=config.weight_decay,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
            decoupled=config.decay == DecayKind.DECOUPLED,
        )
    return SgdState(
        base_lr=config.lr,
        weight_decay=config.weight_decay,
        momentum=config.momentum,
        nesterov=config.nesterov,
        decoupled=config.decay == DecayKind.DECOUPLED,
    )


def step(model, grads, state, lr):
    if isinstance(state, AdamState):
        return adam_step(model, grads, state, lr)
    return sgd_step(model, grads, state, lr)
