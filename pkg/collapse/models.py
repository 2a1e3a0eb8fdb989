from django.db import models

# Closed enumerations shared by the whole lab. Nothing here is stored in a
# database; the choices classes only give us validated, serialisable values.


class ActivationKind(models.TextChoices):
    RELU = "relu", "ReLU"
    GELU = "gelu", "GELU"
    TANH = "tanh", "Tanh"


class LossKind(models.TextChoices):
    CROSS_ENTROPY = "ce", "Cross-entropy"
    MSE_ONE_HOT = "mse", "MSE (one-hot targets)"


class RunStatus(models.TextChoices):
    COLLAPSED = "collapsed", "Collapsed"
    DNF = "dnf", "DNF"
    DIVERGED = "diverged", "Diverged"


class OptimizerKind(models.TextChoices):
    ADAM = "adam", "Adam"
    SGD = "sgd", "SGD"


class ScheduleKind(models.TextChoices):
    COSINE = "cosine", "Cosine annealing"
    MULTISTEP = "multistep", "Multi-step decay"


class SweepAxis(models.TextChoices):
    DEPTH = "depth", "Depth"
    WIDTH = "width", "Width"
    WEIGHT_DECAY = "weight_decay", "Weight decay"
    ACTIVATION = "activation", "Activation"


class DecayKind(models.TextChoices):
    COUPLED = "coupled", "Coupled L2"
    DECOUPLED = "decoupled", "Decoupled"
