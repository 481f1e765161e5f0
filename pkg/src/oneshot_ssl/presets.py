"""Named hyper-parameter presets for each training stage.

Each preset pins weight decay, learning rate, labeled batch size, momentum,
unlabeled ratio, confidence threshold and minority-threshold reduction,
plus the balance method it was tuned for. lambda_u is 1 throughout.
"""

from .errors import ConfigError

PRESETS = {
    # baseline consistency training, no balancing
    "fixmatch": dict(balance_method=0, weight_decay=5e-4, learning_rate=0.03,
                     batch_size=64, momentum=0.88, unlabeled_ratio=7,
                     tau=0.95, delta=0.0, lambda_u=1.0),
    # cifar-style training, threshold balancing (methods 1 and 4)
    "cifar-balance1": dict(balance_method=1, weight_decay=8e-4, learning_rate=0.06,
                           batch_size=30, momentum=0.88, unlabeled_ratio=9,
                           tau=0.95, delta=0.25, lambda_u=1.0),
    # cifar-style training, weight balancing (methods 2 and 3)
    "cifar-balance2": dict(balance_method=2, weight_decay=8e-4, learning_rate=0.06,
                           batch_size=30, momentum=0.88, unlabeled_ratio=9,
                           tau=0.9, delta=0.0, lambda_u=1.0),
    # self-training follow-up run, cifar-style
    "cifar-selftrain": dict(balance_method=4, weight_decay=5e-4, learning_rate=0.03,
                            batch_size=64, momentum=0.88, unlabeled_ratio=7,
                            tau=0.95, delta=0.25, lambda_u=1.0),
    # svhn-style training, threshold balancing
    "svhn-balance1": dict(balance_method=1, weight_decay=6e-4, learning_rate=0.04,
                          batch_size=32, momentum=0.85, unlabeled_ratio=7,
                          tau=0.95, delta=0.25, lambda_u=1.0),
    # svhn-style training, weight balancing
    "svhn-balance2": dict(balance_method=2, weight_decay=6e-4, learning_rate=0.04,
                          batch_size=32, momentum=0.85, unlabeled_ratio=7,
                          tau=0.9, delta=0.0, lambda_u=1.0),
    # self-training follow-up run, svhn-style
    "svhn-selftrain": dict(balance_method=0, weight_decay=6e-4, learning_rate=0.04,
                           batch_size=32, momentum=0.85, unlabeled_ratio=7,
                           tau=0.95, delta=0.25, lambda_u=1.0),
}

# the hybrid/threshold and the two weighting methods share a preset row
ALIASES = {
    "cifar-balance4": ("cifar-balance1", 4),
    "cifar-balance3": ("cifar-balance2", 3),
    "svhn-balance4": ("svhn-balance1", 4),
    "svhn-balance3": ("svhn-balance2", 3),
}


def get_preset(name: str) -> dict:
    if name in PRESETS:
        return dict(PRESETS[name])
    if name in ALIASES:
        base, method = ALIASES[name]
        preset = dict(PRESETS[base])
        preset["balance_method"] = method
        return preset
    raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS) + sorted(ALIASES)}")
