"""Random small networks and batches for gradient checks."""
import numpy as np

from mdtkd.losses import KdConfig, one_hot
from mdtkd.nn import RELU, SIGMOID, TRAIN, NetworkSpec, Relu, build_network, make_rng, softmax_t

KINK_MARGIN = 1e-3


def kink_free(net, x, seed):
    """True when no ReLU pre-activation sits within KINK_MARGIN of zero.

    Finite differences straddling a kink are meaningless, so such draws are skipped.
    Walks the layers exactly as ``Network.forward`` does, with the same mask stream.
    """
    rng = make_rng(seed)
    h = x
    for layer in net.layers:
        if isinstance(layer, Relu) and np.abs(h).min() < KINK_MARGIN:
            return False
        h, _ = layer.forward(h, TRAIN, rng, False)
    return True


def random_case(i, activation=None, batchnorm=None, dropout=None, loss=None):
    """Deterministic case number ``i``; unset options cycle through their values."""
    rng = np.random.default_rng(1000 + i)
    activation = activation or (SIGMOID, RELU)[i % 2]
    batchnorm = bool((i // 2) % 2) if batchnorm is None else batchnorm
    dropout = (0.0, 0.3)[(i // 4) % 2] if dropout is None else dropout
    loss = loss or ("ce", "skd", "kd")[(i // 8) % 3]
    d = int(rng.integers(2 if batchnorm else 1, 5))
    h = int(rng.integers(1, 6))
    c = int(rng.integers(2, 4))
    n = int(rng.integers(4, 9)) if batchnorm else int(rng.integers(2, 9))
    spec = NetworkSpec([d, h, c], activation, batchnorm, dropout, init_seed=i)
    net = build_network(spec)
    # scale BN params away from the identity so their gradients are exercised
    for layer in net.layers:
        if hasattr(layer, "gamma"):
            layer.gamma[...] = rng.uniform(0.5, 1.5, layer.gamma.shape)
            layer.beta[...] = rng.uniform(-0.5, 0.5, layer.beta.shape)
    while True:
        x = rng.normal(size=(n, d))
        if kink_free(net, x, seed=i):
            break
    y = one_hot(rng.integers(0, c, n), c)
    kwargs = {}
    if loss == "skd":
        kwargs = {"teacher": softmax_t(rng.normal(size=(n, c))), "alpha": 0.3}
    elif loss == "kd":
        kwargs = {"teacher": rng.normal(size=(n, c)), "kd": KdConfig(T=2.0, lam=0.7)}
    return net, x, y, loss, kwargs


def toy_config(seed=0, dropout_p=0.0, epochs=500, distill=None, lr=1.0, **extra):
    """2-5-2 sigmoid net, full-batch SGD: the toy-task defaults."""
    from mdtkd.config import TrainConfig
    from mdtkd.nn import SgdConfig

    return TrainConfig(
        network=NetworkSpec([2, 5, 2], SIGMOID, False, dropout_p, init_seed=seed),
        sgd=SgdConfig(lr), epochs=epochs, batch_size=None, seed=seed, distill=distill, **extra,
    )
