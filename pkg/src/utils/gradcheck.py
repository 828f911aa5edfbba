"""
Finite-difference validation of the analytic gradients.

``grad_check`` compares every (or a sampled subset of) parameter element's
analytic gradient with the central difference (f(t+e) - f(t-e)) / 2e.
``composite_checks`` runs it over every loss path of the three networks and
verifies the routing rule: networks a term never reaches get exactly zero
gradient.
"""

import logging

import numpy as np

from src.config import TrainConfig
from src.errors import NumericalError
from src.models.cluster import dc_loss, kmeans_fit, nearest_center
from src.models.networks import BOUNDARY, DECODER, ENCODER, BoundaryDecoderNets, NetworkConfig
from src.models.optim import ParamStore
from src.models.tensor import activation, affine, scale, sq_err_loss
from src.utils.trainers import Batch, composite_loss

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4
PREFIXES = {'encoder': ENCODER, 'decoder': DECODER, 'boundary': BOUNDARY}

# 4x4 "images" keep a full check of every element fast
COMPACT_NETWORK = NetworkConfig(image_pixels=16, latent_dim=3, encoder_hidden=(8, 6),
                                decoder_hidden=(6, 8), boundary_hidden=(6,))


def _scalar(value):
    value = value.item() if hasattr(value, 'item') else float(value)
    if not np.isfinite(value):
        raise NumericalError('gradient check: non-finite loss')
    return value


def grad_check_detail(forward, store, epsilon=1e-5, floor=1e-8, names=None,
                      max_elements=None, rng=None, corrupt=False, pattern=None):
    """
    Per-parameter maximum relative error max(|a - n| / max(|a|, |n|, floor)).

    ``pattern`` returns the branch state of the loss (relu signs, cluster
    labels). An element whose +-epsilon nudge changes it straddles a kink where
    the central difference is meaningless; it is skipped and, when sampling,
    another element is drawn in its place.
    """
    if epsilon <= 0:
        raise ValueError('epsilon must be > 0')
    names = list(store) if names is None else list(names)

    store.zero_grad()
    loss = forward()
    _scalar(loss)
    loss.backward()
    analytic = {name: store[name].grad.reshape(-1).copy() for name in names}
    store.zero_grad()
    reference = pattern() if pattern is not None else None

    def unmoved():
        return reference is None or np.array_equal(pattern(), reference)

    errors = {}
    for name in names:
        flat = store[name].data.reshape(-1)
        if max_elements is not None and flat.size > max_elements:
            picker = rng if rng is not None else np.random.default_rng(0)
            order, quota = picker.permutation(flat.size), max_elements
        else:
            order, quota = range(flat.size), flat.size
        worst = 0.0
        checked = skipped = 0
        for i in order:
            if checked == quota:
                break
            original = flat[i]
            flat[i] = original + epsilon
            f_plus = _scalar(forward())
            smooth = unmoved()
            flat[i] = original - epsilon
            f_minus = _scalar(forward())
            smooth = smooth and unmoved()
            flat[i] = original
            if not smooth:
                skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            a = analytic[name][i]
            if corrupt and name == names[0] and checked == 0:
                a += 1e-2 * abs(a) + 1e-3
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
            checked += 1
        if skipped:
            logger.debug('%s: %d elements skipped at a kink', name, skipped)
        errors[name] = worst
    return errors


def grad_check(forward, store, epsilon=1e-5, **options):
    """Maximum relative error over every checked parameter element."""
    errors = grad_check_detail(forward, store, epsilon=epsilon, **options)
    return max(errors.values(), default=0.0)


def _by_network(errors):
    out = {}
    for label, prefix in PREFIXES.items():
        values = [e for n, e in errors.items() if n.startswith(prefix)]
        if values:
            out[label] = max(values)
    return out


def primitive_checks(seed, epsilon=1e-5, floor=1e-6):
    """Affine, the three activations and the loss on random tensors."""
    rng = np.random.default_rng(seed)
    store = ParamStore({
        'x': rng.normal(size=(3, 4)),
        'w': rng.normal(size=(4, 2)),
        'b': rng.normal(size=(2,)),
    })
    target = rng.uniform(size=(3, 2))

    def signs():
        return store['x'].data @ store['w'].data + store['b'].data > 0

    results = {}
    for kind in ('relu', 'sigmoid', 'identity'):
        def forward(kind=kind):
            out = activation(affine(store['x'], store['w'], store['b']), kind)
            return sq_err_loss(out, target)
        results[f'affine+{kind}'] = grad_check(forward, store, epsilon=epsilon, floor=floor,
                                               pattern=signs if kind == 'relu' else None)
    return results


def _routing_zero(store, forward, prefixes):
    store.zero_grad()
    forward().backward()
    leaks = [n for n in store if any(n.startswith(p) for p in prefixes) and np.any(store[n].grad != 0)]
    store.zero_grad()
    return leaks


def composite_checks(seed, net_config=COMPACT_NETWORK, batch_size=3, epsilon=1e-5, floor=1e-6,
                     max_elements=None, corrupt=False):
    """
    Check L1, L2, L3 and the BD / AE_BD / DC_BD composites for one seed.

    Returns ``{check: {'errors': {network: max_rel_err}, 'leaks': [param names]}}``.
    """
    rng = np.random.default_rng(seed)
    nets = BoundaryDecoderNets.create(net_config, seed)
    # zero biases put whole layers exactly on the relu kink
    for name in nets.store.names():
        if name.endswith('.bias'):
            nets.store[name].data[...] = rng.uniform(0.05, 0.25, size=nets.store[name].shape)
    batch = Batch(params=rng.uniform(size=(batch_size, net_config.param_dim)),
                  images=rng.uniform(0.05, 0.95, size=(batch_size, net_config.image_pixels)))
    pool = rng.uniform(0.05, 0.95, size=(max(8, batch_size), net_config.image_pixels))
    cluster = kmeans_fit(nets.encode_array(pool), 2, seed=rng, max_lloyd_iters=10)
    config = TrainConfig(lambda1=0.7, lambda2=0.3)
    n = len(batch)

    def l1():
        return scale(sq_err_loss(nets.decode(nets.encode(batch.images)), batch.images), 1.0 / n)

    def l2():
        z = nets.encode(batch.images)
        eta, _ = nearest_center(z.data, cluster)
        return scale(dc_loss(z, eta), 1.0 / n)

    def l3():
        return scale(sq_err_loss(nets.decode(nets.boundary_map(batch.params)), batch.images), 1.0 / n)

    def pattern():
        _, labels = nearest_center(nets.encode_array(batch.images), cluster)
        return np.concatenate([nets.relu_signs(batch.images, batch.params), labels])

    def variant(name):
        def forward():
            return composite_loss(batch, nets, config, cluster=cluster if name == 'DC_BD' else None,
                                  variant=name).total
        return forward

    # check -> (forward, networks it must reach, networks it must not reach)
    plan = {
        'L1': (l1, (ENCODER, DECODER), (BOUNDARY,)),
        'L2': (l2, (ENCODER,), (DECODER, BOUNDARY)),
        'L3': (l3, (DECODER, BOUNDARY), (ENCODER,)),
        'BD': (variant('BD'), (DECODER, BOUNDARY), (ENCODER,)),
        'AE_BD': (variant('AE_BD'), (ENCODER, DECODER, BOUNDARY), ()),
        'DC_BD': (variant('DC_BD'), (ENCODER, DECODER, BOUNDARY), ()),
    }
    results = {}
    check_rng = np.random.default_rng(seed + 1)
    for check, (forward, reached, excluded) in plan.items():
        names = [p for p in nets.store if any(p.startswith(r) for r in reached)]
        errors = grad_check_detail(forward, nets.store, epsilon=epsilon, floor=floor, names=names,
                                   max_elements=max_elements, rng=check_rng, corrupt=corrupt,
                                   pattern=pattern)
        results[check] = {'errors': _by_network(errors),
                          'leaks': _routing_zero(nets.store, forward, excluded)}
        logger.debug('seed %d %s: %s', seed, check, results[check])
    return results
