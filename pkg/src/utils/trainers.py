"""
Training pipelines: BD, AE+BD, DC+BD and the AE+KNN baseline.

All variants share one composite loss ``lambda1*L1 + lambda2*L2 + L3`` with
per-sample means:

* L1 -- reconstruction, 1/2 (V - decode(encode(V)))^2
* L2 -- deep clustering, 1/2 (eta* - z)^2 with eta* held constant
* L3 -- boundary-decoder, 1/2 (T - decode(boundary_map(p)))^2

Which networks a term reaches follows from the graph; the optimizer mask then
selects which networks move (BD never touches the encoder).
"""

import logging
import os
import time
from dataclasses import dataclass

import numpy as np

from src.errors import ClusteringError, ConfigurationError, StaleClusterError, ValidationError
from src.models.cluster import dc_loss, kmeans_fit, nearest_center, squared_distances
from src.models.networks import BOUNDARY, DECODER, ENCODER, BoundaryDecoderNets, NetworkConfig
from src.models.optim import OptimizerState, adam_step
from src.models.report import CheckpointEntry, LatentStore, TrainReport
from src.models.tensor import add, scale, sq_err_loss
from src.utils.checkpoints import checkpoint_name, save_checkpoint
from src.utils.evaluation import layer_breakdown, mean_ssd_arrays

logger = logging.getLogger(__name__)

UPDATE_MASKS = {
    'BD': (BOUNDARY, DECODER),
    'AE_BD': (ENCODER, DECODER, BOUNDARY),
    'DC_BD': (ENCODER, DECODER, BOUNDARY),
    'AE_KNN': (ENCODER, DECODER),
}


@dataclass
class Batch:
    params: np.ndarray
    images: np.ndarray
    indices: np.ndarray = None

    def __len__(self):
        return int(self.params.shape[0])

    @classmethod
    def from_dataset(cls, dataset, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return cls(params=dataset.normalized_params(indices),
                   images=dataset.targets(indices), indices=indices)


@dataclass
class LossTerms:
    total: object
    l1: object = None
    l2: object = None
    l3: object = None

    def values(self):
        out = {name: (term.item() if term is not None else 0.0)
               for name, term in (('l1', self.l1), ('l2', self.l2), ('l3', self.l3))}
        out['loss'] = self.total.item()
        return out


def make_optimizer(config):
    return OptimizerState(learning_rate=config.learning_rate, beta1=config.beta1,
                          beta2=config.beta2, eps=config.adam_eps)


def composite_loss(batch, nets, config, cluster=None, variant=None):
    """Weighted sum of the variant's active terms; inactive terms report 0."""
    variant = variant or config.variant
    if variant not in UPDATE_MASKS:
        raise ConfigurationError(f'invalid variant {variant!r}')
    if variant == 'DC_BD' and cluster is None:
        raise ClusteringError('DC_BD loss needs a cluster model')
    if variant != 'DC_BD' and cluster is not None:
        raise ConfigurationError(f'{variant} does not use a cluster model')
    n = len(batch)
    if n == 0:
        raise ConfigurationError('empty batch')

    terms = LossTerms(total=None)
    if variant in ('AE_BD', 'DC_BD', 'AE_KNN'):
        z = nets.encode(batch.images)
        terms.l1 = scale(sq_err_loss(nets.decode(z), batch.images), 1.0 / n)
        if variant == 'DC_BD':
            eta, _ = nearest_center(z.data, cluster)
            terms.l2 = scale(dc_loss(z, eta), 1.0 / n)
    if variant != 'AE_KNN':
        y = nets.decode(nets.boundary_map(batch.params))
        terms.l3 = scale(sq_err_loss(y, batch.images), 1.0 / n)

    if variant == 'BD':
        terms.total = terms.l3
    elif variant == 'AE_BD':
        terms.total = add(scale(terms.l1, config.lambda1), terms.l3)
    elif variant == 'DC_BD':
        terms.total = add(scale(terms.l1, config.lambda1), scale(terms.l2, config.lambda2), terms.l3)
    else:
        terms.total = terms.l1
    return terms


def _step(batch, nets, optimizer, config, variant, cluster=None):
    terms = composite_loss(batch, nets, config, cluster=cluster, variant=variant)
    nets.store.zero_grad()
    terms.total.backward()
    adam_step(nets.store, optimizer, mask=UPDATE_MASKS[variant])
    return terms


def train_step_bd(batch, nets, optimizer, config):
    """L3 only; boundary and decoder move, the encoder is never touched."""
    return _step(batch, nets, optimizer, config, 'BD')


def train_step_ae_bd(batch, nets, optimizer, config):
    """lambda1*L1 + L3; encoder sees L1, decoder L1 and L3, boundary L3."""
    return _step(batch, nets, optimizer, config, 'AE_BD')


def train_step_dc_bd(batch, nets, cluster, optimizer, config, iteration=None):
    """lambda1*L1 + lambda2*L2 + L3 against a freshly recomputed cluster model."""
    if cluster is None:
        raise ClusteringError('DC_BD step needs a cluster model')
    if iteration is not None and iteration - cluster.fitted_at >= config.kmeans_period:
        raise StaleClusterError(
            f'cluster model fitted at iteration {cluster.fitted_at} is stale at {iteration} '
            f'(recompute period {config.kmeans_period})')
    return _step(batch, nets, optimizer, config, 'DC_BD', cluster=cluster)


def train_step_ae(batch, nets, optimizer, config):
    """Autoencoder-only step (L1) used by the AE+KNN baseline."""
    return _step(batch, nets, optimizer, config, 'AE_KNN')


class BatchSampler:
    """Seeded mini-batches drawn without replacement, reshuffled every epoch"""

    def __init__(self, indices, batch_size, rng):
        self.indices = np.asarray(indices, dtype=np.int64)
        if self.indices.size == 0:
            raise ConfigurationError('cannot sample batches from an empty training set')
        self.batch_size = min(int(batch_size), self.indices.size)
        self.rng = rng
        self._order = None
        self._pos = 0

    def next(self):
        if self._order is None or self._pos + self.batch_size > self._order.size:
            self._order = self.rng.permutation(self.indices)
            self._pos = 0
        out = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return out


def build_latent_store(nets, batch):
    """Freeze the encoder output for every training case (latent_train)."""
    return LatentStore(vec_train=np.array(batch.params, dtype=np.float64),
                       latent_train=nets.encode_array(batch.images),
                       case_indices=np.array(batch.indices, dtype=np.int64))


def ae_knn_predict(vec_test, store, nets):
    """
    Nearest training vector (k=1, ties to the lowest case id), then decode its
    stored latent code. Pure lookup plus a forward pass; no gradients.
    """
    if store is None or len(store) == 0:
        raise ValidationError('AE+KNN prediction needs a non-empty latent store')
    queries = np.atleast_2d(np.asarray(vec_test, dtype=np.float64))
    if queries.shape[1] != store.vec_train.shape[1]:
        raise ConfigurationError(
            f'query width {queries.shape[1]} does not match stored vectors {store.vec_train.shape[1]}')
    dists = squared_distances(queries, store.vec_train)
    best = dists.min(axis=1, keepdims=True)
    ids = np.where(dists == best, store.case_indices[None, :], np.iinfo(np.int64).max)
    rows = np.argmin(ids, axis=1)

    decoded = {}
    for row in rows:
        if row not in decoded:
            decoded[row] = nets.decode_array(store.latent_train[row:row + 1])[0]
    out = np.stack([decoded[row] for row in rows])
    return out[0] if np.ndim(vec_test) == 1 else out


class Trainer:
    """One seeded training run of a single variant"""

    def __init__(self, dataset, config, checkpoint_dir=None):
        self.config = config.validate()
        if dataset.images is None:
            raise ValidationError('dataset must be normalized before training')
        self.dataset = dataset
        self.checkpoint_dir = checkpoint_dir

        init_seq, batch_seq, kmeans_seq = np.random.SeedSequence(config.seed).spawn(3)
        self.net_config = NetworkConfig.from_train_config(config, image_pixels=dataset.images.shape[1])
        self.nets = BoundaryDecoderNets.create(self.net_config, init_seq)
        self.optimizer = make_optimizer(config)
        self.sampler = BatchSampler(dataset.train_indices, config.batch_size,
                                    np.random.default_rng(batch_seq))
        self.kmeans_rng = np.random.default_rng(kmeans_seq)

        self.train_set = Batch.from_dataset(dataset, dataset.train_indices)
        self.test_set = Batch.from_dataset(dataset, dataset.test_indices)
        # the encoder sees images centred on the training mean
        self.nets.set_input_shift(self.train_set.images.mean(axis=0))
        self.test_layers = dataset.layers[dataset.test_indices]
        if config.variant == 'DC_BD' and config.k > len(self.train_set):
            raise ConfigurationError(f'K={config.k} exceeds the {len(self.train_set)} training cases')

        self.cluster = None
        self.kmeans_calls = 0
        self.kmeans_time = 0.0
        self.train_time = 0.0
        self.iteration = 0

    def __repr__(self):
        return f'<Trainer {self.config.variant} seed={self.config.seed} it={self.iteration}>'

    def recompute_clusters(self, iteration):
        start = time.perf_counter()
        latents = self.nets.encode_array(self.train_set.images)
        if self.cluster is None:
            model = kmeans_fit(latents, self.config.k, seed=self.kmeans_rng,
                               max_lloyd_iters=self.config.kmeans_max_iter)
        else:
            model = kmeans_fit(latents, self.config.k, init_centers=self.cluster.centers,
                               max_lloyd_iters=self.config.kmeans_max_iter)
        model.fitted_at = iteration
        self.cluster = model
        self.kmeans_calls += 1
        self.kmeans_time += time.perf_counter() - start
        logger.debug('k-means recompute at %d: objective %.6g after %d Lloyd iterations',
                     iteration, model.objective, model.iterations)
        return model

    def step(self):
        self.iteration += 1
        t = self.iteration
        batch = Batch.from_dataset(self.dataset, self.sampler.next())
        start = time.perf_counter()
        variant = self.config.variant
        if variant == 'DC_BD':
            if self.cluster is None or (t - 1) % self.config.kmeans_period == 0:
                self.recompute_clusters(t)
            terms = train_step_dc_bd(batch, self.nets, self.cluster, self.optimizer, self.config, t)
        elif variant == 'AE_BD':
            terms = train_step_ae_bd(batch, self.nets, self.optimizer, self.config)
        elif variant == 'BD':
            terms = train_step_bd(batch, self.nets, self.optimizer, self.config)
        else:
            terms = train_step_ae(batch, self.nets, self.optimizer, self.config)
        self.train_time += time.perf_counter() - start
        return terms

    def latent_store(self):
        return build_latent_store(self.nets, self.train_set)

    def predict(self, params):
        """Variant-appropriate prediction for normalized parameter rows."""
        if self.config.variant == 'AE_KNN':
            return ae_knn_predict(np.atleast_2d(params), self.latent_store(), self.nets)
        return self.nets.predict(params)

    def evaluate(self, batch_loss=None):
        variant = self.config.variant
        if variant == 'AE_KNN':
            test_pred = ae_knn_predict(self.test_set.params, self.latent_store(), self.nets)
            train_ssd = None
        else:
            train_ssd = mean_ssd_arrays(self.nets.predict(self.train_set.params), self.train_set.images)
            test_pred = self.nets.predict(self.test_set.params)

        cluster = None
        if variant == 'DC_BD':
            cluster = self.cluster if self.cluster is not None else self.recompute_clusters(self.iteration)
        values = composite_loss(self.train_set, self.nets, self.config, cluster=cluster).values()
        return CheckpointEntry(
            iteration=self.iteration,
            train_ssd=train_ssd,
            test_ssd=mean_ssd_arrays(test_pred, self.test_set.images),
            l1=values['l1'], l2=values['l2'], l3=values['l3'], loss=values['loss'],
            batch_loss=values['loss'] if batch_loss is None else batch_loss,
            layer_test_ssd=layer_breakdown(test_pred, self.test_set.images, self.test_layers),
            wall_time=self.train_time,
            kmeans_time=self.kmeans_time,
            kmeans_calls=self.kmeans_calls,
        )

    def save_checkpoint(self):
        if self.checkpoint_dir is None:
            return None
        store = self.latent_store() if self.config.variant == 'AE_KNN' else None
        path = os.path.join(self.checkpoint_dir,
                            checkpoint_name(self.config.variant, self.config.seed, self.iteration))
        return save_checkpoint(path, self.nets, self.config, self.iteration, latent_store=store)

    def run(self):
        config = self.config
        report = TrainReport(variant=config.variant, seed=config.seed, config=config)
        report.add(self.evaluate())
        checkpoints = set(config.checkpoints)
        window = []
        while self.iteration < config.total_iterations:
            terms = self.step()
            window.append(terms.total.item())
            if self.iteration in checkpoints:
                entry = report.add(self.evaluate(batch_loss=float(np.mean(window))))
                window = []
                self.save_checkpoint()
                logger.info('%s seed=%d it=%d train=%s test=%.6f loss=%.6g (%.1fs, k-means %.1fs)',
                            config.variant, config.seed, entry.iteration,
                            'n/a' if entry.train_ssd is None else f'{entry.train_ssd:.6f}',
                            entry.test_ssd, entry.loss, entry.wall_time, entry.kmeans_time)
        return report


def run_training(dataset, config, checkpoint_dir=None):
    """Train one variant and return its TrainReport; weights go to ``checkpoint_dir``."""
    return Trainer(dataset, config, checkpoint_dir=checkpoint_dir).run()


def ae_knn_fit(dataset, config, checkpoint_dir=None):
    """Train the autoencoder with L1 only, then freeze latent_train -> (nets, LatentStore)."""
    trainer = Trainer(dataset, config.replace(variant='AE_KNN'), checkpoint_dir=checkpoint_dir)
    trainer.run()
    return trainer.nets, trainer.latent_store()
