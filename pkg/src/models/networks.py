"""
Encoder, decoder and boundary net sharing one latent space.

All three are fully-connected stacks whose parameters live in a single
ParamStore under the prefixes ``encoder.``, ``decoder.`` and ``boundary.`` so
training variants can route optimizer updates by prefix.
"""

from dataclasses import dataclass

import numpy as np

from src.errors import ConfigurationError
from src.models.dataset import PIXELS
from src.models.optim import ParamStore
from src.models.tensor import Tensor, activation, affine

ENCODER = 'encoder.'
DECODER = 'decoder.'
BOUNDARY = 'boundary.'
PARAM_DIM = 5


@dataclass(frozen=True)
class NetworkConfig:
    image_pixels: int = PIXELS
    param_dim: int = PARAM_DIM
    latent_dim: int = 16
    encoder_hidden: tuple = (256, 64)
    decoder_hidden: tuple = (64, 256)
    boundary_hidden: tuple = (32, 32)

    @classmethod
    def from_train_config(cls, config, image_pixels=PIXELS):
        return cls(image_pixels=image_pixels, latent_dim=config.latent_dim,
                   encoder_hidden=tuple(config.encoder_hidden),
                   decoder_hidden=tuple(config.decoder_hidden),
                   boundary_hidden=tuple(config.boundary_hidden))

    def to_dict(self):
        return {
            'image_pixels': self.image_pixels,
            'param_dim': self.param_dim,
            'latent_dim': self.latent_dim,
            'encoder_hidden': list(self.encoder_hidden),
            'decoder_hidden': list(self.decoder_hidden),
            'boundary_hidden': list(self.boundary_hidden),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(image_pixels=data['image_pixels'], param_dim=data['param_dim'],
                   latent_dim=data['latent_dim'],
                   encoder_hidden=tuple(data['encoder_hidden']),
                   decoder_hidden=tuple(data['decoder_hidden']),
                   boundary_hidden=tuple(data['boundary_hidden']))


class DenseStack:
    """Affine layers with a shared hidden activation and a final output activation"""

    def __init__(self, prefix, sizes, hidden='relu', output='identity'):
        if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
            raise ConfigurationError(f'{prefix} layer sizes must be positive, got {sizes}')
        self.prefix = prefix
        self.sizes = tuple(int(s) for s in sizes)
        self.hidden = hidden
        self.output = output

    def __repr__(self):
        arrows = ' -> '.join(str(s) for s in self.sizes)
        return f'<{type(self).__name__} {arrows}>'

    @property
    def input_dim(self):
        return self.sizes[0]

    @property
    def output_dim(self):
        return self.sizes[-1]

    def layer_names(self):
        return [(f'{self.prefix}{i}.weight', f'{self.prefix}{i}.bias')
                for i in range(len(self.sizes) - 1)]

    def shapes(self):
        for i, (w_name, b_name) in enumerate(self.layer_names()):
            yield w_name, (self.sizes[i], self.sizes[i + 1])
            yield b_name, (self.sizes[i + 1],)

    def forward(self, inputs, store):
        x = inputs if isinstance(inputs, Tensor) else Tensor(np.atleast_2d(inputs))
        if x.data.ndim != 2 or x.shape[1] != self.input_dim:
            raise ConfigurationError(
                f'{self.prefix[:-1]} expects inputs of width {self.input_dim}, got shape {x.shape}')
        names = self.layer_names()
        for i, (w_name, b_name) in enumerate(names):
            x = affine(x, store[w_name], store[b_name])
            x = activation(x, self.output if i == len(names) - 1 else self.hidden)
        return x

    def relu_signs(self, inputs, store):
        """Signs (> 0) of every relu pre-activation and the stack's output, no graph."""
        x = inputs.data if isinstance(inputs, Tensor) else np.atleast_2d(inputs)
        signs = []
        names = self.layer_names()
        for i, (w_name, b_name) in enumerate(names):
            kind = self.output if i == len(names) - 1 else self.hidden
            pre = x @ store[w_name].data + store[b_name].data
            if kind == 'relu':
                signs.append(pre > 0)
            x = activation(Tensor(pre), kind).data
        return signs, x

    def infer(self, inputs, store):
        """Forward pass on constants only; builds no graph."""
        frozen = {name: Tensor(store[name].data) for pair in self.layer_names() for name in pair}
        x = inputs.data if isinstance(inputs, Tensor) else np.atleast_2d(inputs)
        return self.forward(Tensor(x), frozen).data


class EncoderNet(DenseStack):
    def __init__(self, config):
        super().__init__(ENCODER, (config.image_pixels, *config.encoder_hidden, config.latent_dim),
                         hidden='relu', output='identity')


class DecoderNet(DenseStack):
    def __init__(self, config):
        super().__init__(DECODER, (config.latent_dim, *config.decoder_hidden, config.image_pixels),
                         hidden='relu', output='sigmoid')


class BoundaryNet(DenseStack):
    def __init__(self, config):
        super().__init__(BOUNDARY, (config.param_dim, *config.boundary_hidden, config.latent_dim),
                         hidden='relu', output='identity')


def init_weights(config, seed, scheme='uniform'):
    """
    Fresh ParamStore for all three networks.

    Weights are drawn uniformly from +-sqrt(6 / (fan_in + fan_out)) per layer,
    biases start at zero. ``scheme='zeros'`` gives an all-zero store.
    """
    if scheme not in ('uniform', 'zeros'):
        raise ConfigurationError(f'unknown init scheme {scheme!r}')
    rng = np.random.default_rng(seed)
    store = ParamStore()
    for net in (EncoderNet(config), DecoderNet(config), BoundaryNet(config)):
        for name, shape in net.shapes():
            if len(shape) == 2 and scheme == 'uniform':
                bound = np.sqrt(6.0 / (shape[0] + shape[1]))
                store.add(name, rng.uniform(-bound, bound, size=shape))
            else:
                store.add(name, np.zeros(shape))
    return store


class BoundaryDecoderNets:
    """The encoder, decoder and boundary net over one shared store"""

    def __init__(self, config, store):
        self.config = config
        self.encoder = EncoderNet(config)
        self.decoder = DecoderNet(config)
        self.boundary = BoundaryNet(config)
        if not (self.encoder.output_dim == self.decoder.input_dim == self.boundary.output_dim):
            raise ConfigurationError(
                f'latent size mismatch: encoder {self.encoder.output_dim}, '
                f'decoder {self.decoder.input_dim}, boundary {self.boundary.output_dim}')
        if self.decoder.output_dim != self.encoder.input_dim:
            raise ConfigurationError(
                f'decoder emits {self.decoder.output_dim} pixels, encoder reads {self.encoder.input_dim}')
        for net in (self.encoder, self.decoder, self.boundary):
            for name, shape in net.shapes():
                if name not in store:
                    raise ConfigurationError(f'parameter store lacks {name!r}')
                if store[name].shape != shape:
                    raise ConfigurationError(
                        f'parameter {name!r} has shape {store[name].shape}, expected {shape}')
        self.store = store
        # training mean image, subtracted from every encoder input (None: no shift)
        self.input_shift = None

    @classmethod
    def create(cls, config, seed, scheme='uniform'):
        return cls(config, init_weights(config, seed, scheme))

    def __repr__(self):
        return f'<BoundaryDecoderNets {self.encoder!r} {self.decoder!r} {self.boundary!r}>'

    def set_input_shift(self, shift):
        if shift is None:
            self.input_shift = None
            return
        shift = np.asarray(shift, dtype=np.float64).reshape(-1)
        if shift.size != self.encoder.input_dim:
            raise ConfigurationError(
                f'input shift has {shift.size} values, encoder reads {self.encoder.input_dim}')
        self.input_shift = shift

    def _shifted(self, images):
        if self.input_shift is None:
            return images
        data = images.data if isinstance(images, Tensor) else np.atleast_2d(images)
        return data - self.input_shift

    def encode(self, images):
        """Images (n, pixels) -> latent codes z (n, d_z)."""
        return self.encoder.forward(self._shifted(images), self.store)

    def decode(self, latents):
        """Latent codes (n, d_z) -> images in (0, 1)."""
        return self.decoder.forward(latents, self.store)

    def boundary_map(self, params):
        """Normalized parameter vectors (n, 5) -> latent codes (n, d_z)."""
        return self.boundary.forward(params, self.store)

    def predict(self, params):
        """The BD path, decode(boundary_map(p)), as a plain array."""
        return self.decoder.infer(self.boundary.infer(params, self.store), self.store)

    def encode_array(self, images):
        return self.encoder.infer(self._shifted(images), self.store)

    def relu_signs(self, images, params):
        """Every relu sign on the encoder, reconstruction and boundary-decoder paths, flattened."""
        enc, z = self.encoder.relu_signs(self._shifted(images), self.store)
        rec, _ = self.decoder.relu_signs(z, self.store)
        bnd, zb = self.boundary.relu_signs(params, self.store)
        out, _ = self.decoder.relu_signs(zb, self.store)
        parts = [s.reshape(-1) for s in (*enc, *rec, *bnd, *out)]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=bool)

    def decode_array(self, latents):
        return self.decoder.infer(latents, self.store)
