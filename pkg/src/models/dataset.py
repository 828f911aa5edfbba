"""
Full-factorial DOE of the two-die package and its surrogate stress images.

The finite element outputs are replaced by an analytic field: two square dies
of side ``d`` separated by a gap ``g`` sit in a 5 mm x 5 mm window sampled on a
26 x 26 grid. Stress peaks at the die boundaries and decays with a
layer-specific length, scaled by the EMC material factor.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from src.config import DEFAULT_LEVELS, DEFAULT_SURROGATE
from src.errors import ConfigurationError, SchemaVersionError, ValidationError, DatasetIOError
from src.utils.container import read_container, write_container

SCHEMA_VERSION = 1
GRID_SIDE = 26
PIXELS = GRID_SIDE * GRID_SIDE
FIELD_MM = 5.0

PARAM_NAMES = ('emc_modulus', 'emc_cte', 'die_size', 'gap_size')
PARAM_RANGES = {
    'emc_modulus': (5.0, 30.0),   # GPa
    'emc_cte': (5.0, 20.0),       # ppm/C
    'die_size': (0.5, 1.8),       # mm
    'gap_size': (0.2, 1.0),       # mm
}


class Layer(IntEnum):
    OVERMOLD = 0
    UF = 1
    RDL = 2

    @property
    def label(self):
        return self.name.lower()

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ConfigurationError(
                f'unknown layer {value!r}; expected one of {[l.label for l in cls]}') from None


def _check_range(name, value):
    low, high = PARAM_RANGES[name]
    if not (low <= value <= high) or not np.isfinite(value):
        raise ConfigurationError(f'{name}={value} outside its range [{low}, {high}]')


@dataclass(frozen=True)
class ParamVector:
    emc_modulus: float
    emc_cte: float
    die_size: float
    gap_size: float
    layer: Layer

    def __post_init__(self):
        for name in PARAM_NAMES:
            _check_range(name, getattr(self, name))
        object.__setattr__(self, 'layer', Layer.parse(self.layer))

    def numeric(self):
        return tuple(getattr(self, name) for name in PARAM_NAMES)

    def to_dict(self):
        data = {name: getattr(self, name) for name in PARAM_NAMES}
        data['layer'] = self.layer.label
        return data


def normalize_params(p):
    """Min-max map of the numeric fields to [0, 1]; layer -> index / 2."""
    values = []
    for name in PARAM_NAMES:
        value = getattr(p, name)
        _check_range(name, value)
        low, high = PARAM_RANGES[name]
        values.append((value - low) / (high - low))
    values.append(int(p.layer) / (len(Layer) - 1))
    return np.array(values, dtype=np.float64)


def normalize_param_matrix(numeric, layers):
    """Vectorized normalize_params over an (n, 4) array and layer indices."""
    numeric = np.asarray(numeric, dtype=np.float64)
    out = np.empty((numeric.shape[0], 5))
    for j, name in enumerate(PARAM_NAMES):
        low, high = PARAM_RANGES[name]
        out[:, j] = (numeric[:, j] - low) / (high - low)
    out[:, 4] = np.asarray(layers, dtype=np.float64) / (len(Layer) - 1)
    return out


@dataclass(frozen=True)
class DOEGrid:
    levels: dict = field(default_factory=lambda: dict(DEFAULT_LEVELS))
    layers: tuple = tuple(Layer)

    def __post_init__(self):
        for name in PARAM_NAMES:
            values = self.levels.get(name)
            if not values:
                raise ConfigurationError(f'empty level list for {name!r}')
            for value in values:
                _check_range(name, value)

    @property
    def cases_per_layer(self):
        return int(np.prod([len(self.levels[name]) for name in PARAM_NAMES]))

    @property
    def total(self):
        return self.cases_per_layer * len(self.layers)

    def to_dict(self):
        return {name: list(self.levels[name]) for name in PARAM_NAMES}


def enumerate_doe(grid):
    """Cartesian product ordered by (layer, emc_modulus, emc_cte, die_size, gap_size)."""
    axes = [sorted(grid.levels[name]) for name in PARAM_NAMES]
    cases = []
    for layer in sorted(grid.layers):
        for combo in itertools.product(*axes):
            cases.append(ParamVector(*combo, layer=layer))
    return cases


@dataclass(frozen=True)
class SurrogateConstants:
    table: dict = field(default_factory=lambda: dict(DEFAULT_SURROGATE))

    def for_layer(self, layer):
        amplitude, length, far_field = self.table[Layer.parse(layer).label]
        return float(amplitude), float(length), float(far_field)

    def to_dict(self):
        return {name: list(values) for name, values in self.table.items()}


def pixel_coordinates():
    """Physical (x, y) in mm of every pixel centre, shaped (26, 26)."""
    u = (np.arange(GRID_SIDE) + 0.5) / GRID_SIDE
    axis = (u - 0.5) * FIELD_MM
    x, y = np.meshgrid(axis, axis)
    return x, y


def die_boundary_distance(x, y, die_size, gap_size):
    """Distance from each point to the nearest die-rectangle boundary (0 on it)."""
    half = die_size / 2.0
    centre = gap_size / 2.0 + die_size / 2.0
    nearest = None
    for cx in (-centre, centre):
        dx = np.abs(x - cx) - half
        dy = np.abs(y) - half
        inside = (dx <= 0) & (dy <= 0)
        outside = np.hypot(np.maximum(dx, 0.0), np.maximum(dy, 0.0))
        dist = np.where(inside, -np.maximum(dx, dy), outside)
        nearest = dist if nearest is None else np.minimum(nearest, dist)
    return nearest


def synthesize_stress_image(p, constants=None):
    """Raw (MPa) 26x26 surrogate stress field for one case, flattened row-major."""
    constants = constants or SurrogateConstants()
    for name in PARAM_NAMES:
        _check_range(name, getattr(p, name))
    amplitude, length, far_field = constants.for_layer(p.layer)
    x, y = pixel_coordinates()
    delta = die_boundary_distance(x, y, p.die_size, p.gap_size)
    material = (p.emc_modulus / 30.0) * (p.emc_cte / 20.0)
    field_ = amplitude * material * np.exp(-(delta / length) ** 2) + far_field * material
    return field_.reshape(-1)


@dataclass
class DatasetManifest:
    levels: dict
    surrogate: dict
    seed: int
    global_min: float = 0.0
    global_max: float = 0.0
    layer_extrema: dict = field(default_factory=dict)
    normalization: str = 'global'
    train_indices: list = field(default_factory=list)
    test_indices: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return {
            'schema_version': self.schema_version,
            'levels': self.levels,
            'surrogate': self.surrogate,
            'seed': self.seed,
            'global_min': self.global_min,
            'global_max': self.global_max,
            'layer_extrema': self.layer_extrema,
            'normalization': self.normalization,
            'train_indices': list(self.train_indices),
            'test_indices': list(self.test_indices),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(eq=False)
class StressDataset:
    """Cases in DOE order: raw numeric parameters, layers, raw and normalized images"""
    numeric: np.ndarray
    layers: np.ndarray
    raw: np.ndarray
    manifest: DatasetManifest
    images: np.ndarray = None

    def __len__(self):
        return int(self.layers.shape[0])

    def __eq__(self, other):
        if not isinstance(other, StressDataset):
            return NotImplemented
        same_images = ((self.images is None and other.images is None)
                       or (self.images is not None and other.images is not None
                           and np.array_equal(self.images, other.images)))
        return (np.array_equal(self.numeric, other.numeric)
                and np.array_equal(self.layers, other.layers)
                and np.array_equal(self.raw, other.raw)
                and same_images
                and self.manifest.to_dict() == other.manifest.to_dict())

    def case(self, index):
        if not 0 <= index < len(self):
            raise ConfigurationError(f'unknown case id {index}; dataset has {len(self)} cases')
        e, cte, die, gap = (float(v) for v in self.numeric[index])
        return ParamVector(e, cte, die, gap, Layer(int(self.layers[index])))

    def normalized_params(self, indices=None):
        idx = slice(None) if indices is None else np.asarray(indices, dtype=np.int64)
        return normalize_param_matrix(self.numeric[idx], self.layers[idx])

    def targets(self, indices=None):
        if self.images is None:
            raise ValidationError('dataset images are not normalized yet')
        idx = slice(None) if indices is None else np.asarray(indices, dtype=np.int64)
        return self.images[idx]

    @property
    def train_indices(self):
        return np.asarray(self.manifest.train_indices, dtype=np.int64)

    @property
    def test_indices(self):
        return np.asarray(self.manifest.test_indices, dtype=np.int64)

    def layer_counts(self):
        return {layer.label: int(np.sum(self.layers == layer)) for layer in Layer}


def synthesize_dataset(grid, constants=None, seed=0, workers=1):
    """Raw images for every DOE case; ordering is independent of ``workers``."""
    constants = constants or SurrogateConstants()
    cases = enumerate_doe(grid)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(lambda p: synthesize_stress_image(p, constants), cases))
    else:
        images = [synthesize_stress_image(p, constants) for p in cases]
    numeric = np.array([p.numeric() for p in cases], dtype=np.float64).reshape(len(cases), 4)
    layers = np.array([int(p.layer) for p in cases], dtype=np.int64)
    manifest = DatasetManifest(levels=grid.to_dict(), surrogate=constants.to_dict(), seed=seed)
    return StressDataset(numeric=numeric, layers=layers,
                         raw=np.array(images, dtype=np.float64).reshape(len(cases), PIXELS),
                         manifest=manifest)


def normalize_images(dataset, mode='global'):
    """Min-max scale raw images to [0, 1] and record the extrema in the manifest."""
    raw = dataset.raw
    if raw.size == 0:
        raise ValidationError('degenerate normalization: empty dataset')
    if not np.all(np.isfinite(raw)):
        raise ValidationError('raw images contain non-finite values')
    global_min, global_max = float(raw.min()), float(raw.max())
    if global_max == global_min:
        raise ValidationError('degenerate normalization: max == min')

    extrema = {}
    for layer in Layer:
        rows = raw[dataset.layers == layer]
        if rows.size:
            extrema[layer.label] = [float(rows.min()), float(rows.max())]

    if mode == 'global':
        images = (raw - global_min) / (global_max - global_min)
    elif mode == 'per_layer':
        images = np.empty_like(raw)
        for label, (low, high) in extrema.items():
            if high == low:
                raise ValidationError(f'degenerate normalization for layer {label}')
            rows = dataset.layers == Layer.parse(label)
            images[rows] = (raw[rows] - low) / (high - low)
    else:
        raise ConfigurationError(f'unknown normalization mode {mode!r}')

    dataset.images = images
    dataset.manifest.global_min = global_min
    dataset.manifest.global_max = global_max
    dataset.manifest.layer_extrema = extrema
    dataset.manifest.normalization = mode
    return dataset


def denormalize_images(images, layers, manifest):
    """Map normalized images back to MPa using the manifest extrema."""
    images = np.asarray(images, dtype=np.float64)
    if manifest.normalization == 'global':
        return images * (manifest.global_max - manifest.global_min) + manifest.global_min
    out = np.empty_like(images)
    layers = np.asarray(layers)
    for label, (low, high) in manifest.layer_extrema.items():
        rows = layers == Layer.parse(label)
        out[rows] = images[rows] * (high - low) + low
    return out


def split_train_test(layers, n_train, seed, stratify=True):
    """Seeded shuffle split; stratified runs take n_train / Z cases from every layer."""
    layers = np.asarray(layers)
    total = int(layers.shape[0])
    if not 0 < n_train < total:
        raise ConfigurationError(f'n_train must satisfy 0 < n_train < {total}, got {n_train}')
    rng = np.random.default_rng(seed)

    if not stratify:
        order = rng.permutation(total)
        return sorted(int(i) for i in order[:n_train]), sorted(int(i) for i in order[n_train:])

    present = sorted(set(int(l) for l in layers))
    if n_train % len(present):
        raise ConfigurationError(
            f'n_train={n_train} is not divisible by the layer count {len(present)}')
    per_layer = n_train // len(present)
    train, test = [], []
    for layer in present:
        members = np.flatnonzero(layers == layer)
        if per_layer >= members.size:
            raise ConfigurationError(
                f'layer {Layer(layer).label} has {members.size} cases, cannot take {per_layer} for training')
        order = rng.permutation(members)
        train.extend(int(i) for i in order[:per_layer])
        test.extend(int(i) for i in order[per_layer:])
    return sorted(train), sorted(test)


def save_dataset(dataset, path):
    if dataset.images is None or not dataset.manifest.train_indices:
        raise ValidationError('manifest incomplete: normalize and split before saving')
    header = {'kind': 'dataset', 'schema_version': SCHEMA_VERSION,
              'manifest': dataset.manifest.to_dict()}
    blocks = {
        'numeric': dataset.numeric,
        'layers': dataset.layers.astype(np.float64),
        'raw': dataset.raw,
        'images': dataset.images,
    }
    return write_container(path, header, blocks)


def load_dataset(path):
    header, blocks = read_container(path)
    if header.get('kind') != 'dataset':
        raise DatasetIOError(f'{path} is not a dataset file')
    version = header.get('schema_version')
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f'{path}: dataset schema version {version}, this build reads {SCHEMA_VERSION}')
    manifest = DatasetManifest.from_dict(header['manifest'])
    return StressDataset(numeric=blocks['numeric'],
                         layers=blocks['layers'].astype(np.int64),
                         raw=blocks['raw'],
                         images=blocks['images'],
                         manifest=manifest)
