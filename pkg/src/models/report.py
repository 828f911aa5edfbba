import json
import os
from dataclasses import dataclass, field

import numpy as np

from src.config import TrainConfig
from src.errors import ConfigurationError, DatasetIOError, ValidationError


@dataclass
class CheckpointEntry:
    """Evaluation snapshot taken at one training iteration"""
    iteration: int
    train_ssd: float = None
    test_ssd: float = None
    l1: float = 0.0
    l2: float = 0.0
    l3: float = 0.0
    loss: float = 0.0
    batch_loss: float = 0.0
    layer_test_ssd: dict = field(default_factory=dict)
    wall_time: float = 0.0
    kmeans_time: float = 0.0
    kmeans_calls: int = 0

    def __repr__(self):
        return f'<CheckpointEntry it={self.iteration} test={self.test_ssd}>'

    def to_dict(self):
        return {
            'kind': 'checkpoint',
            'iteration': self.iteration,
            'train_ssd': self.train_ssd,
            'test_ssd': self.test_ssd,
            'l1': self.l1,
            'l2': self.l2,
            'l3': self.l3,
            'loss': self.loss,
            'batch_loss': self.batch_loss,
            'layer_test_ssd': self.layer_test_ssd,
        }

    def timing_dict(self):
        return {
            'kind': 'timing',
            'iteration': self.iteration,
            'wall_time': self.wall_time,
            'kmeans_time': self.kmeans_time,
            'kmeans_calls': self.kmeans_calls,
        }


@dataclass
class TrainReport:
    variant: str
    seed: int
    config: TrainConfig
    checkpoints: list = field(default_factory=list)

    def __repr__(self):
        return f'<TrainReport {self.variant} seed={self.seed} checkpoints={len(self.checkpoints)}>'

    def add(self, entry):
        if self.checkpoints and entry.iteration <= self.checkpoints[-1].iteration:
            raise ValidationError(
                f'checkpoint {entry.iteration} is not after {self.checkpoints[-1].iteration}')
        for value in (entry.train_ssd, entry.test_ssd):
            if value is not None and not np.isfinite(value):
                raise ValidationError(f'non-finite error at iteration {entry.iteration}')
        self.checkpoints.append(entry)
        return entry

    @property
    def final(self):
        return self.checkpoints[-1] if self.checkpoints else None

    @property
    def wall_time(self):
        return self.final.wall_time if self.checkpoints else 0.0

    @property
    def kmeans_time(self):
        return self.final.kmeans_time if self.checkpoints else 0.0

    def run_record(self):
        return {'kind': 'run', 'variant': self.variant, 'seed': self.seed,
                'config': self.config.to_dict()}

    def to_jsonl(self):
        lines = [self.run_record()] + [c.to_dict() for c in self.checkpoints]
        return ''.join(json.dumps(line, sort_keys=True) + '\n' for line in lines)

    def timing_jsonl(self):
        return ''.join(json.dumps(c.timing_dict(), sort_keys=True) + '\n' for c in self.checkpoints)

    @classmethod
    def from_records(cls, records, timings=None):
        records = list(records)
        if not records or records[0].get('kind') != 'run':
            raise DatasetIOError('report must start with a run record')
        head = records[0]
        report = cls(variant=head['variant'], seed=head['seed'],
                     config=TrainConfig.from_dict(head['config']))
        timing_by_it = {t['iteration']: t for t in (timings or [])}
        for record in records[1:]:
            if record.get('kind') != 'checkpoint':
                raise DatasetIOError(f'unexpected report record kind {record.get("kind")!r}')
            timing = timing_by_it.get(record['iteration'], {})
            report.add(CheckpointEntry(
                iteration=record['iteration'],
                train_ssd=record.get('train_ssd'),
                test_ssd=record.get('test_ssd'),
                l1=record.get('l1', 0.0),
                l2=record.get('l2', 0.0),
                l3=record.get('l3', 0.0),
                loss=record.get('loss', 0.0),
                batch_loss=record.get('batch_loss', 0.0),
                layer_test_ssd=record.get('layer_test_ssd', {}),
                wall_time=timing.get('wall_time', 0.0),
                kmeans_time=timing.get('kmeans_time', 0.0),
                kmeans_calls=timing.get('kmeans_calls', 0),
            ))
        return report


def timing_path(report_path):
    base, _ = os.path.splitext(report_path)
    return base + '.timing.jsonl'


def save_report(report, path):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(report.to_jsonl())
        with open(timing_path(path), 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(report.timing_jsonl())
    except OSError as exc:
        raise DatasetIOError(f'cannot write report {path}: {exc}') from exc
    return path


def _read_jsonl(path):
    with open(path, encoding='utf-8') as handle:
        return [json.loads(line) for line in handle if line.strip()]


def load_report(path):
    try:
        records = _read_jsonl(path)
        timings = _read_jsonl(timing_path(path)) if os.path.exists(timing_path(path)) else []
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetIOError(f'cannot read report {path}: {exc}') from exc
    return TrainReport.from_records(records, timings)


@dataclass
class LatentStore:
    """Training parameter vectors, their latent codes and case ids, row-aligned"""
    vec_train: np.ndarray
    latent_train: np.ndarray
    case_indices: np.ndarray

    def __post_init__(self):
        n = self.vec_train.shape[0]
        if self.latent_train.shape[0] != n or self.case_indices.shape[0] != n:
            raise ConfigurationError('latent store sequences must have equal lengths')

    def __len__(self):
        return int(self.vec_train.shape[0])

    def __repr__(self):
        return f'<LatentStore {len(self)} cases>'
