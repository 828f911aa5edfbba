from datetime import datetime, timezone

from sqlalchemy import JSON, Column, DateTime, Float, ForeignKey, Integer, String, UniqueConstraint
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import relationship

from src.config import TrainConfig
from src.errors import DatasetIOError
from src.models.database import Base
from src.models.report import CheckpointEntry, TrainReport


def _utcnow():
    return datetime.now(timezone.utc)


class TrainRun(Base):
    """One training run of a variant/seed pair"""
    __tablename__ = 'train_runs'
    __table_args__ = (UniqueConstraint('variant', 'seed', 'label', name='uq_run_variant_seed_label'),)

    id = Column(Integer, primary_key=True)
    variant = Column(String(16), nullable=False)
    seed = Column(Integer, nullable=False)
    label = Column(String(200), nullable=False, default='')  # usually the report path
    config = Column(JSON, nullable=False)
    recorded_at = Column(DateTime, nullable=False, default=_utcnow)

    checkpoints = relationship('Checkpoint', back_populates='run', cascade='all, delete-orphan',
                               order_by='Checkpoint.iteration')

    def __repr__(self):
        return f'<TrainRun {self.variant} seed={self.seed}>'

    def to_dict(self):
        return {
            'id': self.id,
            'variant': self.variant,
            'seed': self.seed,
            'label': self.label,
            'config': self.config,
            'recorded_at': self.recorded_at.isoformat() if self.recorded_at else None,
            'checkpoints': [c.to_dict() for c in self.checkpoints],
        }

    def to_report(self):
        report = TrainReport(variant=self.variant, seed=self.seed,
                             config=TrainConfig.from_dict(self.config))
        for checkpoint in self.checkpoints:
            report.add(checkpoint.to_entry())
        return report

    @classmethod
    def from_report(cls, report, label=''):
        """Build a run and its checkpoint rows from a TrainReport"""
        run = cls(variant=report.variant, seed=report.seed, label=label,
                  config=report.config.to_dict())
        run.checkpoints = [Checkpoint.from_entry(entry) for entry in report.checkpoints]
        return run

    @classmethod
    def record(cls, session_factory, report, label=''):
        """Store ``report``, replacing an earlier run with the same variant, seed and label"""
        with session_factory() as session:
            try:
                existing = session.query(cls).filter_by(variant=report.variant, seed=report.seed,
                                                        label=label).one_or_none()
                if existing is not None:
                    session.delete(existing)
                    session.flush()
                run = cls.from_report(report, label=label)
                session.add(run)
                session.commit()
                return run.id
            except SQLAlchemyError as exc:
                session.rollback()
                raise DatasetIOError(f'cannot record run in ledger: {exc}') from exc

    @classmethod
    def load_reports(cls, session_factory, variants=None):
        """Every stored run as a TrainReport, ordered by variant, seed and label"""
        with session_factory() as session:
            try:
                query = session.query(cls)
                if variants:
                    query = query.filter(cls.variant.in_(list(variants)))
                runs = query.order_by(cls.variant, cls.seed, cls.label).all()
                return [run.to_report() for run in runs]
            except SQLAlchemyError as exc:
                raise DatasetIOError(f'cannot read runs from ledger: {exc}') from exc


class Checkpoint(Base):
    """Evaluation values of one run at one checkpoint iteration"""
    __tablename__ = 'checkpoints'

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey('train_runs.id'), nullable=False)
    iteration = Column(Integer, nullable=False)
    train_ssd = Column(Float, nullable=True)  # none for AE_KNN
    test_ssd = Column(Float, nullable=True)
    l1 = Column(Float, nullable=False, default=0.0)
    l2 = Column(Float, nullable=False, default=0.0)
    l3 = Column(Float, nullable=False, default=0.0)
    loss = Column(Float, nullable=False, default=0.0)
    batch_loss = Column(Float, nullable=False, default=0.0)
    layer_test_ssd = Column(JSON, nullable=False, default=dict)
    wall_time = Column(Float, nullable=False, default=0.0)
    kmeans_time = Column(Float, nullable=False, default=0.0)
    kmeans_calls = Column(Integer, nullable=False, default=0)

    run = relationship('TrainRun', back_populates='checkpoints')

    def __repr__(self):
        return f'<Checkpoint run={self.run_id} it={self.iteration}>'

    def to_dict(self):
        return {
            'iteration': self.iteration,
            'train_ssd': self.train_ssd,
            'test_ssd': self.test_ssd,
            'l1': self.l1,
            'l2': self.l2,
            'l3': self.l3,
            'loss': self.loss,
            'batch_loss': self.batch_loss,
            'layer_test_ssd': self.layer_test_ssd,
            'wall_time': self.wall_time,
            'kmeans_time': self.kmeans_time,
            'kmeans_calls': self.kmeans_calls,
        }

    def to_entry(self):
        return CheckpointEntry(**self.to_dict())

    @classmethod
    def from_entry(cls, entry):
        return cls(iteration=entry.iteration, train_ssd=entry.train_ssd, test_ssd=entry.test_ssd,
                   l1=entry.l1, l2=entry.l2, l3=entry.l3, loss=entry.loss,
                   batch_loss=entry.batch_loss, layer_test_ssd=dict(entry.layer_test_ssd),
                   wall_time=entry.wall_time, kmeans_time=entry.kmeans_time,
                   kmeans_calls=entry.kmeans_calls)
