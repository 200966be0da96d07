from voxrefine.train.corrupt import corrupt_labels
from voxrefine.train.dataset import SceneSample, load_samples
from voxrefine.train.models import (
    BlobEraseNoise,
    CorruptionStats,
    DivergenceError,
    DropoutNoise,
    EpochRecord,
    FileDataset,
    RunConfig,
    SampleEntry,
    SampleReadError,
    StepRecord,
    SwapNoise,
    SyntheticDataset,
    TrainingError,
    TrainResult,
)
from voxrefine.train.optim import AdamState, AdamW, adamw_step
from voxrefine.train.schedule import cosine_warmup_lr
from voxrefine.train.synthetic import layered_scene, random_text
from voxrefine.train.trainer import evaluate, predict, train_refiner

__all__ = [
    'AdamState',
    'AdamW',
    'BlobEraseNoise',
    'CorruptionStats',
    'DivergenceError',
    'DropoutNoise',
    'EpochRecord',
    'FileDataset',
    'RunConfig',
    'SampleEntry',
    'SampleReadError',
    'SceneSample',
    'StepRecord',
    'SwapNoise',
    'SyntheticDataset',
    'TrainResult',
    'TrainingError',
    'adamw_step',
    'corrupt_labels',
    'cosine_warmup_lr',
    'evaluate',
    'layered_scene',
    'load_samples',
    'predict',
    'random_text',
    'train_refiner',
]
