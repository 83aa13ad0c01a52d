"""
Dataset schemas: target sources, generation profiles, manifest and pipeline config
"""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from schemas.events import EventSimConfig
from schemas.features import TimeSurfaceConfig
from schemas.metrics import CdConfig, SsimConfig
from schemas.scene import Pose, SceneGeometry, TrajectoryConfig
from schemas.training import TrainConfig


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class TargetSourceKind(str, Enum):
    """Where hidden target images come from"""
    IDX_UBYTE = "idx_ubyte"
    PGM_DIRECTORY = "pgm_directory"
    BUILTIN_BLOCK_DIGITS = "builtin_block_digits"


class TargetSource(BaseModel):
    """Target image archive description"""
    kind: TargetSourceKind = TargetSourceKind.BUILTIN_BLOCK_DIGITS
    images_path: Optional[str] = None
    labels_path: Optional[str] = None
    directory: Optional[str] = None

    @model_validator(mode="after")
    def validate_paths(self):
        if self.kind == TargetSourceKind.IDX_UBYTE and not (self.images_path and self.labels_path):
            raise ValueError('idx_ubyte source needs images_path and labels_path')
        if self.kind == TargetSourceKind.PGM_DIRECTORY and not self.directory:
            raise ValueError('pgm_directory source needs directory')
        return self


class GroupProfile(BaseModel):
    """One block of targets: n_per_digit variants of each digit at n_positions poses"""
    name: str
    split: Split
    n_per_digit: int = Field(..., ge=1)
    n_positions: int = Field(default=1, ge=1)
    n_frames: Optional[int] = Field(default=None, ge=1, description="Total frames, spread over targets")
    variant_offset: int = Field(default=0, ge=0)
    digits: List[int] = list(range(10))
    source: Optional[TargetSource] = None

    @field_validator('digits')
    def validate_digits(cls, v):
        if not v:
            raise ValueError('At least one digit is required')
        if any(d < 0 or d > 9 for d in v):
            raise ValueError('Digits must be within 0-9')
        if len(set(v)) != len(v):
            raise ValueError('Digits must be unique')
        return v

    @model_validator(mode="after")
    def validate_frames(self):
        if self.n_frames is not None and self.n_frames < self.n_targets:
            raise ValueError('n_frames must give every target at least one position')
        return self

    @property
    def n_targets(self) -> int:
        return len(self.digits) * self.n_per_digit

    def positions_for(self, target_index: int) -> int:
        """Number of poses sampled for the target_index-th target of this group"""
        if self.n_frames is None:
            return self.n_positions
        base, extra = divmod(self.n_frames, self.n_targets)
        return base + (1 if target_index < extra else 0)

    @property
    def frame_count(self) -> int:
        return self.n_frames if self.n_frames is not None else self.n_targets * self.n_positions


class DatasetProfile(BaseModel):
    """Named collection of groups"""
    name: str
    groups: List[GroupProfile]

    @field_validator('groups')
    def validate_groups(cls, v):
        names = [g.name for g in v]
        if len(set(names)) != len(names):
            raise ValueError('Group names must be unique')
        return v


def builtin_profiles() -> Dict[str, DatasetProfile]:
    """Profiles shipped with the toolkit"""
    smoke = DatasetProfile(name="smoke", groups=[
        GroupProfile(name="train", split=Split.TRAIN, n_per_digit=1, n_positions=1, digits=[0]),
        GroupProfile(name="val", split=Split.VAL, n_per_digit=1, n_positions=1, digits=[0], variant_offset=1),
        GroupProfile(name="test", split=Split.TEST, n_per_digit=1, n_positions=1, digits=[0], variant_offset=2),
    ])
    desk = DatasetProfile(name="desk", groups=[
        GroupProfile(name="train", split=Split.TRAIN, n_per_digit=2, n_positions=6),
        GroupProfile(name="val", split=Split.VAL, n_per_digit=1, n_positions=6, variant_offset=2),
        GroupProfile(name="test", split=Split.TEST, n_per_digit=1, n_positions=6, variant_offset=3),
    ])
    # 13 groups of 0-9 in training, MNIST-test and print-font digits in test
    full = DatasetProfile(name="full", groups=[
        GroupProfile(name="train", split=Split.TRAIN, n_per_digit=13, n_frames=3950),
        GroupProfile(name="val", split=Split.VAL, n_per_digit=1, n_positions=13, variant_offset=13),
        GroupProfile(name="test_mnist", split=Split.TEST, n_per_digit=1, n_positions=11, variant_offset=14),
        GroupProfile(name="test_print", split=Split.TEST, n_per_digit=1, n_positions=10, variant_offset=15,
                     source=TargetSource(kind=TargetSourceKind.BUILTIN_BLOCK_DIGITS)),
    ])
    return {p.name: p for p in (smoke, desk, full)}


class DatasetPlan(BaseModel):
    """Counts implied by a profile, computed without generating anything"""
    profile: str
    targets: Dict[str, int]
    frames: Dict[str, int]


class PipelineConfig(BaseModel):
    """Every module configuration in one document (the --config JSON)"""
    geometry: SceneGeometry = SceneGeometry()
    trajectory: TrajectoryConfig = TrajectoryConfig()
    event_sim: EventSimConfig = EventSimConfig()
    time_surface: TimeSurfaceConfig = TimeSurfaceConfig()
    train: TrainConfig = TrainConfig()
    ssim: SsimConfig = SsimConfig()
    cd: CdConfig = CdConfig()
    input_res: int = Field(default=32, ge=1, description="Model input side (features and F frames)")


class FramePair(BaseModel):
    """One time-aligned (E feature, F frame, ground truth) triple"""
    index: int
    bin_end_us: int
    pose: Pose
    ground_truth: str
    feature: str
    frame: str
    frame_scale: float = Field(..., description="Per-frame max used to normalise the F image")
    feature_scale: float = 65535.0


class SampleRecord(BaseModel):
    """One target moving along one trajectory"""
    id: str
    digit: int
    group: str
    split: Split
    variant: int
    poses: List[Pose]
    target: str
    wall_frames: str
    wall_timestamps: str
    wall_scale: float = Field(..., description="Irradiance mapped to PGM value 65535")
    events: str
    event_count: int
    frames: List[FramePair]


class ByteTotals(BaseModel):
    """On-disk size per modality"""
    events: int = 0
    wall_frames: int = 0
    features: int = 0
    frames: int = 0
    ground_truth: int = 0

    def add(self, other: "ByteTotals") -> "ByteTotals":
        return ByteTotals(**{k: getattr(self, k) + getattr(other, k) for k in ByteTotals.model_fields})


class DatasetManifest(BaseModel):
    """Index of a generated dataset with the configuration that produced it"""
    version: int = 1
    profile: DatasetProfile
    source: TargetSource
    config: PipelineConfig
    seed: int
    splits: Dict[Split, List[SampleRecord]] = {}
    byte_totals: ByteTotals = ByteTotals()

    @model_validator(mode="after")
    def validate_ids(self):
        ids = [s.id for samples in self.splits.values() for s in samples]
        if len(set(ids)) != len(ids):
            raise ValueError('Sample ids must be unique')
        return self

    def samples(self, split: Split) -> List[SampleRecord]:
        return self.splits.get(Split(split), [])

    def frame_count(self, split: Split) -> int:
        return sum(len(s.frames) for s in self.samples(split))


class ManifestCheck(BaseModel):
    """Outcome of verifying a manifest against the files on disk"""
    ok: bool
    samples: int
    files_checked: int
    problems: List[str] = []
