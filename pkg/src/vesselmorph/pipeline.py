"""Segment -> align -> transfer -> synthesize -> evaluate."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import Normalizer
from .io import (FrameFileSet, read_centerline, read_cloud, read_station_field,
                 remove_outputs, write_sequence)
from .metrics import MetricReport, compare
from .segmentation import Centerline, CubeParams, segment_centerline
from .softdtw import SoftDtwParams, optimize_field
from .sortalign import field_by_subtraction, pair_segments
from .transfer import CardiacSequence, CuboidParams, assign_field, synthesize_4d

logger = logging.getLogger(__name__)

METHODS = ("sort", "softdtw")
SOFTDTW_MODES = ("segment", "global")
DEFAULT_PHASES = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    systole_cloud: str | None = None
    diastole_cloud: str | None = None
    systole_centerline: str | None = None
    diastole_centerline: str | None = None
    station_field: str | None = None
    truth_cloud: str | None = None
    truth_phase: float | None = None
    method: str = "sort"
    softdtw_mode: str = "segment"
    cube_edge: float | None = None
    cube_epsilon: float | None = None
    face_rule: str = "exit"
    cuboid_length: float = 1.0
    cuboid_width: float | None = None
    gamma: float = 0.1
    step_size: float = 1e-2
    iterations: int = 2000
    smoothness_weight: float = 0.1
    momentum: float = 0.0
    phases: list[float] = field(default_factory=lambda: list(DEFAULT_PHASES))
    normalize: bool = False
    seed: int = 0
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def cube_params(self, points) -> CubeParams:
        if self.cube_edge is None:
            kwargs = {"face_rule": self.face_rule}
            params = CubeParams.from_spacing(points, **kwargs)
            if self.cube_epsilon is not None:
                params = CubeParams(params.l, self.cube_epsilon, self.face_rule)
            return params
        eps = self.cube_epsilon if self.cube_epsilon is not None else self.cube_edge / 4.0
        return CubeParams(self.cube_edge, eps, self.face_rule)

    def cuboid_params(self) -> CuboidParams:
        return CuboidParams(self.cuboid_length, self.cuboid_width)

    def softdtw_params(self) -> SoftDtwParams:
        return SoftDtwParams(self.gamma, self.step_size, self.iterations, self.smoothness_weight, self.momentum)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.softdtw_mode not in SOFTDTW_MODES:
            raise ConfigError(f"softdtw_mode must be one of {SOFTDTW_MODES}")
        required = ["systole_cloud"]
        if self.station_field is None:
            required += ["systole_centerline", "diastole_centerline"]
        for name in required:
            if getattr(self, name) is None:
                raise ConfigError(f"{name} is required")
        for name in ("systole_cloud", "diastole_cloud", "systole_centerline",
                     "diastole_centerline", "station_field", "truth_cloud"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_file():
                raise ConfigError(f"{name}: file not found: {value}")
        if self.normalize and self.diastole_cloud is None:
            raise ConfigError("normalize needs both vessel clouds")
        phases = list(self.phases)
        if not phases:
            raise ConfigError("phase list is empty")
        if any(not 0.0 <= p <= 1.0 for p in phases):
            raise ConfigError("phases must lie in [0, 1]")
        if any(b <= a for a, b in zip(phases, phases[1:])):
            raise ConfigError("phases must be strictly increasing")
        if self.truth_cloud is not None and self.truth_phase is None:
            raise ConfigError("truth_cloud needs truth_phase")
        if self.truth_phase is not None and not 0.0 <= self.truth_phase <= 1.0:
            raise ConfigError("truth_phase must lie in [0, 1]")
        try:
            self.cuboid_params()
            self.softdtw_params()
            if self.cube_edge is not None:
                self.cube_params(None)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class StationField:
    """Centerline stations that carry displacement vectors, in input coordinates."""

    stations: np.ndarray
    vectors: np.ndarray
    segment_ids: np.ndarray
    unmatched_systole: list[int] = field(default_factory=list)
    unmatched_diastole: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    def centerline(self, normalizer: Normalizer | None = None) -> Centerline:
        pts = self.stations if normalizer is None else normalizer.forward(self.stations)
        return Centerline(pts, None, self.segment_ids)


def make_normalizer(config: RunConfig, systole_cloud, diastole_cloud) -> Normalizer | None:
    if not config.normalize:
        return None
    return Normalizer.fit(systole_cloud, diastole_cloud)


def working(cl: Centerline, normalizer: Normalizer | None) -> Centerline:
    if normalizer is None:
        return cl
    return Centerline(normalizer.forward(cl.points), cl.attributes, cl.segment_ids)


def segment_stage(cl: Centerline, config: RunConfig, normalizer=None) -> Centerline:
    """Segment ``cl`` unless it already carries labels; returns input coordinates."""
    if cl.is_segmented:
        return cl
    work = working(cl, normalizer)
    labelled = segment_centerline(work, config.cube_params(work.points))
    return Centerline(cl.points, labelled.attributes, labelled.segment_ids)


def align_stage(sys_cl: Centerline, dia_cl: Centerline, config: RunConfig, normalizer=None) -> StationField:
    """Per-station deformation of the systolic centerline, in input units."""
    result = pair_segments(working(sys_cl, normalizer), working(dia_cl, normalizer))
    pairs = result.pairs
    losses: list[float] = []
    if config.method == "sort":
        vectors = [field_by_subtraction(p) for p in pairs]
    elif config.softdtw_mode == "segment":
        vectors = []
        for p in pairs:
            res = optimize_field(p.systole, p.diastole, config.softdtw_params())
            vectors.append(res.field)
            losses.append(res.loss)
    else:
        res = optimize_field(np.vstack([p.systole for p in pairs]),
                             np.vstack([p.diastole for p in pairs]), config.softdtw_params())
        vectors = np.split(res.field, np.cumsum([len(p.systole) for p in pairs])[:-1])
        losses.append(res.loss)
    stations = np.vstack([p.systole for p in pairs])
    vec = np.vstack(vectors)
    if normalizer is not None:
        stations = normalizer.inverse(stations)
        vec = normalizer.inverse_vectors(vec)
    ids = np.concatenate([np.full(len(p.systole), p.systole_id) for p in pairs])
    return StationField(stations, vec, ids, result.unmatched_systole, result.unmatched_diastole, losses)


def transfer_stage(vessel, stations: StationField, config: RunConfig, normalizer=None) -> np.ndarray:
    work = vessel if normalizer is None else normalizer.forward(vessel)
    return assign_field(work, stations.centerline(normalizer), stations.vectors, config.cuboid_params()).field


@dataclass
class PipelineResult:
    sequence: CardiacSequence
    vessel_field: np.ndarray
    stations: StationField
    reports: dict[str, MetricReport]
    manifest: dict
    files: FrameFileSet | None = None


def run_pipeline(config: RunConfig) -> PipelineResult:
    """Run every stage; any failure is re-raised as :class:`StageError` naming the stage."""
    config.validate()
    stage = "load"
    try:
        systole = read_cloud(config.systole_cloud)
        diastole = read_cloud(config.diastole_cloud) if config.diastole_cloud else None
        normalizer = make_normalizer(config, systole, diastole)
        if config.station_field is not None:
            st, vec, ids = read_station_field(config.station_field)
            stations = StationField(st, vec, ids)
        else:
            sys_cl = read_centerline(config.systole_centerline)
            dia_cl = read_centerline(config.diastole_centerline)
            stage = "segment"
            sys_cl = segment_stage(sys_cl, config, normalizer)
            dia_cl = segment_stage(dia_cl, config, normalizer)
            stage = "align"
            stations = align_stage(sys_cl, dia_cl, config, normalizer)
        stage = "transfer"
        vessel_field = transfer_stage(systole, stations, config, normalizer)
        stage = "synthesize"
        sequence = synthesize_4d(systole, vessel_field, config.phases)
        stage = "evaluate"
        reports = {}
        if diastole is not None:
            reports["final_vs_diastole"] = compare(systole + vessel_field, diastole)
        if config.truth_cloud is not None:
            frame = systole + config.truth_phase * vessel_field
            reports["truth"] = compare(frame, read_cloud(config.truth_cloud))
    except Exception as exc:
        raise StageError(stage, exc) from exc

    manifest = {
        "tool": "vesselmorph",
        "version": __version__,
        "config": config.to_dict(),
        "seed": config.seed,
        "unmatched_segments": {"systole": stations.unmatched_systole,
                               "diastole": stations.unmatched_diastole},
        "metrics": {k: v.to_dict() for k, v in reports.items()},
    }
    result = PipelineResult(sequence, vessel_field, stations, reports, manifest)
    if config.output_dir is not None:
        try:
            result.files = write_sequence(sequence, config.output_dir, manifest)
        except Exception as exc:
            raise StageError("write", exc) from exc
    return result
