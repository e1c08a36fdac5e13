# src/schemas.py
# Pydantic models for observations, zone configuration, matches and reports
# Defines the data structures every pipeline stage reads and the cli serializes
# RELEVANT FILES: model.py, weave.py, evalkit.py, storage.py

import math
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Distribution rows must sum to one within this tolerance
PROBABILITY_TOLERANCE = 1e-9

# Default pairing-cost weights and similarity threshold
DEFAULT_W1 = 0.3
DEFAULT_W2 = 0.75
DEFAULT_TAU = 0.8

# Ordered real vector; dimension is fixed per dataset
EmbeddingVector = Tuple[float, ...]


# Enums


class ZonePoint(str, Enum):
    """Observation point of a weaving zone"""

    ENTRY = "P1"
    EXIT = "P2"


class VehicleClass(str, Enum):
    """Vehicle types the class filter distinguishes"""

    CAR = "car"
    TRUCK = "truck"


class TimeTerm(str, Enum):
    """Reading of the travel-time term in the pairing cost"""

    DEVIATION = "deviation"  # |(t2 - t1) - T_a|
    LITERAL = "literal"  # |t1 - t2 - T_a| as printed


class LaneRole(str, Enum):
    """Whether a lane belongs to the ramp or the mainline"""

    RAMP = "ramp"
    MAINLINE = "mainline"


class Session(str, Enum):
    """Time of day a recording session covers"""

    MORNING = "morning"
    NOON = "noon"
    AFTERNOON = "afternoon"


class ViolationKind(str, Enum):
    """Kinds of dataset invariant violations"""

    UNKNOWN_LANE = "UnknownLane"
    UNKNOWN_CLASS = "UnknownClass"
    DUPLICATE_TRACK = "DuplicateTrack"
    NON_FINITE_TIMESTAMP = "NonFiniteTimestamp"
    NEGATIVE_TIMESTAMP = "NegativeTimestamp"
    NON_FINITE_EMBEDDING = "NonFiniteEmbedding"
    ZERO_NORM_EMBEDDING = "ZeroNormEmbedding"
    DIMENSION_MISMATCH = "DimensionMismatch"
    WRONG_ZONE_POINT = "WrongZonePoint"


# Zone configuration


class ZoneConfig(BaseModel):
    """
    Weaving-zone geometry and matching priors.
    Invariants are enforced at construction; time_window_delta defaults to 0.5 * T_a.
    """

    distance_m: float = Field(..., gt=0, description="Average distance S between P1 and P2")
    mean_speed_mps: float = Field(..., gt=0, description="Average speed V through the zone")
    entry_lanes: Tuple[int, ...] = Field(..., min_length=1, description="Lane ids at P1")
    exit_lanes: Tuple[int, ...] = Field(..., min_length=1, description="Lane ids at P2")
    w1: float = Field(DEFAULT_W1, ge=0, description="Weight of the appearance cost")
    w2: float = Field(DEFAULT_W2, ge=0, description="Weight of the time cost (1/s)")
    tau: float = Field(DEFAULT_TAU, ge=-1, le=1, description="Cosine similarity threshold")
    time_window_delta: Optional[float] = Field(
        None, gt=0, description="Half-width of the exit window around T_a (s)"
    )
    time_term: TimeTerm = Field(TimeTerm.DEVIATION, description="Time-term reading")
    entry_lane_roles: Dict[int, LaneRole] = Field(default_factory=dict)
    exit_lane_roles: Dict[int, LaneRole] = Field(default_factory=dict)

    model_config = ConfigDict(frozen=True)

    @field_validator("entry_lanes", "exit_lanes", mode="before")
    @classmethod
    def _sorted_unique(cls, value):
        if isinstance(value, (list, tuple, set, frozenset)):
            return tuple(sorted(set(value)))
        return value

    @field_validator("entry_lanes", "exit_lanes")
    @classmethod
    def _non_negative_lanes(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(lane < 0 for lane in value):
            raise ValueError("lane ids must be non-negative")
        return value

    @model_validator(mode="before")
    @classmethod
    def _default_window(cls, data):
        if isinstance(data, dict) and data.get("time_window_delta") is None:
            try:
                travel = float(data["distance_m"]) / float(data["mean_speed_mps"])
            except (KeyError, TypeError, ValueError, ZeroDivisionError):
                return data
            if math.isfinite(travel) and travel > 0:
                data = {**data, "time_window_delta": 0.5 * travel}
        return data

    @model_validator(mode="after")
    def _check_invariants(self) -> "ZoneConfig":
        if self.w1 + self.w2 <= 0:
            raise ValueError("w1 + w2 must be positive")
        travel = self.distance_m / self.mean_speed_mps
        if not math.isfinite(travel) or travel <= 0:
            raise ValueError("distance_m / mean_speed_mps must be finite and positive")
        if not math.isfinite(self.time_window_delta):
            raise ValueError("time_window_delta must be finite")
        if not set(self.entry_lane_roles) <= set(self.entry_lanes):
            raise ValueError("entry_lane_roles names lanes outside entry_lanes")
        if not set(self.exit_lane_roles) <= set(self.exit_lanes):
            raise ValueError("exit_lane_roles names lanes outside exit_lanes")
        return self

    def lanes_for(self, point: ZonePoint) -> Tuple[int, ...]:
        """Lane set declared for one observation point"""
        return self.entry_lanes if point == ZonePoint.ENTRY else self.exit_lanes


# Observations


class Observation(BaseModel):
    """
    One vehicle sighting at P1 or P2.
    Structure is checked here; dataset invariants are reported by validate_dataset.
    """

    camera_id: str
    zone_point: ZonePoint
    track_id: str
    timestamp: float = Field(..., alias="timestamp_s", description="Seconds since epoch")
    lane_id: int = Field(..., ge=0)
    vehicle_class: Union[VehicleClass, str] = Field(
        ..., alias="class", union_mode="left_to_right"
    )
    embedding: EmbeddingVector

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    @field_validator("vehicle_class", mode="before")
    @classmethod
    def _normalise_class(cls, value):
        if isinstance(value, str):
            return value.strip().lower()
        return value

    @property
    def key(self) -> Tuple[str, ZonePoint, str]:
        """Dataset-unique identity of this sighting"""
        return (self.camera_id, self.zone_point, self.track_id)

    @property
    def sort_key(self) -> Tuple[float, str, str]:
        """Order used whenever observations are arranged deterministically"""
        return (self.timestamp, self.camera_id, self.track_id)


class Violation(BaseModel):
    """A single dataset invariant violation"""

    kind: ViolationKind
    index: int = Field(..., description="Position of the record in the validated list")
    track_id: Optional[str] = None
    message: str

    model_config = ConfigDict(use_enum_values=True)


class ValidationReport(BaseModel):
    """Outcome of validate_dataset: counts plus violations, never an exception"""

    record_count: int = 0
    entry_lane_counts: Dict[int, int] = Field(default_factory=dict)
    exit_lane_counts: Dict[int, int] = Field(default_factory=dict)
    violations: List[Violation] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


# Matches


class MatchedPair(BaseModel):
    """An accepted (entry, exit) correspondence with its cost breakdown"""

    entry_track: str
    exit_track: str
    entry_camera_id: Optional[str] = None
    exit_camera_id: Optional[str] = None
    total_cost: float = Field(..., ge=0)
    appearance_cost: float
    time_cost: float
    similarity: float = Field(..., ge=-1 - 1e-9, le=1 + 1e-9)

    model_config = ConfigDict(frozen=True)

    @property
    def track_pair(self) -> Tuple[str, str]:
        return (self.entry_track, self.exit_track)


# Metrics


class MatchMetrics(BaseModel):
    """Matching quality in the accuracy-table sense (TPR is coverage, not recall)"""

    true_positives: int = Field(..., ge=0)
    false_positives: int = Field(..., ge=0)
    system_matches: int = Field(..., ge=0)
    total_detected: int = Field(..., gt=0)
    tpr: float = Field(..., ge=0, le=1)
    precision: float = Field(..., ge=0, le=1)


class ReidMetrics(BaseModel):
    """Retrieval quality of an embedding set; cmc[k-1] is the rank-k score"""

    mean_average_precision: float = Field(..., ge=0, le=1)
    cmc: List[float] = Field(default_factory=list)
    query_count: int = 0

    def rank(self, k: int) -> float:
        """CMC at rank k (1-based); ranks past the curve keep its last value"""
        if k < 1:
            raise ValueError("rank starts at 1")
        if not self.cmc:
            return 0.0
        return self.cmc[min(k, len(self.cmc)) - 1]


class SimilaritySeparation(BaseModel):
    """How well cosine similarity separates same-vehicle from other pairs"""

    tau: float
    positive_count: int
    negative_count: int
    positive_mean: Optional[float] = None
    positive_std: Optional[float] = None
    positive_min: Optional[float] = None
    negative_mean: Optional[float] = None
    negative_std: Optional[float] = None
    negative_max: Optional[float] = None
    positive_above_tau: Optional[float] = None
    negative_above_tau: Optional[float] = None


class RetrievalHit(BaseModel):
    """One ranked gallery item for a query"""

    rank: int
    gallery_index: int
    identity: str
    similarity: float
    correct: bool


class AccuracyRow(BaseModel):
    """One row of the weaving accuracy table, percentages rounded for display"""

    zone_name: Optional[str] = None
    session: Optional[Session] = None
    visible_sides: Optional[str] = None
    count_accuracy: Optional[float] = None
    tpr: float
    precision: float

    model_config = ConfigDict(use_enum_values=True)


# Reports


class LaneTotal(BaseModel):
    """Vehicle count through one lane"""

    lane_id: int
    count: int = Field(..., ge=0)


class LanePairCount(BaseModel):
    """Vehicle count for one (entry lane, exit lane) movement"""

    entry_lane: int
    exit_lane: int
    count: int = Field(..., ge=0)


class LanePairFlow(BaseModel):
    """Matched sample and estimated flow for one lane pair; None means Unestimated"""

    entry_lane: int
    exit_lane: int
    matched: int = Field(..., ge=0)
    share: Optional[float] = None
    estimated_flow: Optional[float] = None


class ExitDiscrepancy(BaseModel):
    """Estimated inflow into an exit lane against its own count"""

    exit_lane: int
    counted: int
    estimated_inflow: float
    difference: float


class MovementShare(BaseModel):
    """Estimated flow of one ramp/mainline movement type"""

    movement: str
    estimated_flow: float
    share: float


class WeavingReport(BaseModel):
    """Serializable outcome of one matching run"""

    schema_version: str = "1"
    zone_name: Optional[str] = None
    session: Optional[Session] = None
    visible_sides: Optional[str] = None
    zone: Optional[ZoneConfig] = None
    expected_travel_time_s: Optional[float] = None
    entry_lane_totals: List[LaneTotal] = Field(default_factory=list)
    exit_lane_totals: List[LaneTotal] = Field(default_factory=list)
    lane_pairs: List[LanePairFlow] = Field(default_factory=list)
    total_matched: int = 0
    total_entries: int = 0
    sampling_rate: float = 0.0
    exit_discrepancies: List[ExitDiscrepancy] = Field(default_factory=list)
    movements: List[MovementShare] = Field(default_factory=list)
    matches: List[MatchedPair] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    metrics: Optional[MatchMetrics] = None

    model_config = ConfigDict(use_enum_values=True)


# Synthetic scenarios


class ScenarioSpec(BaseModel):
    """
    Parameters of a synthetic weaving scenario.
    Empty lane distributions mean uniform over the zone's lanes.
    """

    vehicle_count: int = Field(100, ge=0)
    entry_lane_probs: Dict[int, float] = Field(default_factory=dict)
    transition: Dict[int, Dict[int, float]] = Field(
        default_factory=dict, description="P(exit lane | entry lane)"
    )
    speed_mean_mps: Optional[float] = Field(None, gt=0, description="Defaults to zone V")
    speed_std_mps: float = Field(0.0, ge=0)
    embedding_dim: int = Field(128, ge=2)
    identity_scale: float = Field(3.0, gt=0, description="Spread of identities around the class prototype")
    noise_std: float = Field(0.0, ge=0, description="Per-dimension view noise sigma_e")
    truck_fraction: float = Field(0.1, ge=0, le=1)
    clutter_entry: int = Field(0, ge=0, description="Vehicles seen only at P1")
    clutter_exit: int = Field(0, ge=0, description="Vehicles seen only at P2")
    duration_s: float = Field(600.0, gt=0, description="Length of the entry arrival period")
    start_time_s: float = Field(0.0, ge=0)
    entry_camera_id: str = "P1-cam"
    exit_camera_id: str = "P2-cam"
    seed: int = 0

    @field_validator("entry_lane_probs")
    @classmethod
    def _check_entry_probs(cls, value: Dict[int, float]) -> Dict[int, float]:
        _check_distribution(value, "entry_lane_probs")
        return value

    @field_validator("transition")
    @classmethod
    def _check_transition(cls, value: Dict[int, Dict[int, float]]) -> Dict[int, Dict[int, float]]:
        for lane, row in value.items():
            _check_distribution(row, f"transition[{lane}]")
        return value


def _check_distribution(probs: Dict[int, float], name: str) -> None:
    if not probs:
        return
    if any(not (0.0 <= p <= 1.0) for p in probs.values()):
        raise ValueError(f"{name}: probabilities must lie in [0, 1]")
    if abs(sum(probs.values()) - 1.0) > PROBABILITY_TOLERANCE:
        raise ValueError(f"{name}: probabilities must sum to 1")


class GroundTruth(BaseModel):
    """True correspondences and lane flows of a synthetic scenario"""

    pairs: List[Tuple[str, str]] = Field(default_factory=list)
    lane_flows: List[LanePairCount] = Field(default_factory=list)
    entry_lane_totals: List[LaneTotal] = Field(default_factory=list)
    exit_lane_totals: List[LaneTotal] = Field(default_factory=list)

    def pair_set(self) -> Set[Tuple[str, str]]:
        return {tuple(pair) for pair in self.pairs}

    def flow_map(self) -> Dict[Tuple[int, int], int]:
        return {(f.entry_lane, f.exit_lane): f.count for f in self.lane_flows}


# Run configuration


class RunConfig(BaseModel):
    """Everything one cli invocation needs; paths are checked before execution"""

    command: str
    entries_path: Optional[Path] = None
    exits_path: Optional[Path] = None
    entry_sidecar: Optional[Path] = None
    exit_sidecar: Optional[Path] = None
    output_path: Optional[Path] = None
    csv_path: Optional[Path] = None
    report_path: Optional[Path] = None
    ground_truth_path: Optional[Path] = None
    query_path: Optional[Path] = None
    gallery_path: Optional[Path] = None
    total_detected: Optional[int] = Field(None, gt=0)
    max_rank: int = Field(10, ge=1)
    tau: Optional[float] = Field(None, ge=-1, le=1, description="Threshold when no zone is given")
    sidecar: bool = False
    zone: Optional[ZoneConfig] = None
    scenario: ScenarioSpec = Field(default_factory=ScenarioSpec)
    seed: Optional[int] = None
    zone_name: Optional[str] = None
    session: Optional[Session] = None
    visible_sides: Optional[str] = None

    def missing_inputs(self) -> List[Path]:
        """Referenced input files that do not exist"""
        inputs = [
            self.entries_path,
            self.exits_path,
            self.entry_sidecar,
            self.exit_sidecar,
            self.report_path,
            self.ground_truth_path,
            self.query_path,
            self.gallery_path,
        ]
        return [path for path in inputs if path is not None and not path.exists()]


