# src/storage.py
# Flat-file persistence: observation JSONL, WEMB embedding sidecars, reports and CSV
# Every output is written to a temp file in the target directory, then renamed
# RELEVANT FILES: schemas.py, errors.py, commands/, config.py

import csv
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ValidationError
from tenacity import before_sleep_log, retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from .config import get_settings
from .errors import InputFormatError
from .schemas import EmbeddingVector, Observation, WeavingReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
M = TypeVar("M", bound=BaseModel)

SIDECAR_MAGIC = b"WEMB"
SIDECAR_SUFFIX = ".wemb"
CSV_HEADER = ["entry_lane", "exit_lane", "matched", "estimated_flow"]
UNESTIMATED = "NA"

# Field order of one observation line
OBSERVATION_FIELDS = ["camera_id", "zone_point", "track_id", "class", "timestamp_s", "lane_id"]


def _dumps_line(obj: Dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def default_sidecar(path: PathLike) -> Path:
    """Sidecar next to an observation file: entries.jsonl -> entries.wemb"""
    return Path(path).with_suffix(SIDECAR_SUFFIX)


# Atomic writes


def _rename_with_retry(source: str, target: Path) -> None:
    settings = get_settings()

    @retry(
        stop=stop_after_attempt(settings.max_retries),
        wait=wait_exponential(multiplier=settings.retry_delay, max=settings.max_retry_delay),
        retry=retry_if_exception_type(PermissionError),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        reraise=True,
    )
    def rename() -> None:
        os.replace(source, target)

    rename()


def _stage(target: Path, data: bytes) -> str:
    """Write data to a temp file beside target and return its path"""
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
    except BaseException:
        os.unlink(tmp)
        raise
    return tmp


def atomic_write_many(files: Sequence[Tuple[PathLike, bytes]]) -> None:
    """
    Write several files so that none is renamed into place until all are staged.

    A failure while staging leaves every target untouched.
    """
    staged: List[Tuple[str, Path]] = []
    try:
        for path, data in files:
            target = Path(path)
            staged.append((_stage(target, data), target))
        for tmp, target in staged:
            _rename_with_retry(tmp, target)
            logger.debug(f"Wrote {target}")
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """Write data to path through a temp file in the same directory, then rename"""
    atomic_write_many([(path, data)])


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# Embedding sidecar


def encode_sidecar(vectors: Sequence[EmbeddingVector], dim: int) -> bytes:
    """WEMB header (magic, uint32 LE dimension) followed by float32 LE records"""
    body = np.asarray(vectors, dtype="<f4").reshape(len(vectors), dim)
    return SIDECAR_MAGIC + np.array([dim], dtype="<u4").tobytes() + body.tobytes()


def write_sidecar(path: PathLike, vectors: Sequence[EmbeddingVector], dim: int) -> None:
    atomic_write_bytes(path, encode_sidecar(vectors, dim))


def read_sidecar(path: PathLike) -> np.ndarray:
    """
    Load a WEMB sidecar.

    Returns:
        np.ndarray: (records, D) float64 array holding the exact float32 values

    Raises:
        InputFormatError: Bad magic, truncated header or ragged record data
    """
    source = Path(path)
    try:
        raw = source.read_bytes()
    except OSError as e:
        raise InputFormatError(source, None, f"cannot read sidecar: {e}")
    if len(raw) < 8 or raw[:4] != SIDECAR_MAGIC:
        raise InputFormatError(source, None, "not a WEMB sidecar (bad magic)")
    dim = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    body = raw[8:]
    if dim == 0 or len(body) % (4 * dim):
        raise InputFormatError(source, None, f"{len(body)} data bytes do not hold {dim}-dim records")
    return np.frombuffer(body, dtype="<f4").reshape(-1, dim).astype(np.float64)


# Line-oriented input


def _json_lines(path: Path) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line number, object) for every non-blank line"""
    try:
        handle = path.open("r", encoding="utf-8")
    except OSError as e:
        raise InputFormatError(path, None, f"cannot open: {e}")
    with handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise InputFormatError(path, number, f"malformed JSON: {e.msg}")
            if not isinstance(record, dict):
                raise InputFormatError(path, number, "record is not a JSON object")
            yield number, record


class _SidecarResolver:
    """Resolves embedding_ref fields, loading the sidecar on first use"""

    def __init__(self, path: Optional[Path]):
        self.path = path
        self._vectors: Optional[np.ndarray] = None

    def resolve(self, record: Dict[str, Any], source: Path, line: int) -> Dict[str, Any]:
        if "embedding_ref" not in record:
            return record
        ref = record["embedding_ref"]
        if self.path is None:
            raise InputFormatError(source, line, "embedding_ref given but no sidecar available")
        if self._vectors is None:
            self._vectors = read_sidecar(self.path)
        if not isinstance(ref, int) or isinstance(ref, bool) or not 0 <= ref < len(self._vectors):
            raise InputFormatError(
                source, line, f"embedding_ref {ref!r} outside the sidecar's {len(self._vectors)} records"
            )
        resolved = {k: v for k, v in record.items() if k != "embedding_ref"}
        resolved["embedding"] = tuple(float(x) for x in self._vectors[ref])
        return resolved


def _first_error(error: ValidationError) -> str:
    detail = error.errors()[0]
    where = ".".join(str(part) for part in detail.get("loc", ())) or "record"
    return f"{where}: {detail.get('msg', 'invalid value')}"


def _sidecar_for(path: Path, sidecar: Optional[PathLike]) -> Optional[Path]:
    if sidecar is not None:
        return Path(sidecar)
    candidate = default_sidecar(path)
    return candidate if candidate.exists() else None


def read_observations(path: PathLike, sidecar: Optional[PathLike] = None) -> List[Observation]:
    """
    Parse an observation JSONL file.

    Args:
        path: One JSON object per line
        sidecar: WEMB file for embedding_ref records (defaults to <path>.wemb when present)

    Raises:
        InputFormatError: Names the first line that cannot be parsed or validated
    """
    source = Path(path)
    resolver = _SidecarResolver(_sidecar_for(source, sidecar))
    observations = []
    for number, record in _json_lines(source):
        record = resolver.resolve(record, source, number)
        if "embedding" not in record:
            raise InputFormatError(source, number, "record has neither embedding nor embedding_ref")
        try:
            observations.append(Observation.model_validate(record))
        except ValidationError as e:
            raise InputFormatError(source, number, _first_error(e))
    logger.info(f"Loaded {len(observations)} observations from {source}")
    return observations


def observation_record(obs: Observation, embedding_ref: Optional[int] = None) -> Dict[str, Any]:
    """One observation as the dict written on its JSONL line"""
    vehicle_class = getattr(obs.vehicle_class, "value", obs.vehicle_class)
    record: Dict[str, Any] = dict(
        zip(
            OBSERVATION_FIELDS,
            [obs.camera_id, obs.zone_point.value, obs.track_id, vehicle_class, obs.timestamp, obs.lane_id],
        )
    )
    if embedding_ref is None:
        record["embedding"] = list(obs.embedding)
    else:
        record["embedding_ref"] = embedding_ref
    return record


def write_observations(
    path: PathLike, observations: Sequence[Observation], sidecar: Optional[PathLike] = None
) -> None:
    """
    Write observations as JSONL; with a sidecar path, embeddings go to the WEMB file
    and each line carries embedding_ref instead.
    """
    lines = []
    for index, obs in enumerate(observations):
        lines.append(_dumps_line(observation_record(obs, index if sidecar is not None else None)))
    if sidecar is not None:
        dim = len(observations[0].embedding) if observations else 0
        write_sidecar(sidecar, [obs.embedding for obs in observations], dim)
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    logger.info(f"Wrote {len(observations)} observations to {path}")


def read_labelled_embeddings(
    path: PathLike, sidecar: Optional[PathLike] = None
) -> List[Tuple[EmbeddingVector, str]]:
    """
    Parse a ReID query or gallery file: {"identity", "embedding" | "embedding_ref"} per line.

    Raises:
        InputFormatError: Names the first bad line
    """
    source = Path(path)
    resolver = _SidecarResolver(_sidecar_for(source, sidecar))
    samples = []
    for number, record in _json_lines(source):
        record = resolver.resolve(record, source, number)
        identity = record.get("identity")
        embedding = record.get("embedding")
        if identity is None or isinstance(identity, (dict, list)):
            raise InputFormatError(source, number, "identity missing or not a scalar")
        if not isinstance(embedding, (list, tuple)) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in embedding
        ):
            raise InputFormatError(source, number, "embedding must be an array of numbers")
        samples.append((tuple(float(x) for x in embedding), str(identity)))
    logger.info(f"Loaded {len(samples)} labelled embeddings from {source}")
    return samples


# JSON documents


def read_model(path: PathLike, model: Type[M]) -> M:
    """Load one JSON document into a pydantic model"""
    source = Path(path)
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as e:
        raise InputFormatError(source, None, f"cannot read: {e}")
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        raise InputFormatError(source, None, _first_error(e))


def read_json(path: PathLike) -> Dict[str, Any]:
    source = Path(path)
    try:
        document = json.loads(source.read_text(encoding="utf-8"))
    except OSError as e:
        raise InputFormatError(source, None, f"cannot read: {e}")
    except json.JSONDecodeError as e:
        raise InputFormatError(source, e.lineno, f"malformed JSON: {e.msg}")
    if not isinstance(document, dict):
        raise InputFormatError(source, None, "top level must be a JSON object")
    return document


def dumps_document(document: Union[BaseModel, Dict[str, Any]]) -> str:
    payload = document.model_dump(mode="json") if isinstance(document, BaseModel) else document
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def write_json(path: PathLike, document: Union[BaseModel, Dict[str, Any]]) -> None:
    atomic_write_text(path, dumps_document(document))


# Plot data


def flow_csv(lane_pairs: Sequence[Any]) -> str:
    """Lane-pair flow matrix as CSV; unestimated flows are written as NA"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in lane_pairs:
        flow = UNESTIMATED if row.estimated_flow is None else repr(float(row.estimated_flow))
        writer.writerow([row.entry_lane, row.exit_lane, row.matched, flow])
    return buffer.getvalue()


def write_report_bundle(report_path: PathLike, csv_path: PathLike, report: WeavingReport) -> None:
    """Report JSON and its flow CSV, renamed into place only once both are staged"""
    atomic_write_many(
        [
            (report_path, dumps_document(report).encode("utf-8")),
            (csv_path, flow_csv(report.lane_pairs).encode("utf-8")),
        ]
    )
