"""Checkpoint archives.

An archive is a zip file holding one `.npy` entry per named parameter array and a `metadata.json` entry. Entries
are written in name order with fixed timestamps, so saving the same parameters twice produces identical bytes.
"""
import os
import zipfile
from io import BytesIO
from logging import getLogger
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import orjson
import torch
from pydantic import BaseModel, ValidationError
from torch import nn

from facm.constants import (
    CHECKPOINT_FORMAT_VERSION,
    CHECKPOINT_METADATA_ENTRY,
    NAMESPACE_AUX,
    NAMESPACE_BACKBONE,
    NAMESPACE_CMPD_CORE,
    NAMESPACE_CMPD_HEAD,
    NAMESPACE_DECISION,
    NAMESPACE_FA,
)
from facm.exceptions import (
    CheckpointNotFoundException,
    ImproperlyConfiguredException,
    IntegrityException,
    MigrationException,
)
from facm.harness.system import FACMSystem
from facm.utils.hashing import array_digest

logger = getLogger(__name__)

ZIP_DATE_TIME = (1980, 1, 1, 0, 0, 0)
ALL_COMPONENTS = ("backbone", "aux", "fa", "cmpd", "decision")


class ArrayRecord(BaseModel):
    sha256: str
    shape: List[int]
    dtype: str


class CheckpointMetadata(BaseModel):
    """Everything needed to validate an archive against the system it is loaded into."""

    format_version: int
    arch: Dict[str, Any]
    """The backbone spec the parameters were trained with."""
    num_classes: int
    tap_widths: List[int]
    mode: str
    components: List[str]
    """Component groups stored in the archive, a subset of 'backbone', 'aux', 'fa', 'cmpd' and 'decision'."""
    arrays: Dict[str, ArrayRecord]
    config_hash: Optional[str] = None
    stage: Optional[str] = None


def _namespaced_modules(system: FACMSystem, components: Iterable[str]) -> List[Tuple[str, nn.Module]]:
    modules: List[Tuple[str, nn.Module]] = []
    for component in components:
        if component == "backbone":
            modules.append((NAMESPACE_BACKBONE, system.backbone))
        elif component == "aux":
            modules.extend((f"{NAMESPACE_AUX}.{aux.index}", aux) for aux in system.auxs)
        elif component == "fa":
            modules.extend((f"{NAMESPACE_FA}.{fa.index}", fa) for fa in system.fas)
        elif component == "cmpd":
            if system.cae is None:
                raise ImproperlyConfiguredException(detail=f"a {system.mode.value} system has no autoencoder")
            modules.append((NAMESPACE_CMPD_CORE, system.cae.core))
            modules.extend((f"{NAMESPACE_CMPD_HEAD}.{head.index}", head) for head in system.cae.heads)
        elif component == "decision":
            if system.decision is None:
                raise ImproperlyConfiguredException(detail="the system has no decision module")
            modules.append((NAMESPACE_DECISION, system.decision))
        else:
            raise ImproperlyConfiguredException(detail=f"unknown checkpoint component '{component}'")
    return modules


def _to_bytes(array: np.ndarray) -> bytes:
    buffer = BytesIO()
    np.save(buffer, np.ascontiguousarray(array), allow_pickle=False)
    return buffer.getvalue()


def _write_entry(archive: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=ZIP_DATE_TIME)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    archive.writestr(info, data)


def save_checkpoint(
    path: Union[str, Path],
    system: FACMSystem,
    components: Iterable[str] = ALL_COMPONENTS,
    *,
    config_hash: Optional[str] = None,
    stage: Optional[str] = None,
) -> Path:
    """Writes the parameters of some components of a system.

    Args:
        path: archive to write; replaced atomically.
        system: source of the parameters.
        components: component groups to store.
        config_hash: hash of the configuration that produced the parameters.
        stage: pipeline stage that produced them.

    Raises:
        ImproperlyConfiguredException: a requested component does not exist on the system.

    Returns:
        The archive path.
    """
    path = Path(path)
    components = list(components)
    arrays: Dict[str, np.ndarray] = {}
    for namespace, module in _namespaced_modules(system, components):
        for key, tensor in module.state_dict().items():
            arrays[f"{namespace}.{key}"] = tensor.detach().cpu().numpy()
    backbone = system.backbone
    metadata = CheckpointMetadata(
        format_version=CHECKPOINT_FORMAT_VERSION,
        arch=orjson.loads(backbone.spec.json()),
        num_classes=backbone.num_classes,
        tap_widths=list(backbone.tap_widths),
        mode=system.mode.value,
        components=components,
        arrays={
            name: ArrayRecord(sha256=array_digest(array), shape=list(array.shape), dtype=str(array.dtype))
            for name, array in arrays.items()
        },
        config_hash=config_hash,
        stage=stage,
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + ".partial")
    with zipfile.ZipFile(partial, "w") as archive:
        for name in sorted(arrays):
            _write_entry(archive, f"{name}.npy", _to_bytes(arrays[name]))
        _write_entry(archive, CHECKPOINT_METADATA_ENTRY, orjson.dumps(metadata.dict(), option=orjson.OPT_SORT_KEYS))
    os.replace(partial, path)
    logger.info("checkpoint %s: %s, %d arrays", path, ",".join(components), len(arrays))
    return path


def read_checkpoint(path: Union[str, Path]) -> Tuple[CheckpointMetadata, Dict[str, np.ndarray]]:
    """Reads and verifies an archive without loading it into modules.

    Raises:
        CheckpointNotFoundException: the archive does not exist.
        IntegrityException: the archive is not a readable zip, an entry is missing, or a digest does not match.
        MigrationException: the archive was written with another format version.
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointNotFoundException(detail=f"no checkpoint at {path}")
    try:
        with zipfile.ZipFile(path) as archive:
            raw = orjson.loads(archive.read(CHECKPOINT_METADATA_ENTRY))
            version = raw.get("format_version") if isinstance(raw, dict) else None
            if version != CHECKPOINT_FORMAT_VERSION:
                raise MigrationException(found=version, expected=CHECKPOINT_FORMAT_VERSION)
            metadata = CheckpointMetadata(**raw)
            arrays = {
                name: np.load(BytesIO(archive.read(f"{name}.npy")), allow_pickle=False) for name in metadata.arrays
            }
    except MigrationException:
        raise
    except (zipfile.BadZipFile, KeyError, ValueError, ValidationError, orjson.JSONDecodeError) as e:
        raise IntegrityException(detail=f"checkpoint {path} is corrupted: {e}") from e
    for name, array in arrays.items():
        if array_digest(array) != metadata.arrays[name].sha256:
            raise IntegrityException(detail=f"checkpoint {path}: digest of '{name}' does not match")
    return metadata, arrays


def _check_compatible(metadata: CheckpointMetadata, system: FACMSystem, path: Path) -> None:
    backbone = system.backbone
    expected = orjson.loads(backbone.spec.json())
    mismatched = [
        key for key in ("arch_id", "num_classes", "tap_names", "input_shape") if metadata.arch.get(key) != expected[key]
    ]
    if metadata.tap_widths != list(backbone.tap_widths):
        mismatched.append("tap_widths")
    if mismatched:
        raise ImproperlyConfiguredException(
            detail=f"checkpoint {path} does not fit this system: {', '.join(mismatched)} differ"
        )


def load_checkpoint(
    path: Union[str, Path], system: FACMSystem, components: Optional[Iterable[str]] = None
) -> CheckpointMetadata:
    """Loads stored components into a system in place.

    Args:
        path: archive to read.
        system: target; its architecture must match the archive.
        components: groups to load; every group stored in the archive when omitted.

    Raises:
        CheckpointNotFoundException: the archive does not exist.
        IntegrityException: the archive is corrupted.
        MigrationException: the archive was written with another format version.
        ImproperlyConfiguredException: the archive was written for another architecture, class count or tap layout.

    Returns:
        The archive metadata.
    """
    path = Path(path)
    metadata, arrays = read_checkpoint(path)
    _check_compatible(metadata, system, path)
    selected = list(metadata.components if components is None else components)
    absent = [component for component in selected if component not in metadata.components]
    if absent:
        raise ImproperlyConfiguredException(detail=f"checkpoint {path} does not store {absent}")
    for namespace, module in _namespaced_modules(system, selected):
        prefix = namespace + "."
        state = {
            name[len(prefix) :]: torch.from_numpy(array.copy())
            for name, array in arrays.items()
            if name.startswith(prefix)
        }
        try:
            module.load_state_dict(state, strict=True)
        except RuntimeError as e:
            raise ImproperlyConfiguredException(detail=f"checkpoint {path} does not fit '{namespace}': {e}") from e
    logger.info("loaded %s from %s", ",".join(selected), path)
    return metadata
