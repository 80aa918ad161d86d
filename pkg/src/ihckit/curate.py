"""Dataset construction: hashing, dedup, foreground masks, shards, splits.

Shards are plain tar archives in which every record contributes an image
entry and a metadata entry sharing the md5 basename (``{md5}.png`` +
``{md5}.json``, plus ``{md5}.mask.png`` when a foreground mask is
attached). Reading back reproduces records field-for-field with
byte-identical image payloads.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import tarfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage
from skimage.filters import threshold_otsu

from .exceptions import ConflictingLabels, EmptyForeground, SchemaError, ShardIO, StratumTooSmall
from .records import DatasetSplit, Foreground, IHCRecord

logger = logging.getLogger(__name__)

IMAGE_EXT = ".png"
META_EXT = ".json"
MASK_EXT = ".mask.png"


def compute_image_hash(image_bytes: bytes) -> str:
    """32-char lowercase MD5 hex digest of the raw bytes."""
    return hashlib.md5(bytes(image_bytes)).hexdigest()


def deduplicate(
    records: Sequence[IHCRecord], strict: bool = False
) -> tuple[list[IHCRecord], dict[str, list[str]]]:
    """Keep the first record per md5; collect duplicate source URLs.

    Returns ``(kept, merged)`` where ``merged`` maps each md5 that had
    duplicates to every source URL seen for it, preserving traceability.
    Duplicates that disagree on any task label raise
    :class:`ConflictingLabels` in strict mode and are kept-first with a
    warning otherwise.
    """
    kept: dict[str, IHCRecord] = {}
    sources: dict[str, list[str]] = {}
    counts: dict[str, int] = {}
    for record in records:
        counts[record.md5] = counts.get(record.md5, 0) + 1
        if record.source_url is not None:
            sources.setdefault(record.md5, []).append(record.source_url)
        first = kept.get(record.md5)
        if first is None:
            kept[record.md5] = record
            continue
        if dict(first.labels) != dict(record.labels):
            if strict:
                raise ConflictingLabels(record.md5)
            logger.warning("duplicate records for %s disagree on labels; keeping first", record.md5)
    merged = {md5: urls for md5, urls in sources.items() if counts[md5] > 1}
    return list(kept.values()), merged


# -- foreground segmentation -----------------------------------------


@dataclass(frozen=True)
class ForegroundResult:
    mask: np.ndarray  # bool, same H x W as the image
    bbox: tuple[int, int, int, int]  # (x_min, y_min, x_max, y_max), inclusive


def segment_foreground(image: np.ndarray, lenient: bool = False) -> ForegroundResult:
    """Threshold the distance-from-white channel and keep the largest blob.

    The foreground channel is ``255 - min(R, G, B)``, which lights up
    both DAB brown and hematoxylin blue against a white slide background.
    The threshold is chosen automatically (Otsu); the largest connected
    component is retained and the bbox is tight around it.
    """
    arr = np.asarray(image)
    if arr.size == 0:
        raise ValueError("image has no pixels")
    if arr.ndim == 2:
        channel = 255 - arr.astype(np.int32)
    else:
        channel = 255 - arr[..., :3].min(axis=2).astype(np.int32)
    if channel.max() == channel.min():
        return _empty_foreground(channel.shape, lenient)
    mask = channel > threshold_otsu(channel)
    if not mask.any():
        return _empty_foreground(channel.shape, lenient)
    labeled, count = ndimage.label(mask)
    if count > 1:
        sizes = ndimage.sum_labels(mask, labeled, index=np.arange(1, count + 1))
        mask = labeled == (int(np.argmax(sizes)) + 1)
    ys, xs = np.nonzero(mask)
    bbox = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
    return ForegroundResult(mask=mask, bbox=bbox)


def _empty_foreground(shape, lenient: bool) -> ForegroundResult:
    if not lenient:
        raise EmptyForeground("no pixel exceeds the foreground threshold")
    logger.warning("empty foreground; falling back to full-image bbox")
    h, w = shape
    return ForegroundResult(mask=np.zeros(shape, dtype=bool), bbox=(0, 0, w - 1, h - 1))


# -- shards -----------------------------------------------------------


@dataclass(frozen=True)
class Shard:
    path: Path
    keys: tuple[str, ...]


def shard_name(index: int) -> str:
    return f"shard-{index:06d}.tar"


def _image_bytes(record: IHCRecord) -> bytes:
    ref = record.image_ref
    if isinstance(ref, (bytes, bytearray)):
        return bytes(ref)
    if isinstance(ref, (str, Path)):
        return Path(ref).read_bytes()
    raise ShardIO(f"record {record.md5} has no materializable image bytes ({type(ref).__name__})")


def write_shards(records: Sequence[IHCRecord], shard_size: int, out_dir) -> list[Shard]:
    """Serialize records into sequentially named tar shards."""
    if shard_size < 1:
        raise ValueError("shard_size must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shards = []
    try:
        for start in range(0, len(records), shard_size):
            chunk = records[start : start + shard_size]
            path = out_dir / shard_name(len(shards))
            with tarfile.open(path, "w") as tar:
                for record in chunk:
                    _add_member(tar, record.md5 + IMAGE_EXT, _image_bytes(record))
                    meta = json.dumps(record.to_metadata(), sort_keys=True).encode()
                    _add_member(tar, record.md5 + META_EXT, meta)
                    if record.foreground is not None and record.foreground.mask_ref is not None:
                        _add_member(tar, record.md5 + MASK_EXT, _mask_bytes(record.foreground))
            shards.append(Shard(path=path, keys=tuple(r.md5 for r in chunk)))
    except OSError as exc:
        raise ShardIO(f"failed writing shard to {out_dir}: {exc}") from exc
    return shards


def _add_member(tar: tarfile.TarFile, name: str, payload: bytes) -> None:
    info = tarfile.TarInfo(name=name)
    info.size = len(payload)
    info.mtime = 0
    tar.addfile(info, io.BytesIO(payload))


def _mask_bytes(foreground: Foreground) -> bytes:
    mask = np.asarray(foreground.mask_ref)
    buf = io.BytesIO()
    Image.fromarray(mask.astype(np.uint8) * 255).save(buf, format="PNG")
    return buf.getvalue()


def read_shards(paths: Iterable) -> Iterator[IHCRecord]:
    """Stream records back out of shard files, pairing image and metadata."""
    for path in paths:
        try:
            tar = tarfile.open(path, "r")
        except (OSError, tarfile.TarError) as exc:
            raise ShardIO(f"cannot open shard {path}: {exc}") from exc
        with tar:
            pending: dict[str, dict[str, bytes]] = {}
            order: list[str] = []
            for member in tar:
                if not member.isfile():
                    continue
                key, kind = _classify_member(member.name)
                if key not in pending:
                    pending[key] = {}
                    order.append(key)
                pending[key][kind] = tar.extractfile(member).read()
            for key in order:
                yield _assemble_record(key, pending[key], path)


def _classify_member(name: str) -> tuple[str, str]:
    if name.endswith(MASK_EXT):
        return name[: -len(MASK_EXT)], "mask"
    if name.endswith(META_EXT):
        return name[: -len(META_EXT)], "meta"
    if name.endswith(IMAGE_EXT):
        return name[: -len(IMAGE_EXT)], "image"
    raise SchemaError(f"unrecognized shard member {name!r}")


def _assemble_record(key: str, entry: dict[str, bytes], path) -> IHCRecord:
    if "meta" not in entry:
        raise SchemaError(f"shard {path} has no metadata entry for key {key}")
    if "image" not in entry:
        raise SchemaError(f"shard {path} has no image entry for key {key}")
    try:
        meta = json.loads(entry["meta"])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"metadata for key {key} is not valid JSON: {exc}") from exc
    mask_ref = None
    if "mask" in entry:
        mask_ref = np.asarray(Image.open(io.BytesIO(entry["mask"]))) > 0
    record = IHCRecord.from_metadata(meta, image_ref=entry["image"], mask_ref=mask_ref)
    if record.md5 != key:
        raise SchemaError(f"metadata md5 {record.md5} does not match member key {key}")
    return record


def export_metadata_table(records: Iterable[IHCRecord], path) -> int:
    """Write the scalar metadata fields as one CSV row per record."""
    fields = [
        "md5", "tissue_class", "malignancy", "snomed_code", "snomed_text",
        "marker_gene", "cell_type", "age", "sex", "source_url",
        "intensity", "location", "quantity", "tissue", "malignancy_label",
    ]
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for record in records:
            meta = record.to_metadata()
            labels = meta["labels"]
            writer.writerow(
                [meta[k] for k in fields[:10]]
                + [labels.get(k, "") for k in ("intensity", "location", "quantity", "tissue")]
                + [labels.get("malignancy", "")]
            )
            n += 1
    return n


# -- splitting --------------------------------------------------------


def compute_split_sizes(total: int, test_size: int) -> tuple[int, int]:
    """Partition arithmetic shared by both split strategies."""
    if test_size < 0 or test_size >= total:
        raise ValueError(f"test_size must be in [0, {total}), got {test_size}")
    return total - test_size, test_size


def split_dataset(
    records: Sequence[IHCRecord],
    test_size: int,
    seed: int,
    strategy: str = "stratified",
) -> DatasetSplit:
    """Deterministically split records into train/test md5 lists.

    ``random`` draws uniformly; ``stratified`` matches the joint
    (tissue_class, malignancy) proportions within one record per
    stratum, using largest-remainder allocation. A stratum whose whole
    population would be consumed into the test side raises
    :class:`StratumTooSmall`.
    """
    compute_split_sizes(len(records), test_size)
    md5s = [r.md5 for r in records]
    rng = np.random.default_rng(seed)
    if strategy == "random":
        order = rng.permutation(len(records))
        test_idx = set(order[:test_size].tolist())
    elif strategy == "stratified":
        test_idx = _stratified_test_indices(records, test_size, rng)
    else:
        raise ValueError(f"unknown split strategy {strategy!r}")
    test = tuple(md5s[i] for i in sorted(test_idx))
    train = tuple(md5s[i] for i in range(len(records)) if i not in test_idx)
    return DatasetSplit(train=train, test=test, seed=seed, strategy=strategy)


def _stratified_test_indices(records, test_size: int, rng) -> set[int]:
    strata: dict[tuple[str, str], list[int]] = {}
    for i, record in enumerate(records):
        strata.setdefault((record.tissue_class, record.malignancy), []).append(i)
    total = len(records)
    shares = {k: test_size * len(v) / total for k, v in strata.items()}
    alloc = {k: math.floor(s) for k, s in shares.items()}
    leftover = test_size - sum(alloc.values())
    by_remainder = sorted(strata, key=lambda k: (-(shares[k] - alloc[k]), k))
    for key in by_remainder[:leftover]:
        alloc[key] += 1
    test_idx: set[int] = set()
    for key in sorted(strata):
        members = strata[key]
        take = alloc[key]
        if take > 0 and take >= len(members):
            raise StratumTooSmall(key)
        picked = rng.choice(len(members), size=take, replace=False)
        test_idx.update(members[j] for j in picked)
    return test_idx
