"""
Processor TDP registry.

Loads the processor -> thermal design power dataset, detects the host CPU,
and resolves a TDP value by exact match, token-set similarity, or the
constant fallback.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import platform
import re
import subprocess
from collections.abc import Callable, Iterator
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import IO

import psutil

from dbenergy.errors import ConfigError
from dbenergy.types import CpuIdentity, MatchKind, TdpResolution

logger = logging.getLogger(__name__)

FALLBACK_TDP_WATTS = 100.0
FUZZY_THRESHOLD = 0.6
UNKNOWN_MODEL = "unknown"

_REGISTRY_HEADER = ["vendor", "model", "tdp_watts"]
_VENDORS = {"intel", "amd"}
_MARKS = ("(r)", "(tm)", "®", "™")
_CLOCK_SUFFIX = re.compile(r"@\s*\d+(?:\.\d+)?\s*ghz")
_CLOCK_TOKEN = re.compile(r"^\d+(?:\.\d+)?ghz$")
_NOISE_TOKENS = {"cpu", "processor"}


@dataclass(frozen=True)
class TdpEntry:
    """One processor model and its thermal design power."""

    model_key: str
    vendor: str  # intel, amd, other
    tdp_watts: float


def _normalize_once(text: str) -> str:
    for mark in _MARKS:
        text = text.replace(mark, "")
    text = _CLOCK_SUFFIX.sub(" ", text)
    tokens = [
        tok for tok in text.split() if tok not in _NOISE_TOKENS and not _CLOCK_TOKEN.match(tok)
    ]
    return " ".join(tokens)


def normalize_model(raw: str) -> str:
    """
    Normalize a processor model string into a registry key.

    Lowercases, drops trademark marks, clock-speed suffixes and the noise
    tokens "cpu"/"processor", and collapses whitespace.

    Example:
        normalize_model("Intel(R) Core(TM) i5-1135G7 CPU @ 2.40GHz")
        # -> "intel core i5-1135g7"
    """
    text = raw.lower()
    # Removing one mark can expose another, so iterate to a fixpoint.
    while True:
        normalized = _normalize_once(text)
        if normalized == text:
            return normalized
        text = normalized


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    """Token-set Jaccard similarity in [0, 1]; 0 when both sets are empty."""
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def _common_prefix_len(a: str, b: str) -> int:
    return len(os.path.commonprefix([a, b]))


class Registry:
    """
    Immutable collection of TdpEntry values keyed by normalized model.

    Safe to share between threads after construction.
    """

    def __init__(self, entries: list[TdpEntry]) -> None:
        index: dict[str, TdpEntry] = {}
        for entry in entries:
            if entry.model_key in index:
                raise ConfigError(f"duplicate model key: {entry.model_key}")
            index[entry.model_key] = entry
        self._entries = MappingProxyType(index)
        self._tokens = MappingProxyType(
            {key: frozenset(key.split()) for key in index}
        )

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[TdpEntry]:
        return iter(self._entries.values())

    def __contains__(self, key: object) -> bool:
        return key in self._entries

    def get(self, model_key: str) -> TdpEntry | None:
        """Return the entry for a normalized key, if present."""
        return self._entries.get(model_key)

    def tokens(self, model_key: str) -> frozenset[str]:
        """Return the token set of a registered key."""
        return self._tokens[model_key]


def load_registry(source: IO[bytes]) -> Registry:
    """
    Load a registry from a CSV byte stream with header `vendor,model,tdp_watts`.

    Raises:
        ConfigError: On a bad header, malformed row, non-numeric or
            non-positive TDP, a model that normalizes to an empty key, or a
            duplicate key; row errors name the line.
    """
    text = io.TextIOWrapper(source, encoding="utf-8", newline="")
    reader = csv.reader(text)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != _REGISTRY_HEADER:
        raise ConfigError(f"registry header must be {','.join(_REGISTRY_HEADER)}, got {header}")

    entries: list[TdpEntry] = []
    seen: dict[str, int] = {}
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != 3:
            raise ConfigError(f"malformed row at line {line}: expected 3 columns, got {len(row)}")
        vendor, model, tdp_text = (field.strip() for field in row)
        try:
            tdp = float(tdp_text)
        except ValueError:
            raise ConfigError(f"non-numeric TDP at line {line}: {tdp_text!r}") from None
        if not tdp > 0:
            raise ConfigError(f"non-positive TDP at line {line}")
        key = normalize_model(model)
        if not key:
            raise ConfigError(f"empty model key at line {line}: {model!r}")
        if key in seen:
            raise ConfigError(
                f"duplicate model key {key!r} at line {line} (first seen at line {seen[key]})"
            )
        seen[key] = line
        vendor = vendor.lower()
        entries.append(TdpEntry(key, vendor if vendor in _VENDORS else "other", tdp))

    logger.debug(f"Loaded TDP registry with {len(entries)} entries")
    return Registry(entries)


def load_registry_file(path: str | Path) -> Registry:
    """Load a registry from a CSV file on disk."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"TDP registry not found: {path}")
    with path.open("rb") as fh:
        return load_registry(fh)


def load_bundled_registry() -> Registry:
    """Load the registry shipped with the package."""
    with resources.files("dbenergy.data").joinpath("cpu_tdp.csv").open("rb") as fh:
        return load_registry(fh)


def _column(header: list[str], names: tuple[str, ...]) -> int:
    lowered = [h.strip().lower() for h in header]
    for name in names:
        if name in lowered:
            return lowered.index(name)
    raise ConfigError(f"upstream table needs one of the columns {', '.join(names)}; got {header}")


def convert_upstream(source: IO[str], dest: IO[str]) -> int:
    """
    Convert an upstream processor table (`Model,TDP` columns) to registry format.

    The vendor is taken from the model's first token. Rows with an empty
    model key or an unusable TDP are skipped; of rows sharing a normalized
    key the first wins. A trailing "W" on TDP values is accepted.

    Returns:
        Number of registry rows written

    Raises:
        ConfigError: If the header has no model or TDP column.
    """
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise ConfigError("upstream table is empty")
    model_col = _column(header, ("model", "name"))
    tdp_col = _column(header, ("tdp", "tdp_watts"))

    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(_REGISTRY_HEADER)
    seen: set[str] = set()
    skipped = 0
    for row in reader:
        if len(row) <= max(model_col, tdp_col):
            skipped += 1
            continue
        model = row[model_col].strip()
        key = normalize_model(model)
        tdp_text = row[tdp_col].strip().rstrip("Ww").strip()
        try:
            tdp = float(tdp_text)
        except ValueError:
            tdp = 0.0
        if not key or not tdp > 0:
            skipped += 1
            continue
        if key in seen:
            logger.debug(f"Duplicate upstream model {model!r}; keeping the first row")
            continue
        seen.add(key)
        vendor = key.split()[0]
        writer.writerow([vendor if vendor in _VENDORS else "other", model, f"{tdp:g}"])

    if skipped:
        logger.warning(f"Skipped {skipped} upstream rows without a usable model or TDP")
    logger.info(f"Converted {len(seen)} processors")
    return len(seen)


def resolve_tdp(registry: Registry, raw_model: str) -> TdpResolution:
    """
    Resolve the TDP of a processor model.

    Exact key match first; otherwise the entry with the highest token-set
    Jaccard score at or above 0.6 (ties: longest common prefix with the
    query, then smallest key); otherwise the 100 W fallback.
    """
    query = normalize_model(raw_model)
    exact = registry.get(query)
    if exact is not None:
        return TdpResolution(exact.tdp_watts, MatchKind.EXACT, exact.model_key, 1.0)

    query_tokens = frozenset(query.split())
    candidates = [
        (score, entry)
        for entry in registry
        if (score := jaccard(query_tokens, registry.tokens(entry.model_key))) >= FUZZY_THRESHOLD
    ]
    if not candidates:
        logger.warning(f"No TDP match for {raw_model!r}; using {FALLBACK_TDP_WATTS} W fallback")
        return TdpResolution(FALLBACK_TDP_WATTS, MatchKind.FALLBACK, None, 0.0)

    score, entry = min(
        candidates,
        key=lambda c: (-c[0], -_common_prefix_len(query, c[1].model_key), c[1].model_key),
    )
    logger.info(f"Fuzzy TDP match for {raw_model!r}: {entry.model_key} (score {score:.2f})")
    return TdpResolution(entry.tdp_watts, MatchKind.FUZZY, entry.model_key, score)


def _read_model_string() -> str | None:
    system = platform.system()
    if system == "Linux":
        cpuinfo = Path("/proc/cpuinfo")
        if cpuinfo.exists():
            for line in cpuinfo.read_text(encoding="utf-8", errors="replace").splitlines():
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
    elif system == "Darwin":
        result = subprocess.run(
            ["sysctl", "-n", "machdep.cpu.brand_string"],
            capture_output=True,
            text=True,
            check=False,
        )
        if result.returncode == 0 and result.stdout.strip():
            return result.stdout.strip()
    model = platform.processor()
    return model or None


def _read_core_count() -> int | None:
    return psutil.cpu_count(logical=True)


def detect_cpu(
    model_probe: Callable[[], str | None] = _read_model_string,
    core_probe: Callable[[], int | None] = _read_core_count,
) -> CpuIdentity:
    """
    Detect the host CPU model string and logical core count.

    An unreadable model degrades to "unknown" (which resolves to the
    fallback TDP).

    Raises:
        ConfigError: If the core count cannot be determined.
    """
    try:
        model = model_probe()
    except OSError as e:
        logger.warning(f"CPU model probe failed: {e}")
        model = None

    try:
        cores = core_probe()
    except OSError as e:
        raise ConfigError(f"cannot determine core count: {e}") from e
    if not cores or cores < 1:
        raise ConfigError("cannot determine core count")

    identity = CpuIdentity(model.strip() if model and model.strip() else UNKNOWN_MODEL, cores)
    logger.debug(f"Detected CPU: {identity.raw_model_string} ({identity.core_count} logical cores)")
    return identity
