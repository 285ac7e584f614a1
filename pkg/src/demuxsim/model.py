"""Shared domain types: time tags, photon events, deterministic random streams.

All timestamps are integer picoseconds so that interchange files are
bit-exact and coincidence windows are reproducible across platforms.
"""

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConfigError

# Channel id convention used throughout:
#   0       input monitor (reference tap in front of the demultiplexer)
#   1..N    demultiplexer outputs
#   100/101 the two detectors of a correlation bench (HBT or HOM)
MONITOR_CHANNEL = 0
BENCH_CHANNEL_A = 100
BENCH_CHANNEL_B = 101

# On-disk and in-memory record layout of a detection event.  The binary
# file format is exactly this dtype, little endian, no header.
TAG_DTYPE = np.dtype([("channel", "<u4"), ("timestamp_ps", "<u8")])


class TimeTag(NamedTuple):
    """One detection record: channel id plus timestamp in picoseconds."""

    channel: int
    timestamp_ps: int


@dataclass(frozen=True)
class PhotonEvent:
    """Emission content of one laser time bin.

    ``offset_ps``/``label`` describe the first photon; for two-photon
    events the second photon's values are in ``offset2_ps``/``label2``.
    Photons with equal labels are mutually indistinguishable; label 0 is
    the common wavepacket, any other value is a globally fresh mode.
    """

    bin_index: int
    offset_ps: float
    n_photons: int
    label: int
    offset2_ps: float = 0.0
    label2: int = -1

    def __post_init__(self):
        if not 0 <= self.n_photons <= 2:
            raise ConfigError(f"n_photons must be in {{0,1,2}}, got {self.n_photons}")
        if self.offset_ps < 0:
            raise ConfigError("offset_ps must be >= 0")


@dataclass
class RandomStream:
    """Deterministic substream of the root seed.

    Identical ``(seed, substream)`` reproduce an identical draw sequence
    on any platform (counter-based Philox under a spawned SeedSequence).
    Each stream must stay confined to one worker.
    """

    seed: int
    substream: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, default=None)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.substream,))
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def uniform(self, size=None):
        return self.generator.random(size)

    def exponential(self, scale, size=None):
        return self.generator.exponential(scale, size)

    def integers(self, low, high, size=None, dtype=np.int64, endpoint=False):
        return self.generator.integers(low, high, size=size, dtype=dtype, endpoint=endpoint)

    def photon_seeds(self, n) -> np.ndarray:
        """Per-photon 64-bit seeds for the in-kernel counter RNG."""
        return self.generator.integers(0, 2**64 - 1, size=n, dtype=np.uint64, endpoint=True)


def make_stream(seed: int, substream: int = 0) -> RandomStream:
    """Create the deterministic random stream for one Monte Carlo unit."""
    return RandomStream(int(seed), int(substream))


# Fixed substream assignment so that a single root seed drives the whole
# pipeline reproducibly, independent of which stages actually run.
SUBSTREAM_EMISSION = 0
SUBSTREAM_DEMUX = 1
SUBSTREAM_HBT = 2
SUBSTREAM_HOM = 3


def make_tags(channels, timestamps) -> np.ndarray:
    """Build a structured tag array from channel ids and ps timestamps."""
    channels = np.asarray(channels)
    timestamps = np.asarray(timestamps)
    if channels.shape != timestamps.shape:
        raise ConfigError("channels and timestamps must have equal length")
    out = np.empty(channels.size, dtype=TAG_DTYPE)
    out["channel"] = channels
    out["timestamp_ps"] = timestamps
    return out


def as_tag_array(tags) -> np.ndarray:
    """Coerce a list of TimeTag (or tuples) / structured array to TAG_DTYPE."""
    if isinstance(tags, np.ndarray) and tags.dtype == TAG_DTYPE:
        return tags
    if isinstance(tags, np.ndarray) and tags.dtype.names == TAG_DTYPE.names:
        return tags.astype(TAG_DTYPE)
    tags = list(tags)
    if not tags:
        return np.empty(0, dtype=TAG_DTYPE)
    ch = [t[0] for t in tags]
    ts = [t[1] for t in tags]
    return make_tags(ch, ts)


def sort_and_merge(tags) -> "np.ndarray | list[TimeTag]":
    """Globally sort tags by timestamp, stable on ties by channel id.

    Accepts a structured tag array, an iterable of such arrays, or a list
    of TimeTag tuples; the container type of the input is preferred for
    the output (list in, list out).  The multiset of tags is preserved.
    """
    want_list = isinstance(tags, list) and (len(tags) == 0 or isinstance(tags[0], tuple))
    if isinstance(tags, Iterable) and not isinstance(tags, (np.ndarray, list)):
        tags = list(tags)
    if isinstance(tags, list) and tags and isinstance(tags[0], np.ndarray):
        arr = np.concatenate([as_tag_array(t) for t in tags])
    else:
        arr = as_tag_array(tags)
    order = np.lexsort((arr["channel"], arr["timestamp_ps"]))
    arr = arr[order]
    if want_list:
        return [TimeTag(int(c), int(t)) for c, t in zip(arr["channel"], arr["timestamp_ps"])]
    return arr
