"""Deterministic model of filesystem-wide flush delay.

A flush pays a base cost plus linear costs per dirty buffer population:
dirty page bytes (two affine regimes with a knee at one 4 KiB page, the
sub-page regime being the steeper one), dirty inodes, and journal
entries.  Container mount/unmount activity appears as additive delay
spikes over a time window.  Noise is optional and pluggable: Gaussian or
lognormal, with a variance budget per cost component so dirtier flushes
jitter more, the way measured latencies do.

Profiles hold the model constants.  ``calibrate_profile`` solves them
from measured per-operation flush means (optionally slopes from a
concurrent-file experiment), and the package ships four built-ins under
``syncprobe/profiles/``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources

from .errors import BackendOpenError, CalibrationError

PAGE_BYTES = 4096

NOISE_NONE = "none"
NOISE_GAUSSIAN = "gaussian"
NOISE_LOGNORMAL = "lognormal"
_NOISE_KINDS = (NOISE_NONE, NOISE_GAUSSIAN, NOISE_LOGNORMAL)

EVENT_CONTAINER_MOUNT = "container-mount"
EVENT_CONTAINER_UNMOUNT = "container-unmount"


@dataclass
class TimedEvent:
    """Extra flush delay over [at, at + duration], e.g. a container mount."""

    kind: str
    at: int
    extra_delay: int
    duration: int

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("event duration must be positive")
        if self.extra_delay <= 0:
            raise ValueError("event extra_delay must be positive")

    def covers(self, now: int) -> bool:
        return self.at <= now <= self.at + self.duration

    def expired(self, now: int) -> bool:
        return self.at + self.duration < now


@dataclass
class FsState:
    """Pending dirty state a flush has to drain."""

    dirty_bytes: int = 0
    dirty_inodes: int = 0
    journal_entries: int = 0
    pending_events: list = field(default_factory=list)

    def clear_dirty(self):
        self.dirty_bytes = 0
        self.dirty_inodes = 0
        self.journal_entries = 0

    def prune_events(self, now: int):
        self.pending_events = [e for e in self.pending_events if not e.expired(now)]


@dataclass
class DelayProfile:
    """Flush-delay model constants, all in cycles.

    page_cost is the cost of one fully dirty 4096-byte page in the
    sub-page regime; above_page_cost the per-page cost beyond the first
    page.  noise_sigma is the clean-state (baseline) standard deviation;
    the *_noise_var fields add variance per dirty unit so that flushes
    with more pending work jitter proportionally more.
    """

    name: str
    base_delay: float
    page_cost: float = 0.0
    above_page_cost: float = 0.0
    inode_cost: float = 0.0
    journal_cost: float = 0.0
    per_file_write_slope: float = 0.0
    noise_sigma: float = 0.0
    noise_kind: str = NOISE_NONE
    page_noise_var: float = 0.0
    inode_noise_var: float = 0.0
    journal_noise_var: float = 0.0

    def __post_init__(self):
        if self.base_delay <= 0:
            raise ValueError("base_delay must be positive")
        for attr in ("page_cost", "above_page_cost", "inode_cost", "journal_cost"):
            if getattr(self, attr) < 0:
                raise ValueError(f"{attr} must be non-negative")
        # Sub-4 KiB regime is the steeper one; a flat profile (both zero)
        # is allowed for testing.
        if self.page_cost > 0 and self.above_page_cost >= self.page_cost:
            raise ValueError("above_page_cost must be smaller than page_cost")
        if self.noise_kind not in _NOISE_KINDS:
            raise ValueError(f"unknown noise_kind {self.noise_kind!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    def without_noise(self) -> "DelayProfile":
        return replace(self, noise_kind=NOISE_NONE)


def page_term(dirty_bytes: int, profile: DelayProfile) -> float:
    """Two-regime affine cost of dirty page bytes (knee at one page)."""
    if dirty_bytes <= 0:
        return 0.0
    below_per_byte = profile.page_cost / PAGE_BYTES
    if dirty_bytes <= PAGE_BYTES:
        return dirty_bytes * below_per_byte
    above_per_byte = profile.above_page_cost / PAGE_BYTES
    return profile.page_cost + (dirty_bytes - PAGE_BYTES) * above_per_byte


def event_term(events, now: int) -> float:
    return float(sum(e.extra_delay for e in events if e.covers(now)))


def noise_sigma_for(profile: DelayProfile, dirty_bytes: int, dirty_inodes: int,
                    journal_entries: int) -> float:
    """Standard deviation of the noise draw for a flush over this state."""
    var = profile.noise_sigma ** 2
    var += profile.page_noise_var * (dirty_bytes / PAGE_BYTES)
    var += profile.inode_noise_var * dirty_inodes
    var += profile.journal_noise_var * journal_entries
    return math.sqrt(var)


def model_delay(state: FsState, profile: DelayProfile, now: int = 0, rng=None) -> float:
    """Flush delay in cycles for the given pending state.

    Noise-off mode (noise_kind "none", or rng omitted) is exact and this
    function is then pure.  With a generator, one draw is consumed per
    call, Gaussian or lognormal per the profile.
    """
    det = (
        profile.base_delay
        + page_term(state.dirty_bytes, profile)
        + profile.inode_cost * state.dirty_inodes
        + profile.journal_cost * state.journal_entries
        + event_term(state.pending_events, now)
    )
    if profile.noise_kind == NOISE_NONE or rng is None:
        return det
    sigma = noise_sigma_for(
        profile, state.dirty_bytes, state.dirty_inodes, state.journal_entries
    )
    if sigma == 0.0:
        return det
    z = rng.standard_normal()
    if profile.noise_kind == NOISE_GAUSSIAN:
        return det + z * sigma
    # Lognormal: multiplicative right-skewed jitter with the mean preserved.
    s = sigma / det
    return det * math.exp(s * z - 0.5 * s * s)


def inject_event(state: FsState, event: TimedEvent, now: int = 0) -> FsState:
    """Append a spike event and prune ones whose window is entirely past."""
    state.pending_events.append(event)
    state.prune_events(now)
    return state


# --------------------------------------------------------------------------
# Profile calibration from measured targets
# --------------------------------------------------------------------------

@dataclass
class BenchTargets:
    """Measured flush means (and optionally stddevs / concurrency slopes).

    Means are per-operation flush latencies after a clean flush: baseline
    (no op), write of write_size bytes, synchronous write, ftruncate,
    rename.  Slopes, when given, are cycles per concurrent file from the
    multi-file experiment and take precedence for the linear costs.
    """

    name: str
    baseline_mean: float
    write_mean: float | None = None
    write_sync_mean: float | None = None
    ftruncate_mean: float | None = None
    rename_mean: float | None = None
    write_size: int = PAGE_BYTES
    baseline_std: float = 0.0
    write_std: float = 0.0
    write_sync_std: float = 0.0
    ftruncate_std: float = 0.0
    rename_std: float = 0.0
    write_slope: float | None = None
    write_sync_slope: float | None = None
    ftruncate_slope: float | None = None
    slope_write_size: int = 64
    noise_kind: str = NOISE_GAUSSIAN


def _require_nonneg(value: float, constraint: str) -> float:
    if value < 0:
        raise CalibrationError(f"inconsistent targets: {constraint}")
    return value


def calibrate_profile(targets: BenchTargets) -> DelayProfile:
    """Solve profile constants so the model reproduces the targets exactly.

    baseline -> base_delay; write(O_SYNC) -> journal_cost; ftruncate and
    rename share inode_cost + journal_cost (two equations, averaged);
    write -> page cost residual.  When concurrency slopes are present
    they define the linear costs instead and the write slope is recorded
    as per_file_write_slope.
    """
    if targets.baseline_mean <= 0:
        raise CalibrationError("inconsistent targets: baseline mean must be positive")
    base = targets.baseline_mean

    if targets.write_slope is not None:
        if targets.write_sync_slope is None or targets.ftruncate_slope is None:
            raise CalibrationError(
                "inconsistent targets: slope calibration needs write, write_sync "
                "and ftruncate slopes"
            )
        journal = _require_nonneg(
            targets.write_sync_slope, "write(O_SYNC) slope is negative"
        )
        inode = _require_nonneg(
            targets.ftruncate_slope - journal,
            "ftruncate slope below write(O_SYNC) slope",
        )
        page_at_size = _require_nonneg(
            targets.write_slope - targets.ftruncate_slope,
            "write slope below ftruncate slope",
        )
        page = page_at_size * (PAGE_BYTES / targets.slope_write_size)
        per_file = targets.write_slope
    else:
        for attr in ("write_mean", "write_sync_mean", "ftruncate_mean", "rename_mean"):
            if getattr(targets, attr) is None:
                raise CalibrationError(
                    f"inconsistent targets: mean calibration needs {attr}"
                )
        journal = _require_nonneg(
            targets.write_sync_mean - base, "write(O_SYNC) mean below baseline"
        )
        inode_ft = targets.ftruncate_mean - base - journal
        inode_rn = targets.rename_mean - base - journal
        inode = _require_nonneg(
            (inode_ft + inode_rn) / 2.0,
            "ftruncate/rename means below baseline + journal cost",
        )
        page_at_size = _require_nonneg(
            targets.write_mean - base - journal - inode,
            "write mean below baseline + inode + journal costs",
        )
        page = page_at_size * (PAGE_BYTES / targets.write_size)
        per_file = targets.write_mean - base

    # Noise variance budget: additive per component, solved the same way
    # as the means so each measured row's stddev is reproduced.
    var_base = targets.baseline_std ** 2
    var_journal = 0.0
    var_inode = 0.0
    var_page = 0.0
    if targets.write_sync_std:
        var_journal = _require_nonneg(
            targets.write_sync_std ** 2 - var_base,
            "write(O_SYNC) variance below baseline variance",
        )
    if targets.ftruncate_std or targets.rename_std:
        var_meta = (targets.ftruncate_std ** 2 + targets.rename_std ** 2) / 2.0
        var_inode = _require_nonneg(
            var_meta - var_journal - var_base,
            "ftruncate/rename variance below journal + baseline variance",
        )
    if targets.write_std:
        var_page_at_size = _require_nonneg(
            targets.write_std ** 2 - var_inode - var_journal - var_base,
            "write variance below metadata variance",
        )
        var_page = var_page_at_size * (PAGE_BYTES / targets.write_size)

    noisy = targets.noise_kind != NOISE_NONE and (
        targets.baseline_std > 0
        or var_journal > 0
        or var_inode > 0
        or var_page > 0
    )
    return DelayProfile(
        name=targets.name,
        base_delay=base,
        page_cost=page,
        # Free parameter: measurements constrain the above-page slope only
        # to be smaller than the sub-page one, not by how much.
        above_page_cost=page / 8.0,
        inode_cost=inode,
        journal_cost=journal,
        per_file_write_slope=per_file,
        noise_sigma=targets.baseline_std,
        noise_kind=targets.noise_kind if noisy else NOISE_NONE,
        page_noise_var=var_page,
        inode_noise_var=var_inode,
        journal_noise_var=var_journal,
    )


# --------------------------------------------------------------------------
# Profile serialization: one "name = value" per line, UTF-8
# --------------------------------------------------------------------------

_PROFILE_FIELDS = (
    "base_delay", "page_cost", "above_page_cost", "inode_cost", "journal_cost",
    "per_file_write_slope", "noise_sigma", "page_noise_var", "inode_noise_var",
    "journal_noise_var",
)


def format_profile(profile: DelayProfile) -> str:
    lines = [f"name = {profile.name}", f"noise_kind = {profile.noise_kind}"]
    for name in _PROFILE_FIELDS:
        lines.append(f"{name} = {getattr(profile, name):.6f}")
    return "\n".join(lines) + "\n"


def parse_profile(text: str) -> DelayProfile:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"profile line {lineno}: expected 'name = value'")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    if "name" not in values or "base_delay" not in values:
        raise ValueError("profile must define at least 'name' and 'base_delay'")
    kwargs = {"name": values.pop("name")}
    kwargs["noise_kind"] = values.pop("noise_kind", NOISE_NONE)
    for key, val in values.items():
        if key not in _PROFILE_FIELDS:
            raise ValueError(f"unknown profile key {key!r}")
        kwargs[key] = float(val)
    return DelayProfile(**kwargs)


def save_profile(profile: DelayProfile, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_profile(profile))


PROFILE_DIR_ENV = "SYNCPROBE_PROFILE_DIR"


def _builtin_profile_dir():
    return resources.files("syncprobe") / "profiles"


def list_profiles() -> list[str]:
    names = set()
    override = os.environ.get(PROFILE_DIR_ENV)
    if override and os.path.isdir(override):
        names.update(
            f[:-8] for f in os.listdir(override) if f.endswith(".profile")
        )
    for entry in _builtin_profile_dir().iterdir():
        if entry.name.endswith(".profile"):
            names.add(entry.name[:-8])
    return sorted(names)


def load_profile(name: str) -> DelayProfile:
    """Load a named profile, honoring the SYNCPROBE_PROFILE_DIR override."""
    override = os.environ.get(PROFILE_DIR_ENV)
    if override:
        candidate = os.path.join(override, name + ".profile")
        if os.path.exists(candidate):
            with open(candidate, encoding="utf-8") as fh:
                return parse_profile(fh.read())
    entry = _builtin_profile_dir() / (name + ".profile")
    try:
        text = entry.read_text(encoding="utf-8")
    except (FileNotFoundError, OSError):
        raise BackendOpenError(
            f"unknown profile {name!r}; available: {', '.join(list_profiles())}"
        ) from None
    return parse_profile(text)
