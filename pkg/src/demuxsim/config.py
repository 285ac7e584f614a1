"""Run configuration: strict schema, dotted-path overrides, presets.

The config file is JSON with nested sections (``emitter``, ``demux``,
``waveform``, ``geometry``, ``run``, ``analysis``, ``predict``,
``sweep``); flat dotted keys (``"emitter.p_det": 0.214``) are accepted
too and CLI ``--set key=value`` overrides use the same dotted paths.
Unknown keys are rejected, and every nested invariant is enforced at
load time with the offending key named.  Units ride on the key suffix
(``_ns``, ``_ps``, ``_hz``).
"""

import hashlib
import json
from dataclasses import dataclass, field

from .demux import DemuxParams, EomWaveform, validate_timing
from .errors import ConfigError
from .rates import GeometryParams, demux_from_chain, fit_chain
from .source import EmitterParams

MODES = ("demux", "source", "hbt", "hom")
TAG_FORMATS = ("csv", "binary")

_SECTION_FIELDS = {
    "emitter": ("rep_rate_hz", "p_det", "g2_target", "indist", "lifetime_ps",
                "rabi_damping"),
    "demux": ("n_outputs", "loop_delay_ns", "pbs_leak", "loop_transmission",
              "fixed_transmission", "detector_eff"),
    "waveform": ("period_ns", "on_duration_ns", "rise_ns", "fall_ns", "p_sw_max",
                 "phase_ns"),
    "geometry": ("wavelength_nm", "waist_mm", "loop_delay_ns", "aperture_mm",
                 "spacing_factor"),
    "run": ("mode", "n_pulses", "seed", "output_dir", "tag_format", "threads"),
    "analysis": ("bin_width_ps", "window_ps", "side_peaks", "exclude_nearest", "g2"),
    "predict": ("eta_first", "eta_last", "n_outputs"),
    "sweep": ("objective", "grid", "base"),
}

_INT_KEYS = {"demux.n_outputs", "run.n_pulses", "run.seed", "run.threads",
             "analysis.bin_width_ps", "analysis.window_ps", "analysis.side_peaks",
             "analysis.exclude_nearest", "predict.n_outputs"}
_STR_KEYS = {"run.mode", "run.output_dir", "run.tag_format", "sweep.objective"}

_ANALYSIS_DEFAULTS = {"bin_width_ps": 50, "window_ps": 3000, "side_peaks": 10,
                      "exclude_nearest": 1, "g2": None}
_PREDICT_DEFAULTS = {"eta_first": 0.73, "eta_last": 0.14, "n_outputs": 8}


@dataclass
class RunConfig:
    emitter: EmitterParams
    demux: DemuxParams
    waveform: EomWaveform
    geometry: GeometryParams
    mode: str = "demux"
    n_pulses: int = 1_000_000
    seed: int = 42
    output_dir: str = "out"
    tag_format: str = "csv"
    threads: int = 0
    analysis: dict = field(default_factory=lambda: dict(_ANALYSIS_DEFAULTS))
    predict: dict = field(default_factory=lambda: dict(_PREDICT_DEFAULTS))
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"run.mode must be one of {MODES}, got {self.mode!r}")
        if self.n_pulses < 0:
            raise ConfigError("run.n_pulses must be >= 0")
        if self.tag_format not in TAG_FORMATS:
            raise ConfigError(f"run.tag_format must be one of {TAG_FORMATS}")
        if self.threads < 0:
            raise ConfigError("run.threads must be >= 0")
        if self.mode == "demux":
            if self.emitter.pulse_period_ps != self.demux.loop_delay_ps:
                raise ConfigError(
                    "demux.loop_delay_ns must equal the emitter pulse separation "
                    f"({self.emitter.pulse_period_ps} ps)"
                )
            validate_timing(self.demux, self.waveform)

    @property
    def duration_s(self) -> float:
        return self.n_pulses / self.emitter.rep_rate_hz

    def to_dict(self, include_threads=False) -> dict:
        """Serializable nested dict; threads are an execution detail and are
        excluded by default so reruns hash identically."""
        d = {
            "emitter": _dataclass_dict(self.emitter),
            "demux": _dataclass_dict(self.demux),
            "waveform": _dataclass_dict(self.waveform),
            "geometry": _dataclass_dict(self.geometry),
            "run": {
                "mode": self.mode,
                "n_pulses": self.n_pulses,
                "seed": self.seed,
                "output_dir": self.output_dir,
                "tag_format": self.tag_format,
            },
            "analysis": dict(self.analysis),
            "predict": dict(self.predict),
            "sweep": self.sweep if self.sweep else {},
        }
        if include_threads:
            d["run"]["threads"] = self.threads
        return d

    def sha256(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()


def _dataclass_dict(obj):
    return {k: v for k, v in vars(obj).items() if not k.startswith("_")}


def _merge_dotted(tree: dict, dotted: str, value):
    parts = dotted.split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"config key {dotted!r} conflicts with a scalar value")
    node[parts[-1]] = value


def _normalize(raw: dict) -> dict:
    tree = {}
    for key, value in raw.items():
        if "." in key:
            _merge_dotted(tree, key, value)
        elif isinstance(value, dict) and key != "sweep":
            section = tree.setdefault(key, {})
            section.update(value)
        else:
            tree[key] = value
    return tree


def _check_schema(tree: dict):
    for section, content in tree.items():
        if section not in _SECTION_FIELDS:
            raise ConfigError(f"unknown config section {section!r}")
        if section == "sweep":
            continue
        if not isinstance(content, dict):
            raise ConfigError(f"config section {section!r} must be a mapping")
        for key, value in content.items():
            dotted = f"{section}.{key}"
            if key not in _SECTION_FIELDS[section]:
                raise ConfigError(f"unknown config key {dotted!r}")
            if dotted in _STR_KEYS:
                if not isinstance(value, str):
                    raise ConfigError(f"config key {dotted!r} must be a string")
            elif dotted in _INT_KEYS:
                if not isinstance(value, int) or isinstance(value, bool):
                    raise ConfigError(f"config key {dotted!r} must be an integer")
            elif dotted in ("analysis.g2",) and value is None:
                pass
            elif dotted in ("sweep.grid", "sweep.base"):
                pass
            elif isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"config key {dotted!r} must be a number")


def _build_section(cls, section_name, values: dict):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"section {section_name!r}: {exc}") from None


def build_config(tree: dict) -> RunConfig:
    tree = _normalize(tree)
    _check_schema(tree)
    emitter = _build_section(EmitterParams, "emitter", tree.get("emitter", {}))
    demux = _build_section(DemuxParams, "demux", tree.get("demux", {}))
    waveform = _build_section(EomWaveform, "waveform", tree.get("waveform", {}))
    geometry = _build_section(GeometryParams, "geometry", tree.get("geometry", {}))
    run = tree.get("run", {})
    analysis = dict(_ANALYSIS_DEFAULTS)
    analysis.update(tree.get("analysis", {}))
    predict = dict(_PREDICT_DEFAULTS)
    predict.update(tree.get("predict", {}))
    sweep_cfg = tree.get("sweep", {})
    if sweep_cfg and not isinstance(sweep_cfg, dict):
        raise ConfigError("config section 'sweep' must be a mapping")
    return RunConfig(
        emitter=emitter,
        demux=demux,
        waveform=waveform,
        geometry=geometry,
        mode=run.get("mode", "demux"),
        n_pulses=run.get("n_pulses", 1_000_000),
        seed=run.get("seed", 42),
        output_dir=run.get("output_dir", "out"),
        tag_format=run.get("tag_format", "csv"),
        threads=run.get("threads", 0),
        analysis=analysis,
        predict=predict,
        sweep=sweep_cfg,
    )


def load_config(path=None, preset=None, overrides=()) -> RunConfig:
    """Load and validate a run configuration.

    Precedence: preset < config file < dotted overrides.
    """
    tree = {}
    if preset is not None:
        tree = preset_tree(preset)
    if path is not None:
        try:
            with open(path) as f:
                raw = json.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top-level config must be a JSON object")
        for key, value in _normalize(raw).items():
            if isinstance(value, dict) and isinstance(tree.get(key), dict):
                tree[key].update(value)
            else:
                tree[key] = value
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, text = item.partition("=")
        _merge_dotted(tree, key.strip(), _parse_override(text.strip()))
    return build_config(tree)


def _parse_override(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


# ---------------------------------------------------------------------------
# presets

PAPER_CHAIN = (0.73, 0.14, 8)  # published first/last channel efficiencies


def paper_demux_tree() -> dict:
    """The eight-output demultiplexer run: 160 MHz input, 8 MHz switch cycle,
    routing parameters realized from the fitted efficiency chain."""
    chain = fit_chain(*PAPER_CHAIN)
    dp = demux_from_chain(chain, n_outputs=8, loop_delay_ns=6.25)
    return {
        "emitter": {"rep_rate_hz": 160e6, "p_det": 0.214, "g2_target": 0.0157,
                    "indist": 0.9535, "lifetime_ps": 207.4},
        "demux": _dataclass_dict(dp),
        "waveform": {"period_ns": 125.0, "on_duration_ns": 25.0, "rise_ns": 5.0,
                     "fall_ns": 5.0, "p_sw_max": 0.95, "phase_ns": 43.75},
        "run": {"mode": "demux", "n_pulses": 1_000_000, "seed": 42},
    }


def paper_source_tree() -> dict:
    """Source characterization at 80 MHz: emits both correlation benches."""
    return {
        "emitter": {"rep_rate_hz": 80e6, "p_det": 0.214, "g2_target": 0.0157,
                    "indist": 0.9535, "lifetime_ps": 207.4},
        "run": {"mode": "source", "n_pulses": 1_000_000, "seed": 42},
    }


def ideal_demux_tree() -> dict:
    """Lossless demultiplexer with a rectangular switch window covering
    exactly the release bin; every loaded photon exits its mapped output."""
    return {
        "emitter": {"rep_rate_hz": 160e6, "p_det": 0.214, "g2_target": 0.0,
                    "indist": 1.0, "lifetime_ps": 207.4},
        "demux": {"n_outputs": 8, "loop_delay_ns": 6.25, "pbs_leak": 0.0,
                  "loop_transmission": 1.0, "fixed_transmission": 1.0,
                  "detector_eff": 1.0},
        "waveform": {"period_ns": 125.0, "on_duration_ns": 6.249, "rise_ns": 0.0,
                     "fall_ns": 0.0, "p_sw_max": 1.0, "phase_ns": 43.75},
        "run": {"mode": "demux", "n_pulses": 100_000, "seed": 42},
    }


_PRESETS = {
    "paper-demux": paper_demux_tree,
    "paper-source": paper_source_tree,
    "ideal-demux": ideal_demux_tree,
}


def preset_tree(name: str) -> dict:
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(_PRESETS)}")
    return _PRESETS[name]()
