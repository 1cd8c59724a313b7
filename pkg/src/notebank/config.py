"""Plain-text run configuration: key = value under per-module sections.

The same canonical rendering is echoed into checkpoints and reports so
every artifact records the configuration that produced it. Unknown
sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .audio import FrameGeometry
from .errors import ConfigError
from .filterbank import FilterbankSpec
from .models import ModelSpec
from .synth import SynthSpec
from .training import TrainConfig

_SCHEMA: dict[str, tuple[str, ...]] = {
    "model": ("family", "hidden3", "l2_filters", "l2_height", "l2_stride", "l3_stride", "l3_pool"),
    "filterbank": ("kind", "windowed", "n_filters", "f_min", "f_max", "compress", "eps", "learned"),
    "geometry": ("frame_len", "receptive_field", "stride"),
    "train": (
        "batch_size", "momentum", "learning_rate", "lr_decay", "epoch_steps",
        "avg_decay", "steps", "seed", "loss", "checkpoint_every", "log_every",
    ),
    "augment": ("pitch_shift",),
    "data": ("split", "train_ids", "test_ids", "sampling_stride"),
    "synth": (
        "n_recordings", "n_test", "duration_lo", "duration_hi",
        "chord_min", "chord_max", "midi_lo", "midi_hi",
        "chord_dur_lo", "chord_dur_hi", "n_partials", "partial_decay",
        "amp_jitter", "gap_probability", "seed",
    ),
    "paths": ("data_dir", "labels_dir", "checkpoint_dir", "report_path"),
}


@dataclass
class RunConfig:
    model: ModelSpec
    train: TrainConfig
    geometry: FrameGeometry
    synth: SynthSpec
    synth_seed: int = 0
    split_path: str | None = None
    train_ids: tuple[str, ...] | None = None
    test_ids: tuple[str, ...] | None = None
    sampling_stride: int = 512
    data_dir: str | None = None
    labels_dir: str | None = None
    checkpoint_dir: str | None = None
    report_path: str | None = None


def _read_ini(text: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"bad config syntax: {exc}") from exc
    return parser


def _validate_keys(parser: configparser.ConfigParser) -> None:
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")


class _Scope:
    """Typed access to one section with defaults."""

    def __init__(self, parser, section):
        self.section = section
        self.opts = dict(parser[section]) if parser.has_section(section) else {}

    def get(self, key, default=None):
        return self.opts.get(key, default)

    def _convert(self, key, default, conv):
        raw = self.opts.get(key)
        if raw is None:
            return default
        try:
            return conv(raw)
        except ValueError as exc:
            raise ConfigError(f"[{self.section}] {key} = {raw!r}: {exc}") from exc

    def int(self, key, default):
        return self._convert(key, default, int)

    def float(self, key, default):
        return self._convert(key, default, float)

    def str(self, key, default):
        return self._convert(key, default, str)

    def bool(self, key, default):
        def conv(raw):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")

        return self._convert(key, default, conv)


def parse_config_text(text: str, overrides: dict[tuple[str, str], str] | None = None) -> RunConfig:
    parser = _read_ini(text)
    if overrides:
        for (section, key), value in overrides.items():
            if section not in _SCHEMA or key not in _SCHEMA[section]:
                raise ConfigError(f"unknown override [{section}] {key}")
            if not parser.has_section(section):
                parser.add_section(section)
            parser[section][key] = value
    _validate_keys(parser)

    geo = _Scope(parser, "geometry")
    geometry_args = dict(
        frame_len=geo.int("frame_len", 16384),
        receptive_field=geo.int("receptive_field", 4096),
        stride=geo.int("stride", 512),
    )
    fb = _Scope(parser, "filterbank")
    fb_args = dict(
        kind=fb.str("kind", "log_spaced"),
        windowed=fb.bool("windowed", True),
        n_filters=fb.int("n_filters", 512),
        f_min=fb.float("f_min", 50.0),
        f_max=fb.float("f_max", 6000.0),
        receptive_field=geometry_args["receptive_field"],
        compress=fb.bool("compress", True),
        eps=fb.float("eps", 1e-11),
    )
    mdl = _Scope(parser, "model")
    trn = _Scope(parser, "train")
    aug = _Scope(parser, "augment")
    syn = _Scope(parser, "synth")
    dat = _Scope(parser, "data")
    pth = _Scope(parser, "paths")

    try:
        geometry = FrameGeometry(**geometry_args)
        frontend = FilterbankSpec(**fb_args)
        model = ModelSpec(
            family=mdl.str("family", "translation_invariant"),
            frontend=frontend,
            learned_frontend=fb.bool("learned", False),
            hidden3=mdl.int("hidden3", 256),
            l2_filters=mdl.int("l2_filters", 128),
            l2_height=mdl.int("l2_height", 128),
            l2_stride=mdl.int("l2_stride", 1),
            l3_stride=mdl.int("l3_stride", 1),
            l3_pool=mdl.str("l3_pool", "mean"),
        )
        train = TrainConfig(
            batch_size=trn.int("batch_size", 150),
            momentum=trn.float("momentum", 0.95),
            learning_rate=trn.float("learning_rate", 0.01),
            lr_decay=trn.float("lr_decay", 1.0),
            epoch_steps=trn.int("epoch_steps", 1000),
            avg_decay=trn.float("avg_decay", 2e-4),
            steps=trn.int("steps", 1000),
            seed=trn.int("seed", 1),
            augment_pitch_shift=aug.bool("pitch_shift", False),
            loss=trn.str("loss", "mse"),
            checkpoint_every=trn.int("checkpoint_every", 1000),
            log_every=trn.int("log_every", 100),
        )
        synth = SynthSpec(
            n_recordings=syn.int("n_recordings", 36),
            n_test=syn.int("n_test", 6),
            duration_range=(syn.float("duration_lo", 6.0), syn.float("duration_hi", 10.0)),
            chord_size_range=(syn.int("chord_min", 1), syn.int("chord_max", 3)),
            midi_range=(syn.int("midi_lo", 40), syn.int("midi_hi", 90)),
            chord_duration_range=(syn.float("chord_dur_lo", 0.4), syn.float("chord_dur_hi", 1.2)),
            n_partials=syn.int("n_partials", 5),
            partial_decay=syn.float("partial_decay", 0.5),
            amp_jitter=syn.float("amp_jitter", 0.5),
            gap_probability=syn.float("gap_probability", 0.1),
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    train_ids = dat.str("train_ids", None)
    test_ids = dat.str("test_ids", None)
    return RunConfig(
        model=model,
        train=train,
        geometry=geometry,
        synth=synth,
        synth_seed=syn.int("seed", 0),
        split_path=dat.str("split", None),
        train_ids=tuple(train_ids.split()) if train_ids else None,
        test_ids=tuple(test_ids.split()) if test_ids else None,
        sampling_stride=dat.int("sampling_stride", 512),
        data_dir=pth.str("data_dir", None),
        labels_dir=pth.str("labels_dir", None),
        checkpoint_dir=pth.str("checkpoint_dir", None),
        report_path=pth.str("report_path", None),
    )


def load_config(path, overrides: dict[tuple[str, str], str] | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return parse_config_text(text, overrides)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def canonical_text(cfg: RunConfig) -> str:
    """Deterministic rendering of the effective configuration."""
    m, t, g, s = cfg.model, cfg.train, cfg.geometry, cfg.synth
    f = m.frontend
    sections: list[tuple[str, list[tuple[str, object]]]] = [
        ("model", [
            ("family", m.family), ("hidden3", m.hidden3),
            ("l2_filters", m.l2_filters), ("l2_height", m.l2_height),
            ("l2_stride", m.l2_stride), ("l3_stride", m.l3_stride),
            ("l3_pool", m.l3_pool),
        ]),
        ("filterbank", [
            ("kind", f.kind), ("windowed", f.windowed), ("n_filters", f.n_filters),
            ("f_min", f.f_min), ("f_max", f.f_max), ("compress", f.compress),
            ("eps", f.eps), ("learned", m.learned_frontend),
        ]),
        ("geometry", [
            ("frame_len", g.frame_len), ("receptive_field", g.receptive_field),
            ("stride", g.stride),
        ]),
        ("train", [
            ("batch_size", t.batch_size), ("momentum", t.momentum),
            ("learning_rate", t.learning_rate), ("lr_decay", t.lr_decay),
            ("epoch_steps", t.epoch_steps), ("avg_decay", t.avg_decay),
            ("steps", t.steps), ("seed", t.seed), ("loss", t.loss),
            ("checkpoint_every", t.checkpoint_every), ("log_every", t.log_every),
        ]),
        ("augment", [("pitch_shift", t.augment_pitch_shift)]),
        ("data", [
            kv for kv in (
                ("split", cfg.split_path),
                ("train_ids", " ".join(cfg.train_ids) if cfg.train_ids else None),
                ("test_ids", " ".join(cfg.test_ids) if cfg.test_ids else None),
                ("sampling_stride", cfg.sampling_stride),
            ) if kv[1] is not None
        ]),
        ("synth", [
            ("n_recordings", s.n_recordings), ("n_test", s.n_test),
            ("duration_lo", s.duration_range[0]), ("duration_hi", s.duration_range[1]),
            ("chord_min", s.chord_size_range[0]), ("chord_max", s.chord_size_range[1]),
            ("midi_lo", s.midi_range[0]), ("midi_hi", s.midi_range[1]),
            ("chord_dur_lo", s.chord_duration_range[0]),
            ("chord_dur_hi", s.chord_duration_range[1]),
            ("n_partials", s.n_partials), ("partial_decay", s.partial_decay),
            ("amp_jitter", s.amp_jitter), ("gap_probability", s.gap_probability),
            ("seed", cfg.synth_seed),
        ]),
        ("paths", [
            kv for kv in (
                ("data_dir", cfg.data_dir), ("labels_dir", cfg.labels_dir),
                ("checkpoint_dir", cfg.checkpoint_dir), ("report_path", cfg.report_path),
            ) if kv[1] is not None
        ]),
    ]
    lines: list[str] = []
    for name, pairs in sections:
        if not pairs:
            continue
        lines.append(f"[{name}]")
        for key, value in pairs:
            lines.append(f"{key} = {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)
