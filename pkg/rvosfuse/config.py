""" Module containing the configuration classes of the pipeline """
from pathlib import Path
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from qcodes.validators import Ints

from .config_types import (
    Choice, ConfigField, Count, Flag, Fraction, Levels, PathField, Seed,
    Threshold
)
from .errors import ConfigError

class ConfigBase:
    """
    Base class for configuration sections. Fields are declared as
    `ConfigField` class attributes and validated on every assignment.
    """
    section = None

    def __init__(self, **kwargs):
        """
        Constructor method for configuration sections

        Args:
            **kwargs: Field values overriding the defaults

        Raises:
            ConfigError: For unknown fields or invalid values
        """
        self.update(kwargs)

    @classmethod
    def fields(cls) -> dict[str, ConfigField]:
        """All declared fields by name, in declaration order"""
        fields = {}
        for klass in reversed(cls.__mro__):
            for name, attr in vars(klass).items():
                if isinstance(attr, ConfigField):
                    fields[name] = attr
        return fields

    def update(self, values: dict) -> None:
        """Validates and assigns several fields at once"""
        fields = self.fields()
        for name, value in values.items():
            if name not in fields:
                section = f"[{self.section}] " if self.section else ""
                raise ConfigError(
                    f"Unknown config key {section}'{name}'. Valid keys: "
                    f"{', '.join(fields)}")
            setattr(self, name, value)

    def to_dict(self) -> dict:
        """Field name -> current value"""
        return {name: getattr(self, name) for name in self.fields()}

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        values = ', '.join(f"{k}={v!r}" for k, v in self.to_dict().items())
        return f"{type(self).__name__}({values})"


class FusionConfig(ConfigBase):
    """Thresholds of the two-stage IoU fusion"""
    section = 'fusion'
    alpha = Fraction(0.1, "Frames below alpha x median area are noise")
    tau_f = Threshold(0.5, "Frame-level IoU threshold")
    tau_v = Threshold(0.3, "Video-level IoU threshold")
    instance_level = Flag(True, "Run instance-level retrieval after frames")


class SamplingConfig(ConfigBase):
    """Frame sampling for clip construction"""
    section = 'sampling'
    mode = Choice(('global', 'local'), 'global', "Sampling scheme")
    num_frames = Count(5, "Number of sampled frames")


class PromptConfig(ConfigBase):
    """Point prompt counts"""
    section = 'prompts'
    num_positive = Count(10, "Positive points per mask")
    num_negative = Count(5, "Negative points per mask")


class KernelConfig(ConfigBase):
    """Dimensions and switches of the query/retrieval kernels"""
    section = 'kernel'
    num_queries = Count(5, "Number of queries N")
    dim = Count(32, "Model width C")
    ff_multiplier = Count(4, "Feed forward width as a multiple of C")
    num_self_layers = Count(
        2, "Self-attention layers per block", validator = Ints(min_value = 0))
    heads = Count(1, "Attention heads, must divide C")
    levels = Levels(description = "(h, w, c) per feature level")
    use_trajectory = Flag(True, "Inject trajectory descriptors")
    use_instances = Flag(True, "Initialise the query from instances")
    score_threshold = Threshold(0.5, "Binary retrieval threshold")
    score_mode = Choice(('binary', 'softmax'), 'binary', "Retrieval reading")

    @property
    def ff_dim(self) -> int:
        """Feed forward width C_ff"""
        return self.ff_multiplier*self.dim

    def extra_checks(self) -> None:
        """Cross-field constraints"""
        if self.dim % self.heads:
            raise ConfigError(
                f"{self.heads} heads do not divide model width {self.dim}")


class PipelineConfig(ConfigBase):
    """
    Complete configuration of a pipeline run: paths, seed, worker count and
    the per-stage sections
    """
    predictions = PathField(description = "Prediction mask file or directory")
    candidates = PathField(description = "Candidate mask/tensor file or dir")
    gt = PathField(description = "Ground-truth mask file or directory")
    out = PathField(description = "Output directory (file for eval)")
    features = PathField(description = "Precomputed feature tensor file")
    language = PathField(description = "Language feature tensor file")
    weights = PathField(description = "Kernel weight tensor file")
    seed = Seed(0, "Seed of every random generator")
    jobs = Count(1, "Parallel workers")

    SECTIONS = {
        'fusion': FusionConfig,
        'sampling': SamplingConfig,
        'prompts': PromptConfig,
        'kernel': KernelConfig,
    }

    def __init__(self, **kwargs):
        self.fusion = FusionConfig()
        self.sampling = SamplingConfig()
        self.prompts = PromptConfig()
        self.kernel = KernelConfig()
        super().__init__(**kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        """
        Builds a config from a nested dict (TOML layout): top-level fields
        plus [fusion], [sampling], [prompts] and [kernel] tables
        """
        config = cls()
        top_level = {}
        for key, value in data.items():
            if key in cls.SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"[{key}] must be a table")
                getattr(config, key).update(value)
            else:
                top_level[key] = value
        config.update(top_level)
        config.kernel.extra_checks()
        return config

    @classmethod
    def from_toml(cls, path) -> "PipelineConfig":
        """
        Reads a TOML config file

        Raises:
            ConfigError: If the file is missing, unparsable or invalid
        """
        path = Path(path)
        try:
            with open(path, 'rb') as file:
                data = tomllib.load(file)
        except FileNotFoundError as exc:
            raise ConfigError(f"Config file {path} not found") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"Config file {path} is not valid TOML: {exc}") \
                from exc
        logging.info("Loaded config from %s", path)
        return cls.from_dict(data)

    def update_from_args(self, args) -> None:
        """
        Overrides fields with command line values that were given

        Args:
            args (argparse.Namespace | dict): Parsed flags. Keys named like
                a top-level field or '<section>.<field>' are applied when
                their value is not None
        """
        values = args if isinstance(args, dict) else vars(args)
        for key, value in values.items():
            if value is None:
                continue
            if '.' in key:
                section, name = key.split('.', 1)
                getattr(self, section).update({name: value})
            elif key in self.fields():
                setattr(self, key, value)
        self.kernel.extra_checks()

    def require(self, *names: str) -> None:
        """Raises ConfigError if any of the named paths is unset"""
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            flags = ', '.join(f"--{name}" for name in missing)
            raise ConfigError(f"Missing required setting(s): {flags}")

    def to_dict(self) -> dict:
        """Nested dict in TOML layout"""
        data = super().to_dict()
        for section in self.SECTIONS:
            data[section] = getattr(self, section).to_dict()
        return data
