""" Module containing ConfigField classes """
from qcodes.validators import Bool, Enum, Ints, Numbers, Strings

from .errors import ConfigError

class ConfigField:
    """
    A typed configuration entry. Subclasses set the validator, unit and
    default the way each kind of value is checked.
    """
    validator = None
    unit = ''
    default = None

    def __init__(self, default = None, description: str = '', **kwargs):
        """
        Constructor method for ConfigField

        Args:
            default: Default value. Falls back to the class default
            description (str): Human readable description
            **kwargs: Overrides for class attributes (e.g. validator)
        """
        if default is not None:
            self.default = default
        self.description = description
        self.name = None
        for key, value in kwargs.items():
            setattr(self, key, value)

    def __set_name__(self, owner, name: str) -> None:
        self.name = name

    def __get__(self, instance, owner = None):
        if instance is None:
            return self
        return instance.__dict__.get(self.name, self.default)

    def __set__(self, instance, value) -> None:
        """Every assignment is converted and validated"""
        instance.__dict__[self.name] = self.validate(value, self.name)

    def convert(self, value):
        """Converts a raw (TOML/CLI) value before validation"""
        return value

    def validate(self, value, name: str = ''):
        """
        Converts and validates a value

        Args:
            value: Raw value
            name (str): Field name used in error messages

        Returns:
            The converted value

        Raises:
            ConfigError: If the value is rejected by the validator
        """
        try:
            value = self.convert(value)
            if self.validator is not None:
                self.validator.validate(value, f"config field '{name}'")
            self.extra_checks(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"Invalid value {value!r} for '{name}': {exc}") \
                from exc
        return value

    def extra_checks(self, value) -> None:
        """Additional constraints the validator cannot express"""
        return


class Fraction(ConfigField):
    """Fraction in [0, 1) such as the noise area fraction"""
    unit = 'fraction'
    validator = Numbers(min_value = 0, max_value = 1)
    """ Default: Numbers(0, 1) """
    default = 0.1

    def convert(self, value):
        return float(value)

    def extra_checks(self, value) -> None:
        if value >= 1:
            raise ValueError("must be smaller than 1")


class Threshold(ConfigField):
    """IoU or score threshold in (0, 1]"""
    unit = 'ratio'
    validator = Numbers(min_value = 0, max_value = 1)
    """ Default: Numbers(0, 1) """
    default = 0.5

    def convert(self, value):
        return float(value)

    def extra_checks(self, value) -> None:
        if value <= 0:
            raise ValueError("must be larger than 0")


class Count(ConfigField):
    """Positive integer such as a dimension or a number of frames"""
    unit = '#'
    validator = Ints(min_value = 1)
    """ Default: Ints(min_value = 1) """
    default = 1

    def convert(self, value):
        if isinstance(value, bool):
            raise TypeError(f"{value!r} is not an integer")
        if isinstance(value, str):
            value = int(value)
        if int(value) != value:
            raise TypeError(f"{value!r} is not an integer")
        return int(value)


class Seed(Count):
    """Seed of a random generator, any non-negative integer"""
    unit = 'seed'
    validator = Ints(min_value = 0)
    default = 0


class PathField(ConfigField):
    """File or directory path, None while unset"""
    unit = 'path'
    validator = Strings(min_length = 1)

    def convert(self, value):
        return value if value is None else str(value)

    def validate(self, value, name: str = ''):
        if value is None:
            return None
        return super().validate(value, name)


class Choice(ConfigField):
    """One of a fixed set of strings"""
    unit = 'choice'

    def __init__(self, choices: tuple, default = None, description: str = ''):
        super().__init__(default, description, validator = Enum(*choices))
        self.choices = tuple(choices)


class Flag(ConfigField):
    """Boolean switch"""
    unit = 'bool'
    validator = Bool()
    default = True


class Levels(ConfigField):
    """List of (h, w, c) feature level dimensions"""
    unit = 'levels'
    default = ((8, 8, 16),)

    def convert(self, value):
        levels = tuple(tuple(int(v) for v in level) for level in value)
        return levels

    def extra_checks(self, value) -> None:
        if not value:
            raise ValueError("at least one level is required")
        for level in value:
            if len(level) != 3 or min(level) < 1:
                raise ValueError(
                    f"level {level} must be three positive integers")
